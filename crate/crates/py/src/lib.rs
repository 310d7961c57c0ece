//! Python bindings. Matrices cross the boundary as lists of rows.

use std::collections::HashMap;

use leontief_core::simulate::Numeraire;
use leontief_core::{
    build_coefficients, economies, leontief_inverse, load_iotable, ols, output_multipliers, predict_growth,
    predict_returns, run, CoefficientSystem, DMatrix, DVector, EconomyState, Industry, LoadOptions, ShockSchedule,
};
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

fn err(e: leontief_core::Error) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn matrix(rows: &[Vec<f64>]) -> PyResult<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != m) {
        return Err(PyValueError::new_err("rows must have equal length"));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

/// Input coefficients, labor shares and GDP shares of one economy.
#[pyclass(name = "Economy", frozen)]
struct PyEconomy {
    inner: CoefficientSystem,
}

#[pymethods]
impl PyEconomy {
    /// Economy from coefficient rows `a[i][j]` (spending of `j` on `i`) and GDP shares.
    #[new]
    #[pyo3(signature = (a, gdp_share, names=None))]
    fn new(a: Vec<Vec<f64>>, gdp_share: Vec<f64>, names: Option<Vec<String>>) -> PyResult<Self> {
        let a = matrix(&a)?;
        let industries = match names {
            Some(n) => n.iter().map(|s| Industry::parse(s)).collect(),
            None => economies::names(a.nrows()),
        };
        let inner = CoefficientSystem::from_shares(industries, a, DVector::from_vec(gdp_share), 1.0).map_err(err)?;
        Ok(Self { inner })
    }

    #[staticmethod]
    fn from_table(path: &str) -> PyResult<Self> {
        let table = load_iotable(path, &LoadOptions::default()).map_err(err)?;
        Ok(Self { inner: build_coefficients(&table).map_err(err)? })
    }

    #[staticmethod]
    #[pyo3(signature = (labor_share_a=0.4))]
    fn chain(labor_share_a: f64) -> Self {
        Self { inner: economies::chain(labor_share_a) }
    }

    #[getter]
    fn industries(&self) -> Vec<String> {
        self.inner.industries().iter().map(Industry::label).collect()
    }

    #[getter]
    fn a(&self) -> Vec<Vec<f64>> {
        rows(self.inner.a())
    }

    #[getter]
    fn labor_share(&self) -> Vec<f64> {
        self.inner.labor_share().iter().copied().collect()
    }

    #[getter]
    fn gdp_share(&self) -> Vec<f64> {
        self.inner.gdp_share().iter().copied().collect()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn multipliers(&self) -> PyResult<Vec<f64>> {
        Ok(output_multipliers(&self.inner).map_err(err)?.iter().copied().collect())
    }

    fn l_bar(&self) -> PyResult<f64> {
        let l = output_multipliers(&self.inner).map_err(err)?;
        Ok(self.inner.gdp_share().dot(&l))
    }

    fn leontief_inverse(&self) -> PyResult<Vec<Vec<f64>>> {
        Ok(rows(leontief_inverse(&self.inner).map_err(err)?.h()))
    }

    fn predict_returns(&self, gamma: Vec<f64>) -> PyResult<Vec<f64>> {
        let h = leontief_inverse(&self.inner).map_err(err)?;
        Ok(predict_returns(&h, &DVector::from_vec(gamma)).map_err(err)?.iter().copied().collect())
    }

    /// `g`, `gamma_tilde`, `l_bar`, `via_leontief` and `via_domar`.
    fn predict_growth(&self, gamma: Vec<f64>) -> PyResult<HashMap<String, f64>> {
        let g = predict_growth(&self.inner, &DVector::from_vec(gamma)).map_err(err)?;
        Ok(HashMap::from([
            ("g".into(), g.g),
            ("gamma_tilde".into(), g.gamma_tilde),
            ("l_bar".into(), g.l_bar),
            ("via_leontief".into(), g.via_leontief),
            ("via_domar".into(), g.via_domar),
        ]))
    }

    /// Integrates with one rate per industry and returns `(t, series, value)` rows.
    #[pyo3(signature = (gamma, years, dt=1.0/64.0, gdp_numeraire=false))]
    fn simulate(&self, gamma: Vec<f64>, years: f64, dt: f64, gdp_numeraire: bool) -> PyResult<Vec<(f64, String, f64)>> {
        let numeraire = if gdp_numeraire { Numeraire::Gdp } else { Numeraire::Wage };
        let state = EconomyState::from_coefficients(&self.inner, numeraire).map_err(err)?;
        let schedule = ShockSchedule::per_industry(&DVector::from_vec(gamma)).map_err(err)?;
        Ok(run(&state, &schedule, years, dt).map_err(err)?.tidy_rows())
    }
}

/// Simple regression of `y` on `x`: `(slope, intercept, r_squared, p_value_slope)`.
#[pyfunction]
fn regress(x: Vec<f64>, y: Vec<f64>) -> PyResult<(f64, f64, f64, f64)> {
    let fit = ols(&x, &y, None).map_err(err)?;
    Ok((fit.slope, fit.intercept, fit.r_squared, fit.p_value_slope))
}

#[pymodule]
fn leontief_lab(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyEconomy>()?;
    m.add_function(wrap_pyfunction!(regress, m)?)?;
    Ok(())
}
