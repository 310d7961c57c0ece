//! Input coefficients, labor shares, GDP shares and gross-output shares, and
//! the physical-coefficient view related to them by a price similarity.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::iotable::{gross_output, IOTable, Industry};

/// Absolute tolerance of the column-stochasticity check.
pub const STOCHASTIC_TOL: f64 = 1e-12;

/// Column-stochastic description of an economy: for every buyer `j`,
/// `sum_i a_ij + labor_share_j = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientSystem {
    industries: Vec<Industry>,
    a: DMatrix<f64>,
    labor_share: DVector<f64>,
    gdp_share: DVector<f64>,
    output_share: DVector<f64>,
    gross_output: DVector<f64>,
    gdp: f64,
    gross_output_total: f64,
    balanced: bool,
}

impl CoefficientSystem {
    /// Assembles a system from its parts, checking dimensions, ranges and
    /// column stochasticity. `gross_output` is the per-industry `M`.
    pub fn from_parts(
        industries: Vec<Industry>,
        a: DMatrix<f64>,
        labor_share: DVector<f64>,
        gdp_share: DVector<f64>,
        gross_output: DVector<f64>,
        gdp: f64,
        balanced: bool,
    ) -> Result<Self> {
        let n = industries.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.nrows().max(a.ncols()) });
        }
        for v in [&labor_share, &gdp_share, &gross_output] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        if a.iter().chain(labor_share.iter()).any(|&x| !(0.0..=1.0 + STOCHASTIC_TOL).contains(&x)) {
            return Err(Error::Domain("coefficients must lie in [0, 1]".into()));
        }
        for j in 0..n {
            let total = a.column(j).sum() + labor_share[j];
            if (total - 1.0).abs() > STOCHASTIC_TOL {
                return Err(Error::Domain(format!(
                    "column {} of (A, labor share) sums to {total}, not 1",
                    industries[j]
                )));
            }
        }
        if !(gdp > 0.0) || gross_output.iter().any(|&m| !(m >= 0.0)) {
            return Err(Error::Domain("GDP must be positive and gross outputs nonnegative".into()));
        }
        let gross_output_total = gross_output.sum();
        let output_share = &gross_output / gross_output_total;
        Ok(Self {
            industries,
            a,
            labor_share,
            gdp_share,
            output_share,
            gross_output,
            gdp,
            gross_output_total,
            balanced,
        })
    }

    /// Closed, balanced economy from input coefficients and final-demand
    /// shares. Labor shares absorb the rest of each column and gross output
    /// follows from `M = (I - A)^-1 theta * gdp`.
    pub fn from_shares(industries: Vec<Industry>, a: DMatrix<f64>, gdp_share: DVector<f64>, gdp: f64) -> Result<Self> {
        let n = industries.len();
        if a.nrows() != n || a.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.nrows() });
        }
        let labor_share = DVector::from_fn(n, |j, _| {
            let rest = 1.0 - a.column(j).sum();
            if rest < 0.0 && rest > -STOCHASTIC_TOL {
                0.0
            } else {
                rest
            }
        });
        if labor_share.iter().any(|&l| l < 0.0) {
            return Err(Error::Domain("input coefficients of a column exceed 1".into()));
        }
        if (gdp_share.sum() - 1.0).abs() > STOCHASTIC_TOL || gdp_share.iter().any(|&t| t < 0.0) {
            return Err(Error::Domain("GDP shares must be nonnegative and sum to 1".into()));
        }
        let provisional = Self::from_parts(
            industries.clone(),
            a.clone(),
            labor_share.clone(),
            gdp_share.clone(),
            DVector::from_element(n, 1.0),
            gdp,
            true,
        )?;
        let m = crate::linops::solve_leontief(&provisional, &(&gdp_share * gdp), false)?;
        let m = m.map(|x| x.max(0.0));
        Self::from_parts(industries, a, labor_share, gdp_share, m, gdp, true)
    }

    pub fn industries(&self) -> &[Industry] {
        &self.industries
    }

    pub fn len(&self) -> usize {
        self.industries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.industries.is_empty()
    }

    /// Input coefficients: `a_ij` is the share of buyer `j`'s expenditure paid to seller `i`.
    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn labor_share(&self) -> &DVector<f64> {
        &self.labor_share
    }

    /// Final-demand shares `theta_i = Y_i / Y`.
    pub fn gdp_share(&self) -> &DVector<f64> {
        &self.gdp_share
    }

    /// Gross-output shares `eta_i = M_i / O`.
    pub fn output_share(&self) -> &DVector<f64> {
        &self.output_share
    }

    pub fn gross_output(&self) -> &DVector<f64> {
        &self.gross_output
    }

    pub fn gdp(&self) -> f64 {
        self.gdp
    }

    pub fn gross_output_total(&self) -> f64 {
        self.gross_output_total
    }

    /// Built from a balanced table; growth identities are asserted only then.
    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    /// Indices of the industries belonging to `country`.
    pub fn country_indices(&self, country: &str) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.industries[i].country == country).collect()
    }

    /// Distinct countries in order of first appearance.
    pub fn countries(&self) -> Vec<String> {
        let mut out = Vec::<String>::new();
        for ind in &self.industries {
            if !out.contains(&ind.country) {
                out.push(ind.country.clone());
            }
        }
        out
    }

    /// GDP weights restricted to `country` and renormalized; zero elsewhere.
    pub fn country_gdp_share(&self, country: &str) -> Result<DVector<f64>> {
        let idx = self.country_indices(country);
        let total: f64 = idx.iter().map(|&i| self.gdp_share[i]).sum();
        if idx.is_empty() || total <= 0.0 {
            return Err(Error::Domain(format!("country `{country}` has no final demand")));
        }
        let mut out = DVector::zeros(self.len());
        for i in idx {
            out[i] = self.gdp_share[i] / total;
        }
        Ok(out)
    }
}

/// Normalizes each column of the flow table by the buyer's gross output.
pub fn build_coefficients(table: &IOTable) -> Result<CoefficientSystem> {
    let n = table.len();
    let m = gross_output(table);
    for j in 0..n {
        if !(m[j] > 0.0) {
            return Err(Error::ZeroGrossOutput { industry: table.industries()[j].label() });
        }
    }
    let flows = table.intermediate_flows();
    let a = DMatrix::from_fn(n, n, |i, j| flows[(i, j)] / m[j]);
    let labor_share = DVector::from_fn(n, |j, _| table.labor_payments()[j] / m[j]);
    let y = table.final_demand().sum();
    if !(y > 0.0) {
        return Err(Error::Validation("table has no final demand".into()));
    }
    let gdp_share = table.final_demand() / y;
    CoefficientSystem::from_parts(table.industries().to_vec(), a, labor_share, gdp_share, m, y, table.is_strict())
}

/// Physical coefficients anchored to a price vector and wage.
#[derive(Debug, Clone, PartialEq)]
pub struct PhysicalSystem {
    /// `phi_ij`: units of good `j` per unit of industry `i`'s output.
    pub phi: DMatrix<f64>,
    /// `ell_i`: labor per unit of output.
    pub labor_coeff: DVector<f64>,
    /// `c_i`: household consumption of good `i` per unit of labor.
    pub consumption_per_labor: DVector<f64>,
    pub prices: DVector<f64>,
    pub wage: f64,
}

impl PhysicalSystem {
    /// `||p - Phi p - ell w||_inf / ||p||_inf`.
    pub fn price_residual(&self) -> f64 {
        let resid = &self.prices - &self.phi * &self.prices - &self.labor_coeff * self.wage;
        resid.amax() / self.prices.amax()
    }

    /// `|w - c . p| / w`.
    pub fn wage_residual(&self) -> f64 {
        (self.wage - self.consumption_per_labor.dot(&self.prices)).abs() / self.wage
    }

    /// Expenditure-share view: `(A, labor share, household expenditure shares)`
    /// with `a_ji = phi_ij p_j / p_i`, `labor_i = w ell_i / p_i`,
    /// `theta_i = p_i c_i / w`.
    pub fn expenditure_shares(&self) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
        let n = self.prices.len();
        let p = &self.prices;
        let a = DMatrix::from_fn(n, n, |j, i| self.phi[(i, j)] * p[j] / p[i]);
        let labor = DVector::from_fn(n, |i, _| self.wage * self.labor_coeff[i] / p[i]);
        let theta = DVector::from_fn(n, |i, _| p[i] * self.consumption_per_labor[i] / self.wage);
        (a, labor, theta)
    }
}

/// `phi_ij = a_ji p_i / p_j`, `ell_i = labor_i p_i / w`, `c_i = theta_i w / p_i`.
pub fn to_physical(coeffs: &CoefficientSystem, prices: &DVector<f64>, wage: f64) -> Result<PhysicalSystem> {
    let n = coeffs.len();
    if prices.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: prices.len() });
    }
    if prices.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
        return Err(Error::Domain("prices must be strictly positive".into()));
    }
    if !(wage > 0.0) || !wage.is_finite() {
        return Err(Error::Domain("wage must be strictly positive".into()));
    }
    let a = coeffs.a();
    let phi = DMatrix::from_fn(n, n, |i, j| a[(j, i)] * prices[i] / prices[j]);
    let labor_coeff = DVector::from_fn(n, |i, _| coeffs.labor_share()[i] * prices[i] / wage);
    let consumption_per_labor = DVector::from_fn(n, |i, _| coeffs.gdp_share()[i] * wage / prices[i]);
    Ok(PhysicalSystem { phi, labor_coeff, consumption_per_labor, prices: prices.clone(), wage })
}
