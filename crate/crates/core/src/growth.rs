//! Predictions linking productivity improvement to prices and growth:
//! real price returns `r = -H^T gamma`, their covariance `H^T G H`, the
//! growth identity `g = gamma_tilde * L_bar`, Hulten's theorem, dual
//! productivity estimation and the direct/inherited return decomposition.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use rayon::prelude::*;

use crate::coefficients::CoefficientSystem;
use crate::error::{Error, Result};
use crate::iotable::Industry;
use crate::linops::{LeontiefInverse, LeontiefSolver};

/// Absolute tolerance (scaled by the size of the inputs) for model identities.
pub const GROWTH_TOL: f64 = 1e-10;

/// Industry improvement rates, one row per period.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductivitySeries {
    gamma: DMatrix<f64>,
}

impl ProductivitySeries {
    pub fn new(gamma: DMatrix<f64>) -> Result<Self> {
        if gamma.nrows() == 0 {
            return Err(Error::Validation("productivity series needs at least one period".into()));
        }
        if gamma.iter().any(|x| !x.is_finite()) {
            return Err(Error::Validation("productivity series has non-finite entries".into()));
        }
        Ok(Self { gamma })
    }

    pub fn gamma(&self) -> &DMatrix<f64> {
        &self.gamma
    }

    pub fn periods(&self) -> usize {
        self.gamma.nrows()
    }

    pub fn period(&self, t: usize) -> DVector<f64> {
        self.gamma.row(t).transpose()
    }

    /// Time average per industry.
    pub fn mean(&self) -> DVector<f64> {
        self.gamma.row_mean().transpose()
    }

    /// Covariance across periods with the unbiased `T - 1` divisor.
    pub fn covariance(&self, diagonal_only: bool) -> Result<ImprovementCovariance> {
        let t = self.periods();
        if t < 2 {
            return Err(Error::Validation("covariance needs at least two periods".into()));
        }
        let mean = self.gamma.row_mean();
        let mut centered = self.gamma.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        let denom = (t - 1) as f64;
        if diagonal_only {
            let n = centered.ncols();
            Ok(ImprovementCovariance::Diagonal(DVector::from_fn(n, |j, _| {
                centered.column(j).norm_squared() / denom
            })))
        } else {
            Ok(ImprovementCovariance::Full(centered.tr_mul(&centered) / denom))
        }
    }
}

/// Reads `country,industry,period,gamma` rows for the given industries.
/// Periods are ordered by their integer label; every industry must appear in
/// every period.
pub fn load_productivity(path: impl AsRef<Path>, industries: &[Industry]) -> Result<ProductivitySeries> {
    let file = std::fs::File::open(path.as_ref())?;
    read_productivity(file, industries)
}

pub fn read_productivity<R: std::io::Read>(reader: R, industries: &[Industry]) -> Result<ProductivitySeries> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    if header.iter().collect::<Vec<_>>() != ["country", "industry", "period", "gamma"] {
        return Err(Error::Parse { line: 1, message: "expected header `country,industry,period,gamma`".into() });
    }
    let index: HashMap<&Industry, usize> = industries.iter().enumerate().map(|(i, x)| (x, i)).collect();
    let mut by_period: BTreeMap<i64, Vec<Option<f64>>> = BTreeMap::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let perr = |message: String| Error::Parse { line, message };
        let ind = Industry::new(&record[0], &record[1]);
        let &i = index.get(&ind).ok_or_else(|| perr(format!("unknown industry {ind}")))?;
        let period: i64 = record[2].parse().map_err(|_| perr(format!("invalid period `{}`", &record[2])))?;
        let value: f64 = record[3].parse().map_err(|_| perr(format!("invalid gamma `{}`", &record[3])))?;
        if !value.is_finite() {
            return Err(perr("non-finite gamma".into()));
        }
        by_period.entry(period).or_insert_with(|| vec![None; industries.len()])[i] = Some(value);
    }
    let t = by_period.len();
    let mut gamma = DMatrix::zeros(t, industries.len());
    for (row, (period, values)) in by_period.into_iter().enumerate() {
        for (i, v) in values.into_iter().enumerate() {
            gamma[(row, i)] = v.ok_or_else(|| {
                Error::Validation(format!("industry {} has no gamma in period {period}", industries[i]))
            })?;
        }
    }
    ProductivitySeries::new(gamma)
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictionSet {
    pub returns_pred: DVector<f64>,
    pub growth_pred: f64,
    pub gamma_tilde: f64,
    pub direct_term: DVector<f64>,
    pub inherited_term: DVector<f64>,
}

impl PredictionSet {
    pub fn build(coeffs: &CoefficientSystem, h: &LeontiefInverse, gamma: &DVector<f64>) -> Result<Self> {
        let returns_pred = predict_returns(h, gamma)?;
        let growth = predict_growth(coeffs, gamma)?;
        let (direct_term, inherited_term) = decompose_returns(coeffs, &returns_pred, gamma)?;
        Ok(Self {
            returns_pred,
            growth_pred: growth.g,
            gamma_tilde: growth.gamma_tilde,
            direct_term,
            inherited_term,
        })
    }
}

fn check_len(expected: usize, v: &DVector<f64>) -> Result<()> {
    if v.len() == expected {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got: v.len() })
    }
}

/// Real price returns `r = -H^T gamma`.
pub fn predict_returns(h: &LeontiefInverse, gamma: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(h.len(), gamma)?;
    Ok(-h.h().tr_mul(gamma))
}

/// Expected return conditioned on the output multiplier: `-gamma_bar * L`.
pub fn expected_return_given_l(gamma_bar: f64, multipliers: &DVector<f64>) -> Result<DVector<f64>> {
    if !gamma_bar.is_finite() {
        return Err(Error::Domain("average improvement rate must be finite".into()));
    }
    Ok(multipliers * -gamma_bar)
}

/// Growth computed three ways. `g = gamma_tilde * L_bar` is the headline;
/// `via_leontief = theta H^T gamma` and `via_domar = sum_i D_i gamma_i` agree
/// with it in a closed, balanced economy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GrowthPrediction {
    pub g: f64,
    pub gamma_tilde: f64,
    pub l_bar: f64,
    pub via_leontief: f64,
    pub via_domar: f64,
    pub closed: bool,
}

impl GrowthPrediction {
    /// Largest pairwise gap among the three routes.
    pub fn spread(&self) -> f64 {
        let v = [self.g, self.via_leontief, self.via_domar];
        let max = v.iter().copied().fold(f64::MIN, f64::max);
        let min = v.iter().copied().fold(f64::MAX, f64::min);
        max - min
    }
}

/// Closed economies fail with [`Error::Identity`] when the three routes
/// disagree; open ones return the routes side by side.
pub fn predict_growth(coeffs: &CoefficientSystem, gamma: &DVector<f64>) -> Result<GrowthPrediction> {
    check_len(coeffs.len(), gamma)?;
    let solver = LeontiefSolver::new(coeffs)?;
    let ones = DVector::from_element(coeffs.len(), 1.0);
    let multipliers = solver.solve(&ones, true)?;
    let l_bar = coeffs.gdp_share().dot(&multipliers);
    let gamma_tilde = coeffs.output_share().dot(gamma);
    let via_leontief = coeffs.gdp_share().dot(&solver.solve(gamma, true)?);
    let domar = solver.solve(coeffs.gdp_share(), false)?;
    let via_domar = domar.dot(gamma);
    let prediction = GrowthPrediction {
        g: gamma_tilde * l_bar,
        gamma_tilde,
        l_bar,
        via_leontief,
        via_domar,
        closed: coeffs.is_balanced(),
    };
    if prediction.closed {
        let scale = domar.iter().zip(gamma.iter()).map(|(d, g)| (d * g).abs()).sum::<f64>().max(1.0);
        if prediction.spread() > GROWTH_TOL * scale {
            return Err(Error::Identity(format!(
                "growth routes disagree: gamma_tilde*L_bar={}, theta H^T gamma={}, D.gamma={}",
                prediction.g, via_leontief, via_domar
            )));
        }
    }
    Ok(prediction)
}

/// `|gamma_tilde * L_bar - sum_i (M_i / Y) gamma_i|` with `L_bar` from the
/// factored solve and `M / Y` from the table's gross outputs.
pub fn hulten_check(coeffs: &CoefficientSystem, gamma: &DVector<f64>) -> Result<f64> {
    check_len(coeffs.len(), gamma)?;
    let multipliers = crate::multipliers::output_multipliers(coeffs)?;
    let l_bar = coeffs.gdp_share().dot(&multipliers);
    let gamma_tilde = coeffs.output_share().dot(gamma);
    let domar_from_table = coeffs.gross_output() / coeffs.gdp();
    Ok((gamma_tilde * l_bar - domar_from_table.dot(gamma)).abs())
}

/// Dual estimate `gamma_hat = (A^T - I) r` from real returns; the exact
/// left inverse of [`predict_returns`].
pub fn estimate_productivity(coeffs: &CoefficientSystem, real_returns: &DVector<f64>) -> Result<DVector<f64>> {
    check_len(coeffs.len(), real_returns)?;
    Ok(coeffs.a().tr_mul(real_returns) - real_returns)
}

/// `direct = -gamma`, `inherited_i = sum_j r_j a_ji`.
pub fn decompose_returns(
    coeffs: &CoefficientSystem,
    returns: &DVector<f64>,
    gamma: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    check_len(coeffs.len(), returns)?;
    check_len(coeffs.len(), gamma)?;
    Ok((-gamma, coeffs.a().tr_mul(returns)))
}

/// Covariance of improvement rates across industries.
#[derive(Debug, Clone, PartialEq)]
pub enum ImprovementCovariance {
    /// Per-industry variances only.
    Diagonal(DVector<f64>),
    Full(DMatrix<f64>),
}

impl ImprovementCovariance {
    pub fn len(&self) -> usize {
        match self {
            Self::Diagonal(d) => d.len(),
            Self::Full(g) => g.nrows(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn diagonal(&self) -> DVector<f64> {
        match self {
            Self::Diagonal(d) => d.clone(),
            Self::Full(g) => g.diagonal(),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Self::Diagonal(d) => {
                if d.iter().any(|&x| !(x >= 0.0)) {
                    return Err(Error::Domain("variances must be nonnegative".into()));
                }
            }
            Self::Full(g) => {
                if g.nrows() != g.ncols() {
                    return Err(Error::Domain("covariance matrix must be square".into()));
                }
                let scale = g.amax().max(1.0);
                if (g - g.transpose()).amax() > 1e-10 * scale {
                    return Err(Error::Domain("covariance matrix is not symmetric".into()));
                }
                let min_eig = SymmetricEigen::new(g.clone()).eigenvalues.min();
                if min_eig < -1e-10 * scale {
                    return Err(Error::Domain(format!(
                        "covariance matrix is not positive semidefinite (eigenvalue {min_eig:.3e})"
                    )));
                }
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CovariancePrediction {
    pub r_pred: DMatrix<f64>,
    pub variance_diag: DVector<f64>,
    pub full_g: Option<DMatrix<f64>>,
}

/// `R = H^T G H`, or `R_ij = sum_m H_mi D_m H_mj` for diagonal `G`.
///
/// Rows are computed in parallel, each entry with a fixed summation order,
/// and only the upper triangle is evaluated then mirrored, so the result is
/// bitwise independent of the worker count and exactly symmetric.
pub fn predict_covariances(h: &LeontiefInverse, g: &ImprovementCovariance) -> Result<CovariancePrediction> {
    let n = h.len();
    if g.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: g.len() });
    }
    g.validate()?;
    let hm = h.h();
    // weighted = G H
    let weighted = match g {
        ImprovementCovariance::Diagonal(d) => DMatrix::from_fn(n, n, |m, j| d[m] * hm[(m, j)]),
        ImprovementCovariance::Full(full) => {
            let cols: Vec<Vec<f64>> = (0..n)
                .into_par_iter()
                .map(|j| (0..n).map(|m| (0..n).map(|k| full[(m, k)] * hm[(k, j)]).sum()).collect())
                .collect();
            DMatrix::from_fn(n, n, |m, j| cols[j][m])
        }
    };
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (i..n).map(|j| (0..n).map(|m| hm[(m, i)] * weighted[(m, j)]).sum()).collect())
        .collect();
    let mut r = DMatrix::zeros(n, n);
    for (i, row) in rows.into_iter().enumerate() {
        for (k, v) in row.into_iter().enumerate() {
            let j = i + k;
            r[(i, j)] = v;
            r[(j, i)] = v;
        }
    }
    Ok(CovariancePrediction {
        r_pred: r,
        variance_diag: g.diagonal(),
        full_g: match g {
            ImprovementCovariance::Full(full) => Some(full.clone()),
            ImprovementCovariance::Diagonal(_) => None,
        },
    })
}

/// Correlation between `Z = X + Y` and its summand `X`:
/// `(sigma_x + cov / sigma_x) / sqrt(sigma_x^2 + sigma_y^2 + 2 cov)`, with
/// `sigma` the standard deviations.
pub fn correlation_of_summand(sigma_x: f64, sigma_y: f64, cov_xy: f64) -> Result<f64> {
    if !(sigma_x > 0.0) || !(sigma_y > 0.0) {
        return Err(Error::Domain("standard deviations must be positive".into()));
    }
    if cov_xy.abs() > sigma_x * sigma_y * (1.0 + 1e-12) {
        return Err(Error::Domain("|cov| exceeds sigma_x * sigma_y".into()));
    }
    let var_z = sigma_x * sigma_x + sigma_y * sigma_y + 2.0 * cov_xy;
    if !(var_z > 0.0) {
        return Err(Error::Domain("X + Y has zero variance".into()));
    }
    Ok((sigma_x + cov_xy / sigma_x) / var_z.sqrt())
}
