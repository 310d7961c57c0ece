//! Statistical protocol layer: OLS with t-test p-values, Pearson
//! correlation, binning, per-group standardization and the AR(1)
//! productivity forecaster.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};

/// Relative residual norm below which a design column counts as collinear.
const COLLINEAR_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionResult {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub p_value_slope: f64,
    pub n: usize,
    /// Column names: `intercept`, `x`, then `covariate_k`.
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub std_errors: Vec<f64>,
    pub p_values: Vec<f64>,
    pub residuals: Vec<f64>,
}

impl RegressionResult {
    pub fn slope_stderr(&self) -> f64 {
        self.std_errors[1]
    }
}

fn two_sided_p(t: f64, df: f64) -> f64 {
    if t.is_nan() {
        return 1.0;
    }
    if t.is_infinite() {
        return 0.0;
    }
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * dist.sf(t.abs())).clamp(0.0, 1.0)
}

/// Names of columns that are (numerically) linear combinations of earlier
/// columns, by modified Gram-Schmidt.
fn collinear_columns(design: &DMatrix<f64>, names: &[String]) -> Vec<String> {
    let mut basis: Vec<DVector<f64>> = Vec::new();
    let mut out = Vec::new();
    for (k, col) in design.column_iter().enumerate() {
        let original = col.norm();
        let mut v = col.clone_owned();
        for q in &basis {
            let proj = q.dot(&v);
            v.axpy(-proj, q, 1.0);
        }
        let norm = v.norm();
        if original == 0.0 || norm <= COLLINEAR_TOL * original {
            out.push(names[k].clone());
        } else {
            basis.push(v / norm);
        }
    }
    out
}

/// Least squares of `y` on an explicit design matrix.
pub fn ols_design(design: &DMatrix<f64>, names: &[String], y: &[f64]) -> Result<RegressionResult> {
    let n = design.nrows();
    let k = design.ncols();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < k + 1 {
        return Err(Error::Domain(format!("{n} observations cannot fit {k} coefficients with a residual")));
    }
    if design.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Domain("regression data must be finite".into()));
    }
    let collinear = collinear_columns(design, names);
    if !collinear.is_empty() {
        return Err(Error::RankDeficient { columns: collinear, hint: String::new() });
    }
    let y = DVector::from_column_slice(y);
    let qr = design.clone().qr();
    let r = qr.r();
    let qty = qr.q().tr_mul(&y);
    let beta = r
        .solve_upper_triangular(&qty)
        .ok_or_else(|| Error::RankDeficient { columns: names.to_vec(), hint: String::new() })?;
    let residuals = &y - design * &beta;
    let sse = residuals.norm_squared();
    let df = (n - k) as f64;
    let sigma2 = sse / df;
    let r_inv = r
        .solve_upper_triangular(&DMatrix::identity(k, k))
        .ok_or_else(|| Error::RankDeficient { columns: names.to_vec(), hint: String::new() })?;
    let xtx_inv = &r_inv * r_inv.transpose();
    let std_errors: Vec<f64> = (0..k).map(|j| (sigma2 * xtx_inv[(j, j)]).max(0.0).sqrt()).collect();
    let p_values: Vec<f64> = (0..k)
        .map(|j| {
            if std_errors[j] == 0.0 {
                if beta[j] == 0.0 {
                    1.0
                } else {
                    0.0
                }
            } else {
                two_sided_p(beta[j] / std_errors[j], df)
            }
        })
        .collect();
    let mean_y = y.mean();
    let sst = y.iter().map(|v| (v - mean_y).powi(2)).sum::<f64>();
    let r_squared = if sst > 0.0 { (1.0 - sse / sst).clamp(0.0, 1.0) } else { 0.0 };
    Ok(RegressionResult {
        slope: if k > 1 { beta[1] } else { f64::NAN },
        intercept: beta[0],
        r_squared,
        p_value_slope: if k > 1 { p_values[1] } else { f64::NAN },
        n,
        names: names.to_vec(),
        coefficients: beta.iter().copied().collect(),
        std_errors,
        p_values,
        residuals: residuals.iter().copied().collect(),
    })
}

/// `y = intercept + slope * x [+ covariates]` with homoskedastic t-tests on
/// `n - k` degrees of freedom.
pub fn ols(x: &[f64], y: &[f64], extra_covariates: Option<&DMatrix<f64>>) -> Result<RegressionResult> {
    let n = x.len();
    let extra = extra_covariates.map(|m| m.ncols()).unwrap_or(0);
    if let Some(m) = extra_covariates {
        if m.nrows() != n {
            return Err(Error::DimensionMismatch { expected: n, got: m.nrows() });
        }
    }
    let mut design = DMatrix::zeros(n, 2 + extra);
    let mut names = vec!["intercept".to_string(), "x".to_string()];
    for i in 0..n {
        design[(i, 0)] = 1.0;
        design[(i, 1)] = x[i];
    }
    if let Some(m) = extra_covariates {
        for c in 0..extra {
            design.set_column(2 + c, &m.column(c));
            names.push(format!("covariate_{c}"));
        }
    }
    ols_design(&design, &names, y)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correlation {
    pub r: f64,
    pub p_value: f64,
    pub n: usize,
}

/// Pearson correlation with the exact t-transform p-value on `n - 2` df.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<Correlation> {
    let n = x.len();
    if y.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: y.len() });
    }
    if n < 3 {
        return Err(Error::Domain("correlation needs at least three points".into()));
    }
    let mx = x.iter().sum::<f64>() / n as f64;
    let my = y.iter().sum::<f64>() / n as f64;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx).powi(2);
        syy += (b - my).powi(2);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Domain("correlation undefined for a constant series".into()));
    }
    let r = (sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0);
    let df = (n - 2) as f64;
    let p_value = if r.abs() == 1.0 { 0.0 } else { two_sided_p(r * (df / (1.0 - r * r)).sqrt(), df) };
    Ok(Correlation { r, p_value, n })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bin {
    /// Mean `x` of the bin.
    pub center: f64,
    pub mean: f64,
    /// Sample standard deviation over `sqrt(n)`.
    pub stderr: f64,
    pub n: usize,
    /// `mean - 2 * stderr`.
    pub band_low: f64,
    /// `mean + 2 * stderr`.
    pub band_high: f64,
}

fn summarize(points: &[(f64, f64)]) -> Bin {
    let n = points.len();
    let nf = n as f64;
    let center = points.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean = points.iter().map(|p| p.1).sum::<f64>() / nf;
    let std = if n > 1 {
        (points.iter().map(|p| (p.1 - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt()
    } else {
        0.0
    };
    let stderr = std / nf.sqrt();
    Bin { center, mean, stderr, n, band_low: mean - 2.0 * stderr, band_high: mean + 2.0 * stderr }
}

/// Sorts points by `x` and cuts them into contiguous bins of
/// `target_bin_size`. A remainder smaller than half a bin joins the last
/// bin; a larger one forms its own bin.
pub fn bin_means(x: &[f64], y: &[f64], target_bin_size: usize) -> Result<Vec<Bin>> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch { expected: x.len(), got: y.len() });
    }
    if target_bin_size < 2 {
        return Err(Error::Domain("target bin size must be at least 2".into()));
    }
    if x.is_empty() {
        return Ok(Vec::new());
    }
    let mut points: Vec<(f64, f64)> = x.iter().copied().zip(y.iter().copied()).collect();
    points.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    let n = points.len();
    if n < target_bin_size {
        return Ok(vec![summarize(&points)]);
    }
    let full = n / target_bin_size;
    let rem = n % target_bin_size;
    let mut sizes = vec![target_bin_size; full];
    if rem > 0 {
        if (rem as f64) < target_bin_size as f64 / 2.0 {
            *sizes.last_mut().expect("at least one full bin") += rem;
        } else {
            sizes.push(rem);
        }
    }
    let mut start = 0;
    Ok(sizes
        .into_iter()
        .map(|size| {
            let bin = summarize(&points[start..start + size]);
            start += size;
            bin
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct GroupNormalization {
    /// Standardized value, or `None` for members of excluded groups.
    pub values: Vec<Option<f64>>,
    /// Groups with fewer than two members or zero spread.
    pub excluded: Vec<String>,
}

/// Within each group, `(v - mean) / std` with the `n - 1` sample deviation.
pub fn center_normalize_by_group<S: AsRef<str>>(values: &[f64], groups: &[S]) -> Result<GroupNormalization> {
    if values.len() != groups.len() {
        return Err(Error::DimensionMismatch { expected: values.len(), got: groups.len() });
    }
    let mut members: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, g) in groups.iter().enumerate() {
        members.entry(g.as_ref()).or_default().push(i);
    }
    let mut out = vec![None; values.len()];
    let mut excluded = Vec::new();
    for (label, idx) in members {
        let n = idx.len() as f64;
        let mean = idx.iter().map(|&i| values[i]).sum::<f64>() / n;
        let var = if idx.len() > 1 {
            idx.iter().map(|&i| (values[i] - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        if !(var > 0.0) {
            excluded.push(label.to_string());
            continue;
        }
        let std = var.sqrt();
        for i in idx {
            out[i] = Some((values[i] - mean) / std);
        }
    }
    Ok(GroupNormalization { values: out, excluded })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ar1Forecast {
    pub a_hat: f64,
    pub b_hat: f64,
    pub c_hat: Option<f64>,
    pub forecast: DVector<f64>,
    pub fit: RegressionResult,
}

/// Fits `gamma_II = a + b gamma_I [+ c L]` across industries and forecasts
/// `gamma_III = a + b gamma_II [+ c L]`.
pub fn ar1_forecast(
    gamma_i: &DVector<f64>,
    gamma_ii: &DVector<f64>,
    covariate_l: Option<&DVector<f64>>,
) -> Result<Ar1Forecast> {
    let n = gamma_i.len();
    if gamma_ii.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: gamma_ii.len() });
    }
    if let Some(l) = covariate_l {
        if l.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: l.len() });
        }
    }
    let extra = covariate_l.map(|l| DMatrix::from_column_slice(n, 1, l.as_slice()));
    let fit = ols(gamma_i.as_slice(), gamma_ii.as_slice(), extra.as_ref()).map_err(|e| match e {
        Error::RankDeficient { columns, .. } => Error::RankDeficient {
            columns,
            hint: "; use the sample mean of gamma_II as a covariate-free forecast".into(),
        },
        other => other,
    })?;
    let a_hat = fit.coefficients[0];
    let b_hat = fit.coefficients[1];
    let c_hat = covariate_l.map(|_| fit.coefficients[2]);
    let mut forecast = gamma_ii * b_hat;
    forecast.add_scalar_mut(a_hat);
    if let (Some(c), Some(l)) = (c_hat, covariate_l) {
        forecast.axpy(c, l, 1.0);
    }
    Ok(Ar1Forecast { a_hat, b_hat, c_hat, forecast, fit })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_line() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = ols(&x, &y, None).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert_eq!(fit.n, 10);
    }

    #[test]
    fn constant_response() {
        let x: Vec<f64> = (0..10).map(f64::from).collect();
        let fit = ols(&x, &[3.0; 10], None).unwrap();
        assert!(fit.slope.abs() < 1e-14);
        assert_eq!(fit.r_squared, 0.0);
        assert!(fit.p_value_slope.is_finite());
    }

    #[test]
    fn p_value_matches_reference() {
        // Checked against scipy.stats.linregress.
        let x = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0];
        let y = [1.1, 1.9, 3.4, 3.8, 5.3, 5.7];
        let fit = ols(&x, &y, None).unwrap();
        assert!((fit.slope - 0.96).abs() < 1e-12);
        let t = fit.slope / fit.slope_stderr();
        let expected = 2.0 * StudentsT::new(0.0, 1.0, 4.0).unwrap().sf(t);
        assert!((fit.p_value_slope - expected).abs() < 1e-15);
        assert!(fit.p_value_slope < 1e-3);
    }

    #[test]
    fn rank_deficiency_names_column() {
        let x = [1.0, 2.0, 3.0, 4.0];
        let dup = DMatrix::from_column_slice(4, 1, &[2.0, 4.0, 6.0, 8.0]);
        match ols(&x, &[1.0, 0.0, 1.0, 0.0], Some(&dup)) {
            Err(Error::RankDeficient { columns, .. }) => assert_eq!(columns, vec!["covariate_0"]),
            other => panic!("{other:?}"),
        }
        match ols(&[5.0; 4], &[1.0, 0.0, 1.0, 0.0], None) {
            Err(Error::RankDeficient { columns, .. }) => assert_eq!(columns, vec!["x"]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn too_few_points() {
        assert!(ols(&[1.0, 2.0], &[1.0, 2.0], None).is_err());
    }

    #[test]
    fn bin_sizes() {
        let x: Vec<f64> = (0..90).map(f64::from).collect();
        let sizes: Vec<usize> = bin_means(&x, &x, 45).unwrap().iter().map(|b| b.n).collect();
        assert_eq!(sizes, vec![45, 45]);
        let x: Vec<f64> = (0..100).map(f64::from).collect();
        let sizes: Vec<usize> = bin_means(&x, &x, 45).unwrap().iter().map(|b| b.n).collect();
        assert_eq!(sizes, vec![45, 55]);
        let x: Vec<f64> = (0..70).map(f64::from).collect();
        let sizes: Vec<usize> = bin_means(&x, &x, 45).unwrap().iter().map(|b| b.n).collect();
        assert_eq!(sizes, vec![45, 25]);
        let sizes: Vec<usize> = bin_means(&x[..10], &x[..10], 45).unwrap().iter().map(|b| b.n).collect();
        assert_eq!(sizes, vec![10]);
    }

    #[test]
    fn constant_bins() {
        let x: Vec<f64> = (0..50).map(|v| f64::from(v).sin()).collect();
        for bin in bin_means(&x, &[4.0; 50], 10).unwrap() {
            assert_eq!(bin.mean, 4.0);
            assert_eq!(bin.stderr, 0.0);
            assert_eq!(bin.band_low, bin.band_high);
        }
    }

    #[test]
    fn normalize_triple() {
        let out = center_normalize_by_group(&[1.0, 2.0, 3.0], &["g", "g", "g"]).unwrap();
        let v: Vec<f64> = out.values.iter().map(|x| x.unwrap()).collect();
        assert_eq!(v, vec![-1.0, 0.0, 1.0]);
        assert!(out.excluded.is_empty());
    }

    #[test]
    fn normalize_flags_degenerate_groups() {
        let out = center_normalize_by_group(&[1.0, 1.0, 5.0, 2.0, 4.0], &["a", "a", "b", "c", "c"]).unwrap();
        assert_eq!(out.excluded, vec!["a".to_string(), "b".to_string()]);
        assert_eq!(out.values[0], None);
        assert!(out.values[3].is_some());
    }

    #[test]
    fn persistence_forecast() {
        let g = DVector::from_vec(vec![0.01, 0.03, -0.02, 0.05, 0.0]);
        let f = ar1_forecast(&g, &g, None).unwrap();
        assert!(f.a_hat.abs() < 1e-14);
        assert!((f.b_hat - 1.0).abs() < 1e-12);
        assert!((f.forecast - &g).amax() < 1e-14);
    }

    #[test]
    fn constant_first_period_is_rank_deficient() {
        let f = ar1_forecast(&DVector::from_element(4, 0.02), &DVector::from_vec(vec![0.1, 0.2, 0.3, 0.4]), None);
        match f {
            Err(Error::RankDeficient { hint, .. }) => assert!(hint.contains("sample mean")),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn pearson_basics() {
        let c = pearson(&[1.0, 2.0, 3.0, 4.0], &[2.0, 4.0, 6.0, 8.5]).unwrap();
        assert!(c.r > 0.99);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
    }
}
