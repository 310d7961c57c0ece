//! Output multipliers, their GDP-weighted average, Domar weights and the
//! gross-to-net output ratio.

use nalgebra::DVector;

use crate::coefficients::CoefficientSystem;
use crate::error::{Error, Result};
use crate::linops::LeontiefSolver;

/// Tolerance of the closed-economy identities `sum D = theta . L = O / Y`.
pub const IDENTITY_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct MultiplierReport {
    pub multipliers: DVector<f64>,
    pub average: f64,
    pub domar: DVector<f64>,
    pub gross_over_net: f64,
    /// Copied from the coefficient system; identities are only asserted when set.
    pub balanced: bool,
}

impl MultiplierReport {
    pub fn build(coeffs: &CoefficientSystem) -> Result<Self> {
        let solver = LeontiefSolver::new(coeffs)?;
        let ones = DVector::from_element(coeffs.len(), 1.0);
        let multipliers = solver.solve(&ones, true)?;
        let domar = solver.solve(coeffs.gdp_share(), false)?;
        let report = Self {
            average: coeffs.gdp_share().dot(&multipliers),
            multipliers,
            domar,
            gross_over_net: coeffs.gross_output_total() / coeffs.gdp(),
            balanced: coeffs.is_balanced(),
        };
        if report.balanced {
            report.check_identities()?;
        }
        Ok(report)
    }

    /// `|theta . L - O/Y|`; nonzero in open or unbalanced economies.
    pub fn discrepancy(&self) -> f64 {
        (self.average - self.gross_over_net).abs()
    }

    pub fn check_identities(&self) -> Result<()> {
        let sum_domar = self.domar.sum();
        let gaps = [
            ("sum of Domar weights vs average multiplier", (sum_domar - self.average).abs()),
            ("average multiplier vs O/Y", self.discrepancy()),
        ];
        for (what, gap) in gaps {
            if gap > IDENTITY_TOL * self.average.max(1.0) {
                return Err(Error::Identity(format!("{what}: gap {gap:.3e}")));
            }
        }
        Ok(())
    }
}

/// `L = (I - A^T)^-1 1`: column sums of the Leontief inverse.
pub fn output_multipliers(coeffs: &CoefficientSystem) -> Result<DVector<f64>> {
    let ones = DVector::from_element(coeffs.len(), 1.0);
    crate::linops::solve_leontief(coeffs, &ones, true)
}

/// `theta . L`.
pub fn average_output_multiplier(coeffs: &CoefficientSystem, multipliers: &DVector<f64>) -> Result<f64> {
    if multipliers.len() != coeffs.len() {
        return Err(Error::DimensionMismatch { expected: coeffs.len(), got: multipliers.len() });
    }
    Ok(coeffs.gdp_share().dot(multipliers))
}

/// `D = (I - A)^-1 theta`, equal to `M / Y`.
pub fn domar_weights(coeffs: &CoefficientSystem) -> Result<DVector<f64>> {
    crate::linops::solve_leontief(coeffs, coeffs.gdp_share(), false)
}

/// Average multiplier per country using that country's final-demand shares.
pub fn country_averages(coeffs: &CoefficientSystem, multipliers: &DVector<f64>) -> Result<Vec<(String, f64)>> {
    coeffs
        .countries()
        .into_iter()
        .map(|c| {
            let theta = coeffs.country_gdp_share(&c)?;
            Ok((c, theta.dot(multipliers)))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economies;

    #[test]
    fn labor_only_multipliers_are_one() {
        let flat = economies::flat();
        let l = output_multipliers(&flat).unwrap();
        assert_eq!(l.as_slice(), &[1.0, 1.0]);
        assert_eq!(average_output_multiplier(&flat, &l).unwrap(), 1.0);
        assert_eq!(&domar_weights(&flat).unwrap(), flat.gdp_share());
    }

    #[test]
    fn chain_multipliers() {
        let chain = economies::chain(0.4);
        let l = output_multipliers(&chain).unwrap();
        assert!((l[0] - 1.6).abs() < 1e-14 && (l[1] - 1.0).abs() < 1e-14);
        assert!((average_output_multiplier(&chain, &l).unwrap() - 1.6).abs() < 1e-14);
        let d = domar_weights(&chain).unwrap();
        assert!((d[0] - 1.0).abs() < 1e-14 && (d[1] - 0.6).abs() < 1e-14);
        assert!((d.sum() - 1.6).abs() < 1e-14);
    }

    #[test]
    fn loop_multipliers() {
        let l = output_multipliers(&economies::symmetric_loop()).unwrap();
        assert!((l[0] - 2.0).abs() < 1e-14 && (l[1] - 2.0).abs() < 1e-14);
    }

    #[test]
    fn report_checks_identities() {
        let r = MultiplierReport::build(&economies::chain(0.4)).unwrap();
        assert!(r.discrepancy() < 1e-14);
        assert!((r.gross_over_net - 1.6).abs() < 1e-14);
    }

    #[test]
    fn open_report_carries_discrepancy() {
        let chain = economies::chain(0.4);
        let open = CoefficientSystem::from_parts(
            chain.industries().to_vec(),
            chain.a().clone(),
            chain.labor_share().clone(),
            chain.gdp_share().clone(),
            DVector::from_vec(vec![1.2, 0.6]),
            1.0,
            false,
        )
        .unwrap();
        let r = MultiplierReport::build(&open).unwrap();
        assert!((r.discrepancy() - 0.2).abs() < 1e-12);
        assert!(r.check_identities().is_err());
    }
}
