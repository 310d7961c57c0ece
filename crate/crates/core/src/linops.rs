//! Leontief inverse, factored solves against `I - A` and `I - A^T`, the
//! truncated power-series oracle, the spectral check and the absorbing
//! random-walk estimator of output multipliers.

use nalgebra::{DMatrix, DVector, LU};
use petgraph::algo::tarjan_scc;
use petgraph::graph::DiGraph;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use crate::coefficients::CoefficientSystem;
use crate::error::{Error, Result};

/// Required gap between the spectral radius of `A` and 1.
pub const SPECTRAL_MARGIN: f64 = 1e-10;
const POWER_ITERATIONS: usize = 1000;
const POWER_TOL: f64 = 1e-12;
const MAX_SERIES_TERMS: usize = 1_000_000;
const MAX_WALK_STEPS: u64 = 1_000_000;

/// `H = (I - A)^-1` together with a fingerprint of the system it came from.
#[derive(Debug, Clone, PartialEq)]
pub struct LeontiefInverse {
    h: DMatrix<f64>,
    source_hash: String,
}

impl LeontiefInverse {
    pub fn h(&self) -> &DMatrix<f64> {
        &self.h
    }

    pub fn source_hash(&self) -> &str {
        &self.source_hash
    }

    pub fn len(&self) -> usize {
        self.h.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.nrows() == 0
    }

    /// Column sums of `H`.
    pub fn output_multipliers(&self) -> DVector<f64> {
        DVector::from_fn(self.len(), |j, _| self.h.column(j).sum())
    }

    /// Checks `(I - A) H = I`, nonnegativity, unit-or-larger diagonal and
    /// `H^T labor_share = 1`.
    pub fn verify(&self, coeffs: &CoefficientSystem) -> Result<()> {
        let n = self.len();
        let i_minus_a = DMatrix::identity(n, n) - coeffs.a();
        let resid = (&i_minus_a * &self.h - DMatrix::identity(n, n)).amax();
        if resid > 1e-9 {
            return Err(Error::Identity(format!("(I - A) H - I residual {resid:.3e}")));
        }
        if self.h.iter().any(|&x| x < -1e-12) {
            return Err(Error::Identity("Leontief inverse has negative entries".into()));
        }
        if (0..n).any(|i| self.h[(i, i)] < 1.0 - 1e-12) {
            return Err(Error::Identity("Leontief inverse has a diagonal entry below 1".into()));
        }
        let absorb = self.h.tr_mul(coeffs.labor_share()).add_scalar(-1.0).amax();
        if absorb > 1e-9 {
            return Err(Error::Identity(format!("H^T labor_share - 1 residual {absorb:.3e}")));
        }
        Ok(())
    }
}

/// SHA-256 over the coefficient matrix and labor shares.
pub fn fingerprint(coeffs: &CoefficientSystem) -> String {
    let mut hasher = Sha256::new();
    hasher.update((coeffs.len() as u64).to_le_bytes());
    for x in coeffs.a().iter().chain(coeffs.labor_share().iter()) {
        hasher.update(x.to_bits().to_le_bytes());
    }
    hasher.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Perron root of a nonnegative matrix by power iteration on `A + I`, which
/// is aperiodic even when `A` is not.
pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    if n == 0 {
        return 0.0;
    }
    let shifted = a + DMatrix::identity(n, n);
    let mut x = DVector::from_element(n, 1.0 / n as f64);
    let mut lambda = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let y = &shifted * &x;
        let next = y.sum();
        if next <= 0.0 {
            return 0.0;
        }
        x = y / next;
        let converged = (next - lambda).abs() < POWER_TOL;
        lambda = next;
        if converged {
            break;
        }
    }
    (lambda - 1.0).max(0.0)
}

/// Strongly connected groups of industries that pay no labor and buy only
/// from each other: money entering them never reaches households.
pub fn closed_components(coeffs: &CoefficientSystem) -> Vec<Vec<usize>> {
    let n = coeffs.len();
    let a = coeffs.a();
    let mut graph = DiGraph::<usize, ()>::with_capacity(n, 0);
    let nodes: Vec<_> = (0..n).map(|i| graph.add_node(i)).collect();
    for j in 0..n {
        for i in 0..n {
            if a[(i, j)] > 0.0 {
                graph.add_edge(nodes[j], nodes[i], ());
            }
        }
    }
    let mut out = Vec::new();
    for scc in tarjan_scc(&graph) {
        let members: Vec<usize> = scc.iter().map(|&ix| graph[ix]).collect();
        let leaks = members.iter().any(|&j| {
            coeffs.labor_share()[j] > 0.0 || (0..n).any(|i| a[(i, j)] > 0.0 && !members.contains(&i))
        });
        let has_cycle = members.len() > 1 || a[(members[0], members[0])] > 0.0;
        if !leaks && has_cycle {
            let mut m = members;
            m.sort_unstable();
            out.push(m);
        }
    }
    out.sort();
    out
}

/// Fails when the spectral radius of `A` is not below `1 - SPECTRAL_MARGIN`,
/// naming a closed component when one exists.
pub fn check_spectral(coeffs: &CoefficientSystem) -> Result<()> {
    let names = |idx: &[usize]| idx.iter().map(|&i| coeffs.industries()[i].label()).collect::<Vec<_>>();
    if let Some(component) = closed_components(coeffs).first() {
        return Err(Error::Singular { spectral_radius: 1.0, component: names(component) });
    }
    let rho = spectral_radius(coeffs.a());
    if rho >= 1.0 - SPECTRAL_MARGIN {
        return Err(Error::Singular { spectral_radius: rho, component: Vec::new() });
    }
    Ok(())
}

pub fn leontief_inverse(coeffs: &CoefficientSystem) -> Result<LeontiefInverse> {
    check_spectral(coeffs)?;
    let n = coeffs.len();
    let i_minus_a = DMatrix::identity(n, n) - coeffs.a();
    let h = i_minus_a.lu().try_inverse().ok_or_else(|| Error::Singular {
        spectral_radius: spectral_radius(coeffs.a()),
        component: Vec::new(),
    })?;
    let inv = LeontiefInverse { h, source_hash: fingerprint(coeffs) };
    inv.verify(coeffs)?;
    Ok(inv)
}

/// LU factorizations of `I - A` and `I - A^T` for repeated solves.
#[derive(Debug, Clone)]
pub struct LeontiefSolver {
    plain: DMatrix<f64>,
    transposed: DMatrix<f64>,
    lu_plain: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    lu_transposed: LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl LeontiefSolver {
    pub fn new(coeffs: &CoefficientSystem) -> Result<Self> {
        check_spectral(coeffs)?;
        let n = coeffs.len();
        let plain = DMatrix::identity(n, n) - coeffs.a();
        let transposed = plain.transpose();
        Ok(Self {
            lu_plain: plain.clone().lu(),
            lu_transposed: transposed.clone().lu(),
            plain,
            transposed,
        })
    }

    /// Solves `(I - A) x = b`, or `(I - A^T) x = b` when `transpose` is set,
    /// to `||residual||_inf <= 1e-10 ||b||_inf`.
    pub fn solve(&self, b: &DVector<f64>, transpose: bool) -> Result<DVector<f64>> {
        let (matrix, lu) = if transpose {
            (&self.transposed, &self.lu_transposed)
        } else {
            (&self.plain, &self.lu_plain)
        };
        if b.len() != matrix.nrows() {
            return Err(Error::DimensionMismatch { expected: matrix.nrows(), got: b.len() });
        }
        let singular = || Error::Singular { spectral_radius: f64::NAN, component: Vec::new() };
        let mut x = lu.solve(b).ok_or_else(singular)?;
        let bound = 1e-10 * b.amax();
        for _ in 0..3 {
            let resid = b - matrix * &x;
            if resid.amax() <= bound {
                return Ok(x);
            }
            x += lu.solve(&resid).ok_or_else(singular)?;
        }
        let resid = (b - matrix * &x).amax();
        if resid <= bound {
            Ok(x)
        } else {
            Err(Error::Identity(format!("Leontief solve residual {resid:.3e} exceeds {bound:.3e}")))
        }
    }
}

/// One-off factored solve; see [`LeontiefSolver::solve`].
pub fn solve_leontief(coeffs: &CoefficientSystem, b: &DVector<f64>, transpose: bool) -> Result<DVector<f64>> {
    LeontiefSolver::new(coeffs)?.solve(b, transpose)
}

/// Sums `sum_k M^k b` with `M = A` (or `A^T`), stopping once a term's
/// infinity norm drops below `tol`. Independent of the factored solve.
pub fn neumann_series_oracle(
    coeffs: &CoefficientSystem,
    b: &DVector<f64>,
    transpose: bool,
    tol: f64,
) -> Result<DVector<f64>> {
    if b.len() != coeffs.len() {
        return Err(Error::DimensionMismatch { expected: coeffs.len(), got: b.len() });
    }
    if !(tol > 0.0) {
        return Err(Error::Domain("series tolerance must be positive".into()));
    }
    let m = if transpose { coeffs.a().transpose() } else { coeffs.a().clone() };
    let mut sum = b.clone();
    let mut term = b.clone();
    for _ in 0..MAX_SERIES_TERMS {
        if term.amax() < tol {
            return Ok(sum);
        }
        term = &m * &term;
        sum += &term;
    }
    Err(Error::NonConvergence { terms: MAX_SERIES_TERMS })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub walks: usize,
}

/// Per-column sampling table over sellers followed by households.
struct StepTable {
    targets: Vec<Vec<usize>>,
    cumulative: Vec<Vec<f64>>,
}

impl StepTable {
    fn new(coeffs: &CoefficientSystem) -> Self {
        let n = coeffs.len();
        let mut targets = Vec::with_capacity(n);
        let mut cumulative = Vec::with_capacity(n);
        for j in 0..n {
            let mut t = Vec::new();
            let mut c = Vec::new();
            let mut acc = 0.0;
            for i in 0..n {
                let p = coeffs.a()[(i, j)];
                if p > 0.0 {
                    acc += p;
                    t.push(i);
                    c.push(acc);
                }
            }
            targets.push(t);
            cumulative.push(c);
        }
        Self { targets, cumulative }
    }

    /// Next seller paid by `node`, or `None` when the dollar reaches households.
    fn next(&self, node: usize, u: f64) -> Option<usize> {
        let cum = &self.cumulative[node];
        let k = cum.partition_point(|&c| c <= u);
        self.targets[node].get(k).copied()
    }
}

/// Follows `walks` dollars spent on good `start`: at node `j` the dollar is
/// paid to seller `i` with probability `a_ij` or absorbed by households with
/// probability `labor_share_j`. Returns the mean and standard error of the
/// number of payments, the absorbing one included.
///
/// Walk `k` draws from a ChaCha8 stream `k` keyed by `seed`, so results do
/// not depend on the number of worker threads.
pub fn random_walk_path_length(
    coeffs: &CoefficientSystem,
    start: usize,
    walks: usize,
    seed: u64,
) -> Result<WalkEstimate> {
    if start >= coeffs.len() {
        return Err(Error::DimensionMismatch { expected: coeffs.len(), got: start + 1 });
    }
    if walks == 0 {
        return Err(Error::Domain("at least one walk is required".into()));
    }
    let table = StepTable::new(coeffs);
    let lengths: Vec<u64> = (0..walks)
        .into_par_iter()
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(k as u64);
            let mut node = start;
            let mut steps = 0u64;
            loop {
                steps += 1;
                if steps > MAX_WALK_STEPS {
                    return Err(Error::WalkAborted { steps: MAX_WALK_STEPS });
                }
                match table.next(node, rng.random::<f64>()) {
                    Some(next) => node = next,
                    None => return Ok(steps),
                }
            }
        })
        .collect::<Result<_>>()?;
    let n = lengths.len() as f64;
    let mean = lengths.iter().map(|&s| s as f64).sum::<f64>() / n;
    let stderr = if lengths.len() > 1 {
        let var = lengths.iter().map(|&s| (s as f64 - mean).powi(2)).sum::<f64>() / (n - 1.0);
        (var / n).sqrt()
    } else {
        0.0
    };
    Ok(WalkEstimate { mean, stderr, walks })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economies;

    fn close(a: &DVector<f64>, b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn zero_a_inverse_is_identity() {
        let flat = economies::flat();
        let h = leontief_inverse(&flat).unwrap();
        assert_eq!(h.h(), &DMatrix::identity(2, 2));
        let b = DVector::from_vec(vec![0.3, -2.0]);
        assert_eq!(solve_leontief(&flat, &b, false).unwrap(), b);
        assert_eq!(neumann_series_oracle(&flat, &b, true, 1e-12).unwrap(), b);
    }

    #[test]
    fn chain_inverse_closed_form() {
        let chain = economies::chain(0.4);
        let h = leontief_inverse(&chain).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.6, 1.0]);
        assert!((h.h() - expected).amax() < 1e-15);
        assert_eq!(h.source_hash().len(), 64);
    }

    #[test]
    fn symmetric_loop_inverse_closed_form() {
        let h = leontief_inverse(&economies::symmetric_loop()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]) / 0.75;
        assert!((h.h() - expected).amax() < 1e-14);
    }

    #[test]
    fn solve_examples() {
        let chain = economies::chain(0.4);
        let x = solve_leontief(&chain, chain.labor_share(), true).unwrap();
        assert!(close(&x, &[1.0, 1.0], 1e-14));
        let ones = DVector::from_element(2, 1.0);
        assert!(close(&solve_leontief(&chain, &ones, true).unwrap(), &[1.6, 1.0], 1e-14));
    }

    #[test]
    fn series_examples() {
        let ones = DVector::from_element(2, 1.0);
        let chain = neumann_series_oracle(&economies::chain(0.4), &ones, true, 1e-12).unwrap();
        assert!(close(&chain, &[1.6, 1.0], 1e-12));
        let lp = neumann_series_oracle(&economies::symmetric_loop(), &ones, true, 1e-12).unwrap();
        assert!(close(&lp, &[2.0, 2.0], 1e-11));
    }

    #[test]
    fn closed_loop_without_labor_is_singular() {
        let a = DMatrix::from_row_slice(3, 3, &[0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        let sys = CoefficientSystem::from_parts(
            economies::names(3),
            a,
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
            DVector::from_element(3, 1.0),
            1.0,
            false,
        )
        .unwrap();
        match leontief_inverse(&sys) {
            Err(Error::Singular { component, .. }) => assert_eq!(component, vec!["X:00", "X:01"]),
            other => panic!("{other:?}"),
        }
        assert!(matches!(solve_leontief(&sys, &DVector::zeros(3), false), Err(Error::Singular { .. })));
    }

    #[test]
    fn spectral_radius_of_loop() {
        let rho = spectral_radius(economies::symmetric_loop().a());
        assert!((rho - 0.5).abs() < 1e-9);
        let cyc = DMatrix::from_row_slice(2, 2, &[0.0, 0.9, 0.9, 0.0]);
        assert!((spectral_radius(&cyc) - 0.9).abs() < 1e-9);
    }

    #[test]
    fn walk_immediate_absorption() {
        let est = random_walk_path_length(&economies::flat(), 0, 1000, 7).unwrap();
        assert_eq!(est.mean, 1.0);
        assert_eq!(est.stderr, 0.0);
    }

    #[test]
    fn walk_chain_and_loop() {
        let chain = random_walk_path_length(&economies::chain(0.4), 0, 100_000, 0).unwrap();
        assert!((chain.mean - 1.6).abs() < 3.0 * chain.stderr, "{chain:?}");
        let lp = random_walk_path_length(&economies::symmetric_loop(), 1, 100_000, 0).unwrap();
        assert!((lp.mean - 2.0).abs() < 3.0 * lp.stderr, "{lp:?}");
    }

    #[test]
    fn walk_is_deterministic_across_thread_counts() {
        let sys = economies::symmetric_loop();
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let a = one.install(|| random_walk_path_length(&sys, 0, 5000, 42).unwrap());
        let b = four.install(|| random_walk_path_length(&sys, 0, 5000, 42).unwrap());
        assert_eq!(a, b);
    }
}
