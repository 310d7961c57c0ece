//! Toy economies and random closed-economy generators.

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::coefficients::CoefficientSystem;
use crate::iotable::{IOTable, Industry};

/// `X:00`, `X:01`, ...
pub fn names(n: usize) -> Vec<Industry> {
    (0..n).map(|i| Industry::new("X", format!("{i:02}"))).collect()
}

fn two(codes: [&str; 2]) -> Vec<Industry> {
    codes.iter().map(|c| Industry::new("", *c)).collect()
}

/// Households buy good `a`; `a` pays `1 - labor_share_a` to `b` and the rest
/// to labor; `b` pays only labor.
pub fn chain(labor_share_a: f64) -> CoefficientSystem {
    let mut a = DMatrix::zeros(2, 2);
    a[(1, 0)] = 1.0 - labor_share_a;
    CoefficientSystem::from_shares(two(["a", "b"]), a, DVector::from_vec(vec![1.0, 0.0]), 1.0)
        .expect("chain economy is well formed")
}

/// Flow table of [`chain`] with unit GDP.
pub fn chain_table(labor_share_a: f64) -> IOTable {
    let mut flows = DMatrix::zeros(2, 2);
    flows[(1, 0)] = 1.0 - labor_share_a;
    IOTable::new(
        two(["a", "b"]),
        flows,
        DVector::from_vec(vec![1.0, 0.0]),
        DVector::from_vec(vec![labor_share_a, 1.0 - labor_share_a]),
        0,
    )
    .expect("chain table is well formed")
}

/// Two final goods made from labor only, equal GDP shares.
pub fn flat() -> CoefficientSystem {
    CoefficientSystem::from_shares(two(["a", "b"]), DMatrix::zeros(2, 2), DVector::from_vec(vec![0.5, 0.5]), 1.0)
        .expect("flat economy is well formed")
}

/// The two-industry network where `a` buys only from `b` and `b` only labor.
pub fn two_step() -> CoefficientSystem {
    chain(0.0)
}

/// Each industry pays half its expenditure to the other and half to labor.
pub fn symmetric_loop() -> CoefficientSystem {
    let a = DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.0]);
    CoefficientSystem::from_shares(two(["a", "b"]), a, DVector::from_vec(vec![0.5, 0.5]), 1.0)
        .expect("loop economy is well formed")
}

fn lettered(n: usize) -> Vec<Industry> {
    (0..n).map(|i| Industry::new("", char::from(b'a' + i as u8).to_string())).collect()
}

/// Supply chain `a <- b <- c <- ...` with households buying `a` only;
/// `spend[k]` is the payment share of stage `k` to stage `k + 1`, the rest
/// going to labor.
pub fn stage_chain(spend: &[f64]) -> CoefficientSystem {
    let n = spend.len() + 1;
    let mut a = DMatrix::zeros(n, n);
    for (k, s) in spend.iter().enumerate() {
        a[(k + 1, k)] = *s;
    }
    let mut theta = DVector::zeros(n);
    theta[0] = 1.0;
    CoefficientSystem::from_shares(lettered(n), a, theta, 1.0).expect("stage chain is well formed")
}

/// `n` labor-only goods with equal GDP shares, labeled like [`stage_chain`].
pub fn flat_goods(n: usize) -> CoefficientSystem {
    CoefficientSystem::from_shares(lettered(n), DMatrix::zeros(n, n), DVector::from_element(n, 1.0 / n as f64), 1.0)
        .expect("flat economy is well formed")
}

/// Random column-stochastic coefficients: each buyer pays labor a share in
/// `[0.1, 0.9]` and spreads the rest over a random subset of sellers.
pub fn random_coefficients<R: Rng + ?Sized>(rng: &mut R, n: usize, density: f64) -> DMatrix<f64> {
    let mut a = DMatrix::zeros(n, n);
    for j in 0..n {
        let labor = rng.random_range(0.1..0.9);
        let mut weights: Vec<f64> =
            (0..n).map(|_| if rng.random::<f64>() < density { rng.random::<f64>() } else { 0.0 }).collect();
        let total: f64 = weights.iter().sum();
        if total == 0.0 {
            continue;
        }
        for w in weights.iter_mut() {
            *w *= (1.0 - labor) / total;
        }
        for (i, w) in weights.into_iter().enumerate() {
            a[(i, j)] = w;
        }
    }
    a
}

/// Random final-demand shares with roughly a fifth of industries buying nothing.
pub fn random_gdp_share<R: Rng + ?Sized>(rng: &mut R, n: usize) -> DVector<f64> {
    let mut theta = DVector::from_fn(n, |_, _| if rng.random::<f64>() < 0.2 { 0.0 } else { rng.random::<f64>() });
    if theta.sum() == 0.0 {
        theta[0] = 1.0;
    }
    let s = theta.sum();
    theta / s
}

pub fn random_closed_economy<R: Rng + ?Sized>(rng: &mut R, n: usize) -> CoefficientSystem {
    let a = random_coefficients(rng, n, 0.5);
    let theta = random_gdp_share(rng, n);
    let gdp = rng.random_range(1.0..100.0);
    with_positive_output(rng, a, theta, gdp)
}

/// Gives final demand to any industry nobody buys from, so every gross
/// output is positive.
fn with_positive_output<R: Rng + ?Sized>(
    rng: &mut R,
    a: DMatrix<f64>,
    mut theta: DVector<f64>,
    gdp: f64,
) -> CoefficientSystem {
    let n = theta.len();
    loop {
        let coeffs = CoefficientSystem::from_shares(names(n), a.clone(), theta.clone(), gdp)
            .expect("random coefficients are substochastic");
        let idle: Vec<usize> = (0..n).filter(|&j| coeffs.gross_output()[j] <= 1e-12 * gdp).collect();
        if idle.is_empty() {
            return coeffs;
        }
        for j in idle {
            theta[j] = rng.random_range(0.1..1.0) / n as f64;
        }
        theta /= theta.sum();
    }
}

/// Balanced flow table generated from `coeffs`: `M = (I - A)^-1 Y`,
/// `M_ij = a_ij M_j`, labor `= labor_j M_j`.
pub fn table_from_coefficients(coeffs: &CoefficientSystem, industries: Vec<Industry>) -> IOTable {
    let n = coeffs.len();
    let m = coeffs.gross_output();
    let flows = DMatrix::from_fn(n, n, |i, j| coeffs.a()[(i, j)] * m[j]);
    let labor = DVector::from_fn(n, |j, _| coeffs.labor_share()[j] * m[j]);
    let final_demand = coeffs.gdp_share() * coeffs.gdp();
    IOTable::new(industries, flows, final_demand, labor, 0).expect("generated table is well formed")
}

pub fn random_closed_table<R: Rng + ?Sized>(rng: &mut R, n: usize) -> IOTable {
    let coeffs = random_closed_economy(rng, n);
    table_from_coefficients(&coeffs, names(n))
}

/// Random closed table whose industries carry distinct six-digit codes drawn
/// from a small alphabet, so that code prefixes nest into coarser groups.
pub fn random_coded_table<R: Rng + ?Sized>(rng: &mut R, n: usize) -> IOTable {
    let mut codes = std::collections::BTreeSet::new();
    while codes.len() < n {
        let code: String = (0..6).map(|_| char::from(b'1' + rng.random_range(0..3u8))).collect();
        codes.insert(code);
    }
    let industries = codes.into_iter().map(|c| Industry::new("US", c)).collect();
    let coeffs = random_closed_economy(rng, n);
    table_from_coefficients(&coeffs, industries)
}

/// Closed world table over `countries` with `per_country` industries each and
/// a `trade_density` chance of any cross-border input link.
pub fn random_world_table<R: Rng + ?Sized>(
    rng: &mut R,
    countries: usize,
    per_country: usize,
    trade_density: f64,
) -> IOTable {
    let n = countries * per_country;
    let mut a = random_coefficients(rng, n, 0.5);
    for j in 0..n {
        for i in 0..n {
            if i / per_country != j / per_country && rng.random::<f64>() >= trade_density {
                a[(i, j)] = 0.0;
            }
        }
    }
    let theta = random_gdp_share(rng, n);
    let coeffs = with_positive_output(rng, a, theta, 10.0);
    let industries = (0..n)
        .map(|k| Industry::new(format!("C{}", k / per_country), format!("{:02}", k % per_country)))
        .collect();
    table_from_coefficients(&coeffs, industries)
}
