//! Synthetic-economy simulator. Physical coefficients decay at prescribed
//! improvement rates, prices are re-solved from `p = Phi p + ell w` after
//! every step, and the trajectory carries the model's instantaneous
//! predictions next to the realized paths.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::coefficients::{to_physical, CoefficientSystem, PhysicalSystem};
use crate::error::{Error, Result};
use crate::iotable::Industry;
use crate::linops::{spectral_radius, LeontiefSolver};

/// Bound on the equilibrium and wage residuals after a step.
pub const EQUILIBRIUM_TOL: f64 = 1e-10;
const ROW_SUM_TOL: f64 = 1e-12;

/// Which nominal quantity stays fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Numeraire {
    /// `w = 1` throughout; nominal returns are real returns.
    #[default]
    Wage,
    /// The wage moves so that the GDP-share-weighted log price level stays
    /// at its initial value.
    Gdp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EconomyState {
    pub industries: Vec<Industry>,
    pub physical: PhysicalSystem,
    pub t: f64,
    pub numeraire: Numeraire,
    /// Units of labor supplied; grows at the schedule's labor growth rate.
    pub labor_supply: f64,
    price_level: f64,
}

impl EconomyState {
    pub fn new(industries: Vec<Industry>, physical: PhysicalSystem, numeraire: Numeraire) -> Result<Self> {
        let n = industries.len();
        if physical.prices.len() != n || physical.phi.nrows() != n || physical.phi.ncols() != n {
            return Err(Error::DimensionMismatch { expected: n, got: physical.prices.len() });
        }
        if physical.price_residual() > EQUILIBRIUM_TOL || physical.wage_residual() > EQUILIBRIUM_TOL {
            return Err(Error::Domain("initial state is not an equilibrium".into()));
        }
        let (_, _, theta) = physical.expenditure_shares();
        let price_level = theta.dot(&physical.prices.map(f64::ln));
        Ok(Self { industries, physical, t: 0.0, numeraire, labor_supply: 1.0, price_level })
    }

    /// Unit prices and wage, physical coefficients read off the shares.
    pub fn from_coefficients(coeffs: &CoefficientSystem, numeraire: Numeraire) -> Result<Self> {
        let physical = to_physical(coeffs, &DVector::from_element(coeffs.len(), 1.0), 1.0)?;
        Self::new(coeffs.industries().to_vec(), physical, numeraire)
    }

    pub fn len(&self) -> usize {
        self.industries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.industries.is_empty()
    }

    /// Current expenditure-share view as a closed economy with nominal GDP
    /// `w * labor_supply`.
    pub fn coefficients(&self) -> Result<CoefficientSystem> {
        let (a, _, theta) = self.physical.expenditure_shares();
        let theta = &theta / theta.sum();
        CoefficientSystem::from_shares(self.industries.clone(), a, theta, self.physical.wage * self.labor_supply)
    }

    /// `|w L - p . c L| / (w L)`: household income against spending.
    pub fn conservation_gap(&self) -> f64 {
        self.physical.wage_residual()
    }
}

/// Piecewise-constant improvement rates. Row `i` holds `gamma_ij` for each
/// input `j` followed by `gamma_iL` for labor.
#[derive(Debug, Clone, PartialEq)]
pub struct ShockSchedule {
    segments: Vec<(f64, DMatrix<f64>)>,
    labor_growth: f64,
    consumption_drift: Option<DVector<f64>>,
}

impl ShockSchedule {
    /// `segments` are `(start time, rates)` pairs; the first must start at 0.
    pub fn piecewise(mut segments: Vec<(f64, DMatrix<f64>)>) -> Result<Self> {
        segments.sort_by(|a, b| a.0.total_cmp(&b.0));
        let Some((first, rates)) = segments.first() else {
            return Err(Error::Validation("schedule has no segments".into()));
        };
        if *first != 0.0 {
            return Err(Error::Validation("first schedule segment must start at t = 0".into()));
        }
        let n = rates.nrows();
        for (t, r) in &segments {
            if !t.is_finite() || r.nrows() != n || r.ncols() != n + 1 {
                return Err(Error::DimensionMismatch { expected: n, got: r.nrows() });
            }
            if r.iter().any(|x| !x.is_finite()) {
                return Err(Error::Domain("improvement rates must be finite".into()));
            }
        }
        Ok(Self { segments, labor_growth: 0.0, consumption_drift: None })
    }

    pub fn constant(rates: DMatrix<f64>) -> Result<Self> {
        Self::piecewise(vec![(0.0, rates)])
    }

    pub fn zero(n: usize) -> Self {
        Self::constant(DMatrix::zeros(n, n + 1)).expect("zero schedule is valid")
    }

    /// Every coefficient of every industry improves at `gamma0`.
    pub fn uniform(n: usize, gamma0: f64) -> Result<Self> {
        Self::constant(DMatrix::from_element(n, n + 1, gamma0))
    }

    /// All of industry `i`'s coefficients improve at `gamma[i]`.
    pub fn per_industry(gamma: &DVector<f64>) -> Result<Self> {
        let n = gamma.len();
        Self::constant(DMatrix::from_fn(n, n + 1, |i, _| gamma[i]))
    }

    pub fn with_labor_growth(mut self, h: f64) -> Self {
        self.labor_growth = h;
        self
    }

    /// Log-rate at which each household expenditure share drifts before
    /// renormalization. Shares are fixed without it.
    pub fn with_consumption_drift(mut self, drift: DVector<f64>) -> Result<Self> {
        if drift.len() != self.len() {
            return Err(Error::DimensionMismatch { expected: self.len(), got: drift.len() });
        }
        self.consumption_drift = Some(drift);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.segments[0].1.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn labor_growth(&self) -> f64 {
        self.labor_growth
    }

    pub fn rates_at(&self, t: f64) -> &DMatrix<f64> {
        let k = self.segments.partition_point(|(start, _)| *start <= t);
        &self.segments[k.saturating_sub(1)].1
    }

    /// Expenditure-weighted improvement rate of each industry,
    /// `gamma_i = sum_j a_ji gamma_ij + labor_i gamma_iL`.
    pub fn industry_rates(&self, state: &EconomyState) -> DVector<f64> {
        let rates = self.rates_at(state.t);
        let (a, labor, _) = state.physical.expenditure_shares();
        let n = state.len();
        DVector::from_fn(n, |i, _| (0..n).map(|j| a[(j, i)] * rates[(i, j)]).sum::<f64>() + labor[i] * rates[(i, n)])
    }
}

fn solve_prices(phi: &DMatrix<f64>, labor: &DVector<f64>, industries: &[Industry]) -> Result<DVector<f64>> {
    let n = phi.nrows();
    let m = DMatrix::identity(n, n) - phi;
    let singular = || Error::Singular { spectral_radius: spectral_radius(phi), component: Vec::new() };
    let lu = m.clone().lu();
    let mut p = lu.solve(labor).ok_or_else(singular)?;
    let resid = labor - &m * &p;
    if let Some(dp) = lu.solve(&resid) {
        p += dp;
    }
    if let Some(i) = p.iter().position(|&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Singular {
            spectral_radius: spectral_radius(phi),
            component: vec![industries[i].label()],
        });
    }
    Ok(p)
}

/// Advances one step of length `dt`: exact exponential decay of `Phi` and
/// `ell` at the rates in force at the start of the step, then new prices.
pub fn step(state: &EconomyState, schedule: &ShockSchedule, dt: f64) -> Result<EconomyState> {
    if !(dt > 0.0) || !dt.is_finite() {
        return Err(Error::Domain("dt must be positive".into()));
    }
    let n = state.len();
    if schedule.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: schedule.len() });
    }
    let rates = schedule.rates_at(state.t);
    let old = &state.physical;
    let phi = DMatrix::from_fn(n, n, |i, j| old.phi[(i, j)] * (-rates[(i, j)] * dt).exp());
    let labor_coeff = DVector::from_fn(n, |i, _| old.labor_coeff[i] * (-rates[(i, n)] * dt).exp());

    let (_, _, mut theta) = old.expenditure_shares();
    if let Some(drift) = &schedule.consumption_drift {
        theta.zip_apply(drift, |t, d| *t *= (d * dt).exp());
    }
    theta /= theta.sum();

    let unit = solve_prices(&phi, &labor_coeff, &state.industries)?;
    let wage = match state.numeraire {
        Numeraire::Wage => old.wage,
        Numeraire::Gdp => (state.price_level - theta.dot(&unit.map(f64::ln))).exp(),
    };
    let prices = unit * wage;
    let consumption_per_labor = DVector::from_fn(n, |i, _| theta[i] * wage / prices[i]);
    let physical = PhysicalSystem { phi, labor_coeff, consumption_per_labor, prices, wage };

    let residual = physical.price_residual().max(physical.wage_residual());
    if residual > EQUILIBRIUM_TOL {
        return Err(Error::Identity(format!("equilibrium residual {residual:.3e} after step at t = {}", state.t)));
    }
    Ok(EconomyState {
        industries: state.industries.clone(),
        physical,
        t: state.t + dt,
        numeraire: state.numeraire,
        labor_supply: state.labor_supply * (schedule.labor_growth * dt).exp(),
        price_level: state.price_level,
    })
}

/// One sample of a trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub prices: DVector<f64>,
    pub wage: f64,
    pub labor_supply: f64,
    /// Cumulative Divisia growth of real GDP per unit labor since `t = 0`.
    pub log_real_gdp: f64,
    pub l_bar: f64,
    pub gamma_tilde: f64,
    /// Predicted growth of real GDP per unit labor, `gamma_tilde * L_bar`.
    pub growth_pred: f64,
    /// Predicted real returns `-H^T gamma`.
    pub returns_pred: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub industries: Vec<Industry>,
    pub dt: f64,
    pub points: Vec<TrajectoryPoint>,
    /// `int gamma_tilde L_bar dt` by the trapezoid rule.
    pub predicted_log_gdp: f64,
    /// Largest gap between realized per-step growth and the prediction at
    /// the start of the step.
    pub max_step_growth_gap: f64,
    /// Largest gap between realized real log-price changes and the left
    /// Riemann sum of predicted returns.
    pub max_price_path_deviation: f64,
    pub max_equilibrium_residual: f64,
    pub max_conservation_gap: f64,
}

impl Trajectory {
    pub fn last(&self) -> &TrajectoryPoint {
        self.points.last().expect("trajectory has an initial point")
    }

    /// Realized minus predicted cumulative log growth.
    pub fn gdp_gap(&self) -> f64 {
        self.last().log_real_gdp - self.predicted_log_gdp
    }

    /// Long rows `(t, series, value)` for plotting.
    pub fn tidy_rows(&self) -> Vec<(f64, String, f64)> {
        let mut rows = Vec::new();
        for pt in &self.points {
            rows.push((pt.t, "wage".to_string(), pt.wage));
            rows.push((pt.t, "labor_supply".to_string(), pt.labor_supply));
            rows.push((pt.t, "log_real_gdp".to_string(), pt.log_real_gdp));
            rows.push((pt.t, "l_bar".to_string(), pt.l_bar));
            rows.push((pt.t, "gamma_tilde".to_string(), pt.gamma_tilde));
            rows.push((pt.t, "growth_pred".to_string(), pt.growth_pred));
            for (k, ind) in self.industries.iter().enumerate() {
                rows.push((pt.t, format!("price:{ind}"), pt.prices[k]));
                rows.push((pt.t, format!("return_pred:{ind}"), pt.returns_pred[k]));
            }
        }
        rows
    }
}

fn sample(state: &EconomyState, schedule: &ShockSchedule, log_real_gdp: f64) -> Result<TrajectoryPoint> {
    let coeffs = state.coefficients()?;
    let gamma = schedule.industry_rates(state);
    let solver = LeontiefSolver::new(&coeffs)?;
    let ones = DVector::from_element(state.len(), 1.0);
    let l_bar = coeffs.gdp_share().dot(&solver.solve(&ones, true)?);
    let returns_pred = -solver.solve(&gamma, true)?;
    let gamma_tilde = coeffs.output_share().dot(&gamma);
    Ok(TrajectoryPoint {
        t: state.t,
        prices: state.physical.prices.clone(),
        wage: state.physical.wage,
        labor_supply: state.labor_supply,
        log_real_gdp,
        l_bar,
        gamma_tilde,
        growth_pred: gamma_tilde * l_bar,
        returns_pred,
    })
}

/// Integrates `horizon / dt` steps from `initial`.
pub fn run(initial: &EconomyState, schedule: &ShockSchedule, horizon: f64, dt: f64) -> Result<Trajectory> {
    if !(dt > 0.0) || !(horizon >= 0.0) {
        return Err(Error::Domain("horizon must be nonnegative and dt positive".into()));
    }
    let steps = (horizon / dt).round();
    if (steps * dt - horizon).abs() > 1e-9 * horizon.max(1.0) {
        return Err(Error::Domain(format!("horizon {horizon} is not a multiple of dt {dt}")));
    }
    let steps = steps as usize;
    let mut state = initial.clone();
    let mut points = vec![sample(&state, schedule, 0.0)?];
    let mut predicted_log_gdp = 0.0;
    let mut max_step_growth_gap: f64 = 0.0;
    let mut max_price_path_deviation: f64 = 0.0;
    let mut max_equilibrium_residual = state.physical.price_residual();
    let mut max_conservation_gap = state.conservation_gap();
    let real_log_price = |s: &EconomyState| s.physical.prices.map(|p| (p / s.physical.wage).ln());
    let start_real = real_log_price(&state);
    let mut riemann = DVector::zeros(state.len());

    for _ in 0..steps {
        let prev = points.last().expect("nonempty");
        let (_, _, theta) = state.physical.expenditure_shares();
        let next = step(&state, schedule, dt)?;
        let dlog_p = next.physical.prices.zip_map(&state.physical.prices, |a, b| (a / b).ln());
        let dlog_w = (next.physical.wage / state.physical.wage).ln();
        let realized = dlog_w - theta.dot(&dlog_p);
        max_step_growth_gap = max_step_growth_gap.max((realized / dt - prev.growth_pred).abs());
        riemann += &prev.returns_pred * dt;

        let point = sample(&next, schedule, prev.log_real_gdp + realized)?;
        predicted_log_gdp += 0.5 * (prev.growth_pred + point.growth_pred) * dt;
        let deviation = (real_log_price(&next) - &start_real - &riemann).amax();
        max_price_path_deviation = max_price_path_deviation.max(deviation);
        max_equilibrium_residual = max_equilibrium_residual.max(next.physical.price_residual());
        max_conservation_gap = max_conservation_gap.max(next.conservation_gap());
        points.push(point);
        state = next;
    }
    Ok(Trajectory {
        industries: initial.industries.clone(),
        dt,
        points,
        predicted_log_gdp,
        max_step_growth_gap,
        max_price_path_deviation,
        max_equilibrium_residual,
        max_conservation_gap,
    })
}

/// Independent runs of the same economy at several step sizes, in parallel.
pub fn sweep_dt(initial: &EconomyState, schedule: &ShockSchedule, horizon: f64, dts: &[f64]) -> Result<Vec<Trajectory>> {
    dts.par_iter().map(|&dt| run(initial, schedule, horizon, dt)).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct CobbDouglasReport {
    /// Largest `|a_mi(t) - beta_im|` (labor included) over the horizon.
    pub max_share_drift: f64,
    /// `(A^T - I) r` from the simulated log-price change over the horizon.
    pub recovered_rates: DVector<f64>,
    /// Largest gap between simulated log prices and the closed-form
    /// unit-cost solution.
    pub max_price_gap: f64,
    pub trajectory: Trajectory,
}

/// Cobb-Douglas technology `f_i = A_i prod_m X_im^beta_im` with
/// `A_i` growing at `prefactor_rates[i]`. Cost-minimizing firms keep
/// `phi_im = beta_im p_i / p_m`, so each coefficient moves at `r_m - r_i`
/// (labor at `-r_i`). The economy is driven by those coefficient rates and
/// the resulting expenditure shares are compared against `beta`.
pub fn cobb_douglas_check(
    exponents: &DMatrix<f64>,
    prefactor_rates: &DVector<f64>,
    horizon: f64,
    dt: f64,
) -> Result<CobbDouglasReport> {
    let n = exponents.nrows();
    if exponents.ncols() != n + 1 {
        return Err(Error::DimensionMismatch { expected: n + 1, got: exponents.ncols() });
    }
    if prefactor_rates.len() != n {
        return Err(Error::DimensionMismatch { expected: n, got: prefactor_rates.len() });
    }
    if exponents.iter().any(|&b| !(b >= 0.0)) {
        return Err(Error::Domain("exponents must be nonnegative".into()));
    }
    for i in 0..n {
        let s = exponents.row(i).sum();
        if (s - 1.0).abs() > ROW_SUM_TOL {
            return Err(Error::Domain(format!("exponents of industry {i} sum to {s}, not 1")));
        }
    }
    let a = DMatrix::from_fn(n, n, |m, i| exponents[(i, m)]);
    let theta = DVector::from_element(n, 1.0 / n as f64);
    let coeffs = CoefficientSystem::from_shares(crate::economies::names(n), a.clone(), theta, 1.0)?;
    let solver = LeontiefSolver::new(&coeffs)?;
    let r = -solver.solve(prefactor_rates, true)?;
    let rates = DMatrix::from_fn(n, n + 1, |i, m| if m < n { r[m] - r[i] } else { -r[i] });
    let schedule = ShockSchedule::constant(rates)?;

    let initial = EconomyState::from_coefficients(&coeffs, Numeraire::Wage)?;
    let steps = (horizon / dt).round() as usize;
    let mut state = initial.clone();
    let mut max_share_drift: f64 = 0.0;
    let mut max_price_gap: f64 = 0.0;
    for _ in 0..steps {
        state = step(&state, &schedule, dt)?;
        let (shares, labor, _) = state.physical.expenditure_shares();
        for i in 0..n {
            for m in 0..n {
                max_share_drift = max_share_drift.max((shares[(m, i)] - exponents[(i, m)]).abs());
            }
            max_share_drift = max_share_drift.max((labor[i] - exponents[(i, n)]).abs());
        }
        // Unit-cost prices with p(0) = 1 and w = 1: (I - B) log p = -log A(t) + log A(0).
        let log_p = state.physical.prices.map(f64::ln);
        let closed_form = &r * state.t;
        max_price_gap = max_price_gap.max((log_p - closed_form).amax());
    }
    let t = state.t.max(f64::MIN_POSITIVE);
    let realized = state.physical.prices.map(|p| p.ln() / t);
    let recovered_rates = crate::growth::estimate_productivity(&coeffs, &realized)?;
    let trajectory = run(&initial, &schedule, horizon, dt)?;
    Ok(CobbDouglasReport { max_share_drift, recovered_rates, max_price_gap, trajectory })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::economies;

    const G0: f64 = 0.01;

    fn chain_state() -> EconomyState {
        EconomyState::from_coefficients(&economies::chain(0.0), Numeraire::Wage).unwrap()
    }

    #[test]
    fn zero_schedule_is_stationary() {
        let s0 = chain_state();
        let s1 = step(&s0, &ShockSchedule::zero(2), 0.1).unwrap();
        assert_eq!(s1.physical.prices, s0.physical.prices);
        let traj = run(&s0, &ShockSchedule::zero(2), 1.0, 0.25).unwrap();
        assert!(traj.points.iter().all(|p| p.log_real_gdp == 0.0 && p.growth_pred == 0.0));
    }

    #[test]
    fn uniform_chain_prices() {
        let s0 = chain_state();
        let sched = ShockSchedule::uniform(2, G0).unwrap();
        let traj = run(&s0, &sched, 1.0, 1.0 / 64.0).unwrap();
        let last = traj.last();
        assert!((last.prices[0] - (-2.0 * G0).exp()).abs() < 1e-12);
        assert!((last.prices[1] - (-G0).exp()).abs() < 1e-12);
        assert!((last.log_real_gdp - 2.0 * G0).abs() < 1e-12);
        assert!((last.l_bar - 2.0).abs() < 1e-12);
    }

    #[test]
    fn only_a_improves() {
        let mut rates = DMatrix::zeros(2, 3);
        rates[(0, 1)] = 2.0 * G0;
        let traj = run(&chain_state(), &ShockSchedule::constant(rates).unwrap(), 1.0, 1.0 / 32.0).unwrap();
        let last = traj.last();
        assert!((last.prices[0] - (-2.0 * G0).exp()).abs() < 1e-12);
        assert!((last.prices[1] - 1.0).abs() < 1e-14);
        assert!((last.growth_pred - 2.0 * G0).abs() < 1e-12);
    }

    #[test]
    fn flat_growth() {
        let s0 = EconomyState::from_coefficients(&economies::flat(), Numeraire::Wage).unwrap();
        let traj = run(&s0, &ShockSchedule::uniform(2, G0).unwrap(), 1.0, 0.125).unwrap();
        assert!((traj.last().log_real_gdp - G0).abs() < 1e-12);
    }

    #[test]
    fn numeraires_agree_on_real_quantities() {
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(7);
        let coeffs = economies::random_closed_economy(&mut rng, 6);
        let gamma = DVector::from_fn(6, |i, _| 0.005 * i as f64);
        let sched = ShockSchedule::per_industry(&gamma).unwrap();
        let wage = run(&EconomyState::from_coefficients(&coeffs, Numeraire::Wage).unwrap(), &sched, 1.0, 0.1).unwrap();
        let gdp = run(&EconomyState::from_coefficients(&coeffs, Numeraire::Gdp).unwrap(), &sched, 1.0, 0.1).unwrap();
        let (a, b) = (wage.last(), gdp.last());
        let real = |p: &TrajectoryPoint| p.prices.map(|x| (x / p.wage).ln());
        assert!((real(a) - real(b)).amax() < 1e-10);
        assert!((a.log_real_gdp - b.log_real_gdp).abs() < 1e-10);
        assert!(b.wage != 1.0);
        let theta = coeffs.gdp_share();
        assert!(theta.dot(&b.prices.map(f64::ln)).abs() < 1e-10);
    }

    #[test]
    fn schedule_segments() {
        let s = ShockSchedule::piecewise(vec![
            (1.0, DMatrix::from_element(1, 2, 2.0)),
            (0.0, DMatrix::from_element(1, 2, 1.0)),
        ])
        .unwrap();
        assert_eq!(s.rates_at(0.5)[(0, 0)], 1.0);
        assert_eq!(s.rates_at(1.0)[(0, 0)], 2.0);
        assert!(ShockSchedule::piecewise(vec![(0.5, DMatrix::zeros(1, 2))]).is_err());
    }

    #[test]
    fn horizon_must_be_multiple() {
        assert!(run(&chain_state(), &ShockSchedule::zero(2), 1.0, 0.3).is_err());
    }

    #[test]
    fn cobb_douglas_chain() {
        let beta = DMatrix::from_row_slice(2, 3, &[0.0, 0.6, 0.4, 0.0, 0.0, 1.0]);
        let rates = DVector::from_vec(vec![0.01, 0.02]);
        let rep = cobb_douglas_check(&beta, &rates, 2.0, 1.0 / 16.0).unwrap();
        assert!(rep.max_share_drift < 1e-9);
        assert!((&rep.recovered_rates - &rates).amax() < 1e-9);
        assert!(rep.trajectory.last().prices[0] < 0.97);
    }

    #[test]
    fn cobb_douglas_rejects_bad_rows() {
        let beta = DMatrix::from_row_slice(1, 2, &[0.5, 0.4]);
        assert!(matches!(
            cobb_douglas_check(&beta, &DVector::from_vec(vec![0.0]), 1.0, 0.5),
            Err(Error::Domain(_))
        ));
    }
}
