use std::collections::HashMap;

use leontief_core::economies::{self, names};
use leontief_core::iotable::{read_iotable, write_iotable, LoadOptions, NegativePolicy};
use leontief_core::linops::{leontief_inverse, neumann_series_oracle, LeontiefSolver};
use leontief_core::simulate::{run, EconomyState, Numeraire, ShockSchedule};
use leontief_core::stats::{ar1_forecast, bin_means, center_normalize_by_group, ols};
use leontief_core::transform::{aggregate, zero_international_trade, AggregationMap};
use leontief_core::{
    build_coefficients, estimate_productivity, output_multipliers, predict_growth, predict_returns, to_physical,
    CoefficientSystem, DMatrix, DVector, IOTable,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn normal(r: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(r)
}

fn scaled(table: &IOTable, factor: f64) -> IOTable {
    IOTable::new(
        table.industries().to_vec(),
        table.intermediate_flows() * factor,
        table.final_demand() * factor,
        table.labor_payments() * factor,
        table.year(),
    )
    .unwrap()
}

fn to_csv(table: &IOTable) -> Vec<u8> {
    let mut out = Vec::new();
    write_iotable(table, &mut out).unwrap();
    out
}

fn l_bar(coeffs: &CoefficientSystem) -> f64 {
    coeffs.gdp_share().dot(&output_multipliers(coeffs).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn table_round_trip(seed in any::<u64>(), n in 1usize..15, factor in 0.001f64..1000.0) {
        let table = scaled(&economies::random_closed_table(&mut rng(seed), n), factor);
        let text = to_csv(&table);
        let back = read_iotable(text.as_slice(), &LoadOptions::default()).unwrap();
        prop_assert_eq!(back.industries(), table.industries());
        prop_assert_eq!(back.intermediate_flows(), table.intermediate_flows());
        prop_assert_eq!(back.final_demand(), table.final_demand());
        prop_assert_eq!(back.labor_payments(), table.labor_payments());
        prop_assert_eq!(to_csv(&back), text);
    }

    #[test]
    fn clamp_never_increases_flows(seed in any::<u64>(), n in 2usize..8) {
        let mut r = rng(seed);
        let labels: Vec<String> = (0..n).map(|i| format!("i{i}")).collect();
        let mut raw = HashMap::new();
        let mut text = String::from("source,target,value,year\n");
        let mut push = |s: &str, t: &str, v: f64, raw: &mut HashMap<(String, String), f64>| {
            text.push_str(&format!("{s},{t},{v},0\n"));
            raw.insert((s.to_string(), t.to_string()), v);
        };
        for j in 0..n {
            for i in 0..n {
                push(&labels[i], &labels[j], r.random_range(-1.0..2.0), &mut raw);
            }
            push(&labels[j], "FINAL", r.random_range(-0.5..2.0), &mut raw);
            push("LABOR", &labels[j], r.random_range(-0.5..2.0), &mut raw);
        }
        let table = match read_iotable(text.as_bytes(), &LoadOptions { policy: NegativePolicy::Clamp, ..Default::default() }) {
            Ok(t) => t,
            Err(_) => return Ok(()),
        };
        let bound = |s: &str, t: &str| raw.get(&(s.to_string(), t.to_string())).copied().unwrap_or(0.0).max(0.0);
        for (j, buyer) in table.industries().iter().enumerate() {
            let b = buyer.label();
            for (i, seller) in table.industries().iter().enumerate() {
                let v = table.intermediate_flows()[(i, j)];
                prop_assert!(v >= 0.0 && v <= bound(&seller.label(), &b));
            }
            prop_assert!(table.final_demand()[j] >= 0.0 && table.final_demand()[j] <= bound(&b, "FINAL"));
            prop_assert!(table.labor_payments()[j] >= 0.0 && table.labor_payments()[j] <= bound("LABOR", &b));
        }
    }

    #[test]
    fn coefficients_are_scale_invariant(seed in any::<u64>(), n in 1usize..20, factor in 0.001f64..1000.0) {
        let table = economies::random_closed_table(&mut rng(seed), n);
        let a = build_coefficients(&table).unwrap();
        let b = build_coefficients(&scaled(&table, factor)).unwrap();
        prop_assert!((a.a() - b.a()).amax() < 1e-12);
        prop_assert!((a.labor_share() - b.labor_share()).amax() < 1e-12);
        prop_assert!((a.gdp_share() - b.gdp_share()).amax() < 1e-12);
        prop_assert!((a.output_share() - b.output_share()).amax() < 1e-12);
    }

    #[test]
    fn physical_round_trip(seed in any::<u64>(), n in 1usize..15) {
        let mut r = rng(seed);
        let coeffs = economies::random_closed_economy(&mut r, n);
        let prices = DVector::from_fn(n, |_, _| r.random_range(0.2..5.0));
        let wage = r.random_range(0.2..5.0);
        let phys = to_physical(&coeffs, &prices, wage).unwrap();
        let (a, labor, theta) = phys.expenditure_shares();
        prop_assert!((a - coeffs.a()).amax() < 1e-14);
        prop_assert!((labor - coeffs.labor_share()).amax() < 1e-14);
        prop_assert!((theta - coeffs.gdp_share()).amax() < 1e-14);
        // Equilibrium prices and column stochasticity are the same statement.
        prop_assert!(phys.price_residual() < 1e-13);
        prop_assert!(phys.wage_residual() < 1e-13);
    }

    #[test]
    fn three_way_multipliers(seed in any::<u64>(), n in 1usize..=20) {
        let coeffs = economies::random_closed_economy(&mut rng(seed), n);
        let ones = DVector::from_element(n, 1.0);
        let h = leontief_inverse(&coeffs).unwrap();
        let from_h = h.output_multipliers();
        let solved = LeontiefSolver::new(&coeffs).unwrap().solve(&ones, true).unwrap();
        let series = neumann_series_oracle(&coeffs, &ones, true, 1e-14).unwrap();
        prop_assert!((&from_h - &solved).amax() < 1e-8);
        prop_assert!((&solved - &series).amax() < 1e-8);
        prop_assert!((h.h().tr_mul(coeffs.labor_share()) - &ones).amax() < 1e-9);
        prop_assert!((&solved - &ones - coeffs.a().tr_mul(&solved)).amax() < 1e-9);
        let min_labor = coeffs.labor_share().min();
        prop_assert!(solved.max() <= 1.0 / min_labor + 1e-9);
    }

    #[test]
    fn inverse_is_monotone(seed in any::<u64>(), n in 1usize..12, frac in 0.01f64..0.9) {
        let mut r = rng(seed);
        let coeffs = economies::random_closed_economy(&mut r, n);
        let (i, j) = (r.random_range(0..n), r.random_range(0..n));
        let mut a = coeffs.a().clone();
        a[(i, j)] += frac * coeffs.labor_share()[j];
        let bumped = CoefficientSystem::from_shares(names(n), a, coeffs.gdp_share().clone(), coeffs.gdp()).unwrap();
        let before = leontief_inverse(&coeffs).unwrap();
        let after = leontief_inverse(&bumped).unwrap();
        prop_assert!((after.h() - before.h()).min() >= -1e-12);
    }

    #[test]
    fn growth_identities(seed in any::<u64>(), n in 1usize..25) {
        let mut r = rng(seed);
        let coeffs = economies::random_closed_economy(&mut r, n);
        let h = leontief_inverse(&coeffs).unwrap();
        let gamma = DVector::from_fn(n, |_, _| r.random_range(-0.03..0.06));
        let returns = predict_returns(&h, &gamma).unwrap();
        let g = predict_growth(&coeffs, &gamma).unwrap();
        prop_assert!((g.g + coeffs.gdp_share().dot(&returns)).abs() < 1e-10);
        prop_assert!((estimate_productivity(&coeffs, &returns).unwrap() - &gamma).amax() < 1e-12);

        // Redistribute improvement mass keeping gamma_tilde fixed.
        let eta = coeffs.output_share();
        let raw = DVector::from_fn(n, |_, _| r.random_range(-0.02..0.02));
        let shift = &raw - eta * (eta.dot(&raw) / eta.dot(eta));
        let moved = &gamma + &shift;
        let g2 = predict_growth(&coeffs, &moved).unwrap();
        prop_assert!((g.g - g2.g).abs() < 1e-10);
        if n > 1 && shift.amax() > 1e-6 {
            prop_assert!((predict_returns(&h, &moved).unwrap() - &returns).amax() > 1e-12);
        }

        let k = r.random_range(0..n);
        let mut single = DVector::zeros(n);
        single[k] = 0.02;
        let r_single = predict_returns(&h, &single).unwrap();
        for i in 0..n {
            prop_assert!((r_single[i] + 0.02 * h.h()[(k, i)]).abs() < 1e-14);
        }
    }

    #[test]
    fn aggregation_keeps_average_multiplier(seed in any::<u64>(), n in 1usize..25) {
        let mut r = rng(seed);
        let table = economies::random_closed_table(&mut r, n);
        let k = r.random_range(1..=n);
        let mut groups: Vec<usize> = (0..n).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
        groups.shuffle(&mut r);
        let map = AggregationMap::new(groups, (0..k).map(|g| format!("G{g}")).collect()).unwrap();
        let fine = l_bar(&build_coefficients(&table).unwrap());
        let coarse = l_bar(&build_coefficients(&aggregate(&table, &map).unwrap()).unwrap());
        prop_assert!((fine - coarse).abs() < 1e-9);
    }

    #[test]
    fn trade_closure_is_block_diagonal(seed in any::<u64>(), countries in 2usize..4, per in 1usize..5) {
        let table = economies::random_world_table(&mut rng(seed), countries, per, 0.5);
        let closed = zero_international_trade(&table).unwrap();
        let coeffs = build_coefficients(&closed).unwrap();
        let inds = coeffs.industries();
        for i in 0..inds.len() {
            for j in 0..inds.len() {
                if inds[i].country != inds[j].country {
                    prop_assert_eq!(coeffs.a()[(i, j)], 0.0);
                }
            }
        }
        let l = output_multipliers(&coeffs).unwrap();
        // Countries without final demand have no average to report.
        for theta in coeffs.countries().iter().filter_map(|c| coeffs.country_gdp_share(c).ok()) {
            let avg = theta.dot(&l);
            prop_assert!(avg.is_finite() && avg >= 1.0 - 1e-12);
        }
    }

    #[test]
    fn ols_residuals_are_orthogonal(seed in any::<u64>(), n in 6usize..80, extra in 0usize..3) {
        let mut r = rng(seed);
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-5.0..5.0)).collect();
        let covs = DMatrix::from_fn(n, extra, |_, _| r.random_range(-1.0..1.0));
        let y: Vec<f64> = (0..n).map(|i| 0.3 * x[i] + normal(&mut r)).collect();
        let fit = ols(&x, &y, if extra > 0 { Some(&covs) } else { None }).unwrap();
        let e = DVector::from_vec(fit.residuals.clone());
        prop_assert!(e.sum().abs() < 1e-10);
        prop_assert!(DVector::from_vec(x.clone()).dot(&e).abs() < 1e-10);
        for c in 0..extra {
            prop_assert!(covs.column(c).dot(&e).abs() < 1e-10);
        }
    }

    #[test]
    fn bins_ignore_input_order(seed in any::<u64>(), n in 1usize..200, size in 2usize..50) {
        let mut r = rng(seed);
        let mut pts: Vec<(f64, f64)> = (0..n).map(|_| (r.random_range(0.0..3.0), r.random_range(-1.0..1.0))).collect();
        let (x, y): (Vec<f64>, Vec<f64>) = pts.iter().copied().unzip();
        let before = bin_means(&x, &y, size).unwrap();
        pts.shuffle(&mut r);
        let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
        prop_assert_eq!(before, bin_means(&x, &y, size).unwrap());
    }

    #[test]
    fn normalization_idempotent_and_affine_invariant(seed in any::<u64>(), n in 2usize..60) {
        let mut r = rng(seed);
        let groups: Vec<String> = (0..n).map(|_| format!("g{}", r.random_range(0..4))).collect();
        let values: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let once = center_normalize_by_group(&values, &groups).unwrap();
        let kept: Vec<f64> = once.values.iter().map(|v| v.unwrap_or(0.0)).collect();
        let twice = center_normalize_by_group(&kept, &groups).unwrap();
        let scale: HashMap<&String, (f64, f64)> =
            groups.iter().map(|g| (g, (r.random_range(0.1..10.0), r.random_range(-5.0..5.0)))).collect();
        let moved: Vec<f64> = values.iter().zip(&groups).map(|(v, g)| scale[g].0 * v + scale[g].1).collect();
        let affine = center_normalize_by_group(&moved, &groups).unwrap();
        for i in 0..n {
            if let Some(v) = once.values[i] {
                prop_assert!((twice.values[i].unwrap() - v).abs() < 1e-12);
                prop_assert!((affine.values[i].unwrap() - v).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn ar1_covariate_vanishes_when_unrelated() {
    let mut r = rng(11);
    let n = 400;
    let l = DVector::from_fn(n, |_, _| r.random_range(1.0..4.0));
    let g1 = DVector::from_fn(n, |_, _| 0.01 + 0.01 * normal(&mut r));
    let g2 = DVector::from_fn(n, |i, _| 0.005 + 0.5 * g1[i] + 0.005 * normal(&mut r));
    let with = ar1_forecast(&g1, &g2, Some(&l)).unwrap();
    let plain = ar1_forecast(&g1, &g2, None).unwrap();
    let c_se = with.fit.std_errors[2];
    assert!(with.c_hat.unwrap().abs() <= 2.0 * c_se);
    assert!((with.b_hat - plain.b_hat).abs() <= 2.0 * plain.fit.slope_stderr());
}

#[test]
fn uniform_rates_track_path_averaged_multipliers() {
    let coeffs = economies::random_closed_economy(&mut rng(12), 5);
    let state = EconomyState::from_coefficients(&coeffs, Numeraire::Wage).unwrap();
    let g0 = 0.03;
    let traj = run(&state, &ShockSchedule::uniform(5, g0).unwrap(), 2.0, 1.0 / 128.0).unwrap();
    let dt = traj.dt;
    let mut integral = DVector::zeros(5);
    for pair in traj.points.windows(2) {
        integral += (&pair[0].returns_pred + &pair[1].returns_pred) * (0.5 * dt);
    }
    let realized = traj.last().prices.map(f64::ln);
    assert!((realized - integral).amax() < 1e-6);
    // Uniform rates make every gamma_i equal, so predicted returns are -g0 L.
    let l0 = output_multipliers(&coeffs).unwrap();
    assert!((&traj.points[0].returns_pred + l0 * g0).amax() < 1e-12);
    assert!(traj.max_conservation_gap < 1e-10);
    assert!(traj.max_equilibrium_residual < 1e-10);
}

#[test]
fn price_paths_converge_at_first_order() {
    for seed in 20..25 {
        let mut r = rng(seed);
        let coeffs = economies::random_closed_economy(&mut r, 4);
        let rates = DMatrix::from_fn(4, 5, |_, _| r.random_range(0.0..0.08));
        let sched = ShockSchedule::constant(rates).unwrap();
        let state = EconomyState::from_coefficients(&coeffs, Numeraire::Gdp).unwrap();
        let devs: Vec<f64> = [1.0 / 32.0, 1.0 / 64.0, 1.0 / 128.0]
            .iter()
            .map(|&dt| run(&state, &sched, 1.0, dt).unwrap().max_price_path_deviation)
            .collect();
        for w in devs.windows(2) {
            let ratio = w[0] / w[1];
            assert!((1.6..=2.4).contains(&ratio), "seed {seed}: ratio {ratio}");
        }
    }
}
