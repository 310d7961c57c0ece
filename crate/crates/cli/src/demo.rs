use leontief_core::transform::{aggregate, open_trade_perturbation, AggregationMap, TradePerturbation};
use leontief_core::{
    build_coefficients, economies, leontief_inverse, output_multipliers, predict_growth, predict_returns,
    CoefficientSystem, DMatrix, DVector,
};

use crate::output::num;
use crate::{DemoCase, Failure};

const TOL: f64 = 1e-12;

struct Checks {
    failed: usize,
}

impl Checks {
    fn check(&mut self, name: &str, got: f64, want: f64) {
        let ok = (got - want).abs() <= TOL * want.abs().max(1.0);
        if !ok {
            self.failed += 1;
        }
        println!("{} {name}: {} (expected {})", if ok { "ok  " } else { "FAIL" }, num(got), num(want));
    }
}

fn l_bar(c: &CoefficientSystem) -> Result<f64, Failure> {
    Ok(c.gdp_share().dot(&output_multipliers(c)?))
}

fn chain(k: &mut Checks) -> Result<(), Failure> {
    println!("-- chain economy, labor share of a = 0.4");
    let c = economies::chain(0.4);
    let l = output_multipliers(&c)?;
    k.check("L_a", l[0], 1.6);
    k.check("L_b", l[1], 1.0);
    k.check("L_bar", l_bar(&c)?, 1.6);
    let g = predict_growth(&c, &DVector::from_element(2, 0.01))?;
    k.check("g / gamma_tilde", g.g / g.gamma_tilde, 1.6);
    Ok(())
}

fn flat(k: &mut Checks) -> Result<(), Failure> {
    println!("-- flat economy");
    let c = economies::flat();
    let l = output_multipliers(&c)?;
    k.check("L_a", l[0], 1.0);
    k.check("L_b", l[1], 1.0);
    k.check("L_bar", l_bar(&c)?, 1.0);
    Ok(())
}

fn fig1(k: &mut Checks) -> Result<(), Failure> {
    let g0 = 0.01;
    let c = economies::two_step();
    let h = leontief_inverse(&c)?;
    let cases = [
        ("i", [0.0, 2.0 * g0], [-2.0 * g0, -2.0 * g0]),
        ("ii", [2.0 * g0, 0.0], [-2.0 * g0, 0.0]),
        ("iii", [g0, g0], [-2.0 * g0, -g0]),
    ];
    for (name, gamma, returns) in cases {
        println!("-- two-step economy, case {name}");
        let gamma = DVector::from_row_slice(&gamma);
        let r = predict_returns(&h, &gamma)?;
        k.check("r_a", r[0], returns[0]);
        k.check("r_b", r[1], returns[1]);
        k.check("g", predict_growth(&c, &gamma)?.g, 2.0 * g0);
    }
    Ok(())
}

fn aggregation(k: &mut Checks) -> Result<(), Failure> {
    println!("-- aggregation of a four-stage chain");
    let c = economies::stage_chain(&[0.6, 0.5, 0.4]);
    let table = economies::table_from_coefficients(&c, c.industries().to_vec());
    let fine = l_bar(&c)?;
    let pairs = AggregationMap::new(vec![0, 0, 1, 1], vec!["ab".into(), "cd".into()])?;
    let merged = AggregationMap::merge_all(table.industries(), "all");
    k.check("L_bar after merging pairs", l_bar(&build_coefficients(&aggregate(&table, &pairs)?)?)?, fine);
    k.check("L_bar after merging all", l_bar(&build_coefficients(&aggregate(&table, &merged)?)?)?, fine);
    Ok(())
}

fn trade(k: &mut Checks) -> Result<(), Failure> {
    println!("-- two identical chains opened symmetrically");
    let c = economies::stage_chain(&[0.6, 0.5, 0.4]);
    let closed = l_bar(&c)?;
    let eps = TradePerturbation::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.05, 0.05, 0.0]))?;
    let open = open_trade_perturbation(&[c.clone(), c], &eps)?;
    for country in 0..2 {
        k.check(&format!("exact L_bar, country {country}"), open.exact_l_bar[country], closed);
        k.check(&format!("first-order L_bar, country {country}"), open.first_order_l_bar[country], closed);
    }
    Ok(())
}

pub fn run(case: DemoCase) -> Result<(), Failure> {
    let mut k = Checks { failed: 0 };
    let all = case == DemoCase::All;
    if all || case == DemoCase::Chain {
        chain(&mut k)?;
    }
    if all || case == DemoCase::Flat {
        flat(&mut k)?;
    }
    if all || case == DemoCase::Fig1 {
        fig1(&mut k)?;
    }
    if all || case == DemoCase::Aggregation {
        aggregation(&mut k)?;
    }
    if all || case == DemoCase::Trade {
        trade(&mut k)?;
    }
    match k.failed {
        0 => Ok(()),
        n => Err(Failure::Run(format!("{n} demo checks failed"))),
    }
}
