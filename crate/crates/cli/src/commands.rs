use std::path::Path;

use leontief_core::growth::{decompose_returns, load_productivity, predict_covariances, ProductivitySeries};
use leontief_core::iotable::{HouseholdPayments, NegativePolicy, Schema};
use leontief_core::linops::{leontief_inverse, neumann_series_oracle, random_walk_path_length};
use leontief_core::multipliers::country_averages;
use leontief_core::simulate::{run, EconomyState, Numeraire, ShockSchedule};
use leontief_core::stats::{bin_means, center_normalize_by_group, ols};
use leontief_core::transform::{
    aggregate, convergence_order, open_trade_perturbation, zero_international_trade, AggregationMap, TradePerturbation,
};
use leontief_core::{
    build_coefficients, economies, load_iotable, output_multipliers, predict_growth, predict_returns, write_iotable,
    CoefficientSystem, DMatrix, DVector, IOTable, LoadOptions,
};

use crate::output::{num, open, Table};
use crate::{Command, EconomyKind, Failure, Household, Method, NumeraireArg, Policy, PredictKind, TableArgs};

type Outcome = Result<(), Failure>;

pub fn dispatch(command: &Command, out: Option<&Path>) -> Outcome {
    match command {
        Command::Coeffs { table } => coeffs(table, out),
        Command::Multipliers { table, method, walks, seed, tol, by_country, emit_plot_data } => {
            multipliers(table, *method, *walks, *seed, *tol, *by_country, emit_plot_data.as_deref(), out)
        }
        Command::Predict { kind, table, gamma, full } => predict(*kind, table, gamma, *full, out),
        Command::Covariance { table, gamma, full } => covariance(table, gamma, *full, out),
        Command::Aggregate { table, digits, map } => aggregate_cmd(table, *digits, map.as_deref(), out),
        Command::CloseTrade { table } => close_trade(table, out),
        Command::Perturb { tables, eps } => perturb(tables, eps, out),
        Command::Simulate { economy, table, labor_share_a, gamma, years, dt, numeraire } => {
            simulate(*economy, table.as_deref(), *labor_share_a, gamma, *years, *dt, *numeraire, out)
        }
        Command::Regress { input, x, y, covariate } => regress(input, x, y, covariate, out),
        Command::Bin { input, x, y, size } => bin(input, x, y, *size, out),
        Command::Normalize { input, value, group } => normalize(input, value, group, out),
        Command::Demo { case } => crate::demo::run(*case),
    }
}

fn load(args: &TableArgs) -> Result<IOTable, Failure> {
    let options = LoadOptions {
        policy: match args.policy {
            Policy::Reject => NegativePolicy::Reject,
            Policy::Clamp => NegativePolicy::Clamp,
            Policy::Net => NegativePolicy::Net,
        },
        strict_balance: args.strict_balance,
        household: match args.household {
            Household::ValueAdded => HouseholdPayments::ValueAdded,
            Household::Labor => HouseholdPayments::LaborCompensation,
        },
        labor_fraction: args.labor_fraction,
        schema: if args.matrix { Schema::Matrix } else { Schema::Long },
        year: args.year,
        ..LoadOptions::default()
    };
    let table = load_iotable(&args.table, &options)?;
    let report = table.report();
    if !report.adjustments.is_empty() {
        eprintln!("note: {} negative entries adjusted", report.adjustments.len());
    }
    if !report.dropped.is_empty() {
        eprintln!("note: dropped zero-expenditure industries: {}", report.dropped.join(", "));
    }
    Ok(table)
}

fn load_coeffs(args: &TableArgs) -> Result<CoefficientSystem, Failure> {
    Ok(build_coefficients(&load(args)?)?)
}

fn labels(coeffs: &CoefficientSystem) -> Vec<String> {
    coeffs.industries().iter().map(|i| i.label()).collect()
}

fn coeffs(args: &TableArgs, out: Option<&Path>) -> Outcome {
    let c = load_coeffs(args)?;
    let names = labels(&c);
    let mut t = Table::new(out, None, &["quantity", "row", "col", "value"])?;
    for (j, buyer) in names.iter().enumerate() {
        for (i, seller) in names.iter().enumerate() {
            t.row(["A", seller, buyer, &num(c.a()[(i, j)])])?;
        }
    }
    let vectors = [
        ("labor_share", c.labor_share()),
        ("gdp_share", c.gdp_share()),
        ("output_share", c.output_share()),
    ];
    for (name, v) in vectors {
        for (i, ind) in names.iter().enumerate() {
            t.row([name, ind, "", &num(v[i])])?;
        }
    }
    t.finish()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn multipliers(
    args: &TableArgs,
    method: Method,
    walks: usize,
    seed: u64,
    tol: f64,
    by_country: bool,
    plot: Option<&Path>,
    out: Option<&Path>,
) -> Outcome {
    if !(tol > 0.0) {
        return Err(Failure::Usage("--tol must be positive".into()));
    }
    let c = load_coeffs(args)?;
    let n = c.len();
    let names = labels(&c);
    let mut stderr = None;
    let l = match method {
        Method::Solve => output_multipliers(&c)?,
        Method::Series => neumann_series_oracle(&c, &DVector::from_element(n, 1.0), true, tol)?,
        Method::Walk => {
            let mut mean = DVector::zeros(n);
            let mut se = DVector::zeros(n);
            for i in 0..n {
                let est = random_walk_path_length(&c, i, walks, seed.wrapping_add(i as u64))?;
                mean[i] = est.mean;
                se[i] = est.stderr;
            }
            stderr = Some(se);
            mean
        }
    };
    let mut t = Table::new(out, None, &["key", "series", "value"])?;
    for (i, name) in names.iter().enumerate() {
        t.row([name.as_str(), "L", &num(l[i])])?;
        if let Some(se) = &stderr {
            t.row([name.as_str(), "stderr", &num(se[i])])?;
        }
    }
    t.row(["ALL", "l_bar", &num(c.gdp_share().dot(&l))])?;
    t.row(["ALL", "gross_over_net", &num(c.gross_output_total() / c.gdp())])?;
    if by_country {
        for (country, avg) in country_averages(&c, &l)? {
            t.row([country.as_str(), "l_bar", &num(avg)])?;
        }
    }
    t.finish()?;
    if let Some(path) = plot {
        let mut p = Table::new(Some(path), None, &["label", "L", "gross_output"])?;
        for (i, name) in names.iter().enumerate() {
            p.row([name.as_str(), &num(l[i]), &num(c.gross_output()[i])])?;
        }
        p.finish()?;
    }
    Ok(())
}

fn rates(c: &CoefficientSystem, path: &Path) -> Result<ProductivitySeries, Failure> {
    Ok(load_productivity(path, c.industries())?)
}

fn covariance_of(series: &ProductivitySeries, full: bool) -> Result<leontief_core::ImprovementCovariance, Failure> {
    if series.periods() < 2 {
        return Err(Failure::Run("covariance needs at least two periods of rates".into()));
    }
    Ok(series.covariance(!full)?)
}

fn predict(kind: PredictKind, args: &TableArgs, gamma: &Path, full: bool, out: Option<&Path>) -> Outcome {
    let c = load_coeffs(args)?;
    let names = labels(&c);
    let series = rates(&c, gamma)?;
    match kind {
        PredictKind::Returns => {
            let h = leontief_inverse(&c)?;
            let mut t = Table::new(out, None, &["period", "industry", "series", "value"])?;
            for p in 0..series.periods() {
                let g = series.period(p);
                let r = predict_returns(&h, &g)?;
                let (direct, inherited) = decompose_returns(&c, &r, &g)?;
                let period = p.to_string();
                for (i, name) in names.iter().enumerate() {
                    t.row([period.as_str(), name, "r_pred", &num(r[i])])?;
                    t.row([period.as_str(), name, "direct", &num(direct[i])])?;
                    t.row([period.as_str(), name, "inherited", &num(inherited[i])])?;
                }
            }
            t.finish()?;
        }
        PredictKind::Growth => {
            let mut t = Table::new(out, None, &["period", "series", "value"])?;
            for p in 0..series.periods() {
                let g = predict_growth(&c, &series.period(p))?;
                let period = p.to_string();
                for (name, v) in [
                    ("g", g.g),
                    ("gamma_tilde", g.gamma_tilde),
                    ("l_bar", g.l_bar),
                    ("via_leontief", g.via_leontief),
                    ("via_domar", g.via_domar),
                ] {
                    t.row([period.as_str(), name, &num(v)])?;
                }
            }
            t.finish()?;
        }
        PredictKind::Covariance => {
            let h = leontief_inverse(&c)?;
            let pred = predict_covariances(&h, &covariance_of(&series, full)?)?;
            let mut t = Table::new(out, None, &["row", "col", "value"])?;
            for (i, a) in names.iter().enumerate() {
                for (j, b) in names.iter().enumerate() {
                    t.row([a, b, &num(pred.r_pred[(i, j)])])?;
                }
            }
            t.finish()?;
        }
    }
    Ok(())
}

fn covariance(args: &TableArgs, gamma: &Path, full: bool, out: Option<&Path>) -> Outcome {
    let c = load_coeffs(args)?;
    let series = rates(&c, gamma)?;
    let g = covariance_of(&series, full)?;
    let pred = predict_covariances(&leontief_inverse(&c)?, &g)?;
    let mean = series.mean();
    let g_diag = g.diagonal();
    let mut t = Table::new(
        out,
        Some(&format!("n={}, periods={}, full={full}", c.len(), series.periods())),
        &["industry", "gamma_mean", "gamma_variance", "predicted_return_variance"],
    )?;
    for (i, name) in labels(&c).iter().enumerate() {
        t.row([name.as_str(), &num(mean[i]), &num(g_diag[i]), &num(pred.r_pred[(i, i)])])?;
    }
    t.finish()?;
    Ok(())
}

fn average_multiplier(table: &IOTable) -> Result<f64, Failure> {
    let c = build_coefficients(table)?;
    Ok(c.gdp_share().dot(&output_multipliers(&c)?))
}

fn write_table(table: &IOTable, out: Option<&Path>) -> Outcome {
    let mut w = open(out)?;
    write_iotable(table, &mut w)?;
    w.flush()?;
    Ok(())
}

fn aggregate_cmd(args: &TableArgs, digits: Option<usize>, map: Option<&Path>, out: Option<&Path>) -> Outcome {
    let table = load(args)?;
    let map = match (digits, map) {
        (Some(d), None) => AggregationMap::by_prefix(table.industries(), d),
        (None, Some(path)) => AggregationMap::load(path, table.industries())?,
        _ => return Err(Failure::Usage("give exactly one of --digits or --map".into())),
    };
    let coarse = aggregate(&table, &map)?;
    eprintln!(
        "industries {} -> {}; L_bar {} -> {}",
        table.len(),
        coarse.len(),
        num(average_multiplier(&table)?),
        num(average_multiplier(&coarse)?)
    );
    write_table(&coarse, out)
}

fn close_trade(args: &TableArgs, out: Option<&Path>) -> Outcome {
    let table = load(args)?;
    let closed = zero_international_trade(&table)?;
    let before = build_coefficients(&table)?;
    let after = build_coefficients(&closed)?;
    let l_before = output_multipliers(&before)?;
    let l_after = output_multipliers(&after)?;
    for country in before.countries() {
        if let (Ok(tb), Ok(ta)) = (before.country_gdp_share(&country), after.country_gdp_share(&country)) {
            let name = if country.is_empty() { "(no country)" } else { country.as_str() };
            eprintln!("{name}: L_bar {} -> {}", num(tb.dot(&l_before)), num(ta.dot(&l_after)));
        }
    }
    write_table(&closed, out)
}

fn perturb(tables: &[std::path::PathBuf], eps: &[f64], out: Option<&Path>) -> Outcome {
    let countries = tables
        .iter()
        .map(|p| Ok(build_coefficients(&load_iotable(p, &LoadOptions::default())?)?))
        .collect::<Result<Vec<_>, Failure>>()?;
    let k = countries.len();
    let direction = TradePerturbation::new(DMatrix::from_fn(k, k, |b, c| if b == c { 0.0 } else { 1.0 / k as f64 }))?;
    let mut rows = Vec::new();
    let mut points = Vec::new();
    for &e in eps {
        // Direction columns sum to (k-1)/k; rescale so each country imports `e` in total.
        let open = open_trade_perturbation(&countries, &direction.scaled(e * k as f64 / (k - 1) as f64)?)?;
        points.push(leontief_core::transform::SweepPoint { scale: e, max_error: open.max_first_order_error() });
        rows.push((e, open));
    }
    let order = if points.len() >= 3 { convergence_order(&points).ok() } else { None };
    let comment = format!("n={}, countries={k}, order={}", countries[0].len(), order.map(num).unwrap_or_else(|| "nan".into()));
    let mut t = Table::new(out, Some(&comment), &["eps", "country", "closed_l_bar", "first_order_l_bar", "exact_l_bar"])?;
    for (e, open) in rows {
        for c in 0..k {
            let name = tables[c].file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| c.to_string());
            t.row([
                num(e),
                name,
                num(open.closed_l_bar[c]),
                num(open.first_order_l_bar[c]),
                num(open.exact_l_bar[c]),
            ])?;
        }
    }
    t.finish()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn simulate(
    economy: EconomyKind,
    table: Option<&Path>,
    labor_share_a: f64,
    gamma: &str,
    years: f64,
    dt: f64,
    numeraire: NumeraireArg,
    out: Option<&Path>,
) -> Outcome {
    let coeffs = match economy {
        EconomyKind::Chain => {
            if !(0.0..=1.0).contains(&labor_share_a) {
                return Err(Failure::Usage("--labor-share-a must lie in [0, 1]".into()));
            }
            economies::chain(labor_share_a)
        }
        EconomyKind::Flat => economies::flat(),
        EconomyKind::File => {
            let path = table.ok_or_else(|| Failure::Usage("--economy file needs --table".into()))?;
            build_coefficients(&load_iotable(path, &LoadOptions::default())?)?
        }
    };
    let schedule = match gamma.parse::<f64>() {
        Ok(g) => ShockSchedule::uniform(coeffs.len(), g)?,
        Err(_) => ShockSchedule::per_industry(&load_productivity(gamma, coeffs.industries())?.period(0))?,
    };
    let numeraire = match numeraire {
        NumeraireArg::Wage => Numeraire::Wage,
        NumeraireArg::Gdp => Numeraire::Gdp,
    };
    let state = EconomyState::from_coefficients(&coeffs, numeraire)?;
    let traj = run(&state, &schedule, years, dt)?;
    let mut t = Table::new(out, None, &["t", "series", "value"])?;
    for (time, series, value) in traj.tidy_rows() {
        t.row([num(time), series, num(value)])?;
    }
    t.finish()?;
    eprintln!(
        "log real GDP {} vs predicted {}; max step gap {}",
        num(traj.last().log_real_gdp),
        num(traj.predicted_log_gdp),
        num(traj.max_step_growth_gap)
    );
    Ok(())
}

/// Reads named numeric columns (and optionally one text column) from a CSV.
fn read_columns(path: &Path, numeric: &[&str], text: Option<&str>) -> Result<(Vec<Vec<f64>>, Vec<String>, Vec<csv::StringRecord>, csv::StringRecord), Failure> {
    let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).trim(csv::Trim::All).from_path(path)?;
    let header = rdr.headers()?.clone();
    let find = |name: &str| {
        header.iter().position(|h| h == name).ok_or_else(|| Failure::Usage(format!("no column `{name}` in {}", path.display())))
    };
    let idx = numeric.iter().map(|n| find(n)).collect::<Result<Vec<_>, _>>()?;
    let text_idx = text.map(find).transpose()?;
    let mut cols = vec![Vec::new(); numeric.len()];
    let mut labels = Vec::new();
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec?;
        for (k, &i) in idx.iter().enumerate() {
            let v: f64 = rec[i].parse().map_err(|_| {
                Failure::Run(format!("line {}: `{}` is not a number", rec.position().map_or(0, |p| p.line()), &rec[i]))
            })?;
            cols[k].push(v);
        }
        if let Some(i) = text_idx {
            labels.push(rec[i].to_string());
        }
        records.push(rec);
    }
    Ok((cols, labels, records, header))
}

fn regress(input: &Path, x: &str, y: &str, covariates: &[String], out: Option<&Path>) -> Outcome {
    let mut names = vec![x, y];
    names.extend(covariates.iter().map(String::as_str));
    let (cols, _, _, _) = read_columns(input, &names, None)?;
    let n = cols[0].len();
    let extra = (!covariates.is_empty()).then(|| DMatrix::from_fn(n, covariates.len(), |i, k| cols[2 + k][i]));
    let fit = ols(&cols[0], &cols[1], extra.as_ref())?;
    let comment = format!(
        "n={}, slope={}, p={}, r2={}",
        fit.n,
        num(fit.slope),
        num(fit.p_value_slope),
        num(fit.r_squared)
    );
    let mut t = Table::new(out, Some(&comment), &["term", "estimate", "std_error", "p_value"])?;
    let mut terms = vec!["intercept".to_string(), x.to_string()];
    terms.extend(covariates.iter().cloned());
    for (k, term) in terms.iter().enumerate() {
        t.row([term.as_str(), &num(fit.coefficients[k]), &num(fit.std_errors[k]), &num(fit.p_values[k])])?;
    }
    t.finish()?;
    Ok(())
}

fn bin(input: &Path, x: &str, y: &str, size: usize, out: Option<&Path>) -> Outcome {
    let (cols, _, _, _) = read_columns(input, &[x, y], None)?;
    let bins = bin_means(&cols[0], &cols[1], size)?;
    let fit = ols(&cols[0], &cols[1], None)?;
    let comment = format!("n={}, slope={}, p={}, bins={}", fit.n, num(fit.slope), num(fit.p_value_slope), bins.len());
    let mut t = Table::new(out, Some(&comment), &["bin", "center", "mean", "stderr", "n", "band_low", "band_high"])?;
    for (k, b) in bins.iter().enumerate() {
        t.row([
            k.to_string(),
            num(b.center),
            num(b.mean),
            num(b.stderr),
            b.n.to_string(),
            num(b.band_low),
            num(b.band_high),
        ])?;
    }
    t.finish()?;
    Ok(())
}

fn normalize(input: &Path, value: &str, group: &str, out: Option<&Path>) -> Outcome {
    let (cols, groups, records, header) = read_columns(input, &[value], Some(group))?;
    let result = center_normalize_by_group(&cols[0], &groups)?;
    let distinct: std::collections::BTreeSet<&String> = groups.iter().collect();
    let comment = format!(
        "n={}, groups={}, excluded={}",
        groups.len(),
        distinct.len(),
        if result.excluded.is_empty() { "none".to_string() } else { result.excluded.join(";") }
    );
    let mut head: Vec<&str> = header.iter().collect();
    head.push("normalized");
    let mut t = Table::new(out, Some(&comment), &head)?;
    for (rec, v) in records.iter().zip(&result.values) {
        let mut fields: Vec<String> = rec.iter().map(str::to_string).collect();
        fields.push(v.map(num).unwrap_or_default());
        t.row(fields)?;
    }
    t.finish()?;
    Ok(())
}
