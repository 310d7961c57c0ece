//! Network surgery: coarse-graining industries, zeroing international trade,
//! and the first-order open-economy trade perturbation.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::coefficients::CoefficientSystem;
use crate::error::{Error, Result};
use crate::iotable::{IOTable, Industry};
use crate::linops::LeontiefSolver;

/// Surjective map from fine industry index to coarse group index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AggregationMap {
    groups: Vec<usize>,
    labels: Vec<String>,
}

impl AggregationMap {
    pub fn new(groups: Vec<usize>, labels: Vec<String>) -> Result<Self> {
        let mut used = vec![false; labels.len()];
        for &g in &groups {
            let slot = used
                .get_mut(g)
                .ok_or_else(|| Error::Domain(format!("group index {g} has no label")))?;
            *slot = true;
        }
        if let Some(empty) = used.iter().position(|u| !u) {
            return Err(Error::Domain(format!("coarse group `{}` is empty", labels[empty])));
        }
        Ok(Self { groups, labels })
    }

    pub fn identity(industries: &[Industry]) -> Self {
        Self { groups: (0..industries.len()).collect(), labels: industries.iter().map(Industry::label).collect() }
    }

    /// Every industry into one group.
    pub fn merge_all(industries: &[Industry], label: &str) -> Self {
        Self { groups: vec![0; industries.len()], labels: vec![label.to_string()] }
    }

    /// Groups industries of the same country sharing the first `digits`
    /// characters of their industry code. Zero digits merges each country
    /// into a single node labelled `CC:*`.
    pub fn by_prefix(industries: &[Industry], digits: usize) -> Self {
        let keys: Vec<Industry> = industries
            .iter()
            .map(|ind| {
                let prefix: String = ind.code.chars().take(digits).collect();
                Industry::new(ind.country.clone(), if prefix.is_empty() { "*".to_string() } else { prefix })
            })
            .collect();
        let ordered: BTreeMap<&Industry, usize> =
            keys.iter().collect::<std::collections::BTreeSet<_>>().into_iter().enumerate().map(|(i, k)| (k, i)).collect();
        Self {
            groups: keys.iter().map(|k| ordered[k]).collect(),
            labels: ordered.keys().map(|k| k.label()).collect(),
        }
    }

    /// Explicit `(fine, coarse)` pairs; every industry must be listed once.
    pub fn from_pairs(industries: &[Industry], pairs: &[(String, String)]) -> Result<Self> {
        let fine_index: HashMap<String, usize> =
            industries.iter().enumerate().map(|(i, ind)| (ind.label(), i)).collect();
        let mut assigned: Vec<Option<String>> = vec![None; industries.len()];
        for (fine, coarse) in pairs {
            let &i = fine_index
                .get(fine)
                .ok_or_else(|| Error::Domain(format!("map names unknown industry `{fine}`")))?;
            if assigned[i].replace(coarse.clone()).is_some() {
                return Err(Error::Domain(format!("industry `{fine}` mapped twice")));
            }
        }
        let mut labels: Vec<String> = Vec::new();
        let mut groups = Vec::with_capacity(industries.len());
        for (i, a) in assigned.into_iter().enumerate() {
            let coarse = a.ok_or_else(|| Error::Domain(format!("industry `{}` missing from map", industries[i])))?;
            let g = match labels.iter().position(|l| *l == coarse) {
                Some(g) => g,
                None => {
                    labels.push(coarse);
                    labels.len() - 1
                }
            };
            groups.push(g);
        }
        Self::new(groups, labels)
    }

    /// Reads a `fine,coarse` CSV map.
    pub fn load(path: impl AsRef<Path>, industries: &[Industry]) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path.as_ref())?;
        let header = rdr.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["fine", "coarse"] {
            return Err(Error::Parse { line: 1, message: "expected header `fine,coarse`".into() });
        }
        let mut pairs = Vec::new();
        for record in rdr.records() {
            let record = record?;
            pairs.push((record[0].to_string(), record[1].to_string()));
        }
        Self::from_pairs(industries, &pairs)
    }

    pub fn groups(&self) -> &[usize] {
        &self.groups
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn coarse_len(&self) -> usize {
        self.labels.len()
    }
}

/// Sums flows within groups; within-group trade becomes a self-flow. Gross
/// output and GDP are conserved and coefficients are recomputed downstream
/// from the merged flows.
pub fn aggregate(table: &IOTable, map: &AggregationMap) -> Result<IOTable> {
    if map.groups.len() != table.len() {
        return Err(Error::DimensionMismatch { expected: table.len(), got: map.groups.len() });
    }
    let g = map.coarse_len();
    let mut flows = DMatrix::zeros(g, g);
    let mut final_demand = DVector::zeros(g);
    let mut labor = DVector::zeros(g);
    let fine = table.intermediate_flows();
    for i in 0..table.len() {
        let gi = map.groups[i];
        final_demand[gi] += table.final_demand()[i];
        labor[gi] += table.labor_payments()[i];
        for j in 0..table.len() {
            flows[(gi, map.groups[j])] += fine[(i, j)];
        }
    }
    let industries = map.labels.iter().map(|l| Industry::parse(l)).collect();
    let out = IOTable::new(industries, flows, final_demand, labor, table.year())?;
    Ok(if table.is_strict() { out } else { out.mark_non_strict() })
}

/// Zeroes every intermediate flow between industries of different countries.
/// Final demand and labor payments are untouched, so the result is flagged
/// non-strict; coefficients built from it divide domestic payments by the
/// new, smaller expenditures.
pub fn zero_international_trade(table: &IOTable) -> Result<IOTable> {
    let inds = table.industries();
    let n = table.len();
    let src = table.intermediate_flows();
    let flows = DMatrix::from_fn(n, n, |i, j| if inds[i].country == inds[j].country { src[(i, j)] } else { 0.0 });
    let out = IOTable::new(inds.to_vec(), flows, table.final_demand().clone(), table.labor_payments().clone(), table.year())?;
    let crosses = (0..n).any(|i| (0..n).any(|j| src[(i, j)] != 0.0 && inds[i].country != inds[j].country));
    Ok(if crosses || !table.is_strict() { out.mark_non_strict() } else { out })
}

/// `epsilon[(b, c)]`: share of country `c`'s inputs bought from country `b`.
#[derive(Debug, Clone, PartialEq)]
pub struct TradePerturbation {
    epsilon: DMatrix<f64>,
}

impl TradePerturbation {
    pub fn new(epsilon: DMatrix<f64>) -> Result<Self> {
        if epsilon.nrows() != epsilon.ncols() {
            return Err(Error::Domain("trade matrix must be square".into()));
        }
        let c = epsilon.nrows();
        for b in 0..c {
            if epsilon[(b, b)] != 0.0 {
                return Err(Error::Domain("trade matrix must have a zero diagonal".into()));
            }
        }
        if epsilon.iter().any(|&e| !(e >= 0.0)) {
            return Err(Error::Domain("trade intensities must be nonnegative".into()));
        }
        for col in 0..c {
            let s = epsilon.column(col).sum();
            if s >= 1.0 {
                return Err(Error::Domain(format!("import intensities of country {col} sum to {s} >= 1")));
            }
        }
        Ok(Self { epsilon })
    }

    pub fn epsilon(&self) -> &DMatrix<f64> {
        &self.epsilon
    }

    pub fn scaled(&self, factor: f64) -> Result<Self> {
        Self::new(&self.epsilon * factor)
    }
}

#[derive(Debug, Clone)]
pub struct OpenEconomy {
    pub world: CoefficientSystem,
    pub closed_l_bar: Vec<f64>,
    pub first_order_l_bar: Vec<f64>,
    pub exact_l_bar: Vec<f64>,
}

impl OpenEconomy {
    /// Largest `|exact - first order|` over countries.
    pub fn max_first_order_error(&self) -> f64 {
        self.exact_l_bar
            .iter()
            .zip(&self.first_order_l_bar)
            .map(|(e, f)| (e - f).abs())
            .fold(0.0, f64::max)
    }
}

/// Opens closed, same-sized economies to trade. Country `c` keeps a fraction
/// `1 - sum_b eps_bc` of every input domestic and buys `eps_bc` of it from
/// country `b`, so block `(b, c)` of the world matrix is `eps_bc A_c`.
/// Returns the exact average multipliers of the world system next to the
/// first-order prediction
/// `L_bar_c + sum_b eps_bc theta_c (I - A_c^T)^-1 A_c^T (L_b - L_c)`.
pub fn open_trade_perturbation(countries: &[CoefficientSystem], perturbation: &TradePerturbation) -> Result<OpenEconomy> {
    let c_count = countries.len();
    if perturbation.epsilon.nrows() != c_count {
        return Err(Error::DimensionMismatch { expected: c_count, got: perturbation.epsilon.nrows() });
    }
    let n = countries.first().map(|c| c.len()).ok_or_else(|| Error::Domain("no countries given".into()))?;
    for sys in countries {
        if sys.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: sys.len() });
        }
        if !sys.is_balanced() {
            return Err(Error::Domain("every country must be closed and balanced".into()));
        }
    }
    let eps = &perturbation.epsilon;
    let ones = DVector::from_element(n, 1.0);

    let solvers = countries.iter().map(LeontiefSolver::new).collect::<Result<Vec<_>>>()?;
    let closed_l: Vec<DVector<f64>> = solvers.iter().map(|s| s.solve(&ones, true)).collect::<Result<_>>()?;
    let closed_l_bar: Vec<f64> = countries.iter().zip(&closed_l).map(|(s, l)| s.gdp_share().dot(l)).collect();

    let mut first_order_l_bar = closed_l_bar.clone();
    for c in 0..c_count {
        let a_t = countries[c].a().transpose();
        for b in (0..c_count).filter(|&b| b != c && eps[(b, c)] != 0.0) {
            let pushed = &a_t * (&closed_l[b] - &closed_l[c]);
            let propagated = solvers[c].solve(&pushed, true)?;
            first_order_l_bar[c] += eps[(b, c)] * countries[c].gdp_share().dot(&propagated);
        }
    }

    let total = c_count * n;
    let mut a_world = DMatrix::zeros(total, total);
    for c in 0..c_count {
        let imports: f64 = (0..c_count).filter(|&b| b != c).map(|b| eps[(b, c)]).sum();
        for b in 0..c_count {
            let scale = if b == c { 1.0 - imports } else { eps[(b, c)] };
            a_world.view_mut((b * n, c * n), (n, n)).copy_from(&(countries[c].a() * scale));
        }
    }
    let world_gdp: f64 = countries.iter().map(|s| s.gdp()).sum();
    let theta_world =
        DVector::from_iterator(total, countries.iter().flat_map(|s| (s.gdp_share() * (s.gdp() / world_gdp)).into_iter().copied().collect::<Vec<_>>()));
    let industries = countries
        .iter()
        .enumerate()
        .flat_map(|(c, s)| s.industries().iter().map(move |ind| Industry::new(format!("C{c}"), ind.code.clone())))
        .collect();
    let world = CoefficientSystem::from_shares(industries, a_world, theta_world, world_gdp)?;

    let world_l = LeontiefSolver::new(&world)?.solve(&DVector::from_element(total, 1.0), true)?;
    let exact_l_bar = (0..c_count)
        .map(|c| countries[c].gdp_share().dot(&world_l.rows(c * n, n)))
        .collect();

    Ok(OpenEconomy { world, closed_l_bar, first_order_l_bar, exact_l_bar })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepPoint {
    pub scale: f64,
    pub max_error: f64,
}

/// `|exact - first order|` for `direction` scaled by each entry of `scales`.
pub fn perturbation_sweep(
    countries: &[CoefficientSystem],
    direction: &TradePerturbation,
    scales: &[f64],
) -> Result<Vec<SweepPoint>> {
    scales
        .iter()
        .map(|&scale| {
            let open = open_trade_perturbation(countries, &direction.scaled(scale)?)?;
            Ok(SweepPoint { scale, max_error: open.max_first_order_error() })
        })
        .collect()
}

/// Least-squares slope of `ln(error)` against `ln(scale)`.
pub fn convergence_order(points: &[SweepPoint]) -> Result<f64> {
    if points.iter().any(|p| !(p.max_error > 0.0) || !(p.scale > 0.0)) {
        return Err(Error::Domain("convergence order needs positive errors and scales".into()));
    }
    let x: Vec<f64> = points.iter().map(|p| p.scale.ln()).collect();
    let y: Vec<f64> = points.iter().map(|p| p.max_error.ln()).collect();
    Ok(crate::stats::ols(&x, &y, None)?.slope)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coefficients::build_coefficients;
    use crate::economies;
    use crate::multipliers::{output_multipliers, MultiplierReport};

    #[test]
    fn merging_chain_keeps_average_multiplier() {
        let table = economies::chain_table(0.4);
        let merged = aggregate(&table, &AggregationMap::merge_all(table.industries(), "ALL")).unwrap();
        assert_eq!(merged.len(), 1);
        assert!((merged.intermediate_flows()[(0, 0)] - 0.6).abs() < 1e-15);
        assert!((merged.labor_payments()[0] - 1.0).abs() < 1e-15);
        assert!((merged.final_demand()[0] - 1.0).abs() < 1e-15);
        let coeffs = build_coefficients(&merged).unwrap();
        assert!((coeffs.a()[(0, 0)] - 0.375).abs() < 1e-15);
        let report = MultiplierReport::build(&coeffs).unwrap();
        assert!((report.average - 1.6).abs() < 1e-14);
    }

    #[test]
    fn identity_map_is_a_no_op() {
        let table = economies::chain_table(0.4);
        let same = aggregate(&table, &AggregationMap::identity(table.industries())).unwrap();
        assert_eq!(same.intermediate_flows(), table.intermediate_flows());
        assert_eq!(same.final_demand(), table.final_demand());
        assert_eq!(same.labor_payments(), table.labor_payments());
        assert_eq!(same.industries(), table.industries());
    }

    #[test]
    fn industry_multipliers_change_under_aggregation() {
        let table = economies::chain_table(0.4);
        let fine = output_multipliers(&build_coefficients(&table).unwrap()).unwrap();
        let coarse = aggregate(&table, &AggregationMap::merge_all(table.industries(), "ALL")).unwrap();
        let coarse = output_multipliers(&build_coefficients(&coarse).unwrap()).unwrap();
        assert!((coarse[0] - fine[1]).abs() > 0.5);
    }

    #[test]
    fn map_validation() {
        let inds = economies::names(3);
        assert!(AggregationMap::new(vec![0, 0, 2], vec!["a".into(), "b".into(), "c".into()]).is_err());
        let pairs = vec![("X:00".to_string(), "g".to_string()), ("X:01".to_string(), "g".to_string())];
        assert!(AggregationMap::from_pairs(&inds, &pairs).is_err());
        let table = economies::chain_table(0.4);
        let wrong = AggregationMap::identity(&inds);
        assert!(matches!(aggregate(&table, &wrong), Err(Error::DimensionMismatch { .. })));
    }

    #[test]
    fn prefix_map_groups_by_country_and_code() {
        let inds = vec![
            Industry::new("US", "111"),
            Industry::new("US", "112"),
            Industry::new("US", "211"),
            Industry::new("CA", "111"),
        ];
        let m = AggregationMap::by_prefix(&inds, 1);
        assert_eq!(m.labels(), &["CA:1", "US:1", "US:2"]);
        assert_eq!(m.groups(), &[1, 1, 2, 0]);
        let zero = AggregationMap::by_prefix(&inds, 0);
        assert_eq!(zero.labels(), &["CA:*", "US:*"]);
    }

    fn two_country_table() -> IOTable {
        let inds = vec![Industry::new("A", "x"), Industry::new("A", "y"), Industry::new("B", "x")];
        let mut flows = DMatrix::zeros(3, 3);
        flows[(1, 0)] = 0.3; // A:y -> A:x
        flows[(2, 0)] = 0.2; // B:x -> A:x, cross-border
        IOTable::new(
            inds,
            flows,
            DVector::from_vec(vec![1.0, 0.0, 0.0]),
            DVector::from_vec(vec![0.5, 0.3, 0.2]),
            0,
        )
        .unwrap()
    }

    #[test]
    fn trade_zeroing_renormalizes_buyer() {
        let table = two_country_table();
        assert!(table.is_strict());
        let closed = zero_international_trade(&table).unwrap();
        assert_eq!(closed.intermediate_flows()[(2, 0)], 0.0);
        assert!(!closed.is_strict());
        let coeffs = build_coefficients(&closed).unwrap();
        // A:x now spends 0.3 + 0.5 = 0.8.
        assert!((coeffs.a()[(1, 0)] - 0.3 / 0.8).abs() < 1e-15);
        assert!((coeffs.labor_share()[0] - 0.5 / 0.8).abs() < 1e-15);
        for i in 0..3 {
            for j in 0..3 {
                if coeffs.industries()[i].country != coeffs.industries()[j].country {
                    assert_eq!(coeffs.a()[(i, j)], 0.0);
                }
            }
        }
    }

    #[test]
    fn trade_zeroing_single_country_unchanged() {
        let table = economies::chain_table(0.4);
        let out = zero_international_trade(&table).unwrap();
        assert_eq!(out, table);
    }

    #[test]
    fn perturbation_validation() {
        assert!(TradePerturbation::new(DMatrix::from_row_slice(2, 2, &[0.1, 0.0, 0.0, 0.0])).is_err());
        assert!(TradePerturbation::new(DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 0.0, 0.0])).is_err());
        assert!(TradePerturbation::new(DMatrix::from_row_slice(2, 2, &[0.0, -0.1, 0.0, 0.0])).is_err());
    }

    #[test]
    fn identical_countries_have_no_correction() {
        let c = economies::chain(0.4);
        let eps = TradePerturbation::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.1, 0.15, 0.0])).unwrap();
        let open = open_trade_perturbation(&[c.clone(), c], &eps).unwrap();
        for k in 0..2 {
            assert_eq!(open.first_order_l_bar[k], open.closed_l_bar[k]);
            assert!((open.exact_l_bar[k] - 1.6).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_epsilon_recovers_closed_values() {
        let countries = [economies::flat_goods(3), economies::stage_chain(&[0.6, 0.5])];
        let open = open_trade_perturbation(&countries, &TradePerturbation::new(DMatrix::zeros(2, 2)).unwrap()).unwrap();
        assert_eq!(open.exact_l_bar, open.closed_l_bar);
        assert_eq!(open.first_order_l_bar, open.closed_l_bar);
    }

    #[test]
    fn trade_pulls_multipliers_together() {
        // Shallow country 0 and deep country 1, both importing.
        let shallow = economies::stage_chain(&[0.2, 0.1]);
        let deep = economies::stage_chain(&[0.7, 0.6]);
        let eps = TradePerturbation::new(DMatrix::from_row_slice(2, 2, &[0.0, 0.05, 0.05, 0.0])).unwrap();
        let open = open_trade_perturbation(&[shallow, deep], &eps).unwrap();
        assert!(open.exact_l_bar[0] > open.closed_l_bar[0]);
        assert!(open.exact_l_bar[1] < open.closed_l_bar[1]);
        assert!(open.first_order_l_bar[0] > open.closed_l_bar[0]);
        assert!(open.first_order_l_bar[1] < open.closed_l_bar[1]);
    }
}
