//! Input-output money-flow tables: data model, CSV ingestion, cleaning and
//! balance validation.
//!
//! Long-format files carry one flow per row, `source,target,value,year`,
//! where `source` is the seller and `target` the buyer. Industry nodes are
//! named `CC:IND`; `FINAL` (household purchases) and `LABOR` (household
//! income) are reserved. Two further household-income sources are accepted:
//! `CAPITAL` (non-labor value added) and `VALUE_ADDED` (value added without a
//! labor/capital split, as for rest-of-world regions).

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::io::{Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fmt::shortest;

pub const FINAL: &str = "FINAL";
pub const LABOR: &str = "LABOR";
pub const CAPITAL: &str = "CAPITAL";
pub const VALUE_ADDED: &str = "VALUE_ADDED";

/// Relative tolerance for row/column balance under `strict_balance`.
pub const BALANCE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Industry {
    pub country: String,
    pub code: String,
}

impl Industry {
    pub fn new(country: impl Into<String>, code: impl Into<String>) -> Self {
        Self { country: country.into(), code: code.into() }
    }

    /// Parses `CC:IND`; a name without a colon has an empty country code.
    pub fn parse(name: &str) -> Self {
        match name.split_once(':') {
            Some((country, code)) => Self::new(country, code),
            None => Self::new("", name),
        }
    }

    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Industry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.country.is_empty() {
            write!(f, "{}", self.code)
        } else {
            write!(f, "{}:{}", self.country, self.code)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NegativePolicy {
    /// Any negative entry is a validation error.
    Reject,
    /// Negative entries are stored as zero and recorded.
    #[default]
    Clamp,
    /// Negative intermediate sales are folded into the seller's final demand;
    /// other negative entries are clamped.
    Net,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum HouseholdPayments {
    /// Every payment to households counts: `LABOR + CAPITAL + VALUE_ADDED`.
    #[default]
    ValueAdded,
    /// Labor compensation only: `LABOR + labor_fraction * VALUE_ADDED`.
    /// `CAPITAL` and the remaining value added leave the table.
    LaborCompensation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Schema {
    #[default]
    Long,
    /// Dense CSV: header row of buyers (industries then `FINAL`), one row per
    /// seller (industries then household-income sources).
    Matrix,
}

#[derive(Debug, Clone)]
pub struct LoadOptions {
    pub policy: NegativePolicy,
    pub strict_balance: bool,
    pub drop_zero_expenditure: bool,
    pub household: HouseholdPayments,
    /// Labor fraction of unsplit `VALUE_ADDED` rows.
    pub labor_fraction: f64,
    pub schema: Schema,
    /// Year to keep when a long-format file holds several.
    pub year: Option<i32>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            policy: NegativePolicy::Clamp,
            strict_balance: false,
            drop_zero_expenditure: true,
            household: HouseholdPayments::ValueAdded,
            labor_fraction: 0.5,
            schema: Schema::Long,
            year: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AdjustmentKind {
    Clamped,
    NettedIntoFinalDemand,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Adjustment {
    pub line: u64,
    pub source: String,
    pub target: String,
    pub original: f64,
    pub kind: AdjustmentKind,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceRow {
    pub industry: String,
    pub row_total: f64,
    pub column_total: f64,
    pub relative_gap: f64,
}

/// What cleaning did to a file, plus the row/column balance of the result.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct LoadReport {
    pub adjustments: Vec<Adjustment>,
    pub dropped: Vec<String>,
    pub balance: Vec<BalanceRow>,
}

impl LoadReport {
    pub fn max_relative_gap(&self) -> f64 {
        self.balance.iter().map(|b| b.relative_gap).fold(0.0, f64::max)
    }
}

/// Money flows of one snapshot. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct IOTable {
    industries: Vec<Industry>,
    intermediate_flows: DMatrix<f64>,
    final_demand: DVector<f64>,
    labor_payments: DVector<f64>,
    year: i32,
    strict: bool,
    report: LoadReport,
}

impl IOTable {
    /// Builds a table from cleaned flows. Entry `(i, j)` of
    /// `intermediate_flows` is the payment from buyer `j` to seller `i`.
    pub fn new(
        industries: Vec<Industry>,
        intermediate_flows: DMatrix<f64>,
        final_demand: DVector<f64>,
        labor_payments: DVector<f64>,
        year: i32,
    ) -> Result<Self> {
        let n = industries.len();
        if intermediate_flows.nrows() != n || intermediate_flows.ncols() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: intermediate_flows.nrows().max(intermediate_flows.ncols()),
            });
        }
        for v in [&final_demand, &labor_payments] {
            if v.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: v.len() });
            }
        }
        let unique: BTreeSet<_> = industries.iter().collect();
        if unique.len() != n {
            return Err(Error::Validation("duplicate industry names".into()));
        }
        let all = intermediate_flows.iter().chain(final_demand.iter()).chain(labor_payments.iter());
        for &x in all {
            if !x.is_finite() || x < 0.0 {
                return Err(Error::Validation(format!("flows must be finite and nonnegative, found {x}")));
            }
        }
        let mut table = Self {
            industries,
            intermediate_flows,
            final_demand,
            labor_payments,
            year,
            strict: true,
            report: LoadReport::default(),
        };
        table.report.balance = table.balance_rows();
        Ok(table)
    }

    pub fn industries(&self) -> &[Industry] {
        &self.industries
    }

    pub fn len(&self) -> usize {
        self.industries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.industries.is_empty()
    }

    pub fn intermediate_flows(&self) -> &DMatrix<f64> {
        &self.intermediate_flows
    }

    pub fn final_demand(&self) -> &DVector<f64> {
        &self.final_demand
    }

    pub fn labor_payments(&self) -> &DVector<f64> {
        &self.labor_payments
    }

    pub fn year(&self) -> i32 {
        self.year
    }

    pub fn report(&self) -> &LoadReport {
        &self.report
    }

    /// Distinct country codes in industry order of first appearance.
    pub fn countries(&self) -> Vec<String> {
        let mut seen = Vec::<String>::new();
        for ind in &self.industries {
            if !seen.contains(&ind.country) {
                seen.push(ind.country.clone());
            }
        }
        seen
    }

    /// Revenue side: `Y_i + sum_j M_ij`.
    pub fn row_totals(&self) -> DVector<f64> {
        let n = self.len();
        DVector::from_fn(n, |i, _| self.final_demand[i] + self.intermediate_flows.row(i).sum())
    }

    /// Expenditure side: `sum_k M_kj + labor_j`.
    pub fn column_totals(&self) -> DVector<f64> {
        let n = self.len();
        DVector::from_fn(n, |j, _| self.intermediate_flows.column(j).sum() + self.labor_payments[j])
    }

    fn balance_rows(&self) -> Vec<BalanceRow> {
        let rows = self.row_totals();
        let cols = self.column_totals();
        self.industries
            .iter()
            .enumerate()
            .map(|(i, ind)| {
                let scale = rows[i].abs().max(cols[i].abs());
                let gap = if scale > 0.0 { (rows[i] - cols[i]).abs() / scale } else { 0.0 };
                BalanceRow {
                    industry: ind.label(),
                    row_total: rows[i],
                    column_total: cols[i],
                    relative_gap: gap,
                }
            })
            .collect()
    }

    /// Row and column gross outputs agree within [`BALANCE_TOL`].
    pub fn is_balanced(&self) -> bool {
        self.balance_rows().iter().all(|b| b.relative_gap <= BALANCE_TOL)
    }

    /// Balanced and not produced by an operation that breaks balance.
    pub fn is_strict(&self) -> bool {
        self.strict && self.is_balanced()
    }

    pub(crate) fn mark_non_strict(mut self) -> Self {
        self.strict = false;
        self
    }

    fn with_report(mut self, mut report: LoadReport) -> Self {
        report.balance = self.balance_rows();
        self.report = report;
        self
    }

    fn check_strict_balance(&self) -> Result<()> {
        let mut rows = self.balance_rows();
        rows.retain(|b| b.relative_gap > BALANCE_TOL);
        if rows.is_empty() {
            return Ok(());
        }
        rows.sort_by(|a, b| b.relative_gap.total_cmp(&a.relative_gap));
        Err(Error::Unbalanced {
            worst: rows.into_iter().take(5).map(|b| (b.industry, b.relative_gap)).collect(),
        })
    }
}

/// Gross output per industry: column sums of intermediate flows plus labor
/// payments. Equal to row sums plus final demand for a balanced table.
pub fn gross_output(table: &IOTable) -> DVector<f64> {
    table.column_totals()
}

/// Nominal price returns per industry and period plus the wage log-return.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    returns: DMatrix<f64>,
    wage_growth: DVector<f64>,
}

impl PriceSeries {
    pub fn new(returns: DMatrix<f64>, wage_growth: DVector<f64>) -> Result<Self> {
        if returns.nrows() != wage_growth.len() {
            return Err(Error::DimensionMismatch { expected: returns.nrows(), got: wage_growth.len() });
        }
        if returns.iter().chain(wage_growth.iter()).any(|x| !x.is_finite()) {
            return Err(Error::Validation("price series contains NaN or infinite entries".into()));
        }
        Ok(Self { returns, wage_growth })
    }

    pub fn returns(&self) -> &DMatrix<f64> {
        &self.returns
    }

    pub fn wage_growth(&self) -> &DVector<f64> {
        &self.wage_growth
    }

    /// Wage-deflated returns `r = r' - rho * 1`, one row per period.
    pub fn real_returns(&self) -> DMatrix<f64> {
        let mut out = self.returns.clone();
        for (t, mut row) in out.row_iter_mut().enumerate() {
            row.add_scalar_mut(-self.wage_growth[t]);
        }
        out
    }

    /// Returns deflated by a final-goods price index with the given weights.
    pub fn index_deflated_returns(&self, weights: &DVector<f64>) -> Result<DMatrix<f64>> {
        if weights.len() != self.returns.ncols() {
            return Err(Error::DimensionMismatch { expected: self.returns.ncols(), got: weights.len() });
        }
        let mut out = self.returns.clone();
        for mut row in out.row_iter_mut() {
            let index = row.iter().zip(weights.iter()).map(|(r, w)| r * w).sum::<f64>();
            row.add_scalar_mut(-index);
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
enum Node {
    Industry(Industry),
    Final,
    Labor,
    Capital,
    ValueAdded,
}

impl Node {
    fn parse(name: &str) -> Self {
        match name {
            FINAL => Node::Final,
            LABOR => Node::Labor,
            CAPITAL => Node::Capital,
            VALUE_ADDED => Node::ValueAdded,
            other => Node::Industry(Industry::parse(other)),
        }
    }

    fn name(&self) -> String {
        match self {
            Node::Industry(ind) => ind.label(),
            Node::Final => FINAL.into(),
            Node::Labor => LABOR.into(),
            Node::Capital => CAPITAL.into(),
            Node::ValueAdded => VALUE_ADDED.into(),
        }
    }
}

struct RawEntry {
    line: u64,
    source: Node,
    target: Node,
    value: f64,
}

/// Loads and cleans a table from `path`.
pub fn load_iotable(path: impl AsRef<Path>, options: &LoadOptions) -> Result<IOTable> {
    let file = std::fs::File::open(path.as_ref())?;
    read_iotable(file, options)
}

/// Reads a table from any reader; see [`load_iotable`].
pub fn read_iotable<R: Read>(reader: R, options: &LoadOptions) -> Result<IOTable> {
    if !(0.0..=1.0).contains(&options.labor_fraction) {
        return Err(Error::Domain(format!("labor fraction {} outside [0, 1]", options.labor_fraction)));
    }
    let (entries, year) = match options.schema {
        Schema::Long => read_long(reader, options.year)?,
        Schema::Matrix => (read_matrix(reader)?, options.year.unwrap_or(0)),
    };
    assemble(entries, year, options)
}

fn parse_err(line: u64, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_value(field: &str, line: u64) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| parse_err(line, format!("invalid number `{field}`")))?;
    if !v.is_finite() {
        return Err(parse_err(line, format!("non-finite value `{field}`")));
    }
    Ok(v)
}

fn check_edge(source: &Node, target: &Node, line: u64) -> Result<()> {
    let ok = matches!(
        (source, target),
        (Node::Industry(_), Node::Industry(_))
            | (Node::Industry(_), Node::Final)
            | (Node::Labor | Node::Capital | Node::ValueAdded, Node::Industry(_))
    );
    if ok {
        Ok(())
    } else {
        Err(parse_err(line, format!("unsupported flow {} -> {}", source.name(), target.name())))
    }
}

fn read_long<R: Read>(reader: R, year_filter: Option<i32>) -> Result<(Vec<RawEntry>, i32)> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let expected = ["source", "target", "value", "year"];
    if header.len() != 4 || header.iter().zip(expected).any(|(h, e)| h != e) {
        return Err(parse_err(1, format!("expected header `source,target,value,year`, found `{}`", header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut entries = Vec::new();
    let mut years = BTreeSet::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != 4 {
            return Err(parse_err(line, format!("expected 4 fields, found {}", record.len())));
        }
        let year: i32 = record[3].parse().map_err(|_| parse_err(line, format!("invalid year `{}`", &record[3])))?;
        if year_filter.is_some_and(|y| y != year) {
            continue;
        }
        years.insert(year);
        let source = Node::parse(&record[0]);
        let target = Node::parse(&record[1]);
        check_edge(&source, &target, line)?;
        let value = parse_value(&record[2], line)?;
        entries.push(RawEntry { line, source, target, value });
    }
    if years.len() > 1 {
        return Err(Error::Validation(format!("file holds several years {years:?}; select one")));
    }
    let year = years.into_iter().next().or(year_filter).unwrap_or(0);
    Ok((entries, year))
}

fn read_matrix<R: Read>(reader: R) -> Result<Vec<RawEntry>> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let targets: Vec<Node> = header.iter().skip(1).map(Node::parse).collect();
    let mut entries = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| parse_err(e.position().map(|p| p.line()).unwrap_or(0), e.to_string()))?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != header.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", header.len(), record.len())));
        }
        let source = Node::parse(&record[0]);
        for (target, field) in targets.iter().zip(record.iter().skip(1)) {
            if field.is_empty() {
                continue;
            }
            let value = parse_value(field, line)?;
            if value == 0.0 {
                continue;
            }
            check_edge(&source, target, line)?;
            entries.push(RawEntry { line, source: source.clone(), target: target.clone(), value });
        }
    }
    Ok(entries)
}

fn assemble(entries: Vec<RawEntry>, year: i32, options: &LoadOptions) -> Result<IOTable> {
    let mut names = BTreeSet::new();
    for e in &entries {
        for node in [&e.source, &e.target] {
            if let Node::Industry(ind) = node {
                names.insert(ind.clone());
            }
        }
    }
    let industries: Vec<Industry> = names.into_iter().collect();
    let index: HashMap<&Industry, usize> = industries.iter().enumerate().map(|(i, ind)| (ind, i)).collect();
    let n = industries.len();

    let mut flows = DMatrix::zeros(n, n);
    let mut final_demand = DVector::zeros(n);
    let mut labor = DVector::zeros(n);
    let mut capital = DVector::zeros(n);
    let mut value_added = DVector::zeros(n);
    let mut report = LoadReport::default();

    for e in entries {
        let mut value = e.value;
        if value < 0.0 {
            let adjustment = |kind| Adjustment {
                line: e.line,
                source: e.source.name(),
                target: e.target.name(),
                original: e.value,
                kind,
            };
            match options.policy {
                NegativePolicy::Reject => {
                    return Err(Error::Validation(format!(
                        "negative entry {} for {} -> {} at line {}",
                        e.value,
                        e.source.name(),
                        e.target.name(),
                        e.line
                    )));
                }
                NegativePolicy::Net => {
                    if let (Node::Industry(seller), Node::Industry(_)) = (&e.source, &e.target) {
                        final_demand[index[seller]] += value;
                        report.adjustments.push(adjustment(AdjustmentKind::NettedIntoFinalDemand));
                    } else {
                        report.adjustments.push(adjustment(AdjustmentKind::Clamped));
                    }
                    value = 0.0;
                }
                NegativePolicy::Clamp => {
                    report.adjustments.push(adjustment(AdjustmentKind::Clamped));
                    value = 0.0;
                }
            }
        }
        match (&e.source, &e.target) {
            (Node::Industry(s), Node::Industry(t)) => flows[(index[s], index[t])] += value,
            (Node::Industry(s), Node::Final) => final_demand[index[s]] += value,
            (Node::Labor, Node::Industry(t)) => labor[index[t]] += value,
            (Node::Capital, Node::Industry(t)) => capital[index[t]] += value,
            (Node::ValueAdded, Node::Industry(t)) => value_added[index[t]] += value,
            _ => unreachable!("edges validated while reading"),
        }
    }

    // Netting can push final demand below zero.
    for i in 0..n {
        if final_demand[i] < 0.0 {
            report.adjustments.push(Adjustment {
                line: 0,
                source: industries[i].label(),
                target: FINAL.into(),
                original: final_demand[i],
                kind: AdjustmentKind::Clamped,
            });
            final_demand[i] = 0.0;
        }
    }

    let household = match options.household {
        HouseholdPayments::ValueAdded => &labor + &capital + &value_added,
        HouseholdPayments::LaborCompensation => &labor + &value_added * options.labor_fraction,
    };

    let (industries, flows, final_demand, household) = if options.drop_zero_expenditure {
        drop_zero_expenditure(industries, flows, final_demand, household, &mut report.dropped)
    } else {
        (industries, flows, final_demand, household)
    };

    let table = IOTable::new(industries, flows, final_demand, household, year)?.with_report(report);
    let table = if options.household == HouseholdPayments::LaborCompensation {
        table.mark_non_strict()
    } else {
        table
    };
    if options.strict_balance {
        table.check_strict_balance()?;
    }
    Ok(table)
}

type Parts = (Vec<Industry>, DMatrix<f64>, DVector<f64>, DVector<f64>);

fn drop_zero_expenditure(
    mut industries: Vec<Industry>,
    mut flows: DMatrix<f64>,
    mut final_demand: DVector<f64>,
    mut household: DVector<f64>,
    dropped: &mut Vec<String>,
) -> Parts {
    // Removing a seller lowers its buyers' expenditure, so repeat to a fixed point.
    loop {
        let n = industries.len();
        let zero: Vec<usize> =
            (0..n).filter(|&j| flows.column(j).sum() + household[j] == 0.0).collect();
        if zero.is_empty() {
            return (industries, flows, final_demand, household);
        }
        let keep: Vec<usize> = (0..n).filter(|j| !zero.contains(j)).collect();
        for &j in &zero {
            dropped.push(industries[j].label());
        }
        flows = flows.select_rows(&keep).select_columns(&keep);
        final_demand = final_demand.select_rows(&keep);
        household = household.select_rows(&keep);
        industries = keep.iter().map(|&i| industries[i].clone()).collect();
    }
}

/// Writes the long-format CSV. Output is byte-identical for identical data:
/// rows sorted by `(source, target)`, zero flows omitted, values printed
/// in the shortest form that parses back to the same `f64`.
pub fn write_iotable<W: Write>(table: &IOTable, writer: W) -> Result<()> {
    let n = table.len();
    let labels: Vec<String> = table.industries.iter().map(Industry::label).collect();
    let mut rows: BTreeMap<(String, String), f64> = BTreeMap::new();
    for i in 0..n {
        for j in 0..n {
            let v = table.intermediate_flows[(i, j)];
            if v != 0.0 {
                rows.insert((labels[i].clone(), labels[j].clone()), v);
            }
        }
        if table.final_demand[i] != 0.0 {
            rows.insert((labels[i].clone(), FINAL.into()), table.final_demand[i]);
        }
        if table.labor_payments[i] != 0.0 {
            rows.insert((LABOR.into(), labels[i].clone()), table.labor_payments[i]);
        }
    }
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["source", "target", "value", "year"])?;
    let year = table.year.to_string();
    for ((source, target), value) in rows {
        wtr.write_record([source.as_str(), target.as_str(), shortest(value).as_str(), year.as_str()])?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn save_iotable(table: &IOTable, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path.as_ref())?;
    write_iotable(table, std::io::BufWriter::new(file))
}
