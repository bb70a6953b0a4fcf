//! Dataset model and the horizontal/vertical partitioning of a study across
//! parties.
//!
//! A [`Dataset`] couples a covariate matrix with aligned outcome vectors and
//! a global sample id per row. [`partition`] splits it into [`PartyBlock`]s
//! along a [`PartitionScheme`]: institutions own disjoint row groups, column
//! groups split the covariates, and the party at column group 0 of each
//! institution additionally holds that institution's outcome vectors.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mat;

/// A sample table: covariates plus observed time, event indicator, and
/// treatment flag, all aligned by row. Immutable after construction.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub ids: Vec<u64>,
    pub x: DMatrix<f64>,
    pub time: Vec<f64>,
    pub event: Vec<u8>,
    pub treat: Vec<u8>,
    pub covariate_names: Vec<String>,
}

impl Dataset {
    pub fn new(
        ids: Vec<u64>,
        x: DMatrix<f64>,
        time: Vec<f64>,
        event: Vec<u8>,
        treat: Vec<u8>,
        covariate_names: Vec<String>,
    ) -> Result<Self> {
        let n = ids.len();
        if x.nrows() != n || time.len() != n || event.len() != n || treat.len() != n {
            return Err(Error::Validation(format!(
                "aligned lengths required: ids={n}, rows={}, time={}, event={}, treat={}",
                x.nrows(),
                time.len(),
                event.len(),
                treat.len()
            )));
        }
        if covariate_names.len() != x.ncols() {
            return Err(Error::Validation(format!(
                "{} covariate names for {} columns",
                covariate_names.len(),
                x.ncols()
            )));
        }
        if ids.iter().collect::<HashSet<_>>().len() != n {
            return Err(Error::Validation("sample ids must be unique".into()));
        }
        if let Some(i) = time.iter().position(|t| !t.is_finite() || *t < 0.0) {
            return Err(Error::Validation(format!(
                "time must be finite and nonnegative (row {i}: {})",
                time[i]
            )));
        }
        if event.iter().any(|e| *e > 1) || treat.iter().any(|z| *z > 1) {
            return Err(Error::Validation("event and treat must be 0/1".into()));
        }
        Ok(Self { ids, x, time, event, treat, covariate_names })
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn m(&self) -> usize {
        self.x.ncols()
    }

    /// Positions of the given ids within this dataset.
    pub fn positions_of(&self, ids: &[u64]) -> Result<Vec<usize>> {
        let index: std::collections::HashMap<u64, usize> =
            self.ids.iter().enumerate().map(|(i, &id)| (id, i)).collect();
        ids.iter()
            .map(|id| {
                index
                    .get(id)
                    .copied()
                    .ok_or_else(|| Error::Validation(format!("unknown sample id {id}")))
            })
            .collect()
    }
}

/// Outcome vectors held by one institution, aligned to its sample ids.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcomes {
    pub time: Vec<f64>,
    pub event: Vec<u8>,
    pub treat: Vec<u8>,
}

/// How samples and covariates are split across parties: `c` disjoint row
/// groups (institutions) times `d` disjoint column groups.
#[derive(Debug, Clone, PartialEq)]
pub struct PartitionScheme {
    pub row_groups: Vec<Vec<usize>>,
    pub col_groups: Vec<Vec<usize>>,
}

impl PartitionScheme {
    pub fn new(row_groups: Vec<Vec<usize>>, col_groups: Vec<Vec<usize>>) -> Result<Self> {
        if row_groups.is_empty() || col_groups.is_empty() {
            return Err(Error::Validation("at least one row and column group".into()));
        }
        for (what, groups) in [("row", &row_groups), ("column", &col_groups)] {
            if groups.iter().any(|g| g.is_empty()) {
                return Err(Error::Validation(format!("empty {what} group")));
            }
            let total: usize = groups.iter().map(|g| g.len()).sum();
            let distinct: HashSet<usize> = groups.iter().flatten().copied().collect();
            if distinct.len() != total {
                return Err(Error::Validation(format!("overlapping {what} groups")));
            }
            let max = *distinct.iter().max().unwrap();
            if distinct.len() != max + 1 || !distinct.contains(&0) {
                return Err(Error::Validation(format!(
                    "{what} groups must cover 0..{} without gaps",
                    max + 1
                )));
            }
        }
        Ok(Self { row_groups, col_groups })
    }

    /// Number of institutions.
    pub fn c(&self) -> usize {
        self.row_groups.len()
    }

    /// Number of column groups.
    pub fn d(&self) -> usize {
        self.col_groups.len()
    }

    pub fn n(&self) -> usize {
        self.row_groups.iter().map(|g| g.len()).sum()
    }

    pub fn m(&self) -> usize {
        self.col_groups.iter().map(|g| g.len()).sum()
    }

    /// The trivial 1x1 scheme covering the whole dataset.
    pub fn single(n: usize, m: usize) -> Result<Self> {
        Self::new(vec![(0..n).collect()], vec![(0..m).collect()])
    }

    /// Random row assignment into `c` near-equal groups (the remainder goes
    /// to the lowest-index institutions), with contiguous even column groups.
    pub fn random<R: Rng>(n: usize, m: usize, c: usize, d: usize, rng: &mut R) -> Result<Self> {
        Self::new(random_row_groups(n, c, rng)?, even_groups(m, d)?)
    }
}

/// Random disjoint row groups of near-equal size.
pub fn random_row_groups<R: Rng>(n: usize, c: usize, rng: &mut R) -> Result<Vec<Vec<usize>>> {
    if c == 0 || c > n {
        return Err(Error::Validation(format!("cannot split {n} rows into {c} groups")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let base = n / c;
    let extra = n % c;
    let mut groups = Vec::with_capacity(c);
    let mut start = 0;
    for k in 0..c {
        let size = base + usize::from(k < extra);
        let mut group: Vec<usize> = order[start..start + size].to_vec();
        group.sort_unstable();
        groups.push(group);
        start += size;
    }
    Ok(groups)
}

/// Contiguous groups of near-equal size covering `0..m`.
pub fn even_groups(m: usize, d: usize) -> Result<Vec<Vec<usize>>> {
    if d == 0 || d > m {
        return Err(Error::Validation(format!("cannot split {m} columns into {d} groups")));
    }
    let base = m / d;
    let extra = m % d;
    let mut groups = Vec::with_capacity(d);
    let mut start = 0;
    for l in 0..d {
        let size = base + usize::from(l < extra);
        groups.push((start..start + size).collect());
        start += size;
    }
    Ok(groups)
}

/// One party's view of the data: institution `k`, column group `l`, the
/// covariate sub-matrix, and (for the institution's outcome holder, `l == 0`)
/// the outcome slice.
#[derive(Debug, Clone, PartialEq)]
pub struct PartyBlock {
    pub k: usize,
    pub l: usize,
    pub ids: Vec<u64>,
    /// Global covariate indices of this block's columns, in column order.
    pub col_indices: Vec<usize>,
    pub x: DMatrix<f64>,
    pub outcomes: Option<Outcomes>,
}

impl PartyBlock {
    pub fn n(&self) -> usize {
        self.ids.len()
    }

    /// Local covariate dimension `m_l`.
    pub fn m(&self) -> usize {
        self.x.ncols()
    }
}

/// Split `dataset` into `c x d` party blocks. Outcomes are attached once per
/// institution, on the `l == 0` block.
pub fn partition(dataset: &Dataset, scheme: &PartitionScheme) -> Result<Vec<PartyBlock>> {
    if scheme.n() != dataset.n() {
        return Err(Error::Validation(format!(
            "scheme covers {} rows, dataset has {}",
            scheme.n(),
            dataset.n()
        )));
    }
    if scheme.m() != dataset.m() {
        return Err(Error::Validation(format!(
            "scheme covers {} columns, dataset has {}",
            scheme.m(),
            dataset.m()
        )));
    }
    let mut blocks = Vec::with_capacity(scheme.c() * scheme.d());
    for (k, rows) in scheme.row_groups.iter().enumerate() {
        let ids: Vec<u64> = rows.iter().map(|&i| dataset.ids[i]).collect();
        for (l, cols) in scheme.col_groups.iter().enumerate() {
            let x = mat::select_cols(&mat::select_rows(&dataset.x, rows), cols);
            let outcomes = (l == 0).then(|| Outcomes {
                time: rows.iter().map(|&i| dataset.time[i]).collect(),
                event: rows.iter().map(|&i| dataset.event[i]).collect(),
                treat: rows.iter().map(|&i| dataset.treat[i]).collect(),
            });
            blocks.push(PartyBlock {
                k,
                l,
                ids: ids.clone(),
                col_indices: cols.clone(),
                x,
                outcomes,
            });
        }
    }
    Ok(blocks)
}

/// Comparison operators accepted in derivation rules.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CmpOp {
    Gt,
    Ge,
    Lt,
    Le,
    Eq,
    Ne,
}

/// A rule of the form `<column> <op> <value>` that derives a 0/1 flag from a
/// numeric column, e.g. `age > 60`.
#[derive(Debug, Clone, PartialEq)]
pub struct Rule {
    pub col: String,
    pub op: CmpOp,
    pub value: f64,
}

impl Rule {
    pub fn parse(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 3 {
            return Err(Error::Config(format!(
                "rule must be '<column> <op> <value>', got '{text}'"
            )));
        }
        let op = match parts[1] {
            ">" => CmpOp::Gt,
            ">=" => CmpOp::Ge,
            "<" => CmpOp::Lt,
            "<=" => CmpOp::Le,
            "==" => CmpOp::Eq,
            "!=" => CmpOp::Ne,
            other => return Err(Error::Config(format!("unknown operator '{other}'"))),
        };
        let value: f64 = parts[2]
            .parse()
            .map_err(|_| Error::Config(format!("rule value '{}' is not numeric", parts[2])))?;
        Ok(Self { col: parts[0].to_string(), op, value })
    }

    pub fn apply(&self, v: f64) -> u8 {
        let hit = match self.op {
            CmpOp::Gt => v > self.value,
            CmpOp::Ge => v >= self.value,
            CmpOp::Lt => v < self.value,
            CmpOp::Le => v <= self.value,
            CmpOp::Eq => v == self.value,
            CmpOp::Ne => v != self.value,
        };
        u8::from(hit)
    }
}

/// Column mapping for CSV ingestion. Exactly one of `treat`/`treat_rule` and
/// one of `event`/`event_rule` must be given; every remaining numeric column
/// becomes a covariate. A rule's source column is consumed by default so the
/// derived flag is not trivially recoverable from the feature set.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub time: String,
    #[serde(default)]
    pub event: Option<String>,
    #[serde(default)]
    pub event_rule: Option<String>,
    #[serde(default)]
    pub treat: Option<String>,
    #[serde(default)]
    pub treat_rule: Option<String>,
    #[serde(default)]
    pub delimiter: Option<char>,
    /// Columns to ignore entirely (ids, free text, ...).
    #[serde(default)]
    pub drop: Vec<String>,
    /// Keep a rule's source column among the covariates.
    #[serde(default)]
    pub keep_rule_column: bool,
}

enum FlagSource {
    Column(usize),
    Rule(Rule, usize),
}

impl FlagSource {
    fn resolve(
        name: &str,
        col: &Option<String>,
        rule_text: &Option<String>,
        header: &[String],
    ) -> Result<Self> {
        let find = |c: &str| {
            header.iter().position(|h| h == c).ok_or_else(|| {
                Error::Config(format!("{name} column '{c}' not found in header"))
            })
        };
        match (col, rule_text) {
            (Some(c), None) => Ok(FlagSource::Column(find(c)?)),
            (None, Some(r)) => {
                let rule = Rule::parse(r)?;
                let idx = find(&rule.col)?;
                Ok(FlagSource::Rule(rule, idx))
            }
            _ => Err(Error::Config(format!(
                "exactly one of '{name}' or '{name}_rule' must be set"
            ))),
        }
    }

    fn source_index(&self) -> usize {
        match self {
            FlagSource::Column(i) => *i,
            FlagSource::Rule(_, i) => *i,
        }
    }

    fn value(&self, row: &[f64], what: &str, row_no: usize) -> Result<u8> {
        match self {
            FlagSource::Column(i) => {
                let v = row[*i];
                if v == 0.0 || v == 1.0 {
                    Ok(v as u8)
                } else {
                    Err(Error::Data(format!(
                        "{what} value {v} at data row {row_no} is not 0/1; use a {what}_rule"
                    )))
                }
            }
            FlagSource::Rule(rule, i) => Ok(rule.apply(row[*i])),
        }
    }
}

fn is_missing(cell: &str) -> bool {
    let t = cell.trim();
    t.is_empty()
        || t == "."
        || t.eq_ignore_ascii_case("na")
        || t.eq_ignore_ascii_case("nan")
        || t.eq_ignore_ascii_case("null")
        || t.eq_ignore_ascii_case("n/a")
}

/// What `load_csv` did besides producing the dataset.
#[derive(Debug, Clone, Default)]
pub struct LoadSummary {
    pub rows_read: usize,
    pub rows_dropped_missing: usize,
}

/// Load a dataset from a delimited file with a header row. Rows containing a
/// missing value in any used column are dropped (listwise deletion) and
/// counted in the summary; sequential ids are assigned to the surviving rows.
pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<(Dataset, LoadSummary)> {
    let delimiter = schema.delimiter.unwrap_or(',') as u8;
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .flexible(false)
        .from_path(path)?;
    let header: Vec<String> =
        reader.headers()?.iter().map(|h| h.trim().to_string()).collect();

    let time_idx = header
        .iter()
        .position(|h| *h == schema.time)
        .ok_or_else(|| Error::Config(format!("time column '{}' not found", schema.time)))?;
    let event_src = FlagSource::resolve("event", &schema.event, &schema.event_rule, &header)?;
    let treat_src = FlagSource::resolve("treat", &schema.treat, &schema.treat_rule, &header)?;

    for d in &schema.drop {
        if !header.iter().any(|h| h == d) {
            log::warn!("drop column '{d}' not present in {}", path.display());
        }
    }

    let mut reserved: HashSet<usize> = HashSet::new();
    reserved.insert(time_idx);
    reserved.insert(event_src.source_index());
    reserved.insert(treat_src.source_index());
    if schema.keep_rule_column {
        if let FlagSource::Rule(_, i) = &event_src {
            reserved.remove(i);
        }
        if let FlagSource::Rule(_, i) = &treat_src {
            reserved.remove(i);
        }
    }
    // Columns used for parsing even when excluded from the covariates.
    let mut used: HashSet<usize> = reserved.clone();
    used.insert(time_idx);
    used.insert(event_src.source_index());
    used.insert(treat_src.source_index());

    let covariate_cols: Vec<usize> = (0..header.len())
        .filter(|i| !reserved.contains(i) && !schema.drop.contains(&header[*i]))
        .collect();
    if covariate_cols.is_empty() {
        return Err(Error::Config("no covariate columns remain".into()));
    }
    used.extend(covariate_cols.iter().copied());
    let mut used: Vec<usize> = used.into_iter().collect();
    used.sort_unstable();

    let mut rows: Vec<Vec<f64>> = Vec::new();
    let mut summary = LoadSummary::default();
    'record: for (r, record) in reader.records().enumerate() {
        let record = record?;
        summary.rows_read += 1;
        let mut parsed = vec![f64::NAN; header.len()];
        for &i in &used {
            let cell = record.get(i).unwrap_or("");
            if is_missing(cell) {
                summary.rows_dropped_missing += 1;
                continue 'record;
            }
            parsed[i] = cell.trim().parse::<f64>().map_err(|_| {
                Error::Data(format!(
                    "non-numeric value '{}' at data row {}, column '{}'",
                    cell.trim(),
                    r + 1,
                    header[i]
                ))
            })?;
        }
        rows.push(parsed);
    }
    if summary.rows_dropped_missing > 0 {
        log::warn!(
            "{}: dropped {} of {} rows with missing values",
            path.display(),
            summary.rows_dropped_missing,
            summary.rows_read
        );
    }
    if rows.is_empty() {
        return Err(Error::Data(format!("{}: no usable rows", path.display())));
    }

    let n = rows.len();
    let mut time = Vec::with_capacity(n);
    let mut event = Vec::with_capacity(n);
    let mut treat = Vec::with_capacity(n);
    let mut x = DMatrix::zeros(n, covariate_cols.len());
    for (i, row) in rows.iter().enumerate() {
        time.push(row[time_idx]);
        event.push(event_src.value(row, "event", i + 1)?);
        treat.push(treat_src.value(row, "treat", i + 1)?);
        for (j, &c) in covariate_cols.iter().enumerate() {
            x[(i, j)] = row[c];
        }
    }
    let names: Vec<String> = covariate_cols.iter().map(|&c| header[c].clone()).collect();
    let ids: Vec<u64> = (0..n as u64).collect();
    let dataset = Dataset::new(ids, x, time, event, treat, names)?;
    Ok((dataset, summary))
}

/// Write a dataset as CSV: covariate columns, then time, event, treat.
/// Floats carry 17 significant digits so a rewrite of the same dataset is
/// byte-identical.
pub fn write_dataset_csv(dataset: &Dataset, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = dataset.covariate_names.clone();
    header.extend(["time".to_string(), "event".to_string(), "treat".to_string()]);
    w.write_record(&header)?;
    for i in 0..dataset.n() {
        let mut row: Vec<String> =
            (0..dataset.m()).map(|j| crate::numfmt::fmt_f64(dataset.x[(i, j)])).collect();
        row.push(crate::numfmt::fmt_f64(dataset.time[i]));
        row.push(dataset.event[i].to_string());
        row.push(dataset.treat[i].to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
