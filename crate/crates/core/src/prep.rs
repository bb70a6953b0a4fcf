//! Optional CSV preprocessing: mean imputation of numeric columns and
//! one-hot encoding of categorical ones, producing a fully numeric table for
//! ingestion.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numfmt::fmt_f64;

#[derive(Debug, Clone, Default)]
pub struct PreprocessOptions {
    pub impute_mean: bool,
    pub one_hot: bool,
    /// Columns copied through untouched (outcome columns, ids).
    pub exclude: Vec<String>,
    pub delimiter: Option<char>,
}

#[derive(Debug, Clone, Default)]
pub struct PreprocessSummary {
    pub rows: usize,
    pub imputed_cells: usize,
    pub encoded_columns: Vec<String>,
    /// Categorical columns left as-is because one-hot encoding was off.
    pub remaining_categorical: Vec<String>,
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

enum ColumnKind {
    Excluded,
    Numeric,
    Categorical(Vec<String>),
}

pub fn preprocess_csv(
    input: &Path,
    output: &Path,
    options: &PreprocessOptions,
) -> Result<PreprocessSummary> {
    let delimiter = options.delimiter.unwrap_or(',') as u8;
    let mut reader = csv::ReaderBuilder::new().delimiter(delimiter).from_path(input)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    for e in &options.exclude {
        if !header.iter().any(|h| h == e) {
            return Err(Error::Config(format!("excluded column '{e}' not in header")));
        }
    }
    let rows: Vec<Vec<String>> = reader
        .records()
        .map(|r| r.map(|rec| rec.iter().map(str::to_string).collect()))
        .collect::<std::result::Result<_, csv::Error>>()?;

    let mut kinds = Vec::with_capacity(header.len());
    let mut summary = PreprocessSummary { rows: rows.len(), ..Default::default() };
    for (j, name) in header.iter().enumerate() {
        if options.exclude.contains(name) {
            kinds.push(ColumnKind::Excluded);
            continue;
        }
        let numeric = rows
            .iter()
            .all(|r| is_missing(&r[j]) || r[j].trim().parse::<f64>().is_ok());
        if numeric {
            kinds.push(ColumnKind::Numeric);
        } else if options.one_hot {
            let mut levels: Vec<String> = rows
                .iter()
                .map(|r| {
                    let cell = r[j].trim();
                    if is_missing(cell) { "NA".to_string() } else { cell.to_string() }
                })
                .collect();
            levels.sort();
            levels.dedup();
            summary.encoded_columns.push(name.clone());
            kinds.push(ColumnKind::Categorical(levels));
        } else {
            summary.remaining_categorical.push(name.clone());
            kinds.push(ColumnKind::Excluded); // copied through as-is
        }
    }

    // column means for imputation
    let means: Vec<f64> = (0..header.len())
        .map(|j| {
            if !matches!(kinds[j], ColumnKind::Numeric) {
                return 0.0;
            }
            let values: Vec<f64> = rows
                .iter()
                .filter(|r| !is_missing(&r[j]))
                .filter_map(|r| r[j].trim().parse().ok())
                .collect();
            if values.is_empty() {
                0.0
            } else {
                values.iter().sum::<f64>() / values.len() as f64
            }
        })
        .collect();

    let mut writer = csv::WriterBuilder::new().delimiter(delimiter).from_path(output)?;
    let mut out_header = Vec::new();
    for (j, name) in header.iter().enumerate() {
        match &kinds[j] {
            ColumnKind::Excluded | ColumnKind::Numeric => out_header.push(name.clone()),
            ColumnKind::Categorical(levels) => {
                for level in levels {
                    out_header.push(format!("{name}={level}"));
                }
            }
        }
    }
    writer.write_record(&out_header)?;

    for row in &rows {
        let mut out_row = Vec::with_capacity(out_header.len());
        for (j, cell) in row.iter().enumerate() {
            match &kinds[j] {
                ColumnKind::Excluded => out_row.push(cell.clone()),
                ColumnKind::Numeric => {
                    if is_missing(cell) {
                        if options.impute_mean {
                            summary.imputed_cells += 1;
                            out_row.push(fmt_f64(means[j]));
                        } else {
                            out_row.push(String::new());
                        }
                    } else {
                        out_row.push(cell.trim().to_string());
                    }
                }
                ColumnKind::Categorical(levels) => {
                    let value = if is_missing(cell) { "NA" } else { cell.trim() };
                    for level in levels {
                        out_row.push(if level == value { "1" } else { "0" }.to_string());
                    }
                }
            }
        }
        writer.write_record(&out_row)?;
    }
    writer.flush()?;
    Ok(summary)
}
