//! CSV ingest and export in raw clinical units.
//!
//! Columns are matched by header name, so order does not matter. Missing
//! cells are empty or `NA`. The label column is optional on read; training
//! rejects unlabeled records later.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use nephroscope_core::data::{is_missing, Dataset, PatientRecord, Provenance, MISSING};
use nephroscope_core::{Class, FeatureKind, FeatureSchema};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("data: {0}")]
    Csv(#[from] csv::Error),
    #[error("data: missing column `{0}`")]
    MissingColumn(String),
    #[error("data: unknown column `{0}`")]
    UnknownColumn(String),
    #[error("data: row {row}, column `{column}`: cannot parse `{value}`")]
    BadCell { row: usize, column: String, value: String },
    #[error("data: row {row}: label `{value}` is not one of no, yes, 0, 1")]
    BadLabel { row: usize, value: String },
    #[error("data: row {row}: binary feature `{column}` is missing")]
    MissingBinary { row: usize, column: String },
    #[error("data: file has no records")]
    Empty,
}

/// Out-of-range cells are reported, not rejected.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RangeNote {
    pub row: usize,
    pub feature: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IngestReport {
    pub rows: usize,
    pub labeled: bool,
    /// [no CKD, CKD].
    pub label_counts: [usize; 2],
    pub missing_by_feature: BTreeMap<String, usize>,
    pub out_of_range: Vec<RangeNote>,
}

fn parse_binary(s: &str) -> Option<f64> {
    match s.to_ascii_lowercase().as_str() {
        "0" | "0.0" | "no" | "false" => Some(0.0),
        "1" | "1.0" | "yes" | "true" => Some(1.0),
        _ => None,
    }
}

fn parse_label(s: &str) -> Option<Class> {
    parse_binary(s).map(|v| Class::from_positive(v > 0.5))
}

fn is_na(s: &str) -> bool {
    s.is_empty() || s.eq_ignore_ascii_case("na")
}

pub fn read_dataset_from<R: Read>(reader: R, schema: &FeatureSchema) -> Result<(Dataset, IngestReport), IngestError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    let find = |name: &str| headers.iter().position(|h| h == name);
    let columns: Vec<usize> = (0..schema.len())
        .map(|i| find(schema.name(i)).ok_or_else(|| IngestError::MissingColumn(schema.name(i).into())))
        .collect::<Result<_, _>>()?;
    let label_col = find(schema.target_name());
    if let Some((_, h)) = headers
        .iter()
        .enumerate()
        .find(|(j, _)| !columns.contains(j) && Some(*j) != label_col)
    {
        return Err(IngestError::UnknownColumn(h.clone()));
    }

    let mut records = Vec::new();
    let mut missing = vec![0usize; schema.len()];
    let mut out_of_range = Vec::new();
    for (r, row) in rdr.records().enumerate() {
        let row = row?;
        // 1-based data rows, header excluded.
        let line = r + 1;
        let mut values = Vec::with_capacity(schema.len());
        for (f, &c) in columns.iter().enumerate() {
            let cell = row.get(c).unwrap_or("");
            let spec = schema.spec(f);
            let v = if is_na(cell) {
                if spec.kind == FeatureKind::Binary {
                    return Err(IngestError::MissingBinary {
                        row: line,
                        column: spec.name.clone(),
                    });
                }
                missing[f] += 1;
                MISSING
            } else {
                let parsed = match spec.kind {
                    FeatureKind::Binary => parse_binary(cell),
                    FeatureKind::Numeric => cell.parse::<f64>().ok().filter(|v| v.is_finite()),
                };
                parsed.ok_or_else(|| IngestError::BadCell {
                    row: line,
                    column: spec.name.clone(),
                    value: cell.into(),
                })?
            };
            if !is_missing(v) && !spec.in_range(v) {
                out_of_range.push(RangeNote {
                    row: line,
                    feature: spec.name.clone(),
                    value: v,
                });
            }
            values.push(v);
        }
        let label = match label_col {
            Some(c) => {
                let cell = row.get(c).unwrap_or("");
                Some(parse_label(cell).ok_or_else(|| IngestError::BadLabel {
                    row: line,
                    value: cell.into(),
                })?)
            }
            None => None,
        };
        records.push(PatientRecord::new(values, label));
    }
    if records.is_empty() {
        return Err(IngestError::Empty);
    }
    let ds = Dataset::new(schema.clone(), records, Provenance::Raw);
    let report = IngestReport {
        rows: ds.len(),
        labeled: label_col.is_some(),
        label_counts: ds.class_counts(),
        missing_by_feature: (0..schema.len())
            .filter(|&f| missing[f] > 0)
            .map(|f| (schema.name(f).to_owned(), missing[f]))
            .collect(),
        out_of_range,
    };
    Ok((ds, report))
}

pub fn read_dataset(path: &Path, schema: &FeatureSchema) -> crate::AppResult<(Dataset, IngestReport)> {
    let file = std::fs::File::open(path).map_err(|e| crate::AppError::io(path, e))?;
    Ok(read_dataset_from(std::io::BufReader::new(file), schema)?)
}

/// Shortest decimal that parses back to the same bits.
fn fmt_value(v: f64) -> String {
    if is_missing(v) {
        "NA".into()
    } else {
        format!("{v}")
    }
}

/// Writes raw-unit values; scaled datasets are inverted first.
pub fn write_dataset_to<W: Write>(out: W, ds: &Dataset) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    let schema = &ds.schema;
    let labeled = ds.records.iter().any(|r| r.label.is_some());
    let mut header: Vec<&str> = (0..schema.len()).map(|i| schema.name(i)).collect();
    if labeled {
        header.push(schema.target_name());
    }
    w.write_record(&header)?;
    for i in 0..ds.len() {
        let mut row: Vec<String> = ds.raw_values(i).into_iter().map(fmt_value).collect();
        if labeled {
            row.push(match ds.records[i].label {
                Some(Class::Ckd) => "yes".into(),
                Some(Class::NoCkd) => "no".into(),
                None => "NA".into(),
            });
        }
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_dataset(path: &Path, ds: &Dataset) -> crate::AppResult<()> {
    let mut buf = Vec::new();
    write_dataset_to(&mut buf, ds).map_err(|e| crate::AppError::parse(path, e))?;
    crate::fsio::write_atomic(path, &buf)
}
