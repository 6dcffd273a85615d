//! Per-measure feature tables: `subject_id,c0001,...,cNNNN`, one row per
//! subject, values printed with 17 significant digits.

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::measures::{FeatureMatrix, MeasureKind};

fn column_name(i: usize) -> String {
    format!("c{:04}", i + 1)
}

pub fn write_feature_csv(matrix: &FeatureMatrix) -> Vec<u8> {
    let mut out = String::from("subject_id");
    for i in 0..matrix.cluster_count() {
        out.push(',');
        out.push_str(&column_name(i));
    }
    out.push('\n');
    for (id, row) in matrix.subject_ids.iter().zip(matrix.values.rows()) {
        out.push_str(id);
        for v in row {
            out.push_str(&format!(",{v:.16e}"));
        }
        out.push('\n');
    }
    out.into_bytes()
}

/// `FA.csv`, `NoS-N.csv`, ...
pub fn feature_file_name(measure: MeasureKind) -> String {
    format!("{}.csv", measure.name())
}

/// Parses a feature table, taking the cluster count from its header.
pub fn read_feature_table(bytes: &[u8], measure: MeasureKind) -> Result<FeatureMatrix> {
    let header = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let columns = header.iter().filter(|&&b| b == b',').count();
    read_feature_csv(bytes, measure, columns)
}

/// Parses a feature table that must have exactly `cluster_count` value columns.
pub fn read_feature_csv(bytes: &[u8], measure: MeasureKind, cluster_count: usize) -> Result<FeatureMatrix> {
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let header = reader.headers().map_err(|e| Error::Format(e.to_string()))?.clone();
    if header.len() != cluster_count + 1 {
        return Err(Error::Format(format!(
            "{measure}: expected {} value columns, found {}",
            cluster_count,
            header.len().saturating_sub(1)
        )));
    }
    if header.get(0) != Some("subject_id") {
        return Err(Error::Format(format!("{measure}: first column must be `subject_id`")));
    }
    for (i, name) in header.iter().skip(1).enumerate() {
        if name != column_name(i) {
            return Err(Error::Format(format!(
                "{measure}: column {} is `{name}`, expected `{}`",
                i + 2,
                column_name(i)
            )));
        }
    }
    let mut ids = Vec::new();
    let mut flat = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| Error::Format(format!("{measure}: {e}")))?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        if row.len() != cluster_count + 1 {
            return Err(Error::Format(format!(
                "{measure}: line {line} has {} fields, expected {}",
                row.len(),
                cluster_count + 1
            )));
        }
        ids.push(row[0].to_string());
        for cell in row.iter().skip(1) {
            let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
                line,
                detail: format!("{measure}: `{cell}` is not a number"),
            })?;
            flat.push(v);
        }
    }
    let values = Array2::from_shape_vec((ids.len(), cluster_count), flat)
        .map_err(|e| Error::Format(e.to_string()))?;
    FeatureMatrix::new(measure, ids, values)
}
