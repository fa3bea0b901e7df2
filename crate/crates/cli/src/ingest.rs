//! Returns ingestion from a headed CSV file.

use std::path::Path;

use rabc_core::Dataset;

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: csv::Error },
    #[error("column `{column}` not found; available columns: {}", available.join(", "))]
    MissingColumn { column: String, available: Vec<String> },
    #[error("row {row}, column `{column}`: blank cell")]
    Blank { row: usize, column: String },
    #[error("row {row}, column `{column}`: `{value}` is not a finite number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error("column `{column}` has no data rows")]
    Empty { column: String },
}

/// Reads one numeric column in file order. Row numbers in errors count data rows from 1.
pub fn ingest_returns_csv(path: &Path, column: &str) -> Result<Dataset, IngestError> {
    let io = |source| IngestError::Io { path: path.display().to_string(), source };
    let mut reader = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_path(path).map_err(io)?;
    let headers = reader.headers().map_err(io)?.clone();
    let idx = headers.iter().position(|h| h.trim() == column).ok_or_else(|| IngestError::MissingColumn {
        column: column.to_string(),
        available: headers.iter().map(|h| h.trim().to_string()).collect(),
    })?;
    let mut values = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record.map_err(io)?;
        let cell = record.get(idx).unwrap_or("").trim();
        if cell.is_empty() {
            return Err(IngestError::Blank { row, column: column.to_string() });
        }
        match cell.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            _ => return Err(IngestError::NotNumeric { row, column: column.to_string(), value: cell.to_string() }),
        }
    }
    if values.is_empty() {
        return Err(IngestError::Empty { column: column.to_string() });
    }
    Ok(Dataset::new(values).expect("finite non-empty values"))
}
