//! CSV datasets: header `f0,...,f{d-1},label`, numeric cells, no quoting.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hybridfl_core::data::Dataset;
use hybridfl_core::DataError;

#[derive(Debug, thiserror::Error)]
pub enum DataFileError {
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("line {line}: {source}")]
    Csv { line: u64, source: csv::Error },
    #[error("file has no header row")]
    Empty,
    #[error("header has no `label` column as its last field")]
    MissingLabelColumn,
    #[error("header column {index} is `{found}`, expected `f{index}`")]
    BadFeatureColumn { index: usize, found: String },
    #[error("line {line}: expected {expected} fields, found {found}")]
    Ragged { line: u64, expected: usize, found: usize },
    #[error("line {line}: column `{column}` holds non-numeric value `{value}`")]
    NonNumeric { line: u64, column: String, value: String },
    #[error("line {line}: label `{value}` is negative")]
    NegativeLabel { line: u64, value: String },
    #[error("file contains no data rows")]
    NoRows,
    #[error(transparent)]
    Dataset(#[from] DataError),
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DataFileError + '_ {
    move |source| DataFileError::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_csv(path: &Path) -> Result<Dataset, DataFileError> {
    let file = File::open(path).map_err(io_err(path))?;
    read_csv(file)
}

/// Parses a dataset; `K` is one more than the largest label.
pub fn read_csv<R: io::Read>(reader: R) -> Result<Dataset, DataFileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .quoting(false)
        .from_reader(reader);
    let mut records = rdr.records();
    let header = match records.next() {
        None => return Err(DataFileError::Empty),
        Some(r) => r.map_err(|source| DataFileError::Csv { line: 1, source })?,
    };
    let columns: Vec<String> = header.iter().map(|c| c.trim().to_string()).collect();
    if columns.last().map(String::as_str) != Some("label") {
        return Err(DataFileError::MissingLabelColumn);
    }
    let dim = columns.len() - 1;
    for (index, found) in columns[..dim].iter().enumerate() {
        if *found != format!("f{index}") {
            return Err(DataFileError::BadFeatureColumn {
                index,
                found: found.clone(),
            });
        }
    }

    let mut features = Vec::new();
    let mut labels = Vec::new();
    for record in records {
        let record = record.map_err(|source| DataFileError::Csv {
            line: source.position().map_or(0, |p| p.line()),
            source,
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != columns.len() {
            return Err(DataFileError::Ragged {
                line,
                expected: columns.len(),
                found: record.len(),
            });
        }
        for (j, cell) in record.iter().take(dim).enumerate() {
            let v: f64 = cell
                .trim()
                .parse()
                .ok()
                .filter(|v: &f64| v.is_finite())
                .ok_or_else(|| DataFileError::NonNumeric {
                    line,
                    column: columns[j].clone(),
                    value: cell.to_string(),
                })?;
            features.push(v);
        }
        let raw = record[dim].trim();
        let label: i64 = raw.parse().map_err(|_| DataFileError::NonNumeric {
            line,
            column: "label".into(),
            value: raw.to_string(),
        })?;
        if label < 0 {
            return Err(DataFileError::NegativeLabel {
                line,
                value: raw.to_string(),
            });
        }
        labels.push(label as usize);
    }
    if labels.is_empty() {
        return Err(DataFileError::NoRows);
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Ok(Dataset::new(features, labels, dim, num_classes)?)
}

pub fn save_csv(path: &Path, data: &Dataset) -> Result<(), DataFileError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    write_csv(&mut out, data).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

/// Floats are written in shortest round-trip form, so reading back is exact.
pub fn write_csv<W: Write>(out: &mut W, data: &Dataset) -> io::Result<()> {
    let header: Vec<String> = (0..data.dim()).map(|j| format!("f{j}")).collect();
    writeln!(out, "{},label", header.join(","))?;
    for i in 0..data.len() {
        for v in data.row(i) {
            write!(out, "{v},")?;
        }
        writeln!(out, "{}", data.label(i))?;
    }
    Ok(())
}
