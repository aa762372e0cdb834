//! CSV ingestion of partitioned datasets and CSV export of simulated ones.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use convexiv_core::{Dataset, PartitionedDataset};
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("cannot open {path}: {source}")]
    Open {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("column(s) not found in header: {}", .0.join(", "))]
    MissingColumns(Vec<String>),
    #[error("column spec lists no {0} column")]
    EmptySpec(&'static str),
    #[error("non-numeric cells in {} row(s): {}", .0.len(), describe_bad_rows(.0))]
    BadCells(Vec<BadCell>),
    #[error(transparent)]
    Shape(#[from] convexiv_core::Error),
    #[error("write failed: {0}")]
    Write(#[from] std::io::Error),
}

/// First unparseable cell of a rejected data row (rows counted from 1,
/// excluding the header).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BadCell {
    pub row: usize,
    pub column: String,
    pub value: String,
}

fn describe_bad_rows(rows: &[BadCell]) -> String {
    const SHOWN: usize = 10;
    let mut parts: Vec<String> = rows
        .iter()
        .take(SHOWN)
        .map(|b| format!("row {} ({} = {:?})", b.row, b.column, b.value))
        .collect();
    if rows.len() > SHOWN {
        parts.push(format!("and {} more", rows.len() - SHOWN));
    }
    parts.join(", ")
}

/// Which CSV columns play which role.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
pub struct ColumnSpec {
    pub response: String,
    pub endogenous: Vec<String>,
    pub exogenous: Vec<String>,
    pub instruments: Vec<String>,
    pub intercept: bool,
}

impl ColumnSpec {
    /// Coefficient labels in assembled order: endogenous, exogenous, intercept.
    pub fn terms(&self) -> Vec<String> {
        let mut terms: Vec<String> = self.endogenous.iter().chain(&self.exogenous).cloned().collect();
        if self.intercept {
            terms.push("(intercept)".to_string());
        }
        terms
    }
}

pub fn load_csv(path: &Path, spec: &ColumnSpec) -> Result<PartitionedDataset, IoError> {
    let file = File::open(path).map_err(|source| IoError::Open {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, spec)
}

fn parse_cell(raw: &str) -> Option<f64> {
    raw.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

pub fn read_csv<R: Read>(reader: R, spec: &ColumnSpec) -> Result<PartitionedDataset, IoError> {
    if spec.response.is_empty() {
        return Err(IoError::EmptySpec("response"));
    }
    if spec.endogenous.is_empty() {
        return Err(IoError::EmptySpec("endogenous"));
    }
    if spec.instruments.is_empty() {
        return Err(IoError::EmptySpec("instrument"));
    }
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let header = rdr.headers()?.clone();
    let lookup = |name: &str| header.iter().position(|h| h == name);
    let wanted: Vec<&String> = std::iter::once(&spec.response)
        .chain(&spec.endogenous)
        .chain(&spec.exogenous)
        .chain(&spec.instruments)
        .collect();
    let missing: Vec<String> = wanted.iter().filter(|c| lookup(c).is_none()).map(|c| c.to_string()).collect();
    if !missing.is_empty() {
        return Err(IoError::MissingColumns(missing));
    }
    let index: Vec<usize> = wanted.iter().map(|c| lookup(c).expect("checked above")).collect();

    let mut values: Vec<Vec<f64>> = vec![Vec::new(); index.len()];
    let mut bad = Vec::new();
    for (r, record) in rdr.records().enumerate() {
        let record = record?;
        let mut row = Vec::with_capacity(index.len());
        let mut first_bad = None;
        for (&col, name) in index.iter().zip(&wanted) {
            let raw = record.get(col).unwrap_or("");
            match parse_cell(raw) {
                Some(v) => row.push(v),
                None => {
                    first_bad.get_or_insert_with(|| BadCell {
                        row: r + 1,
                        column: name.to_string(),
                        value: raw.to_string(),
                    });
                }
            }
        }
        match first_bad {
            Some(b) => bad.push(b),
            None => values.iter_mut().zip(row).for_each(|(c, v)| c.push(v)),
        }
    }
    if !bad.is_empty() {
        return Err(IoError::BadCells(bad));
    }

    let n = values[0].len();
    let block = |cols: &[Vec<f64>]| {
        DMatrix::from_fn(n, cols.len(), |i, j| cols[j][i])
    };
    let (k1, k2) = (spec.endogenous.len(), spec.exogenous.len());
    let p = PartitionedDataset {
        y: DVector::from_vec(values[0].clone()),
        endogenous: block(&values[1..1 + k1]),
        exogenous: block(&values[1 + k1..1 + k1 + k2]),
        instruments: block(&values[1 + k1 + k2..]),
        intercept: spec.intercept,
    };
    // Shape checks (n > k, n > l, l >= k) happen on assembly.
    p.assemble()?;
    Ok(p)
}

/// Shortest decimal that parses back to the same `f64`; bit-exact on reload.
pub fn exact(v: f64) -> String {
    format!("{v:?}")
}

/// Write `y, x1..xk, z1..zl` with round-trip exact numbers.
pub fn write_dataset_csv<W: Write>(d: &Dataset, out: W) -> Result<(), IoError> {
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["y".to_string()];
    header.extend((1..=d.k()).map(|j| format!("x{j}")));
    header.extend((1..=d.l()).map(|j| format!("z{j}")));
    w.write_record(&header)?;
    for i in 0..d.n() {
        let mut rec = vec![exact(d.y()[i])];
        rec.extend(d.x().row(i).iter().map(|&v| exact(v)));
        rec.extend(d.z().row(i).iter().map(|&v| exact(v)));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Column spec matching the header produced by [`write_dataset_csv`].
pub fn simulated_columns(k: usize, l: usize) -> ColumnSpec {
    ColumnSpec {
        response: "y".into(),
        endogenous: (1..=k).map(|j| format!("x{j}")).collect(),
        exogenous: Vec::new(),
        instruments: (1..=l).map(|j| format!("z{j}")).collect(),
        intercept: false,
    }
}
