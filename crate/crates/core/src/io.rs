//! Dataset CSV files.
//!
//! The header names every column: `A1..Ad`, `M`, `X1..Xp`, `Y`, in any
//! order. Treatment and covariate dimensions are inferred from the header.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Column {
    A(usize),
    M,
    X(usize),
    Y,
}

fn parse_header(header: &csv::StringRecord) -> Result<(Vec<Column>, usize, usize)> {
    let mut cols = Vec::with_capacity(header.len());
    for name in header.iter() {
        let name = name.trim();
        let col = match name {
            "M" => Column::M,
            "Y" => Column::Y,
            _ => {
                let (prefix, idx) = name.split_at(name.len().min(1));
                let idx: usize = idx
                    .parse()
                    .ok()
                    .filter(|&i| i >= 1)
                    .ok_or_else(|| Error::Config(format!("unrecognised column `{name}`")))?;
                match prefix {
                    "A" => Column::A(idx - 1),
                    "X" => Column::X(idx - 1),
                    _ => return Err(Error::Config(format!("unrecognised column `{name}`"))),
                }
            }
        };
        if cols.contains(&col) {
            return Err(Error::Config(format!("duplicate column `{name}`")));
        }
        cols.push(col);
    }
    let count = |pred: fn(&Column) -> Option<usize>| -> Result<usize> {
        let mut idx: Vec<usize> = cols.iter().filter_map(pred).collect();
        idx.sort_unstable();
        if idx.iter().enumerate().any(|(k, &i)| k != i) {
            return Err(Error::Config("column indices must run contiguously from 1".into()));
        }
        Ok(idx.len())
    };
    let d_a = count(|c| match c {
        Column::A(i) => Some(*i),
        _ => None,
    })?;
    let d_x = count(|c| match c {
        Column::X(i) => Some(*i),
        _ => None,
    })?;
    if d_a == 0 {
        return Err(Error::Config("header has no treatment column A1".into()));
    }
    if !cols.contains(&Column::M) || !cols.contains(&Column::Y) {
        return Err(Error::Config("header must contain M and Y".into()));
    }
    Ok((cols, d_a, d_x))
}

pub fn read_dataset(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let header = rdr.headers()?.clone();
    let (cols, d_a, d_x) = parse_header(&header)?;
    let (mut a, mut m, mut x, mut y) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let mut row_a = vec![0.0; d_a];
    let mut row_x = vec![0.0; d_x];
    for (r, record) in rdr.records().enumerate() {
        let row = r + 1;
        let record = record.map_err(|e| Error::Data {
            row,
            column: String::new(),
            reason: e.to_string(),
        })?;
        if record.len() != cols.len() {
            return Err(Error::Data {
                row,
                column: String::new(),
                reason: format!("expected {} fields, found {}", cols.len(), record.len()),
            });
        }
        let (mut mv, mut yv) = (0.0, 0.0);
        for ((field, col), name) in record.iter().zip(&cols).zip(header.iter()) {
            let v: f64 = field.trim().parse().map_err(|_| Error::Data {
                row,
                column: name.to_string(),
                reason: format!("`{field}` is not a number"),
            })?;
            if !v.is_finite() {
                return Err(Error::Data {
                    row,
                    column: name.to_string(),
                    reason: "non-finite value".into(),
                });
            }
            match *col {
                Column::A(j) => row_a[j] = v,
                Column::X(j) => row_x[j] = v,
                Column::M => mv = v,
                Column::Y => yv = v,
            }
        }
        a.extend_from_slice(&row_a);
        x.extend_from_slice(&row_x);
        m.push(mv);
        y.push(yv);
    }
    Dataset::new(d_a, d_x, a, m, x, y)
}

pub fn load_dataset(path: impl AsRef<Path>) -> Result<Dataset> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|source| Error::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_dataset(file)
}

/// Writes the canonical header `A1..Ad,M,X1..Xp,Y`. Values use the shortest
/// representation that round-trips exactly.
pub fn write_dataset(data: &Dataset, writer: impl Write) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(writer);
    let mut header: Vec<String> = (1..=data.treatment_dim()).map(|j| format!("A{j}")).collect();
    header.push("M".into());
    header.extend((1..=data.covariate_dim()).map(|j| format!("X{j}")));
    header.push("Y".into());
    w.write_record(&header)?;
    let mut fields = Vec::with_capacity(header.len());
    for obs in data.rows() {
        fields.clear();
        fields.extend(obs.a.iter().map(|v| v.to_string()));
        fields.push(obs.m.to_string());
        fields.extend(obs.x.iter().map(|v| v.to_string()));
        fields.push(obs.y.to_string());
        w.write_record(&fields)?;
    }
    w.flush().map_err(|source| Error::Io {
        path: "<dataset>".into(),
        source,
    })?;
    Ok(())
}
