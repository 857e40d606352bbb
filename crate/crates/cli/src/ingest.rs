//! Clustered count files: CSV with header `cluster_id,y,n`.

use std::collections::HashMap;
use std::io::{Read, Write};
use std::path::Path;

use hcl_core::estimation::HistoricalData;

use crate::error::{invalid, CliError, Result};
use crate::format::sig6;

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub ids: Vec<String>,
    pub data: HistoricalData,
}

pub fn ingest(path: &Path) -> Result<Dataset> {
    let file = std::fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    parse(file).map_err(|e| match e {
        CliError::Validation(msg) => invalid(format!("{}: {msg}", path.display())),
        other => other,
    })
}

pub fn parse(reader: impl Read) -> Result<Dataset> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| invalid(format!("unreadable header: {e}")))?.clone();
    let column = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| invalid(format!("missing column `{name}` (expected header cluster_id,y,n)")))
    };
    let (id_col, y_col, n_col) = (column("cluster_id")?, column("y")?, column("n")?);

    let mut ids = Vec::new();
    let mut y = Vec::new();
    let mut n = Vec::new();
    let mut seen: HashMap<String, u64> = HashMap::new();
    for record in rdr.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            invalid(format!("line {line}: {e}"))
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let id = &record[id_col];
        if id.is_empty() {
            return Err(invalid(format!("line {line}: empty cluster_id")));
        }
        if let Some(first) = seen.insert(id.to_string(), line) {
            return Err(invalid(format!("line {line}: duplicate cluster_id `{id}` (first seen on line {first})")));
        }
        let count: u64 = record[y_col]
            .parse()
            .map_err(|_| invalid(format!("line {line}: y must be a non-negative integer, got `{}`", &record[y_col])))?;
        let offset: f64 = record[n_col]
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite() && *v > 0.0)
            .ok_or_else(|| invalid(format!("line {line}: n must be a positive number, got `{}`", &record[n_col])))?;
        ids.push(id.to_string());
        y.push(count);
        n.push(offset);
    }
    if ids.is_empty() {
        return Err(invalid("no data rows"));
    }
    Ok(Dataset { ids, data: HistoricalData::from_counts(&y, &n)? })
}

pub fn write_dataset(out: impl Write, ids: &[String], y: &[u64], n: &[f64]) -> Result<(), csv::Error> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["cluster_id", "y", "n"])?;
    for ((id, y), n) in ids.iter().zip(y).zip(n) {
        w.write_record([id.as_str(), &y.to_string(), &sig6(*n)])?;
    }
    w.flush()?;
    Ok(())
}
