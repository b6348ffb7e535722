//! CSV and JSON files written and read by the experiment drivers.
//!
//! CSV files are UTF-8 with a header row and numbers in scientific notation
//! with 17 significant digits.

use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::discretization::StateTrajectory;
use crate::error::{Error, Result};
use crate::parameter::{KnotGrid, ParameterBounds, SplineParameter};

pub fn fmt_f64(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a CSV file with the given header and pre-formatted rows.
pub fn write_csv<P: AsRef<Path>>(path: P, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |e: csv::Error| format_err(path, e.to_string());
    let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = csv::Writer::from_writer(BufWriter::new(file));
    out.write_record(header).map_err(csv_err)?;
    for row in rows {
        out.write_record(&row).map_err(csv_err)?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

/// Reads a numeric CSV file, returning the header and the rows.
pub fn read_csv<P: AsRef<Path>>(path: P) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(file);
    let header: Vec<String> = reader
        .headers()
        .map_err(|e| format_err(path, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() {
        return Err(format_err(path, "empty file"));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record.map_err(|e| format_err(path, e.to_string()))?;
        let row = record
            .iter()
            .map(str::parse::<f64>)
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| format_err(path, format!("row {}: {e}", i + 1)))?;
        rows.push(row);
    }
    Ok((header, rows))
}

fn format_err(path: &Path, message: impl Into<String>) -> Error {
    Error::Format {
        path: path.to_path_buf(),
        message: message.into(),
    }
}

pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let path = path.as_ref();
    let text = serde_json::to_string_pretty(value).map_err(|e| format_err(path, e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
}

pub fn read_json<P: AsRef<Path>, T: for<'de> Deserialize<'de>>(path: P) -> Result<T> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| format_err(path, e.to_string()))
}

/// Sidecar metadata of a parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParameterMeta {
    pub bounds: ParameterBounds,
    pub m: usize,
    pub domain: [f64; 2],
}

pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("json")
}

/// Writes `knot,value` rows plus a JSON sidecar next to the CSV.
pub fn write_parameter<P: AsRef<Path>>(path: P, s: &SplineParameter, bounds: &ParameterBounds) -> Result<()> {
    let path = path.as_ref();
    let grid = s.grid();
    write_csv(
        path,
        &["knot", "value"],
        grid.knots()
            .into_iter()
            .zip(s.values())
            .map(|(u, v)| vec![fmt_f64(u), fmt_f64(*v)]),
    )?;
    write_json(
        sidecar_path(path),
        &ParameterMeta {
            bounds: *bounds,
            m: grid.intervals(),
            domain: [grid.lo(), grid.hi()],
        },
    )
}

/// Reads a parameter CSV; the knot grid comes from the sidecar when present
/// and is inferred from the first and last knot otherwise.
pub fn read_parameter<P: AsRef<Path>>(path: P) -> Result<(SplineParameter, Option<ParameterMeta>)> {
    let path = path.as_ref();
    let (header, rows) = read_csv(path)?;
    if header != ["knot", "value"] {
        return Err(format_err(path, "expected header knot,value"));
    }
    if rows.len() < 5 {
        return Err(format_err(path, "need at least 5 knots"));
    }
    let side = sidecar_path(path);
    let meta: Option<ParameterMeta> = if side.exists() { Some(read_json(&side)?) } else { None };
    let (lo, hi, m) = match &meta {
        Some(m) => (m.domain[0], m.domain[1], m.m),
        None => (rows[0][0], rows[rows.len() - 1][0], rows.len() - 1),
    };
    let grid: Arc<KnotGrid> = KnotGrid::new(lo, hi, m)?;
    if grid.n_knots() != rows.len() {
        return Err(format_err(path, "knot count disagrees with metadata"));
    }
    for (i, row) in rows.iter().enumerate() {
        if (row[0] - grid.knot(i)).abs() > 1e-9 * grid.spacing() {
            return Err(format_err(path, format!("knot {i} is not on the uniform grid")));
        }
    }
    let values = rows.iter().map(|r| r[1]).collect();
    Ok((SplineParameter::fit(grid, values)?, meta))
}

/// Trajectory export with columns `t, p_0..p_n, u_0..u_{n-1}`.
pub fn write_trajectory<P: AsRef<Path>>(path: P, traj: &StateTrajectory) -> Result<()> {
    let n_p = traj.p.first().map_or(0, Vec::len);
    let n_u = traj.u.first().map_or(0, Vec::len);
    let mut header: Vec<String> = vec!["t".into()];
    header.extend((0..n_p).map(|j| format!("p_{j}")));
    header.extend((0..n_u).map(|e| format!("u_{e}")));
    let header_ref: Vec<&str> = header.iter().map(String::as_str).collect();
    let times = traj.times();
    write_csv(
        path,
        &header_ref,
        (0..traj.len()).map(|k| {
            let mut row = vec![fmt_f64(times[k])];
            row.extend(traj.p[k].iter().map(|v| fmt_f64(*v)));
            row.extend(traj.u[k].iter().map(|v| fmt_f64(*v)));
            row
        }),
    )
}
