//! Per-step rollout records and their CSV form.
//!
//! Columns: `t, q_1..q_n, v_1..v_n, h_min, nearest_pair, qp_status, event`.
//! Floats are written in Rust's shortest round-trip form, so identical runs
//! produce identical bytes.

use std::io::Write;

use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct TraceRow {
    pub t: f64,
    pub q: Vec<f64>,
    /// Velocity applied over the step starting at `t`.
    pub v: Vec<f64>,
    /// Minimum signed distance at `q`.
    pub h_min: f64,
    pub nearest_pair: String,
    pub qp_status: String,
    /// Scene events applied at this step, `;`-separated.
    pub event: String,
}

pub fn header(n: usize) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=n).map(|i| format!("q_{i}")));
    h.extend((1..=n).map(|i| format!("v_{i}")));
    h.extend(["h_min", "nearest_pair", "qp_status", "event"].map(String::from));
    h
}

pub fn write_csv<W: Write>(rows: &[TraceRow], n: usize, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(n))?;
    for r in rows {
        if r.q.len() != n || r.v.len() != n {
            return Err(Error::invalid("trace row width disagrees with header"));
        }
        let mut rec: Vec<String> = Vec::with_capacity(2 * n + 5);
        rec.push(r.t.to_string());
        rec.extend(r.q.iter().map(f64::to_string));
        rec.extend(r.v.iter().map(f64::to_string));
        rec.push(r.h_min.to_string());
        rec.push(r.nearest_pair.clone());
        rec.push(r.qp_status.clone());
        rec.push(r.event.clone());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn to_csv_string(rows: &[TraceRow], n: usize) -> Result<String> {
    let mut buf = Vec::new();
    write_csv(rows, n, &mut buf)?;
    String::from_utf8(buf).map_err(Error::parse)
}

pub fn read_csv(s: &str) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(s.as_bytes());
    let width = r.headers()?.len();
    if width < 5 || (width - 5) % 2 != 0 {
        return Err(Error::parse(format!("trace header has {width} columns")));
    }
    let n = (width - 5) / 2;
    let num = |s: &str, row: usize| -> Result<f64> { s.trim().parse::<f64>().map_err(|e| Error::parse_entry(row, format!("{s:?}: {e}"))) };
    let mut rows = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let col = |k: usize| rec.get(k).unwrap_or_default();
        rows.push(TraceRow {
            t: num(col(0), i)?,
            q: (1..=n).map(|k| num(col(k), i)).collect::<Result<_>>()?,
            v: (n + 1..=2 * n).map(|k| num(col(k), i)).collect::<Result<_>>()?,
            h_min: num(col(2 * n + 1), i)?,
            nearest_pair: col(2 * n + 2).to_string(),
            qp_status: col(2 * n + 3).to_string(),
            event: col(2 * n + 4).to_string(),
        });
    }
    Ok(rows)
}
