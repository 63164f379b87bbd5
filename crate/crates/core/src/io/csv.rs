//! Diagnostics CSV: fixed column order, header written once, 17 significant
//! digits per value.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;

use crate::diagnostics::DiagnosticsRecord;
use crate::error::{Error, Result};

pub fn header_line() -> String {
    DiagnosticsRecord::COLUMNS.join(",")
}

pub fn format_record(r: &DiagnosticsRecord) -> String {
    r.values()
        .iter()
        .map(|v| format!("{v:.16e}"))
        .collect::<Vec<_>>()
        .join(",")
}

/// Appends one row, writing the header first if the file is new or empty.
pub fn append_diagnostics(record: &DiagnosticsRecord, path: &Path) -> Result<()> {
    append_many(std::slice::from_ref(record), path)
}

/// Appends several rows with a single open.
pub fn append_many(records: &[DiagnosticsRecord], path: &Path) -> Result<()> {
    let fresh = fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    let mut out = String::new();
    if fresh {
        out.push_str(&header_line());
        out.push('\n');
    }
    for r in records {
        out.push_str(&format_record(r));
        out.push('\n');
    }
    f.write_all(out.as_bytes())?;
    Ok(())
}

pub fn read_diagnostics(path: &Path) -> Result<Vec<DiagnosticsRecord>> {
    let text = fs::read_to_string(path)?;
    let bad = |detail: String| Error::Format {
        path: path.to_path_buf(),
        detail,
    };
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == header_line() => {}
        Some(h) => return Err(bad(format!("unexpected header {h:?}"))),
        None => return Err(bad("empty file".into())),
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            let vals: Vec<f64> = l
                .split(',')
                .map(|s| s.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|_| bad(format!("row {}: not numeric", i + 1)))?;
            let arr: [f64; 13] = vals
                .try_into()
                .map_err(|v: Vec<f64>| bad(format!("row {}: {} columns, expected 13", i + 1, v.len())))?;
            Ok(DiagnosticsRecord::from_values(&arr))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(t: f64) -> DiagnosticsRecord {
        let mut v = [0.0; 13];
        for (i, x) in v.iter_mut().enumerate() {
            *x = (i as f64 + 1.0) / 3.0 + t;
        }
        v[0] = t;
        DiagnosticsRecord::from_values(&v)
    }

    #[test]
    fn two_appends_give_one_header_and_two_rows() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        append_diagnostics(&rec(0.0), &path).unwrap();
        append_diagnostics(&rec(0.1), &path).unwrap();
        let text = fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(
            lines[0],
            "t,mass,kinetic,interaction,bulk,total_energy,grad_u_sq,grad_mu_sq,forcing_power,identity_residual,grad_control_margin,phi_min,phi_max"
        );
        assert_eq!(text.matches("total_energy").count(), 1);
    }

    #[test]
    fn values_round_trip_through_text() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.csv");
        let rs = [rec(0.0), rec(1.0 / 7.0), rec(1e-300)];
        append_many(&rs, &path).unwrap();
        let back = read_diagnostics(&path).unwrap();
        assert_eq!(back.len(), 3);
        for (a, b) in rs.iter().zip(&back) {
            for (x, y) in a.values().iter().zip(b.values()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        let row = format_record(&rs[1]);
        let digits = row.split(',').next().unwrap().split('e').next().unwrap().replace(['.', '-'], "");
        assert_eq!(digits.len(), 17);
    }
}
