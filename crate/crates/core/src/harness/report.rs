//! Plot-ready series from result rows.
//!
//! Each codec becomes one series. For every x value the mean accuracy over
//! successful seeds goes to `<codec>.mean.dat` (`x mean`) and the range
//! across seeds to `<codec>.band.dat` (`x min max`).

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::experiment::ResultRow;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XAxis {
    Bytes,
    K,
    N,
}

impl FromStr for XAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bytes" | "bytes_total" => Ok(XAxis::Bytes),
            "k" => Ok(XAxis::K),
            "n" => Ok(XAxis::N),
            _ => Err(Error::Config(format!(
                "x axis must be bytes, k or n, got `{s}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Point {
    pub x: f64,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
    pub runs: usize,
}

fn x_of(row: &ResultRow, axis: XAxis) -> Option<f64> {
    match axis {
        XAxis::Bytes => Some(row.bytes_total as f64),
        XAxis::N => Some(row.n as f64),
        XAxis::K => row.k.parse().ok(),
    }
}

/// Mean and spread per (codec, x). Failed rows and rows without an x value
/// are skipped.
pub fn summarize(rows: &[ResultRow], axis: XAxis) -> BTreeMap<String, Vec<Point>> {
    let mut groups: BTreeMap<String, BTreeMap<u64, (f64, Vec<f64>)>> = BTreeMap::new();
    for r in rows {
        let (Some(acc), Some(x), true) = (r.accuracy, x_of(r, axis), r.error.is_none()) else {
            continue;
        };
        groups
            .entry(r.codec.clone())
            .or_default()
            .entry(x.to_bits())
            .or_insert_with(|| (x, Vec::new()))
            .1
            .push(acc);
    }
    groups
        .into_iter()
        .map(|(codec, xs)| {
            let mut pts: Vec<Point> = xs
                .into_values()
                .map(|(x, accs)| {
                    let n = accs.len() as f64;
                    let mean = accs.iter().sum::<f64>() / n;
                    Point {
                        x,
                        mean,
                        min: accs.iter().copied().fold(f64::INFINITY, f64::min),
                        max: accs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
                        runs: accs.len(),
                    }
                })
                .collect();
            pts.sort_by(|a, b| a.x.total_cmp(&b.x));
            (codec, pts)
        })
        .collect()
}

/// Writes the `.dat` files into `out_dir` and returns their paths.
pub fn emit_report(
    rows: &[ResultRow],
    axis: XAxis,
    out_dir: impl AsRef<Path>,
) -> Result<Vec<PathBuf>> {
    if rows.is_empty() {
        return Err(Error::Empty("result rows"));
    }
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    for (codec, pts) in summarize(rows, axis) {
        let mut mean = String::new();
        let mut band = String::new();
        for p in &pts {
            let _ = writeln!(mean, "{} {:.6}", p.x, p.mean);
            let _ = writeln!(band, "{} {:.6} {:.6}", p.x, p.min, p.max);
        }
        for (suffix, body) in [("mean", mean), ("band", band)] {
            let path = out_dir.join(format!("{codec}.{suffix}.dat"));
            fs::write(&path, body)?;
            written.push(path);
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(codec: &str, n: usize, acc: f64) -> ResultRow {
        ResultRow {
            config_id: format!("{codec}{n}"),
            codec: codec.into(),
            k: "16".into(),
            n,
            bytes_total: n as u64 * 10,
            seed: 0,
            accuracy: Some(acc),
            wall_ms: 0,
            error: None,
        }
    }

    #[test]
    fn means_and_bands() {
        let mut failed = row("identity", 10, 0.0);
        failed.error = Some("x".into());
        failed.accuracy = None;
        let rows = vec![
            row("identity", 100, 0.5),
            row("identity", 10, 0.2),
            row("identity", 10, 0.4),
            failed,
            row("quantize", 10, 0.9),
        ];
        let s = summarize(&rows, XAxis::N);
        let id = &s["identity"];
        assert_eq!(id.len(), 2);
        assert_eq!(id[0].x, 10.0);
        assert!((id[0].mean - 0.3).abs() < 1e-12);
        assert_eq!((id[0].min, id[0].max), (0.2, 0.4));
        assert_eq!(id[0].runs, 2);
        assert_eq!(s["quantize"][0].min, s["quantize"][0].max);

        let dir = tempfile::tempdir().unwrap();
        let files = emit_report(&rows, XAxis::Bytes, dir.path()).unwrap();
        assert_eq!(files.len(), 4);
        let mean = fs::read_to_string(dir.path().join("identity.mean.dat")).unwrap();
        assert_eq!(mean, "100 0.300000\n1000 0.500000\n");
        let band = fs::read_to_string(dir.path().join("identity.band.dat")).unwrap();
        assert_eq!(band, "100 0.200000 0.400000\n1000 0.500000 0.500000\n");
    }

    #[test]
    fn axis_names() {
        assert_eq!("bytes".parse::<XAxis>().unwrap(), XAxis::Bytes);
        assert_eq!("N".parse::<XAxis>().unwrap(), XAxis::N);
        assert!("time".parse::<XAxis>().is_err());
    }
}
