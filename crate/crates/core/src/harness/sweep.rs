//! Grids of experiments and their CSV results.

use std::io::{Read, Write};
use std::path::Path;

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::experiment::{load_inputs, run_with_inputs, ResultRow, RunOutcome};
use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 9] = [
    "config_id",
    "codec",
    "k",
    "N",
    "bytes_total",
    "seed",
    "accuracy",
    "wall_ms",
    "error",
];

/// Runs every (config, seed) pair in parallel. Rows come back ordered by
/// config id, then seed, whatever order the runs finish in.
pub fn run_sweep(configs: &[ExperimentConfig]) -> Result<Vec<RunOutcome>> {
    if configs.is_empty() {
        return Err(Error::Empty("sweep grid"));
    }
    let inputs: Vec<_> = configs.par_iter().map(load_inputs).collect();
    let jobs: Vec<(usize, u64)> = configs
        .iter()
        .enumerate()
        .flat_map(|(i, c)| c.seeds.iter().map(move |&s| (i, s)))
        .collect();
    let mut out: Vec<RunOutcome> = jobs
        .par_iter()
        .map(|&(i, seed)| match &inputs[i] {
            Ok(inp) => run_with_inputs(&configs[i], inp, seed),
            Err(e) => RunOutcome {
                row: ResultRow {
                    config_id: configs[i].id.clone(),
                    codec: configs[i].codec.kind().to_string(),
                    k: configs[i].codec.parameter_string(),
                    n: 0,
                    bytes_total: 0,
                    seed,
                    accuracy: None,
                    wall_ms: 0,
                    error: Some(e.to_string()),
                },
                curve: Vec::new(),
            },
        })
        .collect();
    out.sort_by(|a, b| (&a.row.config_id, a.row.seed).cmp(&(&b.row.config_id, b.row.seed)));
    Ok(out)
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::format("csv", format!("{other:?}")),
    }
}

pub fn write_csv<W: Write>(rows: &[ResultRow], destination: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(destination);
    w.write_record(CSV_HEADER).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            r.config_id.clone(),
            r.codec.clone(),
            r.k.clone(),
            r.n.to_string(),
            r.bytes_total.to_string(),
            r.seed.to_string(),
            r.accuracy.map_or(String::new(), |a| format!("{a:.6}")),
            r.wall_ms.to_string(),
            r.error.clone().unwrap_or_default(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_csv_file(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    write_csv(rows, std::fs::File::create(path)?)
}

pub fn read_csv<R: Read>(source: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(source);
    let header = r.headers().map_err(csv_err)?;
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::format(
            "csv header",
            format!("expected {CSV_HEADER:?}"),
        ));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let field = |i: usize| rec.get(i).unwrap_or("");
        fn num<T: std::str::FromStr>(name: &'static str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::format(name, format!("cannot parse `{v}`")))
        }
        rows.push(ResultRow {
            config_id: field(0).to_string(),
            codec: field(1).to_string(),
            k: field(2).to_string(),
            n: num("N", field(3))?,
            bytes_total: num("bytes_total", field(4))?,
            seed: num("seed", field(5))?,
            accuracy: match field(6) {
                "" => None,
                v => Some(num("accuracy", v)?),
            },
            wall_ms: num("wall_ms", field(7))?,
            error: Some(field(8)).filter(|e| !e.is_empty()).map(str::to_string),
        });
    }
    Ok(rows)
}

pub fn read_csv_file(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    read_csv(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(id: &str, acc: Option<f64>, err: Option<&str>) -> ResultRow {
        ResultRow {
            config_id: id.into(),
            codec: "quantize".into(),
            k: "16".into(),
            n: 799,
            bytes_total: 51200,
            seed: 2,
            accuracy: acc,
            wall_ms: 12,
            error: err.map(str::to_string),
        }
    }

    #[test]
    fn csv_round_trip() {
        let rows = vec![
            row("a", Some(0.8125), None),
            row("b,c", None, Some("bad \"thing\"")),
        ];
        let mut buf = Vec::new();
        write_csv(&rows, &mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("config_id,codec,k,N,bytes_total,seed,accuracy,wall_ms,error\n"));
        assert_eq!(read_csv(&buf[..]).unwrap(), rows);
    }

    #[test]
    fn rejects_foreign_header() {
        assert!(read_csv(&b"a,b\n1,2\n"[..]).is_err());
    }
}
