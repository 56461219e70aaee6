//! The command-line tool, driven as a subprocess.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_compreplay"))
        .args(args)
        .current_dir(dir)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn synth(dir: &Path) {
    let out = bin(
        &[
            "synth",
            "-o",
            "data",
            "--classes",
            "4",
            "--shape",
            "2,8,8",
            "--train-per-class",
            "30",
            "--test-per-class",
            "10",
            "--ae-bottleneck",
            "2",
        ],
        dir,
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

#[test]
fn synth_then_ingest() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let out = bin(
        &[
            "ingest",
            "data/train.ftch",
            "data/test.ftch",
            "data/pretrain.fsta",
            "data/ae.faew",
        ],
        dir.path(),
    );
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text.matches(": ok,").count(), 4, "{text}");
    assert!(text.contains("120 samples"));

    fs::write(dir.path().join("junk.ftch"), b"FTCH\x01\x00").unwrap();
    let out = bin(&["ingest", "data/train.ftch", "junk.ftch"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8(out.stdout)
        .unwrap()
        .contains("junk.ftch: invalid"));
}

#[test]
fn run_writes_csv_and_reports_failures_in_exit_code() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let base = "train = data/train.ftch\ntest = data/test.ftch\nstats = data/pretrain.fsta\nseeds = 0,1\ncycles = 2\n";
    fs::write(
        dir.path().join("good.cfg"),
        format!("{base}codec = quantize\nk = 16\nbudget = 8KiB\n"),
    )
    .unwrap();
    let out = bin(&["run", "good.cfg", "-o", "good.csv"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("good.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(
        lines[0],
        "config_id,codec,k,N,bytes_total,seed,accuracy,wall_ms,error"
    );
    assert_eq!(lines.len(), 3);
    assert!(lines[1].starts_with("run,quantize,16,"));

    fs::write(dir.path().join("tiny.cfg"), format!("{base}budget = 4\n")).unwrap();
    let out = bin(&["run", "tiny.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    let stdout = String::from_utf8(out.stdout).unwrap();
    assert!(stdout.contains("no slots"), "{stdout}");

    fs::write(dir.path().join("broken.cfg"), "train = x\n").unwrap();
    let out = bin(&["run", "broken.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_and_report() {
    let dir = tempfile::tempdir().unwrap();
    synth(dir.path());
    let grid = "train = data/train.ftch\ntest = data/test.ftch\nstats = data/pretrain.fsta\n\
                ae_weights = data/ae.faew\nseeds = 0,1\ncycles = 2\nslots = 20\n\
                [identity]\n[quantize]\ncodec = quantize\nk = 8\n[thin]\ncodec = thin\nk = 0.5\n\
                [autoencode]\ncodec = autoencode\nk = 2\n";
    fs::write(dir.path().join("grid.cfg"), grid).unwrap();
    let out = bin(&["sweep", "grid.cfg", "-o", "rows.csv"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let csv = fs::read_to_string(dir.path().join("rows.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 4 * 2);

    let out = bin(
        &["report", "rows.csv", "-o", "plots", "-x", "n"],
        dir.path(),
    );
    assert!(out.status.success());
    for codec in ["identity", "quantize", "thin", "autoencode"] {
        let mean = fs::read_to_string(dir.path().join(format!("plots/{codec}.mean.dat"))).unwrap();
        assert_eq!(mean.lines().count(), 1);
        assert!(mean.starts_with("20 "));
        let band = fs::read_to_string(dir.path().join(format!("plots/{codec}.band.dat"))).unwrap();
        assert_eq!(band.split_whitespace().count(), 3);
    }
}
