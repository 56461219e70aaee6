use std::fs::File;
use std::io::{self, Read};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand};
use log::{error, info};

use compreplay::codec::autoencoder::{
    read_weights_file, write_weights_file, AeWeights, FAEW_MAGIC,
};
use compreplay::codec::quantize::{read_stats_file, write_stats_file, FSTA_MAGIC};
use compreplay::harness::sweep::{read_csv_file, write_csv, write_csv_file};
use compreplay::harness::{
    emit_report, generate, load_config, load_grid, run_experiment, run_sweep, ResultRow,
    RunOutcome, SynthSpec, XAxis,
};
use compreplay::head::{Head, FHED_MAGIC};
use compreplay::rng;
use compreplay::tensor_io::{read_dataset_file, write_dataset_file, FTCH_MAGIC};

#[derive(Parser)]
#[command(
    name = "compreplay",
    version,
    about = "Memory-budgeted compressed replay experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Validate FTCH, FSTA, FAEW or FHED files.
    Ingest {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    /// Run one config file over its seeds.
    Run {
        config: PathBuf,
        /// CSV destination; stdout when omitted.
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Run every cell of a grid file.
    Sweep {
        grid: PathBuf,
        #[arg(short, long)]
        out: Option<PathBuf>,
    },
    /// Turn a results CSV into per-codec series files.
    Report {
        csv: PathBuf,
        #[arg(short, long)]
        out: PathBuf,
        /// bytes, k or n.
        #[arg(short, long, default_value = "bytes")]
        x: XAxis,
    },
    /// Write a synthetic Gaussian feature set.
    Synth {
        #[arg(short, long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        classes: u32,
        /// Comma-separated tensor shape, e.g. `128` or `3,16,16`.
        #[arg(long, default_value = "128")]
        shape: String,
        #[arg(long, default_value_t = 1000)]
        train_per_class: usize,
        #[arg(long, default_value_t = 200)]
        test_per_class: usize,
        #[arg(long, default_value_t = 100)]
        pretrain_per_class: usize,
        #[arg(long, default_value_t = 3.0)]
        separation: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write random autoencoder weights with this bottleneck.
        #[arg(long)]
        ae_bottleneck: Option<usize>,
        #[arg(long, default_value_t = 16)]
        ae_hidden: usize,
    },
}

fn magic_of(path: &Path) -> anyhow::Result<[u8; 4]> {
    let mut m = [0u8; 4];
    File::open(path)?
        .read_exact(&mut m)
        .with_context(|| format!("{} is shorter than a magic number", path.display()))?;
    Ok(m)
}

fn ingest_one(path: &Path) -> anyhow::Result<String> {
    let magic = magic_of(path)?;
    Ok(match &magic {
        m if m == FTCH_MAGIC => {
            let d = read_dataset_file(path)?;
            format!(
                "FTCH {} samples, shape {:?}, {:?}, classes {:?}",
                d.len(),
                d.shape(),
                d.dtype(),
                d.class_ids()
            )
        }
        m if m == FSTA_MAGIC => {
            let s = read_stats_file(path)?;
            format!("FSTA lo {} hi {}", s.lo, s.hi)
        }
        m if m == FAEW_MAGIC => {
            let w = read_weights_file(path)?;
            format!(
                "FAEW k_ae {}, {} -> {} channels, {} parameter bytes",
                w.bottleneck(),
                w.input_channels(),
                w.output_channels(),
                w.parameter_bytes()
            )
        }
        m if m == FHED_MAGIC => {
            let h = Head::read_checkpoint_file(path)?;
            format!(
                "FHED {:?}, {} inputs, {} classes",
                h.config().architecture,
                h.config().input_dim,
                h.config().class_count
            )
        }
        m => bail!("unrecognised magic {:?}", String::from_utf8_lossy(m)),
    })
}

fn emit_rows(outcomes: &[RunOutcome], out: Option<&Path>) -> anyhow::Result<bool> {
    let rows: Vec<ResultRow> = outcomes.iter().map(|o| o.row.clone()).collect();
    for o in outcomes {
        if !o.curve.is_empty() {
            info!(
                "{} seed {} per-task accuracy {:?}",
                o.row.config_id, o.row.seed, o.curve
            );
        }
        if let Some(e) = &o.row.error {
            error!("{} seed {}: {e}", o.row.config_id, o.row.seed);
        }
    }
    match out {
        Some(p) => write_csv_file(&rows, p).with_context(|| format!("writing {}", p.display()))?,
        None => write_csv(&rows, io::stdout().lock())?,
    }
    Ok(rows.iter().all(ResultRow::succeeded))
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Ingest { files } => {
            let mut ok = true;
            for f in &files {
                match ingest_one(f) {
                    Ok(summary) => println!("{}: ok, {summary}", f.display()),
                    Err(e) => {
                        println!("{}: invalid, {e:#}", f.display());
                        ok = false;
                    }
                }
            }
            Ok(ok)
        }
        Command::Run { config, out } => {
            let cfg =
                load_config(&config).with_context(|| format!("loading {}", config.display()))?;
            emit_rows(&run_experiment(&cfg), out.as_deref())
        }
        Command::Sweep { grid, out } => {
            let cfgs = load_grid(&grid).with_context(|| format!("loading {}", grid.display()))?;
            emit_rows(&run_sweep(&cfgs)?, out.as_deref())
        }
        Command::Report { csv, out, x } => {
            let rows = read_csv_file(&csv).with_context(|| format!("reading {}", csv.display()))?;
            for p in emit_report(&rows, x, &out)? {
                println!("{}", p.display());
            }
            Ok(true)
        }
        Command::Synth {
            out,
            classes,
            shape,
            train_per_class,
            test_per_class,
            pretrain_per_class,
            separation,
            seed,
            ae_bottleneck,
            ae_hidden,
        } => {
            let shape: Vec<usize> = shape
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<_, _>>()
                .context("shape must be comma-separated integers")?;
            let spec = SynthSpec {
                classes,
                shape: shape.clone(),
                train_per_class,
                test_per_class,
                pretrain_per_class,
                separation,
                seed,
            };
            let data = generate(&spec)?;
            std::fs::create_dir_all(&out)?;
            write_dataset_file(&data.train, out.join("train.ftch"))?;
            write_dataset_file(&data.test, out.join("test.ftch"))?;
            write_stats_file(data.stats, out.join("pretrain.fsta"))?;
            if let Some(k) = ae_bottleneck {
                let channels = *shape.first().unwrap_or(&0);
                let mut r = rng::substream(seed, "synth-ae");
                let w = AeWeights::random(channels, ae_hidden, k, 0.2, &mut r)?;
                w.latent_shape(&shape)?;
                write_weights_file(&w, out.join("ae.faew"))?;
            }
            println!("wrote synthetic set to {}", out.display());
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e:#}");
            ExitCode::from(2)
        }
    }
}
