//! One experiment run: stream, memory, head, score.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};

use super::config::{Capacity, DataSource, ExperimentConfig, StatsSource, WeightsSource};
use super::stream::{build_task_stream, stream_task, OnlineSource};
use crate::codec::autoencoder::read_weights_file;
use crate::codec::quantize::read_stats_file;
use crate::codec::{Codebook, Codec, CodecConfig, StorageModel};
use crate::error::{Error, Result};
use crate::head::{init_head, Head};
use crate::memory::{max_slots, EpisodicMemory};
use crate::tensor_io::{read_dataset_file, Dataset};

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub config_id: String,
    pub codec: String,
    /// Codec parameter as text, empty for identity.
    pub k: String,
    pub n: usize,
    pub bytes_total: u64,
    pub seed: u64,
    pub accuracy: Option<f64>,
    pub wall_ms: u64,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn succeeded(&self) -> bool {
        self.error.is_none() && self.accuracy.is_some()
    }
}

/// A run's row plus accuracy after each task when requested.
#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub row: ResultRow,
    pub curve: Vec<f64>,
}

/// Datasets and codec resolved from a config, shared by all its seeds.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub train: Arc<Dataset>,
    pub test: Arc<Dataset>,
    pub codec: Codec,
}

fn load(source: &DataSource) -> Result<Arc<Dataset>> {
    match source {
        DataSource::File(p) => Ok(Arc::new(read_dataset_file(p)?)),
        DataSource::Memory(d) => Ok(Arc::clone(d)),
    }
}

pub fn build_codec(cfg: &ExperimentConfig) -> Result<Codec> {
    match cfg.codec {
        CodecConfig::Identity => Ok(Codec::Identity),
        CodecConfig::Thin { ratio } => Codec::thin(ratio),
        CodecConfig::Quantize { levels } => {
            let stats = match &cfg.stats {
                Some(StatsSource::File(p)) => read_stats_file(p)?,
                Some(StatsSource::Inline(s)) => *s,
                None => return Err(Error::Config("quantize needs range statistics".into())),
            };
            Ok(Codec::Quantize(Arc::new(Codebook::new(stats, levels)?)))
        }
        CodecConfig::Autoencode { bottleneck } => {
            let w = match &cfg.ae_weights {
                Some(WeightsSource::File(p)) => Arc::new(read_weights_file(p)?),
                Some(WeightsSource::Inline(w)) => Arc::clone(w),
                None => return Err(Error::Config("autoencode needs weights".into())),
            };
            if w.bottleneck() != bottleneck as usize {
                return Err(Error::Config(format!(
                    "config asks for k_ae = {bottleneck} but the weights have {}",
                    w.bottleneck()
                )));
            }
            Ok(Codec::Autoencode(w))
        }
    }
}

pub fn load_inputs(cfg: &ExperimentConfig) -> Result<Inputs> {
    cfg.validate()?;
    let train = load(&cfg.train)?;
    let test = load(&cfg.test)?;
    if train.shape() != test.shape() || train.dtype() != test.dtype() {
        return Err(Error::Shape(format!(
            "train is {:?} {:?} but test is {:?} {:?}",
            train.shape(),
            train.dtype(),
            test.shape(),
            test.dtype()
        )));
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::Empty("train or test set"));
    }
    Ok(Inputs {
        train,
        test,
        codec: build_codec(cfg)?,
    })
}

/// Slot count for the config on this data.
pub fn resolve_slots(cfg: &ExperimentConfig, inputs: &Inputs) -> Result<usize> {
    match cfg.capacity {
        Capacity::Slots(n) => Ok(n),
        Capacity::Budget(b) => {
            let sm: StorageModel = inputs.codec.storage_model(cfg.s_model);
            let n = max_slots(
                b,
                &cfg.codec,
                inputs.train.shape(),
                inputs.train.dtype(),
                &sm,
            )?;
            Ok(n as usize)
        }
    }
}

fn fail_row(
    cfg: &ExperimentConfig,
    seed: u64,
    n: usize,
    started: Instant,
    e: &Error,
) -> RunOutcome {
    RunOutcome {
        row: ResultRow {
            config_id: cfg.id.clone(),
            codec: cfg.codec.kind().to_string(),
            k: cfg.codec.parameter_string(),
            n,
            bytes_total: 0,
            seed,
            accuracy: None,
            wall_ms: started.elapsed().as_millis() as u64,
            error: Some(e.to_string()),
        },
        curve: Vec::new(),
    }
}

/// Runs one seed. Failures become rows with an error message instead of
/// propagating, so one bad cell does not abort a sweep.
pub fn run_with_inputs(cfg: &ExperimentConfig, inputs: &Inputs, seed: u64) -> RunOutcome {
    let started = Instant::now();
    let n = match resolve_slots(cfg, inputs) {
        Ok(n) => n,
        Err(e) => return fail_row(cfg, seed, 0, started, &e),
    };
    match run_inner(cfg, inputs, seed, n) {
        Ok((accuracy, bytes_total, curve)) => {
            let row = ResultRow {
                config_id: cfg.id.clone(),
                codec: cfg.codec.kind().to_string(),
                k: cfg.codec.parameter_string(),
                n,
                bytes_total,
                seed,
                accuracy: Some(accuracy),
                wall_ms: started.elapsed().as_millis() as u64,
                error: None,
            };
            info!(
                "{} seed {seed}: N={n} bytes={bytes_total} accuracy={accuracy:.4}",
                cfg.id
            );
            RunOutcome { row, curve }
        }
        Err(e) => fail_row(cfg, seed, n, started, &e),
    }
}

/// Streams every task of the training set through a fresh memory of `n`
/// slots. Returns the memory and the number of tasks.
pub fn fill_memory(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    seed: u64,
    n: usize,
) -> Result<(EpisodicMemory, usize)> {
    let stream = build_task_stream(&inputs.train, cfg.classes_per_task, seed)?;
    let mut source = OnlineSource::new((*inputs.train).clone());
    let mut memory = EpisodicMemory::new(n, inputs.codec.clone(), seed);
    for task in &stream.tasks {
        stream_task(task, &mut source, &mut memory)?;
    }
    Ok((memory, stream.len()))
}

/// Trains a fresh head on the decompressed memory. Only the memory is seen;
/// normalisation statistics come from the dump.
pub fn fit_head(
    cfg: &ExperimentConfig,
    memory: &EpisodicMemory,
    class_count: usize,
    seed: u64,
) -> Result<Head> {
    let data = memory.dump()?;
    let mut hc = cfg.head.clone();
    hc.input_dim = data.element_count();
    hc.class_count = class_count;
    hc.seed = seed;
    let mut head = init_head(&hc)?;
    let report = head.train(&data)?;
    debug!(
        "{} seed {seed}: trained on {} exemplars, final loss {:.4}",
        cfg.id,
        data.len(),
        report.final_loss
    );
    Ok(head)
}

/// Labels `0..=max` over train and test.
pub fn class_count(inputs: &Inputs) -> usize {
    inputs
        .train
        .class_ids()
        .into_iter()
        .chain(inputs.test.class_ids())
        .max()
        .map_or(0, |m| m as usize + 1)
}

fn train_and_score(
    cfg: &ExperimentConfig,
    memory: &EpisodicMemory,
    test: &Dataset,
    class_count: usize,
    seed: u64,
) -> Result<f64> {
    let head = fit_head(cfg, memory, class_count, seed)?;
    let seen: BTreeSet<u32> = memory.class_counts().keys().copied().collect();
    head.evaluate(test, &seen)
}

fn run_inner(
    cfg: &ExperimentConfig,
    inputs: &Inputs,
    seed: u64,
    n: usize,
) -> Result<(f64, u64, Vec<f64>)> {
    if n == 0 {
        return Err(Error::Config(
            "memory has no slots: the budget does not cover the fixed overhead plus one exemplar"
                .into(),
        ));
    }
    let class_count = class_count(inputs);
    let (memory, mut curve) = if cfg.per_task_eval {
        let stream = build_task_stream(&inputs.train, cfg.classes_per_task, seed)?;
        let mut source = OnlineSource::new((*inputs.train).clone());
        let mut memory = EpisodicMemory::new(n, inputs.codec.clone(), seed);
        let mut curve = Vec::new();
        for (t, task) in stream.tasks.iter().enumerate() {
            stream_task(task, &mut source, &mut memory)?;
            if t + 1 < stream.len() {
                curve.push(train_and_score(
                    cfg,
                    &memory,
                    &inputs.test,
                    class_count,
                    seed,
                )?);
            }
        }
        (memory, curve)
    } else {
        (fill_memory(cfg, inputs, seed, n)?.0, Vec::new())
    };
    debug!(
        "{} seed {seed}: memory {}/{} after the stream",
        cfg.id,
        memory.len(),
        n
    );
    let accuracy = train_and_score(cfg, &memory, &inputs.test, class_count, seed)?;
    if cfg.per_task_eval {
        curve.push(accuracy);
    }
    let bytes_total = memory.measured_storage(cfg.s_model);
    if let Capacity::Budget(b) = cfg.capacity {
        if bytes_total > b {
            return Err(Error::Numerical(format!(
                "memory used {bytes_total} bytes, over the {b} byte budget"
            )));
        }
    }
    Ok((accuracy, bytes_total, curve))
}

/// All seeds of one config, sequentially.
pub fn run_experiment(cfg: &ExperimentConfig) -> Vec<RunOutcome> {
    match load_inputs(cfg) {
        Ok(inputs) => cfg
            .seeds
            .iter()
            .map(|&s| run_with_inputs(cfg, &inputs, s))
            .collect(),
        Err(e) => {
            let started = Instant::now();
            cfg.seeds
                .iter()
                .map(|&s| fail_row(cfg, s, 0, started, &e))
                .collect()
        }
    }
}
