//! Classification head retrained from scratch on decompressed memory.
//!
//! Training is plain mini-batch SGD on softmax cross-entropy under an SGDR
//! schedule, with optional cutmix/mixup. Inputs are standardised per
//! feature with statistics taken from the training data only; those
//! statistics travel with the head and are reapplied at prediction time.

pub mod mixing;
pub mod network;
pub mod sgdr;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::rng;
use crate::tensor_io::{Dataset, TensorSample};
use crate::wire::{CountingWriter, FieldReader};

pub use mixing::{mix_batch, FeatureLayout, MixedBatch};
pub use network::{Dense, Network};
pub use sgdr::Sgdr;

pub const FHED_MAGIC: &[u8; 4] = b"FHED";
pub const FHED_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Architecture {
    Linear,
    Mlp { hidden: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadConfig {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub class_count: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub lr_min: f64,
    pub sgdr_t0: u32,
    pub sgdr_t_mult: u32,
    pub cycles: u32,
    pub mix_p: f64,
    pub mix_alpha: f64,
    pub seed: u64,
}

impl HeadConfig {
    pub fn new(input_dim: usize, class_count: usize) -> Self {
        Self {
            architecture: Architecture::Linear,
            input_dim,
            class_count,
            batch_size: 16,
            lr_max: 0.05,
            lr_min: 0.0005,
            sgdr_t0: 1,
            sgdr_t_mult: 2,
            cycles: 5,
            mix_p: 0.5,
            mix_alpha: 1.0,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.input_dim == 0 || self.class_count == 0 {
            return fail(format!(
                "head dims must be positive, got input {} classes {}",
                self.input_dim, self.class_count
            ));
        }
        if let Architecture::Mlp { hidden: 0 } = self.architecture {
            return fail("MLP hidden width must be positive".into());
        }
        if self.batch_size == 0 {
            return fail("batch size must be at least 1".into());
        }
        if !(self.lr_min >= 0.0 && self.lr_min < self.lr_max && self.lr_max.is_finite()) {
            return fail(format!(
                "need 0 <= lr_min < lr_max, got {} and {}",
                self.lr_min, self.lr_max
            ));
        }
        if self.sgdr_t0 == 0 || self.sgdr_t_mult == 0 || self.cycles == 0 {
            return fail("SGDR T_0, T_mult and cycle count must be positive".into());
        }
        if !(0.0..=1.0).contains(&self.mix_p) {
            return fail(format!("mix_p must be in [0, 1], got {}", self.mix_p));
        }
        if !(self.mix_alpha > 0.0 && self.mix_alpha.is_finite()) {
            return fail(format!(
                "mix_alpha must be positive, got {}",
                self.mix_alpha
            ));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Sgdr {
        Sgdr {
            lr_max: self.lr_max,
            lr_min: self.lr_min,
            t0: self.sgdr_t0,
            t_mult: self.sgdr_t_mult,
        }
    }

    pub fn total_epochs(&self) -> u32 {
        self.schedule().total_epochs(self.cycles)
    }
}

/// `sgdr_lr` for a config at a (fractional) global epoch.
pub fn sgdr_lr(cfg: &HeadConfig, epoch: f64) -> f64 {
    cfg.schedule().lr(epoch)
}

/// Per-feature standardisation.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(samples: &[TensorSample]) -> Self {
        let d = samples.first().map_or(0, TensorSample::len);
        let n = samples.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for s in samples {
            for (j, m) in mean.iter_mut().enumerate() {
                *m += f64::from(s.data().get_f32(j));
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for s in samples {
            for (j, v) in var.iter_mut().enumerate() {
                let dx = f64::from(s.data().get_f32(j)) - mean[j];
                *v += dx * dx;
            }
        }
        // Constant features pass through centred but unscaled.
        let std = var
            .into_iter()
            .map(|v| {
                let s = (v / n).sqrt();
                if s > 1e-8 {
                    s
                } else {
                    1.0
                }
            })
            .collect();
        Self { mean, std }
    }

    pub fn apply(&self, s: &TensorSample, out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            *o = (f64::from(s.data().get_f32(j)) - self.mean[j]) / self.std[j];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epoch_losses: Vec<f64>,
    pub final_loss: f64,
    pub epochs: u32,
    pub steps: u64,
    pub wall_time: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Head {
    config: HeadConfig,
    network: Network,
    normalizer: Option<Normalizer>,
    steps: u64,
}

/// Fresh head whose parameters depend only on `cfg.seed` and the shapes.
pub fn init_head(cfg: &HeadConfig) -> Result<Head> {
    cfg.validate()?;
    let mut r = rng::substream(cfg.seed, rng::HEAD_INIT);
    let layers = match cfg.architecture {
        Architecture::Linear => vec![Dense::uniform(cfg.class_count, cfg.input_dim, &mut r)],
        Architecture::Mlp { hidden } => vec![
            Dense::uniform(hidden, cfg.input_dim, &mut r),
            Dense::uniform(cfg.class_count, hidden, &mut r),
        ],
    };
    Ok(Head {
        config: cfg.clone(),
        network: Network { layers },
        normalizer: None,
        steps: 0,
    })
}

pub fn train_head(head: &mut Head, data: &Dataset) -> Result<TrainReport> {
    head.train(data)
}

pub fn evaluate(head: &Head, test: &Dataset, seen_classes: &BTreeSet<u32>) -> Result<f64> {
    head.evaluate(test, seen_classes)
}

fn soft_targets(batch: &MixedBatch, classes: usize) -> Vec<f64> {
    let mut t = vec![0.0; batch.y_a.len() * classes];
    for (i, (&a, &b)) in batch.y_a.iter().zip(&batch.y_b).enumerate() {
        t[i * classes + a as usize] += batch.lambda;
        t[i * classes + b as usize] += 1.0 - batch.lambda;
    }
    t
}

impl Head {
    pub fn config(&self) -> &HeadConfig {
        &self.config
    }

    pub fn network(&self) -> &Network {
        &self.network
    }

    pub fn normalizer(&self) -> Option<&Normalizer> {
        self.normalizer.as_ref()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    fn check_input(&self, data: &Dataset) -> Result<()> {
        if data.element_count() != self.config.input_dim {
            return Err(Error::Shape(format!(
                "head expects {} features, dataset has {}",
                self.config.input_dim,
                data.element_count()
            )));
        }
        Ok(())
    }

    pub fn train(&mut self, data: &Dataset) -> Result<TrainReport> {
        let started = Instant::now();
        if data.is_empty() {
            return Err(Error::Empty("training set"));
        }
        self.check_input(data)?;
        if let Some(bad) = data
            .samples()
            .iter()
            .find(|s| s.label() as usize >= self.config.class_count)
        {
            return Err(Error::Config(format!(
                "label {} outside the head's {} classes",
                bad.label(),
                self.config.class_count
            )));
        }

        let cfg = self.config.clone();
        let normalizer = Normalizer::fit(data.samples());
        let layout = FeatureLayout::from_shape(data.shape());
        let d = cfg.input_dim;
        let k = cfg.class_count;
        let schedule = cfg.schedule();
        let epochs = cfg.total_epochs();
        let mut shuffle_rng = rng::substream(cfg.seed, rng::EPOCH_SHUFFLE);
        let mut mix_rng = rng::substream(cfg.seed, rng::MIXING);

        let samples = data.samples();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let batches = samples.len().div_ceil(cfg.batch_size);
        let mut epoch_losses = Vec::with_capacity(epochs as usize);
        let mut inputs = Vec::with_capacity(cfg.batch_size * d);
        let mut labels = Vec::with_capacity(cfg.batch_size);

        for epoch in 0..epochs {
            order.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            for (b, chunk) in order.chunks(cfg.batch_size).enumerate() {
                inputs.clear();
                inputs.resize(chunk.len() * d, 0.0);
                labels.clear();
                for (row, &i) in chunk.iter().enumerate() {
                    normalizer.apply(&samples[i], &mut inputs[row * d..(row + 1) * d]);
                    labels.push(samples[i].label());
                }
                let batch = mix_batch(
                    std::mem::take(&mut inputs),
                    &labels,
                    layout,
                    cfg.mix_p,
                    cfg.mix_alpha,
                    &mut mix_rng,
                );
                let targets = soft_targets(&batch, k);
                let (loss, grad) = self.network.loss_and_grad(&batch.inputs, &targets);
                if !loss.is_finite() {
                    return Err(Error::Numerical(format!(
                        "loss became {loss} at epoch {epoch}, batch {b}"
                    )));
                }
                let lr = schedule.lr(f64::from(epoch) + b as f64 / batches as f64);
                self.network.sgd_step(&grad, lr);
                self.steps += 1;
                epoch_loss += loss * chunk.len() as f64;
                inputs = batch.inputs;
            }
            epoch_losses.push(epoch_loss / samples.len() as f64);
        }
        if self.network.parameters().any(|p| !p.is_finite()) {
            return Err(Error::Numerical(
                "non-finite parameter after training".into(),
            ));
        }
        self.normalizer = Some(normalizer);
        Ok(TrainReport {
            final_loss: epoch_losses.last().copied().unwrap_or(0.0),
            epoch_losses,
            epochs,
            steps: self.steps,
            wall_time: started.elapsed(),
        })
    }

    pub fn logits(&self, sample: &TensorSample) -> Vec<f64> {
        let mut x = vec![0.0; self.config.input_dim];
        match &self.normalizer {
            Some(n) => n.apply(sample, &mut x),
            None => {
                for (j, v) in x.iter_mut().enumerate() {
                    *v = f64::from(sample.data().get_f32(j));
                }
            }
        }
        self.network.logits(&x)
    }

    /// Arg-max class; ties resolve to the lowest class id.
    pub fn predict(&self, sample: &TensorSample) -> u32 {
        let z = self.logits(sample);
        let mut best = 0;
        for (i, v) in z.iter().enumerate() {
            if *v > z[best] {
                best = i;
            }
        }
        best as u32
    }

    /// Top-1 accuracy on the part of `test` whose labels are in `seen_classes`.
    pub fn evaluate(&self, test: &Dataset, seen_classes: &BTreeSet<u32>) -> Result<f64> {
        self.check_input(test)?;
        let mut total = 0usize;
        let mut correct = 0usize;
        for s in test
            .samples()
            .iter()
            .filter(|s| seen_classes.contains(&s.label()))
        {
            total += 1;
            if self.predict(s) == s.label() {
                correct += 1;
            }
        }
        if total == 0 {
            return Err(Error::Empty("test set restricted to seen classes"));
        }
        Ok(correct as f64 / total as f64)
    }

    /// FHED checkpoint, little-endian:
    ///
    /// ```text
    /// magic "FHED" | version u16 = 1 | layer_count u8
    /// | per layer: out u32 | in u32 | weight f32 x out*in | bias f32 x out
    /// | has_normalizer u8 | mean f32 x in | std f32 x in
    /// ```
    ///
    /// Parameters are narrowed to f32 on write.
    pub fn write_checkpoint<W: Write>(&self, destination: W) -> Result<u64> {
        let mut w = CountingWriter::new(destination);
        w.put(FHED_MAGIC)?;
        w.put(&FHED_VERSION.to_le_bytes())?;
        w.put(&[self.network.layers.len() as u8])?;
        let mut buf = Vec::new();
        for l in &self.network.layers {
            buf.clear();
            buf.extend_from_slice(&(l.out as u32).to_le_bytes());
            buf.extend_from_slice(&(l.inp as u32).to_le_bytes());
            for v in l.parameters() {
                buf.extend_from_slice(&(*v as f32).to_le_bytes());
            }
            w.put(&buf)?;
        }
        match &self.normalizer {
            None => w.put(&[0])?,
            Some(n) => {
                w.put(&[1])?;
                buf.clear();
                for v in n.mean.iter().chain(&n.std) {
                    buf.extend_from_slice(&(*v as f32).to_le_bytes());
                }
                w.put(&buf)?;
            }
        }
        w.flush()?;
        Ok(w.written)
    }

    /// Restores a checkpoint; training hyperparameters take their defaults.
    pub fn read_checkpoint<R: Read>(source: R) -> Result<Head> {
        let mut r = FieldReader::new(source);
        r.magic(FHED_MAGIC)?;
        let version = r.u16("version")?;
        if version != FHED_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "FHED",
                version,
            });
        }
        let count = r.u8("layer_count")?;
        if !(1..=2).contains(&count) {
            return Err(Error::format(
                "layer_count",
                format!("expected 1 or 2, got {count}"),
            ));
        }
        let mut layers = Vec::new();
        for _ in 0..count {
            let out = r.u32("out")? as usize;
            let inp = r.u32("in")? as usize;
            if out == 0 || inp == 0 || inp > crate::tensor_io::MAX_ELEMENTS {
                return Err(Error::format("in", format!("bad layer shape {out}x{inp}")));
            }
            let weight = r
                .f32_vec("weight", out * inp)?
                .into_iter()
                .map(f64::from)
                .collect();
            let bias = r.f32_vec("bias", out)?.into_iter().map(f64::from).collect();
            layers.push(Dense {
                out,
                inp,
                weight,
                bias,
            });
        }
        if layers.len() == 2 && layers[1].inp != layers[0].out {
            return Err(Error::format("in", "layer chain broken"));
        }
        let network = Network { layers };
        let d = network.input_dim();
        let normalizer = match r.u8("has_normalizer")? {
            0 => None,
            1 => {
                let v = r.f32_vec("normalizer", 2 * d)?;
                Some(Normalizer {
                    mean: v[..d].iter().map(|&x| f64::from(x)).collect(),
                    std: v[d..].iter().map(|&x| f64::from(x)).collect(),
                })
            }
            other => {
                return Err(Error::format(
                    "has_normalizer",
                    format!("expected 0 or 1, got {other}"),
                ))
            }
        };
        r.expect_end()?;
        let mut config = HeadConfig::new(d, network.classes());
        if network.layers.len() == 2 {
            config.architecture = Architecture::Mlp {
                hidden: network.layers[0].out,
            };
        }
        Ok(Head {
            config,
            network,
            normalizer,
            steps: 0,
        })
    }

    pub fn write_checkpoint_file(&self, path: impl AsRef<Path>) -> Result<u64> {
        self.write_checkpoint(BufWriter::new(File::create(path)?))
    }

    pub fn read_checkpoint_file(path: impl AsRef<Path>) -> Result<Head> {
        Self::read_checkpoint(BufReader::new(File::open(path)?))
    }
}
