//! Gaussian class clusters standing in for encoded image features.

use rand_distr::{Distribution, StandardNormal};

use crate::codec::RangeStats;
use crate::error::{Error, Result};
use crate::rng;
use crate::tensor_io::{element_count, DType, Dataset, TensorData, TensorSample};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub classes: u32,
    /// Tensor shape of each sample; `[dim]` for flat features.
    pub shape: Vec<usize>,
    pub train_per_class: usize,
    pub test_per_class: usize,
    /// Samples per class in the held-out set used for range statistics.
    pub pretrain_per_class: usize,
    /// Standard deviation of each class-mean coordinate, times `sqrt(dim)`.
    /// Expected distance between two class means is `separation * sqrt(2)`.
    pub separation: f64,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            shape: vec![128],
            train_per_class: 1000,
            test_per_class: 200,
            pretrain_per_class: 100,
            separation: 3.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SynthData {
    pub train: Dataset,
    pub test: Dataset,
    /// Range of the pre-training draw, for building codebooks.
    pub stats: RangeStats,
}

/// Unit-variance isotropic clusters around random means. Train, test and
/// pre-training draws use independent streams; train and test are
/// interleaved by class.
pub fn generate(spec: &SynthSpec) -> Result<SynthData> {
    if spec.classes == 0 || spec.train_per_class == 0 || spec.test_per_class == 0 {
        return Err(Error::Config(
            "synthetic set needs classes and samples".into(),
        ));
    }
    let dim = element_count(&spec.shape);
    let mut mean_rng = rng::substream(spec.seed, "synth-means");
    let coord_sd = spec.separation / (dim as f64).sqrt();
    let means: Vec<Vec<f64>> = (0..spec.classes)
        .map(|_| {
            (0..dim)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut mean_rng);
                    coord_sd * z
                })
                .collect::<Vec<f64>>()
        })
        .collect();

    let draw = |per_class: usize, stream: &str| -> Result<Dataset> {
        let mut r = rng::substream(spec.seed, &format!("{}-{stream}", rng::SYNTH));
        let mut samples = Vec::with_capacity(per_class * spec.classes as usize);
        for _ in 0..per_class {
            for (label, mu) in means.iter().enumerate() {
                let v: Vec<f32> = mu
                    .iter()
                    .map(|m| {
                        let z: f64 = StandardNormal.sample(&mut r);
                        (m + z) as f32
                    })
                    .collect();
                samples.push(TensorSample::new(
                    spec.shape.clone(),
                    TensorData::F32(v),
                    label as u32,
                )?);
            }
        }
        Dataset::from_samples(spec.shape.clone(), DType::F32, samples)
    };

    let train = draw(spec.train_per_class, "train")?;
    let test = draw(spec.test_per_class, "test")?;
    let pretrain = draw(spec.pretrain_per_class.max(1), "pretrain")?;
    let stats = RangeStats::from_samples(pretrain.samples())
        .filter(|s| s.lo < s.hi)
        .ok_or(Error::Empty("pre-training draw"))?;
    Ok(SynthData { train, test, stats })
}
