//! Class-incremental task streams and single-pass sample delivery.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;

use crate::error::{Error, Result};
use crate::memory::EpisodicMemory;
use crate::rng;
use crate::tensor_io::{Dataset, TensorSample};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Task {
    pub classes: Vec<u32>,
    /// Indices into the training set, in delivery order.
    pub indices: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TaskStream {
    pub tasks: Vec<Task>,
    pub seed: u64,
}

impl TaskStream {
    /// Partitions the label set, in seeded random order, into consecutive
    /// tasks of `classes_per_task` classes; the last task takes the rest.
    pub fn from_labels(labels: &[u32], classes_per_task: usize, seed: u64) -> Result<Self> {
        if classes_per_task < 1 {
            return Err(Error::Config("classes_per_task must be at least 1".into()));
        }
        let mut classes: Vec<u32> = labels
            .iter()
            .copied()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect();
        classes.shuffle(&mut rng::substream(seed, rng::TASK_ORDER));
        let mut order_rng = rng::substream(seed, rng::SAMPLE_ORDER);
        let tasks = classes
            .chunks(classes_per_task)
            .map(|chunk| {
                let set: BTreeSet<u32> = chunk.iter().copied().collect();
                let mut indices: Vec<usize> = labels
                    .iter()
                    .enumerate()
                    .filter(|(_, l)| set.contains(l))
                    .map(|(i, _)| i)
                    .collect();
                indices.shuffle(&mut order_rng);
                Task {
                    classes: chunk.to_vec(),
                    indices,
                }
            })
            .collect();
        Ok(Self { tasks, seed })
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn classes(&self) -> BTreeSet<u32> {
        self.tasks
            .iter()
            .flat_map(|t| t.classes.iter().copied())
            .collect()
    }
}

pub fn build_task_stream(
    dataset: &Dataset,
    classes_per_task: usize,
    seed: u64,
) -> Result<TaskStream> {
    let labels: Vec<u32> = dataset.samples().iter().map(TensorSample::label).collect();
    TaskStream::from_labels(&labels, classes_per_task, seed)
}

/// A training set that can be read sample by sample.
pub trait SampleSource {
    fn len(&self) -> usize;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn label(&self, index: usize) -> u32;

    fn take(&mut self, index: usize) -> Result<TensorSample>;
}

/// Hands out each sample exactly once; a second request for the same
/// index is an error.
#[derive(Debug)]
pub struct OnlineSource {
    labels: Vec<u32>,
    samples: Vec<Option<TensorSample>>,
    taken: usize,
}

impl OnlineSource {
    pub fn new(dataset: Dataset) -> Self {
        let samples = dataset.into_samples();
        Self {
            labels: samples.iter().map(TensorSample::label).collect(),
            samples: samples.into_iter().map(Some).collect(),
            taken: 0,
        }
    }

    pub fn taken(&self) -> usize {
        self.taken
    }
}

impl SampleSource for OnlineSource {
    fn len(&self) -> usize {
        self.samples.len()
    }

    fn label(&self, index: usize) -> u32 {
        self.labels[index]
    }

    fn take(&mut self, index: usize) -> Result<TensorSample> {
        let slot = self
            .samples
            .get_mut(index)
            .ok_or_else(|| Error::Config(format!("sample index {index} out of range")))?;
        let s = slot
            .take()
            .ok_or_else(|| Error::Config(format!("sample {index} was already consumed")))?;
        self.taken += 1;
        Ok(s)
    }
}

/// Offers every sample of `task` to `memory` once, in stream order.
pub fn stream_task(
    task: &Task,
    source: &mut dyn SampleSource,
    memory: &mut EpisodicMemory,
) -> Result<usize> {
    let mut accepted = 0;
    for &i in &task.indices {
        if memory.offer(source.take(i)?)?.accepted() {
            accepted += 1;
        }
    }
    Ok(accepted)
}
