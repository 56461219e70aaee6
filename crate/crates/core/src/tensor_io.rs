//! Dense tensors, labeled datasets and the FTCH container format.
//!
//! FTCH layout, all integers little-endian:
//!
//! ```text
//! magic "FTCH" | version u16 = 1 | dtype u8 (0 = U8, 1 = F32) | rank u8
//! | shape rank x u32 | sample_count u64 | labels sample_count x u32
//! | data sample_count x n x dtype_size, row-major, samples in order
//! ```
//!
//! A file therefore occupies `16 + 4 * rank + 4 * count + count * n * dtype_size`
//! bytes.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::wire::{CountingWriter, FieldReader};

pub const FTCH_MAGIC: &[u8; 4] = b"FTCH";
pub const FTCH_VERSION: u16 = 1;

/// Upper bound on elements per tensor; keeps every index inside two bytes.
pub const MAX_ELEMENTS: usize = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DType {
    U8,
    F32,
}

impl DType {
    pub fn size(self) -> usize {
        match self {
            DType::U8 => 1,
            DType::F32 => 4,
        }
    }

    pub fn code(self) -> u8 {
        match self {
            DType::U8 => 0,
            DType::F32 => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            0 => Some(DType::U8),
            1 => Some(DType::F32),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    U8(Vec<u8>),
    F32(Vec<f32>),
}

impl TensorData {
    pub fn len(&self) -> usize {
        match self {
            TensorData::U8(v) => v.len(),
            TensorData::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype(&self) -> DType {
        match self {
            TensorData::U8(_) => DType::U8,
            TensorData::F32(_) => DType::F32,
        }
    }

    #[inline]
    pub fn get_f32(&self, i: usize) -> f32 {
        match self {
            TensorData::U8(v) => f32::from(v[i]),
            TensorData::F32(v) => v[i],
        }
    }

    pub fn to_f32_vec(&self) -> Vec<f32> {
        match self {
            TensorData::U8(v) => v.iter().map(|&b| f32::from(b)).collect(),
            TensorData::F32(v) => v.clone(),
        }
    }

    /// Appends the little-endian encoding of every element.
    pub fn write_le(&self, out: &mut Vec<u8>) {
        match self {
            TensorData::U8(v) => out.extend_from_slice(v),
            TensorData::F32(v) => {
                out.reserve(v.len() * 4);
                for x in v {
                    out.extend_from_slice(&x.to_le_bytes());
                }
            }
        }
    }

    pub fn zeros(dtype: DType, n: usize) -> Self {
        match dtype {
            DType::U8 => TensorData::U8(vec![0; n]),
            DType::F32 => TensorData::F32(vec![0.0; n]),
        }
    }
}

pub fn element_count(shape: &[usize]) -> usize {
    shape.iter().product()
}

fn check_shape(shape: &[usize]) -> Result<usize> {
    if shape.is_empty() || shape.len() > usize::from(u8::MAX) {
        return Err(Error::InvalidTensor(format!(
            "rank must be in 1..=255, got {}",
            shape.len()
        )));
    }
    if shape.iter().any(|&d| d == 0 || d > u32::MAX as usize) {
        return Err(Error::InvalidTensor(format!(
            "shape entries must be positive u32, got {shape:?}"
        )));
    }
    let n = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .filter(|&n| n <= MAX_ELEMENTS)
        .ok_or_else(|| {
            Error::InvalidTensor(format!("element count of {shape:?} exceeds {MAX_ELEMENTS}"))
        })?;
    Ok(n)
}

/// One labeled tensor: a raw image `x` or an encoded sample `z`.
#[derive(Debug, Clone, PartialEq)]
pub struct TensorSample {
    shape: Vec<usize>,
    data: TensorData,
    label: u32,
}

impl TensorSample {
    pub fn new(shape: Vec<usize>, data: TensorData, label: u32) -> Result<Self> {
        let n = check_shape(&shape)?;
        if data.len() != n {
            return Err(Error::InvalidTensor(format!(
                "shape {shape:?} needs {n} elements, got {}",
                data.len()
            )));
        }
        if let TensorData::F32(v) = &data {
            if let Some(i) = v.iter().position(|x| !x.is_finite()) {
                return Err(Error::InvalidTensor(format!(
                    "non-finite value {} at element {i}",
                    v[i]
                )));
            }
        }
        Ok(Self { shape, data, label })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn into_parts(self) -> (Vec<usize>, TensorData, u32) {
        (self.shape, self.data, self.label)
    }
}

/// Ordered, homogeneous collection of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    shape: Vec<usize>,
    dtype: DType,
    samples: Vec<TensorSample>,
}

impl Dataset {
    pub fn new(shape: Vec<usize>, dtype: DType) -> Result<Self> {
        check_shape(&shape)?;
        Ok(Self {
            shape,
            dtype,
            samples: Vec::new(),
        })
    }

    pub fn from_samples(
        shape: Vec<usize>,
        dtype: DType,
        samples: impl IntoIterator<Item = TensorSample>,
    ) -> Result<Self> {
        let mut ds = Self::new(shape, dtype)?;
        for s in samples {
            ds.push(s)?;
        }
        Ok(ds)
    }

    pub fn push(&mut self, sample: TensorSample) -> Result<()> {
        if sample.shape != self.shape || sample.dtype() != self.dtype {
            return Err(Error::InvalidDataset(format!(
                "sample {:?}/{:?} does not match dataset {:?}/{:?}",
                sample.shape,
                sample.dtype(),
                self.shape,
                self.dtype
            )));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn element_count(&self) -> usize {
        element_count(&self.shape)
    }

    pub fn samples(&self) -> &[TensorSample] {
        &self.samples
    }

    pub fn into_samples(self) -> Vec<TensorSample> {
        self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn class_ids(&self) -> BTreeSet<u32> {
        self.samples.iter().map(|s| s.label).collect()
    }

    /// Samples whose label is in `classes`, in original order.
    pub fn filter_classes(&self, classes: &BTreeSet<u32>) -> Dataset {
        Dataset {
            shape: self.shape.clone(),
            dtype: self.dtype,
            samples: self
                .samples
                .iter()
                .filter(|s| classes.contains(&s.label))
                .cloned()
                .collect(),
        }
    }
}

/// Exact FTCH length for a dataset of this geometry.
pub fn encoded_len(shape: &[usize], dtype: DType, count: usize) -> u64 {
    let n = element_count(shape) as u64;
    let count = count as u64;
    16 + 4 * shape.len() as u64 + 4 * count + count * n * dtype.size() as u64
}

pub fn write_dataset<W: Write>(dataset: &Dataset, destination: W) -> Result<u64> {
    check_shape(&dataset.shape)?;
    let mut w = CountingWriter::new(destination);
    w.put(FTCH_MAGIC)?;
    w.put(&FTCH_VERSION.to_le_bytes())?;
    w.put(&[dataset.dtype.code(), dataset.shape.len() as u8])?;
    for &d in &dataset.shape {
        w.put(&(d as u32).to_le_bytes())?;
    }
    w.put(&(dataset.samples.len() as u64).to_le_bytes())?;
    for s in &dataset.samples {
        w.put(&s.label.to_le_bytes())?;
    }
    let mut buf = Vec::with_capacity(dataset.element_count() * dataset.dtype.size());
    for s in &dataset.samples {
        buf.clear();
        s.data.write_le(&mut buf);
        w.put(&buf)?;
    }
    w.flush()?;
    Ok(w.written)
}

pub fn read_dataset<R: Read>(source: R) -> Result<Dataset> {
    let mut r = FieldReader::new(source);
    r.magic(FTCH_MAGIC)?;
    let version = r.u16("version")?;
    if version != FTCH_VERSION {
        return Err(Error::UnsupportedVersion {
            format: "FTCH",
            version,
        });
    }
    let code = r.u8("dtype")?;
    let dtype = DType::from_code(code)
        .ok_or_else(|| Error::format("dtype", format!("unknown code {code}")))?;
    let rank = r.u8("rank")?;
    if rank == 0 {
        return Err(Error::format("rank", "must be at least 1"));
    }
    let mut shape = Vec::with_capacity(usize::from(rank));
    for _ in 0..rank {
        shape.push(r.u32("shape")? as usize);
    }
    let n = check_shape(&shape).map_err(|e| Error::format("shape", e.to_string()))?;
    let count = r.u64("sample_count")?;
    let count = usize::try_from(count)
        .map_err(|_| Error::format("sample_count", format!("{count} does not fit in memory")))?;

    // Grow incrementally so a corrupt count cannot trigger a huge allocation.
    let mut labels = Vec::with_capacity(count.min(1 << 16));
    for _ in 0..count {
        labels.push(r.u32("labels")?);
    }
    let mut samples = Vec::with_capacity(count.min(1 << 16));
    let mut raw = vec![0u8; n * dtype.size()];
    for label in labels {
        r.bytes("data", &mut raw)?;
        let data = match dtype {
            DType::U8 => TensorData::U8(raw.clone()),
            DType::F32 => TensorData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
        };
        let sample = TensorSample::new(shape.clone(), data, label)
            .map_err(|e| Error::format("data", e.to_string()))?;
        samples.push(sample);
    }
    r.expect_end()?;
    Ok(Dataset {
        shape,
        dtype,
        samples,
    })
}

pub fn write_dataset_file(dataset: &Dataset, path: impl AsRef<Path>) -> Result<u64> {
    let f = File::create(path)?;
    write_dataset(dataset, BufWriter::new(f))
}

pub fn read_dataset_file(path: impl AsRef<Path>) -> Result<Dataset> {
    let f = File::open(path)?;
    read_dataset(BufReader::new(f))
}
