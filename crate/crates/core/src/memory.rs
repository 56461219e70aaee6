//! Greedy class-balanced episodic memory.
//!
//! A sample of class `c` is accepted while `count(c) < ceil(N / C)`, with `C`
//! the number of classes seen so far including `c`. When the memory is full
//! the incoming sample displaces a random exemplar of the currently largest
//! class (smallest label on ties). Samples are compressed on acceptance and
//! never otherwise retained.
//!
//! # Snapshot format
//!
//! All integers little-endian:
//!
//! ```text
//! magic "FMEM" | version u16 = 1 | codec u8 | k f64 | dtype u8 | rank u8
//! | shape rank x u32 | capacity u64 | seed u64 | rng_word_pos u128
//! | class_count u32 | class_count x (label u32, count u64)
//! | slot_count u64 | labels slot_count x u32
//! | overhead (lookup table or autoencoder parameters)
//! | payloads slot_count x exemplar_cost bytes, in slot order
//! ```
//!
//! The trailing `overhead | payloads` region is exactly
//! `total_storage(codec, N_used) - s_model` bytes long.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use log::warn;
use rand::Rng;

use crate::codec::{
    exemplar_cost, fixed_overhead, total_storage, Codec, CodecConfig, CodecKind,
    CompressedExemplar, StorageModel,
};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::tensor_io::{element_count, DType, Dataset, TensorSample};
use crate::wire::{CountingWriter, FieldReader};

pub const FMEM_MAGIC: &[u8; 4] = b"FMEM";
pub const FMEM_VERSION: u16 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OfferDecision {
    Accepted,
    AcceptedWithEviction { label: u32, slot: usize },
    Rejected,
}

impl OfferDecision {
    pub fn accepted(&self) -> bool {
        !matches!(self, OfferDecision::Rejected)
    }
}

#[derive(Debug, Clone)]
pub struct EpisodicMemory {
    capacity: usize,
    codec: Codec,
    slots: Vec<CompressedExemplar>,
    // Every seen class, including those evicted down to zero.
    class_counts: BTreeMap<u32, usize>,
    geometry: Option<(Vec<usize>, DType)>,
    seed: u64,
    rng: StreamRng,
}

impl EpisodicMemory {
    pub fn new(capacity: usize, codec: Codec, seed: u64) -> Self {
        Self {
            capacity,
            codec,
            slots: Vec::with_capacity(capacity.min(1 << 16)),
            class_counts: BTreeMap::new(),
            geometry: None,
            seed,
            rng: rng::substream(seed, rng::EVICTION),
        }
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn is_full(&self) -> bool {
        self.slots.len() >= self.capacity
    }

    pub fn codec(&self) -> &Codec {
        &self.codec
    }

    pub fn slots(&self) -> &[CompressedExemplar] {
        &self.slots
    }

    /// Stored exemplars per seen class. Classes evicted down to zero stay
    /// listed with a count of 0.
    pub fn class_counts(&self) -> &BTreeMap<u32, usize> {
        &self.class_counts
    }

    pub fn seen_classes(&self) -> usize {
        self.class_counts.len()
    }

    /// Per-class quota `ceil(N / C)` for the currently seen classes.
    pub fn class_cap(&self) -> usize {
        match self.class_counts.len() {
            0 => self.capacity,
            c => self.capacity.div_ceil(c),
        }
    }

    pub fn offer(&mut self, sample: TensorSample) -> Result<OfferDecision> {
        match &self.geometry {
            None => self.geometry = Some((sample.shape().to_vec(), sample.dtype())),
            Some((shape, dtype)) if shape != sample.shape() || *dtype != sample.dtype() => {
                return Err(Error::Shape(format!(
                    "memory holds {shape:?}/{dtype:?}, offered {:?}/{:?}",
                    sample.shape(),
                    sample.dtype()
                )));
            }
            Some(_) => {}
        }
        let label = sample.label();
        self.class_counts.entry(label).or_insert(0);
        if self.capacity == 0 || self.class_counts[&label] >= self.class_cap() {
            return Ok(OfferDecision::Rejected);
        }

        let exemplar = self.codec.compress(&sample)?;
        let decision = if self.is_full() {
            let (victim_label, slot) = self.evict();
            OfferDecision::AcceptedWithEviction {
                label: victim_label,
                slot,
            }
        } else {
            OfferDecision::Accepted
        };
        self.slots.push(exemplar);
        *self.class_counts.get_mut(&label).expect("inserted above") += 1;
        Ok(decision)
    }

    fn evict(&mut self) -> (u32, usize) {
        let mut largest: Option<(u32, usize)> = None;
        for (&label, &count) in &self.class_counts {
            if largest.is_none_or(|(_, best)| count > best) {
                largest = Some((label, count));
            }
        }
        let (label, count) = largest.expect("a full memory has classes");
        debug_assert!(count > 0);
        let pick = self.rng.random_range(0..count);
        let slot = self
            .slots
            .iter()
            .enumerate()
            .filter(|(_, e)| e.label() == label)
            .nth(pick)
            .map(|(i, _)| i)
            .expect("class count matches slots");
        self.slots.remove(slot);
        *self
            .class_counts
            .get_mut(&label)
            .expect("largest class exists") -= 1;
        (label, slot)
    }

    /// Decompressed contents in slot order.
    pub fn dump(&self) -> Result<Dataset> {
        let Some((shape, dtype)) = &self.geometry else {
            return Err(Error::Empty("memory has never received a sample"));
        };
        let mut ds = Dataset::new(shape.clone(), *dtype)?;
        for e in &self.slots {
            ds.push(self.codec.decompress(e)?)?;
        }
        Ok(ds)
    }

    /// Serialized lookup table or network plus every stored payload.
    pub fn accounted_bytes(&self) -> Vec<u8> {
        let dtype = self.geometry.as_ref().map_or(DType::F32, |g| g.1);
        let mut out = Vec::new();
        self.codec.write_overhead(dtype, &mut out);
        for e in &self.slots {
            e.write_payload(&mut out);
        }
        out
    }

    /// Measured `s_Σ`: the model size plus [`accounted_bytes`](Self::accounted_bytes).
    pub fn measured_storage(&self, s_model: u64) -> u64 {
        s_model + self.accounted_bytes().len() as u64
    }

    pub fn write_snapshot<W: Write>(&self, destination: W) -> Result<u64> {
        let Some((shape, dtype)) = &self.geometry else {
            return Err(Error::Empty("memory has never received a sample"));
        };
        let cfg = self.codec.config();
        let mut w = CountingWriter::new(destination);
        w.put(FMEM_MAGIC)?;
        w.put(&FMEM_VERSION.to_le_bytes())?;
        w.put(&[cfg.kind().code()])?;
        w.put(&cfg.parameter().unwrap_or(0.0).to_le_bytes())?;
        w.put(&[dtype.code(), shape.len() as u8])?;
        for &d in shape {
            w.put(&(d as u32).to_le_bytes())?;
        }
        w.put(&(self.capacity as u64).to_le_bytes())?;
        w.put(&self.seed.to_le_bytes())?;
        w.put(&self.rng.get_word_pos().to_le_bytes())?;
        w.put(&(self.class_counts.len() as u32).to_le_bytes())?;
        for (&label, &count) in &self.class_counts {
            w.put(&label.to_le_bytes())?;
            w.put(&(count as u64).to_le_bytes())?;
        }
        w.put(&(self.slots.len() as u64).to_le_bytes())?;
        for e in &self.slots {
            w.put(&e.label().to_le_bytes())?;
        }
        w.put(&self.accounted_bytes())?;
        w.flush()?;
        Ok(w.written)
    }

    /// Restores a snapshot; `codec` must be the one the memory was built with.
    pub fn read_snapshot<R: Read>(source: R, codec: Codec) -> Result<Self> {
        let mut r = FieldReader::new(source);
        r.magic(FMEM_MAGIC)?;
        let version = r.u16("version")?;
        if version != FMEM_VERSION {
            return Err(Error::UnsupportedVersion {
                format: "FMEM",
                version,
            });
        }
        let kind_code = r.u8("codec")?;
        let kind = CodecKind::from_code(kind_code)
            .ok_or_else(|| Error::format("codec", format!("unknown code {kind_code}")))?;
        let k = r.f64("k")?;
        let cfg = codec.config();
        if kind != cfg.kind() || cfg.parameter().unwrap_or(0.0) != k {
            return Err(Error::Codec(format!(
                "snapshot was written by {kind} (k={k}), restoring with {cfg:?}"
            )));
        }
        let dtype_code = r.u8("dtype")?;
        let dtype = DType::from_code(dtype_code)
            .ok_or_else(|| Error::format("dtype", format!("unknown code {dtype_code}")))?;
        let rank = r.u8("rank")?;
        let mut shape = Vec::with_capacity(usize::from(rank));
        for _ in 0..rank {
            shape.push(r.u32("shape")? as usize);
        }
        let capacity = r.u64("capacity")? as usize;
        let seed = r.u64("seed")?;
        let mut pos = [0u8; 16];
        r.bytes("rng_word_pos", &mut pos)?;
        let word_pos = u128::from_le_bytes(pos);

        let classes = r.u32("class_count")?;
        let mut class_counts = BTreeMap::new();
        for _ in 0..classes {
            let label = r.u32("class_label")?;
            let count = r.u64("class_count")? as usize;
            class_counts.insert(label, count);
        }
        let slot_count = r.u64("slot_count")? as usize;
        if slot_count > capacity {
            return Err(Error::format(
                "slot_count",
                format!("{slot_count} exceeds capacity {capacity}"),
            ));
        }
        let mut labels = Vec::with_capacity(slot_count);
        for _ in 0..slot_count {
            labels.push(r.u32("labels")?);
        }
        let mut tally: BTreeMap<u32, usize> = class_counts.keys().map(|&l| (l, 0)).collect();
        for l in &labels {
            *tally.entry(*l).or_insert(0) += 1;
        }
        if tally != class_counts {
            return Err(Error::format(
                "class_count",
                "class table disagrees with slot labels",
            ));
        }

        let mut expected = Vec::new();
        codec.write_overhead(dtype, &mut expected);
        let mut overhead = vec![0u8; expected.len()];
        r.bytes("overhead", &mut overhead)?;
        if overhead != expected {
            return Err(Error::Codec(
                "snapshot lookup table or network differs from codec".into(),
            ));
        }

        let cost = exemplar_cost(&cfg, &shape, dtype)? as usize;
        let mut buf = vec![0u8; cost];
        let mut slots = Vec::with_capacity(slot_count);
        for label in labels {
            r.bytes("payload", &mut buf)?;
            slots.push(CompressedExemplar::from_payload(
                &cfg,
                label,
                shape.clone(),
                dtype,
                &buf,
            )?);
        }
        r.expect_end()?;

        let mut rng = rng::substream(seed, rng::EVICTION);
        rng.set_word_pos(word_pos);
        Ok(Self {
            capacity,
            codec,
            slots,
            class_counts,
            geometry: Some((shape, dtype)),
            seed,
            rng,
        })
    }

    pub fn write_snapshot_file(&self, path: impl AsRef<Path>) -> Result<u64> {
        self.write_snapshot(BufWriter::new(File::create(path)?))
    }

    pub fn read_snapshot_file(path: impl AsRef<Path>, codec: Codec) -> Result<Self> {
        Self::read_snapshot(BufReader::new(File::open(path)?), codec)
    }
}

/// Bytes of an FMEM snapshot preceding the accounted region.
pub fn snapshot_header_len(rank: usize, classes: usize, slots: usize) -> u64 {
    (4 + 2 + 1 + 8 + 1 + 1 + 4 * rank + 8 + 8 + 16 + 4 + 12 * classes + 8 + 4 * slots) as u64
}

/// Largest `N` with `total_storage(N) <= budget`. Budgets that cannot even
/// cover the fixed overhead yield 0 with a warning.
pub fn max_slots(
    budget: u64,
    cfg: &CodecConfig,
    shape: &[usize],
    dtype: DType,
    sm: &StorageModel,
) -> Result<u64> {
    let base = total_storage(cfg, shape, dtype, sm, 0)?;
    if budget < base {
        warn!(
            "budget of {budget} bytes is below the fixed overhead of {base} bytes for {} on {:?}; no slots",
            cfg.kind(),
            shape
        );
        return Ok(0);
    }
    let per = exemplar_cost(cfg, shape, dtype)?;
    debug_assert!(per > 0, "{} elements cost nothing", element_count(shape));
    Ok((budget - base) / per)
}

/// A memory sized for the given byte budget.
pub fn with_budget(
    budget: u64,
    codec: Codec,
    shape: &[usize],
    dtype: DType,
    s_model: u64,
    seed: u64,
) -> Result<EpisodicMemory> {
    let sm = codec.storage_model(s_model);
    let n = max_slots(budget, &codec.config(), shape, dtype, &sm)?;
    Ok(EpisodicMemory::new(n as usize, codec, seed))
}

pub fn fixed_overhead_bytes(codec: &Codec, dtype: DType, s_model: u64) -> u64 {
    let sm = codec.storage_model(s_model);
    fixed_overhead(&codec.config(), dtype, &sm)
}
