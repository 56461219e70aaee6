//! Uniform scalar quantization over a fixed value range.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor_io::{DType, TensorData, TensorSample};
use crate::wire::{CountingWriter, FieldReader};

use super::{CompressedExemplar, Payload};

pub const FSTA_MAGIC: &[u8; 4] = b"FSTA";
pub const FSTA_VERSION: u16 = 1;

/// Largest supported level count; indices then fit in 16 bits.
pub const MAX_LEVELS: u32 = 1 << 16;

/// Global value range of the pre-training data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeStats {
    pub lo: f32,
    pub hi: f32,
}

impl RangeStats {
    /// Min and max over every element of `samples`.
    pub fn from_samples<'a>(samples: impl IntoIterator<Item = &'a TensorSample>) -> Option<Self> {
        let mut lo = f32::INFINITY;
        let mut hi = f32::NEG_INFINITY;
        for s in samples {
            for i in 0..s.len() {
                let v = s.data().get_f32(i);
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        (lo <= hi).then_some(Self { lo, hi })
    }
}

pub fn write_stats<W: Write>(stats: RangeStats, destination: W) -> Result<u64> {
    let mut w = CountingWriter::new(destination);
    w.put(FSTA_MAGIC)?;
    w.put(&FSTA_VERSION.to_le_bytes())?;
    w.put(&stats.lo.to_le_bytes())?;
    w.put(&stats.hi.to_le_bytes())?;
    w.flush()?;
    Ok(w.written)
}

pub fn read_stats<R: Read>(source: R) -> Result<RangeStats> {
    let mut r = FieldReader::new(source);
    r.magic(FSTA_MAGIC)?;
    let version = r.u16("version")?;
    if version != FSTA_VERSION {
        return Err(Error::UnsupportedVersion {
            format: "FSTA",
            version,
        });
    }
    let lo = r.f32("lo")?;
    let hi = r.f32("hi")?;
    if !lo.is_finite() {
        return Err(Error::format("lo", "not finite"));
    }
    if !hi.is_finite() {
        return Err(Error::format("hi", "not finite"));
    }
    if lo > hi {
        return Err(Error::format("hi", format!("{hi} is below lo {lo}")));
    }
    r.expect_end()?;
    Ok(RangeStats { lo, hi })
}

pub fn write_stats_file(stats: RangeStats, path: impl AsRef<Path>) -> Result<u64> {
    write_stats(stats, BufWriter::new(File::create(path)?))
}

pub fn read_stats_file(path: impl AsRef<Path>) -> Result<RangeStats> {
    read_stats(BufReader::new(File::open(path)?))
}

/// Bits needed to address `levels` distinct states: `ceil(log2 levels)`.
pub fn bits_per_index(levels: u32) -> u8 {
    debug_assert!(levels >= 2);
    (u32::BITS - (levels - 1).leading_zeros()) as u8
}

/// `k` equal-width bins over `[lo, hi]` with a midpoint lookup table.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    levels: u32,
    lo: f32,
    hi: f32,
    width: f64,
    representatives: Vec<f32>,
    representatives_u8: Vec<u8>,
}

impl Codebook {
    pub fn new(stats: RangeStats, levels: u32) -> Result<Self> {
        let RangeStats { lo, hi } = stats;
        if !(lo.is_finite() && hi.is_finite()) || lo >= hi {
            return Err(Error::Config(format!(
                "codebook range must satisfy lo < hi, got [{lo}, {hi}]"
            )));
        }
        if !(2..=MAX_LEVELS).contains(&levels) {
            return Err(Error::Config(format!(
                "k_quant must be in 2..={MAX_LEVELS}, got {levels}"
            )));
        }
        let width = (f64::from(hi) - f64::from(lo)) / f64::from(levels);
        let representatives: Vec<f32> = (0..levels)
            .map(|i| (f64::from(lo) + (f64::from(i) + 0.5) * width) as f32)
            .collect();
        let mut cb = Self {
            levels,
            lo,
            hi,
            width,
            representatives,
            representatives_u8: Vec::new(),
        };
        cb.representatives_u8 = (0..levels).map(|i| cb.u8_representative(i)).collect();
        Ok(cb)
    }

    // Integer inside bin `i` closest to its midpoint, so integer data
    // re-quantizes to the same index. Bins narrower than one integer step
    // may hold none; those fall back to the rounded midpoint.
    fn u8_representative(&self, i: u32) -> u8 {
        let mid = f64::from(self.representatives[i as usize]);
        let rounded = mid.round().clamp(0.0, 255.0);
        let candidates = [rounded, mid.floor(), mid.ceil()];
        candidates
            .into_iter()
            .filter(|c| (0.0..=255.0).contains(c))
            .find(|&c| self.index_of(c as f32) == i)
            .unwrap_or(rounded) as u8
    }

    pub fn levels(&self) -> u32 {
        self.levels
    }

    pub fn lo(&self) -> f32 {
        self.lo
    }

    pub fn hi(&self) -> f32 {
        self.hi
    }

    pub fn width(&self) -> f64 {
        self.width
    }

    pub fn representatives(&self) -> &[f32] {
        &self.representatives
    }

    pub fn bits(&self) -> u8 {
        bits_per_index(self.levels)
    }

    /// Bin of `v`; values outside the range land in the edge bins.
    #[inline]
    pub fn index_of(&self, v: f32) -> u32 {
        let pos = ((f64::from(v) - f64::from(self.lo)) / self.width).floor();
        pos.clamp(0.0, f64::from(self.levels - 1)) as u32
    }

    /// Lookup table as stored alongside the memory: one element per level.
    pub fn write_table(&self, dtype: DType, out: &mut Vec<u8>) {
        match dtype {
            DType::U8 => out.extend_from_slice(&self.representatives_u8),
            DType::F32 => {
                for r in &self.representatives {
                    out.extend_from_slice(&r.to_le_bytes());
                }
            }
        }
    }
}

/// LSB-first bit packing: element `i` occupies stream bits `i*b .. (i+1)*b`,
/// stream bit `j` is bit `j % 8` of byte `j / 8`.
pub fn pack_indices(indices: impl ExactSizeIterator<Item = u32>, bits: u8) -> Vec<u8> {
    let bits = u32::from(bits);
    let total_bits = indices.len() as u64 * u64::from(bits);
    let mut out = vec![0u8; total_bits.div_ceil(8) as usize];
    let mut acc: u64 = 0;
    let mut acc_bits: u32 = 0;
    let mut pos = 0usize;
    for idx in indices {
        debug_assert!(bits == 32 || idx >> bits == 0);
        acc |= u64::from(idx) << acc_bits;
        acc_bits += bits;
        while acc_bits >= 8 {
            out[pos] = acc as u8;
            pos += 1;
            acc >>= 8;
            acc_bits -= 8;
        }
    }
    if acc_bits > 0 {
        out[pos] = acc as u8;
    }
    out
}

pub fn unpack_indices(bytes: &[u8], bits: u8, count: usize) -> Vec<u32> {
    let bits = u32::from(bits);
    let mask = (1u64 << bits) - 1;
    let mut out = Vec::with_capacity(count);
    let mut acc: u64 = 0;
    let mut acc_bits: u32 = 0;
    let mut bytes = bytes.iter();
    for _ in 0..count {
        while acc_bits < bits {
            let b = bytes.next().copied().unwrap_or(0);
            acc |= u64::from(b) << acc_bits;
            acc_bits += 8;
        }
        out.push((acc & mask) as u32);
        acc >>= bits;
        acc_bits -= bits;
    }
    out
}

pub fn quantize(t: &TensorSample, cb: &Codebook) -> CompressedExemplar {
    let data = t.data();
    let bits = cb.bits();
    let bitstream = pack_indices((0..t.len()).map(|i| cb.index_of(data.get_f32(i))), bits);
    CompressedExemplar::new(
        t.label(),
        t.shape().to_vec(),
        t.dtype(),
        Payload::Quantized {
            bits_per_element: bits,
            bitstream,
        },
    )
}

pub fn dequantize(e: &CompressedExemplar, cb: &Codebook) -> Result<TensorSample> {
    let Payload::Quantized {
        bits_per_element,
        bitstream,
    } = e.payload()
    else {
        return Err(Error::Codec(format!(
            "expected a quantized exemplar, got {:?}",
            e.payload().kind()
        )));
    };
    if *bits_per_element != cb.bits() {
        return Err(Error::Codec(format!(
            "exemplar packed at {bits_per_element} bits, codebook uses {}",
            cb.bits()
        )));
    }
    let n = e.element_count();
    let expected = (n as u64 * u64::from(*bits_per_element)).div_ceil(8) as usize;
    if bitstream.len() != expected {
        return Err(Error::Codec(format!(
            "bitstream holds {} bytes, shape {:?} needs {expected}",
            bitstream.len(),
            e.shape()
        )));
    }
    let indices = unpack_indices(bitstream, *bits_per_element, n);
    if let Some(&bad) = indices.iter().find(|&&i| i >= cb.levels) {
        return Err(Error::Codec(format!(
            "index {bad} out of range for {} levels",
            cb.levels
        )));
    }
    let data = match e.dtype() {
        DType::U8 => TensorData::U8(
            indices
                .iter()
                .map(|&i| cb.representatives_u8[i as usize])
                .collect(),
        ),
        DType::F32 => TensorData::F32(
            indices
                .iter()
                .map(|&i| cb.representatives[i as usize])
                .collect(),
        ),
    };
    TensorSample::new(e.shape().to_vec(), data, e.label())
}
