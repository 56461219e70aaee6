//! Compressor/decompressor pairs and the byte-exact storage model.

pub mod autoencoder;
pub mod quantize;
pub mod storage;
pub mod thin;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::tensor_io::{element_count, DType, TensorData, TensorSample};

pub use autoencoder::{ae_compress, ae_decompress, AeWeights, Layer, LayerKind};
pub use quantize::{dequantize, quantize, Codebook, RangeStats};
pub use storage::{exemplar_cost, fixed_overhead, total_storage, StorageModel};
pub use thin::{thin, unthin};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CodecKind {
    Identity,
    Quantize,
    Thin,
    Autoencode,
}

impl CodecKind {
    pub fn name(self) -> &'static str {
        match self {
            CodecKind::Identity => "identity",
            CodecKind::Quantize => "quantize",
            CodecKind::Thin => "thin",
            CodecKind::Autoencode => "autoencode",
        }
    }

    pub fn code(self) -> u8 {
        match self {
            CodecKind::Identity => 0,
            CodecKind::Quantize => 1,
            CodecKind::Thin => 2,
            CodecKind::Autoencode => 3,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        Some(match code {
            0 => CodecKind::Identity,
            1 => CodecKind::Quantize,
            2 => CodecKind::Thin,
            3 => CodecKind::Autoencode,
            _ => return None,
        })
    }
}

impl fmt::Display for CodecKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for CodecKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "identity" | "none" => CodecKind::Identity,
            "quantize" | "quant" => CodecKind::Quantize,
            "thin" | "thinning" => CodecKind::Thin,
            "autoencode" | "ae" => CodecKind::Autoencode,
            other => return Err(Error::Config(format!("unknown codec `{other}`"))),
        })
    }
}

/// Compressor choice plus its compression parameter `k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum CodecConfig {
    Identity,
    /// `k_quant >= 2` levels.
    Quantize {
        levels: u32,
    },
    /// Fraction `k_thin` of entries dropped, in `[0, 1)`.
    Thin {
        ratio: f64,
    },
    /// `k_ae >= 1` bottleneck channels.
    Autoencode {
        bottleneck: u32,
    },
}

impl CodecConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            CodecConfig::Identity => Ok(()),
            CodecConfig::Quantize { levels } if !(2..=quantize::MAX_LEVELS).contains(&levels) => {
                Err(Error::Config(format!(
                    "k_quant must be in 2..={}, got {levels}",
                    quantize::MAX_LEVELS
                )))
            }
            CodecConfig::Quantize { .. } => Ok(()),
            CodecConfig::Thin { ratio } => thin::check_ratio(ratio),
            CodecConfig::Autoencode { bottleneck: 0 } => {
                Err(Error::Config("k_ae must be at least 1".into()))
            }
            CodecConfig::Autoencode { .. } => Ok(()),
        }
    }

    pub fn kind(&self) -> CodecKind {
        match self {
            CodecConfig::Identity => CodecKind::Identity,
            CodecConfig::Quantize { .. } => CodecKind::Quantize,
            CodecConfig::Thin { .. } => CodecKind::Thin,
            CodecConfig::Autoencode { .. } => CodecKind::Autoencode,
        }
    }

    /// The compression parameter as a number, `None` for identity.
    pub fn parameter(&self) -> Option<f64> {
        match *self {
            CodecConfig::Identity => None,
            CodecConfig::Quantize { levels } => Some(f64::from(levels)),
            CodecConfig::Thin { ratio } => Some(ratio),
            CodecConfig::Autoencode { bottleneck } => Some(f64::from(bottleneck)),
        }
    }

    pub fn from_parts(kind: CodecKind, k: Option<&str>) -> Result<Self> {
        let need = |what: &str| {
            k.map(str::trim)
                .filter(|s| !s.is_empty())
                .ok_or_else(|| Error::Config(format!("codec {kind} needs parameter {what}")))
        };
        let bad = |v: &str| Error::Config(format!("cannot parse codec parameter `{v}`"));
        let cfg = match kind {
            CodecKind::Identity => CodecConfig::Identity,
            CodecKind::Quantize => {
                let v = need("k_quant")?;
                CodecConfig::Quantize {
                    levels: v.parse().map_err(|_| bad(v))?,
                }
            }
            CodecKind::Thin => {
                let v = need("k_thin")?;
                CodecConfig::Thin {
                    ratio: v.parse().map_err(|_| bad(v))?,
                }
            }
            CodecKind::Autoencode => {
                let v = need("k_ae")?;
                CodecConfig::Autoencode {
                    bottleneck: v.parse().map_err(|_| bad(v))?,
                }
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parameter_string(&self) -> String {
        match *self {
            CodecConfig::Identity => String::new(),
            CodecConfig::Quantize { levels } => levels.to_string(),
            CodecConfig::Thin { ratio } => ratio.to_string(),
            CodecConfig::Autoencode { bottleneck } => bottleneck.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Bin indices packed LSB-first at `bits_per_element` bits each.
    Quantized {
        bits_per_element: u8,
        bitstream: Vec<u8>,
    },
    /// Strictly increasing indices with their values.
    Sparse {
        indices: Vec<u16>,
        values: TensorData,
    },
    /// Autoencoder bottleneck `(k_ae, H/4, W/4)`.
    Latent {
        shape: [usize; 3],
        values: Vec<f32>,
    },
    Identity(TensorData),
}

impl Payload {
    pub fn kind(&self) -> CodecKind {
        match self {
            Payload::Quantized { .. } => CodecKind::Quantize,
            Payload::Sparse { .. } => CodecKind::Thin,
            Payload::Latent { .. } => CodecKind::Autoencode,
            Payload::Identity(_) => CodecKind::Identity,
        }
    }
}

/// One stored memory entry. Only the payload counts towards storage;
/// label and geometry are bookkeeping shared with the dataset header.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedExemplar {
    label: u32,
    shape: Vec<usize>,
    dtype: DType,
    payload: Payload,
}

impl CompressedExemplar {
    pub fn new(label: u32, shape: Vec<usize>, dtype: DType, payload: Payload) -> Self {
        Self {
            label,
            shape,
            dtype,
            payload,
        }
    }

    pub fn label(&self) -> u32 {
        self.label
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn payload(&self) -> &Payload {
        &self.payload
    }

    pub fn element_count(&self) -> usize {
        element_count(&self.shape)
    }

    /// Serialized payload length, derived from geometry alone.
    pub fn byte_size(&self) -> u64 {
        let n = self.element_count() as u64;
        match &self.payload {
            Payload::Quantized {
                bits_per_element, ..
            } => (n * u64::from(*bits_per_element)).div_ceil(8),
            Payload::Sparse { indices, .. } => {
                indices.len() as u64
                    * (StorageModel::S_ADDR + StorageModel::element_size(self.dtype))
            }
            Payload::Latent { shape, .. } => {
                shape.iter().product::<usize>() as u64 * StorageModel::S_FLOAT
            }
            Payload::Identity(_) => n * StorageModel::element_size(self.dtype),
        }
    }

    /// Appends the payload: packed bits, `(u16 index, value)` pairs,
    /// f32 latents or raw elements, all little-endian.
    pub fn write_payload(&self, out: &mut Vec<u8>) {
        match &self.payload {
            Payload::Quantized { bitstream, .. } => out.extend_from_slice(bitstream),
            Payload::Sparse { indices, values } => {
                for (k, &i) in indices.iter().enumerate() {
                    out.extend_from_slice(&i.to_le_bytes());
                    match values {
                        TensorData::U8(v) => out.push(v[k]),
                        TensorData::F32(v) => out.extend_from_slice(&v[k].to_le_bytes()),
                    }
                }
            }
            Payload::Latent { values, .. } => {
                for v in values {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
            Payload::Identity(data) => data.write_le(out),
        }
    }

    pub fn payload_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_size() as usize);
        self.write_payload(&mut out);
        out
    }

    /// Inverse of [`write_payload`](Self::write_payload) given the codec
    /// that produced the bytes.
    pub fn from_payload(
        codec: &CodecConfig,
        label: u32,
        shape: Vec<usize>,
        dtype: DType,
        bytes: &[u8],
    ) -> Result<Self> {
        let n = element_count(&shape);
        let elem = StorageModel::element_size(dtype) as usize;
        let decode_values = |raw: &[u8]| match dtype {
            DType::U8 => TensorData::U8(raw.to_vec()),
            DType::F32 => TensorData::F32(
                raw.chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect(),
            ),
        };
        let payload = match *codec {
            CodecConfig::Identity => {
                if bytes.len() != n * elem {
                    return Err(Error::Codec(format!(
                        "identity payload of {} bytes, expected {}",
                        bytes.len(),
                        n * elem
                    )));
                }
                Payload::Identity(decode_values(bytes))
            }
            CodecConfig::Quantize { levels } => {
                let bits = quantize::bits_per_index(levels);
                let expected = (n * usize::from(bits)).div_ceil(8);
                if bytes.len() != expected {
                    return Err(Error::Codec(format!(
                        "bitstream of {} bytes, expected {expected}",
                        bytes.len()
                    )));
                }
                Payload::Quantized {
                    bits_per_element: bits,
                    bitstream: bytes.to_vec(),
                }
            }
            CodecConfig::Thin { .. } => {
                let pair = 2 + elem;
                if !bytes.len().is_multiple_of(pair) {
                    return Err(Error::Codec(format!(
                        "sparse payload of {} bytes is not a multiple of {pair}",
                        bytes.len()
                    )));
                }
                let mut indices = Vec::with_capacity(bytes.len() / pair);
                let mut raw = Vec::with_capacity(bytes.len() / pair * elem);
                for chunk in bytes.chunks_exact(pair) {
                    indices.push(u16::from_le_bytes([chunk[0], chunk[1]]));
                    raw.extend_from_slice(&chunk[2..]);
                }
                Payload::Sparse {
                    indices,
                    values: decode_values(&raw),
                }
            }
            CodecConfig::Autoencode { bottleneck } => {
                let [_, h, w] = autoencoder::spatial(&shape)?;
                let latent = [bottleneck as usize, h / 4, w / 4];
                let len: usize = latent.iter().product();
                if bytes.len() != len * 4 {
                    return Err(Error::Codec(format!(
                        "latent payload of {} bytes, expected {}",
                        bytes.len(),
                        len * 4
                    )));
                }
                let values = bytes
                    .chunks_exact(4)
                    .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                    .collect();
                Payload::Latent {
                    shape: latent,
                    values,
                }
            }
        };
        Ok(Self::new(label, shape, dtype, payload))
    }
}

/// A ready-to-use codec with its lookup table or network.
#[derive(Debug, Clone)]
pub enum Codec {
    Identity,
    Quantize(Arc<Codebook>),
    Thin(f64),
    Autoencode(Arc<AeWeights>),
}

impl Codec {
    pub fn thin(ratio: f64) -> Result<Self> {
        thin::check_ratio(ratio)?;
        Ok(Codec::Thin(ratio))
    }

    pub fn config(&self) -> CodecConfig {
        match self {
            Codec::Identity => CodecConfig::Identity,
            Codec::Quantize(cb) => CodecConfig::Quantize {
                levels: cb.levels(),
            },
            Codec::Thin(ratio) => CodecConfig::Thin { ratio: *ratio },
            Codec::Autoencode(w) => CodecConfig::Autoencode {
                bottleneck: w.bottleneck() as u32,
            },
        }
    }

    pub fn kind(&self) -> CodecKind {
        self.config().kind()
    }

    pub fn compress(&self, t: &TensorSample) -> Result<CompressedExemplar> {
        match self {
            Codec::Identity => Ok(CompressedExemplar::new(
                t.label(),
                t.shape().to_vec(),
                t.dtype(),
                Payload::Identity(t.data().clone()),
            )),
            Codec::Quantize(cb) => Ok(quantize(t, cb)),
            Codec::Thin(ratio) => thin(t, *ratio),
            Codec::Autoencode(w) => ae_compress(t, w),
        }
    }

    pub fn decompress(&self, e: &CompressedExemplar) -> Result<TensorSample> {
        if e.payload().kind() != self.kind() {
            return Err(Error::Codec(format!(
                "{} exemplar cannot be decoded by the {} codec",
                e.payload().kind(),
                self.kind()
            )));
        }
        match (self, e.payload()) {
            (Codec::Identity, Payload::Identity(data)) => {
                TensorSample::new(e.shape().to_vec(), data.clone(), e.label())
            }
            (Codec::Quantize(cb), _) => dequantize(e, cb),
            (Codec::Thin(_), _) => unthin(e),
            (Codec::Autoencode(w), _) => ae_decompress(e, w),
            _ => unreachable!("kind checked above"),
        }
    }

    /// Serialized fixed overhead: the lookup table or the network parameters.
    pub fn write_overhead(&self, dtype: DType, out: &mut Vec<u8>) {
        match self {
            Codec::Identity | Codec::Thin(_) => {}
            Codec::Quantize(cb) => cb.write_table(dtype, out),
            Codec::Autoencode(w) => {
                for l in w.layers() {
                    for v in l.kernel.iter().chain(&l.bias) {
                        out.extend_from_slice(&v.to_le_bytes());
                    }
                }
            }
        }
    }

    /// Storage model matching this codec; `s_ae` comes from the network.
    pub fn storage_model(&self, s_model: u64) -> StorageModel {
        let s_ae = match self {
            Codec::Autoencode(w) => w.parameter_bytes(),
            _ => 0,
        };
        StorageModel { s_model, s_ae }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parsing() {
        assert_eq!(
            CodecConfig::from_parts("quantize".parse().unwrap(), Some("16")).unwrap(),
            CodecConfig::Quantize { levels: 16 }
        );
        assert_eq!(
            CodecConfig::from_parts(CodecKind::Thin, Some("0.95")).unwrap(),
            CodecConfig::Thin { ratio: 0.95 }
        );
        assert_eq!(
            CodecConfig::from_parts(CodecKind::Identity, None).unwrap(),
            CodecConfig::Identity
        );
        assert!(CodecConfig::from_parts(CodecKind::Quantize, Some("1")).is_err());
        assert!(CodecConfig::from_parts(CodecKind::Thin, Some("1.0")).is_err());
        assert!(CodecConfig::from_parts(CodecKind::Autoencode, Some("0")).is_err());
        assert!(CodecConfig::from_parts(CodecKind::Autoencode, None).is_err());
        assert!("zip".parse::<CodecKind>().is_err());
    }

    #[test]
    fn codec_mismatch_is_reported() {
        let t = TensorSample::new(vec![2], TensorData::F32(vec![1.0, 2.0]), 0).unwrap();
        let e = Codec::Identity.compress(&t).unwrap();
        assert!(Codec::Thin(0.5).decompress(&e).is_err());
        assert_eq!(Codec::Identity.decompress(&e).unwrap(), t);
    }

    #[test]
    fn payload_decoding_inverts_encoding() {
        let t = TensorSample::new(
            vec![6],
            TensorData::F32(vec![1.0, -4.0, 2.5, 0.0, 3.0, -0.5]),
            9,
        )
        .unwrap();
        let cb = Codebook::new(RangeStats { lo: -4.0, hi: 4.0 }, 5).unwrap();
        for codec in [
            Codec::Identity,
            Codec::Quantize(Arc::new(cb)),
            Codec::Thin(0.5),
        ] {
            let e = codec.compress(&t).unwrap();
            let bytes = e.payload_bytes();
            assert_eq!(bytes.len() as u64, e.byte_size());
            let back =
                CompressedExemplar::from_payload(&codec.config(), 9, vec![6], DType::F32, &bytes)
                    .unwrap();
            assert_eq!(back, e);
        }
    }
}
