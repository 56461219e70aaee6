//! Byte accounting for a compressed memory.
//!
//! Per-exemplar costs, with `n` input elements:
//!
//! | codec      | bytes per exemplar                         | fixed overhead      |
//! |------------|--------------------------------------------|---------------------|
//! | identity   | `n * s_elem`                               | 0                   |
//! | quantize   | `ceil(ceil(log2 k_quant) * n / 8)`         | `k_quant * s_elem`  |
//! | thin       | `n_keep * (s_elem + s_addr)`               | 0                   |
//! | autoencode | `k_ae * n_h * s_float`                     | `s_ae`              |
//!
//! where `s_elem` is `s_uint` for raw images and `s_float` for feature maps,
//! `n_keep = n - floor(k_thin * n)` and `n_h = (H/4) * (W/4)`. The total is
//! `s_model + overhead + N * per_exemplar`.

use crate::error::Result;
use crate::tensor_io::{element_count, DType};

use super::{autoencoder, quantize, thin, CodecConfig};

/// Storage constants. Element widths are fixed by the wire format; the model
/// and autoencoder sizes vary per experiment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StorageModel {
    /// Size of encoder plus head, charged once.
    pub s_model: u64,
    /// Autoencoder network size, charged once when autoencoding.
    pub s_ae: u64,
}

impl StorageModel {
    pub const S_FLOAT: u64 = 4;
    pub const S_ADDR: u64 = 2;
    pub const S_UINT: u64 = 1;

    pub fn element_size(dtype: DType) -> u64 {
        match dtype {
            DType::U8 => Self::S_UINT,
            DType::F32 => Self::S_FLOAT,
        }
    }
}

pub fn exemplar_cost(cfg: &CodecConfig, shape: &[usize], dtype: DType) -> Result<u64> {
    cfg.validate()?;
    let n = element_count(shape);
    let elem = StorageModel::element_size(dtype);
    Ok(match *cfg {
        CodecConfig::Identity => n as u64 * elem,
        CodecConfig::Quantize { levels } => {
            (u64::from(quantize::bits_per_index(levels)) * n as u64).div_ceil(8)
        }
        CodecConfig::Thin { ratio } => {
            thin::keep_count(n, ratio) as u64 * (elem + StorageModel::S_ADDR)
        }
        CodecConfig::Autoencode { bottleneck } => {
            autoencoder::latent_len(shape, bottleneck as usize)? as u64 * StorageModel::S_FLOAT
        }
    })
}

/// One-off cost of the lookup table or autoencoder, excluding `s_model`.
pub fn fixed_overhead(cfg: &CodecConfig, dtype: DType, sm: &StorageModel) -> u64 {
    match *cfg {
        CodecConfig::Quantize { levels } => u64::from(levels) * StorageModel::element_size(dtype),
        CodecConfig::Autoencode { .. } => sm.s_ae,
        CodecConfig::Identity | CodecConfig::Thin { .. } => 0,
    }
}

/// Total storage `s_Σ` of a memory with `slots` exemplars.
pub fn total_storage(
    cfg: &CodecConfig,
    shape: &[usize],
    dtype: DType,
    sm: &StorageModel,
    slots: u64,
) -> Result<u64> {
    Ok(sm.s_model + fixed_overhead(cfg, dtype, sm) + slots * exemplar_cost(cfg, shape, dtype)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const SM: StorageModel = StorageModel {
        s_model: 0,
        s_ae: 0,
    };

    #[test]
    fn raw_cifar_identity() {
        assert_eq!(
            exemplar_cost(&CodecConfig::Identity, &[3, 32, 32], DType::U8).unwrap(),
            3072
        );
    }

    #[test]
    fn quantize_512_at_16_levels() {
        let cfg = CodecConfig::Quantize { levels: 16 };
        assert_eq!(exemplar_cost(&cfg, &[512], DType::F32).unwrap(), 256);
        assert_eq!(
            total_storage(&cfg, &[512], DType::F32, &SM, 100).unwrap(),
            25_664
        );
    }

    #[test]
    fn thin_512_at_95_percent() {
        let cfg = CodecConfig::Thin { ratio: 0.95 };
        assert_eq!(exemplar_cost(&cfg, &[512], DType::F32).unwrap(), 156);
        assert_eq!(exemplar_cost(&cfg, &[512], DType::U8).unwrap(), 78);
    }

    #[test]
    fn autoencoder_column() {
        let cfg = CodecConfig::Autoencode { bottleneck: 8 };
        let sm = StorageModel {
            s_model: 0,
            s_ae: 4711,
        };
        assert_eq!(exemplar_cost(&cfg, &[3, 32, 32], DType::U8).unwrap(), 2048);
        assert_eq!(
            total_storage(&cfg, &[3, 32, 32], DType::U8, &sm, 10).unwrap(),
            4711 + 10 * 2048
        );
        assert!(exemplar_cost(&cfg, &[256, 2, 2], DType::F32).is_err());
    }

    #[test]
    fn empty_memory_costs_only_the_model() {
        let sm = StorageModel {
            s_model: 999,
            s_ae: 0,
        };
        assert_eq!(
            total_storage(&CodecConfig::Identity, &[7], DType::F32, &sm, 0).unwrap(),
            999
        );
    }

    proptest! {
        #[test]
        fn cost_monotone_in_k(n in 1usize..4096, a in 2u32..1000, b in 2u32..1000, f in any::<bool>()) {
            let dtype = if f { DType::F32 } else { DType::U8 };
            let (lo, hi) = (a.min(b), a.max(b));
            let q = |k| exemplar_cost(&CodecConfig::Quantize { levels: k }, &[n], dtype).unwrap();
            prop_assert!(q(lo) <= q(hi));
        }

        #[test]
        fn cost_non_increasing_in_thin_ratio(n in 1usize..4096, a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = (a.min(b), a.max(b));
            let t = |r| exemplar_cost(&CodecConfig::Thin { ratio: r }, &[n], DType::F32).unwrap();
            prop_assert!(t(lo) >= t(hi));
        }

        #[test]
        fn cost_monotone_in_bottleneck(h in 1usize..8, w in 1usize..8, a in 1u32..64, b in 1u32..64) {
            let shape = [3, 4 * h, 4 * w];
            let (lo, hi) = (a.min(b), a.max(b));
            let c = |k| exemplar_cost(&CodecConfig::Autoencode { bottleneck: k }, &shape, DType::F32).unwrap();
            prop_assert!(c(lo) <= c(hi));
        }
    }
}
