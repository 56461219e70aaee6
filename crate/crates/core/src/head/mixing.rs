//! Sample mixing: cutmix for spatial inputs, mixup for flat vectors.

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Beta, Distribution};

/// How a flat feature vector maps onto a tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureLayout {
    Flat(usize),
    Spatial {
        channels: usize,
        height: usize,
        width: usize,
    },
}

impl FeatureLayout {
    pub fn from_shape(shape: &[usize]) -> Self {
        match *shape {
            [channels, height, width] if height >= 2 && width >= 2 => FeatureLayout::Spatial {
                channels,
                height,
                width,
            },
            _ => FeatureLayout::Flat(shape.iter().product()),
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            FeatureLayout::Flat(d) => d,
            FeatureLayout::Spatial {
                channels,
                height,
                width,
            } => channels * height * width,
        }
    }
}

/// Mixed inputs; sample `i` carries weight `lambda` on `y_a[i]` and
/// `1 - lambda` on `y_b[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct MixedBatch {
    pub inputs: Vec<f64>,
    pub y_a: Vec<u32>,
    pub y_b: Vec<u32>,
    pub lambda: f64,
}

impl MixedBatch {
    pub fn unmixed(inputs: Vec<f64>, labels: &[u32]) -> Self {
        Self {
            inputs,
            y_a: labels.to_vec(),
            y_b: labels.to_vec(),
            lambda: 1.0,
        }
    }
}

/// With probability `p`, mixes the batch with a shuffled copy of itself
/// using `lambda ~ Beta(alpha, alpha)`. Batches of one are never mixed.
pub fn mix_batch(
    inputs: Vec<f64>,
    labels: &[u32],
    layout: FeatureLayout,
    p: f64,
    alpha: f64,
    rng: &mut impl Rng,
) -> MixedBatch {
    if labels.len() < 2 || p <= 0.0 || rng.random::<f64>() >= p {
        return MixedBatch::unmixed(inputs, labels);
    }
    let lambda = Beta::new(alpha, alpha)
        .map(|b| b.sample(rng))
        .unwrap_or(1.0);
    let mut perm: Vec<usize> = (0..labels.len()).collect();
    perm.shuffle(rng);
    mix_with(inputs, labels, layout, lambda, &perm, rng)
}

/// Rectangle `(top, left, height, width)` covering about `(1 - lambda)` of
/// an `h x w` plane. The box always lies fully inside the plane.
pub fn cut_box(
    h: usize,
    w: usize,
    lambda: f64,
    rng: &mut impl Rng,
) -> (usize, usize, usize, usize) {
    let ratio = (1.0 - lambda).clamp(0.0, 1.0).sqrt();
    let ch = ((h as f64) * ratio).round() as usize;
    let cw = ((w as f64) * ratio).round() as usize;
    let top = rng.random_range(0..=h - ch);
    let left = rng.random_range(0..=w - cw);
    (top, left, ch, cw)
}

/// Deterministic core of [`mix_batch`] for a given `lambda` and pairing.
/// Returns the effective `lambda`, which for cutmix is the exact
/// unreplaced area fraction.
pub fn mix_with(
    mut inputs: Vec<f64>,
    labels: &[u32],
    layout: FeatureLayout,
    lambda: f64,
    perm: &[usize],
    rng: &mut impl Rng,
) -> MixedBatch {
    let d = layout.dim();
    let source = inputs.clone();
    let y_b: Vec<u32> = perm.iter().map(|&j| labels[j]).collect();
    let lambda = match layout {
        FeatureLayout::Flat(_) => {
            for (i, &j) in perm.iter().enumerate() {
                let (row, other) = (&mut inputs[i * d..(i + 1) * d], &source[j * d..(j + 1) * d]);
                for (x, &o) in row.iter_mut().zip(other) {
                    *x = lambda * *x + (1.0 - lambda) * o;
                }
            }
            lambda
        }
        FeatureLayout::Spatial {
            channels,
            height,
            width,
        } => {
            let (top, left, ch, cw) = cut_box(height, width, lambda, rng);
            for (i, &j) in perm.iter().enumerate() {
                for c in 0..channels {
                    for y in top..top + ch {
                        let start = (c * height + y) * width + left;
                        let (a, b) = (i * d + start, j * d + start);
                        inputs[a..a + cw].copy_from_slice(&source[b..b + cw]);
                    }
                }
            }
            1.0 - (ch * cw) as f64 / (height * width) as f64
        }
    };
    MixedBatch {
        inputs,
        y_a: labels.to_vec(),
        y_b,
        lambda,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    #[test]
    fn zero_probability_leaves_batch() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let mut rng = substream(0, "mix");
        let m = mix_batch(
            x.clone(),
            &[0, 1],
            FeatureLayout::Flat(2),
            0.0,
            1.0,
            &mut rng,
        );
        assert_eq!(m, MixedBatch::unmixed(x, &[0, 1]));
    }

    #[test]
    fn lambda_one_keeps_sample_a() {
        let x = vec![1.0, 2.0, 3.0, 4.0];
        let mut rng = substream(0, "mix");
        let m = mix_with(
            x.clone(),
            &[0, 1],
            FeatureLayout::Flat(2),
            1.0,
            &[1, 0],
            &mut rng,
        );
        assert_eq!(m.inputs, x);
        assert_eq!(m.lambda, 1.0);
        assert_eq!(m.y_a, vec![0, 1]);
        assert_eq!(m.y_b, vec![1, 0]);

        let layout = FeatureLayout::Spatial {
            channels: 1,
            height: 2,
            width: 2,
        };
        let x = vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0];
        let m = mix_with(x.clone(), &[0, 1], layout, 1.0, &[1, 0], &mut rng);
        assert_eq!(m.inputs, x);
        assert_eq!(m.lambda, 1.0);
    }

    #[test]
    fn mixup_interpolates() {
        let mut rng = substream(0, "mix");
        let m = mix_with(
            vec![0.0, 4.0, 8.0, 0.0],
            &[3, 5],
            FeatureLayout::Flat(2),
            0.25,
            &[1, 0],
            &mut rng,
        );
        assert_eq!(m.inputs, vec![6.0, 1.0, 2.0, 3.0]);
    }

    #[test]
    fn cutmix_quarter_area_on_32x32() {
        let layout = FeatureLayout::Spatial {
            channels: 3,
            height: 32,
            width: 32,
        };
        let d = layout.dim();
        let mut x = vec![0.0; 2 * d];
        x[d..].fill(1.0);
        let mut rng = substream(4, "mix");
        let m = mix_with(x, &[0, 1], layout, 0.75, &[1, 0], &mut rng);
        let swapped_a = m.inputs[..d].iter().filter(|&&v| v == 1.0).count();
        let swapped_b = m.inputs[d..].iter().filter(|&&v| v == 0.0).count();
        assert_eq!(swapped_a, 3 * 256);
        assert_eq!(swapped_b, 3 * 256);
        assert_eq!(m.lambda, 0.75);
    }

    #[test]
    fn layout_from_shape() {
        assert_eq!(FeatureLayout::from_shape(&[128]), FeatureLayout::Flat(128));
        assert_eq!(
            FeatureLayout::from_shape(&[256, 1, 1]),
            FeatureLayout::Flat(256)
        );
        assert_eq!(
            FeatureLayout::from_shape(&[3, 4, 4]),
            FeatureLayout::Spatial {
                channels: 3,
                height: 4,
                width: 4
            }
        );
    }

    #[test]
    fn random_mixing_preserves_shape_and_labels() {
        let mut rng = substream(9, "mix");
        let labels = [0, 1, 2, 3];
        for _ in 0..50 {
            let m = mix_batch(
                vec![0.5; 4 * 12],
                &labels,
                FeatureLayout::Flat(12),
                0.5,
                1.0,
                &mut rng,
            );
            assert_eq!(m.inputs.len(), 48);
            assert!((0.0..=1.0).contains(&m.lambda));
            let mut b = m.y_b.clone();
            b.sort();
            assert_eq!(b, labels);
        }
    }
}
