//! Inference for the convolutional autoencoder compressor.
//!
//! Encoder: two blocks of `conv 3x3 (pad 1) -> ReLU -> maxpool 2x2 (stride 2)`.
//! Decoder: two blocks of `transposed conv 2x2 (stride 2) -> ReLU`.
//!
//! Weights come from an FAEW file (little-endian):
//!
//! ```text
//! magic "FAEW" | version u16 = 1 | k_ae u16 | layer_count u8 = 4
//! per layer: out_ch u16 | in_ch u16 | kh u8 | kw u8 | kind u8
//!            | kernel f32 x out_ch*in_ch*kh*kw | bias f32 x out_ch
//! ```
//!
//! `kind` is 0 for an encoder block and 1 for a decoder block. Kernels are
//! `[out][in][kh][kw]` for every layer, including the transposed ones.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor_io::{DType, TensorData, TensorSample};
use crate::wire::{CountingWriter, FieldReader};

use super::{CompressedExemplar, Payload};

pub const FAEW_MAGIC: &[u8; 4] = b"FAEW";
pub const FAEW_VERSION: u16 = 1;
const LAYER_COUNT: u8 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerKind {
    /// 3x3 convolution, padding 1, then ReLU and 2x2 max-pooling.
    ConvPool,
    /// 2x2 transposed convolution, stride 2, then ReLU.
    UpConv,
}

impl LayerKind {
    fn code(self) -> u8 {
        match self {
            LayerKind::ConvPool => 0,
            LayerKind::UpConv => 1,
        }
    }

    fn kernel_size(self) -> usize {
        match self {
            LayerKind::ConvPool => 3,
            LayerKind::UpConv => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub kind: LayerKind,
    pub out_channels: usize,
    pub in_channels: usize,
    pub kernel: Vec<f32>,
    pub bias: Vec<f32>,
}

impl Layer {
    pub fn new(
        kind: LayerKind,
        out_channels: usize,
        in_channels: usize,
        kernel: Vec<f32>,
        bias: Vec<f32>,
    ) -> Result<Self> {
        let k = kind.kernel_size();
        if out_channels == 0 || in_channels == 0 {
            return Err(Error::Config(
                "layer channel counts must be positive".into(),
            ));
        }
        if out_channels > usize::from(u16::MAX) || in_channels > usize::from(u16::MAX) {
            return Err(Error::Config("layer channel counts must fit in u16".into()));
        }
        if kernel.len() != out_channels * in_channels * k * k {
            return Err(Error::Config(format!(
                "kernel of {out_channels}x{in_channels}x{k}x{k} needs {} values, got {}",
                out_channels * in_channels * k * k,
                kernel.len()
            )));
        }
        if bias.len() != out_channels {
            return Err(Error::Config(format!(
                "bias needs {out_channels} values, got {}",
                bias.len()
            )));
        }
        if kernel.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite layer parameter".into()));
        }
        Ok(Self {
            kind,
            out_channels,
            in_channels,
            kernel,
            bias,
        })
    }

    fn parameter_count(&self) -> usize {
        self.kernel.len() + self.bias.len()
    }
}

/// Validated four-layer autoencoder.
#[derive(Debug, Clone, PartialEq)]
pub struct AeWeights {
    bottleneck: usize,
    layers: [Layer; 4],
}

impl AeWeights {
    pub fn new(bottleneck: usize, layers: [Layer; 4]) -> Result<Self> {
        use LayerKind::*;
        let kinds = layers.each_ref().map(|l| l.kind);
        if kinds != [ConvPool, ConvPool, UpConv, UpConv] {
            return Err(Error::Config(format!(
                "layer kinds must be [conv, conv, upconv, upconv], got {kinds:?}"
            )));
        }
        if bottleneck == 0 || layers[1].out_channels != bottleneck {
            return Err(Error::Config(format!(
                "encoder emits {} channels, k_ae is {bottleneck}",
                layers[1].out_channels
            )));
        }
        for w in layers.windows(2) {
            if w[1].in_channels != w[0].out_channels {
                return Err(Error::Config(format!(
                    "layer chain broken: {} output channels feed {} input channels",
                    w[0].out_channels, w[1].in_channels
                )));
            }
        }
        Ok(Self { bottleneck, layers })
    }

    pub fn bottleneck(&self) -> usize {
        self.bottleneck
    }

    pub fn layers(&self) -> &[Layer; 4] {
        &self.layers
    }

    pub fn input_channels(&self) -> usize {
        self.layers[0].in_channels
    }

    pub fn output_channels(&self) -> usize {
        self.layers[3].out_channels
    }

    /// Network size `s_ae`: bytes of all kernels and biases as f32.
    pub fn parameter_bytes(&self) -> u64 {
        4 * self
            .layers
            .iter()
            .map(Layer::parameter_count)
            .sum::<usize>() as u64
    }

    /// Deterministic weights drawn uniformly from `[-scale, scale]`, used for
    /// fixtures and smoke runs when no trained file is available.
    pub fn random(
        channels: usize,
        hidden: usize,
        bottleneck: usize,
        scale: f32,
        rng: &mut impl rand::Rng,
    ) -> Result<Self> {
        let mut layer = |kind: LayerKind, out: usize, inp: usize| {
            let k = kind.kernel_size();
            let kernel = (0..out * inp * k * k)
                .map(|_| rng.random_range(-scale..=scale))
                .collect();
            let bias = (0..out).map(|_| rng.random_range(-scale..=scale)).collect();
            Layer::new(kind, out, inp, kernel, bias)
        };
        let layers = [
            layer(LayerKind::ConvPool, hidden, channels)?,
            layer(LayerKind::ConvPool, bottleneck, hidden)?,
            layer(LayerKind::UpConv, hidden, bottleneck)?,
            layer(LayerKind::UpConv, channels, hidden)?,
        ];
        Self::new(bottleneck, layers)
    }

    /// Latent shape `(k_ae, H/4, W/4)` for an input shape.
    pub fn latent_shape(&self, input: &[usize]) -> Result<[usize; 3]> {
        let [c, h, w] = spatial(input)?;
        if c != self.input_channels() {
            return Err(Error::Shape(format!(
                "autoencoder expects {} input channels, got {c}",
                self.input_channels()
            )));
        }
        Ok([self.bottleneck, h / 4, w / 4])
    }
}

/// Checks `(C, H, W)` with `H, W >= 4` and divisible by 4.
pub fn spatial(shape: &[usize]) -> Result<[usize; 3]> {
    let &[c, h, w] = shape else {
        return Err(Error::Shape(format!(
            "autoencoder needs a (C, H, W) tensor, got {shape:?}"
        )));
    };
    if h < 4 || w < 4 || h % 4 != 0 || w % 4 != 0 {
        return Err(Error::Shape(format!(
            "spatial dims {h}x{w} too small or not divisible by 4"
        )));
    }
    Ok([c, h, w])
}

/// Latent element count `n_h * k_ae` for an input shape.
pub fn latent_len(shape: &[usize], k_ae: usize) -> Result<usize> {
    let [_, h, w] = spatial(shape)?;
    Ok(k_ae * (h / 4) * (w / 4))
}

fn conv3x3_relu_pool(layer: &Layer, input: &[f32], h: usize, w: usize) -> Vec<f32> {
    let (cin, cout) = (layer.in_channels, layer.out_channels);
    let mut conv = vec![0f32; cout * h * w];
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                let mut acc = f64::from(layer.bias[o]);
                for c in 0..cin {
                    let kbase = (o * cin + c) * 9;
                    let ibase = c * h * w;
                    for ky in 0..3 {
                        let iy = y + ky;
                        if iy == 0 || iy > h {
                            continue;
                        }
                        for kx in 0..3 {
                            let ix = x + kx;
                            if ix == 0 || ix > w {
                                continue;
                            }
                            acc += f64::from(layer.kernel[kbase + ky * 3 + kx])
                                * f64::from(input[ibase + (iy - 1) * w + (ix - 1)]);
                        }
                    }
                }
                conv[(o * h + y) * w + x] = (acc as f32).max(0.0);
            }
        }
    }
    let (ph, pw) = (h / 2, w / 2);
    let mut pooled = vec![0f32; cout * ph * pw];
    for o in 0..cout {
        for y in 0..ph {
            for x in 0..pw {
                let at = |dy: usize, dx: usize| conv[(o * h + 2 * y + dy) * w + 2 * x + dx];
                pooled[(o * ph + y) * pw + x] = at(0, 0).max(at(0, 1)).max(at(1, 0)).max(at(1, 1));
            }
        }
    }
    pooled
}

fn upconv2x2_relu(layer: &Layer, input: &[f32], h: usize, w: usize) -> Vec<f32> {
    let (cin, cout) = (layer.in_channels, layer.out_channels);
    let (oh, ow) = (2 * h, 2 * w);
    let mut out = vec![0f32; cout * oh * ow];
    for o in 0..cout {
        for y in 0..h {
            for x in 0..w {
                for dy in 0..2 {
                    for dx in 0..2 {
                        let mut acc = f64::from(layer.bias[o]);
                        for c in 0..cin {
                            acc += f64::from(layer.kernel[((o * cin + c) * 2 + dy) * 2 + dx])
                                * f64::from(input[(c * h + y) * w + x]);
                        }
                        out[(o * oh + 2 * y + dy) * ow + 2 * x + dx] = (acc as f32).max(0.0);
                    }
                }
            }
        }
    }
    out
}

pub fn ae_compress(t: &TensorSample, weights: &AeWeights) -> Result<CompressedExemplar> {
    let [_, h, w] = spatial(t.shape())?;
    let latent_shape = weights.latent_shape(t.shape())?;
    let x = t.data().to_f32_vec();
    let x = conv3x3_relu_pool(&weights.layers[0], &x, h, w);
    let x = conv3x3_relu_pool(&weights.layers[1], &x, h / 2, w / 2);
    Ok(CompressedExemplar::new(
        t.label(),
        t.shape().to_vec(),
        t.dtype(),
        Payload::Latent {
            shape: latent_shape,
            values: x,
        },
    ))
}

pub fn ae_decompress(e: &CompressedExemplar, weights: &AeWeights) -> Result<TensorSample> {
    let Payload::Latent { shape, values } = e.payload() else {
        return Err(Error::Codec(format!(
            "expected a latent exemplar, got {:?}",
            e.payload().kind()
        )));
    };
    let [k, lh, lw] = *shape;
    if k != weights.bottleneck || values.len() != k * lh * lw {
        return Err(Error::Shape(format!(
            "latent {shape:?} does not match decoder with {} input channels",
            weights.bottleneck
        )));
    }
    let [c, h, w] = spatial(e.shape())?;
    if c != weights.output_channels() || h != 4 * lh || w != 4 * lw {
        return Err(Error::Shape(format!(
            "decoder produces ({}, {}, {}), exemplar expects {:?}",
            weights.output_channels(),
            4 * lh,
            4 * lw,
            e.shape()
        )));
    }
    let x = upconv2x2_relu(&weights.layers[2], values, lh, lw);
    let x = upconv2x2_relu(&weights.layers[3], &x, 2 * lh, 2 * lw);
    let data = match e.dtype() {
        DType::F32 => TensorData::F32(x),
        DType::U8 => TensorData::U8(
            x.iter()
                .map(|v| v.round().clamp(0.0, 255.0) as u8)
                .collect(),
        ),
    };
    TensorSample::new(e.shape().to_vec(), data, e.label())
}

pub fn write_weights<W: Write>(weights: &AeWeights, destination: W) -> Result<u64> {
    let mut w = CountingWriter::new(destination);
    w.put(FAEW_MAGIC)?;
    w.put(&FAEW_VERSION.to_le_bytes())?;
    w.put(&(weights.bottleneck as u16).to_le_bytes())?;
    w.put(&[LAYER_COUNT])?;
    let mut buf = Vec::new();
    for l in &weights.layers {
        let k = l.kind.kernel_size() as u8;
        buf.clear();
        buf.extend_from_slice(&(l.out_channels as u16).to_le_bytes());
        buf.extend_from_slice(&(l.in_channels as u16).to_le_bytes());
        buf.extend_from_slice(&[k, k, l.kind.code()]);
        for v in l.kernel.iter().chain(&l.bias) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
        w.put(&buf)?;
    }
    w.flush()?;
    Ok(w.written)
}

pub fn read_weights<R: Read>(source: R) -> Result<AeWeights> {
    let mut r = FieldReader::new(source);
    r.magic(FAEW_MAGIC)?;
    let version = r.u16("version")?;
    if version != FAEW_VERSION {
        return Err(Error::UnsupportedVersion {
            format: "FAEW",
            version,
        });
    }
    let k_ae = usize::from(r.u16("k_ae")?);
    let count = r.u8("layer_count")?;
    if count != LAYER_COUNT {
        return Err(Error::format(
            "layer_count",
            format!("expected 4, got {count}"),
        ));
    }
    let mut layers = Vec::with_capacity(4);
    for _ in 0..LAYER_COUNT {
        let out = usize::from(r.u16("out_ch")?);
        let inp = usize::from(r.u16("in_ch")?);
        let kh = usize::from(r.u8("kh")?);
        let kw = usize::from(r.u8("kw")?);
        let kind = match r.u8("kind")? {
            0 => LayerKind::ConvPool,
            1 => LayerKind::UpConv,
            other => return Err(Error::format("kind", format!("unknown layer kind {other}"))),
        };
        if kh != kind.kernel_size() || kw != kind.kernel_size() {
            return Err(Error::format(
                "kh",
                format!(
                    "{kind:?} layers need {0}x{0} kernels, got {kh}x{kw}",
                    kind.kernel_size()
                ),
            ));
        }
        let kernel = r.f32_vec("kernel", out * inp * kh * kw)?;
        let bias = r.f32_vec("bias", out)?;
        layers.push(
            Layer::new(kind, out, inp, kernel, bias)
                .map_err(|e| Error::format("kernel", e.to_string()))?,
        );
    }
    r.expect_end()?;
    let layers: [Layer; 4] = layers.try_into().expect("four layers read");
    AeWeights::new(k_ae, layers).map_err(|e| Error::format("k_ae", e.to_string()))
}

pub fn write_weights_file(weights: &AeWeights, path: impl AsRef<Path>) -> Result<u64> {
    write_weights(weights, BufWriter::new(File::create(path)?))
}

pub fn read_weights_file(path: impl AsRef<Path>) -> Result<AeWeights> {
    read_weights(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::substream;

    fn weights(c: usize, k: usize) -> AeWeights {
        AeWeights::random(c, 6, k, 0.3, &mut substream(1, "ae-test")).unwrap()
    }

    fn zero_weights(c: usize, k: usize) -> AeWeights {
        let z = |kind: LayerKind, o: usize, i: usize| {
            let ks = kind.kernel_size();
            Layer::new(kind, o, i, vec![0.0; o * i * ks * ks], vec![0.0; o]).unwrap()
        };
        AeWeights::new(
            k,
            [
                z(LayerKind::ConvPool, 4, c),
                z(LayerKind::ConvPool, k, 4),
                z(LayerKind::UpConv, 4, k),
                z(LayerKind::UpConv, c, 4),
            ],
        )
        .unwrap()
    }

    fn image(c: usize, h: usize, w: usize, fill: impl Fn(usize) -> f32) -> TensorSample {
        let n = c * h * w;
        TensorSample::new(
            vec![c, h, w],
            TensorData::F32((0..n).map(fill).collect()),
            1,
        )
        .unwrap()
    }

    #[test]
    fn cifar_shaped_latent() {
        let w = weights(3, 8);
        let e = ae_compress(&image(3, 32, 32, |i| (i % 7) as f32 * 0.1), &w).unwrap();
        match e.payload() {
            Payload::Latent { shape, values } => {
                assert_eq!(*shape, [8, 8, 8]);
                assert_eq!(values.len() * 4, 2048);
            }
            _ => unreachable!(),
        }
        let back = ae_decompress(&e, &w).unwrap();
        assert_eq!(back.shape(), &[3, 32, 32]);
        assert!(back.data().to_f32_vec().iter().all(|v| v.is_finite()));
    }

    #[test]
    fn rejects_tiny_feature_maps() {
        let w = weights(256, 8);
        let t = image(256, 2, 2, |_| 1.0);
        assert!(matches!(ae_compress(&t, &w), Err(Error::Shape(_))));
        let t = image(3, 6, 8, |_| 1.0);
        assert!(spatial(t.shape()).is_err());
    }

    #[test]
    fn zero_network_maps_to_zero() {
        let w = zero_weights(3, 2);
        let e = ae_compress(&image(3, 8, 8, |i| i as f32), &w).unwrap();
        match e.payload() {
            Payload::Latent { values, .. } => assert!(values.iter().all(|&v| v == 0.0)),
            _ => unreachable!(),
        }
        let back = ae_decompress(&e, &w).unwrap();
        assert!(back.data().to_f32_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_channel_hand_computed() {
        // Identity-centre conv kernels and unit upconv kernels: the encoder
        // reduces to two 2x2 max-pools, the decoder to nearest-neighbour
        // upsampling.
        let mut centre = vec![0.0; 9];
        centre[4] = 1.0;
        let layers = [
            Layer::new(LayerKind::ConvPool, 1, 1, centre.clone(), vec![0.0]).unwrap(),
            Layer::new(LayerKind::ConvPool, 1, 1, centre, vec![0.0]).unwrap(),
            Layer::new(LayerKind::UpConv, 1, 1, vec![1.0; 4], vec![0.0]).unwrap(),
            Layer::new(LayerKind::UpConv, 1, 1, vec![1.0; 4], vec![0.0]).unwrap(),
        ];
        let w = AeWeights::new(1, layers).unwrap();
        let t = image(1, 4, 4, |i| i as f32);
        let e = ae_compress(&t, &w).unwrap();
        match e.payload() {
            Payload::Latent { values, .. } => assert_eq!(values, &vec![15.0]),
            _ => unreachable!(),
        }
        let back = ae_decompress(&e, &w).unwrap();
        assert_eq!(back.data(), &TensorData::F32(vec![15.0; 16]));
    }

    #[test]
    fn padding_sees_zeros() {
        // Kernel picks the top-left neighbour; on row/col 0 it reads padding.
        let mut k = vec![0.0; 9];
        k[0] = 1.0;
        let l = Layer::new(LayerKind::ConvPool, 1, 1, k, vec![0.0]).unwrap();
        let input: Vec<f32> = (1..=16).map(|v| v as f32).collect();
        let pooled = conv3x3_relu_pool(&l, &input, 4, 4);
        // conv: [[0,0,0,0],[0,1,2,3],[0,5,6,7],[0,9,10,11]]
        assert_eq!(pooled, vec![1.0, 3.0, 9.0, 11.0]);
    }

    #[test]
    fn weights_file_round_trip() {
        let w = weights(3, 5);
        let mut buf = Vec::new();
        let n = write_weights(&w, &mut buf).unwrap();
        assert_eq!(n as usize, buf.len());
        assert_eq!(n, 9 + 4 * 7 + w.parameter_bytes());
        assert_eq!(read_weights(&buf[..]).unwrap(), w);
    }

    #[test]
    fn weights_file_rejects_broken_chain() {
        let w = weights(3, 5);
        let mut buf = Vec::new();
        write_weights(&w, &mut buf).unwrap();
        // k_ae header disagrees with layer 1's output channels.
        buf[6] = 4;
        assert!(read_weights(&buf[..]).is_err());
        buf[6] = 5;
        buf[0] = b'X';
        assert!(matches!(
            read_weights(&buf[..]),
            Err(Error::BadMagic { .. })
        ));
    }

    #[test]
    fn rejects_mismatched_layer_chain() {
        let ok = weights(3, 4);
        let [a, b, c, _] = ok.layers().clone();
        let bad = Layer::new(LayerKind::UpConv, 3, 5, vec![0.0; 60], vec![0.0; 3]).unwrap();
        assert!(AeWeights::new(4, [a, b, c, bad]).is_err());
    }

    #[test]
    fn latent_shape_checks_channels() {
        let w = weights(3, 4);
        assert_eq!(w.latent_shape(&[3, 16, 8]).unwrap(), [4, 4, 2]);
        assert!(w.latent_shape(&[1, 16, 8]).is_err());
    }
}
