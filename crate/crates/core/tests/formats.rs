//! Binary formats checked against byte strings assembled by hand.

use compreplay::codec::autoencoder::{
    ae_compress, read_weights, write_weights, AeWeights, LayerKind,
};
use compreplay::codec::quantize::{read_stats, write_stats};
use compreplay::codec::{Payload, RangeStats};
use compreplay::tensor_io::{encoded_len, read_dataset, write_dataset};
use compreplay::{DType, Dataset, Error, TensorData, TensorSample};

fn le16(v: u16) -> [u8; 2] {
    v.to_le_bytes()
}

fn le32(v: u32) -> [u8; 4] {
    v.to_le_bytes()
}

fn f32s(vs: &[f32]) -> Vec<u8> {
    vs.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn fsta(lo: f32, hi: f32) -> Vec<u8> {
    let mut b = b"FSTA".to_vec();
    b.extend(le16(1));
    b.extend(lo.to_le_bytes());
    b.extend(hi.to_le_bytes());
    b
}

#[test]
fn fsta_fixture() {
    let bytes = fsta(-2.5, 7.0);
    assert_eq!(bytes.len(), 14);
    let s = read_stats(&bytes[..]).unwrap();
    assert_eq!(s, RangeStats { lo: -2.5, hi: 7.0 });
    let mut out = Vec::new();
    write_stats(s, &mut out).unwrap();
    assert_eq!(out, bytes);
}

#[test]
fn fsta_rejects_damage() {
    let good = fsta(0.0, 1.0);
    let mut magic = good.clone();
    magic[0] = b'X';
    assert!(matches!(
        read_stats(&magic[..]),
        Err(Error::BadMagic { .. })
    ));
    let mut version = good.clone();
    version[4] = 2;
    assert!(matches!(
        read_stats(&version[..]),
        Err(Error::UnsupportedVersion { .. })
    ));
    assert!(matches!(
        read_stats(&good[..10]),
        Err(Error::Truncated { .. })
    ));
    let mut long = good.clone();
    long.push(0);
    assert!(read_stats(&long[..]).is_err());
    assert!(read_stats(&fsta(f32::NAN, 1.0)[..]).is_err());
    assert!(read_stats(&fsta(2.0, 1.0)[..]).is_err());
}

fn ftch_u8() -> Vec<u8> {
    // Two 1x2x2 U8 samples with labels 4 and 1.
    let mut b = b"FTCH".to_vec();
    b.extend(le16(1));
    b.push(0);
    b.push(3);
    for d in [1, 2, 2] {
        b.extend(le32(d));
    }
    b.extend(2u64.to_le_bytes());
    b.extend(le32(4));
    b.extend(le32(1));
    b.extend([0, 1, 2, 255, 9, 8, 7, 6]);
    b
}

#[test]
fn ftch_fixture() {
    let bytes = ftch_u8();
    assert_eq!(bytes.len() as u64, encoded_len(&[1, 2, 2], DType::U8, 2));
    let d = read_dataset(&bytes[..]).unwrap();
    assert_eq!(d.shape(), &[1, 2, 2]);
    assert_eq!(d.dtype(), DType::U8);
    assert_eq!(d.len(), 2);
    assert_eq!(d.samples()[0].label(), 4);
    assert_eq!(d.samples()[0].data(), &TensorData::U8(vec![0, 1, 2, 255]));
    assert_eq!(d.samples()[1].data(), &TensorData::U8(vec![9, 8, 7, 6]));
    let mut out = Vec::new();
    write_dataset(&d, &mut out).unwrap();
    assert_eq!(out, bytes);
}

#[test]
fn ftch_f32_values_round_trip_bit_exactly() {
    let vals = [0.1f32, -0.0, f32::MIN_POSITIVE, 3.4e38];
    let s = TensorSample::new(vec![4], TensorData::F32(vals.to_vec()), 0).unwrap();
    let d = Dataset::from_samples(vec![4], DType::F32, vec![s]).unwrap();
    let mut out = Vec::new();
    write_dataset(&d, &mut out).unwrap();
    assert_eq!(&out[out.len() - 16..], &f32s(&vals)[..]);
    let back = read_dataset(&out[..]).unwrap();
    let got = back.samples()[0].data().to_f32_vec();
    assert!(got
        .iter()
        .zip(vals)
        .all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn ftch_rejects_damage() {
    let good = ftch_u8();
    for cut in [3, 7, 12, 24, 30, good.len() - 1] {
        assert!(read_dataset(&good[..cut]).is_err(), "cut at {cut}");
    }
    let mut dtype = good.clone();
    dtype[6] = 7;
    assert!(read_dataset(&dtype[..]).is_err());
    let mut nan = b"FTCH".to_vec();
    nan.extend(le16(1));
    nan.extend([1, 1]);
    nan.extend(le32(1));
    nan.extend(1u64.to_le_bytes());
    nan.extend(le32(0));
    nan.extend(f32s(&[f32::INFINITY]));
    assert!(read_dataset(&nan[..]).is_err());
}

fn layer_bytes(out: u16, inp: u16, k: u8, kind: u8, kernel: &[f32], bias: &[f32]) -> Vec<u8> {
    let mut b = Vec::new();
    b.extend(le16(out));
    b.extend(le16(inp));
    b.extend([k, k, kind]);
    b.extend(f32s(kernel));
    b.extend(f32s(bias));
    b
}

/// One channel in, one hidden channel, bottleneck 1. The first conv keeps
/// only the centre tap so the encoder reduces to ReLU and two max-pools.
fn faew_identityish() -> Vec<u8> {
    let mut centre = [0.0f32; 9];
    centre[4] = 1.0;
    let mut b = b"FAEW".to_vec();
    b.extend(le16(1));
    b.extend(le16(1));
    b.push(4);
    b.extend(layer_bytes(1, 1, 3, 0, &centre, &[0.0]));
    b.extend(layer_bytes(1, 1, 3, 0, &centre, &[0.5]));
    b.extend(layer_bytes(1, 1, 2, 1, &[1.0; 4], &[0.0]));
    b.extend(layer_bytes(1, 1, 2, 1, &[1.0; 4], &[0.0]));
    b
}

#[test]
fn faew_fixture_forward_pass() {
    let bytes = faew_identityish();
    let w = read_weights(&bytes[..]).unwrap();
    assert_eq!(w.bottleneck(), 1);
    assert_eq!(w.layers()[0].kind, LayerKind::ConvPool);
    assert_eq!(w.layers()[3].kind, LayerKind::UpConv);
    assert_eq!(w.parameter_bytes(), 4 * (10 + 10 + 5 + 5));
    let mut out = Vec::new();
    write_weights(&w, &mut out).unwrap();
    assert_eq!(out, bytes);

    // Max over each 4x4 block, plus the second layer's bias.
    let input: Vec<f32> = (0..64).map(|i| ((i * 37) % 64) as f32 - 20.0).collect();
    let t = TensorSample::new(vec![1, 8, 8], TensorData::F32(input.clone()), 3).unwrap();
    let e = ae_compress(&t, &w).unwrap();
    let Payload::Latent { shape, values } = e.payload() else {
        panic!("expected a latent payload")
    };
    assert_eq!(shape, &[1, 2, 2]);
    let mut expect = Vec::new();
    for by in 0..2 {
        for bx in 0..2 {
            let m = (0..4)
                .flat_map(|y| (0..4).map(move |x| (by * 4 + y) * 8 + bx * 4 + x))
                .map(|i| input[i].max(0.0))
                .fold(0.0f32, f32::max);
            expect.push(m + 0.5);
        }
    }
    assert_eq!(values, &expect);
}

#[test]
fn faew_rejects_damage() {
    let good = faew_identityish();
    assert!(read_weights(&good[..good.len() - 2]).is_err());
    let mut count = good.clone();
    count[8] = 3;
    assert!(read_weights(&count[..]).is_err());
    let mut kind = good.clone();
    kind[9 + 6] = 1;
    assert!(read_weights(&kind[..]).is_err());
    let mut bottleneck = good.clone();
    bottleneck[6] = 2;
    assert!(read_weights(&bottleneck[..]).is_err());
    let mut long = good;
    long.push(0);
    assert!(read_weights(&long[..]).is_err());
}

#[test]
fn random_weights_round_trip() {
    let mut rng = compreplay::rng::substream(3, "fixture");
    let w = AeWeights::random(3, 5, 2, 0.5, &mut rng).unwrap();
    let mut out = Vec::new();
    let n = write_weights(&w, &mut out).unwrap();
    assert_eq!(n as usize, out.len());
    assert_eq!(read_weights(&out[..]).unwrap(), w);
}
