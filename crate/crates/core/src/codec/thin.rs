//! Magnitude thinning: keep the largest entries as `(index, value)` pairs.

use crate::error::{Error, Result};
use crate::tensor_io::{TensorData, TensorSample};

use super::{CompressedExemplar, Payload};

pub fn check_ratio(k_thin: f64) -> Result<()> {
    if !(0.0..1.0).contains(&k_thin) {
        return Err(Error::Config(format!(
            "k_thin must be in [0, 1), got {k_thin}"
        )));
    }
    Ok(())
}

/// Entries surviving thinning: `n - floor(k_thin * n)`, at least one.
pub fn keep_count(n: usize, k_thin: f64) -> usize {
    let dropped = (k_thin * n as f64).floor() as usize;
    n.saturating_sub(dropped).max(1).min(n)
}

/// Indices of the `keep` largest-magnitude entries, ascending.
/// Equal magnitudes prefer the lower index.
pub fn select_largest(values: &[f32], keep: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    let by_magnitude =
        |&a: &usize, &b: &usize| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b));
    if keep < order.len() {
        order.select_nth_unstable_by(keep, by_magnitude);
        order.truncate(keep);
    }
    order.sort_unstable();
    order
}

pub fn thin(t: &TensorSample, k_thin: f64) -> Result<CompressedExemplar> {
    check_ratio(k_thin)?;
    let keep = keep_count(t.len(), k_thin);
    let dense = t.data().to_f32_vec();
    let kept = select_largest(&dense, keep);
    let values = match t.data() {
        TensorData::U8(v) => TensorData::U8(kept.iter().map(|&i| v[i]).collect()),
        TensorData::F32(v) => TensorData::F32(kept.iter().map(|&i| v[i]).collect()),
    };
    let indices = kept.into_iter().map(|i| i as u16).collect();
    Ok(CompressedExemplar::new(
        t.label(),
        t.shape().to_vec(),
        t.dtype(),
        Payload::Sparse { indices, values },
    ))
}

pub fn unthin(e: &CompressedExemplar) -> Result<TensorSample> {
    let Payload::Sparse { indices, values } = e.payload() else {
        return Err(Error::Codec(format!(
            "expected a sparse exemplar, got {:?}",
            e.payload().kind()
        )));
    };
    let n = e.element_count();
    if indices.len() != values.len() {
        return Err(Error::Codec(format!(
            "{} indices but {} values",
            indices.len(),
            values.len()
        )));
    }
    if values.dtype() != e.dtype() {
        return Err(Error::Codec(
            "sparse values do not match exemplar dtype".into(),
        ));
    }
    let mut prev: Option<u16> = None;
    for &i in indices {
        if usize::from(i) >= n {
            return Err(Error::Codec(format!(
                "index {i} out of range for {n} elements"
            )));
        }
        if prev.is_some_and(|p| p >= i) {
            return Err(Error::Codec(format!(
                "indices must be strictly increasing, {i} follows {}",
                prev.unwrap()
            )));
        }
        prev = Some(i);
    }
    let mut dense = TensorData::zeros(e.dtype(), n);
    match (&mut dense, values) {
        (TensorData::U8(d), TensorData::U8(v)) => {
            for (&i, &x) in indices.iter().zip(v) {
                d[usize::from(i)] = x;
            }
        }
        (TensorData::F32(d), TensorData::F32(v)) => {
            for (&i, &x) in indices.iter().zip(v) {
                d[usize::from(i)] = x;
            }
        }
        _ => unreachable!("dtype checked above"),
    }
    TensorSample::new(e.shape().to_vec(), dense, e.label())
}
