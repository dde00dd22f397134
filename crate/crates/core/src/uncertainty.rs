//! Mean and epistemic variance of repeated stochastic depth predictions.

use crate::error::{Error, Result};
use crate::raster::{is_valid_depth, DepthMap, Image, Mask};

/// Aggregated stack: per-pixel mean and population variance (divide by K).
#[derive(Clone, Debug, PartialEq)]
pub struct Aggregate {
    pub mean: DepthMap,
    pub variance: DepthMap,
    pub samples: usize,
}

/// Single-pass (Welford) per-pixel mean and population variance.
pub fn aggregate(stack: &[DepthMap]) -> Result<Aggregate> {
    let first = stack
        .first()
        .ok_or_else(|| Error::InvalidArgument("sample stack is empty".into()))?;
    let (w, h) = first.dims();
    if let Some(bad) = stack.iter().position(|m| m.dims() != (w, h)) {
        return Err(Error::InvalidArgument(format!(
            "sample {bad} is {}x{}, expected {w}x{h}",
            stack[bad].width(),
            stack[bad].height()
        )));
    }
    if stack.iter().any(|m| m.data().iter().any(|v| !v.is_finite())) {
        return Err(Error::InvalidArgument("samples must be finite".into()));
    }
    let n = w * h;
    let mut mean = vec![0.0; n];
    let mut m2 = vec![0.0; n];
    for (k, sample) in stack.iter().enumerate() {
        let count = (k + 1) as f64;
        for ((mu, s), &x) in mean.iter_mut().zip(m2.iter_mut()).zip(sample.data()) {
            let delta = x - *mu;
            *mu += delta / count;
            *s += delta * (x - *mu);
        }
    }
    let k = stack.len() as f64;
    let variance = m2.into_iter().map(|s| (s / k).max(0.0)).collect();
    Ok(Aggregate {
        mean: DepthMap::from_vec(w, h, mean)?,
        variance: DepthMap::from_vec(w, h, variance)?,
        samples: stack.len(),
    })
}

/// `|mean − gt|` on pixels that are valid in `gt` (and in `valid`, if given);
/// zero elsewhere.
pub fn mean_error(mean: &DepthMap, gt: &DepthMap, valid: Option<&Mask>) -> Result<Image> {
    if mean.dims() != gt.dims() || valid.is_some_and(|v| v.dims() != gt.dims()) {
        return Err(Error::InvalidArgument(
            "mean, ground truth and mask must share dimensions".into(),
        ));
    }
    let (w, h) = gt.dims();
    let data = mean
        .data()
        .iter()
        .zip(gt.data())
        .enumerate()
        .map(|(i, (m, g))| {
            let ok = is_valid_depth(*g) && valid.is_none_or(|v| v.data()[i]);
            if ok {
                (m - g).abs()
            } else {
                0.0
            }
        })
        .collect();
    Image::from_vec(w, h, 1, data)
}
