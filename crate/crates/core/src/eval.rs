//! Depth-prediction metrics and per-depth error analysis.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::CompensatedSum;
use crate::raster::{is_valid_depth, DepthMap, Mask};

/// Predictions are clamped to this floor (meters) before taking logs.
pub const PRED_FLOOR_M: f64 = 1e-3;

/// Ratio threshold base for the δ accuracies.
pub const DELTA_BASE: f64 = 1.25;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub rel: f64,
    pub log10: f64,
    pub rms: f64,
    pub rmslog: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
}

/// Conventions recorded alongside every report.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MetricConventions {
    pub delta_strict: bool,
    pub pred_floor_m: f64,
    pub rmslog_base: &'static str,
}

pub const CONVENTIONS: MetricConventions = MetricConventions {
    delta_strict: true,
    pred_floor_m: PRED_FLOOR_M,
    rmslog_base: "e",
};

impl MetricsReport {
    pub const CSV_HEADER: &'static str = "rel,log10,rms,rmslog,d1,d2,d3";

    /// One CSV data row in the header's column order.
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{}",
            self.rel, self.log10, self.rms, self.rmslog, self.delta1, self.delta2, self.delta3
        )
    }

    pub fn to_csv(&self) -> String {
        format!("{}\n{}\n", Self::CSV_HEADER, self.csv_row())
    }
}

fn check_shapes(pred: &DepthMap, gt: &DepthMap, valid: Option<&Mask>) -> Result<()> {
    if pred.dims() != gt.dims() || valid.is_some_and(|v| v.dims() != gt.dims()) {
        return Err(Error::InvalidArgument(
            "prediction, ground truth and mask must share dimensions".into(),
        ));
    }
    Ok(())
}

/// Pixels that enter the metrics: user mask ∧ valid ground truth ∧ finite
/// prediction.
fn selected<'a>(pred: &'a DepthMap, gt: &'a DepthMap, valid: Option<&'a Mask>) -> impl Iterator<Item = (f64, f64)> + 'a {
    let mask = valid.map(|m| m.data().to_vec());
    pred.data()
        .iter()
        .zip(gt.data())
        .enumerate()
        .filter(move |(i, (p, g))| mask.as_ref().is_none_or(|m| m[*i]) && is_valid_depth(**g) && p.is_finite())
        .map(|(_, (p, g))| (p.max(PRED_FLOOR_M), *g))
}

#[derive(Default)]
struct Accumulator {
    n: usize,
    rel: CompensatedSum,
    log10: CompensatedSum,
    sq: CompensatedSum,
    sqlog: CompensatedSum,
    d: [usize; 3],
}

impl Accumulator {
    fn push(&mut self, p: f64, g: f64) {
        self.n += 1;
        self.rel.add((p - g).abs() / g);
        self.log10.add((p.log10() - g.log10()).abs());
        self.sq.add((p - g) * (p - g));
        let dl = p.ln() - g.ln();
        self.sqlog.add(dl * dl);
        // max(p/g, g/p) < t, without dividing
        let mut threshold = DELTA_BASE;
        for d in self.d.iter_mut() {
            if p < threshold * g && g < threshold * p {
                *d += 1;
            }
            threshold *= DELTA_BASE;
        }
    }

    fn report(&self) -> MetricsReport {
        let n = self.n as f64;
        MetricsReport {
            rel: self.rel.value() / n,
            log10: self.log10.value() / n,
            rms: (self.sq.value() / n).sqrt(),
            rmslog: (self.sqlog.value() / n).sqrt(),
            delta1: self.d[0] as f64 / n,
            delta2: self.d[1] as f64 / n,
            delta3: self.d[2] as f64 / n,
            n_pixels: self.n,
        }
    }
}

/// Standard monocular-depth metrics over the valid pixels.
///
/// `valid` further restricts the evaluated set; invalid ground truth and
/// non-finite predictions are always excluded.
pub fn metrics(pred: &DepthMap, gt: &DepthMap, valid: Option<&Mask>) -> Result<MetricsReport> {
    check_shapes(pred, gt, valid)?;
    metrics_over(std::iter::once((pred, gt, valid)))
}

/// Metrics pooled over the pixels of several prediction/ground-truth pairs.
pub fn metrics_over<'a>(
    pairs: impl IntoIterator<Item = (&'a DepthMap, &'a DepthMap, Option<&'a Mask>)>,
) -> Result<MetricsReport> {
    let mut acc = Accumulator::default();
    for (pred, gt, valid) in pairs {
        check_shapes(pred, gt, valid)?;
        for (p, g) in selected(pred, gt, valid) {
            acc.push(p, g);
        }
    }
    if acc.n == 0 {
        return Err(Error::Evaluation("no valid pixels to evaluate".into()));
    }
    Ok(acc.report())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthBin {
    pub lo: f64,
    pub hi: f64,
    pub pixel_count: usize,
    /// `None` when the bin is empty or only counts were requested.
    pub rms: Option<f64>,
}

/// Statistics binned by ground-truth depth. Bins are half-open `[lo, hi)`
/// except the last, which is closed. Valid pixels outside all bins are
/// counted in `out_of_range`, so `Σ pixel_count + out_of_range` equals the
/// number of valid pixels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DepthBinStats {
    pub bin_edges: Vec<f64>,
    pub bins: Vec<DepthBin>,
    pub out_of_range: usize,
}

impl DepthBinStats {
    pub fn total(&self) -> usize {
        self.bins.iter().map(|b| b.pixel_count).sum::<usize>() + self.out_of_range
    }
}

/// `n` equal-width bins over `[lo, hi]`.
pub fn uniform_edges(lo: f64, hi: f64, n: usize) -> Result<Vec<f64>> {
    if !(lo < hi) || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "bin range must satisfy lo < hi with n >= 1, got {lo}:{hi}:{n}"
        )));
    }
    Ok((0..=n)
        .map(|i| if i == n { hi } else { lo + (hi - lo) * i as f64 / n as f64 })
        .collect())
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument(
            "bin edges need at least two strictly increasing values".into(),
        ));
    }
    Ok(())
}

fn bin_index(edges: &[f64], g: f64) -> Option<usize> {
    let last = edges.len() - 1;
    if g < edges[0] || g > edges[last] {
        return None;
    }
    if g == edges[last] {
        return Some(last - 1);
    }
    // first edge strictly greater than g, minus one
    Some(edges.partition_point(|e| *e <= g) - 1)
}

/// Per-bin RMS of `pred − gt`, binned by ground-truth depth.
pub fn per_depth_rms(pred: &DepthMap, gt: &DepthMap, valid: Option<&Mask>, edges: &[f64]) -> Result<DepthBinStats> {
    check_shapes(pred, gt, valid)?;
    per_depth_rms_over(std::iter::once((pred, gt, valid)), edges)
}

pub fn per_depth_rms_over<'a>(
    pairs: impl IntoIterator<Item = (&'a DepthMap, &'a DepthMap, Option<&'a Mask>)>,
    edges: &[f64],
) -> Result<DepthBinStats> {
    check_edges(edges)?;
    let nb = edges.len() - 1;
    let mut counts = vec![0usize; nb];
    let mut sums = vec![CompensatedSum::new(); nb];
    let mut out_of_range = 0;
    for (pred, gt, valid) in pairs {
        check_shapes(pred, gt, valid)?;
        for (p, g) in selected(pred, gt, valid) {
            match bin_index(edges, g) {
                Some(b) => {
                    counts[b] += 1;
                    sums[b].add((p - g) * (p - g));
                }
                None => out_of_range += 1,
            }
        }
    }
    let bins = (0..nb)
        .map(|b| DepthBin {
            lo: edges[b],
            hi: edges[b + 1],
            pixel_count: counts[b],
            rms: (counts[b] > 0).then(|| (sums[b].value() / counts[b] as f64).sqrt()),
        })
        .collect();
    Ok(DepthBinStats {
        bin_edges: edges.to_vec(),
        bins,
        out_of_range,
    })
}

/// Ground-truth pixel counts per depth bin.
pub fn depth_histogram(gt: &DepthMap, valid: Option<&Mask>, edges: &[f64]) -> Result<DepthBinStats> {
    depth_histogram_over(std::iter::once((gt, valid)), edges)
}

pub fn depth_histogram_over<'a>(
    maps: impl IntoIterator<Item = (&'a DepthMap, Option<&'a Mask>)>,
    edges: &[f64],
) -> Result<DepthBinStats> {
    check_edges(edges)?;
    let nb = edges.len() - 1;
    let mut counts = vec![0usize; nb];
    let mut out_of_range = 0;
    for (gt, valid) in maps {
        if valid.is_some_and(|v| v.dims() != gt.dims()) {
            return Err(Error::InvalidArgument("mask and depth sizes differ".into()));
        }
        for (i, g) in gt.data().iter().enumerate() {
            if !is_valid_depth(*g) || valid.is_some_and(|v| !v.data()[i]) {
                continue;
            }
            match bin_index(edges, *g) {
                Some(b) => counts[b] += 1,
                None => out_of_range += 1,
            }
        }
    }
    let bins = (0..nb)
        .map(|b| DepthBin {
            lo: edges[b],
            hi: edges[b + 1],
            pixel_count: counts[b],
            rms: None,
        })
        .collect();
    Ok(DepthBinStats {
        bin_edges: edges.to_vec(),
        bins,
        out_of_range,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map(v: &[f64]) -> DepthMap {
        DepthMap::from_vec(v.len(), 1, v.to_vec()).unwrap()
    }

    #[test]
    fn identity_is_perfect() {
        let gt = map(&[1.0, 2.5, 4.0, 9.0]);
        let r = metrics(&gt, &gt, None).unwrap();
        assert_eq!((r.rel, r.log10, r.rms, r.rmslog), (0.0, 0.0, 0.0, 0.0));
        assert_eq!((r.delta1, r.delta2, r.delta3), (1.0, 1.0, 1.0));
        assert_eq!(r.n_pixels, 4);
    }

    #[test]
    fn ratio_boundary_is_strict() {
        // powers of two keep 1.25·g exact
        let gt = map(&[0.5, 1.0, 2.0, 4.0]);
        let pred = gt.map(|g| 1.25 * g);
        let r = metrics(&pred, &gt, None).unwrap();
        assert_eq!(r.delta1, 0.0);
        assert_eq!(r.delta2, 1.0);
        assert_eq!(r.delta3, 1.0);
        assert_eq!(r.rel, 0.25);
    }

    #[test]
    fn invalid_pixels_excluded() {
        let gt = map(&[0.0, 2.0, f64::NAN, 3.0]);
        let pred = map(&[5.0, 2.0, 1.0, f64::INFINITY]);
        let r = metrics(&pred, &gt, None).unwrap();
        assert_eq!(r.n_pixels, 1);
        let empty = map(&[0.0, 0.0]);
        assert!(matches!(metrics(&empty, &empty, None), Err(Error::Evaluation(_))));
    }

    #[test]
    fn prediction_floor_applies() {
        let gt = map(&[1.0]);
        let pred = map(&[-2.0]);
        let r = metrics(&pred, &gt, None).unwrap();
        assert!((r.log10 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn bins_cover_edges() {
        let edges = uniform_edges(0.0, 10.0, 20).unwrap();
        assert_eq!(edges.len(), 21);
        assert_eq!(bin_index(&edges, 0.0), Some(0));
        assert_eq!(bin_index(&edges, 10.0), Some(19));
        assert_eq!(bin_index(&edges, 0.5), Some(1));
        assert_eq!(bin_index(&edges, 10.5), None);
        assert!(uniform_edges(1.0, 1.0, 3).is_err());
        assert!(per_depth_rms(&map(&[1.0]), &map(&[1.0]), None, &[1.0, 1.0]).is_err());
    }

    #[test]
    fn constant_gt_fills_one_bin() {
        let gt = DepthMap::filled(5, 5, 3.3);
        let h = depth_histogram(&gt, None, &uniform_edges(0.0, 10.0, 10).unwrap()).unwrap();
        let nonzero: Vec<_> = h.bins.iter().filter(|b| b.pixel_count > 0).collect();
        assert_eq!(nonzero.len(), 1);
        assert_eq!(nonzero[0].pixel_count, 25);
    }

    #[test]
    fn empty_bin_has_no_rms() {
        let gt = map(&[1.0, 1.5]);
        let s = per_depth_rms(&gt, &gt, None, &[0.0, 2.0, 4.0]).unwrap();
        assert_eq!(s.bins[0].rms, Some(0.0));
        assert_eq!(s.bins[1].rms, None);
        assert_eq!(s.total(), 2);
    }

    #[test]
    fn csv_layout() {
        let gt = map(&[1.0]);
        let r = metrics(&gt, &gt, None).unwrap();
        assert_eq!(r.to_csv(), "rel,log10,rms,rmslog,d1,d2,d3\n0,0,0,0,1,1,1\n");
    }
}
