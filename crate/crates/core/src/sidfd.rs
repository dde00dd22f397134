//! Single-image depth from defocus with an edge re-blur model.
//!
//! At a step edge blurred by a Gaussian of std `σ`, re-blurring with a known
//! `σ₀` scales the gradient magnitude by `R⁻¹ = σ/√(σ² + σ₀²)`, so
//! `σ = σ₀/√(R² − 1)`. Sparse estimates on detected edges are spread over the
//! frame by guided diffusion, converted to disk diameters and inverted
//! through the thin-lens model.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inpaint::{self, Conductance, DiffusionParams};
use crate::numeric;
use crate::optics::CameraConfig;
use crate::psf::{self, Kernel};
use crate::raster::{DepthMap, Image, Mask};

/// Smoothing applied before gradient computation in [`detect_edges`].
const CANNY_SIGMA: f64 = 1.0;

/// Minimum gradient ratio accepted as a measurable blur.
const MIN_RATIO: f64 = 1.0 + 1e-6;

/// Disk constant `c` fitted by [`calibrate_disk_constant`] with `σ₀ = 1` on a
/// 6 px disk-blurred step. Frozen here so estimation is reproducible; the
/// `calibration_reproduces_frozen_constant` test keeps it in sync.
pub const CALIBRATED_DISK_CONSTANT: f64 = 1.179031143221568;

/// Guide-intensity scale of the diffusion conductance `exp(−|ΔI|/scale)`.
pub const GUIDE_EDGE_SCALE: f64 = 0.1;

/// Canny-style edge map: Gaussian (σ = 1) smoothing, Sobel gradients,
/// non-maximum suppression and hysteresis between `low` and `high`.
///
/// Gradient magnitudes are in intensity units per pixel (Sobel / 8), computed
/// on Rec. 601 luma.
pub fn detect_edges(img: &Image, low: f64, high: f64) -> Result<Mask> {
    if !(0.0 <= low && low < high) {
        return Err(Error::InvalidArgument(format!(
            "edge thresholds must satisfy 0 <= low < high, got {low}, {high}"
        )));
    }
    let gray = img.to_gray();
    let (w, h) = gray.dims();
    let smooth = psf::convolve(&gray, &psf::gaussian_kernel(CANNY_SIGMA)?)?;
    let s = smooth.data();
    let at = |x: isize, y: isize| {
        let x = x.clamp(0, w as isize - 1) as usize;
        let y = y.clamp(0, h as isize - 1) as usize;
        s[y * w + x]
    };
    let mut gx = vec![0.0; w * h];
    let mut gy = vec![0.0; w * h];
    let mut mag = vec![0.0; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let dx = (at(x + 1, y - 1) + 2.0 * at(x + 1, y) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x - 1, y) + at(x - 1, y + 1));
            let dy = (at(x - 1, y + 1) + 2.0 * at(x, y + 1) + at(x + 1, y + 1))
                - (at(x - 1, y - 1) + 2.0 * at(x, y - 1) + at(x + 1, y - 1));
            let i = y as usize * w + x as usize;
            gx[i] = dx / 8.0;
            gy[i] = dy / 8.0;
            mag[i] = gx[i].hypot(gy[i]);
        }
    }

    // non-maximum suppression along the quantized gradient direction; ties
    // are broken toward the negative neighbor so plateaus stay one pixel wide
    let m = |x: isize, y: isize| {
        if x < 0 || y < 0 || x >= w as isize || y >= h as isize {
            0.0
        } else {
            mag[y as usize * w + x as usize]
        }
    };
    let mut candidate = vec![false; w * h];
    for y in 0..h as isize {
        for x in 0..w as isize {
            let i = y as usize * w + x as usize;
            let v = mag[i];
            if v < low || v == 0.0 {
                continue;
            }
            let angle = gy[i].atan2(gx[i]).to_degrees().rem_euclid(180.0);
            let (ox, oy) = if !(22.5..157.5).contains(&angle) {
                (1, 0)
            } else if angle < 67.5 {
                (1, 1)
            } else if angle < 112.5 {
                (0, 1)
            } else {
                (-1, 1)
            };
            if v > m(x - ox, y - oy) && v >= m(x + ox, y + oy) {
                candidate[i] = true;
            }
        }
    }

    // hysteresis: grow 8-connected from strong pixels through candidates
    let mut edges = vec![false; w * h];
    let mut stack: Vec<usize> = (0..w * h)
        .filter(|&i| candidate[i] && mag[i] >= high)
        .collect();
    for &i in &stack {
        edges[i] = true;
    }
    while let Some(i) = stack.pop() {
        let (x, y) = ((i % w) as isize, (i / w) as isize);
        for dy in -1..=1 {
            for dx in -1..=1 {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if candidate[j] && !edges[j] {
                    edges[j] = true;
                    stack.push(j);
                }
            }
        }
    }
    Mask::from_vec(w, h, edges)
}

/// Gaussian-equivalent blur `σ` (pixels) on accepted edge pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseBlurMap {
    width: usize,
    height: usize,
    sigma: Vec<Option<f64>>,
}

impl SparseBlurMap {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            sigma: vec![None; width * height],
        }
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn get(&self, x: usize, y: usize) -> Option<f64> {
        self.sigma[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, sigma: Option<f64>) {
        self.sigma[y * self.width + x] = sigma;
    }

    pub fn len(&self) -> usize {
        self.sigma.iter().filter(|s| s.is_some()).count()
    }

    pub fn is_empty(&self) -> bool {
        self.sigma.iter().all(|s| s.is_none())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.sigma.iter().flatten().copied()
    }

    pub fn as_slice(&self) -> &[Option<f64>] {
        &self.sigma
    }
}

/// Residual blur that a perfectly sharp, pixel-aligned step reports under
/// re-blur with `kernel`. The raw ratio estimate cannot go below it.
fn sampling_floor_sq(kernel: &Kernel, sigma0: f64) -> f64 {
    let h = kernel.half() as isize;
    // marginal of the 2D kernel at zero horizontal offset
    let center: f64 = (-h..=h).map(|dy| kernel.at(0, dy)).sum();
    let ratio = 1.0 / center;
    sigma0 * sigma0 / (ratio * ratio - 1.0)
}

/// One-sided difference along an axis, choosing the side with the larger
/// response in `img` and applying the same stencil to `reblurred`.
#[inline]
fn paired_difference(img: &[f64], reblurred: &[f64], i: usize, prev: Option<usize>, next: Option<usize>) -> (f64, f64) {
    let fwd = next.map(|j| (img[j] - img[i], reblurred[j] - reblurred[i]));
    let bwd = prev.map(|j| (img[i] - img[j], reblurred[i] - reblurred[j]));
    match (fwd, bwd) {
        (Some(f), Some(b)) => {
            if f.0.abs() >= b.0.abs() {
                f
            } else {
                b
            }
        }
        (Some(f), None) => f,
        (None, Some(b)) => b,
        (None, None) => (0.0, 0.0),
    }
}

/// Re-blur gradient-ratio blur estimate at every edge pixel.
///
/// The ratio uses one-sided differences straddling the edge, which are exact
/// for Gaussian-blurred pixel-aligned steps. The blur a perfectly sharp
/// sampled step would report under the same stencil is removed in
/// quadrature, so in-focus edges map to `σ ≈ 0`.
pub fn edge_blur_estimate(img: &Image, edges: &Mask, sigma0: f64) -> Result<SparseBlurMap> {
    if !(sigma0.is_finite() && sigma0 > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "re-blur sigma must be positive, got {sigma0}"
        )));
    }
    if edges.dims() != img.dims() {
        return Err(Error::InvalidArgument("edge map and image sizes differ".into()));
    }
    let gray = img.to_gray();
    let (w, h) = gray.dims();
    let kernel = psf::gaussian_kernel(sigma0)?;
    let reblurred = psf::convolve(&gray, &kernel)?;
    let floor_sq = sampling_floor_sq(&kernel, sigma0);
    let (g, b) = (gray.data(), reblurred.data());

    let mut out = SparseBlurMap::new(w, h);
    for y in 0..h {
        for x in 0..w {
            if !edges.get(x, y) {
                continue;
            }
            let i = y * w + x;
            let (ix, bx) = paired_difference(g, b, i, (x > 0).then(|| i - 1), (x + 1 < w).then(|| i + 1));
            let (iy, by) = paired_difference(g, b, i, (y > 0).then(|| i - w), (y + 1 < h).then(|| i + w));
            let grad = ix.hypot(iy);
            let grad_reblurred = bx.hypot(by);
            if grad_reblurred <= 0.0 {
                continue;
            }
            let ratio = grad / grad_reblurred;
            if !(ratio > MIN_RATIO) || !ratio.is_finite() {
                continue;
            }
            let raw_sq = sigma0 * sigma0 / (ratio * ratio - 1.0);
            let sigma = (raw_sq - floor_sq).max(0.0).sqrt();
            if sigma.is_finite() {
                out.sigma[i] = Some(sigma);
            }
        }
    }
    Ok(out)
}

/// Gaussian-equivalent `σ` to disk diameter: `ε = 2·c·σ`.
pub fn sigma_to_disk(sigma: f64, disk_constant: f64) -> f64 {
    2.0 * disk_constant * sigma
}

/// Dense per-pixel blur diameter in pixels.
#[derive(Clone, Debug, PartialEq)]
pub struct DefocusMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl DefocusMap {
    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height || data.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::InvalidArgument(
                "defocus map must be finite, non-negative and match its size".into(),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    pub fn to_image(&self) -> Image {
        Image::from_vec(self.width, self.height, 1, self.data.clone()).expect("consistent size")
    }
}

/// Edge-aware densification of sparse blur estimates.
///
/// Unlabeled pixels relax toward the mean of their 4-neighbors weighted by
/// `exp(−|ΔI_guide| / 0.1)`; labeled pixels stay fixed. Stops when the largest
/// update drops below 1e-4 or after `iterations` sweeps.
pub fn densify(sparse: &SparseBlurMap, guide: &Image, iterations: usize, disk_constant: f64) -> Result<DefocusMap> {
    if sparse.is_empty() {
        return Err(Error::Estimation("no accepted blur samples to densify".into()));
    }
    if sparse.dims() != guide.dims() {
        return Err(Error::InvalidArgument("sparse map and guide sizes differ".into()));
    }
    let (w, h) = sparse.dims();
    let gray = guide.to_gray();
    let known: Vec<bool> = sparse.sigma.iter().map(|s| s.is_some()).collect();
    let mut values: Vec<f64> = sparse.sigma.iter().map(|s| s.unwrap_or(0.0)).collect();
    let domain = vec![true; w * h];
    inpaint::diffuse_fill(
        w,
        h,
        1,
        &mut values,
        &known,
        &domain,
        Conductance::Guided {
            guide: gray.data(),
            scale: GUIDE_EDGE_SCALE,
        },
        DiffusionParams {
            max_iterations: iterations,
            tolerance: 1e-4,
        },
    );
    let data = values.into_iter().map(|s| sigma_to_disk(s, disk_constant)).collect();
    DefocusMap::from_vec(w, h, data)
}

/// Which side of the focal plane to assume when inverting blur.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchPolicy {
    #[default]
    Near,
    Far,
}

impl std::str::FromStr for BranchPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "near" => Ok(BranchPolicy::Near),
            "far" => Ok(BranchPolicy::Far),
            other => Err(Error::InvalidArgument(format!(
                "branch policy must be near or far, got {other}"
            ))),
        }
    }
}

/// Per-pixel thin-lens inversion on the chosen branch. Far solutions beyond
/// `d_max` (including unbounded ones) are clamped to `d_max`.
pub fn blur_to_depth(defocus: &DefocusMap, config: &CameraConfig, policy: BranchPolicy, d_max: f64) -> Result<DepthMap> {
    let (w, h) = defocus.dims();
    let data = defocus
        .data()
        .iter()
        .map(|&eps| {
            let sol = config.invert_blur_px(eps)?;
            Ok(match policy {
                BranchPolicy::Near => sol.near,
                BranchPolicy::Far => sol.far.clamp_to(d_max),
            })
        })
        .collect::<Result<Vec<f64>>>()?;
    DepthMap::from_vec(w, h, data)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SidfdParams {
    pub sigma0: f64,
    pub canny_low: f64,
    pub canny_high: f64,
    pub iterations: usize,
    pub policy: BranchPolicy,
    pub disk_constant: f64,
    pub d_max: f64,
}

impl Default for SidfdParams {
    fn default() -> Self {
        Self {
            sigma0: 1.0,
            canny_low: 0.01,
            canny_high: 0.03,
            iterations: 2000,
            policy: BranchPolicy::Near,
            disk_constant: CALIBRATED_DISK_CONSTANT,
            d_max: 10.0,
        }
    }
}

/// Intermediate products of [`estimate_depth`].
#[derive(Clone, Debug)]
pub struct Estimate {
    pub edges: Mask,
    pub sparse: SparseBlurMap,
    pub defocus: DefocusMap,
    pub depth: DepthMap,
}

/// Edges → sparse blur → dense defocus → depth.
pub fn estimate_depth(img: &Image, config: &CameraConfig, params: &SidfdParams) -> Result<DepthMap> {
    Ok(estimate_depth_detailed(img, config, params)?.depth)
}

pub fn estimate_depth_detailed(img: &Image, config: &CameraConfig, params: &SidfdParams) -> Result<Estimate> {
    let edges = detect_edges(img, params.canny_low, params.canny_high)?;
    if edges.is_empty() {
        return Err(Error::Estimation(format!(
            "no edges found above thresholds low={} high={}",
            params.canny_low, params.canny_high
        )));
    }
    let sparse = edge_blur_estimate(img, &edges, params.sigma0)?;
    if sparse.is_empty() {
        return Err(Error::Estimation(format!(
            "{} edge pixels found but none had a measurable re-blur ratio",
            edges.count()
        )));
    }
    let defocus = densify(&sparse, img, params.iterations, params.disk_constant)?;
    let depth = blur_to_depth(&defocus, config, params.policy, params.d_max)?;
    Ok(Estimate {
        edges,
        sparse,
        defocus,
        depth,
    })
}

/// Vertical step from `lo` to `hi` between columns `w/2 − 1` and `w/2`.
pub fn step_image(width: usize, height: usize, lo: f64, hi: f64) -> Image {
    Image::from_fn(width, height, 1, |x, _, _| if x < width / 2 { lo } else { hi })
}

/// Fits `c` so that a step blurred by a `diameter_px` disk is recovered at
/// that diameter: `c = diameter / (2·median σ)`.
pub fn calibrate_disk_constant(sigma0: f64, diameter_px: f64) -> Result<f64> {
    let size = 64.max((diameter_px * 6.0).ceil() as usize);
    let step = step_image(size, size, 0.2, 0.8);
    let blurred = psf::convolve(&step, &psf::disk_kernel(diameter_px)?)?;
    let params = SidfdParams::default();
    let edges = detect_edges(&blurred, params.canny_low, params.canny_high)?;
    let sparse = edge_blur_estimate(&blurred, &edges, sigma0)?;
    let sigma = numeric::median(sparse.values())
        .ok_or_else(|| Error::Estimation("calibration step produced no blur samples".into()))?;
    if sigma <= 0.0 {
        return Err(Error::Estimation("calibration step measured zero blur".into()));
    }
    Ok(diameter_px / (2.0 * sigma))
}
