//! Layered, occlusion-aware defocus rendering.
//!
//! The depth map is cut into layers of near-constant signed blur. Each layer
//! is extended behind its occluders, blurred with its own disk PSF, and
//! composited back to front:
//!
//! ```text
//! out = Σ_k ((A_k·L + A*_k·L*_k) ⊛ h_k) · M_k,   M_k = Π_{k'>k} (1 − A_k' ⊛ h_k')
//! ```
//!
//! where `A_k` is the layer mask, `A*_k·L*_k` the inpainted extension and
//! `M_k` the cumulative occlusion by every nearer layer.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, Manifest};
use crate::error::{Error, Result};
use crate::inpaint::{self, Conductance, DiffusionParams};
use crate::optics::CameraConfig;
use crate::psf::{self, Kernel};
use crate::raster::{DepthMap, Image, Mask};

/// Default width of a signed-blur bucket, in pixels.
pub const DEFAULT_STEP_PX: f64 = 0.25;

#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub mask: Mask,
    /// Depth at the mean inverse depth of the member pixels.
    pub representative_depth: f64,
    /// Disk diameter used for this layer, `blur_diameter_px(representative_depth)`.
    pub blur_px: f64,
    /// Signed-blur bucket index: negative in front of focus.
    pub bucket: i64,
}

/// Layers ordered back to front: `layers[0]` is the farthest, the last one
/// occludes everything else.
#[derive(Clone, Debug, PartialEq)]
pub struct DepthLayering {
    pub layers: Vec<Layer>,
    pub quantization_step: f64,
}

impl DepthLayering {
    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    /// One disk PSF per layer.
    pub fn disk_kernels(&self) -> Result<Vec<Kernel>> {
        self.layers.iter().map(|l| psf::disk_kernel(l.blur_px)).collect()
    }

    /// Pixel-weighted mean blur diameter over the frame.
    pub fn mean_blur_px(&self) -> f64 {
        let (mut num, mut den) = (0.0, 0.0);
        for l in &self.layers {
            let n = l.mask.count() as f64;
            num += n * l.blur_px;
            den += n;
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

/// Buckets pixels by signed blur diameter in steps of `step_px`.
///
/// Depths on opposite sides of the focal plane never share a bucket, even
/// when their blur diameters agree.
pub fn quantize_depth(depth: &DepthMap, config: &CameraConfig, step_px: f64) -> Result<DepthLayering> {
    if !(step_px.is_finite() && step_px > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "quantization step must be positive, got {step_px}"
        )));
    }
    if !depth.is_filled() {
        return Err(Error::Precondition(
            "depth map has invalid pixels; fill them before layering".into(),
        ));
    }
    let (w, h) = depth.dims();
    // bucket -> (member indices, sum of inverse depth)
    let mut buckets: BTreeMap<i64, (Vec<usize>, f64)> = BTreeMap::new();
    for (i, &d) in depth.data().iter().enumerate() {
        let b = (config.signed_blur_px(d) / step_px).floor() as i64;
        let e = buckets.entry(b).or_default();
        e.0.push(i);
        e.1 += 1.0 / d;
    }
    let layers = buckets
        .into_iter()
        .rev()
        .map(|(bucket, (members, inv_sum))| {
            let mut mask = Mask::filled(w, h, false);
            for &i in &members {
                mask.data_mut()[i] = true;
            }
            let representative_depth = members.len() as f64 / inv_sum;
            Layer {
                mask,
                representative_depth,
                blur_px: config.blur_diameter_px(representative_depth),
                bucket,
            }
        })
        .collect();
    Ok(DepthLayering {
        layers,
        quantization_step: step_px,
    })
}

/// Extends `img` past the boundary of `mask` by diffusion.
///
/// Inside the mask the image is kept; within `halo_px` (Euclidean) of the mask
/// the values are inpainted; everything farther away is zero. An infinite
/// halo extends over the whole frame.
pub fn extend_layer(img: &Image, mask: &Mask, halo_px: f64) -> Result<Image> {
    if mask.dims() != img.dims() {
        return Err(Error::InvalidArgument("mask and image sizes differ".into()));
    }
    if mask.is_empty() {
        return Err(Error::InvalidArgument("cannot extend an empty layer".into()));
    }
    let domain = if halo_px.is_infinite() {
        Mask::filled(img.width(), img.height(), true)
    } else {
        inpaint::dilate(mask, halo_px.max(0.0))
    };
    Ok(extend_within(img, mask, &domain))
}

fn extend_within(img: &Image, mask: &Mask, domain: &Mask) -> Image {
    let (w, h) = img.dims();
    let ch = img.channels();
    let mut out = img.clone();
    for (i, &inside) in domain.data().iter().enumerate() {
        if !inside {
            out.data_mut()[i * ch..(i + 1) * ch].iter_mut().for_each(|v| *v = 0.0);
        }
    }
    inpaint::diffuse_fill(
        w,
        h,
        ch,
        out.data_mut(),
        mask.data(),
        domain.data(),
        Conductance::Uniform,
        DiffusionParams::default(),
    );
    out
}

/// Occlusion weights `M_k`, one single-channel image per layer.
#[derive(Clone, Debug, PartialEq)]
pub struct OcclusionStack {
    pub weights: Vec<Image>,
}

/// `B_k = A_k ⊛ h_k` for every layer.
pub fn blurred_masks(layering: &DepthLayering, kernels: &[Kernel]) -> Result<Vec<Image>> {
    if kernels.len() != layering.len() {
        return Err(Error::InvalidArgument(format!(
            "{} kernels for {} layers",
            kernels.len(),
            layering.len()
        )));
    }
    layering
        .layers
        .par_iter()
        .zip(kernels.par_iter())
        .map(|(l, k)| psf::convolve(&l.mask.to_image(), k))
        .collect()
}

/// `M_k = Π_{k'>k} (1 − A_k' ⊛ h_k')`, clamped to `[0, 1]`.
pub fn cumulative_occlusion(layering: &DepthLayering, kernels: &[Kernel]) -> Result<OcclusionStack> {
    let blurred = blurred_masks(layering, kernels)?;
    Ok(occlusion_from_blurred(&blurred))
}

/// Occlusion weights from precomputed blurred masks (back to front).
pub fn occlusion_from_blurred(blurred: &[Image]) -> OcclusionStack {
    let k = blurred.len();
    let mut weights = vec![Image::new(1, 1, 1); k];
    if k == 0 {
        return OcclusionStack { weights };
    }
    let (w, h) = blurred[0].dims();
    let mut running = Image::filled(w, h, 1, 1.0);
    for idx in (0..k).rev() {
        weights[idx] = running.clone();
        let b = &blurred[idx];
        for (m, bv) in running.data_mut().iter_mut().zip(b.data()) {
            *m = (*m * (1.0 - bv)).clamp(0.0, 1.0);
        }
    }
    OcclusionStack { weights }
}

/// Per-pixel composite weight `Σ_k B_k·M_k`.
pub fn composite_weight(blurred: &[Image], stack: &OcclusionStack) -> Image {
    let (w, h) = blurred[0].dims();
    let mut out = Image::new(w, h, 1);
    for (b, m) in blurred.iter().zip(&stack.weights) {
        for ((o, bv), mv) in out.data_mut().iter_mut().zip(b.data()).zip(m.data()) {
            *o += bv * mv;
        }
    }
    out
}

/// Per-layer support of `A_k·L + A*_k·L*_k`.
///
/// The back-most layer covers the whole frame. Any other layer keeps its own
/// pixels plus the part of its `halo`-wide surrounding that is hidden by a
/// nearer layer.
fn extension_domains(layering: &DepthLayering, kernels: &[Kernel]) -> Vec<Mask> {
    let k = layering.len();
    let (w, h) = layering.layers[0].mask.dims();
    let mut nearer = vec![Mask::filled(w, h, false); k];
    for idx in (0..k.saturating_sub(1)).rev() {
        nearer[idx] = nearer[idx + 1].or(&layering.layers[idx + 1].mask);
    }
    (0..k)
        .into_par_iter()
        .map(|idx| {
            let layer = &layering.layers[idx];
            if idx == 0 {
                return Mask::filled(w, h, true);
            }
            let halo = kernels[idx].half() as f64;
            if halo == 0.0 {
                return layer.mask.clone();
            }
            let grown = inpaint::dilate(&layer.mask, halo);
            grown.and(&nearer[idx]).or(&layer.mask)
        })
        .collect()
}

/// Layered defocus rendering of an all-in-focus RGB-D pair.
pub fn render_defocus(rgb: &Image, depth: &DepthMap, config: &CameraConfig, step_px: f64) -> Result<Image> {
    Ok(render_layered(rgb, depth, config, step_px)?.0)
}

/// Renders and also returns the layering used.
pub fn render_layered(
    rgb: &Image,
    depth: &DepthMap,
    config: &CameraConfig,
    step_px: f64,
) -> Result<(Image, DepthLayering)> {
    if rgb.dims() != depth.dims() {
        return Err(Error::InvalidArgument(format!(
            "image is {}x{} but depth is {}x{}",
            rgb.width(),
            rgb.height(),
            depth.width(),
            depth.height()
        )));
    }
    let layering = quantize_depth(depth, config, step_px)?;
    let kernels = layering.disk_kernels()?;
    let (w, h) = rgb.dims();
    let ch = rgb.channels();

    let domains = extension_domains(&layering, &kernels);
    let blurred_layers: Vec<Image> = layering
        .layers
        .par_iter()
        .zip(domains.par_iter())
        .zip(kernels.par_iter())
        .map(|((layer, domain), k)| psf::convolve(&extend_within(rgb, &layer.mask, domain), k))
        .collect::<Result<_>>()?;
    let blurred = blurred_masks(&layering, &kernels)?;
    let stack = occlusion_from_blurred(&blurred);

    let mut out = Image::new(w, h, ch);
    for (layer_img, m) in blurred_layers.iter().zip(&stack.weights) {
        for (i, mv) in m.data().iter().enumerate() {
            if *mv == 0.0 {
                continue;
            }
            for c in 0..ch {
                out.data_mut()[i * ch + c] += layer_img.data()[i * ch + c] * mv;
            }
        }
    }
    out.data_mut().iter_mut().for_each(|v| *v = v.clamp(0.0, 1.0));
    Ok((out, layering))
}

/// Parameters written next to rendered images.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderSidecar {
    pub focal_length_m: f64,
    pub f_number: f64,
    pub pixel_pitch_m: f64,
    pub focus_distance_m: f64,
    pub quantization_px: f64,
    pub tool_version: String,
    /// Blur is applied to the stored (gamma-encoded) intensities.
    pub intensity_encoding: String,
}

pub const SIDECAR_NAME: &str = "render_config.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EntryStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntryReport {
    pub rgb_path: String,
    pub output: Option<String>,
    pub status: EntryStatus,
    pub error: Option<String>,
    pub layers: Option<usize>,
    pub mean_blur_px: Option<f64>,
    pub filled_pixels: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderReport {
    pub config: RenderSidecar,
    pub succeeded: usize,
    pub failed: usize,
    pub entries: Vec<EntryReport>,
}

fn output_name(rgb_path: &str) -> String {
    let stem = Path::new(rgb_path)
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| rgb_path.to_owned());
    format!("{stem}_defocus.png")
}

/// Renders every manifest entry into `out_dir` as `<stem>_defocus.png` and
/// writes the parameter sidecar. Invalid depth is filled before rendering.
/// A failing entry is recorded in the report and the rest still run.
pub fn render_dataset(manifest: &Manifest, config: &CameraConfig, out_dir: &Path, step_px: f64) -> Result<RenderReport> {
    if manifest.entries.is_empty() {
        return Err(Error::InvalidArgument("manifest has no entries".into()));
    }
    if !(step_px.is_finite() && step_px > 0.0) {
        return Err(Error::InvalidArgument(format!("quantization step must be positive, got {step_px}")));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let p = config.params();
    let sidecar = RenderSidecar {
        focal_length_m: p.focal_length_m,
        f_number: p.f_number,
        pixel_pitch_m: p.pixel_pitch_m,
        focus_distance_m: p.focus_distance_m,
        quantization_px: step_px,
        tool_version: crate::TOOL_VERSION.to_owned(),
        intensity_encoding: "stored".to_owned(),
    };
    let sidecar_path = out_dir.join(SIDECAR_NAME);
    let json = serde_json::to_string_pretty(&sidecar).expect("sidecar serializes");
    fs::write(&sidecar_path, json + "\n").map_err(|e| Error::io(&sidecar_path, e))?;

    let mut seen = HashSet::new();
    let names: Vec<(String, bool)> = manifest
        .entries
        .iter()
        .map(|e| {
            let name = output_name(&e.rgb_path);
            let fresh = seen.insert(name.clone());
            (name, fresh)
        })
        .collect();

    let entries: Vec<EntryReport> = manifest
        .entries
        .par_iter()
        .zip(names.par_iter())
        .map(|(entry, (name, fresh))| {
            let mut report = EntryReport {
                rgb_path: entry.rgb_path.clone(),
                output: None,
                status: EntryStatus::Failed,
                error: None,
                layers: None,
                mean_blur_px: None,
                filled_pixels: 0,
            };
            let run = || -> Result<(usize, f64, usize)> {
                if !fresh {
                    return Err(Error::InvalidArgument(format!("output name {name} is used by an earlier entry")));
                }
                let rgb = dataset::load_rgb(&manifest.resolve(&entry.rgb_path))?;
                let raw = dataset::load_depth_auto(&manifest.resolve(&entry.depth_path))?;
                let invalid = raw.valid_mask().not().count();
                let depth = if invalid > 0 { dataset::fill_invalid(&raw)? } else { raw };
                let (img, layering) = render_layered(&rgb, &depth, config, step_px)?;
                dataset::save_rgb(&img, &out_dir.join(name))?;
                Ok((layering.len(), layering.mean_blur_px(), invalid))
            };
            match run() {
                Ok((layers, blur, filled)) => {
                    report.output = Some(name.clone());
                    report.status = EntryStatus::Ok;
                    report.layers = Some(layers);
                    report.mean_blur_px = Some(blur);
                    report.filled_pixels = filled;
                }
                Err(e) => report.error = Some(e.to_string()),
            }
            report
        })
        .collect();
    let failed = entries.iter().filter(|e| e.status == EntryStatus::Failed).count();
    Ok(RenderReport {
        config: sidecar,
        succeeded: entries.len() - failed,
        failed,
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(focus: f64) -> CameraConfig {
        CameraConfig::synthetic_indoor(focus).unwrap()
    }

    fn textured(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, 3, |x, y, c| {
            (((x * 7 + y * 13 + c * 5) % 17) as f64 / 16.0) * 0.8 + 0.1
        })
    }

    #[test]
    fn constant_depth_single_layer() {
        let depth = DepthMap::filled(16, 12, 1.3);
        let l = quantize_depth(&depth, &cfg(2.0), DEFAULT_STEP_PX).unwrap();
        assert_eq!(l.len(), 1);
        assert_eq!(l.layers[0].mask.count(), 16 * 12);
    }

    #[test]
    fn two_planes_partition() {
        let depth = DepthMap::from_fn(20, 10, |x, _| if x < 10 { 1.0 } else { 3.0 });
        let l = quantize_depth(&depth, &cfg(2.0), DEFAULT_STEP_PX).unwrap();
        assert_eq!(l.len(), 2);
        // back to front: 3 m first
        assert!((l.layers[0].representative_depth - 3.0).abs() < 1e-12);
        assert!((l.layers[1].representative_depth - 1.0).abs() < 1e-12);
        let union = l.layers[0].mask.or(&l.layers[1].mask);
        assert_eq!(union.count(), 200);
        assert!(l.layers[0].mask.and(&l.layers[1].mask).is_empty());
    }

    #[test]
    fn equal_blur_across_focus_stays_separate() {
        let c = cfg(2.0);
        // 1/d = 1/2 ± 0.25 gives equal blur on both sides
        let depth = DepthMap::from_fn(8, 8, |x, _| if x < 4 { 1.0 / 0.75 } else { 1.0 / 0.25 });
        assert!((c.blur_diameter_px(1.0 / 0.75) - c.blur_diameter_px(4.0)).abs() < 1e-9);
        let l = quantize_depth(&depth, &c, DEFAULT_STEP_PX).unwrap();
        assert_eq!(l.len(), 2);
    }

    #[test]
    fn unfilled_depth_rejected() {
        let mut depth = DepthMap::filled(4, 4, 2.0);
        depth.set(1, 1, 0.0);
        assert!(matches!(
            quantize_depth(&depth, &cfg(2.0), 0.25),
            Err(Error::Precondition(_))
        ));
    }

    #[test]
    fn extend_full_mask_is_identity() {
        let img = textured(10, 8);
        let out = extend_layer(&img, &Mask::filled(10, 8, true), 3.0).unwrap();
        assert_eq!(out, img);
        assert!(extend_layer(&img, &Mask::filled(10, 8, false), 3.0).is_err());
    }

    #[test]
    fn extend_constant_within_halo_zero_beyond() {
        let img = Image::filled(30, 20, 3, 0.6);
        let mask = Mask::from_fn(30, 20, |x, y| (10..14).contains(&x) && (8..12).contains(&y));
        let out = extend_layer(&img, &mask, 4.0).unwrap();
        let halo = inpaint::dilate(&mask, 4.0);
        for y in 0..20 {
            for x in 0..30 {
                let expect = if halo.get(x, y) { 0.6 } else { 0.0 };
                for c in 0..3 {
                    assert!((out.get(x, y, c) - expect).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn occlusion_trivial_cases() {
        let depth = DepthMap::filled(6, 6, 3.0);
        let l = quantize_depth(&depth, &cfg(2.0), 0.25).unwrap();
        let stack = cumulative_occlusion(&l, &l.disk_kernels().unwrap()).unwrap();
        assert!(stack.weights[0].data().iter().all(|v| *v == 1.0));

        let l2 = DepthLayering {
            layers: vec![
                Layer {
                    mask: Mask::filled(6, 6, false),
                    representative_depth: 5.0,
                    blur_px: 0.0,
                    bucket: 1,
                },
                Layer {
                    mask: Mask::filled(6, 6, true),
                    representative_depth: 1.0,
                    blur_px: 0.0,
                    bucket: -1,
                },
            ],
            quantization_step: 0.25,
        };
        let stack = cumulative_occlusion(&l2, &[Kernel::delta(), Kernel::delta()]).unwrap();
        assert!(stack.weights[0].data().iter().all(|v| *v == 0.0));
        assert!(stack.weights[1].data().iter().all(|v| *v == 1.0));
    }

    #[test]
    fn in_focus_depth_is_passthrough() {
        let img = textured(24, 18);
        let depth = DepthMap::filled(24, 18, 2.0);
        let out = render_defocus(&img, &depth, &cfg(2.0), 0.25).unwrap();
        assert!(out.max_abs_diff(&img) < 1e-6);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let img = textured(8, 8);
        let depth = DepthMap::filled(8, 7, 2.0);
        assert!(render_defocus(&img, &depth, &cfg(2.0), 0.25).is_err());
    }
}
