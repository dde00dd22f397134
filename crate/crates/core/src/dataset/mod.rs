//! RGB-D dataset tooling: manifests, depth encodings, invalid-depth filling,
//! field-of-view resampling, augmentation and procedural test scenes.

mod augment;
mod io;
mod manifest;
pub mod procedural;
mod resample;

pub use augment::{augment, augment_batch, hflip_depth, hflip_image, CropFlip, AUGMENT_CROP};
pub use io::{
    load_depth, load_depth_auto, load_rgb, read_pfm, save_depth, save_depth_auto, save_rgb, write_pfm,
    DepthEncoding, PNG16_MAX_M,
};
pub use manifest::{Manifest, ManifestEntry, Split, DATASET_ROOT_ENV};
pub use resample::{resample_depth, resample_image, CropRect};

use crate::error::{Error, Result};
use crate::inpaint::{self, Conductance, DiffusionParams};
use crate::raster::DepthMap;

/// Fills invalid depth pixels by diffusion from the valid ones.
/// Valid pixels are returned unchanged.
pub fn fill_invalid(depth: &DepthMap) -> Result<DepthMap> {
    let known = depth.valid_mask();
    if known.is_empty() {
        return Err(Error::Precondition("depth map has no valid pixels to fill from".into()));
    }
    let (w, h) = depth.dims();
    let mut out = depth.clone();
    let domain = vec![true; w * h];
    inpaint::diffuse_fill(
        w,
        h,
        1,
        out.data_mut(),
        known.data(),
        &domain,
        Conductance::Uniform,
        DiffusionParams::default(),
    );
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fill_identity_when_complete() {
        let d = DepthMap::from_fn(6, 5, |x, y| 1.0 + (x + y) as f64);
        assert_eq!(fill_invalid(&d).unwrap(), d);
    }

    #[test]
    fn fill_single_valid_pixel() {
        let mut d = DepthMap::filled(7, 6, 0.0);
        d.set(2, 5, 3.25);
        let f = fill_invalid(&d).unwrap();
        assert!(f.data().iter().all(|v| *v == 3.25));
    }

    #[test]
    fn fill_requires_valid_pixels() {
        let d = DepthMap::filled(3, 3, f64::NAN);
        assert!(fill_invalid(&d).is_err());
    }
}
