use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numeric::mix_seed;
use crate::raster::{DepthMap, Image};

/// Side of the square training crop.
pub const AUGMENT_CROP: usize = 224;

/// One sampled geometric augmentation: a crop window and an optional
/// horizontal flip, applied identically to RGB and depth.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CropFlip {
    pub x: usize,
    pub y: usize,
    pub size: usize,
    pub flip: bool,
}

impl CropFlip {
    pub fn sample(seed: u64, width: usize, height: usize) -> Result<Self> {
        if width < AUGMENT_CROP || height < AUGMENT_CROP {
            return Err(Error::InvalidArgument(format!(
                "source {width}x{height} is smaller than the {AUGMENT_CROP}x{AUGMENT_CROP} crop"
            )));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = rng.gen_range(0..=width - AUGMENT_CROP);
        let y = rng.gen_range(0..=height - AUGMENT_CROP);
        let flip = rng.gen_bool(0.5);
        Ok(Self { x, y, size: AUGMENT_CROP, flip })
    }

    /// Stream for entry `index` of a batch seeded with `seed`.
    pub fn for_entry(seed: u64, index: u64, width: usize, height: usize) -> Result<Self> {
        Self::sample(mix_seed(seed, index), width, height)
    }

    pub fn apply_image(&self, img: &Image) -> Image {
        let s = self.size;
        Image::from_fn(s, s, img.channels(), |x, y, c| {
            let sx = if self.flip { s - 1 - x } else { x };
            img.get(self.x + sx, self.y + y, c)
        })
    }

    pub fn apply_depth(&self, depth: &DepthMap) -> DepthMap {
        let s = self.size;
        DepthMap::from_fn(s, s, |x, y| {
            let sx = if self.flip { s - 1 - x } else { x };
            depth.get(self.x + sx, self.y + y)
        })
    }
}

/// Random 224×224 crop plus a fair-coin horizontal flip. No photometric or
/// scale changes are made, since they would alter the defocus cue.
pub fn augment(rgb: &Image, depth: &DepthMap, seed: u64) -> Result<(Image, DepthMap)> {
    if rgb.width() != depth.width() || rgb.height() != depth.height() {
        return Err(Error::InvalidArgument("rgb and depth must be registered".into()));
    }
    let t = CropFlip::sample(seed, rgb.width(), rgb.height())?;
    Ok((t.apply_image(rgb), t.apply_depth(depth)))
}

/// Augments a batch in parallel; results do not depend on scheduling.
pub fn augment_batch(pairs: &[(Image, DepthMap)], seed: u64) -> Result<Vec<(Image, DepthMap)>> {
    pairs
        .par_iter()
        .enumerate()
        .map(|(i, (rgb, depth))| augment(rgb, depth, mix_seed(seed, i as u64)))
        .collect()
}

pub fn hflip_image(img: &Image) -> Image {
    let w = img.width();
    Image::from_fn(w, img.height(), img.channels(), |x, y, c| img.get(w - 1 - x, y, c))
}

pub fn hflip_depth(depth: &DepthMap) -> DepthMap {
    let w = depth.width();
    DepthMap::from_fn(w, depth.height(), |x, y| depth.get(w - 1 - x, y))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flip_is_involution() {
        let img = Image::from_fn(5, 3, 3, |x, y, c| (x + 5 * y + 15 * c) as f64);
        assert_eq!(hflip_image(&hflip_image(&img)), img);
        let d = DepthMap::from_fn(5, 3, |x, y| 1.0 + (x * y) as f64);
        assert_eq!(hflip_depth(&hflip_depth(&d)), d);
    }

    #[test]
    fn crop_keeps_registration() {
        let rgb = Image::from_fn(240, 230, 3, |x, y, _| (x * 1000 + y) as f64);
        let depth = DepthMap::from_fn(240, 230, |x, y| (x * 1000 + y) as f64);
        for seed in 0..20 {
            let (r, d) = augment(&rgb, &depth, seed).unwrap();
            for (i, v) in d.data().iter().enumerate() {
                assert_eq!(r.data()[i * 3], *v);
            }
        }
    }

    #[test]
    fn undersized_rejected() {
        let rgb = Image::filled(223, 300, 3, 0.0);
        let depth = DepthMap::filled(223, 300, 1.0);
        assert!(augment(&rgb, &depth, 1).is_err());
    }
}
