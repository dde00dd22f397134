use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Image};

/// Source-pixel rectangle mapped onto the full output raster.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CropRect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

impl CropRect {
    pub fn full(width: usize, height: usize) -> Self {
        Self { x: 0, y: 0, w: width, h: height }
    }

    /// `w`×`h` window centered in a `width`×`height` source; odd margins round down.
    pub fn centered(width: usize, height: usize, w: usize, h: usize) -> Result<Self> {
        if w > width || h > height {
            return Err(Error::InvalidArgument(format!(
                "crop {w}x{h} larger than source {width}x{height}"
            )));
        }
        Ok(Self { x: (width - w) / 2, y: (height - h) / 2, w, h })
    }

    fn check(&self, width: usize, height: usize) -> Result<()> {
        if self.w == 0 || self.h == 0 || self.x + self.w > width || self.y + self.h > height {
            return Err(Error::InvalidArgument(format!(
                "crop {}x{}+{}+{} outside {width}x{height} source",
                self.w, self.h, self.x, self.y
            )));
        }
        Ok(())
    }
}

fn check_target(tw: usize, th: usize) -> Result<()> {
    if tw == 0 || th == 0 {
        return Err(Error::InvalidArgument("target size must be positive".into()));
    }
    Ok(())
}

/// Source coordinate of output pixel center `i` (pixel centers at integer + 0.5).
fn source_coord(i: usize, offset: usize, span: usize, target: usize) -> f64 {
    offset as f64 + (i as f64 + 0.5) * span as f64 / target as f64 - 0.5
}

/// Bilinear resampling of the `crop` window onto a `tw`×`th` raster.
pub fn resample_image(img: &Image, crop: CropRect, tw: usize, th: usize) -> Result<Image> {
    crop.check(img.width(), img.height())?;
    check_target(tw, th)?;
    let (x_lo, x_hi) = (crop.x as f64, (crop.x + crop.w - 1) as f64);
    let (y_lo, y_hi) = (crop.y as f64, (crop.y + crop.h - 1) as f64);
    let axis = |i, off, span, t, lo: f64, hi: f64| {
        let s = source_coord(i, off, span, t).clamp(lo, hi);
        let i0 = s.floor() as usize;
        let i1 = (i0 + 1).min(hi as usize);
        (i0, i1, s - i0 as f64)
    };
    let xs: Vec<_> = (0..tw).map(|x| axis(x, crop.x, crop.w, tw, x_lo, x_hi)).collect();
    let ys: Vec<_> = (0..th).map(|y| axis(y, crop.y, crop.h, th, y_lo, y_hi)).collect();
    Ok(Image::from_fn(tw, th, img.channels(), |x, y, c| {
        let (x0, x1, fx) = xs[x];
        let (y0, y1, fy) = ys[y];
        let top = img.get(x0, y0, c) * (1.0 - fx) + img.get(x1, y0, c) * fx;
        let bottom = img.get(x0, y1, c) * (1.0 - fx) + img.get(x1, y1, c) * fx;
        top * (1.0 - fy) + bottom * fy
    }))
}

/// Nearest-neighbour resampling, so no depth is invented across boundaries.
pub fn resample_depth(depth: &DepthMap, crop: CropRect, tw: usize, th: usize) -> Result<DepthMap> {
    crop.check(depth.width(), depth.height())?;
    check_target(tw, th)?;
    let nearest = |i, off: usize, span: usize, t| {
        let s = (source_coord(i, off, span, t) + 0.5).floor();
        (s.max(off as f64) as usize).min(off + span - 1)
    };
    let xs: Vec<usize> = (0..tw).map(|x| nearest(x, crop.x, crop.w, tw)).collect();
    let ys: Vec<usize> = (0..th).map(|y| nearest(y, crop.y, crop.h, th)).collect();
    Ok(DepthMap::from_fn(tw, th, |x, y| depth.get(xs[x], ys[y])))
}
