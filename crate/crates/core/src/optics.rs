//! Thin-lens defocus model.
//!
//! A point at object distance `d` images to a disc of diameter
//! `ε = D·s·|1/f − 1/d − 1/s|` on a sensor placed at distance `s` behind a lens
//! of focal length `f` and aperture `D = f/N`. With the sensor conjugate to the
//! focus distance this reduces to `ε = D·s·|1/d_focus − 1/d|`, which is linear
//! in inverse depth on each side of the focal plane.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Thin-lens camera. The sensor distance and aperture diameter are derived
/// from the four user-facing parameters and cannot be set independently.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CameraParams", into = "CameraParams")]
pub struct CameraConfig {
    focal_length: f64,
    f_number: f64,
    pixel_pitch: f64,
    focus_distance: f64,
    sensor_distance: f64,
    aperture_diameter: f64,
}

/// Serialized form of [`CameraConfig`]. All lengths in meters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraParams {
    pub focal_length_m: f64,
    pub f_number: f64,
    pub pixel_pitch_m: f64,
    pub focus_distance_m: f64,
}

impl TryFrom<CameraParams> for CameraConfig {
    type Error = Error;

    fn try_from(p: CameraParams) -> Result<Self> {
        CameraConfig::new(p.focal_length_m, p.f_number, p.pixel_pitch_m, p.focus_distance_m)
    }
}

impl From<CameraConfig> for CameraParams {
    fn from(c: CameraConfig) -> Self {
        CameraParams {
            focal_length_m: c.focal_length,
            f_number: c.f_number,
            pixel_pitch_m: c.pixel_pitch,
            focus_distance_m: c.focus_distance,
        }
    }
}

/// Sensor distance conjugate to `focus_distance` through a thin lens.
pub fn sensor_distance_for_focus(focal_length: f64, focus_distance: f64) -> Result<f64> {
    if !(focal_length.is_finite() && focal_length > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "focal length must be positive, got {focal_length}"
        )));
    }
    if !(focus_distance.is_finite() && focus_distance > focal_length) {
        return Err(Error::InvalidConfig(format!(
            "focus distance {focus_distance} m must exceed the focal length {focal_length} m"
        )));
    }
    Ok(focal_length * focus_distance / (focus_distance - focal_length))
}

impl CameraConfig {
    pub fn new(
        focal_length: f64,
        f_number: f64,
        pixel_pitch: f64,
        focus_distance: f64,
    ) -> Result<Self> {
        if !(f_number.is_finite() && f_number > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "f-number must be positive, got {f_number}"
            )));
        }
        if !(pixel_pitch.is_finite() && pixel_pitch > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "pixel pitch must be positive, got {pixel_pitch}"
            )));
        }
        let sensor_distance = sensor_distance_for_focus(focal_length, focus_distance)?;
        Ok(Self {
            focal_length,
            f_number,
            pixel_pitch,
            focus_distance,
            sensor_distance,
            aperture_diameter: focal_length / f_number,
        })
    }

    /// 15 mm, f/2.8, 5.6 µm pixels: the synthetic camera used to defocus the
    /// indoor RGB-D benchmark.
    pub fn synthetic_indoor(focus_distance: f64) -> Result<Self> {
        Self::new(15e-3, 2.8, 5.6e-6, focus_distance)
    }

    pub fn with_focus_distance(&self, focus_distance: f64) -> Result<Self> {
        Self::new(self.focal_length, self.f_number, self.pixel_pitch, focus_distance)
    }

    pub fn with_pixel_pitch(&self, pixel_pitch: f64) -> Result<Self> {
        Self::new(self.focal_length, self.f_number, pixel_pitch, self.focus_distance)
    }

    pub fn focal_length(&self) -> f64 {
        self.focal_length
    }

    pub fn f_number(&self) -> f64 {
        self.f_number
    }

    pub fn pixel_pitch(&self) -> f64 {
        self.pixel_pitch
    }

    pub fn focus_distance(&self) -> f64 {
        self.focus_distance
    }

    pub fn sensor_distance(&self) -> f64 {
        self.sensor_distance
    }

    pub fn aperture_diameter(&self) -> f64 {
        self.aperture_diameter
    }

    pub fn params(&self) -> CameraParams {
        (*self).into()
    }

    /// `D·s`: blur diameter per unit of inverse-depth offset from focus.
    fn blur_scale(&self) -> f64 {
        self.aperture_diameter * self.sensor_distance
    }

    /// Signed blur diameter in meters: negative in front of the focal plane,
    /// positive behind it. Increasing in depth.
    pub fn signed_blur(&self, depth: f64) -> f64 {
        self.blur_scale() * (1.0 / self.focus_distance - 1.0 / depth)
    }

    pub fn signed_blur_px(&self, depth: f64) -> f64 {
        self.signed_blur(depth) / self.pixel_pitch
    }

    /// Circle-of-confusion diameter in meters for an object at `depth`.
    pub fn blur_diameter(&self, depth: f64) -> f64 {
        debug_assert!(depth > 0.0);
        self.signed_blur(depth).abs()
    }

    pub fn blur_diameter_px(&self, depth: f64) -> f64 {
        self.blur_diameter(depth) / self.pixel_pitch
    }

    /// Both depths producing `blur` (meters): one in front of the focal plane
    /// and one behind it.
    pub fn invert_blur(&self, blur: f64) -> Result<BlurSolutions> {
        if !(blur.is_finite() && blur >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "blur diameter must be non-negative, got {blur}"
            )));
        }
        if blur == 0.0 {
            return Ok(BlurSolutions {
                near: self.focus_distance,
                far: FarDepth::Bounded(self.focus_distance),
            });
        }
        let inv_focus = 1.0 / self.focus_distance;
        let offset = blur / self.blur_scale();
        let near = 1.0 / (inv_focus + offset);
        let far_inv = inv_focus - offset;
        let far = if far_inv <= 0.0 {
            FarDepth::Unbounded
        } else {
            FarDepth::Bounded(1.0 / far_inv)
        };
        Ok(BlurSolutions { near, far })
    }

    pub fn invert_blur_px(&self, blur_px: f64) -> Result<BlurSolutions> {
        self.invert_blur(blur_px * self.pixel_pitch)
    }

    /// Depth interval around the focal plane where blur stays below
    /// `threshold_px`, i.e. where defocus carries no measurable depth signal.
    pub fn depth_of_field(&self, threshold_px: f64) -> Result<BlurSolutions> {
        if !(threshold_px.is_finite() && threshold_px > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "depth-of-field threshold must be positive, got {threshold_px}"
            )));
        }
        self.invert_blur_px(threshold_px)
    }

    /// Samples the blur curve uniformly in inverse depth on `[d_lo, d_hi]`.
    pub fn blur_curve(&self, d_lo: f64, d_hi: f64, n: usize) -> Result<BlurCurve> {
        if !(d_lo.is_finite() && d_hi.is_finite() && 0.0 < d_lo && d_lo < d_hi) {
            return Err(Error::InvalidArgument(format!(
                "blur curve range must satisfy 0 < lo < hi, got [{d_lo}, {d_hi}]"
            )));
        }
        if n < 2 {
            return Err(Error::InvalidArgument(format!(
                "blur curve needs at least 2 samples, got {n}"
            )));
        }
        let (inv_lo, inv_hi) = (1.0 / d_lo, 1.0 / d_hi);
        let samples = (0..n)
            .map(|i| {
                let depth = if i == 0 {
                    d_lo
                } else if i == n - 1 {
                    d_hi
                } else {
                    let t = i as f64 / (n - 1) as f64;
                    1.0 / (inv_lo + (inv_hi - inv_lo) * t)
                };
                let signed = self.signed_blur(depth);
                BlurSample {
                    depth_m: depth,
                    blur_m: signed.abs(),
                    blur_px: signed.abs() / self.pixel_pitch,
                    signed_blur_m: signed,
                }
            })
            .collect();
        Ok(BlurCurve { samples })
    }
}

/// Far-side solution of the blur inversion.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum FarDepth {
    Bounded(f64),
    /// The blur exceeds what any finite depth behind focus can produce.
    Unbounded,
}

impl FarDepth {
    pub fn bounded(self) -> Option<f64> {
        match self {
            FarDepth::Bounded(d) => Some(d),
            FarDepth::Unbounded => None,
        }
    }

    pub fn clamp_to(self, d_max: f64) -> f64 {
        match self {
            FarDepth::Bounded(d) => d.min(d_max),
            FarDepth::Unbounded => d_max,
        }
    }

    pub fn is_unbounded(self) -> bool {
        matches!(self, FarDepth::Unbounded)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BlurSolutions {
    pub near: f64,
    pub far: FarDepth,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BlurSample {
    pub depth_m: f64,
    pub blur_m: f64,
    pub blur_px: f64,
    #[serde(skip)]
    pub signed_blur_m: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlurCurve {
    samples: Vec<BlurSample>,
}

impl BlurCurve {
    pub fn samples(&self) -> &[BlurSample] {
        &self.samples
    }

    /// Depth where the piecewise-linear (in inverse depth) signed blur curve
    /// crosses zero, if the sampled range brackets the focal plane.
    pub fn zero_crossing(&self) -> Option<f64> {
        if let Some(s) = self.samples.iter().find(|s| s.signed_blur_m == 0.0) {
            return Some(s.depth_m);
        }
        self.samples.windows(2).find_map(|w| {
            let (a, b) = (w[0], w[1]);
            if a.signed_blur_m < 0.0 && b.signed_blur_m > 0.0 {
                let (ia, ib) = (1.0 / a.depth_m, 1.0 / b.depth_m);
                let t = a.signed_blur_m / (a.signed_blur_m - b.signed_blur_m);
                Some(1.0 / (ia + t * (ib - ia)))
            } else {
                None
            }
        })
    }

    /// CSV with header `depth_m,blur_m,blur_px`.
    pub fn write_csv<W: Write>(&self, writer: W) -> std::result::Result<(), csv::Error> {
        let mut w = csv::Writer::from_writer(writer);
        for s in &self.samples {
            w.serialize(s)?;
        }
        w.flush()?;
        Ok(())
    }
}
