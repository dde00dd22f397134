//! Camera/config resolution and the small value parsers shared by subcommands.

use std::fs;
use std::path::{Path, PathBuf};

use clap::Args;
use dfd_core::sidfd::SidfdParams;
use dfd_core::{CameraConfig, CameraParams};
use serde::de::IgnoredAny;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// JSON config file. Every field is optional; missing camera fields fall back
/// to the synthetic indoor camera (15 mm, f/2.8, 5.6 µm, focused at 2 m).
/// A render sidecar is itself a valid config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub focal_length_m: Option<f64>,
    pub f_number: Option<f64>,
    pub pixel_pitch_m: Option<f64>,
    pub focus_distance_m: Option<f64>,
    pub quantization_px: Option<f64>,
    pub sidfd: Option<SidfdParams>,
    #[serde(rename = "tool_version")]
    _tool_version: Option<IgnoredAny>,
    #[serde(rename = "intensity_encoding")]
    _intensity_encoding: Option<IgnoredAny>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

#[derive(Debug, Clone, Args)]
pub struct CameraArgs {
    /// JSON config file (camera parameters, optional `sidfd` and `quantization_px`)
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Focal length override, millimeters
    #[arg(long)]
    pub focal_mm: Option<f64>,
    /// f-number override
    #[arg(long)]
    pub fnumber: Option<f64>,
    /// Pixel pitch override, micrometers
    #[arg(long)]
    pub pitch_um: Option<f64>,
    /// Focus distance override, meters
    #[arg(long)]
    pub focus_m: Option<f64>,
}

pub const BASE_FOCAL_M: f64 = 15e-3;
pub const BASE_F_NUMBER: f64 = 2.8;
pub const BASE_PITCH_M: f64 = 5.6e-6;
pub const BASE_FOCUS_M: f64 = 2.0;

impl CameraArgs {
    /// Flags override the file, which overrides the base camera.
    pub fn resolve(&self) -> Result<(CameraConfig, ConfigFile), CliError> {
        let file = ConfigFile::load(self.config.as_deref())?;
        let params = CameraParams {
            focal_length_m: self.focal_mm.map(|v| v * 1e-3).or(file.focal_length_m).unwrap_or(BASE_FOCAL_M),
            f_number: self.fnumber.or(file.f_number).unwrap_or(BASE_F_NUMBER),
            pixel_pitch_m: self.pitch_um.map(|v| v * 1e-6).or(file.pixel_pitch_m).unwrap_or(BASE_PITCH_M),
            focus_distance_m: self.focus_m.or(file.focus_distance_m).unwrap_or(BASE_FOCUS_M),
        };
        let camera = CameraConfig::try_from(params).map_err(|e| CliError::Usage(e.to_string()))?;
        Ok((camera, file))
    }
}

/// `lo:hi` with `0 <= lo < hi`.
pub fn parse_range(s: &str) -> Result<(f64, f64), String> {
    let parts: Vec<&str> = s.split(':').collect();
    let [lo, hi] = parts.as_slice() else {
        return Err(format!("expected lo:hi, got {s:?}"));
    };
    let lo: f64 = lo.trim().parse().map_err(|_| format!("bad lower bound in {s:?}"))?;
    let hi: f64 = hi.trim().parse().map_err(|_| format!("bad upper bound in {s:?}"))?;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(format!("range must satisfy lo < hi, got {s:?}"));
    }
    Ok((lo, hi))
}

/// `lo:hi:n` bin specification.
pub fn parse_bins(s: &str) -> Result<(f64, f64, usize), String> {
    let (head, n) = s.rsplit_once(':').ok_or_else(|| format!("expected lo:hi:n, got {s:?}"))?;
    let (lo, hi) = parse_range(head)?;
    let n: usize = n.trim().parse().map_err(|_| format!("bad bin count in {s:?}"))?;
    if n == 0 {
        return Err("bin count must be at least 1".into());
    }
    Ok((lo, hi, n))
}

/// Writes `value` as pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let text = serde_json::to_string_pretty(value).expect("serializable value") + "\n";
    fs::write(path, text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// `dir/name` for directory outputs, `<stem>.run.json` next to file outputs.
pub fn echo_path_for_file(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.run.json"))
}

/// Prints the resolved run configuration and stores it at `path`.
pub fn echo(path: &Path, value: &serde_json::Value) -> Result<(), CliError> {
    eprintln!("resolved config: {}", serde_json::to_string(value).expect("json value"));
    write_json(path, value)
}
