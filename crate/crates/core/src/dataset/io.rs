use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use image::{DynamicImage, ImageBuffer, Luma, Rgb};

use crate::error::{Error, Result};
use crate::raster::{is_valid_depth, DepthMap, Image};

/// Largest depth representable in the 16-bit millimeter encoding.
pub const PNG16_MAX_M: f64 = 65.535;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DepthEncoding {
    /// 16-bit grayscale PNG in millimeters; 0 marks invalid pixels.
    Png16Mm,
    /// Little-endian single-channel PFM in meters; non-finite marks invalid.
    PfmMeters,
}

impl DepthEncoding {
    pub fn from_path(path: &Path) -> Result<Self> {
        match path
            .extension()
            .and_then(|e| e.to_str())
            .map(|e| e.to_ascii_lowercase())
            .as_deref()
        {
            Some("png") => Ok(DepthEncoding::Png16Mm),
            Some("pfm") => Ok(DepthEncoding::PfmMeters),
            _ => Err(Error::format(path, "unknown depth format (expected .png or .pfm)")),
        }
    }
}

fn open_image(path: &Path) -> Result<DynamicImage> {
    let reader = image::ImageReader::open(path).map_err(|e| Error::io(path, e))?;
    let reader = reader.with_guessed_format().map_err(|e| Error::io(path, e))?;
    reader.decode().map_err(|e| Error::format(path, e))
}

/// Loads an RGB image scaled to `[0, 1]`. 16-bit files keep their precision.
pub fn load_rgb(path: &Path) -> Result<Image> {
    let img = open_image(path)?;
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = match img {
        DynamicImage::ImageRgb16(_) | DynamicImage::ImageRgba16(_) | DynamicImage::ImageLuma16(_) => img
            .to_rgb16()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 65535.0)
            .collect(),
        _ => img
            .to_rgb8()
            .into_raw()
            .into_iter()
            .map(|v| v as f64 / 255.0)
            .collect(),
    };
    Image::from_vec(w, h, 3, data)
}

/// Saves an 8-bit PNG: RGB for 3-channel images, grayscale for 1-channel.
pub fn save_rgb(img: &Image, path: &Path) -> Result<()> {
    let (w, h) = (img.width() as u32, img.height() as u32);
    let bytes: Vec<u8> = img
        .data()
        .iter()
        .map(|v| (v.clamp(0.0, 1.0) * 255.0).round() as u8)
        .collect();
    let res = match img.channels() {
        3 => ImageBuffer::<Rgb<u8>, _>::from_raw(w, h, bytes)
            .expect("buffer size matches")
            .save_with_format(path, image::ImageFormat::Png),
        1 => ImageBuffer::<Luma<u8>, _>::from_raw(w, h, bytes)
            .expect("buffer size matches")
            .save_with_format(path, image::ImageFormat::Png),
        c => return Err(Error::InvalidArgument(format!("cannot save {c}-channel image as PNG"))),
    };
    res.map_err(|e| Error::format(path, e))
}

pub fn load_depth(path: &Path, encoding: DepthEncoding) -> Result<DepthMap> {
    match encoding {
        DepthEncoding::Png16Mm => {
            let img = open_image(path)?;
            let (w, h) = (img.width() as usize, img.height() as usize);
            let data = match img {
                DynamicImage::ImageLuma16(buf) => buf.into_raw(),
                other => {
                    return Err(Error::format(
                        path,
                        format!("expected 16-bit grayscale depth, got {:?}", other.color()),
                    ))
                }
            };
            let depth = data
                .into_iter()
                .map(|mm| if mm == 0 { 0.0 } else { mm as f64 / 1000.0 })
                .collect();
            DepthMap::from_vec(w, h, depth)
        }
        DepthEncoding::PfmMeters => {
            let (w, h, data) = read_pfm(path)?;
            DepthMap::from_vec(w, h, data.into_iter().map(f64::from).collect())
        }
    }
}

pub fn load_depth_auto(path: &Path) -> Result<DepthMap> {
    load_depth(path, DepthEncoding::from_path(path)?)
}

pub fn save_depth(depth: &DepthMap, path: &Path, encoding: DepthEncoding) -> Result<()> {
    let (w, h) = depth.dims();
    match encoding {
        DepthEncoding::Png16Mm => {
            let mut mm = Vec::with_capacity(w * h);
            for &d in depth.data() {
                if !is_valid_depth(d) {
                    mm.push(0u16);
                    continue;
                }
                let v = (d * 1000.0).round();
                if v > u16::MAX as f64 {
                    return Err(Error::format(
                        path,
                        format!("depth {d} m exceeds the 16-bit millimeter range"),
                    ));
                }
                mm.push(v as u16);
            }
            ImageBuffer::<Luma<u16>, _>::from_raw(w as u32, h as u32, mm)
                .expect("buffer size matches")
                .save_with_format(path, image::ImageFormat::Png)
                .map_err(|e| Error::format(path, e))
        }
        DepthEncoding::PfmMeters => {
            let data: Vec<f32> = depth.data().iter().map(|v| *v as f32).collect();
            write_pfm(path, w, h, &data)
        }
    }
}

pub fn save_depth_auto(depth: &DepthMap, path: &Path) -> Result<()> {
    save_depth(depth, path, DepthEncoding::from_path(path)?)
}

/// Writes a single-channel little-endian PFM (rows stored bottom to top).
pub fn write_pfm(path: &Path, width: usize, height: usize, data: &[f32]) -> Result<()> {
    assert_eq!(data.len(), width * height);
    let mut bytes = format!("Pf\n{width} {height}\n-1.0\n").into_bytes();
    bytes.reserve(data.len() * 4);
    for y in (0..height).rev() {
        for v in &data[y * width..(y + 1) * width] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&bytes).map_err(|e| Error::io(path, e))
}

/// Reads a PFM file. Three-channel files keep only their first channel.
pub fn read_pfm(path: &Path) -> Result<(usize, usize, Vec<f32>)> {
    let f = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(f);
    let mut tokens: Vec<String> = Vec::new();
    let mut line = String::new();
    while tokens.len() < 4 {
        line.clear();
        let n = r.read_line(&mut line).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            return Err(Error::format(path, "truncated PFM header"));
        }
        tokens.extend(line.split_whitespace().map(str::to_owned));
    }
    let channels = match tokens[0].as_str() {
        "Pf" => 1,
        "PF" => 3,
        other => return Err(Error::format(path, format!("bad PFM magic {other:?}"))),
    };
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::format(path, "bad PFM dimensions"));
    let (w, h) = (parse(&tokens[1])?, parse(&tokens[2])?);
    let scale: f64 = tokens[3]
        .parse()
        .map_err(|_| Error::format(path, "bad PFM scale"))?;
    if w == 0 || h == 0 || scale == 0.0 {
        return Err(Error::format(path, "degenerate PFM header"));
    }
    let little = scale < 0.0;
    let mut raw = vec![0u8; w * h * channels * 4];
    r.read_exact(&mut raw)
        .map_err(|_| Error::format(path, "PFM payload shorter than its header declares"))?;
    let mut data = vec![0f32; w * h];
    for (row_from_bottom, chunk) in raw.chunks_exact(w * channels * 4).enumerate() {
        let y = h - 1 - row_from_bottom;
        for x in 0..w {
            let o = x * channels * 4;
            let b = [chunk[o], chunk[o + 1], chunk[o + 2], chunk[o + 3]];
            data[y * w + x] = if little {
                f32::from_le_bytes(b)
            } else {
                f32::from_be_bytes(b)
            };
        }
    }
    Ok((w, h, data))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn encoding_from_extension() {
        assert_eq!(DepthEncoding::from_path(Path::new("a/b.PNG")).unwrap(), DepthEncoding::Png16Mm);
        assert_eq!(DepthEncoding::from_path(Path::new("b.pfm")).unwrap(), DepthEncoding::PfmMeters);
        assert!(DepthEncoding::from_path(Path::new("b.jpg")).is_err());
    }

    #[test]
    fn missing_file_reports_path() {
        let err = load_rgb(Path::new("/nonexistent/x.png")).unwrap_err();
        assert!(err.to_string().contains("/nonexistent/x.png"));
    }

    #[test]
    fn out_of_range_depth_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let d = DepthMap::filled(2, 2, 70.0);
        assert!(save_depth(&d, &dir.path().join("d.png"), DepthEncoding::Png16Mm).is_err());
    }

    #[test]
    fn all_zero_png_is_all_invalid() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("z.png");
        save_depth(&DepthMap::filled(5, 4, 0.0), &p, DepthEncoding::Png16Mm).unwrap();
        let back = load_depth(&p, DepthEncoding::Png16Mm).unwrap();
        assert_eq!(back.valid_mask().count(), 0);
    }

    #[test]
    fn corrupt_pfm_is_format_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.pfm");
        fs::write(&p, b"Pf\n4 4\n-1.0\n\x00\x00").unwrap();
        assert!(matches!(read_pfm(&p), Err(Error::Format { .. })));
    }
}
