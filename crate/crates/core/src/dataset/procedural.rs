//! Deterministic synthetic RGB-D scenes for tests and demos.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::io::{save_depth, save_rgb, DepthEncoding};
use super::manifest::{Manifest, ManifestEntry, Split};
use crate::error::{Error, Result};
use crate::numeric::mix_seed;
use crate::raster::{DepthMap, Image};

/// Random gray-level blocks of side `block` with a slight per-channel tint.
pub fn block_texture(width: usize, height: usize, block: usize, seed: u64) -> Image {
    assert!(block > 0);
    let bw = width.div_ceil(block);
    let bh = height.div_ceil(block);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cells: Vec<[f64; 3]> = (0..bw * bh)
        .map(|_| {
            let g: f64 = rng.gen_range(0.1..0.9);
            let t: f64 = rng.gen_range(-0.05..0.05);
            [g + t, g, g - t]
        })
        .collect();
    Image::from_fn(width, height, 3, |x, y, c| cells[(y / block) * bw + x / block][c])
}

/// Scene `index` of the stream seeded by `seed`: a slanted background wall
/// at 3 to 6 m in front of which sit one to three textured rectangles at 1 to 2.5 m.
pub fn scene(width: usize, height: usize, seed: u64, index: u64) -> (Image, DepthMap) {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, index));
    let wall_near: f64 = rng.gen_range(3.0..4.5);
    let wall_far: f64 = rng.gen_range(4.5..6.0);
    let block = rng.gen_range(3..8);
    let mut rgb = block_texture(width, height, block, rng.gen());
    let mut depth = DepthMap::from_fn(width, height, |x, _| {
        wall_near + (wall_far - wall_near) * x as f64 / width.max(2) as f64
    });
    let shapes = rng.gen_range(1..=3);
    for _ in 0..shapes {
        let w = rng.gen_range(width / 6..=width / 2).max(1);
        let h = rng.gen_range(height / 6..=height / 2).max(1);
        let x0 = rng.gen_range(0..=width - w);
        let y0 = rng.gen_range(0..=height - h);
        let d: f64 = rng.gen_range(1.0..2.5);
        let tex = block_texture(w, h, rng.gen_range(2..6), rng.gen());
        for y in 0..h {
            for x in 0..w {
                if depth.get(x0 + x, y0 + y) > d {
                    depth.set(x0 + x, y0 + y, d);
                    for c in 0..3 {
                        rgb.set(x0 + x, y0 + y, c, tex.get(x, y, c));
                    }
                }
            }
        }
    }
    (rgb, depth)
}

/// Writes `count` scenes as `rgb/scene_NNN.png` and `depth/scene_NNN.png`
/// (16-bit millimeters) plus `manifest.csv`. Every fourth scene is a test split.
pub fn write_dataset(dir: &Path, count: usize, width: usize, height: usize, seed: u64) -> Result<Manifest> {
    if count == 0 || width < 8 || height < 8 {
        return Err(Error::InvalidArgument("need at least one scene of 8x8 or more".into()));
    }
    for sub in ["rgb", "depth"] {
        let p = dir.join(sub);
        fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let entries = (0..count)
        .into_par_iter()
        .map(|i| {
            let (rgb, depth) = scene(width, height, seed, i as u64);
            let rgb_rel = format!("rgb/scene_{i:03}.png");
            let depth_rel = format!("depth/scene_{i:03}.png");
            let depth = depth.map(|d| (d * 1000.0).round() / 1000.0);
            save_rgb(&rgb, &dir.join(&rgb_rel))?;
            save_depth(&depth, &dir.join(&depth_rel), DepthEncoding::Png16Mm)?;
            let split = if i % 4 == 3 { Split::Test } else { Split::Train };
            Ok(ManifestEntry { rgb_path: rgb_rel, depth_path: depth_rel, split })
        })
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest::new(entries, dir);
    manifest.save(&dir.join("manifest.csv"))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scenes_are_deterministic_and_in_range() {
        let (a, da) = scene(64, 48, 7, 3);
        let (b, db) = scene(64, 48, 7, 3);
        assert_eq!(a, b);
        assert_eq!(da, db);
        assert!(da.data().iter().all(|d| (1.0..6.0).contains(d)));
        assert!(a.data().iter().all(|v| (0.0..=1.0).contains(v)));
        assert_ne!(scene(64, 48, 7, 4).1, da);
    }
}
