//! Diffusion-based hole filling.
//!
//! Unknown pixels are first seeded ring by ring from already-filled
//! 4-neighbors, then relaxed with synchronous (Jacobi) sweeps where each
//! unknown pixel takes the weighted mean of its 4-neighbors inside the domain.
//! Known pixels never change. Every sweep reads only the previous state, so
//! the result does not depend on traversal order.

use crate::raster::{Image, Mask};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DiffusionParams {
    pub max_iterations: usize,
    /// Stop once the largest per-sweep update falls below this.
    pub tolerance: f64,
}

impl Default for DiffusionParams {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            tolerance: 1e-4,
        }
    }
}

/// Edge weights between 4-neighbors.
#[derive(Clone, Copy, Debug)]
pub enum Conductance<'a> {
    Uniform,
    /// `exp(−|g(p) − g(q)| / scale)` on a single-channel guide.
    Guided { guide: &'a [f64], scale: f64 },
}

impl Conductance<'_> {
    #[inline]
    fn weight(&self, p: usize, q: usize) -> f64 {
        match *self {
            Conductance::Uniform => 1.0,
            Conductance::Guided { guide, scale } => (-(guide[p] - guide[q]).abs() / scale).exp(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DiffusionOutcome {
    pub iterations: usize,
    pub converged: bool,
    /// Domain pixels with no path to any known pixel; left at zero.
    pub unreachable: usize,
}

#[inline]
fn neighbors(i: usize, width: usize, height: usize) -> impl Iterator<Item = usize> {
    let (x, y) = (i % width, i / width);
    let left = (x > 0).then(|| i - 1);
    let right = (x + 1 < width).then(|| i + 1);
    let up = (y > 0).then(|| i - width);
    let down = (y + 1 < height).then(|| i + width);
    [left, right, up, down].into_iter().flatten()
}

/// Fills `values` (interleaved, `channels` per pixel) at pixels inside
/// `domain` that are not `known`. Pixels outside the domain are neither read
/// nor written.
pub fn diffuse_fill(
    width: usize,
    height: usize,
    channels: usize,
    values: &mut [f64],
    known: &[bool],
    domain: &[bool],
    conductance: Conductance<'_>,
    params: DiffusionParams,
) -> DiffusionOutcome {
    let n = width * height;
    debug_assert_eq!(values.len(), n * channels);
    let mut filled: Vec<bool> = (0..n).map(|i| known[i] && domain[i]).collect();

    // ring-by-ring seeding
    let mut pending: Vec<usize> = (0..n).filter(|&i| domain[i] && !known[i]).collect();
    let unknown = pending.clone();
    let mut acc = vec![0.0; channels];
    while !pending.is_empty() {
        let ring: Vec<(usize, Vec<f64>)> = pending
            .iter()
            .filter_map(|&i| {
                let mut wsum = 0.0;
                acc.iter_mut().for_each(|a| *a = 0.0);
                for q in neighbors(i, width, height).filter(|&q| filled[q]) {
                    let w = conductance.weight(i, q);
                    wsum += w;
                    for c in 0..channels {
                        acc[c] += w * values[q * channels + c];
                    }
                }
                (wsum > 0.0).then(|| (i, acc.iter().map(|a| a / wsum).collect()))
            })
            .collect();
        if ring.is_empty() {
            break;
        }
        for (i, v) in &ring {
            values[i * channels..(i + 1) * channels].copy_from_slice(v);
            filled[*i] = true;
        }
        pending.retain(|&i| !filled[i]);
    }
    let unreachable = pending.len();
    for &i in &pending {
        values[i * channels..(i + 1) * channels]
            .iter_mut()
            .for_each(|v| *v = 0.0);
    }

    // Jacobi relaxation over reachable unknown pixels
    let active: Vec<usize> = unknown.into_iter().filter(|&i| filled[i]).collect();
    let mut next = vec![0.0; active.len() * channels];
    let mut iterations = 0;
    let mut converged = active.is_empty();
    while !converged && iterations < params.max_iterations {
        let mut max_update = 0.0f64;
        for (slot, &i) in active.iter().enumerate() {
            let mut wsum = 0.0;
            acc.iter_mut().for_each(|a| *a = 0.0);
            for q in neighbors(i, width, height).filter(|&q| filled[q]) {
                let w = conductance.weight(i, q);
                wsum += w;
                for c in 0..channels {
                    acc[c] += w * values[q * channels + c];
                }
            }
            for c in 0..channels {
                let v = if wsum > 0.0 {
                    acc[c] / wsum
                } else {
                    values[i * channels + c]
                };
                max_update = max_update.max((v - values[i * channels + c]).abs());
                next[slot * channels + c] = v;
            }
        }
        for (slot, &i) in active.iter().enumerate() {
            values[i * channels..(i + 1) * channels]
                .copy_from_slice(&next[slot * channels..(slot + 1) * channels]);
        }
        iterations += 1;
        converged = max_update < params.tolerance;
    }
    DiffusionOutcome {
        iterations,
        converged,
        unreachable,
    }
}

/// Fills every pixel of `img` outside `known` by uniform diffusion.
pub fn fill_image(img: &Image, known: &Mask, params: DiffusionParams) -> (Image, DiffusionOutcome) {
    let (w, h) = img.dims();
    let mut out = img.clone();
    let domain = vec![true; w * h];
    let outcome = diffuse_fill(
        w,
        h,
        img.channels(),
        out.data_mut(),
        known.data(),
        &domain,
        Conductance::Uniform,
        params,
    );
    (out, outcome)
}

/// Exact squared Euclidean distance to the nearest set pixel of `mask`
/// (separable lower-envelope transform). Infinite when the mask is empty.
pub fn squared_distance_to(mask: &Mask) -> Vec<f64> {
    let (w, h) = mask.dims();
    let big = f64::INFINITY;
    let mut grid: Vec<f64> = mask.data().iter().map(|&b| if b { 0.0 } else { big }).collect();
    let mut line = Vec::new();
    let mut out = Vec::new();
    for y in 0..h {
        line.clear();
        line.extend_from_slice(&grid[y * w..(y + 1) * w]);
        edt_1d(&line, &mut out);
        grid[y * w..(y + 1) * w].copy_from_slice(&out);
    }
    for x in 0..w {
        line.clear();
        line.extend((0..h).map(|y| grid[y * w + x]));
        edt_1d(&line, &mut out);
        for y in 0..h {
            grid[y * w + x] = out[y];
        }
    }
    grid
}

fn edt_1d(f: &[f64], out: &mut Vec<f64>) {
    let n = f.len();
    out.clear();
    out.resize(n, f64::INFINITY);
    let mut sites = (0..n).filter(|&q| f[q].is_finite());
    let Some(first) = sites.next() else {
        return;
    };
    let mut v = vec![first; n];
    let mut z = vec![f64::INFINITY; n + 1];
    z[0] = f64::NEG_INFINITY;
    let mut k = 0;
    for q in sites {
        let mut s;
        loop {
            let p = v[k];
            s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q - p) as f64);
            if s <= z[k] {
                k -= 1;
            } else {
                break;
            }
        }
        k += 1;
        v[k] = q;
        z[k] = s;
        z[k + 1] = f64::INFINITY;
    }
    let mut k = 0;
    for (q, o) in out.iter_mut().enumerate() {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let d = q as f64 - v[k] as f64;
        *o = d * d + f[v[k]];
    }
}

/// Pixels within Euclidean distance `radius` of `mask` (including the mask).
pub fn dilate(mask: &Mask, radius: f64) -> Mask {
    let (w, h) = mask.dims();
    let r2 = radius * radius;
    let data = squared_distance_to(mask).into_iter().map(|d| d <= r2).collect();
    Mask::from_vec(w, h, data).expect("same dimensions")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn distance_transform_matches_brute_force() {
        let mask = Mask::from_fn(23, 17, |x, y| (x * 7 + y * 3) % 29 == 0 || (x == 20 && y == 2));
        let d = squared_distance_to(&mask);
        for y in 0..17 {
            for x in 0..23 {
                let mut best = f64::INFINITY;
                for sy in 0..17 {
                    for sx in 0..23 {
                        if mask.get(sx, sy) {
                            let dx = x as f64 - sx as f64;
                            let dy = y as f64 - sy as f64;
                            best = best.min(dx * dx + dy * dy);
                        }
                    }
                }
                assert_eq!(d[y * 23 + x], best, "({x},{y})");
            }
        }
    }

    #[test]
    fn empty_mask_distance_is_infinite() {
        let d = squared_distance_to(&Mask::filled(4, 3, false));
        assert!(d.iter().all(|v| v.is_infinite()));
    }

    #[test]
    fn single_seed_fills_constant() {
        let mut img = Image::filled(9, 7, 2, 0.0);
        img.set(4, 3, 0, 0.25);
        img.set(4, 3, 1, 0.75);
        let known = Mask::from_fn(9, 7, |x, y| x == 4 && y == 3);
        let (out, outcome) = fill_image(&img, &known, DiffusionParams::default());
        assert!(outcome.converged);
        for px in out.data().chunks(2) {
            assert_eq!(px, &[0.25, 0.75]);
        }
    }

    #[test]
    fn known_pixels_untouched() {
        let img = Image::from_fn(12, 12, 1, |x, y, _| (x * y) as f64 / 144.0);
        let known = Mask::from_fn(12, 12, |x, _| x < 6);
        let (out, _) = fill_image(&img, &known, DiffusionParams::default());
        for y in 0..12 {
            for x in 0..6 {
                assert_eq!(out.get(x, y, 0), img.get(x, y, 0));
            }
        }
    }

    #[test]
    fn disconnected_domain_reported() {
        let mut values = vec![1.0, 0.0, 0.0, 0.0];
        let known = [true, false, false, false];
        let domain = [true, false, false, true];
        let out = diffuse_fill(
            2,
            2,
            1,
            &mut values,
            &known,
            &domain,
            Conductance::Uniform,
            DiffusionParams::default(),
        );
        assert_eq!(out.unreachable, 1);
    }
}
