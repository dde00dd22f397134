use dfd_core::psf::{self, disk_kernel, gaussian_kernel, Kernel};
use dfd_core::raster::Image;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Quadruple-loop convolution with clamped (replicated) borders.
fn naive(img: &Image, taps: &[f64], side: usize) -> Image {
    let (w, h, ch) = (img.width() as isize, img.height() as isize, img.channels());
    let half = (side / 2) as isize;
    Image::from_fn(img.width(), img.height(), ch, |x, y, c| {
        let mut acc = 0.0;
        for j in 0..side as isize {
            for i in 0..side as isize {
                let sx = (x as isize - (i - half)).clamp(0, w - 1) as usize;
                let sy = (y as isize - (j - half)).clamp(0, h - 1) as usize;
                acc += taps[(j * side as isize + i) as usize] * img.get(sx, sy, c);
            }
        }
        acc
    })
}

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, ch: usize) -> Image {
    Image::from_fn(w, h, ch, |_, _, _| rng.gen::<f64>())
}

fn random_kernel(rng: &mut ChaCha8Rng) -> Kernel {
    match rng.gen_range(0..3) {
        0 => disk_kernel(rng.gen_range(1.0..15.0)).unwrap(),
        1 => gaussian_kernel(rng.gen_range(0.3..3.0)).unwrap(),
        _ => {
            let side = 2 * rng.gen_range(0..7) + 1;
            Kernel::from_taps(side, (0..side * side).map(|_| rng.gen::<f64>()).collect()).unwrap()
        }
    }
}

#[test]
fn hundred_pairs_match_naive_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let k = random_kernel(&mut rng);
        let w = rng.gen_range(k.side().max(8)..40);
        let h = rng.gen_range(k.side().max(8)..40);
        let ch = rng.gen_range(1..4);
        let img = random_image(&mut rng, w, h, ch);
        let got = psf::convolve(&img, &k).unwrap();
        worst = worst.max(got.max_abs_diff(&naive(&img, k.taps(), k.side())));
    }
    assert!(worst <= 1e-6, "max deviation {worst}");
}

#[test]
fn fft_and_direct_agree_on_asymmetric_kernel() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let taps: Vec<f64> = (0..15 * 15).map(|_| rng.gen::<f64>().powi(3)).collect();
    let k = Kernel::from_taps(15, taps).unwrap();
    let img = random_image(&mut rng, 37, 29, 3);
    let a = psf::convolve_direct(&img, &k).unwrap();
    let b = psf::convolve_fft(&img, &k).unwrap();
    assert!(a.max_abs_diff(&b) < 1e-9);
}

fn assert_kernel_invariants(k: &Kernel) {
    assert_eq!(k.side() % 2, 1);
    assert!(k.taps().iter().all(|t| *t >= 0.0));
    assert!((k.taps().iter().sum::<f64>() - 1.0).abs() < 1e-12);
    let h = k.half() as isize;
    for dy in -h..=h {
        for dx in -h..=h {
            let t = k.at(dx, dy);
            assert_eq!(t, k.at(-dx, dy));
            assert_eq!(t, k.at(dx, -dy));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn disk_invariants(d in 0.0..40.0f64) {
        assert_kernel_invariants(&disk_kernel(d).unwrap());
    }

    #[test]
    fn gaussian_invariants(s in 0.05..8.0f64) {
        assert_kernel_invariants(&gaussian_kernel(s).unwrap());
    }

    #[test]
    fn disk_support_is_monotone(a in 0.0..30.0f64, b in 0.0..30.0f64) {
        prop_assume!(a <= b);
        prop_assert!(disk_kernel(a).unwrap().side() <= disk_kernel(b).unwrap().side());
    }

    #[test]
    fn linearity(seed in any::<u64>(), alpha in -3.0..3.0f64, beta in -3.0..3.0f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_kernel(&mut rng);
        let (w, h) = (k.side().max(8) + 5, k.side().max(8) + 3);
        let a = random_image(&mut rng, w, h, 2);
        let b = random_image(&mut rng, w, h, 2);
        let mix = Image::from_fn(w, h, 2, |x, y, c| alpha * a.get(x, y, c) + beta * b.get(x, y, c));
        let lhs = psf::convolve(&mix, &k).unwrap();
        let (ca, cb) = (psf::convolve(&a, &k).unwrap(), psf::convolve(&b, &k).unwrap());
        let rhs = Image::from_fn(w, h, 2, |x, y, c| alpha * ca.get(x, y, c) + beta * cb.get(x, y, c));
        prop_assert!(lhs.max_abs_diff(&rhs) <= 1e-6);
    }

    #[test]
    fn energy_is_conserved_away_from_borders(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let k = random_kernel(&mut rng);
        let pad = k.half() + 1;
        let (w, h) = (2 * pad + 12, 2 * pad + 9);
        let img = Image::from_fn(w, h, 1, |x, y, _| {
            let inside = x >= pad && x < w - pad && y >= pad && y < h - pad;
            if inside { rng.gen::<f64>() } else { 0.0 }
        });
        let out = psf::convolve(&img, &k).unwrap();
        let (a, b): (f64, f64) = (img.data().iter().sum(), out.data().iter().sum());
        prop_assert!((a - b).abs() <= 1e-6, "{} vs {}", a, b);
    }

    #[test]
    fn constants_are_preserved(v in 0.0..1.0f64, d in 1.0..20.0f64) {
        let img = Image::filled(24, 24, 3, v);
        let out = psf::convolve(&img, &disk_kernel(d).unwrap()).unwrap();
        prop_assert!(out.data().iter().all(|o| (o - v).abs() < 1e-9));
    }
}
