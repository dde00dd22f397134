use dfd_core::dataset::{
    self, augment, hflip_depth, hflip_image, procedural, CropFlip, CropRect, DepthEncoding, Manifest, Split,
    AUGMENT_CROP, DATASET_ROOT_ENV,
};
use dfd_core::numeric::mix_seed;
use dfd_core::raster::{DepthMap, Image};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn png16mm_round_trip_is_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = DepthMap::from_fn(23, 17, |_, _| rng.gen_range(0u32..=65535) as f64 / 1000.0);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.png");
        dataset::save_depth(&depth, &p, DepthEncoding::Png16Mm).unwrap();
        let back = dataset::load_depth(&p, DepthEncoding::Png16Mm).unwrap();
        prop_assert_eq!(back, depth);
    }

    #[test]
    fn pfm_round_trip_is_bit_exact(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f32> = (0..19 * 11).map(|_| f32::from_bits(rng.gen::<u32>() & 0x7f7f_ffff)).collect();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.pfm");
        dataset::write_pfm(&p, 19, 11, &data).unwrap();
        let (w, h, back) = dataset::read_pfm(&p).unwrap();
        prop_assert_eq!((w, h), (19, 11));
        prop_assert!(back.iter().zip(&data).all(|(a, b)| a.to_bits() == b.to_bits()));
    }

    #[test]
    fn fill_never_alters_valid_pixels(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let depth = DepthMap::from_fn(15, 12, |_, _| if rng.gen_bool(0.4) { 0.0 } else { rng.gen_range(0.5..9.0) });
        prop_assume!(!depth.valid_mask().is_empty());
        let filled = dataset::fill_invalid(&depth).unwrap();
        prop_assert!(filled.is_filled());
        for (a, b) in depth.data().iter().zip(filled.data()) {
            if *a > 0.0 {
                prop_assert_eq!(a, b);
            }
        }
    }
}

#[test]
fn pfm_stores_rows_bottom_up() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("t.pfm");
    dataset::write_pfm(&p, 2, 2, &[1.0, 2.0, 3.0, 4.0]).unwrap();
    let bytes = std::fs::read(&p).unwrap();
    let header = b"Pf\n2 2\n-1.0\n";
    assert_eq!(&bytes[..header.len()], header);
    let first = f32::from_le_bytes(bytes[header.len()..header.len() + 4].try_into().unwrap());
    assert_eq!(first, 3.0);
}

#[test]
fn rgb_round_trip_at_eight_bits() {
    let img = Image::from_fn(9, 7, 3, |x, y, c| ((x * 29 + y * 7 + c * 60) % 256) as f64 / 255.0);
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("c.png");
    dataset::save_rgb(&img, &p).unwrap();
    assert!(dataset::load_rgb(&p).unwrap().max_abs_diff(&img) < 1e-12);
}

fn pair(w: usize, h: usize) -> (Image, DepthMap) {
    let rgb = Image::from_fn(w, h, 3, |x, y, c| ((x * 3 + y * 5 + c) % 97) as f64 / 96.0);
    let depth = DepthMap::from_fn(w, h, |x, y| 1.0 + (x + 1000 * y) as f64 * 1e-4);
    (rgb, depth)
}

#[test]
fn augment_is_deterministic_and_registered() {
    let (rgb, depth) = pair(300, 260);
    for seed in [0, 1, 99, u64::MAX] {
        let a = augment(&rgb, &depth, seed).unwrap();
        let b = augment(&rgb, &depth, seed).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.dims(), (AUGMENT_CROP, AUGMENT_CROP));
        let t = CropFlip::sample(seed, 300, 260).unwrap();
        let sx = if t.flip { t.x + AUGMENT_CROP - 1 } else { t.x };
        assert_eq!(a.1.get(0, 0), depth.get(sx, t.y));
        assert_eq!(a.0.get(0, 0, 1), rgb.get(sx, t.y, 1));
    }
}

#[test]
fn forced_flips_are_an_involution() {
    let (rgb, depth) = pair(224, 224);
    let t = CropFlip { x: 0, y: 0, size: 224, flip: true };
    assert_eq!(t.apply_image(&t.apply_image(&rgb)), rgb);
    assert_eq!(t.apply_depth(&t.apply_depth(&depth)), depth);
    assert_eq!(hflip_image(&rgb), t.apply_image(&rgb));
    assert_eq!(hflip_depth(&depth), t.apply_depth(&depth));
}

#[test]
fn flip_rate_is_one_half() {
    let n = 10_000;
    let flips = (0..n)
        .filter(|&s| CropFlip::for_entry(2024, s, 640, 480).unwrap().flip)
        .count();
    let rate = flips as f64 / n as f64;
    assert!((rate - 0.5).abs() <= 0.02, "flip rate {rate}");
    let plain = (0..n).filter(|&s| CropFlip::sample(s, 640, 480).unwrap().flip).count();
    assert!((plain as f64 / n as f64 - 0.5).abs() <= 0.02);
}

#[test]
fn batch_augment_is_order_independent() {
    let pairs: Vec<_> = (0..4).map(|i| pair(230 + i, 240)).collect();
    let batch = dataset::augment_batch(&pairs, 17).unwrap();
    for (i, (rgb, depth)) in pairs.iter().enumerate() {
        assert_eq!(batch[i], augment(rgb, depth, mix_seed(17, i as u64)).unwrap());
    }
}

#[test]
fn nyu_center_crop_geometry() {
    let (rgb, depth) = pair(640, 480);
    let crop = CropRect::centered(640, 480, 561, 427).unwrap();
    assert_eq!((crop.x, crop.y), (39, 26));
    let out = dataset::resample_image(&rgb, crop, 561, 427).unwrap();
    let d = dataset::resample_depth(&depth, crop, 561, 427).unwrap();
    assert_eq!(out.dims(), (561, 427));
    for (x, y) in [(0, 0), (560, 426), (200, 100)] {
        assert!((out.get(x, y, 2) - rgb.get(x + 39, y + 26, 2)).abs() < 1e-12);
        assert_eq!(d.get(x, y), depth.get(x + 39, y + 26));
    }
}

#[test]
fn dslr_downsample_is_bilinear_on_a_ramp() {
    let (sw, sh, tw, th) = (3872usize, 2592usize, 645usize, 432usize);
    assert!(((sw as f64 / sh as f64) - (tw as f64 / th as f64)).abs() < 2e-3);
    let ramp = Image::from_fn(sw, sh, 1, |x, y, _| 0.25 * x as f64 + 0.5 * y as f64);
    let out = dataset::resample_image(&ramp, CropRect::full(sw, sh), tw, th).unwrap();
    for y in 0..th {
        for x in 0..tw {
            let sx = (x as f64 + 0.5) * sw as f64 / tw as f64 - 0.5;
            let sy = (y as f64 + 0.5) * sh as f64 / th as f64 - 0.5;
            assert!((out.get(x, y, 0) - (0.25 * sx + 0.5 * sy)).abs() < 1e-9);
        }
    }
}

#[test]
fn manifest_root_from_environment_or_location() {
    let dir = tempfile::tempdir().unwrap();
    let m = procedural::write_dataset(dir.path(), 4, 16, 16, 1).unwrap();
    assert_eq!(m.split(Split::Test).count(), 1);
    let path = dir.path().join("manifest.csv");
    std::env::remove_var(DATASET_ROOT_ENV);
    let loaded = Manifest::load(&path).unwrap();
    assert_eq!(loaded.entries, m.entries);
    assert!(loaded.resolve(&loaded.entries[0].rgb_path).exists());
    std::env::set_var(DATASET_ROOT_ENV, "/elsewhere");
    let moved = Manifest::load(&path).unwrap();
    std::env::remove_var(DATASET_ROOT_ENV);
    assert_eq!(moved.resolve("rgb/a.png"), std::path::PathBuf::from("/elsewhere/rgb/a.png"));
}
