use ccc_core::colorimetry::RgbColor;
use ccc_core::histogram::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const LN2: f64 = std::f64::consts::LN_2;

fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize, hi: f64) -> RawImage {
    RawImage::from_fn(w, h, 1.0, |_, _| {
        [rng.gen_range(0.0..hi), rng.gen_range(0.0..hi), rng.gen_range(0.0..hi)]
    })
    .unwrap()
}

#[test]
fn log_chroma_examples() {
    let uv = rgb_to_uv(RgbColor::new(1.0, 1.0, 1.0)).unwrap();
    assert_eq!((uv.u, uv.v), (0.0, 0.0));
    let uv = rgb_to_uv(RgbColor::new(0.5, 1.0, 2.0)).unwrap();
    assert!((uv.u - LN2).abs() < 1e-15 && (uv.v + LN2).abs() < 1e-15);
    let uv = rgb_to_uv(RgbColor::new(2.0, 1.0, 1.0)).unwrap();
    assert!((uv.u + LN2).abs() < 1e-15 && uv.v == 0.0);
    assert!(rgb_to_uv(RgbColor::new(0.0, 1.0, 1.0)).is_err());
    assert!(rgb_to_uv(RgbColor::new(1.0, -1.0, 1.0)).is_err());

    assert_eq!(uv_to_rgb(UvChroma::new(0.0, 0.0)).to_array(), [1.0, 1.0, 1.0]);
    let c = uv_to_rgb(UvChroma::new(LN2, -LN2));
    assert!((c.r - 0.5).abs() < 1e-15 && c.g == 1.0 && (c.b - 2.0).abs() < 1e-15);
}

#[test]
fn uv_round_trip_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut worst: f64 = 0.0;
    for _ in 0..1000 {
        let p = UvChroma::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let q = rgb_to_uv(uv_to_rgb(p)).unwrap();
        worst = worst.max((q.u - p.u).abs()).max((q.v - p.v).abs());
    }
    assert!(worst < 1e-12, "{worst}");
}

#[test]
fn neutral_pixel_lands_in_the_bin_containing_origin() {
    let spec = HistogramSpec::query(64);
    let img = RawImage::new(1, 1, vec![0.5, 0.5, 0.5], 1.0).unwrap();
    let h = build_histogram(&img, &spec).unwrap();
    let (iu, iv) = (spec.u_index(0.0), spec.v_index(0.0));
    assert_eq!(h.get(iu, iv), 1.0);
    assert_eq!(h.data().iter().sum::<f64>(), 1.0);
    let eps = spec.u_width();
    assert!(spec.u_min + iu as f64 * eps <= 0.0 && 0.0 < spec.u_min + (iu + 1) as f64 * eps + 1e-12);
}

#[test]
fn weights_are_pixel_norms() {
    let spec = HistogramSpec::query(64);
    let one = RawImage::new(1, 1, vec![0.1, 0.1, 0.1], 1.0).unwrap();
    let two = RawImage::new(1, 1, vec![0.2, 0.2, 0.2], 1.0).unwrap();
    let m1 = build_histogram(&one, &spec).unwrap().mass();
    let m2 = build_histogram(&two, &spec).unwrap().mass();
    assert!((m1 - 0.1 * 3f64.sqrt()).abs() < 1e-15);
    assert!((m2 / m1 - 2.0).abs() < 1e-14);

    // Same chromaticity family, different bins: masses split 1:2.
    let both = RawImage::new(2, 1, vec![0.1, 0.1, 0.1, 0.4, 0.2, 0.1], 1.0).unwrap();
    let h = build_histogram(&both, &spec).unwrap();
    let w_b = (0.16f64 + 0.04 + 0.01).sqrt();
    let frac_a = h.get(spec.u_index(0.0), spec.v_index(0.0));
    assert!((frac_a - (0.1 * 3f64.sqrt()) / (0.1 * 3f64.sqrt() + w_b)).abs() < 1e-7);
}

#[test]
fn saturated_or_dark_pixels_are_excluded() {
    let spec = HistogramSpec::query(16);
    let img = RawImage::new(2, 1, vec![0.99, 0.5, 0.5, 0.98, 0.98, 0.98], 1.0).unwrap();
    let h = build_histogram(&img, &spec).unwrap();
    assert!(h.is_empty());
    assert!(h.data().iter().all(|v| *v == 0.0));
    let img = RawImage::new(1, 1, vec![0.0, 0.5, 0.5], 1.0).unwrap();
    assert!(build_histogram(&img, &spec).unwrap().is_empty());
}

#[test]
fn out_of_range_clamps_to_edges() {
    let spec = HistogramSpec::query(8);
    let img = RawImage::new(1, 1, vec![0.9, 1e-4, 0.9], 1.0).unwrap();
    let h = build_histogram(&img, &spec).unwrap();
    assert_eq!(h.get(0, 0), 1.0);
}

#[test]
fn bin_boundaries_follow_floor_arithmetic() {
    for spec in [HistogramSpec::query(64), HistogramSpec::locus(64), HistogramSpec::query(16)] {
        let eps = spec.u_width();
        for i in 0..spec.bins {
            assert_eq!(spec.u_index(spec.u_center(i)), i);
            assert_eq!(spec.v_index(spec.v_center(i)), i);
            let edge = spec.u_min + i as f64 * eps;
            let want = ((edge - spec.u_min) / eps).floor().clamp(0.0, (spec.bins - 1) as f64);
            assert_eq!(spec.u_index(edge), want as usize);
            assert_eq!(spec.u_index(edge + 1e-9), i);
            if i > 0 {
                assert_eq!(spec.u_index(edge - 1e-9), i - 1);
            }
        }
        assert_eq!(spec.u_index(spec.u_max), spec.bins - 1);
        assert_eq!(spec.u_index(spec.u_min - 10.0), 0);
    }
}

fn reference_histogram(img: &RawImage, spec: &HistogramSpec) -> (Vec<f64>, f64) {
    let mut acc = vec![0.0; spec.bins * spec.bins];
    let limit = 0.98 * img.saturation_level();
    for y in 0..img.height() {
        for x in 0..img.width() {
            let [r, g, b] = img.pixel(x, y);
            if [r, g, b].iter().any(|c| *c <= 0.0 || *c >= limit) {
                continue;
            }
            let fu = (((g / r).ln() - spec.u_min) / spec.u_width()).floor();
            let fv = (((g / b).ln() - spec.v_min) / spec.v_width()).floor();
            let top = (spec.bins - 1) as f64;
            let iu = fu.clamp(0.0, top) as usize;
            let iv = fv.clamp(0.0, top) as usize;
            acc[iu * spec.bins + iv] += (r * r + g * g + b * b).sqrt();
        }
    }
    let mass: f64 = acc.iter().sum();
    (acc.iter().map(|w| (w / mass) as f32 as f64).collect(), mass)
}

#[test]
fn edge_image_cases() {
    let flat = RawImage::from_fn(5, 4, 1.0, |_, _| [0.3, 0.4, 0.5]).unwrap();
    assert!(edge_image(&flat).unwrap().pixels().iter().all(|v| *v == 0.0));

    let h = 0.25;
    let step = RawImage::from_fn(6, 3, 1.0, |x, _| [if x >= 3 { 0.1 + h } else { 0.1 }, 0.2, 0.2]).unwrap();
    let e = edge_image(&step).unwrap();
    for y in 0..3 {
        for x in 0..6 {
            let want = if x == 2 { h } else { 0.0 };
            assert!((e.pixel(x, y)[0] - want).abs() < 1e-15, "({x},{y})");
            assert_eq!(e.pixel(x, y)[1], 0.0);
        }
    }
    assert!(edge_image(&RawImage::new(1, 2, vec![0.1; 6], 1.0).unwrap()).is_err());
}

proptest! {
    #[test]
    fn matches_reference_exactly(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, 16, 16, 1.0);
        let spec = HistogramSpec::query(16);
        let h = build_histogram(&img, &spec).unwrap();
        let (want, mass) = reference_histogram(&img, &spec);
        prop_assert_eq!(h.data(), &want[..]);
        prop_assert_eq!(h.mass(), mass);
        prop_assert!((h.data().iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn exposure_scaling_keeps_histogram(seed in any::<u64>(), k in 0.1f64..10.0) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, 16, 16, 0.05);
        let scaled = img.map_pixels(|p| p.map(|c| c * k)).unwrap();
        let spec = HistogramSpec::query(64);
        let a = build_histogram(&img, &spec).unwrap();
        let b = build_histogram(&scaled, &spec).unwrap();
        prop_assert_eq!(a.data(), b.data());
    }

    #[test]
    fn edge_image_is_non_negative(seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let img = random_image(&mut rng, 7, 5, 1.0);
        prop_assert!(edge_image(&img).unwrap().pixels().iter().all(|v| *v >= 0.0));
    }
}
