use ccc_core::colorimetry::RgbColor;
use ccc_core::estimator::angular_error;
use ccc_core::eval::{compute_stats, gray_world, quantile};
use ccc_core::histogram::RawImage;
use ccc_core::Error;
use proptest::prelude::*;

#[test]
fn four_value_case() {
    let s = compute_stats(&[4.0, 1.0, 3.0, 2.0]).unwrap();
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.25), 1.75);
    assert_eq!(quantile(&[1.0, 2.0, 3.0, 4.0], 0.75), 3.25);
    assert_eq!(s.mean, 2.5);
    assert_eq!(s.median, 2.5);
    assert_eq!(s.trimean, 2.5);
    assert_eq!(s.best25_mean, 1.0);
    assert_eq!(s.worst25_mean, 4.0);
}

#[test]
fn quarter_rounds_up() {
    // n = 5 uses the two lowest and two highest values.
    let s = compute_stats(&[1.0, 2.0, 3.0, 4.0, 10.0]).unwrap();
    assert_eq!(s.best25_mean, 1.5);
    assert_eq!(s.worst25_mean, 7.0);
    assert_eq!(s.median, 3.0);
    assert_eq!(s.trimean, (2.0 + 6.0 + 4.0) / 4.0);
}

#[test]
fn degenerate_lists() {
    let one = compute_stats(&[1.7]).unwrap();
    let flat = compute_stats(&[2.25; 9]).unwrap();
    for (s, x) in [(one, 1.7), (flat, 2.25)] {
        for v in [s.mean, s.median, s.trimean, s.best25_mean, s.worst25_mean] {
            assert_eq!(v, x);
        }
    }
    assert!(matches!(compute_stats(&[]), Err(Error::Domain(_))));
    assert!(compute_stats(&[1.0, f64::NAN]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]
    #[test]
    fn stats_are_ordered(v in prop::collection::vec(0.0f64..40.0, 1..60)) {
        let s = compute_stats(&v).unwrap();
        prop_assert!(s.best25_mean <= s.mean + 1e-12);
        prop_assert!(s.mean <= s.worst25_mean + 1e-12);
        prop_assert!(s.best25_mean >= 0.0);
        prop_assert!(s.best25_mean <= s.median && s.median <= s.worst25_mean);
    }
}

#[test]
fn gray_world_recovers_uniform_tint() {
    let l = [0.3, 0.9, 0.5];
    let img = RawImage::from_fn(8, 8, 1.0, |x, y| {
        let k = 0.1 + 0.05 * ((x * 7 + y * 3) % 11) as f64;
        [k * l[0], k * l[1], k * l[2]]
    })
    .unwrap();
    let est = gray_world(&img).unwrap();
    assert!(angular_error(est, RgbColor::from_array(l)).unwrap() < 1e-6);

    let neutral = RawImage::from_fn(3, 3, 1.0, |x, _| [0.1 * (x + 1) as f64; 3]).unwrap();
    let e = gray_world(&neutral).unwrap();
    let k = 1.0 / 3f64.sqrt();
    for c in e.to_array() {
        assert!((c - k).abs() < 1e-15);
    }
}

#[test]
fn gray_world_is_biased_by_scene_content() {
    // Equal red and blue areas under white light average to purple.
    let img = RawImage::from_fn(4, 4, 1.0, |x, _| if x < 2 { [0.8, 0.1, 0.1] } else { [0.1, 0.1, 0.8] }).unwrap();
    let est = gray_world(&img).unwrap();
    let k = 1.0 / (0.45f64 * 0.45 * 2.0 + 0.01).sqrt();
    let want = [0.45 * k, 0.1 * k, 0.45 * k];
    for (a, b) in est.to_array().iter().zip(want) {
        assert!((a - b).abs() < 1e-12);
    }
    let err = angular_error(est, RgbColor::new(1.0, 1.0, 1.0)).unwrap();
    assert!(err > 20.0, "{err}");
}

#[test]
fn gray_world_ignores_saturated_and_dark_pixels() {
    let img = RawImage::from_fn(2, 1, 1.0, |x, _| if x == 0 { [0.99, 0.5, 0.5] } else { [0.2, 0.4, 0.0] }).unwrap();
    assert!(matches!(gray_world(&img), Err(Error::Estimation(_))));
}
