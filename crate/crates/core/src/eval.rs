//! Angular-error statistics and the gray-world baseline.

use serde::Serialize;

use crate::colorimetry::RgbColor;
use crate::error::{domain, Error, Result};
use crate::histogram::RawImage;

/// Summary of per-image angular errors, in degrees.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    pub trimean: f64,
    pub best25_mean: f64,
    pub worst25_mean: f64,
}

/// Linear interpolation between order statistics at rank `q·(n−1)`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Best and worst quarters average the lowest and highest `⌈n/4⌉` errors.
pub fn compute_stats(errors: &[f64]) -> Result<ErrorStats> {
    if errors.is_empty() {
        return domain("cannot summarize an empty error list");
    }
    if errors.iter().any(|e| !e.is_finite() || *e < 0.0) {
        return domain("angular errors must be finite and non-negative");
    }
    let mut s = errors.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    let mean_of = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let q = n.div_ceil(4);
    let (q1, q2, q3) = (quantile(&s, 0.25), quantile(&s, 0.5), quantile(&s, 0.75));
    Ok(ErrorStats {
        mean: mean_of(&s),
        median: q2,
        trimean: (q1 + 2.0 * q2 + q3) / 4.0,
        best25_mean: mean_of(&s[..q]),
        worst25_mean: mean_of(&s[n - q..]),
    })
}

/// Unit-length per-channel mean of the pixels histograms would use.
pub fn gray_world(image: &RawImage) -> Result<RgbColor> {
    let mut sum = [0.0; 3];
    let mut count = 0usize;
    for p in image.iter_pixels().filter(|p| image.is_valid_pixel(*p)) {
        for c in 0..3 {
            sum[c] += p[c];
        }
        count += 1;
    }
    if count == 0 {
        return Err(Error::Estimation("gray-world: no usable pixels".into()));
    }
    Ok(RgbColor::from_array(sum).normalized())
}
