//! Histogram filtering, the uv heatmap, and its centroid.

use ccc_tensor::{Tape, Tensor, Var};

use crate::colorimetry::RgbColor;
use crate::error::{domain, Error, Result};
use crate::histogram::{uv_to_rgb, HistogramSpec, UvChroma, UvHistogram};

use super::model::CccKernel;

/// `softmax(bias + n0 ⊛ f0 + n1 ⊛ f1)` with wrap-around convolution.
pub fn ccc_on_tape(
    tape: &mut Tape,
    n0: Var,
    n1: Var,
    f0: Var,
    f1: Var,
    bias: Var,
) -> Result<Var> {
    let a = tape.circular_conv(n0, f0)?;
    let b = tape.circular_conv(n1, f1)?;
    let logits = tape.add_n(&[bias, a, b])?;
    Ok(tape.softmax2d(logits))
}

/// The probability map over uv bins, row-major with `u` along rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Heatmap {
    pub spec: HistogramSpec,
    pub data: Vec<f64>,
}

pub fn apply_ccc(n0: &UvHistogram, n1: &UvHistogram, k: &CccKernel) -> Result<Heatmap> {
    let bins = n0.spec().bins;
    let want = [bins, bins];
    for t in [&k.f0, &k.f1, &k.bias] {
        if t.shape() != want {
            return Err(Error::Shape(format!(
                "kernel map {:?} does not match {bins}×{bins} histograms",
                t.shape()
            )));
        }
    }
    if n1.spec().bins != bins {
        return Err(Error::Shape("histograms differ in size".into()));
    }
    let mut tape = Tape::new();
    let a = tape.constant(n0.to_tensor());
    let e = tape.constant(n1.to_tensor());
    let f0 = tape.constant(k.f0.clone());
    let f1 = tape.constant(k.f1.clone());
    let b = tape.constant(k.bias.clone());
    let p = ccc_on_tape(&mut tape, a, e, f0, f1, b)?;
    Ok(Heatmap { spec: *n0.spec(), data: tape.value(p).data().to_vec() })
}

/// Bin-center coordinates, row-major: `(u of row, v of column)`.
pub(crate) fn center_grids(spec: &HistogramSpec) -> (Vec<f64>, Vec<f64>) {
    let n = spec.bins;
    let mut us = Vec::with_capacity(n * n);
    let mut vs = Vec::with_capacity(n * n);
    for i in 0..n {
        for j in 0..n {
            us.push(spec.u_center(i));
            vs.push(spec.v_center(j));
        }
    }
    (us, vs)
}

/// Probability-weighted mean of bin centers.
pub fn heatmap_centroid(p: &Heatmap) -> Result<UvChroma> {
    if p.data.len() != p.spec.len() {
        return Err(Error::Shape("heatmap does not match its spec".into()));
    }
    let total: f64 = p.data.iter().sum();
    if !((total - 1.0).abs() < 1e-6) || p.data.iter().any(|v| *v < 0.0) {
        return domain(format!("heatmap must be a distribution, sums to {total}"));
    }
    let (us, vs) = center_grids(&p.spec);
    let u = p.data.iter().zip(&us).map(|(a, b)| a * b).sum();
    let v = p.data.iter().zip(&vs).map(|(a, b)| a * b).sum();
    Ok(UvChroma::new(u, v))
}

/// Centroid of a recorded heatmap, then the green-normalized RGB
/// `(e^-u, 1, e^-v)` as a 3-vector on the tape.
pub fn rgb_on_tape(tape: &mut Tape, p: Var, spec: &HistogramSpec) -> Result<Var> {
    let (us, vs) = center_grids(spec);
    let u = tape.weighted_sum(p, us)?;
    let v = tape.weighted_sum(p, vs)?;
    let nu = tape.scale(u, -1.0);
    let nv = tape.scale(v, -1.0);
    let r = tape.exp(nu);
    let b = tape.exp(nv);
    let g = tape.constant(Tensor::scalar(1.0));
    Ok(tape.stack(&[r, g, b])?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IlluminantEstimate {
    pub uv: UvChroma,
    /// Unit-length estimate.
    pub rgb: RgbColor,
    pub heatmap: Heatmap,
}

impl IlluminantEstimate {
    pub fn from_heatmap(heatmap: Heatmap) -> Result<Self> {
        let uv = heatmap_centroid(&heatmap)?;
        Ok(IlluminantEstimate { uv, rgb: uv_to_rgb(uv).normalized(), heatmap })
    }

    /// The estimate with green fixed at 1.
    pub fn rgb_green_unit(&self) -> RgbColor {
        uv_to_rgb(self.uv)
    }
}

/// Angle between two colors in degrees.
pub fn angular_error(a: RgbColor, b: RgbColor) -> Result<f64> {
    let (na, nb) = (a.norm(), b.norm());
    if !(na > 0.0 && nb > 0.0) || !na.is_finite() || !nb.is_finite() {
        return domain(format!("angular error of zero or non-finite vector ({a:?}, {b:?})"));
    }
    let cos = (a.r * b.r + a.g * b.g + a.b * b.b) / (na * nb);
    Ok(cos.clamp(-1.0, 1.0).acos().to_degrees())
}
