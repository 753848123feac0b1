//! Camera fingerprint embedding.
//!
//! A camera's calibration maps the 2500–7500 K locus into its raw space.
//! The mapped locus is histogrammed in uv and a small CNN compresses the
//! histogram into a fixed-length fingerprint.

use rand::Rng;
use serde::{Deserialize, Serialize};

use ccc_tensor::init::kaiming_normal;
use ccc_tensor::{ParameterStore, Tape, Tensor, Var};

use crate::colorimetry::{
    default_planckian_samples, interpolate_ccm, CameraCalibration, Cct, MatrixKind, RgbColor,
};
use crate::error::{Error, Result};
use crate::histogram::{rgb_to_uv, HistogramSpec, UvHistogram};

pub const FINGERPRINT_DIM: usize = 8;
pub const LEAKY_SLOPE: f64 = 0.01;

/// Camera-native colors of the locus samples, in sample order.
#[derive(Clone, Debug, PartialEq)]
pub struct GuidanceIlluminants {
    pub samples: Vec<(Cct, RgbColor)>,
}

impl GuidanceIlluminants {
    pub fn colors(&self) -> impl Iterator<Item = RgbColor> + '_ {
        self.samples.iter().map(|(_, c)| *c)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

pub fn guidance_illuminants(cal: &CameraCalibration) -> Result<GuidanceIlluminants> {
    let mut samples = Vec::with_capacity(51);
    for (t, xyz) in default_planckian_samples().iter() {
        let m = interpolate_ccm(*t, cal, MatrixKind::ColorMatrix)?;
        let c = RgbColor::from_array(m.mul_vec(xyz.to_array()));
        if !c.is_positive() {
            return Err(Error::Domain(format!(
                "camera {} maps the {} K locus sample to non-positive raw {c:?}",
                cal.camera_id,
                t.kelvin()
            )));
        }
        samples.push((*t, c));
    }
    Ok(GuidanceIlluminants { samples })
}

/// Unit weight per illuminant in the bin containing its uv.
pub fn cfe_histogram(g: &GuidanceIlluminants, bins: usize) -> Result<UvHistogram> {
    let spec = HistogramSpec::locus(bins);
    let mut weights = vec![0.0; spec.len()];
    for c in g.colors() {
        let uv = rgb_to_uv(c)?;
        weights[spec.u_index(uv.u) * bins + spec.v_index(uv.v)] += 1.0;
    }
    UvHistogram::from_weights(spec, weights)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CfeEncoderConfig {
    pub input_bins: usize,
    pub widths: [usize; 4],
    pub hidden: usize,
    pub out_dim: usize,
}

impl Default for CfeEncoderConfig {
    fn default() -> Self {
        CfeEncoderConfig { input_bins: 64, widths: [8, 16, 32, 64], hidden: 64, out_dim: FINGERPRINT_DIM }
    }
}

impl CfeEncoderConfig {
    /// Bins must be a multiple of 16 and at least 32: the last normalization
    /// sees a 2×2 map or larger, since over a single pixel it erases its input.
    pub fn validate(&self) -> Result<()> {
        if self.input_bins < 32 || self.input_bins % 16 != 0 {
            return Err(Error::Config(format!(
                "encoder input bins must be a multiple of 16 and at least 32, got {}",
                self.input_bins
            )));
        }
        if self.widths.contains(&0) || self.hidden == 0 || self.out_dim == 0 {
            return Err(Error::Config(format!("encoder widths must be positive: {self:?}")));
        }
        Ok(())
    }

    /// Inputs to the projection head.
    pub fn flat_len(&self) -> usize {
        let s = self.input_bins / 16;
        self.widths[3] * s * s
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CameraFingerprint(pub Vec<f64>);

impl CameraFingerprint {
    pub fn zeros(dim: usize) -> Self {
        CameraFingerprint(vec![0.0; dim])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

const PREFIX: &str = "cfe";

/// Adds encoder parameters: Kaiming-normal weights, zero biases, unit norm gains.
pub fn init_encoder<R: Rng + ?Sized>(
    store: &mut ParameterStore,
    cfg: &CfeEncoderConfig,
    rng: &mut R,
) -> Result<()> {
    cfg.validate()?;
    let mut cin = 1;
    for (i, &c) in cfg.widths.iter().enumerate() {
        init_double_conv(store, &format!("{PREFIX}.block{i}"), cin, c, rng)?;
        store.insert(format!("{PREFIX}.block{i}.norm.gamma"), Tensor::full(&[c], 1.0))?;
        store.insert(format!("{PREFIX}.block{i}.norm.beta"), Tensor::zeros(&[c]))?;
        cin = c;
    }
    let flat = cfg.flat_len();
    store.insert(format!("{PREFIX}.head.fc1.w"), kaiming_normal(&[cfg.hidden, flat], flat, rng))?;
    store.insert(format!("{PREFIX}.head.fc1.b"), Tensor::zeros(&[cfg.hidden]))?;
    store.insert(
        format!("{PREFIX}.head.fc2.w"),
        kaiming_normal(&[cfg.out_dim, cfg.hidden], cfg.hidden, rng),
    )?;
    store.insert(format!("{PREFIX}.head.fc2.b"), Tensor::zeros(&[cfg.out_dim]))?;
    Ok(())
}

pub(crate) fn init_double_conv<R: Rng + ?Sized>(
    store: &mut ParameterStore,
    prefix: &str,
    cin: usize,
    cout: usize,
    rng: &mut R,
) -> Result<()> {
    store.insert(format!("{prefix}.conv1.w"), kaiming_normal(&[cout, cin, 3, 3], cin * 9, rng))?;
    store.insert(format!("{prefix}.conv1.b"), Tensor::zeros(&[cout]))?;
    store.insert(format!("{prefix}.conv2.w"), kaiming_normal(&[cout, cout, 3, 3], cout * 9, rng))?;
    store.insert(format!("{prefix}.conv2.b"), Tensor::zeros(&[cout]))?;
    Ok(())
}

/// conv3×3 → leaky ReLU → conv3×3 → leaky ReLU.
pub(crate) fn double_conv(
    tape: &mut Tape,
    store: &ParameterStore,
    prefix: &str,
    x: Var,
) -> Result<Var> {
    let w1 = tape.param(store, &format!("{prefix}.conv1.w"))?;
    let b1 = tape.param(store, &format!("{prefix}.conv1.b"))?;
    let w2 = tape.param(store, &format!("{prefix}.conv2.w"))?;
    let b2 = tape.param(store, &format!("{prefix}.conv2.b"))?;
    let a = tape.conv2d_3x3(x, w1, b1)?;
    let a = tape.leaky_relu(a, LEAKY_SLOPE);
    let a = tape.conv2d_3x3(a, w2, b2)?;
    Ok(tape.leaky_relu(a, LEAKY_SLOPE))
}

/// Records the encoder on `tape`; `hist` is a `[bins, bins]` value.
pub fn encode_on_tape(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &CfeEncoderConfig,
    hist: Var,
) -> Result<Var> {
    let shape = tape.value(hist).shape().to_vec();
    if shape != [cfg.input_bins, cfg.input_bins] {
        return Err(Error::Shape(format!(
            "encoder expects a {0}×{0} histogram, got {shape:?}",
            cfg.input_bins
        )));
    }
    let mut x = tape.reshape(hist, &[1, cfg.input_bins, cfg.input_bins])?;
    for i in 0..4 {
        let p = format!("{PREFIX}.block{i}");
        x = double_conv(tape, store, &p, x)?;
        x = tape.max_pool2x2(x)?;
        let g = tape.param(store, &format!("{p}.norm.gamma"))?;
        let b = tape.param(store, &format!("{p}.norm.beta"))?;
        x = tape.channel_norm(x, g, b)?;
    }
    let w1 = tape.param(store, &format!("{PREFIX}.head.fc1.w"))?;
    let b1 = tape.param(store, &format!("{PREFIX}.head.fc1.b"))?;
    let w2 = tape.param(store, &format!("{PREFIX}.head.fc2.w"))?;
    let b2 = tape.param(store, &format!("{PREFIX}.head.fc2.b"))?;
    let h = tape.linear(x, w1, b1)?;
    let h = tape.leaky_relu(h, LEAKY_SLOPE);
    Ok(tape.linear(h, w2, b2)?)
}

pub fn encode_fingerprint(
    hist: &UvHistogram,
    store: &ParameterStore,
    cfg: &CfeEncoderConfig,
) -> Result<CameraFingerprint> {
    if hist.spec().bins != cfg.input_bins {
        return Err(Error::Shape(format!(
            "encoder expects {} bins, histogram has {}",
            cfg.input_bins,
            hist.spec().bins
        )));
    }
    let mut tape = Tape::new();
    let h = tape.constant(hist.to_tensor());
    let f = encode_on_tape(&mut tape, store, cfg, h)?;
    Ok(CameraFingerprint(tape.value(f).data().to_vec()))
}

/// Calibration → guidance illuminants → locus histogram → fingerprint.
pub fn camera_fingerprint(
    cal: &CameraCalibration,
    store: &ParameterStore,
    cfg: &CfeEncoderConfig,
) -> Result<CameraFingerprint> {
    let hist = cfe_histogram(&guidance_illuminants(cal)?, cfg.input_bins)?;
    encode_fingerprint(&hist, store, cfg)
}

/// `[dim, bins, bins]` tensor whose channel `c` is constant at `f[c]`.
pub fn tile_fingerprint(f: &CameraFingerprint, bins: usize) -> Result<Tensor> {
    if bins == 0 {
        return Err(Error::Shape("tile size must be positive".into()));
    }
    let mut data = Vec::with_capacity(f.0.len() * bins * bins);
    for &v in &f.0 {
        data.extend(std::iter::repeat(v).take(bins * bins));
    }
    Ok(Tensor::new(&[f.0.len(), bins, bins], data)?)
}
