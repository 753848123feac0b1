//! The U-Net hypernetwork and the parameter bundle it shares with the
//! fingerprint encoder.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ccc_tensor::init::kaiming_normal;
use ccc_tensor::{ParameterStore, Tape, Tensor, Var};

use crate::cfe::{self, double_conv, init_double_conv, CameraFingerprint, CfeEncoderConfig};
use crate::colorimetry::CameraCalibration;
use crate::error::{Error, Result};
use crate::histogram::{HistogramSpec, UvHistogram};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub widths: [usize; 4],
    pub in_channels: usize,
    pub out_channels: usize,
    pub bins: usize,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        BackboneConfig { widths: [16, 32, 64, 128], in_channels: 10, out_channels: 3, bins: 64 }
    }
}

/// Everything needed to rebuild a model from its parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub backbone: BackboneConfig,
    pub encoder: CfeEncoderConfig,
    pub query: HistogramSpec,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            backbone: BackboneConfig::default(),
            encoder: CfeEncoderConfig::default(),
            query: HistogramSpec::query(64),
        }
    }
}

impl ModelConfig {
    /// Small model on the standard query range.
    pub fn reduced(bins: usize, widths: [usize; 4], encoder: CfeEncoderConfig) -> Self {
        ModelConfig {
            backbone: BackboneConfig {
                widths,
                in_channels: 2 + encoder.out_dim,
                out_channels: 3,
                bins,
            },
            encoder,
            query: HistogramSpec::query(bins),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.backbone;
        self.encoder.validate()?;
        self.query.validate()?;
        if b.bins == 0 || b.bins % 16 != 0 {
            return Err(Error::Config(format!("backbone bins must be a multiple of 16, got {}", b.bins)));
        }
        if !b.bins.is_power_of_two() {
            return Err(Error::Config(format!("backbone bins must be a power of two, got {}", b.bins)));
        }
        if b.bins != self.query.bins {
            return Err(Error::Config(format!(
                "backbone has {} bins but the query histogram has {}",
                b.bins, self.query.bins
            )));
        }
        if b.in_channels != 2 + self.encoder.out_dim {
            return Err(Error::Config(format!(
                "backbone takes {} channels; two histograms plus a {}-value fingerprint need {}",
                b.in_channels,
                self.encoder.out_dim,
                2 + self.encoder.out_dim
            )));
        }
        if b.out_channels != 3 {
            return Err(Error::Config("backbone must emit exactly three maps".into()));
        }
        if b.widths.contains(&0) {
            return Err(Error::Config("backbone widths must be positive".into()));
        }
        Ok(())
    }
}

/// Filters and bias for one image, each `bins × bins`.
#[derive(Clone, Debug, PartialEq)]
pub struct CccKernel {
    pub f0: Tensor,
    pub f1: Tensor,
    pub bias: Tensor,
}

#[derive(Clone, Debug)]
pub struct CcmModel {
    pub config: ModelConfig,
    pub params: ParameterStore,
}

const PREFIX: &str = "unet";

impl CcmModel {
    /// Freshly initialized parameters from `seed`.
    pub fn init(config: ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParameterStore::new();
        cfe::init_encoder(&mut params, &config.encoder, &mut rng)?;
        init_backbone(&mut params, &config.backbone, &mut rng)?;
        Ok(CcmModel { config, params })
    }

    /// Wraps loaded parameters after checking every expected tensor exists
    /// with the right shape.
    pub fn from_parts(config: ModelConfig, params: ParameterStore) -> Result<Self> {
        let reference = Self::init(config.clone(), 0)?;
        for (name, p) in reference.params.iter() {
            let got = params
                .value(name)
                .map_err(|_| Error::Load(format!("checkpoint is missing parameter {name}")))?;
            if got.shape() != p.value.shape() {
                return Err(Error::Load(format!(
                    "parameter {name} has shape {:?}, configuration implies {:?}",
                    got.shape(),
                    p.value.shape()
                )));
            }
        }
        if params.len() != reference.params.len() {
            return Err(Error::Load(format!(
                "checkpoint has {} parameters, configuration implies {}",
                params.len(),
                reference.params.len()
            )));
        }
        Ok(CcmModel { config, params })
    }

    pub fn fingerprint(&self, cal: &CameraCalibration) -> Result<CameraFingerprint> {
        cfe::camera_fingerprint(cal, &self.params, &self.config.encoder)
    }

    pub fn kernel(
        &self,
        n0: &UvHistogram,
        n1: &UvHistogram,
        fingerprint: &CameraFingerprint,
    ) -> Result<CccKernel> {
        backbone_forward(n0, n1, fingerprint, &self.params, &self.config.backbone)
    }
}

fn init_backbone<R: rand::Rng + ?Sized>(
    store: &mut ParameterStore,
    cfg: &BackboneConfig,
    rng: &mut R,
) -> Result<()> {
    let w = cfg.widths;
    let mut cin = cfg.in_channels;
    for (i, &c) in w.iter().enumerate() {
        init_double_conv(store, &format!("{PREFIX}.enc{i}"), cin, c, rng)?;
        cin = c;
    }
    for i in (0..4).rev() {
        init_double_conv(store, &format!("{PREFIX}.dec{i}"), cin + w[i], w[i], rng)?;
        cin = w[i];
    }
    store.insert(
        format!("{PREFIX}.out.w"),
        kaiming_normal(&[cfg.out_channels, w[0], 1, 1], w[0], rng),
    )?;
    store.insert(format!("{PREFIX}.out.b"), Tensor::zeros(&[cfg.out_channels]))?;
    Ok(())
}

/// Records the U-Net on `tape`. Inputs are `[bins, bins]` histograms and a
/// fingerprint vector; returns `(f0, f1, bias)` as `[bins, bins]` maps.
pub fn backbone_on_tape(
    tape: &mut Tape,
    store: &ParameterStore,
    cfg: &BackboneConfig,
    n0: Var,
    n1: Var,
    fingerprint: Var,
) -> Result<(Var, Var, Var)> {
    let b = cfg.bins;
    for v in [n0, n1] {
        if tape.value(v).shape() != [b, b] {
            return Err(Error::Shape(format!(
                "backbone expects {b}×{b} histograms, got {:?}",
                tape.value(v).shape()
            )));
        }
    }
    if tape.value(fingerprint).len() + 2 != cfg.in_channels {
        return Err(Error::Shape(format!(
            "fingerprint has {} values, backbone expects {}",
            tape.value(fingerprint).len(),
            cfg.in_channels - 2
        )));
    }
    let a = tape.reshape(n0, &[1, b, b])?;
    let e = tape.reshape(n1, &[1, b, b])?;
    let f = tape.tile_spatial(fingerprint, b, b)?;
    let mut x = tape.concat_channels(&[a, e, f])?;

    let mut skips = Vec::with_capacity(4);
    for i in 0..4 {
        x = double_conv(tape, store, &format!("{PREFIX}.enc{i}"), x)?;
        skips.push(x);
        x = tape.max_pool2x2(x)?;
    }
    for i in (0..4).rev() {
        let up = tape.upsample_nearest2x(x)?;
        let cat = tape.concat_channels(&[up, skips[i]])?;
        x = double_conv(tape, store, &format!("{PREFIX}.dec{i}"), cat)?;
    }
    let w = tape.param(store, &format!("{PREFIX}.out.w"))?;
    let bias = tape.param(store, &format!("{PREFIX}.out.b"))?;
    let out = tape.conv2d(x, w, bias)?;
    Ok((tape.channel(out, 0)?, tape.channel(out, 1)?, tape.channel(out, 2)?))
}

pub fn backbone_forward(
    n0: &UvHistogram,
    n1: &UvHistogram,
    fingerprint: &CameraFingerprint,
    params: &ParameterStore,
    cfg: &BackboneConfig,
) -> Result<CccKernel> {
    for h in [n0, n1] {
        if h.spec().bins != cfg.bins {
            return Err(Error::Shape(format!(
                "backbone expects {} bins, histogram has {}",
                cfg.bins,
                h.spec().bins
            )));
        }
    }
    let mut tape = Tape::new();
    let a = tape.constant(n0.to_tensor());
    let e = tape.constant(n1.to_tensor());
    let f = tape.constant(Tensor::from_vec(fingerprint.values().to_vec()));
    let (f0, f1, b) = backbone_on_tape(&mut tape, params, cfg, a, e, f)?;
    Ok(CccKernel {
        f0: tape.value(f0).clone(),
        f1: tape.value(f1).clone(),
        bias: tape.value(b).clone(),
    })
}
