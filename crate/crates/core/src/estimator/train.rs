//! Joint training of the fingerprint encoder and the backbone.

use std::collections::HashMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use ccc_tensor::{adam_step, AdamConfig, Tape, Var};

use crate::cfe::{cfe_histogram, encode_on_tape, guidance_illuminants};
use crate::colorimetry::{CameraCalibration, RgbColor};
use crate::error::{Error, Result};
use crate::histogram::{HistogramSpec, RawImage, UvHistogram};

use super::ccc::{ccc_on_tape, rgb_on_tape};
use super::model::{backbone_on_tape, CcmModel};
use super::query_histograms;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub epochs: usize,
    pub lr: f64,
    /// The learning rate is multiplied by `lr_decay` from this epoch on.
    pub lr_decay_epoch: usize,
    pub lr_decay: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { batch_size: 16, epochs: 50, lr: 5e-4, lr_decay_epoch: 25, lr_decay: 0.5, seed: 0 }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(Error::Config("batch size and epochs must be positive".into()));
        }
        if !(self.lr > 0.0) || !(self.lr_decay > 0.0) {
            return Err(Error::Config("learning rate and decay must be positive".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        if epoch >= self.lr_decay_epoch {
            self.lr * self.lr_decay
        } else {
            self.lr
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainingSample {
    pub n0: UvHistogram,
    pub n1: UvHistogram,
    pub camera: usize,
    pub gt: RgbColor,
}

/// Preprocessed images plus the calibrations they reference. Each
/// calibration's locus histogram is computed once.
#[derive(Clone, Debug)]
pub struct TrainingSet {
    query: HistogramSpec,
    locus_bins: usize,
    cameras: Vec<CameraCalibration>,
    locus: Vec<UvHistogram>,
    samples: Vec<TrainingSample>,
}

impl TrainingSet {
    pub fn new(query: HistogramSpec, locus_bins: usize) -> Self {
        TrainingSet { query, locus_bins, cameras: Vec::new(), locus: Vec::new(), samples: Vec::new() }
    }

    pub fn for_model(model: &CcmModel) -> Self {
        Self::new(model.config.query, model.config.encoder.input_bins)
    }

    pub fn add_camera(&mut self, cal: CameraCalibration) -> Result<usize> {
        let hist = cfe_histogram(&guidance_illuminants(&cal)?, self.locus_bins)?;
        self.cameras.push(cal);
        self.locus.push(hist);
        Ok(self.cameras.len() - 1)
    }

    pub fn add_image(&mut self, image: &RawImage, gt: RgbColor, camera: usize) -> Result<()> {
        gt.check_illuminant()?;
        if camera >= self.cameras.len() {
            return Err(Error::Config(format!("unknown camera index {camera}")));
        }
        let (n0, n1) = query_histograms(image, &self.query)?;
        self.samples.push(TrainingSample { n0, n1, camera, gt });
        Ok(())
    }

    pub fn push_sample(&mut self, sample: TrainingSample) -> Result<()> {
        if sample.camera >= self.cameras.len() || sample.n0.spec() != &self.query {
            return Err(Error::Config("sample does not belong to this set".into()));
        }
        self.samples.push(sample);
        Ok(())
    }

    pub fn samples(&self) -> &[TrainingSample] {
        &self.samples
    }

    pub fn cameras(&self) -> &[CameraCalibration] {
        &self.cameras
    }

    pub fn locus_histogram(&self, camera: usize) -> &UvHistogram {
        &self.locus[camera]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainReport {
    /// Mean training loss (degrees) of each epoch.
    pub epoch_losses: Vec<f64>,
    pub steps: usize,
}

/// Records the mean angular loss of `indices` on a fresh tape. Samples of
/// one camera share a single encoder pass.
fn record_batch(model: &CcmModel, data: &TrainingSet, indices: &[usize]) -> Result<(Tape, Var)> {
    let cfg = &model.config;
    if data.query != cfg.query || data.locus_bins != cfg.encoder.input_bins {
        return Err(Error::Config("training set histograms do not match the model".into()));
    }
    let mut tape = Tape::new();
    let mut fingerprints: HashMap<usize, Var> = HashMap::new();
    let mut losses = Vec::with_capacity(indices.len());
    for &i in indices {
        let s = &data.samples[i];
        let fp = match fingerprints.get(&s.camera) {
            Some(v) => *v,
            None => {
                let h = tape.constant(data.locus[s.camera].to_tensor());
                let v = encode_on_tape(&mut tape, &model.params, &cfg.encoder, h)?;
                fingerprints.insert(s.camera, v);
                v
            }
        };
        let n0 = tape.constant(s.n0.to_tensor());
        let n1 = tape.constant(s.n1.to_tensor());
        let (f0, f1, b) = backbone_on_tape(&mut tape, &model.params, &cfg.backbone, n0, n1, fp)?;
        let p = ccc_on_tape(&mut tape, n0, n1, f0, f1, b)?;
        let rgb = rgb_on_tape(&mut tape, p, &cfg.query)?;
        losses.push(tape.angle_deg(rgb, s.gt.to_array())?);
    }
    let loss = tape.mean(&losses)?;
    Ok((tape, loss))
}

/// Mean angular error (degrees) of the given samples.
pub fn batch_loss(model: &CcmModel, data: &TrainingSet, indices: &[usize]) -> Result<f64> {
    let (tape, loss) = record_batch(model, data, indices)?;
    Ok(tape.value(loss).item())
}

/// Mean angular error of the given samples; gradients are accumulated into
/// the model's parameter store.
pub fn batch_loss_and_grad(model: &mut CcmModel, data: &TrainingSet, indices: &[usize]) -> Result<f64> {
    let (mut tape, loss) = record_batch(model, data, indices)?;
    let value = tape.value(loss).item();
    if !value.is_finite() {
        return Err(Error::Training(format!("non-finite loss {value}")));
    }
    tape.backward(loss, &mut model.params)?;
    Ok(value)
}

/// Adam on mini-batches of the mean angular error, shuffled each epoch by
/// a stream seeded from `cfg.seed`. `on_epoch` sees `(epoch, mean loss)`.
pub fn train(
    model: &mut CcmModel,
    data: &TrainingSet,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(usize, f64),
) -> Result<TrainReport> {
    cfg.validate()?;
    if data.is_empty() {
        return Err(Error::Config("training set is empty".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut report = TrainReport::default();
    for epoch in 0..cfg.epochs {
        let adam = AdamConfig::with_lr(cfg.lr_at(epoch));
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let loss = batch_loss_and_grad(model, data, batch).map_err(|e| match e {
                Error::Training(m) => Error::Training(format!("epoch {epoch}: {m}")),
                other => other,
            })?;
            adam_step(&mut model.params, &adam)?;
            total += loss * batch.len() as f64;
            report.steps += 1;
        }
        let mean = total / data.len() as f64;
        report.epoch_losses.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(report)
}
