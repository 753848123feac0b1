//! Illuminant estimation: hypernetwork, histogram filtering, training and
//! checkpoints.

pub mod ccc;
pub mod checkpoint;
pub mod model;
pub mod train;

pub use ccc::{
    angular_error, apply_ccc, heatmap_centroid, ccc_on_tape, rgb_on_tape, Heatmap,
    IlluminantEstimate,
};
pub use checkpoint::{load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint};
pub use model::{backbone_forward, backbone_on_tape, BackboneConfig, CccKernel, CcmModel, ModelConfig};
pub use train::{batch_loss, batch_loss_and_grad, train, TrainConfig, TrainReport, TrainingSample, TrainingSet};

use crate::cfe::CameraFingerprint;
use crate::colorimetry::CameraCalibration;
use crate::error::{Error, Result};
use crate::histogram::{build_histogram, edge_image, HistogramSpec, RawImage, UvHistogram};

/// Image and edge-image histograms. An image with no usable pixel is an
/// estimation error; an empty edge histogram is allowed.
pub fn query_histograms(image: &RawImage, spec: &HistogramSpec) -> Result<(UvHistogram, UvHistogram)> {
    let n0 = build_histogram(image, spec)?;
    if n0.is_empty() {
        return Err(Error::Estimation(
            "no usable pixels: every pixel is dark or saturated".into(),
        ));
    }
    let n1 = build_histogram(&edge_image(image)?, spec)?;
    Ok((n0, n1))
}

pub fn estimate_from_histograms(
    model: &CcmModel,
    n0: &UvHistogram,
    n1: &UvHistogram,
    fingerprint: &CameraFingerprint,
) -> Result<IlluminantEstimate> {
    let k = model.kernel(n0, n1, fingerprint)?;
    IlluminantEstimate::from_heatmap(apply_ccc(n0, n1, &k)?)
}

pub fn estimate_with_fingerprint(
    image: &RawImage,
    fingerprint: &CameraFingerprint,
    model: &CcmModel,
) -> Result<IlluminantEstimate> {
    let (n0, n1) = query_histograms(image, &model.config.query)?;
    estimate_from_histograms(model, &n0, &n1, fingerprint)
}

pub fn estimate_illuminant(
    image: &RawImage,
    cal: &CameraCalibration,
    model: &CcmModel,
) -> Result<IlluminantEstimate> {
    estimate_with_fingerprint(image, &model.fingerprint(cal)?, model)
}
