//! Camera-to-camera mapping and imaginary-camera synthesis.
//!
//! Training images are white balanced and lifted to XYZ with their camera's
//! forward matrix. A pooled XYZ scene is then re-rendered into a camera's raw
//! space under an illuminant drawn from that camera's illuminant curve.
//! Imaginary cameras blend two such renderings, their ground truths and
//! their calibrations with one weight `α`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::colorimetry::{
    illuminant_raw_to_xyz_cct, interpolate_ccm, CameraCalibration, Cct, ColorMatrix3, MatrixKind, RgbColor,
};
use crate::dataio::{write_camera_metadata, write_manifest, write_pfm, DatasetManifest, ManifestEntry};
use crate::error::{domain, Error, Result};
use crate::estimator::TrainingSet;
use crate::histogram::{rgb_to_uv, uv_to_rgb, HistogramSpec, RawImage, UvChroma};

/// Standard deviation of the `v` jitter around the fitted illuminant curve.
pub const DEFAULT_JITTER_SIGMA: f64 = 0.02;

fn green_normalized(illum: RgbColor) -> Result<RgbColor> {
    illum.check_illuminant()?;
    Ok(illum.scale(1.0 / illum.g))
}

/// Divides each channel by the green-normalized illuminant. The saturation
/// level is kept.
pub fn white_balance(image: &RawImage, illum: RgbColor) -> Result<RawImage> {
    let l = green_normalized(illum)?;
    image.map_pixels(|p| [p[0] / l.r, p[1], p[2] / l.b])
}

/// Inverse of [`white_balance`].
pub fn tint(image: &RawImage, illum: RgbColor) -> Result<RawImage> {
    let l = green_normalized(illum)?;
    image.map_pixels(|p| [p[0] * l.r, p[1], p[2] * l.b])
}

/// White-balanced scene in XYZ.
#[derive(Clone, Debug, PartialEq)]
pub struct XyzImage {
    pub width: usize,
    pub height: usize,
    /// Interleaved XYZ, row-major from the top. Finite and non-negative.
    pub pixels: Vec<f64>,
    pub source_camera_id: String,
    pub source_cct: Cct,
    pub saturation_level: f64,
}

/// White balances `image` by `gt` and maps it through the forward matrix
/// interpolated at the illuminant's CCT. Negative XYZ values, which only
/// out-of-gamut real data produces, are clamped to zero.
pub fn to_xyz_image(image: &RawImage, gt: RgbColor, cal: &CameraCalibration) -> Result<XyzImage> {
    let sol = illuminant_raw_to_xyz_cct(gt, cal)?;
    let fm = interpolate_ccm(sol.cct, cal, MatrixKind::ForwardMatrix)?;
    let wb = white_balance(image, gt)?;
    let pixels = wb
        .iter_pixels()
        .flat_map(|p| fm.mul_vec(p).map(|v| v.max(0.0)))
        .collect();
    Ok(XyzImage {
        width: image.width(),
        height: image.height(),
        pixels,
        source_camera_id: cal.camera_id.clone(),
        source_cct: sol.cct,
        saturation_level: image.saturation_level(),
    })
}

/// Labeled raw image of a known camera.
#[derive(Clone, Debug, PartialEq)]
pub struct SourceSample {
    pub image: RawImage,
    pub gt: RgbColor,
    pub camera_id: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SourceSet {
    pub samples: Vec<SourceSample>,
    pub calibrations: BTreeMap<String, CameraCalibration>,
}

impl SourceSet {
    pub fn from_manifest(manifest: &DatasetManifest) -> Result<Self> {
        let samples = manifest
            .entries
            .iter()
            .enumerate()
            .map(|(i, e)| {
                Ok(SourceSample { image: manifest.load_image(i)?, gt: e.gt, camera_id: e.camera_id.clone() })
            })
            .collect::<Result<_>>()?;
        Ok(SourceSet { samples, calibrations: manifest.calibrations.clone() })
    }

    pub fn calibration(&self, camera_id: &str) -> Result<&CameraCalibration> {
        self.calibrations
            .get(camera_id)
            .ok_or_else(|| Error::Load(format!("camera {camera_id} has no calibration")))
    }

    /// Camera ids with at least one sample, sorted.
    pub fn camera_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.samples.iter().map(|s| s.camera_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct XyzPool {
    pub images: Vec<XyzImage>,
    /// Index into the source set of each pooled image.
    pub source_index: Vec<usize>,
    /// Sources whose illuminant fixed point failed.
    pub skipped: usize,
}

/// Lifts every sample to XYZ. Fixed-point failures skip the image with a
/// warning; other errors abort.
pub fn build_xyz_pool(source: &SourceSet) -> Result<XyzPool> {
    let mut pool = XyzPool { images: Vec::new(), source_index: Vec::new(), skipped: 0 };
    for (i, s) in source.samples.iter().enumerate() {
        match to_xyz_image(&s.image, s.gt, source.calibration(&s.camera_id)?) {
            Ok(x) => {
                pool.images.push(x);
                pool.source_index.push(i);
            }
            Err(e @ (Error::Convergence { .. } | Error::Numeric(_))) => {
                log::warn!("skipping sample {i} ({}): {e}", s.camera_id);
                pool.skipped += 1;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(pool)
}

pub fn to_xyz_pool(manifest: &DatasetManifest) -> Result<XyzPool> {
    build_xyz_pool(&SourceSet::from_manifest(manifest)?)
}

/// Cubic `v(u)` through a camera's ground-truth illuminants.
#[derive(Clone, Debug, PartialEq)]
pub struct IlluminantPool {
    pub camera_id: String,
    pub gt_illuminants: Vec<RgbColor>,
    /// `[c0, c1, c2, c3]` of `v = c0 + c1·u + c2·u² + c3·u³`.
    pub poly_coeffs: [f64; 4],
    pub u_range: (f64, f64),
    pub jitter_sigma: f64,
    pub residual_rms: f64,
}

impl IlluminantPool {
    pub fn eval(&self, u: f64) -> f64 {
        let c = &self.poly_coeffs;
        c[0] + u * (c[1] + u * (c[2] + u * c[3]))
    }
}

/// Least-squares cubic through the illuminants' uv. Needs four distinct
/// `u` values.
pub fn fit_illuminant_poly(
    camera_id: impl Into<String>,
    gts: &[RgbColor],
    jitter_sigma: f64,
) -> Result<IlluminantPool> {
    if !(jitter_sigma >= 0.0) || !jitter_sigma.is_finite() {
        return domain(format!("jitter sigma {jitter_sigma} must be non-negative"));
    }
    let uv: Vec<UvChroma> = gts.iter().map(|c| rgb_to_uv(*c)).collect::<Result<_>>()?;
    let mut us: Vec<f64> = uv.iter().map(|p| p.u).collect();
    us.sort_by(f64::total_cmp);
    us.dedup();
    if us.len() < 4 {
        return Err(Error::Fit(format!(
            "a cubic needs 4 distinct u values, got {} from {} illuminants",
            us.len(),
            gts.len()
        )));
    }
    let a = DMatrix::from_fn(uv.len(), 4, |r, c| uv[r].u.powi(c as i32));
    let b = DVector::from_iterator(uv.len(), uv.iter().map(|p| p.v));
    let x = a
        .clone()
        .svd(true, true)
        .solve(&b, 1e-14)
        .map_err(|e| Error::Fit(e.to_string()))?;
    let residual = &a * &x - &b;
    let poly_coeffs = [x[0], x[1], x[2], x[3]];
    if poly_coeffs.iter().any(|c| !c.is_finite()) {
        return Err(Error::Fit("cubic fit is not finite".into()));
    }
    Ok(IlluminantPool {
        camera_id: camera_id.into(),
        gt_illuminants: gts.to_vec(),
        poly_coeffs,
        u_range: (us[0], us[us.len() - 1]),
        jitter_sigma,
        residual_rms: (residual.norm_squared() / uv.len() as f64).sqrt(),
    })
}

/// `u` uniform over the fitted range, `v` on the curve plus Gaussian jitter.
/// The result has green = 1.
pub fn sample_augmented_illuminant<R: Rng + ?Sized>(pool: &IlluminantPool, rng: &mut R) -> RgbColor {
    let (lo, hi) = pool.u_range;
    let u = lo + (hi - lo) * rng.gen::<f64>();
    let z: f64 = rng.sample(StandardNormal);
    let v = pool.eval(u) + pool.jitter_sigma * z;
    uv_to_rgb(UvChroma::new(u, v))
}

/// The same physical illuminant seen by camera `b`.
pub fn map_illuminant(illum_a: RgbColor, cal_a: &CameraCalibration, cal_b: &CameraCalibration) -> Result<RgbColor> {
    let sol = illuminant_raw_to_xyz_cct(illum_a, cal_a)?;
    let cm = interpolate_ccm(sol.cct, cal_b, MatrixKind::ColorMatrix)?;
    Ok(RgbColor::from_array(cm.mul_vec(sol.xyz.to_array())))
}

/// Inverse forward matrix at `cct`, then the green-normalized illuminant
/// per pixel. Returns the image and its ground truth `illum_native`.
pub fn render_to_camera(
    xyz: &XyzImage,
    cal: &CameraCalibration,
    illum_native: RgbColor,
    cct: Cct,
) -> Result<(RawImage, RgbColor)> {
    let l = green_normalized(illum_native)?;
    let fm_inv = interpolate_ccm(cct, cal, MatrixKind::ForwardMatrix)?.inverse()?;
    let pixels = xyz
        .pixels
        .chunks_exact(3)
        .flat_map(|p| {
            let w = fm_inv.mul_vec([p[0], p[1], p[2]]);
            [w[0] * l.r, w[1], w[2] * l.b]
        })
        .collect();
    Ok((RawImage::new(xyz.width, xyz.height, pixels, xyz.saturation_level)?, illum_native))
}

/// Virtual sensor between two real cameras.
#[derive(Clone, Debug, PartialEq)]
pub struct ImaginaryCamera {
    pub cam_a_id: String,
    pub cam_b_id: String,
    pub alpha: f64,
    pub calibration: CameraCalibration,
}

fn check_alpha(alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return domain(format!("blend weight {alpha} must lie in [0, 1]"));
    }
    Ok(())
}

/// Entrywise `α·A + (1−α)·B` of all four matrices. Both cameras must share
/// calibration temperatures.
pub fn blend_calibration(
    cal_a: &CameraCalibration,
    cal_b: &CameraCalibration,
    alpha: f64,
    camera_id: impl Into<String>,
) -> Result<CameraCalibration> {
    check_alpha(alpha)?;
    if cal_a.cct_low != cal_b.cct_low || cal_a.cct_high != cal_b.cct_high {
        return domain(format!(
            "cameras {} and {} use different calibration temperatures",
            cal_a.camera_id, cal_b.camera_id
        ));
    }
    let blend = |a: &ColorMatrix3, b: &ColorMatrix3| ColorMatrix3::blend(a, b, alpha);
    CameraCalibration::with_ccts(
        camera_id,
        blend(&cal_a.cm_low, &cal_b.cm_low),
        blend(&cal_a.cm_high, &cal_b.cm_high),
        blend(&cal_a.fm_low, &cal_b.fm_low),
        blend(&cal_a.fm_high, &cal_b.fm_high),
        cal_a.cct_low,
        cal_a.cct_high,
    )
}

pub fn imaginary_camera(cal_a: &CameraCalibration, cal_b: &CameraCalibration, alpha: f64) -> Result<ImaginaryCamera> {
    let id = format!("{}+{}@{alpha}", cal_a.camera_id, cal_b.camera_id);
    Ok(ImaginaryCamera {
        cam_a_id: cal_a.camera_id.clone(),
        cam_b_id: cal_b.camera_id.clone(),
        alpha,
        calibration: blend_calibration(cal_a, cal_b, alpha, id)?,
    })
}

/// Pixelwise, ground-truth and calibration blends with weight `α` on A.
/// `α = 1` returns A's image, ground truth and matrices bit for bit.
pub fn synthesize_imaginary(
    pair_a: &RawImage,
    pair_b: &RawImage,
    gt_a: RgbColor,
    gt_b: RgbColor,
    cal_a: &CameraCalibration,
    cal_b: &CameraCalibration,
    alpha: f64,
) -> Result<(RawImage, RgbColor, CameraCalibration)> {
    check_alpha(alpha)?;
    if pair_a.width() != pair_b.width() || pair_a.height() != pair_b.height() {
        return Err(Error::Shape(format!(
            "cannot blend a {}×{} image with a {}×{} image",
            pair_a.width(),
            pair_a.height(),
            pair_b.width(),
            pair_b.height()
        )));
    }
    let mix = |a: f64, b: f64| alpha * a + (1.0 - alpha) * b;
    let pixels = pair_a.pixels().iter().zip(pair_b.pixels()).map(|(a, b)| mix(*a, *b)).collect();
    let sat = if alpha == 1.0 {
        pair_a.saturation_level()
    } else {
        pair_a.saturation_level().max(pair_b.saturation_level())
    };
    let image = RawImage::new(pair_a.width(), pair_a.height(), pixels, sat)?;
    let gt = RgbColor::new(mix(gt_a.r, gt_b.r), mix(gt_a.g, gt_b.g), mix(gt_a.b, gt_b.b));
    let cam = imaginary_camera(cal_a, cal_b, alpha)?;
    Ok((image, gt, cam.calibration))
}

/// Which augmentation arm to train with.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum AlphaMode {
    /// Original data only.
    #[default]
    None,
    /// Camera-to-camera mapping into real cameras.
    One,
    /// Imaginary cameras with `α ~ U(0, 1)` per sample.
    Uniform,
}

impl FromStr for AlphaMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(AlphaMode::None),
            "one" => Ok(AlphaMode::One),
            "uniform" => Ok(AlphaMode::Uniform),
            other => Err(Error::Config(format!("unknown alpha mode {other:?}; expected none, one or uniform"))),
        }
    }
}

impl fmt::Display for AlphaMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            AlphaMode::None => "none",
            AlphaMode::One => "one",
            AlphaMode::Uniform => "uniform",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentConfig {
    pub mode: AlphaMode,
    /// Number of generated samples; `None` matches the source set size.
    pub count: Option<usize>,
    pub jitter_sigma: f64,
    pub seed: u64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig { mode: AlphaMode::Uniform, count: None, jitter_sigma: DEFAULT_JITTER_SIGMA, seed: 0 }
    }
}

/// Where an augmented sample came from.
#[derive(Clone, Debug, PartialEq)]
pub struct Provenance {
    /// Source-set index of the XYZ scene.
    pub source_index: usize,
    pub camera_a: String,
    pub camera_b: String,
    pub alpha: f64,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedSample {
    pub image: RawImage,
    pub gt: RgbColor,
    pub calibration: CameraCalibration,
    pub provenance: Provenance,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct AugmentedSet {
    pub samples: Vec<AugmentedSample>,
    /// Source images dropped from the XYZ pool.
    pub pool_skipped: usize,
    /// Draws rejected for a failed fixed point or an image without usable pixels.
    pub rejected_draws: usize,
}

const MAX_DRAWS_PER_SAMPLE: usize = 50;

fn draw_sample(
    source: &SourceSet,
    pool: &XyzPool,
    illum_pools: &BTreeMap<String, IlluminantPool>,
    ids: &[String],
    mode: AlphaMode,
    seed: u64,
    rng: &mut ChaCha8Rng,
) -> Result<AugmentedSample> {
    let k = rng.gen_range(0..pool.images.len());
    let scene = &pool.images[k];
    let id_a = &ids[rng.gen_range(0..ids.len())];
    let id_b = &ids[rng.gen_range(0..ids.len())];
    let alpha = match mode {
        AlphaMode::Uniform => rng.gen::<f64>(),
        _ => 1.0,
    };
    let cal_a = source.calibration(id_a)?;
    let cal_b = source.calibration(id_b)?;
    let illum_a = sample_augmented_illuminant(&illum_pools[id_a], rng);
    let sol = illuminant_raw_to_xyz_cct(illum_a, cal_a)?;
    let (img_a, gt_a) = render_to_camera(scene, cal_a, illum_a, sol.cct)?;
    let (image, gt, calibration) = if mode == AlphaMode::Uniform {
        let illum_b = green_normalized(RgbColor::from_array(
            interpolate_ccm(sol.cct, cal_b, MatrixKind::ColorMatrix)?.mul_vec(sol.xyz.to_array()),
        ))?;
        let (img_b, gt_b) = render_to_camera(scene, cal_b, illum_b, sol.cct)?;
        synthesize_imaginary(&img_a, &img_b, gt_a, gt_b, cal_a, cal_b, alpha)?
    } else {
        (img_a, gt_a, cal_a.clone())
    };
    gt.check_illuminant()?;
    if !image.iter_pixels().any(|p| image.is_valid_pixel(p)) {
        return Err(Error::Estimation("augmented image has no usable pixels".into()));
    }
    Ok(AugmentedSample {
        image,
        gt,
        calibration,
        provenance: Provenance {
            source_index: pool.source_index[k],
            camera_a: id_a.clone(),
            camera_b: if mode == AlphaMode::Uniform { id_b.clone() } else { id_a.clone() },
            alpha,
            seed,
        },
    })
}

/// Generates new samples from pooled XYZ scenes and per-camera illuminant
/// curves. Sample `i` draws from its own stream of `cfg.seed`, so output is
/// independent of scheduling. `AlphaMode::None` yields an empty set.
pub fn augment_dataset(source: &SourceSet, cfg: &AugmentConfig) -> Result<AugmentedSet> {
    let mut out = AugmentedSet::default();
    if cfg.mode == AlphaMode::None {
        return Ok(out);
    }
    let ids = source.camera_ids();
    let mut illum_pools = BTreeMap::new();
    for id in &ids {
        let gts: Vec<RgbColor> = source.samples.iter().filter(|s| &s.camera_id == id).map(|s| s.gt).collect();
        illum_pools.insert(id.clone(), fit_illuminant_poly(id.clone(), &gts, cfg.jitter_sigma)?);
    }
    let pool = build_xyz_pool(source)?;
    out.pool_skipped = pool.skipped;
    if pool.images.is_empty() {
        return Err(Error::Config("no source image could be lifted to XYZ".into()));
    }
    let count = cfg.count.unwrap_or(source.samples.len());
    for i in 0..count {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(i as u64);
        let mut drawn = None;
        for _ in 0..MAX_DRAWS_PER_SAMPLE {
            match draw_sample(source, &pool, &illum_pools, &ids, cfg.mode, cfg.seed, &mut rng) {
                Ok(s) => {
                    drawn = Some(s);
                    break;
                }
                Err(Error::Convergence { .. } | Error::Numeric(_) | Error::Estimation(_) | Error::Domain(_)) => {
                    out.rejected_draws += 1;
                }
                Err(e) => return Err(e),
            }
        }
        out.samples.push(drawn.ok_or_else(|| {
            Error::Numeric(format!("augmented sample {i}: no valid draw in {MAX_DRAWS_PER_SAMPLE} attempts"))
        })?);
    }
    Ok(out)
}

/// Writes images, one metadata file per sample calibration, `manifest.txt`
/// and `provenance.csv` under `dir`; returns the manifest path.
pub fn write_augmented_dataset(set: &AugmentedSet, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["cameras", "images"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::new();
    let mut camera_files = BTreeMap::new();
    let mut prov = String::from("index,image_path,source_index,camera_a,camera_b,alpha,seed\n");
    for (i, s) in set.samples.iter().enumerate() {
        let id = format!("aug{i:05}");
        let meta = dir.join("cameras").join(format!("{id}.txt"));
        let mut cal = s.calibration.clone();
        cal.camera_id = id.clone();
        write_camera_metadata(&meta, &cal)?;
        camera_files.insert(id.clone(), meta);
        let name = format!("images/{id}.pfm");
        write_pfm(dir.join(&name), &s.image)?;
        let p = &s.provenance;
        prov.push_str(&format!(
            "{i},{name},{},{},{},{:.6},{}\n",
            p.source_index, p.camera_a, p.camera_b, p.alpha, p.seed
        ));
        entries.push(ManifestEntry { image_path: dir.join(&name), gt: s.gt, camera_id: id });
    }
    let manifest = dir.join("manifest.txt");
    write_manifest(&manifest, &entries, &camera_files)?;
    let prov_path = dir.join("provenance.csv");
    std::fs::write(&prov_path, prov).map_err(|e| Error::io(&prov_path, e))?;
    Ok(manifest)
}

/// Every source image followed by the samples `augment_dataset` draws under
/// `cfg`. Equal calibrations share one camera slot; slots follow first use.
pub fn augmented_training_set(
    source: &SourceSet,
    cfg: &AugmentConfig,
    query: HistogramSpec,
    locus_bins: usize,
) -> Result<(TrainingSet, AugmentedSet)> {
    let mut set = TrainingSet::new(query, locus_bins);
    let slot = |set: &mut TrainingSet, cal: &CameraCalibration| -> Result<usize> {
        match set.cameras().iter().position(|c| c == cal) {
            Some(i) => Ok(i),
            None => set.add_camera(cal.clone()),
        }
    };
    for s in &source.samples {
        let i = slot(&mut set, source.calibration(&s.camera_id)?)?;
        set.add_image(&s.image, s.gt, i)?;
    }
    let aug = augment_dataset(source, cfg)?;
    for s in &aug.samples {
        let i = slot(&mut set, &s.calibration)?;
        set.add_image(&s.image, s.gt, i)?;
    }
    Ok((set, aug))
}
