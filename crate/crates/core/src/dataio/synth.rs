//! Synthetic multi-camera datasets with exactly known calibrations.
//!
//! A camera is a pair of XYZ→raw responses `m_low`, `m_high` blended by
//! the reciprocal-temperature weight, so its color matrices interpolate
//! exactly. The illuminant at temperature `t` reads `ℓ_t = M_t·X_t` with
//! `X_t` the locus XYZ at `Y = 1`.
//!
//! Forward matrices are `FM_k = diag(X_k)⁻¹·M_k⁻¹·diag(ℓ_k)` at the two
//! endpoints, so `FM·1 = 1` and white maps to equal-energy XYZ. A surface
//! with white-balanced XYZ `s` renders to `ℓ_t ∘ FM_t⁻¹·s`. At the endpoints
//! this equals `M_k·(X_k ∘ s)`; everywhere it makes white balancing plus the
//! interpolated forward matrix recover `s` exactly, and a flat `s` renders
//! to a multiple of `ℓ_t`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::cfe::guidance_illuminants;
use crate::colorimetry::{
    cct_to_xy, interpolate_ccm, CameraCalibration, Cct, ColorMatrix3, MatrixKind, RgbColor,
    XyzColor, DEFAULT_CCT_HIGH, DEFAULT_CCT_LOW,
};
use crate::error::{Error, Result};
use crate::histogram::RawImage;

use super::manifest::{write_manifest, ManifestEntry};
use super::metadata::write_camera_metadata;
use super::pfm::write_pfm;

pub const SCENE_SIZE: usize = 32;
pub const SCENE_CCT_LOW: f64 = 2500.0;
pub const SCENE_CCT_HIGH: f64 = 7500.0;
pub const MIN_PATCHES: usize = 8;
pub const MAX_PATCHES: usize = 32;
/// Generated cameras keep every response matrix below this condition number.
pub const MAX_SYNTHETIC_CONDITION: f64 = 100.0;

const BASE_RESPONSE: [[f64; 3]; 3] = [[0.6, -0.1, -0.05], [-0.55, 1.4, 0.2], [-0.1, 0.2, 0.65]];
const RESPONSE_JITTER: f64 = 0.08;
const ENDPOINT_JITTER: f64 = 0.03;
const SCENE_CAST_SIGMA: f64 = 0.2;
const PATCH_CHROMA_SIGMA: f64 = 0.35;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample::<f64, _>(StandardNormal)
}

fn locus_xyz(t: Cct) -> Result<XyzColor> {
    let (x, y) = cct_to_xy(t)?;
    XyzColor::from_chromaticity(x, y)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCameraSpec {
    pub camera_id: String,
    pub m_low: ColorMatrix3,
    pub m_high: ColorMatrix3,
    pub seed: u64,
}

impl SyntheticCameraSpec {
    /// Draws a camera until its responses are well conditioned and every
    /// locus illuminant reads positive.
    pub fn random(camera_id: impl Into<String>, seed: u64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let camera_id = camera_id.into();
        for _ in 0..1000 {
            let gains = [rng.gen_range(0.5..0.9), 1.0, rng.gen_range(0.5..0.9)];
            let mut high = BASE_RESPONSE;
            for (i, row) in high.iter_mut().enumerate() {
                for v in row.iter_mut() {
                    *v = (*v + RESPONSE_JITTER * normal(rng)) * gains[i];
                }
            }
            let mut low = high;
            for row in low.iter_mut() {
                for v in row.iter_mut() {
                    *v += ENDPOINT_JITTER * normal(rng);
                }
            }
            let spec = SyntheticCameraSpec {
                camera_id: camera_id.clone(),
                m_low: ColorMatrix3(low),
                m_high: ColorMatrix3(high),
                seed,
            };
            if spec.is_usable() {
                return Ok(spec);
            }
        }
        Err(Error::Numeric("could not draw a well-conditioned synthetic camera".into()))
    }

    fn is_usable(&self) -> bool {
        let conditioned = [self.m_low, self.m_high]
            .iter()
            .all(|m| m.condition_number() < MAX_SYNTHETIC_CONDITION);
        conditioned
            && self.calibration().is_ok_and(|cal| {
                guidance_illuminants(&cal).is_ok()
                    && cal.fm_low.condition_number() < MAX_SYNTHETIC_CONDITION
                    && cal.fm_high.condition_number() < MAX_SYNTHETIC_CONDITION
            })
    }

    fn endpoint_ccts() -> (Cct, Cct) {
        (
            Cct::new(DEFAULT_CCT_LOW).expect("valid"),
            Cct::new(DEFAULT_CCT_HIGH).expect("valid"),
        )
    }

    /// XYZ→raw response at temperature `t`.
    pub fn response(&self, t: Cct) -> Result<ColorMatrix3> {
        let (lo, hi) = Self::endpoint_ccts();
        let g = crate::colorimetry::interpolation_weight(t, lo, hi)?;
        Ok(ColorMatrix3::blend(&self.m_low, &self.m_high, g))
    }

    pub fn illuminant(&self, t: Cct) -> Result<RgbColor> {
        Ok(RgbColor::from_array(self.response(t)?.mul_vec(locus_xyz(t)?.to_array())))
    }

    fn forward_matrix(&self, t: Cct) -> Result<ColorMatrix3> {
        let x = locus_xyz(t)?.to_array();
        let l = self.illuminant(t)?.to_array();
        let m_inv = self.response(t)?.inverse()?;
        Ok(ColorMatrix3::diag([1.0 / x[0], 1.0 / x[1], 1.0 / x[2]])
            .mul_mat(&m_inv)
            .mul_mat(&ColorMatrix3::diag(l)))
    }

    pub fn calibration(&self) -> Result<CameraCalibration> {
        let (lo, hi) = Self::endpoint_ccts();
        CameraCalibration::new(
            self.camera_id.clone(),
            self.m_low,
            self.m_high,
            self.forward_matrix(lo)?,
            self.forward_matrix(hi)?,
        )
    }

    /// Raw value of a surface with white-balanced XYZ `s` under the locus
    /// illuminant at `t`.
    pub fn render(&self, cal: &CameraCalibration, s: [f64; 3], t: Cct) -> Result<[f64; 3]> {
        let fm = interpolate_ccm(t, cal, MatrixKind::ForwardMatrix)?;
        let l = self.illuminant(t)?.to_array();
        let w = fm.solve(s)?;
        Ok([l[0] * w[0], l[1] * w[1], l[2] * w[2]])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticScene {
    pub image: RawImage,
    pub gt: RgbColor,
    pub cct: Cct,
    /// XYZ of every pixel after white balance by the green-normalized
    /// illuminant, interleaved like the image.
    pub xyz: Vec<f64>,
    /// Neutral patch as `[x0, y0, x1, y1)`.
    pub neutral: [usize; 4],
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticCamera {
    pub spec: SyntheticCameraSpec,
    pub calibration: CameraCalibration,
    pub scenes: Vec<SyntheticScene>,
}

fn random_rect(rng: &mut ChaCha8Rng, min: usize, max: usize) -> [usize; 4] {
    let w = rng.gen_range(min..=max);
    let h = rng.gen_range(min..=max);
    let x0 = rng.gen_range(0..=SCENE_SIZE - w);
    let y0 = rng.gen_range(0..=SCENE_SIZE - h);
    [x0, y0, x0 + w, y0 + h]
}

/// Mondrian of random rectangles with a neutral patch painted last, under
/// a random locus illuminant. Pixel peaks lie in `[0.2, 0.9]`, below
/// saturation. No noise is added.
pub fn synthesize_scene(
    spec: &SyntheticCameraSpec,
    cal: &CameraCalibration,
    rng: &mut ChaCha8Rng,
) -> Result<SyntheticScene> {
    let t = Cct::new(rng.gen_range(SCENE_CCT_LOW..SCENE_CCT_HIGH))?;
    let cast: [f64; 3] = std::array::from_fn(|_| SCENE_CAST_SIGMA * normal(rng));
    let n = rng.gen_range(MIN_PATCHES..=MAX_PATCHES);
    let mut patches: Vec<([f64; 3], [f64; 3])> = Vec::with_capacity(n);
    while patches.len() < n - 1 {
        let albedo = rng.gen_range(0.2..1.0);
        let s: [f64; 3] = std::array::from_fn(|c| albedo * (cast[c] + PATCH_CHROMA_SIGMA * normal(rng)).exp());
        let raw = spec.render(cal, s, t)?;
        let peak = raw.iter().cloned().fold(0.0, f64::max);
        // Rejects colors outside the camera's positive gamut.
        if raw.iter().all(|&c| c > 0.05 * peak) {
            patches.push((s, raw));
        }
    }
    let grey = rng.gen_range(0.3..1.0);
    let s = [grey; 3];
    patches.push((s, spec.render(cal, s, t)?));

    let mut label = vec![0usize; SCENE_SIZE * SCENE_SIZE];
    let mut neutral = [0; 4];
    for k in 1..n {
        let r = if k == n - 1 { random_rect(rng, 6, 12) } else { random_rect(rng, 3, 16) };
        for y in r[1]..r[3] {
            for x in r[0]..r[2] {
                label[y * SCENE_SIZE + x] = k;
            }
        }
        neutral = r;
    }
    let peak = label
        .iter()
        .flat_map(|&k| patches[k].1)
        .fold(0.0, f64::max);
    let scale = rng.gen_range(0.2..0.9) / peak;
    let gt = spec.illuminant(t)?;
    // White balance divides by the green-normalized illuminant.
    let xyz_scale = scale * gt.g;
    let mut pixels = Vec::with_capacity(label.len() * 3);
    let mut xyz = Vec::with_capacity(label.len() * 3);
    for &k in &label {
        let (s, raw) = &patches[k];
        pixels.extend(raw.iter().map(|v| v * scale));
        xyz.extend(s.iter().map(|v| v * xyz_scale));
    }
    Ok(SyntheticScene {
        image: RawImage::new(SCENE_SIZE, SCENE_SIZE, pixels, 1.0)?,
        gt,
        cct: t,
        xyz,
        neutral,
    })
}

pub fn camera_id(index: usize) -> String {
    format!("cam{index:02}")
}

/// Camera `index` of the dataset seeded by `seed`. The camera and its
/// scene sequence come from separate streams, so a camera and its first
/// scenes do not depend on how many cameras or scenes are requested.
pub fn synthesize_camera(index: usize, scenes: usize, seed: u64) -> Result<SyntheticCamera> {
    let mut cam_rng = ChaCha8Rng::seed_from_u64(seed);
    cam_rng.set_stream(2 * index as u64);
    let spec = SyntheticCameraSpec::random(camera_id(index), seed, &mut cam_rng)?;
    let calibration = spec.calibration()?;
    let mut scene_rng = ChaCha8Rng::seed_from_u64(seed);
    scene_rng.set_stream(2 * index as u64 + 1);
    let scenes = (0..scenes)
        .map(|_| synthesize_scene(&spec, &calibration, &mut scene_rng))
        .collect::<Result<_>>()?;
    Ok(SyntheticCamera { spec, calibration, scenes })
}

pub fn synthesize_dataset(n_cameras: usize, scenes_per_camera: usize, seed: u64) -> Result<Vec<SyntheticCamera>> {
    if n_cameras == 0 {
        return Err(Error::Config("a synthetic dataset needs at least one camera".into()));
    }
    (0..n_cameras).map(|i| synthesize_camera(i, scenes_per_camera, seed)).collect()
}

/// Writes `manifest.txt`, `cameras/<id>.txt` and `images/<id>_<k>.pfm`
/// under `dir`; returns the manifest path.
pub fn write_synthetic_dataset(cameras: &[SyntheticCamera], dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    for sub in ["cameras", "images"] {
        let p = dir.join(sub);
        std::fs::create_dir_all(&p).map_err(|e| Error::io(&p, e))?;
    }
    let mut entries = Vec::new();
    let mut camera_files = BTreeMap::new();
    for cam in cameras {
        let id = &cam.spec.camera_id;
        let meta = dir.join("cameras").join(format!("{id}.txt"));
        write_camera_metadata(&meta, &cam.calibration)?;
        camera_files.insert(id.clone(), meta);
        for (k, scene) in cam.scenes.iter().enumerate() {
            let path = dir.join("images").join(format!("{id}_{k:04}.pfm"));
            write_pfm(&path, &scene.image)?;
            entries.push(ManifestEntry { image_path: path, gt: scene.gt, camera_id: id.clone() });
        }
    }
    let manifest = dir.join("manifest.txt");
    write_manifest(&manifest, &entries, &camera_files)?;
    Ok(manifest)
}

pub fn generate_synthetic_dataset(
    n_cameras: usize,
    scenes_per_camera: usize,
    seed: u64,
    dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    write_synthetic_dataset(&synthesize_dataset(n_cameras, scenes_per_camera, seed)?, dir)
}
