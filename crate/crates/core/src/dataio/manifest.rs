//! Dataset manifests.
//!
//! ```text
//! # image_path, r, g, b, camera_id
//! images/cam00_0000.pfm, 0.41, 1.0, 0.62, cam00
//!
//! [cameras]
//! cam00 = cameras/cam00.txt
//! ```
//!
//! Relative paths resolve against the manifest's directory. Loading checks
//! that every file exists and every referenced camera has a calibration.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use crate::colorimetry::{CameraCalibration, RgbColor};
use crate::error::{Error, Result};
use crate::histogram::RawImage;

use super::metadata::load_camera_metadata;
use super::pfm::read_pfm;

#[derive(Clone, Debug, PartialEq)]
pub struct ManifestEntry {
    pub image_path: PathBuf,
    pub gt: RgbColor,
    pub camera_id: String,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DatasetManifest {
    /// Records in file order, paths resolved.
    pub entries: Vec<ManifestEntry>,
    /// Metadata file of each camera, resolved.
    pub camera_files: BTreeMap<String, PathBuf>,
    pub calibrations: BTreeMap<String, CameraCalibration>,
}

impl DatasetManifest {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn calibration(&self, camera_id: &str) -> Result<&CameraCalibration> {
        self.calibrations
            .get(camera_id)
            .ok_or_else(|| Error::Load(format!("camera {camera_id} has no metadata")))
    }

    pub fn load_image(&self, index: usize) -> Result<RawImage> {
        read_pfm(&self.entries[index].image_path)
    }

    /// Camera ids in first-appearance order of the records.
    pub fn camera_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = Vec::new();
        for e in &self.entries {
            if !ids.contains(&e.camera_id) {
                ids.push(e.camera_id.clone());
            }
        }
        ids
    }
}

fn resolve(base: &Path, p: &str) -> PathBuf {
    let p = Path::new(p);
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses manifest text without touching the filesystem beyond resolving
/// paths against `base`.
pub fn parse_manifest(
    text: &str,
    origin: &str,
    base: &Path,
) -> Result<(Vec<ManifestEntry>, BTreeMap<String, PathBuf>)> {
    let load = |line: usize, msg: String| Error::Load(format!("{origin}:{line}: {msg}"));
    let mut entries = Vec::new();
    let mut cameras = BTreeMap::new();
    let mut in_cameras = false;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        if line.starts_with('[') {
            if line != "[cameras]" {
                return Err(load(i + 1, format!("unknown section {line}")));
            }
            in_cameras = true;
            continue;
        }
        if in_cameras {
            let (id, path) = line
                .split_once('=')
                .ok_or_else(|| load(i + 1, format!("expected `camera_id = path`, got {line:?}")))?;
            let id = id.trim().to_string();
            if cameras.insert(id.clone(), resolve(base, path.trim())).is_some() {
                return Err(load(i + 1, format!("camera {id} listed twice")));
            }
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        if fields.len() != 5 {
            return Err(load(i + 1, format!("expected 5 comma-separated fields, got {}", fields.len())));
        }
        let mut rgb = [0.0; 3];
        for (k, f) in fields[1..4].iter().enumerate() {
            rgb[k] = f.parse().map_err(|_| load(i + 1, format!("illuminant value {f:?} is not a number")))?;
        }
        let gt = RgbColor::from_array(rgb);
        gt.check_illuminant().map_err(|e| load(i + 1, e.to_string()))?;
        if fields[4].is_empty() {
            return Err(load(i + 1, "empty camera id".into()));
        }
        entries.push(ManifestEntry {
            image_path: resolve(base, fields[0]),
            gt,
            camera_id: fields[4].to_string(),
        });
    }
    Ok((entries, cameras))
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let origin = path.display().to_string();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or(Path::new("."));
    let (entries, camera_files) = parse_manifest(&text, &origin, base)?;
    let mut calibrations = BTreeMap::new();
    for e in &entries {
        if !camera_files.contains_key(&e.camera_id) {
            return Err(Error::Load(format!(
                "{origin}: camera {} referenced by {} has no metadata entry",
                e.camera_id,
                e.image_path.display()
            )));
        }
        if !e.image_path.is_file() {
            return Err(Error::Load(format!("{origin}: image {} does not exist", e.image_path.display())));
        }
    }
    for (id, file) in &camera_files {
        if !file.is_file() {
            return Err(Error::Load(format!("{origin}: metadata {} for camera {id} does not exist", file.display())));
        }
        let mut cal = load_camera_metadata(file)?;
        // The manifest's id is authoritative for linking records.
        cal.camera_id = id.clone();
        calibrations.insert(id.clone(), cal);
    }
    Ok(DatasetManifest { entries, camera_files, calibrations })
}

fn relative_to(base: &Path, p: &Path) -> String {
    p.strip_prefix(base).unwrap_or(p).display().to_string()
}

/// Manifest text with paths written relative to `base` where possible.
pub fn format_manifest(
    entries: &[ManifestEntry],
    camera_files: &BTreeMap<String, PathBuf>,
    base: &Path,
) -> String {
    let mut s = String::from("# image_path, r, g, b, camera_id\n");
    for e in entries {
        let _ = writeln!(
            s,
            "{}, {:?}, {:?}, {:?}, {}",
            relative_to(base, &e.image_path),
            e.gt.r,
            e.gt.g,
            e.gt.b,
            e.camera_id
        );
    }
    s.push_str("\n[cameras]\n");
    for (id, p) in camera_files {
        let _ = writeln!(s, "{id} = {}", relative_to(base, p));
    }
    s
}

pub fn write_manifest(
    path: impl AsRef<Path>,
    entries: &[ManifestEntry],
    camera_files: &BTreeMap<String, PathBuf>,
) -> Result<()> {
    let path = path.as_ref();
    let base = path.parent().unwrap_or(Path::new("."));
    std::fs::write(path, format_manifest(entries, camera_files, base)).map_err(|e| Error::io(path, e))
}
