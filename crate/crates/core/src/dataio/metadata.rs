//! Camera calibration sidecar files.
//!
//! ```text
//! camera_id = cam00
//! cm1 = m00 m01 m02 m10 m11 m12 m20 m21 m22
//! cm2 = ...
//! fm1 = ...
//! fm2 = ...
//! calib1_cct = 2856
//! calib2_cct = 6504
//! ```
//!
//! `cm1`/`fm1` belong to the low calibration temperature and `cm2`/`fm2`
//! to the high one. Blank lines and `#` comments are ignored. Without a
//! `camera_id` line the file stem is used.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::colorimetry::{CameraCalibration, Cct, ColorMatrix3, DEFAULT_CCT_HIGH, DEFAULT_CCT_LOW};
use crate::error::{Error, Result};

pub fn parse_camera_metadata(text: &str, origin: &str, default_id: &str) -> Result<CameraCalibration> {
    let load = |line: usize, msg: String| Error::Load(format!("{origin}:{line}: {msg}"));
    let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| load(i + 1, format!("expected `key = value`, got {line:?}")))?;
        let key = key.trim().to_string();
        if fields.insert(key.clone(), (i + 1, value.trim().to_string())).is_some() {
            return Err(load(i + 1, format!("duplicate key {key}")));
        }
    }
    let matrix = |key: &str| -> Result<ColorMatrix3> {
        let (line, value) = fields
            .get(key)
            .ok_or_else(|| Error::Load(format!("{origin}: missing {key}")))?;
        let vals: Vec<f64> = value
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| load(*line, format!("{key}: {t:?} is not a number"))))
            .collect::<Result<_>>()?;
        if vals.len() != 9 || vals.iter().any(|v| !v.is_finite()) {
            return Err(load(*line, format!("{key} needs nine finite values, got {}", vals.len())));
        }
        ColorMatrix3::from_row_slice(&vals)
    };
    let cct = |key: &str, default: f64| -> Result<Cct> {
        match fields.get(key) {
            None => Cct::new(default),
            Some((line, v)) => {
                let k: f64 = v.parse().map_err(|_| load(*line, format!("{key}: {v:?} is not a number")))?;
                Cct::new(k).map_err(|e| load(*line, e.to_string()))
            }
        }
    };
    for key in fields.keys() {
        if !["camera_id", "cm1", "cm2", "fm1", "fm2", "calib1_cct", "calib2_cct"].contains(&key.as_str()) {
            return Err(Error::Load(format!("{origin}: unknown key {key}")));
        }
    }
    let id = fields.get("camera_id").map(|(_, v)| v.clone()).unwrap_or_else(|| default_id.to_string());
    CameraCalibration::with_ccts(
        id,
        matrix("cm1")?,
        matrix("cm2")?,
        matrix("fm1")?,
        matrix("fm2")?,
        cct("calib1_cct", DEFAULT_CCT_LOW)?,
        cct("calib2_cct", DEFAULT_CCT_HIGH)?,
    )
    .map_err(|e| Error::Load(format!("{origin}: {e}")))
}

pub fn load_camera_metadata(path: impl AsRef<Path>) -> Result<CameraCalibration> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("camera");
    parse_camera_metadata(&text, &path.display().to_string(), stem)
}

/// Values are written in shortest round-trip form, so reading back is exact.
pub fn format_camera_metadata(cal: &CameraCalibration) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "camera_id = {}", cal.camera_id);
    for (key, m) in [("cm1", &cal.cm_low), ("cm2", &cal.cm_high), ("fm1", &cal.fm_low), ("fm2", &cal.fm_high)] {
        let vals: Vec<String> = m.to_row_vec().iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "{key} = {}", vals.join(" "));
    }
    let _ = writeln!(s, "calib1_cct = {:?}", cal.cct_low.kelvin());
    let _ = writeln!(s, "calib2_cct = {:?}", cal.cct_high.kelvin());
    s
}

pub fn write_camera_metadata(path: impl AsRef<Path>, cal: &CameraCalibration) -> Result<()> {
    std::fs::write(&path, format_camera_metadata(cal)).map_err(|e| Error::io(&path, e))
}
