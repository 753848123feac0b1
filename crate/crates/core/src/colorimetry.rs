//! Correlated color temperature, chromaticity, and calibration matrices.
//!
//! Two locus models are available. [`Locus::Daylight`] is the CIE daylight
//! (D-series) curve and is the default because it passes through D65 at
//! 6504 K. [`Locus::Planckian`] is the cubic-spline blackbody approximation
//! of Kim et al. Both inverse maps return the temperature of the nearest
//! locus point in xy, so `xy_to_cct(cct_to_xy(t)) == t` up to rounding.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};

/// Widest temperature range any locus model accepts.
pub const CCT_MIN: f64 = 1667.0;
pub const CCT_MAX: f64 = 25000.0;

pub const DEFAULT_CCT_LOW: f64 = 2856.0;
pub const DEFAULT_CCT_HIGH: f64 = 6504.0;

/// D65 chromaticity, the fixed-point seed.
pub const D65_XY: (f64, f64) = (0.3127, 0.3290);

/// Matrices with a larger 2-norm condition number are treated as singular.
pub const MAX_CONDITION: f64 = 1e8;

/// Largest xy distance from the locus accepted by [`xy_to_cct`].
pub const MAX_LOCUS_DISTANCE: f64 = 0.05;

pub const FIXED_POINT_TOLERANCE: f64 = 1e-6;
pub const FIXED_POINT_MAX_ITERATIONS: usize = 100;

#[derive(Clone, Copy, Debug, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct Cct(f64);

impl Cct {
    pub fn new(kelvin: f64) -> Result<Self> {
        if !kelvin.is_finite() || !(CCT_MIN..=CCT_MAX).contains(&kelvin) {
            return domain(format!(
                "CCT {kelvin} K outside the supported range [{CCT_MIN}, {CCT_MAX}] K"
            ));
        }
        Ok(Cct(kelvin))
    }

    pub fn kelvin(self) -> f64 {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct XyzColor {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl XyzColor {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        XyzColor { x, y, z }
    }

    /// Lifts a chromaticity to tristimulus values with `Y = 1`.
    pub fn from_chromaticity(x: f64, y: f64) -> Result<Self> {
        if !(y > 0.0) || !x.is_finite() {
            return domain(format!("chromaticity ({x}, {y}) has no Y = 1 lift"));
        }
        Ok(XyzColor::new(x / y, 1.0, (1.0 - x - y) / y))
    }

    pub fn chromaticity(&self) -> Result<(f64, f64)> {
        let s = self.x + self.y + self.z;
        if !(s.abs() > 0.0) || !s.is_finite() {
            return Err(Error::Numeric(format!("XYZ {self:?} has no chromaticity")));
        }
        Ok((self.x / s, self.y / s))
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        XyzColor::new(a[0], a[1], a[2])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RgbColor {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl RgbColor {
    pub fn new(r: f64, g: f64, b: f64) -> Self {
        RgbColor { r, g, b }
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.r, self.g, self.b]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        RgbColor::new(a[0], a[1], a[2])
    }

    pub fn norm(&self) -> f64 {
        (self.r * self.r + self.g * self.g + self.b * self.b).sqrt()
    }

    pub fn scale(&self, k: f64) -> Self {
        RgbColor::new(self.r * k, self.g * k, self.b * k)
    }

    /// Unit-length copy. Zero vectors stay zero.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n > 0.0 {
            self.scale(1.0 / n)
        } else {
            *self
        }
    }

    pub fn is_positive(&self) -> bool {
        self.r > 0.0 && self.g > 0.0 && self.b > 0.0
    }

    pub fn is_finite(&self) -> bool {
        self.r.is_finite() && self.g.is_finite() && self.b.is_finite()
    }

    /// Errors unless every channel is finite and strictly positive.
    pub fn check_illuminant(&self) -> Result<()> {
        if !self.is_finite() || !self.is_positive() {
            return domain(format!("illuminant {self:?} must have positive finite channels"));
        }
        Ok(())
    }
}

/// Row-major 3×3 matrix.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColorMatrix3(pub [[f64; 3]; 3]);

impl ColorMatrix3 {
    pub const IDENTITY: ColorMatrix3 =
        ColorMatrix3([[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]]);

    pub fn from_row_slice(v: &[f64]) -> Result<Self> {
        if v.len() != 9 {
            return Err(Error::Shape(format!("a 3×3 matrix needs 9 values, got {}", v.len())));
        }
        let mut m = [[0.0; 3]; 3];
        for (i, x) in v.iter().enumerate() {
            m[i / 3][i % 3] = *x;
        }
        Ok(ColorMatrix3(m))
    }

    pub fn to_row_vec(&self) -> Vec<f64> {
        self.0.iter().flatten().copied().collect()
    }

    pub fn rows(&self) -> &[[f64; 3]; 3] {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|v| v.is_finite())
    }

    pub fn mul_vec(&self, v: [f64; 3]) -> [f64; 3] {
        let m = &self.0;
        [
            m[0][0] * v[0] + m[0][1] * v[1] + m[0][2] * v[2],
            m[1][0] * v[0] + m[1][1] * v[1] + m[1][2] * v[2],
            m[2][0] * v[0] + m[2][1] * v[1] + m[2][2] * v[2],
        ]
    }

    pub fn mul_mat(&self, o: &ColorMatrix3) -> ColorMatrix3 {
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = (0..3).map(|k| self.0[i][k] * o.0[k][j]).sum();
            }
        }
        ColorMatrix3(out)
    }

    pub fn scale(&self, k: f64) -> ColorMatrix3 {
        ColorMatrix3(self.0.map(|r| r.map(|v| v * k)))
    }

    /// `g·a + (1 − g)·b`, entry-wise. `g = 1` returns `a` and `g = 0`
    /// returns `b` bit-exactly.
    pub fn blend(a: &ColorMatrix3, b: &ColorMatrix3, g: f64) -> ColorMatrix3 {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = g * a.0[i][j] + (1.0 - g) * b.0[i][j];
            }
        }
        ColorMatrix3(out)
    }

    pub fn diag(d: [f64; 3]) -> ColorMatrix3 {
        ColorMatrix3([[d[0], 0.0, 0.0], [0.0, d[1], 0.0], [0.0, 0.0, d[2]]])
    }

    fn to_na(self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.to_row_vec())
    }

    /// Ratio of largest to smallest singular value; infinite when singular.
    pub fn condition_number(&self) -> f64 {
        if !self.is_finite() {
            return f64::INFINITY;
        }
        let sv = self.to_na().singular_values();
        let max = sv.max();
        let min = sv.min();
        if min > 0.0 {
            max / min
        } else {
            f64::INFINITY
        }
    }

    /// Inverse, refused when the condition number exceeds [`MAX_CONDITION`].
    pub fn inverse(&self) -> Result<ColorMatrix3> {
        let cond = self.condition_number();
        if !(cond < MAX_CONDITION) {
            return Err(Error::Numeric(format!(
                "matrix is singular to working precision (condition number {cond:.3e})"
            )));
        }
        let inv = self
            .to_na()
            .try_inverse()
            .ok_or_else(|| Error::Numeric("matrix is not invertible".into()))?;
        let mut out = [[0.0; 3]; 3];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in row.iter_mut().enumerate() {
                *v = inv[(i, j)];
            }
        }
        Ok(ColorMatrix3(out))
    }

    /// Solves `self · x = rhs`.
    pub fn solve(&self, rhs: [f64; 3]) -> Result<[f64; 3]> {
        let cond = self.condition_number();
        if !(cond < MAX_CONDITION) {
            return Err(Error::Numeric(format!(
                "matrix is singular to working precision (condition number {cond:.3e})"
            )));
        }
        let lu = self.to_na().lu();
        let x = lu
            .solve(&Vector3::new(rhs[0], rhs[1], rhs[2]))
            .ok_or_else(|| Error::Numeric("matrix is not invertible".into()))?;
        Ok([x[0], x[1], x[2]])
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MatrixKind {
    ColorMatrix,
    ForwardMatrix,
}

/// Two-illuminant calibration of one camera. `cm_*` map XYZ to raw,
/// `fm_*` map white-balanced raw to XYZ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CameraCalibration {
    pub camera_id: String,
    pub cm_low: ColorMatrix3,
    pub cm_high: ColorMatrix3,
    pub fm_low: ColorMatrix3,
    pub fm_high: ColorMatrix3,
    pub cct_low: Cct,
    pub cct_high: Cct,
}

impl CameraCalibration {
    /// Validated calibration at the standard 2856 K / 6504 K endpoints.
    pub fn new(
        camera_id: impl Into<String>,
        cm_low: ColorMatrix3,
        cm_high: ColorMatrix3,
        fm_low: ColorMatrix3,
        fm_high: ColorMatrix3,
    ) -> Result<Self> {
        Self::with_ccts(
            camera_id,
            cm_low,
            cm_high,
            fm_low,
            fm_high,
            Cct::new(DEFAULT_CCT_LOW)?,
            Cct::new(DEFAULT_CCT_HIGH)?,
        )
    }

    pub fn with_ccts(
        camera_id: impl Into<String>,
        cm_low: ColorMatrix3,
        cm_high: ColorMatrix3,
        fm_low: ColorMatrix3,
        fm_high: ColorMatrix3,
        cct_low: Cct,
        cct_high: Cct,
    ) -> Result<Self> {
        let cal = CameraCalibration {
            camera_id: camera_id.into(),
            cm_low,
            cm_high,
            fm_low,
            fm_high,
            cct_low,
            cct_high,
        };
        cal.validate()?;
        Ok(cal)
    }

    /// Identity matrices everywhere; raw space equals XYZ.
    pub fn identity(camera_id: impl Into<String>) -> Self {
        let i = ColorMatrix3::IDENTITY;
        Self::new(camera_id, i, i, i, i).expect("identity calibration is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.cct_low < self.cct_high) {
            return domain(format!(
                "calibration {}: cct_low {} K must be below cct_high {} K",
                self.camera_id,
                self.cct_low.kelvin(),
                self.cct_high.kelvin()
            ));
        }
        for (name, m) in self.matrices() {
            let cond = m.condition_number();
            if !(cond < MAX_CONDITION) {
                return Err(Error::Numeric(format!(
                    "calibration {}: {name} is not invertible (condition number {cond:.3e})",
                    self.camera_id
                )));
            }
        }
        Ok(())
    }

    pub fn matrices(&self) -> [(&'static str, &ColorMatrix3); 4] {
        [
            ("cm_low", &self.cm_low),
            ("cm_high", &self.cm_high),
            ("fm_low", &self.fm_low),
            ("fm_high", &self.fm_high),
        ]
    }

    pub fn pair(&self, which: MatrixKind) -> (&ColorMatrix3, &ColorMatrix3) {
        match which {
            MatrixKind::ColorMatrix => (&self.cm_low, &self.cm_high),
            MatrixKind::ForwardMatrix => (&self.fm_low, &self.fm_high),
        }
    }
}

/// Chromaticity curve parameterized by temperature.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum Locus {
    /// CIE daylight series.
    #[default]
    Daylight,
    /// Cubic-spline blackbody approximation (Kim et al.).
    Planckian,
}

impl Locus {
    /// Temperatures over which the curve is single-valued and accepted.
    pub fn range(self) -> (f64, f64) {
        match self {
            // x(T) of the daylight polynomial folds back near 2244 K.
            Locus::Daylight => (2500.0, 25000.0),
            Locus::Planckian => (1667.0, 25000.0),
        }
    }

    pub fn cct_to_xy(self, kelvin: f64) -> Result<(f64, f64)> {
        let (lo, hi) = self.range();
        if !kelvin.is_finite() || kelvin < lo || kelvin > hi {
            return domain(format!(
                "CCT {kelvin} K outside the valid range [{lo}, {hi}] K of the {self:?} locus"
            ));
        }
        let (x, y, _, _) = self.eval(kelvin);
        Ok((x, y))
    }

    /// `(x, y, dx/dT, dy/dT)` without range checks.
    fn eval(self, t: f64) -> (f64, f64, f64, f64) {
        let (a, b, c, d) = match self {
            Locus::Daylight if t <= 7000.0 => (-4.6070e9, 2.9678e6, 0.09911e3, 0.244063),
            Locus::Daylight => (-2.0064e9, 1.9018e6, 0.24748e3, 0.237040),
            Locus::Planckian if t <= 4000.0 => (-0.2661239e9, -0.2343589e6, 0.8776956e3, 0.179910),
            Locus::Planckian => (-3.0258469e9, 2.1070379e6, 0.2226347e3, 0.240390),
        };
        let (t2, t3) = (t * t, t * t * t);
        let x = a / t3 + b / t2 + c / t + d;
        let dx = -3.0 * a / (t3 * t) - 2.0 * b / t3 - c / t2;
        let (p3, p2, p1, p0) = match self {
            Locus::Daylight => (0.0, -3.000, 2.870, -0.275),
            Locus::Planckian if t <= 2222.0 => (-1.1063814, -1.34811020, 2.18555832, -0.20219683),
            Locus::Planckian if t <= 4000.0 => (-0.9549476, -1.37418593, 2.09137015, -0.16748867),
            Locus::Planckian => (3.0817580, -5.87338670, 3.75112997, -0.37001483),
        };
        let y = ((p3 * x + p2) * x + p1) * x + p0;
        let dy = (3.0 * p3 * x * x + 2.0 * p2 * x + p1) * dx;
        (x, y, dx, dy)
    }

    /// Temperature of the locus point nearest to `(x, y)`.
    pub fn xy_to_cct(self, x: f64, y: f64) -> Result<f64> {
        let (t, d) = self.nearest(x, y)?;
        if d > MAX_LOCUS_DISTANCE {
            return domain(format!(
                "chromaticity ({x:.4}, {y:.4}) lies {d:.4} from the {self:?} locus (limit {MAX_LOCUS_DISTANCE})"
            ));
        }
        Ok(t)
    }

    /// Nearest locus temperature and its xy distance, with no distance limit.
    pub fn nearest(self, x: f64, y: f64) -> Result<(f64, f64)> {
        if !x.is_finite() || !y.is_finite() {
            return domain(format!("chromaticity ({x}, {y}) is not finite"));
        }
        let (lo, hi) = self.range();
        let dist2 = |t: f64| {
            let (lx, ly, _, _) = self.eval(t);
            (lx - x).powi(2) + (ly - y).powi(2)
        };
        // Half the derivative of dist2; its sign change brackets the minimum.
        let slope = |t: f64| {
            let (lx, ly, dx, dy) = self.eval(t);
            (lx - x) * dx + (ly - y) * dy
        };

        // Coarse scan, uniform in reciprocal temperature.
        const STEPS: usize = 256;
        let (mlo, mhi) = (1e6 / hi, 1e6 / lo);
        let grid: Vec<f64> = (0..=STEPS)
            .map(|i| 1e6 / (mlo + (mhi - mlo) * i as f64 / STEPS as f64))
            .collect();
        let best = (0..=STEPS)
            .min_by(|&i, &j| dist2(grid[i]).total_cmp(&dist2(grid[j])))
            .expect("grid is non-empty");

        let mut t = grid[best];
        for (a, b) in [(best.saturating_sub(1), best), (best, (best + 1).min(STEPS))] {
            // grid runs from hot to cold, so `a` is the hotter end.
            if a == b {
                continue;
            }
            let (mut hot, mut cold) = (grid[a], grid[b]);
            let (s_hot, s_cold) = (slope(hot), slope(cold));
            if s_hot == 0.0 {
                t = hot;
                break;
            }
            if s_cold == 0.0 || s_hot.signum() == s_cold.signum() {
                continue;
            }
            for _ in 0..200 {
                let mid = 0.5 * (hot + cold);
                if mid == hot || mid == cold {
                    break;
                }
                if slope(mid).signum() == s_hot.signum() {
                    hot = mid;
                } else {
                    cold = mid;
                }
            }
            t = if dist2(hot) <= dist2(cold) { hot } else { cold };
            break;
        }

        Ok((t, dist2(t).sqrt()))
    }
}

pub fn cct_to_xy(t: Cct) -> Result<(f64, f64)> {
    Locus::default().cct_to_xy(t.kelvin())
}

pub fn xy_to_cct(x: f64, y: f64) -> Result<Cct> {
    Cct::new(Locus::default().xy_to_cct(x, y)?)
}

/// Reciprocal-temperature blend weight, clamped to `[0, 1]`.
/// Equals 1 at `cct_low` and 0 at `cct_high`.
pub fn interpolation_weight(t: Cct, cct_low: Cct, cct_high: Cct) -> Result<f64> {
    let (t, lo, hi) = (t.kelvin(), cct_low.kelvin(), cct_high.kelvin());
    if !(t > 0.0 && lo > 0.0 && hi > 0.0) {
        return domain("interpolation weight needs positive temperatures");
    }
    if !(lo < hi) {
        return domain(format!("cct_low {lo} K must be below cct_high {hi} K"));
    }
    let g = (1.0 / t - 1.0 / hi) / (1.0 / lo - 1.0 / hi);
    Ok(g.clamp(0.0, 1.0))
}

pub fn interpolate_ccm(t: Cct, cal: &CameraCalibration, which: MatrixKind) -> Result<ColorMatrix3> {
    let g = interpolation_weight(t, cal.cct_low, cal.cct_high)?;
    let (low, high) = cal.pair(which);
    Ok(ColorMatrix3::blend(low, high, g))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanckianSampleSet {
    pub samples: Vec<(Cct, XyzColor)>,
}

impl PlanckianSampleSet {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &(Cct, XyzColor)> {
        self.samples.iter()
    }
}

pub const GUIDANCE_CCT_LOW: f64 = 2500.0;
pub const GUIDANCE_CCT_HIGH: f64 = 7500.0;
pub const GUIDANCE_CCT_STEP: f64 = 100.0;

/// Locus points from `lo` to `hi` inclusive every `step` kelvin, each
/// lifted to XYZ with `Y = 1`.
pub fn planckian_xyz_samples(lo: Cct, hi: Cct, step: f64) -> Result<PlanckianSampleSet> {
    if !(lo < hi) {
        return domain(format!("sample range [{}, {}] is empty", lo.kelvin(), hi.kelvin()));
    }
    if !(step > 0.0) || !step.is_finite() {
        return domain(format!("sample step {step} must be positive"));
    }
    let n = ((hi.kelvin() - lo.kelvin()) / step + 1e-9).floor() as usize + 1;
    let mut samples = Vec::with_capacity(n);
    for i in 0..n {
        let t = Cct::new(lo.kelvin() + i as f64 * step)?;
        let (x, y) = cct_to_xy(t)?;
        samples.push((t, XyzColor::from_chromaticity(x, y)?));
    }
    Ok(PlanckianSampleSet { samples })
}

/// The default 51 samples at 2500, 2600, …, 7500 K.
pub fn default_planckian_samples() -> PlanckianSampleSet {
    planckian_xyz_samples(
        Cct(GUIDANCE_CCT_LOW),
        Cct(GUIDANCE_CCT_HIGH),
        GUIDANCE_CCT_STEP,
    )
    .expect("default sample range is valid")
}

pub fn raw_from_xyz(xyz: XyzColor, t: Cct, cal: &CameraCalibration) -> Result<RgbColor> {
    let m = interpolate_ccm(t, cal, MatrixKind::ColorMatrix)?;
    Ok(RgbColor::from_array(m.mul_vec(xyz.to_array())))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IlluminantSolution {
    pub xyz: XyzColor,
    pub cct: Cct,
    pub iterations: usize,
}

/// One step of the illuminant fixed point: chromaticity → CCT →
/// interpolated color matrix → XYZ.
fn fixed_point_step(
    illum: &RgbColor,
    cal: &CameraCalibration,
    xy: (f64, f64),
) -> Result<(XyzColor, Cct, (f64, f64))> {
    // Early iterates may sit well off the locus; only the converged
    // chromaticity is held to the distance limit.
    let (kelvin, _) = Locus::default()
        .nearest(xy.0, xy.1)
        .map_err(|e| Error::Numeric(format!("illuminant iterate diverged: {e}")))?;
    let cct = Cct::new(kelvin)?;
    let m = interpolate_ccm(cct, cal, MatrixKind::ColorMatrix)?;
    let xyz = XyzColor::from_array(m.solve(illum.to_array())?);
    let next = xyz.chromaticity()?;
    Ok((xyz, cct, next))
}

/// Solves for the XYZ and CCT of a camera-native illuminant by iterating
/// from the D65 chromaticity until xy moves less than 1e-6 per coordinate.
pub fn illuminant_raw_to_xyz_cct(
    illum: RgbColor,
    cal: &CameraCalibration,
) -> Result<IlluminantSolution> {
    illuminant_raw_to_xyz_cct_with(illum, cal, FIXED_POINT_MAX_ITERATIONS)
}

pub fn illuminant_raw_to_xyz_cct_with(
    illum: RgbColor,
    cal: &CameraCalibration,
    max_iterations: usize,
) -> Result<IlluminantSolution> {
    illum.check_illuminant()?;
    let mut xy = D65_XY;
    for it in 1..=max_iterations {
        let (xyz, cct, next) = fixed_point_step(&illum, cal, xy)?;
        let done = (next.0 - xy.0).abs() < FIXED_POINT_TOLERANCE
            && (next.1 - xy.1).abs() < FIXED_POINT_TOLERANCE;
        xy = next;
        if done {
            let (_, d) = Locus::default().nearest(xy.0, xy.1)?;
            if d > MAX_LOCUS_DISTANCE {
                return Err(Error::Numeric(format!(
                    "illuminant chromaticity ({:.4}, {:.4}) converged {d:.4} from the locus",
                    xy.0, xy.1
                )));
            }
            // Report the CCT and XYZ consistent with the converged xy.
            let (xyz, cct, _) = fixed_point_step(&illum, cal, xy).unwrap_or((xyz, cct, xy));
            return Ok(IlluminantSolution { xyz, cct, iterations: it });
        }
    }
    Err(Error::Convergence {
        iterations: max_iterations,
        last_xy: xy,
    })
}
