//! Log-chroma conversion and weighted uv histograms.
//!
//! `u = ln(g/r)`, `v = ln(g/b)`. A histogram is a `bins × bins` grid with
//! `u` along rows and `v` along columns, stored row-major.

use serde::{Deserialize, Serialize};

use ccc_tensor::Tensor;

use crate::colorimetry::RgbColor;
use crate::error::{domain, Error, Result};

/// Pixels at or above this fraction of the saturation level are ignored.
pub const SATURATION_FRACTION: f64 = 0.98;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UvChroma {
    pub u: f64,
    pub v: f64,
}

impl UvChroma {
    pub fn new(u: f64, v: f64) -> Self {
        UvChroma { u, v }
    }
}

pub fn rgb_to_uv(c: RgbColor) -> Result<UvChroma> {
    if !(c.r > 0.0 && c.g > 0.0 && c.b > 0.0) {
        return domain(format!("log-chroma needs positive channels, got {c:?}"));
    }
    Ok(UvChroma::new((c.g / c.r).ln(), (c.g / c.b).ln()))
}

/// Inverse of [`rgb_to_uv`] with the green channel fixed at 1.
pub fn uv_to_rgb(uv: UvChroma) -> RgbColor {
    RgbColor::new((-uv.u).exp(), 1.0, (-uv.v).exp())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramSpec {
    pub bins: usize,
    pub u_min: f64,
    pub u_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl HistogramSpec {
    pub fn new(bins: usize, u_min: f64, u_max: f64, v_min: f64, v_max: f64) -> Result<Self> {
        let s = HistogramSpec { bins, u_min, u_max, v_min, v_max };
        s.validate()?;
        Ok(s)
    }

    /// Square spec over `[lo, hi]²`.
    pub fn square(bins: usize, lo: f64, hi: f64) -> Result<Self> {
        Self::new(bins, lo, hi, lo, hi)
    }

    /// Query-image range `[-2.85, 2.85]²`.
    pub fn query(bins: usize) -> Self {
        Self::square(bins, -2.85, 2.85).expect("query range is valid")
    }

    /// Fingerprint locus range `[-0.5, 1.5]²`.
    pub fn locus(bins: usize) -> Self {
        Self::square(bins, -0.5, 1.5).expect("locus range is valid")
    }

    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        let finite = [self.u_min, self.u_max, self.v_min, self.v_max]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !(self.u_min < self.u_max) || !(self.v_min < self.v_max) {
            return Err(Error::Config(format!("invalid histogram range {self:?}")));
        }
        Ok(())
    }

    pub fn u_width(&self) -> f64 {
        (self.u_max - self.u_min) / self.bins as f64
    }

    pub fn v_width(&self) -> f64 {
        (self.v_max - self.v_min) / self.bins as f64
    }

    /// `floor((u − u_min)/ε)` clamped to the grid.
    pub fn u_index(&self, u: f64) -> usize {
        clamp_index((u - self.u_min) / self.u_width(), self.bins)
    }

    pub fn v_index(&self, v: f64) -> usize {
        clamp_index((v - self.v_min) / self.v_width(), self.bins)
    }

    pub fn u_center(&self, i: usize) -> f64 {
        self.u_min + (i as f64 + 0.5) * self.u_width()
    }

    pub fn v_center(&self, j: usize) -> f64 {
        self.v_min + (j as f64 + 0.5) * self.v_width()
    }

    pub fn len(&self) -> usize {
        self.bins * self.bins
    }

    pub fn is_empty(&self) -> bool {
        self.bins == 0
    }
}

fn clamp_index(x: f64, bins: usize) -> usize {
    let f = x.floor();
    if f <= 0.0 {
        0
    } else if f >= (bins - 1) as f64 {
        bins - 1
    } else {
        f as usize
    }
}

/// A normalized uv histogram.
///
/// Entries are rounded to single precision after normalization, so
/// last-bit differences in pixel weights (exposure scaling, summation
/// order) do not reach the estimator.
#[derive(Clone, Debug, PartialEq)]
pub struct UvHistogram {
    spec: HistogramSpec,
    data: Vec<f64>,
    mass: f64,
}

impl UvHistogram {
    pub fn zeros(spec: HistogramSpec) -> Self {
        UvHistogram { spec, data: vec![0.0; spec.len()], mass: 0.0 }
    }

    /// Normalizes accumulated weights. A zero total yields the empty histogram.
    pub fn from_weights(spec: HistogramSpec, weights: Vec<f64>) -> Result<Self> {
        if weights.len() != spec.len() {
            return Err(Error::Shape(format!(
                "histogram needs {} entries, got {}",
                spec.len(),
                weights.len()
            )));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return domain("histogram weights must be finite and non-negative");
        }
        let mass: f64 = weights.iter().sum();
        if mass == 0.0 {
            return Ok(Self::zeros(spec));
        }
        let data = weights.iter().map(|w| (w / mass) as f32 as f64).collect();
        Ok(UvHistogram { spec, data, mass })
    }

    pub fn spec(&self) -> &HistogramSpec {
        &self.spec
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, iu: usize, iv: usize) -> f64 {
        self.data[iu * self.spec.bins + iv]
    }

    /// Total weight before normalization.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// True when no pixel contributed.
    pub fn is_empty(&self) -> bool {
        self.mass == 0.0
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::new(&[self.spec.bins, self.spec.bins], self.data.clone())
            .expect("histogram shape matches data")
    }
}

/// Linear raw image, row-major from the top, interleaved RGB.
#[derive(Clone, Debug, PartialEq)]
pub struct RawImage {
    width: usize,
    height: usize,
    pixels: Vec<f64>,
    saturation_level: f64,
}

impl RawImage {
    pub fn new(width: usize, height: usize, pixels: Vec<f64>, saturation_level: f64) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Shape(format!("image must be non-empty, got {width}×{height}")));
        }
        if pixels.len() != width * height * 3 {
            return Err(Error::Shape(format!(
                "{width}×{height}×3 image needs {} values, got {}",
                width * height * 3,
                pixels.len()
            )));
        }
        if !(saturation_level > 0.0) || !saturation_level.is_finite() {
            return domain(format!("saturation level {saturation_level} must be positive"));
        }
        if pixels.iter().any(|p| !p.is_finite()) {
            return domain("image contains non-finite pixels");
        }
        Ok(RawImage { width, height, pixels, saturation_level })
    }

    pub fn from_fn(
        width: usize,
        height: usize,
        saturation_level: f64,
        mut f: impl FnMut(usize, usize) -> [f64; 3],
    ) -> Result<Self> {
        let mut pixels = Vec::with_capacity(width * height * 3);
        for y in 0..height {
            for x in 0..width {
                pixels.extend_from_slice(&f(x, y));
            }
        }
        Self::new(width, height, pixels, saturation_level)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn saturation_level(&self) -> f64 {
        self.saturation_level
    }

    pub fn pixels(&self) -> &[f64] {
        &self.pixels
    }

    pub fn pixel(&self, x: usize, y: usize) -> [f64; 3] {
        let i = (y * self.width + x) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    pub fn iter_pixels(&self) -> impl Iterator<Item = [f64; 3]> + '_ {
        self.pixels.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    /// Applies `f` to every pixel, keeping size and saturation level.
    pub fn map_pixels(&self, mut f: impl FnMut([f64; 3]) -> [f64; 3]) -> Result<Self> {
        let pixels = self.iter_pixels().flat_map(&mut f).collect();
        Self::new(self.width, self.height, pixels, self.saturation_level)
    }

    pub fn with_saturation_level(mut self, level: f64) -> Result<Self> {
        if !(level > 0.0) || !level.is_finite() {
            return domain(format!("saturation level {level} must be positive"));
        }
        self.saturation_level = level;
        Ok(self)
    }

    /// Whether a pixel contributes to histograms and gray-world.
    pub fn is_valid_pixel(&self, p: [f64; 3]) -> bool {
        let limit = SATURATION_FRACTION * self.saturation_level;
        p.iter().all(|&c| c > 0.0 && c < limit)
    }
}

/// Accumulates each valid pixel's L2 norm into the bin containing its uv.
pub fn build_histogram(image: &RawImage, spec: &HistogramSpec) -> Result<UvHistogram> {
    spec.validate()?;
    let mut weights = vec![0.0; spec.len()];
    for p in image.iter_pixels() {
        if !image.is_valid_pixel(p) {
            continue;
        }
        let [r, g, b] = p;
        let iu = spec.u_index((g / r).ln());
        let iv = spec.v_index((g / b).ln());
        weights[iu * spec.bins + iv] += (r * r + g * g + b * b).sqrt();
    }
    UvHistogram::from_weights(*spec, weights)
}

/// Per-channel `|∂x| + |∂y|` by forward differences; the last row and column
/// difference against themselves. The saturation level doubles, the bound on
/// a sum of two differences.
pub fn edge_image(image: &RawImage) -> Result<RawImage> {
    let (w, h) = (image.width, image.height);
    if w < 2 || h < 2 {
        return domain(format!("edge image needs at least 2×2 pixels, got {w}×{h}"));
    }
    let px = &image.pixels;
    let mut out = vec![0.0; px.len()];
    for y in 0..h {
        let yn = (y + 1).min(h - 1);
        for x in 0..w {
            let xn = (x + 1).min(w - 1);
            let i = (y * w + x) * 3;
            let ix = (y * w + xn) * 3;
            let iy = (yn * w + x) * 3;
            for c in 0..3 {
                out[i + c] = (px[ix + c] - px[i + c]).abs() + (px[iy + c] - px[i + c]).abs();
            }
        }
    }
    RawImage::new(w, h, out, 2.0 * image.saturation_level)
}
