//! Dense raster types shared across the toolkit.
//!
//! All rasters are row-major with pixel coordinates (x, y) = (column, row)
//! and the origin at the center of the top-left pixel.

use crate::error::{Error, Result};

/// Grayscale image with intensities in [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn constant(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::from_vec(width, height, vec![value; width * height])
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Contract(format!(
                "image data length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        if data.iter().any(|v| !v.is_finite() || *v < 0.0 || *v > 1.0) {
            return Err(Error::Contract("image intensities must be finite and in [0, 1]".into()));
        }
        Ok(Self { width, height, data })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self::from_vec(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn same_extent(&self, other: &ImageBuffer) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Boolean raster qualifying another raster of the same extent.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl ValidityMask {
    pub fn filled(width: usize, height: usize, value: bool) -> Self {
        Self { width, height, data: vec![value; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Contract(format!(
                "mask length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: bool) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    pub fn count_valid(&self) -> usize {
        self.data.iter().filter(|v| **v).count()
    }

    /// Pixelwise conjunction. Extents must agree.
    pub fn and(&self, other: &ValidityMask) -> Result<ValidityMask> {
        if self.width != other.width || self.height != other.height {
            return Err(Error::Contract("mask extents differ".into()));
        }
        let data = self.data.iter().zip(&other.data).map(|(a, b)| *a && *b).collect();
        Ok(Self { width: self.width, height: self.height, data })
    }
}

/// Per-pixel depth (or any positive field, e.g. inverse depth) with a
/// validity mask. Valid entries are finite and strictly positive.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
    mask: ValidityMask,
}

impl DepthGrid {
    pub fn constant(width: usize, height: usize, depth: f64) -> Result<Self> {
        Self::from_parts(
            width,
            height,
            vec![depth; width * height],
            ValidityMask::filled(width, height, true),
        )
    }

    pub fn from_parts(width: usize, height: usize, values: Vec<f64>, mask: ValidityMask) -> Result<Self> {
        if values.len() != width * height {
            return Err(Error::Contract(format!(
                "depth data length {} does not match {}x{}",
                values.len(),
                width,
                height
            )));
        }
        if mask.width() != width || mask.height() != height {
            return Err(Error::Contract("depth mask extent mismatch".into()));
        }
        for (v, ok) in values.iter().zip(mask.data()) {
            if *ok && (!v.is_finite() || *v <= 0.0) {
                return Err(Error::Contract(format!("valid depth entries must be positive, got {v}")));
            }
        }
        Ok(Self { width, height, values, mask })
    }

    /// All-valid grid from raw values (every entry must be positive).
    pub fn from_values(width: usize, height: usize, values: Vec<f64>) -> Result<Self> {
        let mask = ValidityMask::filled(width, height, true);
        Self::from_parts(width, height, values, mask)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn value(&self, x: usize, y: usize) -> f64 {
        self.values[y * self.width + x]
    }

    #[inline]
    pub fn valid(&self, x: usize, y: usize) -> bool {
        self.mask.get(x, y)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn mask(&self) -> &ValidityMask {
        &self.mask
    }

    pub fn iter_valid(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().zip(self.mask.data()).filter(|(_, ok)| **ok).map(|(v, _)| *v)
    }

    /// Median of the valid entries.
    pub fn median_valid(&self) -> Result<f64> {
        median(self.iter_valid().collect())
    }

    /// Element-wise reciprocal (depth to disparity and back); keeps the mask.
    pub fn reciprocal(&self) -> DepthGrid {
        let values = self
            .values
            .iter()
            .zip(self.mask.data())
            .map(|(v, ok)| if *ok { 1.0 / *v } else { 0.0 })
            .collect();
        DepthGrid {
            width: self.width,
            height: self.height,
            values,
            mask: self.mask.clone(),
        }
    }

    /// Multiply every valid entry by a positive factor.
    pub fn scaled(&self, factor: f64) -> Result<DepthGrid> {
        if factor <= 0.0 || !factor.is_finite() {
            return Err(Error::InvalidParam(format!("scale factor must be positive, got {factor}")));
        }
        let values = self
            .values
            .iter()
            .zip(self.mask.data())
            .map(|(v, ok)| if *ok { *v * factor } else { *v })
            .collect();
        Ok(DepthGrid {
            width: self.width,
            height: self.height,
            values,
            mask: self.mask.clone(),
        })
    }
}

pub(crate) fn median(mut vals: Vec<f64>) -> Result<f64> {
    if vals.is_empty() {
        return Err(Error::Contract("median of an empty set".into()));
    }
    vals.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let n = vals.len();
    if n % 2 == 1 {
        Ok(vals[n / 2])
    } else {
        Ok(0.5 * (vals[n / 2 - 1] + vals[n / 2]))
    }
}

/// Unconstrained per-pixel scalar field (residuals, SSIM values, ...).
#[derive(Debug, Clone, PartialEq)]
pub struct PixelMap {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl PixelMap {
    pub fn zeros(width: usize, height: usize) -> Self {
        Self { width, height, data: vec![0.0; width * height] }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::Contract(format!(
                "map length {} does not match {}x{}",
                data.len(),
                width,
                height
            )));
        }
        Ok(Self { width, height, data })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }
}

/// Per-pixel continuous sampling coordinates into some other raster.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleGrid {
    width: usize,
    height: usize,
    u: Vec<f64>,
    v: Vec<f64>,
    valid: Vec<bool>,
}

impl SampleGrid {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            u: vec![0.0; width * height],
            v: vec![0.0; width * height],
            valid: vec![false; width * height],
        }
    }

    /// Grid mapping every pixel to itself.
    pub fn identity(width: usize, height: usize) -> Self {
        let mut g = Self::new(width, height);
        for y in 0..height {
            for x in 0..width {
                g.set(x, y, x as f64, y as f64, true);
            }
        }
        g
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, u: f64, v: f64, valid: bool) {
        let i = y * self.width + x;
        self.u[i] = u;
        self.v[i] = v;
        self.valid[i] = valid;
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> (f64, f64, bool) {
        let i = y * self.width + x;
        (self.u[i], self.v[i], self.valid[i])
    }
}

/// One bilinear gather: four (source index, weight) taps.
pub(crate) type Tap4 = [(usize, f64); 4];

/// Bilinear resize map from an (sw x sh) raster onto a (dw x dh) raster,
/// align-corners convention. Used forward (gather) for upsampling and via the
/// same taps backward (scatter) for its adjoint.
pub(crate) fn resize_taps(sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<Tap4> {
    assert!(sw > 0 && sh > 0 && dw > 0 && dh > 0);
    let sx = if dw > 1 { (sw as f64 - 1.0) / (dw as f64 - 1.0) } else { 0.0 };
    let sy = if dh > 1 { (sh as f64 - 1.0) / (dh as f64 - 1.0) } else { 0.0 };
    let mut taps = Vec::with_capacity(dw * dh);
    for y in 0..dh {
        for x in 0..dw {
            let u = x as f64 * sx;
            let v = y as f64 * sy;
            let mut x0 = u.floor() as usize;
            let mut y0 = v.floor() as usize;
            if x0 + 1 >= sw {
                x0 = sw.saturating_sub(2);
            }
            if y0 + 1 >= sh {
                y0 = sh.saturating_sub(2);
            }
            let x1 = if sw == 1 { x0 } else { x0 + 1 };
            let y1 = if sh == 1 { y0 } else { y0 + 1 };
            let fu = if sw == 1 { 0.0 } else { u - x0 as f64 };
            let fv = if sh == 1 { 0.0 } else { v - y0 as f64 };
            let i00 = y0 * sw + x0;
            let i10 = y0 * sw + x1;
            let i01 = y1 * sw + x0;
            let i11 = y1 * sw + x1;
            taps.push([
                (i00, (1.0 - fu) * (1.0 - fv)),
                (i10, fu * (1.0 - fv)),
                (i01, (1.0 - fu) * fv),
                (i11, fu * fv),
            ]);
        }
    }
    taps
}

pub(crate) fn resize_gather(src: &[f64], taps: &[Tap4]) -> Vec<f64> {
    taps.iter()
        .map(|t| t.iter().map(|(i, w)| src[*i] * w).sum())
        .collect()
}

pub(crate) fn resize_scatter(cotangent: &[f64], taps: &[Tap4], src_len: usize) -> Vec<f64> {
    let mut out = vec![0.0; src_len];
    for (g, t) in cotangent.iter().zip(taps) {
        for (i, w) in t {
            out[*i] += g * w;
        }
    }
    out
}

/// Bilinear resize of a raw raster, align-corners convention.
pub fn resize_bilinear(src: &[f64], sw: usize, sh: usize, dw: usize, dh: usize) -> Vec<f64> {
    assert_eq!(src.len(), sw * sh);
    resize_gather(src, &resize_taps(sw, sh, dw, dh))
}
