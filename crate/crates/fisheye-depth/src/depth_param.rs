//! Per-pixel depth parameterization for the direct optimizer.
//!
//! Unconstrained logits pass through a logistic squash to sigma in (0, 1),
//! then through the bounded reciprocal map D = 1 / (a sigma + b) with
//! a = 1/d_min - 1/d_max and b = 1/d_max, so D(0) = d_max and D(1) = d_min.

use crate::error::{Error, Result};
use crate::raster::{resize_bilinear, resize_taps, DepthGrid, ValidityMask};

/// Depth range of the sigmoid-to-depth map.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DepthBounds {
    pub d_min: f64,
    pub d_max: f64,
}

impl Default for DepthBounds {
    fn default() -> Self {
        Self { d_min: 0.1, d_max: 100.0 }
    }
}

impl DepthBounds {
    pub fn new(d_min: f64, d_max: f64) -> Result<Self> {
        if d_min <= 0.0 || d_min.is_nan() || d_max <= d_min || d_max.is_nan() || !d_max.is_finite() {
            return Err(Error::InvalidParam(format!(
                "depth bounds must satisfy 0 < d_min < d_max, got ({d_min}, {d_max})"
            )));
        }
        Ok(Self { d_min, d_max })
    }

    #[inline]
    pub(crate) fn coeffs(&self) -> (f64, f64) {
        let b = 1.0 / self.d_max;
        (1.0 / self.d_min - b, b)
    }
}

/// Map sigma in [0, 1] to depth in [d_min, d_max]; strictly decreasing.
pub fn sigmoid_to_depth(sigma: f64, bounds: DepthBounds) -> Result<f64> {
    if !(0.0..=1.0).contains(&sigma) {
        return Err(Error::Domain(format!("sigma {sigma} outside [0, 1]")));
    }
    let (a, b) = bounds.coeffs();
    Ok(1.0 / (a * sigma + b))
}

/// Inverse of `sigmoid_to_depth`.
pub fn depth_to_sigmoid(depth: f64, bounds: DepthBounds) -> Result<f64> {
    if !(depth >= bounds.d_min && depth <= bounds.d_max) {
        return Err(Error::Domain(format!(
            "depth {depth} outside [{}, {}]",
            bounds.d_min, bounds.d_max
        )));
    }
    let (a, b) = bounds.coeffs();
    Ok((1.0 / depth - b) / a)
}

const LOGIT_CLAMP: f64 = 30.0;

#[inline]
pub(crate) fn logistic(l: f64) -> f64 {
    1.0 / (1.0 + (-l).exp())
}

/// Depth of one logit.
#[inline]
pub fn depth_from_logit(logit: f64, bounds: DepthBounds) -> f64 {
    let (a, b) = bounds.coeffs();
    1.0 / (a * logistic(logit) + b)
}

/// d depth / d logit at one logit.
#[inline]
pub(crate) fn depth_from_logit_deriv(logit: f64, bounds: DepthBounds) -> f64 {
    let (a, b) = bounds.coeffs();
    let s = logistic(logit);
    let d = 1.0 / (a * s + b);
    -a * d * d * s * (1.0 - s)
}

/// Closed-form inverse of `depth_from_logit`, clamped to |logit| <= 30.
pub fn logit_from_depth(depth: f64, bounds: DepthBounds) -> Result<f64> {
    if depth.is_nan() || depth <= bounds.d_min || depth >= bounds.d_max {
        return Err(Error::Domain(format!(
            "depth {depth} outside ({}, {})",
            bounds.d_min, bounds.d_max
        )));
    }
    let sigma = depth_to_sigmoid(depth, bounds)?;
    let sigma = sigma.clamp(1e-300, 1.0 - 1e-16);
    Ok((sigma / (1.0 - sigma)).ln().clamp(-LOGIT_CLAMP, LOGIT_CLAMP))
}

/// Multi-scale grid of unconstrained per-pixel parameters. Level l has
/// extent ceil(w / 2^l) x ceil(h / 2^l).
#[derive(Debug, Clone, PartialEq)]
pub struct LogitGrid {
    width: usize,
    height: usize,
    levels: Vec<LogitLevel>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogitLevel {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f64>,
}

fn level_extent(w: usize, h: usize, level: usize) -> (usize, usize) {
    let f = 1usize << level;
    (w.div_ceil(f), h.div_ceil(f))
}

impl LogitGrid {
    /// All levels filled with one logit value.
    pub fn constant(width: usize, height: usize, levels: usize, value: f64) -> Result<Self> {
        if levels == 0 || width == 0 || height == 0 {
            return Err(Error::InvalidParam("logit grid needs >= 1 level and a nonzero extent".into()));
        }
        let levels = (0..levels)
            .map(|l| {
                let (w, h) = level_extent(width, height, l);
                LogitLevel { width: w, height: h, data: vec![value; w * h] }
            })
            .collect();
        Ok(Self { width, height, levels })
    }

    /// Initialize every level from a dense depth map (values clamped into the
    /// open bounds interval before inversion). Level grids are bilinear
    /// resamplings of the source.
    pub fn from_depth(depth: &DepthGrid, levels: usize, bounds: DepthBounds) -> Result<Self> {
        let (width, height) = (depth.width(), depth.height());
        let mut grid = Self::constant(width, height, levels, 0.0)?;
        // Invalid source pixels fall back to the mid-range logit 0.
        let mid = depth_from_logit(0.0, bounds);
        let full: Vec<f64> = depth
            .values()
            .iter()
            .zip(depth.mask().data())
            .map(|(v, ok)| if *ok { *v } else { mid })
            .collect();
        let lo = bounds.d_min * (1.0 + 1e-9);
        let hi = bounds.d_max * (1.0 - 1e-9);
        for level in 0..levels {
            let (lw, lh) = level_extent(width, height, level);
            let resized = resize_bilinear(&full, width, height, lw, lh);
            let data: Vec<f64> = resized
                .iter()
                .map(|d| logit_from_depth(d.clamp(lo, hi), bounds).expect("clamped into range"))
                .collect();
            grid.levels[level] = LogitLevel { width: lw, height: lh, data };
        }
        Ok(grid)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn num_levels(&self) -> usize {
        self.levels.len()
    }

    pub fn level(&self, l: usize) -> &LogitLevel {
        &self.levels[l]
    }

    pub fn level_mut(&mut self, l: usize) -> &mut LogitLevel {
        &mut self.levels[l]
    }

    pub fn levels(&self) -> &[LogitLevel] {
        &self.levels
    }

    /// Total parameter count across levels.
    pub fn len(&self) -> usize {
        self.levels.iter().map(|l| l.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// A zeroed grid with the same level layout, for gradients and optimizer
    /// state.
    pub fn zeros_like(&self) -> LogitGrid {
        let levels = self
            .levels
            .iter()
            .map(|l| LogitLevel { width: l.width, height: l.height, data: vec![0.0; l.data.len()] })
            .collect();
        LogitGrid { width: self.width, height: self.height, levels }
    }

    /// Flat view helpers: (level, offset) of a linear coordinate.
    pub fn locate(&self, coord: usize) -> Option<(usize, usize)> {
        let mut rem = coord;
        for (li, l) in self.levels.iter().enumerate() {
            if rem < l.data.len() {
                return Some((li, rem));
            }
            rem -= l.data.len();
        }
        None
    }
}

/// Map every level through logistic + sigmoid_to_depth and upsample to full
/// resolution: one full-resolution DepthGrid per level, all pixels valid.
pub fn logits_to_depth_pyramid(grid: &LogitGrid, bounds: DepthBounds) -> Vec<DepthGrid> {
    let (w, h) = (grid.width(), grid.height());
    grid.levels()
        .iter()
        .map(|level| {
            let depth_level: Vec<f64> =
                level.data.iter().map(|l| depth_from_logit(*l, bounds)).collect();
            let full = if level.width == w && level.height == h {
                depth_level
            } else {
                let taps = resize_taps(level.width, level.height, w, h);
                crate::raster::resize_gather(&depth_level, &taps)
            };
            DepthGrid::from_parts(w, h, full, ValidityMask::filled(w, h, true))
                .expect("bounded depths are positive")
        })
        .collect()
}

/// Exact single-level inverse of the logit-to-depth map.
pub fn depth_to_logits(depth: &DepthGrid, bounds: DepthBounds) -> Result<Vec<f64>> {
    depth
        .values()
        .iter()
        .zip(depth.mask().data())
        .map(|(v, ok)| {
            if !ok {
                return Err(Error::Domain("depth_to_logits: invalid pixel".into()));
            }
            logit_from_depth(*v, bounds)
        })
        .collect()
}
