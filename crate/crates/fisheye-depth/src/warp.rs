//! Bilinear sampling and cross-view synthesis.
//!
//! Synthesis runs on the rectified grid: the rectified depth is unprojected
//! through the pinhole rays, transformed by the relative pose, projected
//! through the fisheye model, and the source image is sampled there. The
//! photometric loss compares the result against `rectified_target`, which
//! lives on the same grid. A fisheye-domain mode (per-pixel inverse rays) is
//! provided for the render oracle.

use nalgebra::Vector3;

use crate::camera::{fisheye_lookup_grid, FisheyeIntrinsics, RectifiedIntrinsics, RigidPose};
use crate::error::{Error, Result};
use crate::raster::{DepthGrid, ImageBuffer, SampleGrid, ValidityMask};

/// One bilinear sample: cell origin and fractional offsets.
#[derive(Debug, Clone, Copy)]
pub(crate) struct SampleCell {
    pub x0: usize,
    pub y0: usize,
    pub fu: f64,
    pub fv: f64,
}

impl SampleCell {
    /// Resolve the sampling cell for continuous coordinates. Support requires
    /// u in [0, w-1] and v in [0, h-1]; at exact integer coordinates the
    /// lower cell is used, which also makes the derivative there the
    /// documented lower-cell sub-gradient.
    #[inline]
    pub fn locate(u: f64, v: f64, width: usize, height: usize) -> Option<SampleCell> {
        if !(u >= 0.0 && v >= 0.0 && u <= (width - 1) as f64 && v <= (height - 1) as f64) {
            return None;
        }
        let mut x0 = u.floor() as usize;
        if x0 as f64 == u && x0 > 0 {
            x0 -= 1;
        }
        let mut y0 = v.floor() as usize;
        if y0 as f64 == v && y0 > 0 {
            y0 -= 1;
        }
        if width == 1 {
            x0 = 0;
        }
        if height == 1 {
            y0 = 0;
        }
        Some(SampleCell { x0, y0, fu: u - x0 as f64, fv: v - y0 as f64 })
    }

    #[inline]
    pub fn taps(&self, width: usize, height: usize) -> [usize; 4] {
        let x1 = (self.x0 + 1).min(width - 1);
        let y1 = (self.y0 + 1).min(height - 1);
        [
            self.y0 * width + self.x0,
            self.y0 * width + x1,
            y1 * width + self.x0,
            y1 * width + x1,
        ]
    }

    #[inline]
    pub fn interpolate(&self, data: &[f64], width: usize, height: usize) -> f64 {
        let [i00, i10, i01, i11] = self.taps(width, height);
        let (fu, fv) = (self.fu, self.fv);
        (1.0 - fv) * ((1.0 - fu) * data[i00] + fu * data[i10])
            + fv * ((1.0 - fu) * data[i01] + fu * data[i11])
    }

    /// Derivative of the interpolated value with respect to (u, v).
    #[inline]
    pub fn gradient(&self, data: &[f64], width: usize, height: usize) -> (f64, f64) {
        let [i00, i10, i01, i11] = self.taps(width, height);
        let (fu, fv) = (self.fu, self.fv);
        let du = (1.0 - fv) * (data[i10] - data[i00]) + fv * (data[i11] - data[i01]);
        let dv = (1.0 - fu) * (data[i01] - data[i00]) + fu * (data[i11] - data[i10]);
        (du, dv)
    }

    /// Bilinear weights in tap order (00, 10, 01, 11).
    #[inline]
    pub fn weights(&self) -> [f64; 4] {
        let (fu, fv) = (self.fu, self.fv);
        [
            (1.0 - fu) * (1.0 - fv),
            fu * (1.0 - fv),
            (1.0 - fu) * fv,
            fu * fv,
        ]
    }
}

/// Sample an image at the grid positions. Output pixels are invalid (and 0)
/// where the grid is invalid or any of the four support pixels would fall
/// outside the image.
pub fn bilinear_sample(img: &ImageBuffer, grid: &SampleGrid) -> (ImageBuffer, ValidityMask) {
    let (w, h) = (grid.width(), grid.height());
    let mut out = ImageBuffer::zeros(w, h);
    let mut mask = ValidityMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            let (u, v, ok) = grid.get(x, y);
            if !ok {
                continue;
            }
            if let Some(cell) = SampleCell::locate(u, v, img.width(), img.height()) {
                out.set(x, y, cell.interpolate(img.data(), img.width(), img.height()));
                mask.set(x, y, true);
            }
        }
    }
    (out, mask)
}

/// Sample a masked positive raster; all four support pixels must be valid.
pub(crate) fn bilinear_sample_masked(src: &DepthGrid, grid: &SampleGrid) -> DepthGrid {
    let (w, h) = (grid.width(), grid.height());
    let mut values = vec![0.0; w * h];
    let mut mask = ValidityMask::filled(w, h, false);
    let src_mask = src.mask().data();
    for y in 0..h {
        for x in 0..w {
            let (u, v, ok) = grid.get(x, y);
            if !ok {
                continue;
            }
            if let Some(cell) = SampleCell::locate(u, v, src.width(), src.height()) {
                let taps = cell.taps(src.width(), src.height());
                if taps.iter().all(|i| src_mask[*i]) {
                    values[y * w + x] = cell.interpolate(src.values(), src.width(), src.height());
                    mask.set(x, y, true);
                }
            }
        }
    }
    DepthGrid::from_parts(w, h, values, mask).expect("interpolation of positive values is positive")
}

/// Resample a fisheye-domain depth map onto the rectified grid.
pub fn rectify_depth(
    depth: &DepthGrid,
    intr: &FisheyeIntrinsics,
    rect: &RectifiedIntrinsics,
) -> Result<DepthGrid> {
    if depth.width() != intr.width || depth.height() != intr.height {
        return Err(Error::Contract("depth extent does not match fisheye intrinsics".into()));
    }
    Ok(rectify_depth_with_grid(depth, &fisheye_lookup_grid(intr, rect)))
}

/// `rectify_depth` with a precomputed lookup grid.
pub fn rectify_depth_with_grid(depth: &DepthGrid, lookup: &SampleGrid) -> DepthGrid {
    bilinear_sample_masked(depth, lookup)
}

/// The target frame resampled onto the rectified grid; the comparison-domain
/// companion of `synthesize_view`.
pub fn rectified_target(
    img: &ImageBuffer,
    intr: &FisheyeIntrinsics,
    rect: &RectifiedIntrinsics,
) -> Result<(ImageBuffer, ValidityMask)> {
    if img.width() != intr.width || img.height() != intr.height {
        return Err(Error::Contract("image extent does not match fisheye intrinsics".into()));
    }
    Ok(bilinear_sample(img, &fisheye_lookup_grid(intr, rect)))
}

/// Warp a source frame onto the rectified grid of the target camera:
/// unproject the rectified depth, apply the relative pose, project through
/// the fisheye model, and sample the source image.
pub fn synthesize_view(
    i_src: &ImageBuffer,
    d_hat: &DepthGrid,
    pose: &RigidPose,
    intr: &FisheyeIntrinsics,
    rect: &RectifiedIntrinsics,
) -> Result<(ImageBuffer, ValidityMask)> {
    if d_hat.width() != rect.width || d_hat.height() != rect.height {
        return Err(Error::Contract("rectified depth extent mismatch".into()));
    }
    if i_src.width() != intr.width || i_src.height() != intr.height {
        return Err(Error::Contract("source image extent mismatch".into()));
    }
    let (w, h) = (rect.width, rect.height);
    let mut out = ImageBuffer::zeros(w, h);
    let mut mask = ValidityMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !d_hat.valid(x, y) {
                continue;
            }
            let p = rect.ray(x as f64, y as f64) * d_hat.value(x, y);
            let p_src = pose.transform(&p);
            let proj = intr.project_point(&p_src);
            if !proj.valid {
                continue;
            }
            if let Some(cell) = SampleCell::locate(proj.u, proj.v, i_src.width(), i_src.height()) {
                out.set(x, y, cell.interpolate(i_src.data(), i_src.width(), i_src.height()));
                mask.set(x, y, true);
            }
        }
    }
    Ok((out, mask))
}

/// Precomputed unit rays through every fisheye pixel (the inverse-ray grid of
/// the oracle path). Pixels outside the invertible radius are invalid.
#[derive(Debug, Clone)]
pub struct FisheyeRayGrid {
    width: usize,
    height: usize,
    dirs: Vec<Vector3<f64>>,
    valid: Vec<bool>,
}

impl FisheyeRayGrid {
    pub fn new(intr: &FisheyeIntrinsics) -> Self {
        let (w, h) = (intr.width, intr.height);
        let mut dirs = Vec::with_capacity(w * h);
        let mut valid = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                match intr.unproject_ray(x as f64, y as f64) {
                    Ok(d) => {
                        dirs.push(d);
                        valid.push(true);
                    }
                    Err(_) => {
                        dirs.push(Vector3::zeros());
                        valid.push(false);
                    }
                }
            }
        }
        Self { width: w, height: h, dirs, valid }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> Option<&Vector3<f64>> {
        let i = y * self.width + x;
        if self.valid[i] {
            Some(&self.dirs[i])
        } else {
            None
        }
    }
}

/// Fisheye-domain synthesis: per fisheye pixel, scale its inverse ray to the
/// stored Z-depth, transform, project, and sample the source. Used by the
/// oracle tests, where intrinsics are fixed and the ray grid is precomputed.
pub fn synthesize_view_fisheye(
    i_src: &ImageBuffer,
    depth: &DepthGrid,
    pose: &RigidPose,
    intr: &FisheyeIntrinsics,
    rays: &FisheyeRayGrid,
) -> Result<(ImageBuffer, ValidityMask)> {
    if depth.width() != intr.width || depth.height() != intr.height {
        return Err(Error::Contract("depth extent does not match fisheye intrinsics".into()));
    }
    if rays.width() != intr.width || rays.height() != intr.height {
        return Err(Error::Contract("ray grid extent mismatch".into()));
    }
    let (w, h) = (intr.width, intr.height);
    let mut out = ImageBuffer::zeros(w, h);
    let mut mask = ValidityMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !depth.valid(x, y) {
                continue;
            }
            let Some(dir) = rays.get(x, y) else { continue };
            let p = dir * (depth.value(x, y) / dir.z);
            let p_src = pose.transform(&p);
            let proj = intr.project_point(&p_src);
            if !proj.valid {
                continue;
            }
            if let Some(cell) = SampleCell::locate(proj.u, proj.v, w, h) {
                out.set(x, y, cell.interpolate(i_src.data(), w, h));
                mask.set(x, y, true);
            }
        }
    }
    Ok((out, mask))
}
