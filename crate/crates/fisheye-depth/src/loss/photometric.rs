//! Photometric residual, per-pixel minimum reprojection, and auto-masking.

use crate::error::{Error, Result};
use crate::loss::ssim::{ssim_backward, ssim_map};
use crate::raster::{ImageBuffer, PixelMap, ValidityMask};

/// Per-pixel residual rho = ssim_weight * (1 - SSIM)/2 + (1 - ssim_weight) * |a - b|.
pub fn photometric_residual(a: &ImageBuffer, b: &ImageBuffer, ssim_weight: f64) -> Result<PixelMap> {
    if !a.same_extent(b) {
        return Err(Error::Contract("photometric_residual: image extents differ".into()));
    }
    let s = ssim_map(a, b)?;
    let (w, h) = (a.width(), a.height());
    let data = (0..w * h)
        .map(|i| {
            let l1 = (a.data()[i] - b.data()[i]).abs();
            ssim_weight * (1.0 - s.data()[i]) / 2.0 + (1.0 - ssim_weight) * l1
        })
        .collect();
    PixelMap::from_vec(w, h, data)
}

/// Gradient of sum(g_rho * rho(a, b)) with respect to `b`. The sub-gradient
/// of |a - b| at a == b is 0.
pub(crate) fn photometric_backward(
    a: &ImageBuffer,
    b: &ImageBuffer,
    ssim_weight: f64,
    g_rho: &[f64],
) -> Vec<f64> {
    let (w, h) = (a.width(), a.height());
    // rho depends on SSIM with weight -ssim_weight/2.
    let g_ssim: Vec<f64> = g_rho.iter().map(|g| -g * ssim_weight / 2.0).collect();
    let mut grad = ssim_backward(a.data(), b.data(), w, h, &g_ssim);
    for i in 0..w * h {
        let diff = b.data()[i] - a.data()[i];
        let sign = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
        grad[i] += g_rho[i] * (1.0 - ssim_weight) * sign;
    }
    grad
}

/// Per-pixel minimum over residual maps, restricted to valid entries. A
/// pixel is valid if at least one map is valid there.
pub fn min_reprojection(
    maps: &[&PixelMap],
    masks: &[&ValidityMask],
) -> Result<(PixelMap, ValidityMask)> {
    let (min_map, mask, _) = min_reprojection_indexed(maps, masks)?;
    Ok((min_map, mask))
}

/// `min_reprojection` that also reports which map supplied each minimum
/// (usize::MAX where no map is valid).
pub(crate) fn min_reprojection_indexed(
    maps: &[&PixelMap],
    masks: &[&ValidityMask],
) -> Result<(PixelMap, ValidityMask, Vec<usize>)> {
    if maps.is_empty() || maps.len() != masks.len() {
        return Err(Error::Contract("min_reprojection needs at least one map with its mask".into()));
    }
    let (w, h) = (maps[0].width(), maps[0].height());
    for (m, k) in maps.iter().zip(masks) {
        if m.width() != w || m.height() != h || k.width() != w || k.height() != h {
            return Err(Error::Contract("min_reprojection: extent mismatch".into()));
        }
    }
    let mut out = PixelMap::zeros(w, h);
    let mut mask = ValidityMask::filled(w, h, false);
    let mut argmin = vec![usize::MAX; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut best: Option<(f64, usize)> = None;
            for (i, (m, k)) in maps.iter().zip(masks).enumerate() {
                if !k.get(x, y) {
                    continue;
                }
                let v = m.get(x, y);
                if best.is_none_or(|(bv, _)| v < bv) {
                    best = Some((v, i));
                }
            }
            if let Some((v, i)) = best {
                out.set(x, y, v);
                mask.set(x, y, true);
                argmin[y * w + x] = i;
            }
        }
    }
    Ok((out, mask, argmin))
}

/// Keep a pixel iff the minimum synthesized residual strictly beats the
/// minimum identity (unwarped source) residual. Pixels with no valid
/// synthesized residual are dropped; pixels with no valid identity residual
/// are kept when the synthesized side is valid.
pub fn auto_mask(
    synth: (&[&PixelMap], &[&ValidityMask]),
    identity: (&[&PixelMap], &[&ValidityMask]),
) -> Result<ValidityMask> {
    let (syn_min, syn_mask, _) = min_reprojection_indexed(synth.0, synth.1)?;
    let (id_min, id_mask, _) = min_reprojection_indexed(identity.0, identity.1)?;
    if syn_min.width() != id_min.width() || syn_min.height() != id_min.height() {
        return Err(Error::Contract("auto_mask: extent mismatch".into()));
    }
    let (w, h) = (syn_min.width(), syn_min.height());
    let mut keep = ValidityMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !syn_mask.get(x, y) {
                continue;
            }
            let kept = !id_mask.get(x, y) || syn_min.get(x, y) < id_min.get(x, y);
            keep.set(x, y, kept);
        }
    }
    Ok(keep)
}
