//! Edge-aware smoothness on mean-normalized inverse depth.

use crate::error::{Error, Result};
use crate::loss::fingerprint::Fingerprint;
use crate::raster::{DepthGrid, ImageBuffer, ValidityMask};

/// Edge-aware smoothness loss. The disparity field is divided by its mean
/// over valid pixels, then |forward difference| terms are weighted by
/// exp(-|forward difference of the image|) and averaged over interior pixels
/// (pixels whose right and down neighbors are inside and valid).
pub fn smoothness_loss(disp: &DepthGrid, img: &ImageBuffer) -> Result<f64> {
    let (loss, _) = smoothness_core(disp.values(), disp.mask(), img, false, None)?;
    Ok(loss)
}

/// Loss plus its gradient with respect to the disparity values.
pub(crate) fn smoothness_loss_grad(
    disp_values: &[f64],
    mask: &ValidityMask,
    img: &ImageBuffer,
    fp: Option<&mut Fingerprint>,
) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = smoothness_core(disp_values, mask, img, true, fp)?;
    Ok((loss, grad.expect("grad requested")))
}

#[allow(clippy::needless_range_loop)]
pub(crate) fn smoothness_core(
    e: &[f64],
    mask: &ValidityMask,
    img: &ImageBuffer,
    want_grad: bool,
    mut fp: Option<&mut Fingerprint>,
) -> Result<(f64, Option<Vec<f64>>)> {
    let (w, h) = (mask.width(), mask.height());
    if img.width() != w || img.height() != h || e.len() != w * h {
        return Err(Error::Contract("smoothness_loss: extent mismatch".into()));
    }
    let n_valid = mask.count_valid();
    if n_valid == 0 {
        return Err(Error::Contract("smoothness_loss: no valid pixels".into()));
    }
    let mean: f64 = e
        .iter()
        .zip(mask.data())
        .filter(|(_, ok)| **ok)
        .map(|(v, _)| *v)
        .sum::<f64>()
        / n_valid as f64;
    if mean.abs() < 1e-300 {
        return Err(Error::Contract("smoothness_loss: zero mean disparity".into()));
    }

    let interior = |x: usize, y: usize| {
        x + 1 < w && y + 1 < h && mask.get(x, y) && mask.get(x + 1, y) && mask.get(x, y + 1)
    };
    let mut n_interior = 0usize;
    let mut acc = 0.0;
    for y in 0..h {
        for x in 0..w {
            if !interior(x, y) {
                continue;
            }
            n_interior += 1;
            let wx = (-(img.get(x + 1, y) - img.get(x, y)).abs()).exp();
            let wy = (-(img.get(x, y + 1) - img.get(x, y)).abs()).exp();
            let dx = e[y * w + x + 1] - e[y * w + x];
            let dy = e[(y + 1) * w + x] - e[y * w + x];
            if let Some(fp) = fp.as_deref_mut() {
                fp.write_sign(dx);
                fp.write_sign(dy);
            }
            acc += dx.abs() * wx + dy.abs() * wy;
        }
    }
    if n_interior == 0 {
        return Err(Error::Contract("smoothness_loss: no valid interior pixels".into()));
    }
    // loss = A / mean with A the raw averaged difference sum.
    let a = acc / n_interior as f64;
    let loss = a / mean;

    if !want_grad {
        return Ok((loss, None));
    }

    let mut grad = vec![0.0; w * h];
    let sign = |v: f64| {
        if v > 0.0 {
            1.0
        } else if v < 0.0 {
            -1.0
        } else {
            0.0
        }
    };
    let scale = 1.0 / (n_interior as f64 * mean);
    for y in 0..h {
        for x in 0..w {
            if !interior(x, y) {
                continue;
            }
            let wx = (-(img.get(x + 1, y) - img.get(x, y)).abs()).exp();
            let wy = (-(img.get(x, y + 1) - img.get(x, y)).abs()).exp();
            let sx = sign(e[y * w + x + 1] - e[y * w + x]);
            let sy = sign(e[(y + 1) * w + x] - e[y * w + x]);
            grad[y * w + x + 1] += sx * wx * scale;
            grad[y * w + x] -= sx * wx * scale;
            grad[(y + 1) * w + x] += sy * wy * scale;
            grad[y * w + x] -= sy * wy * scale;
        }
    }
    // The mean in the denominator depends on every valid pixel.
    let dmean = loss / (mean * n_valid as f64);
    for i in 0..w * h {
        if mask.data()[i] {
            grad[i] -= dmean;
        }
    }
    Ok((loss, Some(grad)))
}
