//! Windowed structural similarity on [0, 1] intensities.
//!
//! 3x3 uniform window, stabilizers C1 = 0.01^2 and C2 = 0.03^2, reflective
//! (mirror without edge repeat) border handling.

use crate::error::{Error, Result};
use crate::raster::{ImageBuffer, PixelMap};

const C1: f64 = 0.01 * 0.01;
const C2: f64 = 0.03 * 0.03;

#[inline]
fn reflect(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let n = n as isize;
    let mut i = i;
    if i < 0 {
        i = -i;
    }
    if i >= n {
        i = 2 * (n - 1) - i;
    }
    i as usize
}

/// Mean over the reflected 3x3 neighborhood of every pixel.
pub(crate) fn box3(src: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let mut acc = 0.0;
            for dy in -1..=1isize {
                let yy = reflect(y as isize + dy, h);
                for dx in -1..=1isize {
                    let xx = reflect(x as isize + dx, w);
                    acc += src[yy * w + xx];
                }
            }
            out[y * w + x] = acc / 9.0;
        }
    }
    out
}

/// Adjoint of `box3`: scatter each cotangent entry back over its window.
pub(crate) fn box3_adjoint(cot: &[f64], w: usize, h: usize) -> Vec<f64> {
    let mut out = vec![0.0; w * h];
    for y in 0..h {
        for x in 0..w {
            let g = cot[y * w + x] / 9.0;
            if g == 0.0 {
                continue;
            }
            for dy in -1..=1isize {
                let yy = reflect(y as isize + dy, h);
                for dx in -1..=1isize {
                    let xx = reflect(x as isize + dx, w);
                    out[yy * w + xx] += g;
                }
            }
        }
    }
    out
}

struct SsimStats {
    mu_a: Vec<f64>,
    mu_b: Vec<f64>,
    var_a: Vec<f64>,
    var_b: Vec<f64>,
    cov: Vec<f64>,
}

fn stats(a: &[f64], b: &[f64], w: usize, h: usize) -> SsimStats {
    let mu_a = box3(a, w, h);
    let mu_b = box3(b, w, h);
    let aa: Vec<f64> = a.iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.iter().zip(b).map(|(x, y)| x * y).collect();
    let mut var_a = box3(&aa, w, h);
    let mut var_b = box3(&bb, w, h);
    let mut cov = box3(&ab, w, h);
    for i in 0..w * h {
        var_a[i] -= mu_a[i] * mu_a[i];
        var_b[i] -= mu_b[i] * mu_b[i];
        cov[i] -= mu_a[i] * mu_b[i];
    }
    SsimStats { mu_a, mu_b, var_a, var_b, cov }
}

#[allow(clippy::needless_range_loop)]
/// Per-pixel SSIM of two images; values lie in [-1, 1].
pub fn ssim_map(a: &ImageBuffer, b: &ImageBuffer) -> Result<PixelMap> {
    if !a.same_extent(b) {
        return Err(Error::Contract("ssim_map: image extents differ".into()));
    }
    let (w, h) = (a.width(), a.height());
    let st = stats(a.data(), b.data(), w, h);
    let mut out = vec![0.0; w * h];
    for i in 0..w * h {
        let n1 = 2.0 * st.mu_a[i] * st.mu_b[i] + C1;
        let n2 = 2.0 * st.cov[i] + C2;
        let d1 = st.mu_a[i] * st.mu_a[i] + st.mu_b[i] * st.mu_b[i] + C1;
        let d2 = st.var_a[i] + st.var_b[i] + C2;
        out[i] = (n1 * n2) / (d1 * d2);
    }
    PixelMap::from_vec(w, h, out)
}

/// Gradient of sum(g_ssim * ssim_map(a, b)) with respect to `b`.
#[allow(clippy::needless_range_loop)]
pub(crate) fn ssim_backward(a: &[f64], b: &[f64], w: usize, h: usize, g_ssim: &[f64]) -> Vec<f64> {
    let st = stats(a, b, w, h);
    let n = w * h;
    let mut g_mu_b = vec![0.0; n];
    let mut g_box_ab = vec![0.0; n];
    let mut g_box_bb = vec![0.0; n];
    for i in 0..n {
        let g = g_ssim[i];
        if g == 0.0 {
            continue;
        }
        let (mu_a, mu_b) = (st.mu_a[i], st.mu_b[i]);
        let n1 = 2.0 * mu_a * mu_b + C1;
        let n2 = 2.0 * st.cov[i] + C2;
        let d1 = mu_a * mu_a + mu_b * mu_b + C1;
        let d2 = st.var_a[i] + st.var_b[i] + C2;
        let inv = 1.0 / (d1 * d2);
        let ds_dmu_b = 2.0 * mu_a * n2 * inv - n1 * n2 * 2.0 * mu_b * inv / d1;
        let ds_dcov = 2.0 * n1 * inv;
        let ds_dvar_b = -n1 * n2 * inv / d2;
        // cov = box(ab) - mu_a mu_b; var_b = box(bb) - mu_b^2.
        g_box_ab[i] = g * ds_dcov;
        g_box_bb[i] = g * ds_dvar_b;
        g_mu_b[i] = g * ds_dmu_b - g * ds_dcov * mu_a - g * ds_dvar_b * 2.0 * mu_b;
    }
    let t_mu = box3_adjoint(&g_mu_b, w, h);
    let t_ab = box3_adjoint(&g_box_ab, w, h);
    let t_bb = box3_adjoint(&g_box_bb, w, h);
    (0..n)
        .map(|i| t_mu[i] + a[i] * t_ab[i] + 2.0 * b[i] * t_bb[i])
        .collect()
}
