//! Full-snippet loss evaluation.
//!
//! One forward pass serves both `total_loss` and the optimizer: the gradient
//! path runs the same code with adjoint accumulation switched on, so the
//! reported loss and the differentiated loss are structurally identical.

use nalgebra::Vector3;

use crate::camera::{fisheye_lookup_grid, FisheyeIntrinsics, RectifiedIntrinsics, RigidPose};
use crate::error::{Error, Result};
use crate::loss::fingerprint::Fingerprint;
use crate::loss::{
    decay_factor, min_reprojection_indexed, ordinal_distillation_grad, ordinal_grid_core,
    photometric_backward, photometric_residual, scale_invariant_core, scale_invariant_grad,
    smoothness_core, smoothness_loss_grad, DecaySchedule, LossConfig, LossReport,
};
use crate::raster::{DepthGrid, ImageBuffer, PixelMap, ValidityMask};
use crate::warp::SampleCell;

/// Borrowed view of one training snippet: target frame t, sources t-1 and
/// t+1, the relative poses T_{t,t-1} and T_{t,t+1} mapping target-camera
/// coordinates into each source camera, the intrinsics pair, and an optional
/// teacher depth map on the fisheye grid.
#[derive(Debug, Clone, Copy)]
pub struct SnippetInputs<'a> {
    pub target: &'a ImageBuffer,
    pub prev: &'a ImageBuffer,
    pub next: &'a ImageBuffer,
    pub pose_prev: &'a RigidPose,
    pub pose_next: &'a RigidPose,
    pub intr: &'a FisheyeIntrinsics,
    pub rect: &'a RectifiedIntrinsics,
    pub teacher: Option<&'a DepthGrid>,
}

impl<'a> SnippetInputs<'a> {
    pub(crate) fn validate(&self) -> Result<()> {
        let (w, h) = (self.intr.width, self.intr.height);
        for img in [self.target, self.prev, self.next] {
            if img.width() != w || img.height() != h {
                return Err(Error::Contract("frame extent does not match intrinsics".into()));
            }
        }
        if self.rect.width != w || self.rect.height != h {
            return Err(Error::Contract("rectified grid extent does not match intrinsics".into()));
        }
        if let Some(t) = self.teacher {
            if t.width() != w || t.height() != h {
                return Err(Error::Contract("teacher extent does not match intrinsics".into()));
            }
        }
        Ok(())
    }

    fn sources(&self) -> [(&'a ImageBuffer, &'a RigidPose); 2] {
        [(self.prev, self.pose_prev), (self.next, self.pose_next)]
    }
}

/// Per-problem precomputation: the fisheye lookup grid with resolved
/// sampling cells, the rectified pinhole rays, the rectified target and
/// sources, and the (parameter-independent) identity residuals feeding the
/// auto-mask.
pub(crate) struct PipelineCache {
    rect_taps: Vec<Option<([usize; 4], [f64; 4])>>,
    rays: Vec<Vector3<f64>>,
    target_rect: ImageBuffer,
    target_rect_mask: ValidityMask,
    id_min: PixelMap,
    id_min_mask: ValidityMask,
}

impl PipelineCache {
    pub fn new(inputs: &SnippetInputs, cfg: &LossConfig) -> Result<Self> {
        inputs.validate()?;
        cfg.validate()?;
        let intr = inputs.intr;
        let rect = inputs.rect;
        let lookup = fisheye_lookup_grid(intr, rect);
        let (rw, rh) = (rect.width, rect.height);
        let mut rect_taps = Vec::with_capacity(rw * rh);
        let mut rays = Vec::with_capacity(rw * rh);
        for y in 0..rh {
            for x in 0..rw {
                rays.push(rect.ray(x as f64, y as f64));
                let (u, v, ok) = lookup.get(x, y);
                rect_taps.push(if ok {
                    SampleCell::locate(u, v, intr.width, intr.height)
                        .map(|cell| (cell.taps(intr.width, intr.height), cell.weights()))
                } else {
                    None
                });
            }
        }
        let sample_rect = |img: &ImageBuffer| crate::warp::bilinear_sample(img, &lookup);
        let (target_rect, target_rect_mask) = sample_rect(inputs.target);
        let mut id_maps = Vec::new();
        let mut id_masks = Vec::new();
        for (src, _) in inputs.sources() {
            let (src_rect, src_mask) = sample_rect(src);
            id_maps.push(photometric_residual(&target_rect, &src_rect, cfg.ssim_weight)?);
            id_masks.push(erode3(&target_rect_mask.and(&src_mask)?));
        }
        let (id_min, id_min_mask, _) = min_reprojection_indexed(
            &[&id_maps[0], &id_maps[1]],
            &[&id_masks[0], &id_masks[1]],
        )?;
        Ok(Self { rect_taps, rays, target_rect, target_rect_mask, id_min, id_min_mask })
    }
}

/// One-pixel 8-neighborhood erosion (out-of-raster neighbors ignored). The
/// photometric residual of a pixel adjacent to an invalid pixel reads
/// stand-in zeros through its SSIM window; eroding the aggregation mask
/// keeps such pixels from being penalized for invalid content.
pub(crate) fn erode3(mask: &ValidityMask) -> ValidityMask {
    let (w, h) = (mask.width(), mask.height());
    let mut out = ValidityMask::filled(w, h, false);
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let mut ok = true;
            'scan: for dy in -1..=1isize {
                for dx in -1..=1isize {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    if !mask.get(nx as usize, ny as usize) {
                        ok = false;
                        break 'scan;
                    }
                }
            }
            out.set(x, y, ok);
        }
    }
    out
}

/// Gradient accumulator for one evaluation: d total / d D at full resolution
/// per pyramid level, plus optional pose-tangent gradients (omega, delta_t
/// per source).
pub(crate) struct TotalGradSink {
    pub g_depth: Vec<Vec<f64>>,
    pub pose_grad: Option<[[f64; 6]; 2]>,
}

impl TotalGradSink {
    pub fn new(scales: usize, pixels: usize, want_pose: bool) -> Self {
        Self {
            g_depth: (0..scales).map(|_| vec![0.0; pixels]).collect(),
            pose_grad: want_pose.then_some([[0.0; 6]; 2]),
        }
    }
}

/// Decay-weighted total loss over the pyramid. The pyramid holds one
/// full-resolution fisheye-domain depth grid per scale (coarse levels
/// already upsampled); distillation is evaluated at scale 0 only.
pub fn total_loss(
    inputs: &SnippetInputs,
    pyramid: &[DepthGrid],
    cfg: &LossConfig,
    sched: &DecaySchedule,
    steps: u64,
) -> Result<LossReport> {
    let cache = PipelineCache::new(inputs, cfg)?;
    let (report, _) = evaluate(inputs, &cache, pyramid, cfg, sched, steps, None)?;
    Ok(report)
}

pub(crate) fn evaluate(
    inputs: &SnippetInputs,
    cache: &PipelineCache,
    pyramid: &[DepthGrid],
    cfg: &LossConfig,
    sched: &DecaySchedule,
    steps: u64,
    mut grad: Option<&mut TotalGradSink>,
) -> Result<(LossReport, u64)> {
    inputs.validate()?;
    cfg.validate()?;
    sched.validate()?;
    if pyramid.len() != cfg.scales {
        return Err(Error::Contract(format!(
            "pyramid has {} levels, config wants {}",
            pyramid.len(),
            cfg.scales
        )));
    }
    let (w, h) = (inputs.intr.width, inputs.intr.height);
    for level in pyramid {
        if level.width() != w || level.height() != h {
            return Err(Error::Contract("pyramid level extent mismatch".into()));
        }
    }
    let s = decay_factor(steps, sched);
    let mut fp = Fingerprint::new();

    let mut sum_ph = 0.0;
    let mut sum_sm = 0.0;
    let n_scales = cfg.scales as f64;
    for (k, depth) in pyramid.iter().enumerate() {
        let scale_grad = grad.as_deref_mut().map(|g| {
            let (g_depth, pose_grad) = (&mut g.g_depth[k], g.pose_grad.as_mut());
            ScaleGrad {
                g_depth,
                mult_ph: 1.0 / n_scales,
                mult_sm: cfg.w_sm / ((1u64 << k) as f64 * n_scales),
                pose_grad,
            }
        });
        let (l_ph, l_sm) = eval_scale(inputs, cache, depth, cfg, scale_grad, &mut fp)?;
        sum_ph += l_ph;
        sum_sm += l_sm / (1u64 << k) as f64;
    }
    let photometric = sum_ph / n_scales;
    let smoothness = sum_sm / n_scales;

    let mut ordinal = 0.0;
    let mut scale_invariant = 0.0;
    if let Some(teacher) = inputs.teacher {
        let d0 = &pyramid[0];
        if cfg.w_od > 0.0 {
            match grad.as_deref_mut() {
                Some(g) => {
                    let (l, gd) =
                        ordinal_distillation_grad(d0.values(), d0, teacher, cfg, Some(&mut fp))?;
                    ordinal = l;
                    for (gi, di) in g.g_depth[0].iter_mut().zip(&gd) {
                        *gi += s * cfg.w_od * di;
                    }
                }
                None => {
                    let (l, _) = ordinal_grid_core(d0.values(), d0, teacher, cfg, false, Some(&mut fp))?;
                    ordinal = l;
                }
            }
        }
        if cfg.w_sd > 0.0 {
            match grad {
                Some(g) => {
                    let (l, gd) = scale_invariant_grad(d0.values(), d0, teacher, Some(&mut fp))?;
                    scale_invariant = l;
                    for (gi, di) in g.g_depth[0].iter_mut().zip(&gd) {
                        *gi += s * cfg.w_sd * di;
                    }
                }
                None => {
                    let (l, _) = scale_invariant_core(d0.values(), d0, teacher, false, Some(&mut fp))?;
                    scale_invariant = l;
                }
            }
        }
    }

    let total = photometric
        + cfg.w_sm * smoothness
        + s * (cfg.w_od * ordinal + cfg.w_sd * scale_invariant);
    let report = LossReport { photometric, smoothness, ordinal, scale_invariant, total, steps, s };
    Ok((report, fp.finish()))
}

struct ScaleGrad<'a> {
    g_depth: &'a mut Vec<f64>,
    mult_ph: f64,
    mult_sm: f64,
    pose_grad: Option<&'a mut [[f64; 6]; 2]>,
}

struct WarpRec {
    cell: SampleCell,
    jac: [[f64; 3]; 2],
    p_prime: Vector3<f64>,
    rot_ray: Vector3<f64>,
}

/// Photometric + smoothness terms of one scale. Returns the raw losses; the
/// caller applies scale weights. Gradients (with multipliers already folded
/// in) accumulate into the sink.
#[allow(clippy::needless_range_loop)]
fn eval_scale(
    inputs: &SnippetInputs,
    cache: &PipelineCache,
    depth: &DepthGrid,
    cfg: &LossConfig,
    mut grad: Option<ScaleGrad>,
    fp: &mut Fingerprint,
) -> Result<(f64, f64)> {
    let intr = inputs.intr;
    let (iw, ih) = (intr.width, intr.height);
    let n = iw * ih;
    let want_grad = grad.is_some();
    let depth_mask = depth.mask().data();

    // Rectified intermediate depth through the fixed lookup taps.
    let mut dhat = vec![0.0f64; n];
    let mut dhat_ok = vec![false; n];
    for q in 0..n {
        if let Some((taps, wts)) = &cache.rect_taps[q] {
            if taps.iter().all(|i| depth_mask[*i]) {
                dhat[q] = taps
                    .iter()
                    .zip(wts)
                    .map(|(i, w)| depth.values()[*i] * w)
                    .sum();
                dhat_ok[q] = true;
            }
        }
    }

    // Warp both sources onto the rectified grid.
    let sources = inputs.sources();
    let mut synth_imgs: Vec<ImageBuffer> = Vec::with_capacity(2);
    let mut synth_masks: Vec<ValidityMask> = Vec::with_capacity(2);
    let mut recs: Vec<Vec<Option<WarpRec>>> = Vec::with_capacity(2);
    for (src, pose) in sources {
        let mut vals = vec![0.0f64; n];
        let mut ok = vec![false; n];
        let mut rec: Vec<Option<WarpRec>> = if want_grad {
            let mut v = Vec::with_capacity(n);
            v.resize_with(n, || None);
            v
        } else {
            Vec::new()
        };
        for q in 0..n {
            if !dhat_ok[q] {
                fp.write_bit(false);
                continue;
            }
            let p = cache.rays[q] * dhat[q];
            let p_src = pose.transform(&p);
            let (proj, jac) = if want_grad {
                intr.project_with_jacobian(&p_src)
            } else {
                (intr.project_point(&p_src), [[0.0; 3]; 2])
            };
            if !proj.valid {
                fp.write_bit(false);
                continue;
            }
            let Some(cell) = SampleCell::locate(proj.u, proj.v, iw, ih) else {
                fp.write_bit(false);
                continue;
            };
            fp.write_bit(true);
            fp.write_usize(cell.x0);
            fp.write_usize(cell.y0);
            vals[q] = cell.interpolate(src.data(), iw, ih).clamp(0.0, 1.0);
            ok[q] = true;
            if want_grad {
                rec[q] = Some(WarpRec {
                    cell,
                    jac,
                    p_prime: p_src,
                    rot_ray: pose.rotation() * cache.rays[q],
                });
            }
        }
        synth_imgs.push(ImageBuffer::from_vec(iw, ih, vals)?);
        synth_masks.push(ValidityMask::from_vec(iw, ih, ok)?);
        recs.push(rec);
    }

    // Residuals, masked minimum, auto-mask.
    let rho: Vec<PixelMap> = synth_imgs
        .iter()
        .map(|img| photometric_residual(&cache.target_rect, img, cfg.ssim_weight))
        .collect::<Result<_>>()?;
    let rho_masks: Vec<ValidityMask> = synth_masks
        .iter()
        .map(|m| cache.target_rect_mask.and(m).map(|joint| erode3(&joint)))
        .collect::<Result<_>>()?;
    let (min_map, min_mask, argmin) =
        min_reprojection_indexed(&[&rho[0], &rho[1]], &[&rho_masks[0], &rho_masks[1]])?;
    for a in &argmin {
        fp.write_usize(*a);
    }

    let mut kept = vec![false; n];
    let mut n_kept = 0usize;
    for q in 0..n {
        let (x, y) = (q % iw, q / iw);
        if !min_mask.get(x, y) {
            continue;
        }
        let better = !cache.id_min_mask.get(x, y) || min_map.get(x, y) < cache.id_min.get(x, y);
        if better {
            kept[q] = true;
            n_kept += 1;
        }
    }
    let fallback = n_kept == 0;
    fp.write_bit(fallback);
    if fallback {
        // Empty auto-mask: fall back to the unmasked valid mean to keep
        // gradients alive.
        for q in 0..n {
            let (x, y) = (q % iw, q / iw);
            kept[q] = min_mask.get(x, y);
            if kept[q] {
                n_kept += 1;
            }
        }
    }
    if n_kept == 0 {
        return Err(Error::Contract("no valid pixels survive for the photometric term".into()));
    }
    for k in &kept {
        fp.write_bit(*k);
    }
    let mut l_ph = 0.0;
    for q in 0..n {
        if kept[q] {
            l_ph += min_map.get(q % iw, q / iw);
        }
    }
    l_ph /= n_kept as f64;

    // Photometric gradient: through the residual of the argmin source, the
    // bilinear sample position, the projection, and the rectified depth.
    if let Some(g) = grad.as_mut() {
        let mut g_dhat = vec![0.0f64; n];
        for (s, (src, _)) in sources.iter().enumerate() {
            let mut g_rho = vec![0.0f64; n];
            let mut any = false;
            for q in 0..n {
                if kept[q] && argmin[q] == s {
                    g_rho[q] = g.mult_ph / n_kept as f64;
                    any = true;
                }
            }
            if !any {
                continue;
            }
            let g_b = photometric_backward(&cache.target_rect, &synth_imgs[s], cfg.ssim_weight, &g_rho);
            for q in 0..n {
                let Some(rec) = &recs[s][q] else { continue };
                let gb = g_b[q];
                if gb == 0.0 {
                    continue;
                }
                let (du, dv) = rec.cell.gradient(src.data(), iw, ih);
                let (gu, gv) = (gb * du, gb * dv);
                let g_p = Vector3::new(
                    gu * rec.jac[0][0] + gv * rec.jac[1][0],
                    gu * rec.jac[0][1] + gv * rec.jac[1][1],
                    gu * rec.jac[0][2] + gv * rec.jac[1][2],
                );
                g_dhat[q] += g_p.dot(&rec.rot_ray);
                if let Some(pg) = g.pose_grad.as_deref_mut() {
                    let rot = rec.p_prime.cross(&g_p);
                    pg[s][0] += rot.x;
                    pg[s][1] += rot.y;
                    pg[s][2] += rot.z;
                    pg[s][3] += g_p.x;
                    pg[s][4] += g_p.y;
                    pg[s][5] += g_p.z;
                }
            }
        }
        for q in 0..n {
            if !dhat_ok[q] || g_dhat[q] == 0.0 {
                continue;
            }
            let (taps, wts) = cache.rect_taps[q].as_ref().expect("dhat_ok implies taps");
            for (i, wgt) in taps.iter().zip(wts) {
                g.g_depth[*i] += wgt * g_dhat[q];
            }
        }
    }

    // Edge-aware smoothness on mean-normalized inverse depth, full-resolution
    // fisheye domain.
    let mut l_sm = 0.0;
    if cfg.w_sm > 0.0 {
        let disp: Vec<f64> = depth
            .values()
            .iter()
            .zip(depth_mask)
            .map(|(d, ok)| if *ok { 1.0 / d } else { 0.0 })
            .collect();
        match grad.as_mut() {
            Some(g) => {
                let (l, g_disp) =
                    smoothness_loss_grad(&disp, depth.mask(), inputs.target, Some(fp))?;
                l_sm = l;
                for i in 0..n {
                    if depth_mask[i] {
                        let d = depth.values()[i];
                        g.g_depth[i] += g.mult_sm * g_disp[i] * (-1.0 / (d * d));
                    }
                }
            }
            None => {
                let (l, _) = smoothness_core(&disp, depth.mask(), inputs.target, false, Some(fp))?;
                l_sm = l;
            }
        }
    }

    Ok((l_ph, l_sm))
}
