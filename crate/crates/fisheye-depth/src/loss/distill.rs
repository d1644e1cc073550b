//! Distillation losses: pairwise ordinal ranking against a teacher depth map
//! and a scale/shift-invariant L1 term.

use crate::error::{Error, Result};
use crate::loss::fingerprint::Fingerprint;
use crate::loss::LossConfig;
use crate::raster::{DepthGrid, PixelMap};

/// Exponent clamp before exp() in the ranking loss; beyond this the softplus
/// is constant to double precision.
const EXP_CLAMP: f64 = 30.0;

#[inline]
fn softplus(z: f64) -> f64 {
    let zc = z.clamp(-EXP_CLAMP, EXP_CLAMP);
    if zc > 0.0 {
        zc + (-zc).exp().ln_1p()
    } else {
        zc.exp().ln_1p()
    }
}

#[inline]
fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Which branch of the ranking loss a teacher pair selects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum RankBranch {
    /// Teacher says a is farther: d_teacher_a > alpha * d_teacher_b.
    Farther,
    /// Teacher says a is closer: d_teacher_a < beta * d_teacher_b.
    Closer,
    /// Teacher values are close: pull the student values together.
    Equal,
}

pub(crate) fn rank_branch(d_teacher_a: f64, d_teacher_b: f64, alpha: f64, beta: f64) -> RankBranch {
    if d_teacher_a > alpha * d_teacher_b {
        RankBranch::Farther
    } else if d_teacher_a < beta * d_teacher_b {
        RankBranch::Closer
    } else {
        RankBranch::Equal
    }
}

/// Ranking loss for one ordered pair.
pub fn ordinal_pair_loss(
    d_mono_a: f64,
    d_mono_b: f64,
    d_teacher_a: f64,
    d_teacher_b: f64,
    alpha: f64,
    beta: f64,
) -> Result<f64> {
    let (loss, _, _) = ordinal_pair_loss_grad(d_mono_a, d_mono_b, d_teacher_a, d_teacher_b, alpha, beta)?;
    Ok(loss)
}

/// Pair loss plus its derivatives with respect to the two student values.
/// Outside the exponent clamp the softplus branches are flat.
pub(crate) fn ordinal_pair_loss_grad(
    d_mono_a: f64,
    d_mono_b: f64,
    d_teacher_a: f64,
    d_teacher_b: f64,
    alpha: f64,
    beta: f64,
) -> Result<(f64, f64, f64)> {
    if d_teacher_a <= 0.0 || d_teacher_a.is_nan() || d_teacher_b <= 0.0 || d_teacher_b.is_nan() {
        return Err(Error::Domain(format!(
            "teacher depths must be positive, got ({d_teacher_a}, {d_teacher_b})"
        )));
    }
    Ok(match rank_branch(d_teacher_a, d_teacher_b, alpha, beta) {
        RankBranch::Farther => {
            let z = -d_mono_a + d_mono_b;
            let g = if z.abs() < EXP_CLAMP { sigmoid(z) } else { 0.0 };
            (softplus(z), -g, g)
        }
        RankBranch::Closer => {
            let z = d_mono_a - d_mono_b;
            let g = if z.abs() < EXP_CLAMP { sigmoid(z) } else { 0.0 };
            (softplus(z), g, -g)
        }
        RankBranch::Equal => {
            let diff = d_mono_a - d_mono_b;
            let s = if diff > 0.0 {
                1.0
            } else if diff < 0.0 {
                -1.0
            } else {
                0.0
            };
            (diff.abs(), s, -s)
        }
    })
}

/// Ordinal distillation over a grid: ranking losses of every jointly valid
/// pixel against its left neighbor and against the neighbor above, each
/// family averaged over its own pair count, then summed.
pub fn ordinal_distillation_loss(
    d_mono: &DepthGrid,
    d_teacher: &DepthGrid,
    cfg: &LossConfig,
) -> Result<f64> {
    let (loss, _) = ordinal_grid_core(d_mono.values(), d_mono, d_teacher, cfg, false, None)?;
    Ok(loss)
}

/// Grid loss plus gradient with respect to the student values. The student
/// values are passed separately so the optimizer can evaluate at candidate
/// values sharing the grid's mask.
pub(crate) fn ordinal_distillation_grad(
    mono_values: &[f64],
    mono_like: &DepthGrid,
    d_teacher: &DepthGrid,
    cfg: &LossConfig,
    fp: Option<&mut Fingerprint>,
) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = ordinal_grid_core(mono_values, mono_like, d_teacher, cfg, true, fp)?;
    Ok((loss, grad.expect("grad requested")))
}

pub(crate) fn ordinal_grid_core(
    mono: &[f64],
    mono_like: &DepthGrid,
    teacher: &DepthGrid,
    cfg: &LossConfig,
    want_grad: bool,
    mut fp: Option<&mut Fingerprint>,
) -> Result<(f64, Option<Vec<f64>>)> {
    let (w, h) = (mono_like.width(), mono_like.height());
    if teacher.width() != w || teacher.height() != h || mono.len() != w * h {
        return Err(Error::Contract("ordinal_distillation_loss: extent mismatch".into()));
    }
    let joint = |x: usize, y: usize| mono_like.valid(x, y) && teacher.valid(x, y);

    let mut grad = if want_grad { Some(vec![0.0; w * h]) } else { None };
    // Two pair families; each pair stores (loss, index_a, g_a, index_b, g_b).
    let mut totals = [0.0f64; 2];
    let mut counts = [0usize; 2];
    let mut pair_grads: Vec<(usize, f64, usize, f64, usize)> = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !joint(x, y) {
                continue;
            }
            let ia = y * w + x;
            // Left neighbor, then the neighbor above.
            for (family, (nx, ny)) in
                [(0usize, (x.wrapping_sub(1), y)), (1usize, (x, y.wrapping_sub(1)))]
            {
                if nx >= w || ny >= h || !joint(nx, ny) {
                    continue;
                }
                let ib = ny * w + nx;
                let (loss, ga, gb) = ordinal_pair_loss_grad(
                    mono[ia],
                    mono[ib],
                    teacher.value(x, y),
                    teacher.value(nx, ny),
                    cfg.alpha,
                    cfg.beta,
                )?;
                if let Some(fp) = fp.as_deref_mut() {
                    // Only the "otherwise" branch selects on student values.
                    if rank_branch(teacher.value(x, y), teacher.value(nx, ny), cfg.alpha, cfg.beta)
                        == RankBranch::Equal
                    {
                        fp.write_sign(mono[ia] - mono[ib]);
                    }
                }
                totals[family] += loss;
                counts[family] += 1;
                if want_grad {
                    pair_grads.push((ia, ga, ib, gb, family));
                }
            }
        }
    }
    if counts[0] + counts[1] == 0 {
        return Err(Error::Contract("ordinal_distillation_loss: no valid pairs".into()));
    }
    let mean = |family: usize| {
        if counts[family] == 0 {
            0.0
        } else {
            totals[family] / counts[family] as f64
        }
    };
    let loss = mean(0) + mean(1);
    if let Some(g) = grad.as_mut() {
        for (ia, ga, ib, gb, family) in pair_grads {
            if counts[family] == 0 {
                continue;
            }
            let scale = 1.0 / counts[family] as f64;
            g[ia] += ga * scale;
            g[ib] += gb * scale;
        }
    }
    Ok((loss, grad))
}

/// Median/spread statistics of a value set: t = median, s = mean |v - t|.
/// `median_taps` lists the (index, weight) pairs whose values define t.
pub(crate) struct NormStats {
    pub t: f64,
    pub s: f64,
    pub median_taps: Vec<(usize, f64)>,
}

pub(crate) fn norm_stats(values: &[f64], mask: &[bool]) -> Result<NormStats> {
    let mut order: Vec<usize> = (0..values.len()).filter(|i| mask[*i]).collect();
    if order.is_empty() {
        return Err(Error::Contract("normalize_scale_shift: no valid pixels".into()));
    }
    order.sort_by(|a, b| values[*a].partial_cmp(&values[*b]).expect("finite values"));
    let n = order.len();
    let (t, median_taps) = if n % 2 == 1 {
        (values[order[n / 2]], vec![(order[n / 2], 1.0)])
    } else {
        let (i, j) = (order[n / 2 - 1], order[n / 2]);
        (0.5 * (values[i] + values[j]), vec![(i, 0.5), (j, 0.5)])
    };
    let s = order.iter().map(|i| (values[*i] - t).abs()).sum::<f64>() / n as f64;
    if s < 1e-12 {
        return Err(Error::Contract("normalize_scale_shift: degenerate spread (constant input)".into()));
    }
    Ok(NormStats { t, s, median_taps })
}

/// Scale/shift normalization: subtract the median, divide by the mean
/// absolute deviation from the median, both over the valid set.
pub fn normalize_scale_shift(d: &DepthGrid) -> Result<PixelMap> {
    let stats = norm_stats(d.values(), d.mask().data())?;
    let data = d
        .values()
        .iter()
        .zip(d.mask().data())
        .map(|(v, ok)| if *ok { (*v - stats.t) / stats.s } else { 0.0 })
        .collect();
    PixelMap::from_vec(d.width(), d.height(), data)
}

/// Mean absolute difference of the two normalized maps over jointly valid
/// pixels. Each map is normalized over its own valid set.
pub fn scale_invariant_loss(d_mono: &DepthGrid, d_teacher: &DepthGrid) -> Result<f64> {
    let (loss, _) = scale_invariant_core(d_mono.values(), d_mono, d_teacher, false, None)?;
    Ok(loss)
}

pub(crate) fn scale_invariant_grad(
    mono_values: &[f64],
    mono_like: &DepthGrid,
    d_teacher: &DepthGrid,
    fp: Option<&mut Fingerprint>,
) -> Result<(f64, Vec<f64>)> {
    let (loss, grad) = scale_invariant_core(mono_values, mono_like, d_teacher, true, fp)?;
    Ok((loss, grad.expect("grad requested")))
}

pub(crate) fn scale_invariant_core(
    mono: &[f64],
    mono_like: &DepthGrid,
    teacher: &DepthGrid,
    want_grad: bool,
    fp: Option<&mut Fingerprint>,
) -> Result<(f64, Option<Vec<f64>>)> {
    let (w, h) = (mono_like.width(), mono_like.height());
    if teacher.width() != w || teacher.height() != h || mono.len() != w * h {
        return Err(Error::Contract("scale_invariant_loss: extent mismatch".into()));
    }
    let n = w * h;
    let mono_mask = mono_like.mask().data();
    let st_m = norm_stats(mono, mono_mask)?;
    let st_t = norm_stats(teacher.values(), teacher.mask().data())?;

    let joint: Vec<bool> = (0..n).map(|i| mono_mask[i] && teacher.mask().data()[i]).collect();
    let n_joint = joint.iter().filter(|b| **b).count();
    if n_joint == 0 {
        return Err(Error::Contract("scale_invariant_loss: empty joint mask".into()));
    }

    let mut loss = 0.0;
    let mut signs = vec![0.0f64; n];
    for i in 0..n {
        if !joint[i] {
            continue;
        }
        let nm = (mono[i] - st_m.t) / st_m.s;
        let nt = (teacher.values()[i] - st_t.t) / st_t.s;
        let diff = nm - nt;
        loss += diff.abs();
        signs[i] = if diff > 0.0 {
            1.0
        } else if diff < 0.0 {
            -1.0
        } else {
            0.0
        };
    }
    loss /= n_joint as f64;
    if let Some(fp) = fp {
        for (i, wgt) in &st_m.median_taps {
            fp.write_usize(*i);
            fp.write_sign(*wgt);
        }
        for i in 0..n {
            if joint[i] {
                fp.write_sign(signs[i]);
            }
            if mono_mask[i] {
                fp.write_sign(mono[i] - st_m.t);
            }
        }
    }

    if !want_grad {
        return Ok((loss, None));
    }

    // L = (1/|J|) sum_q |(D_q - t)/s - nt_q|. With t and s both functions of
    // D: dL/dD_p = (1/(|J| s)) [ sgn_p - (dt/dD_p) G1 - (ds/dD_p / s) G2 ],
    // where G1 = sum sgn_q and G2 = sum sgn_q (D_q - t).
    let mut g1 = 0.0;
    let mut g2 = 0.0;
    for i in 0..n {
        if joint[i] {
            g1 += signs[i];
            g2 += signs[i] * (mono[i] - st_m.t);
        }
    }
    let n_mono = mono_mask.iter().filter(|b| **b).count() as f64;
    let dev_sign: Vec<f64> = (0..n)
        .map(|i| {
            if !mono_mask[i] {
                return 0.0;
            }
            let d = mono[i] - st_m.t;
            if d > 0.0 {
                1.0
            } else if d < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
        .collect();
    let sum_dev_sign: f64 = dev_sign.iter().sum();
    let mut dt = vec![0.0f64; n];
    for (i, wgt) in &st_m.median_taps {
        dt[*i] = *wgt;
    }
    let scale = 1.0 / (n_joint as f64 * st_m.s);
    let mut grad = vec![0.0; n];
    for i in 0..n {
        if !mono_mask[i] {
            continue;
        }
        let ds = (dev_sign[i] - dt[i] * sum_dev_sign) / n_mono;
        let direct = if joint[i] { signs[i] } else { 0.0 };
        grad[i] = scale * (direct - dt[i] * g1 - ds / st_m.s * g2);
    }
    Ok((loss, Some(grad)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pair_loss_hand_values() {
        // Teacher (2, 1) with alpha = 1.1 selects the farther branch.
        let l = ordinal_pair_loss(3.0, 1.0, 2.0, 1.0, 1.1, 0.9).unwrap();
        assert!((l - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
        assert!((l - 0.126928).abs() < 1e-6);

        // Same branch, student disagreeing.
        let l = ordinal_pair_loss(1.0, 3.0, 2.0, 1.0, 1.1, 0.9).unwrap();
        assert!((l - (1.0 + (2.0f64).exp()).ln()).abs() < 1e-12);
        assert!((l - 2.126928).abs() < 1e-6);

        // Equal teacher values, equal students: otherwise branch, zero.
        assert_eq!(ordinal_pair_loss(1.0, 1.0, 1.0, 1.0, 1.1, 0.9).unwrap(), 0.0);

        assert!(ordinal_pair_loss(1.0, 1.0, 0.0, 1.0, 1.1, 0.9).is_err());
        assert!(ordinal_pair_loss(1.0, 1.0, 1.0, -2.0, 1.1, 0.9).is_err());
    }

    #[test]
    fn pair_loss_clamps_huge_exponents() {
        let l = ordinal_pair_loss(-100.0, 100.0, 2.0, 1.0, 1.1, 0.9).unwrap();
        assert!(l.is_finite());
        assert!((l - 30.0).abs() < 1e-9);
    }

    #[test]
    fn branch_depends_only_on_teacher_ratio() {
        let mut rng = ChaCha8Rng::seed_from_u64(30);
        for _ in 0..500 {
            let ta = rng.random_range(0.1..10.0);
            let tb = rng.random_range(0.1..10.0);
            let c = rng.random_range(0.01..100.0);
            let b1 = rank_branch(ta, tb, 1.1, 0.9);
            let b2 = rank_branch(c * ta, c * tb, 1.1, 0.9);
            assert_eq!(b1, b2);
            let (ma, mb) = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
            let l1 = ordinal_pair_loss(ma, mb, ta, tb, 1.1, 0.9).unwrap();
            let l2 = ordinal_pair_loss(ma, mb, c * ta, c * tb, 1.1, 0.9).unwrap();
            assert!((l1 - l2).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_loss_single_pair_hand_case() {
        let mono = DepthGrid::from_values(2, 1, vec![3.0, 1.0]).unwrap();
        let teacher = DepthGrid::from_values(2, 1, vec![2.0, 1.0]).unwrap();
        let cfg = LossConfig::default();
        // One horizontal pair (pixel 1 against its left neighbor 0): teacher
        // ratio 1/2 < beta selects the closer branch with z = 1 - 3 = -2.
        let l = ordinal_distillation_loss(&mono, &teacher, &cfg).unwrap();
        assert!((l - (1.0 + (-2.0f64).exp()).ln()).abs() < 1e-12);
        assert!((l - 0.126928).abs() < 1e-6);
    }

    #[test]
    fn grid_loss_zero_on_matching_constant() {
        let mono = DepthGrid::constant(4, 3, 2.0).unwrap();
        let teacher = DepthGrid::constant(4, 3, 5.0).unwrap();
        let cfg = LossConfig::default();
        assert_eq!(ordinal_distillation_loss(&mono, &teacher, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn grid_loss_invariant_under_teacher_power_when_branches_hold() {
        // gamma-warping the teacher preserves branch selection whenever every
        // ratio stays outside the adjusted [beta, alpha] bands; verify by
        // brute-force branch enumeration.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let cfg = LossConfig::default();
        let gamma = 1.7;
        let (w, h) = (6usize, 5usize);
        'outer: for _ in 0..50 {
            let tvals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..5.0)).collect();
            // Require all adjacent ratios strictly outside both bands for
            // gamma and 1 (so both grids select identical branches).
            for y in 0..h {
                for x in 0..w {
                    for (nx, ny) in [(x.wrapping_sub(1), y), (x, y.wrapping_sub(1))] {
                        if nx >= w || ny >= h {
                            continue;
                        }
                        let r = tvals[y * w + x] / tvals[ny * w + nx];
                        let bands_ok = (r > cfg.alpha || r < cfg.beta)
                            && (r.powf(gamma) > cfg.alpha || r.powf(gamma) < cfg.beta)
                            && (r > 1.0) == (r.powf(gamma) > 1.0);
                        if !bands_ok {
                            continue 'outer;
                        }
                    }
                }
            }
            let mvals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..5.0)).collect();
            let mono = DepthGrid::from_values(w, h, mvals).unwrap();
            let teacher = DepthGrid::from_values(w, h, tvals.clone()).unwrap();
            let warped =
                DepthGrid::from_values(w, h, tvals.iter().map(|v| v.powf(gamma)).collect()).unwrap();
            let l1 = ordinal_distillation_loss(&mono, &teacher, &cfg).unwrap();
            let l2 = ordinal_distillation_loss(&mono, &warped, &cfg).unwrap();
            assert!((l1 - l2).abs() < 1e-12);
        }
    }

    #[test]
    fn grid_loss_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(32);
        let cfg = LossConfig::default();
        let (w, h) = (7usize, 6usize);
        let mvals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..5.0)).collect();
        let tvals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..5.0)).collect();
        let mono = DepthGrid::from_values(w, h, mvals.clone()).unwrap();
        let teacher = DepthGrid::from_values(w, h, tvals.clone()).unwrap();
        let got = ordinal_distillation_loss(&mono, &teacher, &cfg).unwrap();

        // Direct re-evaluation: explicit loops over both pair families.
        let pair = |ma: f64, mb: f64, ta: f64, tb: f64| -> f64 {
            if ta > cfg.alpha * tb {
                (1.0 + (-ma + mb).clamp(-30.0, 30.0).exp()).ln()
            } else if ta < cfg.beta * tb {
                (1.0 + (ma - mb).clamp(-30.0, 30.0).exp()).ln()
            } else {
                (ma - mb).abs()
            }
        };
        let mut sum_l = 0.0;
        let mut n_l = 0;
        let mut sum_t = 0.0;
        let mut n_t = 0;
        for y in 0..h {
            for x in 0..w {
                if x > 0 {
                    sum_l += pair(
                        mvals[y * w + x],
                        mvals[y * w + x - 1],
                        tvals[y * w + x],
                        tvals[y * w + x - 1],
                    );
                    n_l += 1;
                }
                if y > 0 {
                    sum_t += pair(
                        mvals[y * w + x],
                        mvals[(y - 1) * w + x],
                        tvals[y * w + x],
                        tvals[(y - 1) * w + x],
                    );
                    n_t += 1;
                }
            }
        }
        let expect = sum_l / n_l as f64 + sum_t / n_t as f64;
        assert!((got - expect).abs() < 1e-12);
    }

    #[test]
    fn normalize_hand_case_and_invariance() {
        let d = DepthGrid::from_values(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let n = normalize_scale_shift(&d).unwrap();
        // t = 2, s = (1 + 0 + 1)/3 = 2/3.
        let expect = [-1.5, 0.0, 1.5];
        for (a, b) in n.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }

        // Affine input maps to the same normalized output.
        let affine = DepthGrid::from_values(3, 1, vec![1.0 * 4.0 + 7.0, 2.0 * 4.0 + 7.0, 3.0 * 4.0 + 7.0])
            .unwrap();
        let na = normalize_scale_shift(&affine).unwrap();
        for (a, b) in na.data().iter().zip(n.data()) {
            assert!((a - b).abs() < 1e-12);
        }

        // Constant input has zero spread.
        let c = DepthGrid::constant(3, 1, 5.0).unwrap();
        assert!(normalize_scale_shift(&c).is_err());
    }

    #[test]
    fn scale_invariant_zero_under_affine_maps() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let vals: Vec<f64> = (0..24).map(|_| rng.random_range(0.5..6.0)).collect();
        let d = DepthGrid::from_values(6, 4, vals.clone()).unwrap();
        let scaled = DepthGrid::from_values(6, 4, vals.iter().map(|v| 3.0 * v).collect()).unwrap();
        let shifted = DepthGrid::from_values(6, 4, vals.iter().map(|v| v + 2.0).collect()).unwrap();
        assert!(scale_invariant_loss(&scaled, &d).unwrap() < 1e-12);
        assert!(scale_invariant_loss(&shifted, &d).unwrap() < 1e-12);
    }

    #[test]
    fn scale_invariant_hand_value() {
        // normalize([1,2,3]) = [-1.5, 0, 1.5]; normalize([1,2,4]) = [-1, 0, 2]
        // (t = 2, s = (1 + 0 + 2)/3 = 1); mean abs diff = (0.5 + 0 + 0.5)/3.
        let a = DepthGrid::from_values(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        let b = DepthGrid::from_values(3, 1, vec![1.0, 2.0, 4.0]).unwrap();
        let l = scale_invariant_loss(&a, &b).unwrap();
        assert!((l - 1.0 / 3.0).abs() < 1e-12, "got {l}");
    }

    #[test]
    fn ordinal_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let (w, h) = (5usize, 4usize);
        let mvals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..5.0)).collect();
        let tvals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..5.0)).collect();
        let mono = DepthGrid::from_values(w, h, mvals.clone()).unwrap();
        let teacher = DepthGrid::from_values(w, h, tvals).unwrap();
        let cfg = LossConfig::default();
        let (_, grad) = ordinal_distillation_grad(&mvals, &mono, &teacher, &cfg, None).unwrap();
        let eps = 1e-7;
        let mut v = mvals.clone();
        for i in 0..w * h {
            let orig = v[i];
            v[i] = orig + eps;
            let fp = ordinal_grid_core(&v, &mono, &teacher, &cfg, false, None).unwrap().0;
            v[i] = orig - eps;
            let fm = ordinal_grid_core(&v, &mono, &teacher, &cfg, false, None).unwrap().0;
            v[i] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            assert!(
                (fd - grad[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                "coord {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
    }

    #[test]
    fn scale_invariant_grad_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(35);
        let (w, h) = (5usize, 4usize);
        let mvals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.5..5.0)).collect();
        let tvals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.5..5.0)).collect();
        let mono = DepthGrid::from_values(w, h, mvals.clone()).unwrap();
        let teacher = DepthGrid::from_values(w, h, tvals).unwrap();
        let (_, grad) = scale_invariant_grad(&mvals, &mono, &teacher, None).unwrap();
        let eps = 1e-7;
        let mut v = mvals.clone();
        for i in 0..w * h {
            let orig = v[i];
            v[i] = orig + eps;
            let fp = scale_invariant_core(&v, &mono, &teacher, false, None).unwrap().0;
            v[i] = orig - eps;
            let fm = scale_invariant_core(&v, &mono, &teacher, false, None).unwrap().0;
            v[i] = orig;
            let fd = (fp - fm) / (2.0 * eps);
            assert!(
                (fd - grad[i]).abs() < 1e-5 * (1.0 + fd.abs()),
                "coord {i}: fd {fd} vs analytic {}",
                grad[i]
            );
        }
    }
}
