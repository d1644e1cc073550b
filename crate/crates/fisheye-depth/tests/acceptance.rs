//! Acceptance suite: one test per criterion, each printing a pass line with
//! its measured runtime. Every tolerance is pinned here; all randomness is
//! seeded, so each criterion reproduces bitwise across runs.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use fisheye_depth::camera::{rectified_intrinsics, FisheyeIntrinsics, RigidPose};
use fisheye_depth::depth_param::{sigmoid_to_depth, DepthBounds};
use fisheye_depth::loss::{
    decay_factor, ordinal_pair_loss, scale_invariant_loss, smoothness_loss, DecaySchedule,
    LossConfig,
};
use fisheye_depth::metrics::{compute_metrics, median_scale};
use fisheye_depth::optim::{
    gradcheck, optimize, Adaptivity, DepthProblem, InitMode, OptimizeConfig,
};
use fisheye_depth::oracle::{
    make_snippet, make_teacher, preset_intrinsics, preset_scene, smooth_bias_field, ScenePreset,
    SnippetBundle,
};
use fisheye_depth::raster::{DepthGrid, ImageBuffer};
use fisheye_depth::warp::{rectified_target, rectify_depth, synthesize_view};

fn pass(criterion: &str, started: Instant, detail: String) {
    println!("acceptance {criterion} PASS ({:.2} s): {detail}", started.elapsed().as_secs_f64());
}

#[test]
fn criterion_1_geometry_round_trip() {
    let started = Instant::now();
    let intr = FisheyeIntrinsics::new(
        300.0,
        300.0,
        320.0,
        200.0,
        [-0.05, 0.004, 0.0, 0.0],
        640,
        400,
        1.45,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    let mut checked = 0;
    let mut max_rel = 0.0f64;
    while checked < 10_000 {
        let theta = rng.random_range(0.0..0.95 * intr.theta_max);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let z: f64 = rng.random_range(0.2..50.0);
        let r = theta.tan();
        let p = Vector3::new(r * phase.cos() * z, r * phase.sin() * z, z);
        let proj = intr.project_point(&p);
        if !proj.valid {
            continue;
        }
        let dir = intr.unproject_ray(proj.u, proj.v).unwrap();
        let rec = dir * (z / dir.z);
        max_rel = max_rel.max((rec - p).norm() / p.norm().max(1.0));
        checked += 1;
    }
    assert!(max_rel < 1e-6, "max relative round-trip error {max_rel}");
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 1.0, "runtime {elapsed:.2} s exceeds 1 s");
    pass("1", started, format!("10^4 round trips, max relative error {max_rel:.2e}"));
}

#[test]
fn criterion_2_end_to_end_warp_consistency() {
    let started = Instant::now();
    let intr = preset_intrinsics();
    let rect = rectified_intrinsics(&intr, 0.8).unwrap();
    let mut worst = 0.0f64;
    for preset in [ScenePreset::Checker, ScenePreset::LowContrast, ScenePreset::Mixed] {
        let scene = preset_scene(preset, 0);
        let snip = make_snippet(&scene, &intr).unwrap();
        let d_hat = rectify_depth(snip.gt_depth(), &intr, &rect).unwrap();
        let (target, target_mask) = rectified_target(&snip.target.image, &intr, &rect).unwrap();
        for (src, pose) in [
            (&snip.prev.image, &snip.pose_prev),
            (&snip.next.image, &snip.pose_next),
        ] {
            let (synth, synth_mask) = synthesize_view(src, &d_hat, pose, &intr, &rect).unwrap();
            let mut sum = 0.0;
            let mut n = 0usize;
            for y in 0..rect.height {
                for x in 0..rect.width {
                    if synth_mask.get(x, y) && target_mask.get(x, y) {
                        sum += (synth.get(x, y) - target.get(x, y)).abs();
                        n += 1;
                    }
                }
            }
            assert!(n > 1500, "{preset:?}: too few valid pixels ({n})");
            let mean = sum / n as f64;
            worst = worst.max(mean);
            assert!(
                mean < 2.0 / 255.0,
                "{preset:?}: mean absolute intensity error {:.3}/255",
                mean * 255.0
            );
        }
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 5.0, "runtime {elapsed:.2} s exceeds 5 s");
    pass("2", started, format!("3 presets x 2 sources, worst mean error {:.3}/255", worst * 255.0));
}

/// Random 16x12 snippet with all loss terms active, mirroring the gradient
/// contract's reference problem.
fn small_random_problem(seed: u64) -> DepthProblem {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (w, h) = (16usize, 12usize);
    let intr =
        FisheyeIntrinsics::new(5.0, 5.0, 7.5, 5.5, [-0.03, 0.002, 0.0, 0.0], w, h, 1.45).unwrap();
    let rect = rectified_intrinsics(&intr, 0.8).unwrap();
    let smooth_image = |rng: &mut ChaCha8Rng| {
        let (a, b, c, d) = (
            rng.random_range(0.2..0.9),
            rng.random_range(0.2..0.9),
            rng.random_range(0.0..6.28),
            rng.random_range(0.0..6.28),
        );
        ImageBuffer::from_fn(w, h, |x, y| {
            0.5 + 0.24 * (a * x as f64 + c).sin() + 0.24 * (b * y as f64 + d).cos()
        })
        .unwrap()
    };
    let target = smooth_image(&mut rng);
    let prev = smooth_image(&mut rng);
    let next = smooth_image(&mut rng);
    let small_pose = |rng: &mut ChaCha8Rng| {
        RigidPose::from_axis_angle(
            Vector3::new(
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
            ),
            Vector3::new(
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
                rng.random_range(-0.01..0.01),
            ),
        )
    };
    let pose_prev = small_pose(&mut rng);
    let pose_next = small_pose(&mut rng);
    let teacher_vals: Vec<f64> = (0..w * h)
        .map(|i| {
            let (x, y) = (i % w, i / w);
            1.0 + 0.5 * (0.5 * x as f64).sin()
                + 0.4 * (0.4 * y as f64).cos()
                + rng.random_range(0.0..0.05)
        })
        .collect();
    DepthProblem {
        target,
        prev,
        next,
        pose_prev,
        pose_next,
        intr,
        rect,
        teacher: Some(DepthGrid::from_values(w, h, teacher_vals).unwrap()),
        loss: LossConfig { scales: 4, ..Default::default() },
        sched: DecaySchedule::default(),
    }
}

#[test]
fn criterion_3_gradient_oracle() {
    let started = Instant::now();
    let problem = small_random_problem(200);
    let mut logits = fisheye_depth::depth_param::LogitGrid::constant(16, 12, 4, 0.0).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for l in 0..logits.num_levels() {
        for v in logits.level_mut(l).data.iter_mut() {
            *v = rng.random_range(-1.0..1.0);
        }
    }
    let report = gradcheck(&problem, &logits, 200, 0).unwrap();
    assert!(report.n_checked >= 150, "too few informative samples: {report:?}");
    assert!(
        report.max_rel_error < 1e-4,
        "max relative error {} over {} checked ({} excluded at selection boundaries)",
        report.max_rel_error,
        report.n_checked,
        report.n_excluded
    );
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 30.0, "runtime {elapsed:.2} s exceeds 30 s");
    pass(
        "3",
        started,
        format!(
            "200 samples: max rel error {:.2e}, {} checked / {} boundary-excluded / {} negligible",
            report.max_rel_error, report.n_checked, report.n_excluded, report.n_negligible
        ),
    );
}

#[test]
fn criterion_4_hand_value_fixtures() {
    let started = Instant::now();
    // Ranking loss, teacher (2, 1) / student (3, 1): first branch softplus.
    let l = ordinal_pair_loss(3.0, 1.0, 2.0, 1.0, 1.1, 0.9).unwrap();
    let expect = (-2.0f64).exp().ln_1p();
    assert!((l - expect).abs() < 1e-9, "ordinal {l} vs {expect}");
    assert!((expect - 0.126928).abs() < 1e-6);

    // Decay factor after one period.
    let s = decay_factor(10_000, &DecaySchedule::default());
    assert!((s - 0.81).abs() < 1e-9, "decay {s}");

    // Mid-range sigmoid depth.
    let d = sigmoid_to_depth(0.5, DepthBounds::default()).unwrap();
    assert!((d - 1.0 / 5.005).abs() < 1e-9, "sigmoid depth {d}");
    assert!((d - 0.199800).abs() < 1e-6);

    // Scale-invariant loss of [1,2,3] vs [1,2,4] under the median/mean-
    // absolute-deviation normalization: [1,2,3] -> [-1.5, 0, 1.5] (t = 2,
    // s = 2/3) and [1,2,4] -> [-1, 0, 2] (t = 2, s = 1), so the mean
    // absolute difference is (0.5 + 0 + 0.5)/3 = 1/3.
    let a = DepthGrid::from_values(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
    let b = DepthGrid::from_values(3, 1, vec![1.0, 2.0, 4.0]).unwrap();
    let l = scale_invariant_loss(&a, &b).unwrap();
    assert!((l - 1.0 / 3.0).abs() < 1e-9, "scale-invariant {l}");

    pass("4", started, "ordinal / decay / sigmoid / scale-invariant fixtures".to_string());
}

fn recovery_problem(snip: &SnippetBundle, loss: LossConfig, sched: DecaySchedule) -> DepthProblem {
    let intr = preset_intrinsics();
    DepthProblem {
        target: snip.target.image.clone(),
        prev: snip.prev.image.clone(),
        next: snip.next.image.clone(),
        pose_prev: snip.pose_prev.clone(),
        pose_next: snip.pose_next.clone(),
        intr: intr.clone(),
        rect: rectified_intrinsics(&intr, 0.8).unwrap(),
        teacher: None,
        loss,
        sched,
    }
}

#[test]
fn criterion_5_depth_recovery_textured() {
    let started = Instant::now();
    let intr = preset_intrinsics();
    let scene = preset_scene(ScenePreset::Checker, 0);
    let snip = make_snippet(&scene, &intr).unwrap();
    let problem = recovery_problem(
        &snip,
        LossConfig { w_sm: 5e-2, w_od: 0.0, w_sd: 0.0, scales: 1, ..Default::default() },
        DecaySchedule::default(),
    );
    let cfg = OptimizeConfig {
        iterations: 2000,
        step_size: 0.035,
        adaptivity: Adaptivity::SecondMoment,
        init: InitMode::Constant(-2.0),
        bounds: DepthBounds::new(0.3, 4.5).unwrap(),
        ..Default::default()
    };
    let trace = optimize(&problem, &cfg).unwrap();
    let scaled = median_scale(&trace.final_depth, snip.gt_depth()).unwrap();
    let m = compute_metrics(&scaled, snip.gt_depth(), 20.0).unwrap();
    assert!(m.abs_rel < 0.05, "median-scaled AbsRel {:.4}", m.abs_rel);
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 120.0, "runtime {elapsed:.2} s exceeds 2 min");
    pass(
        "5",
        started,
        format!("2000 iterations: AbsRel {:.4}, delta1 {:.3}", m.abs_rel, m.delta1),
    );
}

#[test]
fn criterion_6_ablation_direction_low_contrast() {
    let started = Instant::now();
    let intr = preset_intrinsics();
    let mut improvements = Vec::new();
    for seed in [0u64, 1, 2] {
        let scene = preset_scene(ScenePreset::LowContrast, seed);
        let snip = make_snippet(&scene, &intr).unwrap();
        let bias = smooth_bias_field(96, 60, 0.12, 1.2, seed);
        let teacher = make_teacher(snip.gt_depth(), 1.5, &bias).unwrap();
        let mut abs_rel = Vec::new();
        for with_distill in [true, false] {
            let mut problem = recovery_problem(
                &snip,
                LossConfig {
                    w_sm: 5e-2,
                    w_od: if with_distill { 1.0 } else { 0.0 },
                    w_sd: if with_distill { 1.0 } else { 0.0 },
                    scales: 1,
                    ..Default::default()
                },
                DecaySchedule { base: 0.9, period: 80, ..Default::default() },
            );
            problem.teacher = with_distill.then(|| teacher.clone());
            let cfg = OptimizeConfig {
                iterations: 1200,
                step_size: 0.035,
                adaptivity: Adaptivity::SecondMoment,
                init: InitMode::Constant(-2.0),
                init_jitter: 0.05,
                seed,
                bounds: DepthBounds::new(0.3, 4.5).unwrap(),
                ..Default::default()
            };
            let trace = optimize(&problem, &cfg).unwrap();
            let scaled = median_scale(&trace.final_depth, snip.gt_depth()).unwrap();
            abs_rel.push(compute_metrics(&scaled, snip.gt_depth(), 20.0).unwrap().abs_rel);
        }
        let (with, without) = (abs_rel[0], abs_rel[1]);
        assert!(
            with < without,
            "seed {seed}: distillation did not help ({with:.4} vs {without:.4})"
        );
        let improvement = 1.0 - with / without;
        assert!(
            improvement >= 0.20,
            "seed {seed}: improvement {:.1}% below 20% ({with:.4} vs {without:.4})",
            improvement * 100.0
        );
        improvements.push(improvement);
    }
    let elapsed = started.elapsed().as_secs_f64();
    assert!(elapsed < 600.0, "runtime {elapsed:.2} s exceeds 10 min");
    pass(
        "6",
        started,
        format!(
            "distillation improvements across seeds: {:.1}% / {:.1}% / {:.1}%",
            improvements[0] * 100.0,
            improvements[1] * 100.0,
            improvements[2] * 100.0
        ),
    );
}

#[test]
fn criterion_7_decay_schedule_comparison() {
    let started = Instant::now();
    let intr = preset_intrinsics();
    let mut pairs = Vec::new();
    for seed in [0u64, 1, 2] {
        let scene = preset_scene(ScenePreset::Mixed, seed);
        let snip = make_snippet(&scene, &intr).unwrap();
        let bias = smooth_bias_field(96, 60, 0.12, 1.2, seed);
        let teacher = make_teacher(snip.gt_depth(), 1.5, &bias).unwrap();
        let mut finals = Vec::new();
        for base in [0.9f64, 0.98] {
            let mut problem = recovery_problem(
                &snip,
                LossConfig { w_sm: 5e-2, scales: 1, ..Default::default() },
                DecaySchedule { base, period: 80, ..Default::default() },
            );
            problem.teacher = Some(teacher.clone());
            let cfg = OptimizeConfig {
                iterations: 1200,
                step_size: 0.035,
                adaptivity: Adaptivity::SecondMoment,
                init: InitMode::Constant(-2.0),
                init_jitter: 0.05,
                seed,
                bounds: DepthBounds::new(0.3, 4.5).unwrap(),
                ..Default::default()
            };
            let trace = optimize(&problem, &cfg).unwrap();
            finals.push(trace.reports.last().unwrap().photometric);
        }
        assert!(
            finals[0] <= finals[1],
            "seed {seed}: fast decay ended at photometric {:.6}, slow at {:.6}",
            finals[0],
            finals[1]
        );
        pairs.push((finals[0], finals[1]));
    }
    pass(
        "7",
        started,
        format!(
            "final photometric fast vs slow decay: {:.5}<={:.5}, {:.5}<={:.5}, {:.5}<={:.5}",
            pairs[0].0, pairs[0].1, pairs[1].0, pairs[1].1, pairs[2].0, pairs[2].1
        ),
    );
}

#[test]
fn criterion_8_invariance_suite() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(800);

    // Scale-invariant loss is blind to positive affine maps of the student.
    for _ in 0..100 {
        let n = 24usize;
        let vals: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..8.0)).collect();
        let a: f64 = rng.random_range(0.1..10.0);
        let b: f64 = rng.random_range(0.0..3.0);
        let d = DepthGrid::from_values(6, 4, vals.clone()).unwrap();
        let affine = DepthGrid::from_values(6, 4, vals.iter().map(|v| a * v + b).collect()).unwrap();
        let loss = scale_invariant_loss(&affine, &d).unwrap();
        assert!(loss < 1e-9, "affine invariance violated: {loss}");
    }

    // Ordinal branch selection and loss value survive teacher rescaling.
    for _ in 0..100 {
        let (ta, tb): (f64, f64) = (rng.random_range(0.1..10.0), rng.random_range(0.1..10.0));
        let (ma, mb): (f64, f64) = (rng.random_range(0.1..5.0), rng.random_range(0.1..5.0));
        let c: f64 = rng.random_range(0.01..100.0);
        let l1 = ordinal_pair_loss(ma, mb, ta, tb, 1.1, 0.9).unwrap();
        let l2 = ordinal_pair_loss(ma, mb, c * ta, c * tb, 1.1, 0.9).unwrap();
        assert!((l1 - l2).abs() < 1e-9, "branch invariance violated: {l1} vs {l2}");
    }

    // Smoothness is invariant to global disparity rescaling.
    for _ in 0..100 {
        let (w, h) = (7usize, 5usize);
        let vals: Vec<f64> = (0..w * h).map(|_| rng.random_range(0.2..4.0)).collect();
        let img = ImageBuffer::from_fn(w, h, |x, y| ((x * 3 + y * 5) % 7) as f64 / 7.0).unwrap();
        let c: f64 = rng.random_range(0.05..20.0);
        let d1 = DepthGrid::from_values(w, h, vals.clone()).unwrap();
        let d2 = DepthGrid::from_values(w, h, vals.iter().map(|v| c * v).collect()).unwrap();
        let l1 = smoothness_loss(&d1, &img).unwrap();
        let l2 = smoothness_loss(&d2, &img).unwrap();
        assert!((l1 - l2).abs() < 1e-9 * (1.0 + l1.abs()), "scale invariance violated");
    }

    // Median-scaled metrics ignore global prediction rescaling.
    for _ in 0..100 {
        let n = 30usize;
        let gt_vals: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..15.0)).collect();
        let pr_vals: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..15.0)).collect();
        let gt = DepthGrid::from_values(6, 5, gt_vals).unwrap();
        let pred = DepthGrid::from_values(6, 5, pr_vals.clone()).unwrap();
        let c: f64 = rng.random_range(0.05..20.0);
        let pred_scaled =
            DepthGrid::from_values(6, 5, pr_vals.iter().map(|v| c * v).collect()).unwrap();
        let m1 = compute_metrics(&median_scale(&pred, &gt).unwrap(), &gt, 20.0).unwrap();
        let m2 = compute_metrics(&median_scale(&pred_scaled, &gt).unwrap(), &gt, 20.0).unwrap();
        assert!((m1.abs_rel - m2.abs_rel).abs() < 1e-9);
        assert!((m1.rmse - m2.rmse).abs() < 1e-9);
        assert!((m1.rmse_log - m2.rmse_log).abs() < 1e-9);
        assert!((m1.delta1 - m2.delta1).abs() < 1e-12);
    }

    pass("8", started, "4 invariance properties x 100 random instances".to_string());
}
