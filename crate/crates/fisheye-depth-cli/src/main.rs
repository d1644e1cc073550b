//! Command-line driver: scene generation, view synthesis, loss evaluation,
//! direct depth optimization, metric evaluation, and gradient checking.

use std::path::PathBuf;
use std::process::ExitCode;

use fisheye_depth::camera::{
    rectified_intrinsics, unproject_rectified, FisheyeIntrinsics, RectifiedIntrinsics,
    THETA_MAX_DEFAULT,
};
use fisheye_depth::depth_param::{logits_to_depth_pyramid, DepthBounds, LogitGrid};
use fisheye_depth::error::Error;
use fisheye_depth::io::{
    ingest_teacher, read_pfm, read_snippet_bundle, write_pfm, write_pgm, write_snippet_bundle,
    write_xyz, Config, LoadedBundle, PgmDepth, TeacherMode,
};
use fisheye_depth::loss::{total_loss, DecayMode, DecaySchedule, LossConfig, SnippetInputs};
use fisheye_depth::metrics::{average_reports, compute_metrics, median_scale, MetricReport};
use fisheye_depth::optim::{
    gradcheck, optimize, Adaptivity, DepthProblem, InitMode, OptimizeConfig,
};
use fisheye_depth::oracle::{
    make_snippet, make_teacher, preset_scene, smooth_bias_field, ScenePreset,
};
use fisheye_depth::raster::{ImageBuffer, ValidityMask};
use fisheye_depth::warp::{rectified_target, rectify_depth, synthesize_view};

const USAGE: &str = "\
usage: fisheye-depth <command> --config PATH [options]

commands:
  gen       --config scene.cfg --out DIR [--seed N]
            render a snippet bundle (3 PGM frames, ground-truth PFM, pose
            manifest, optional corrupted teacher map)
  warp      --config cam.cfg --bundle DIR --out DIR [--source prev|next]
            [--depth FILE.pfm]
            synthesize the target view from a source frame
  loss      --config loss.cfg --bundle DIR [--depth FILE.pfm] [--steps N]
            print one loss report as a JSON line
  optimize  --config opt.cfg --bundle DIR --out DIR [--cloud FILE.xyz]
            recover depth; writes trace.jsonl and depth.pfm
  eval      --config eval.cfg --pred FILE.pfm --gt FILE.pfm [more pairs]
            print a metric report as a JSON line
  gradcheck --config opt.cfg --bundle DIR [--samples N] [--seed N]
            compare analytic gradients against central finite differences

exit codes: 0 success, 1 contract violation, 2 i/o or format error";

fn main() -> ExitCode {
    let args: Vec<String> = std::env::args().skip(1).collect();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

struct Cli {
    config: PathBuf,
    seed: u64,
    out: Option<PathBuf>,
    bundle: Option<PathBuf>,
    source: String,
    depth: Option<PathBuf>,
    steps: u64,
    samples: usize,
    cloud: Option<PathBuf>,
    pairs: Vec<(PathBuf, PathBuf)>,
}

fn parse_flags(args: &[String]) -> Result<Cli, Error> {
    let mut cli = Cli {
        config: PathBuf::new(),
        seed: 0,
        out: None,
        bundle: None,
        source: "next".to_string(),
        depth: None,
        steps: 0,
        samples: 200,
        cloud: None,
        pairs: Vec::new(),
    };
    let mut preds: Vec<PathBuf> = Vec::new();
    let mut gts: Vec<PathBuf> = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let mut value = |name: &str| -> Result<&String, Error> {
            it.next().ok_or_else(|| Error::InvalidParam(format!("flag {name} needs a value")))
        };
        match flag.as_str() {
            "--config" => cli.config = PathBuf::from(value("--config")?),
            "--seed" => {
                cli.seed = value("--seed")?
                    .parse()
                    .map_err(|_| Error::InvalidParam("bad --seed value".into()))?
            }
            "--out" => cli.out = Some(PathBuf::from(value("--out")?)),
            "--bundle" => cli.bundle = Some(PathBuf::from(value("--bundle")?)),
            "--source" => cli.source = value("--source")?.clone(),
            "--depth" => cli.depth = Some(PathBuf::from(value("--depth")?)),
            "--steps" => {
                cli.steps = value("--steps")?
                    .parse()
                    .map_err(|_| Error::InvalidParam("bad --steps value".into()))?
            }
            "--samples" => {
                cli.samples = value("--samples")?
                    .parse()
                    .map_err(|_| Error::InvalidParam("bad --samples value".into()))?
            }
            "--cloud" => cli.cloud = Some(PathBuf::from(value("--cloud")?)),
            "--pred" => preds.push(PathBuf::from(value("--pred")?)),
            "--gt" => gts.push(PathBuf::from(value("--gt")?)),
            other => {
                return Err(Error::InvalidParam(format!("unknown flag {other:?}")));
            }
        }
    }
    if preds.len() != gts.len() {
        return Err(Error::InvalidParam("--pred and --gt must come in pairs".into()));
    }
    cli.pairs = preds.into_iter().zip(gts).collect();
    if cli.config.as_os_str().is_empty() {
        return Err(Error::InvalidParam("--config PATH is required".into()));
    }
    Ok(cli)
}

fn run(args: &[String]) -> Result<(), Error> {
    let Some(command) = args.first() else {
        eprintln!("{USAGE}");
        return Err(Error::InvalidParam("missing subcommand".into()));
    };
    let dispatch: fn(&Cli, &Config) -> Result<(), Error> = match command.as_str() {
        "gen" => cmd_gen,
        "warp" => cmd_warp,
        "loss" => cmd_loss,
        "optimize" => cmd_optimize,
        "eval" => cmd_eval,
        "gradcheck" => cmd_gradcheck,
        other => {
            eprintln!("{USAGE}");
            return Err(Error::InvalidParam(format!("unknown subcommand {other:?}")));
        }
    };
    let cli = parse_flags(&args[1..])?;
    let cfg = Config::load(&cli.config)?;
    dispatch(&cli, &cfg)
}

const INTRINSICS_KEYS: &[&str] = &[
    "fx", "fy", "cx", "cy", "k1", "k2", "k3", "k4", "width", "height", "theta_max", "focal_scale",
];

const LOSS_KEYS: &[&str] = &[
    "w_sm", "w_od", "w_sd", "alpha", "beta", "ssim_weight", "scales", "decay_base",
    "decay_period", "decay_mode",
];

const OPTIM_KEYS: &[&str] = &[
    "iterations",
    "step_size",
    "adaptivity",
    "pose_refinement",
    "d_min",
    "d_max",
    "init",
    "init_logit",
    "init_jitter",
];

const SCENE_KEYS: &[&str] =
    &["scene", "teacher_gamma", "teacher_bias_amplitude", "teacher_bias_cycles"];

const TEACHER_KEYS: &[&str] = &["teacher_mode"];

fn allowed(sets: &[&[&'static str]]) -> Vec<&'static str> {
    sets.iter().flat_map(|s| s.iter().copied()).collect()
}

fn read_intrinsics(cfg: &Config) -> Result<(FisheyeIntrinsics, RectifiedIntrinsics), Error> {
    let intr = FisheyeIntrinsics::new(
        cfg.require_f64("fx")?,
        cfg.require_f64("fy")?,
        cfg.require_f64("cx")?,
        cfg.require_f64("cy")?,
        [
            cfg.f64_or("k1", 0.0)?,
            cfg.f64_or("k2", 0.0)?,
            cfg.f64_or("k3", 0.0)?,
            cfg.f64_or("k4", 0.0)?,
        ],
        cfg.require_usize("width")?,
        cfg.require_usize("height")?,
        cfg.f64_or("theta_max", THETA_MAX_DEFAULT)?,
    )?;
    let rect = rectified_intrinsics(&intr, cfg.f64_or("focal_scale", 0.8)?)?;
    Ok((intr, rect))
}

fn read_loss_config(cfg: &Config) -> Result<(LossConfig, DecaySchedule), Error> {
    let defaults = LossConfig::default();
    let loss = LossConfig {
        w_sm: cfg.f64_or("w_sm", defaults.w_sm)?,
        w_od: cfg.f64_or("w_od", defaults.w_od)?,
        w_sd: cfg.f64_or("w_sd", defaults.w_sd)?,
        alpha: cfg.f64_or("alpha", defaults.alpha)?,
        beta: cfg.f64_or("beta", defaults.beta)?,
        ssim_weight: cfg.f64_or("ssim_weight", defaults.ssim_weight)?,
        scales: cfg.usize_or("scales", defaults.scales)?,
    };
    loss.validate()?;
    let mode = match cfg.get_str("decay_mode").unwrap_or("piecewise") {
        "piecewise" => DecayMode::PiecewiseConstant,
        "continuous" => DecayMode::Continuous,
        other => {
            return Err(Error::Format(format!(
                "decay_mode must be piecewise or continuous, got {other:?}"
            )));
        }
    };
    let sched = DecaySchedule {
        base: cfg.f64_or("decay_base", 0.9)?,
        period: cfg.u64_or("decay_period", 10_000)?,
        mode,
    };
    sched.validate()?;
    Ok((loss, sched))
}

fn read_optimize_config(cfg: &Config, seed: u64) -> Result<OptimizeConfig, Error> {
    let defaults = OptimizeConfig::default();
    let adaptivity = match cfg.get_str("adaptivity").unwrap_or("second_moment") {
        "none" => Adaptivity::None,
        "second_moment" => Adaptivity::SecondMoment,
        other => {
            return Err(Error::Format(format!(
                "adaptivity must be none or second_moment, got {other:?}"
            )));
        }
    };
    let init = match cfg.get_str("init").unwrap_or("constant") {
        "constant" => InitMode::Constant(cfg.f64_or("init_logit", 0.0)?),
        "teacher" => InitMode::FromTeacher,
        other => {
            return Err(Error::Format(format!("init must be constant or teacher, got {other:?}")));
        }
    };
    let out = OptimizeConfig {
        iterations: cfg.usize_or("iterations", defaults.iterations)?,
        step_size: cfg.f64_or("step_size", defaults.step_size)?,
        adaptivity,
        pose_refinement: cfg.bool_or("pose_refinement", false)?,
        seed,
        init,
        init_jitter: cfg.f64_or("init_jitter", 0.0)?,
        bounds: DepthBounds::new(cfg.f64_or("d_min", 0.1)?, cfg.f64_or("d_max", 100.0)?)?,
    };
    out.validate()?;
    Ok(out)
}

fn cmd_gen(cli: &Cli, cfg: &Config) -> Result<(), Error> {
    let all = allowed(&[INTRINSICS_KEYS, SCENE_KEYS]);
    cfg.check_keys(&all, &["fx", "fy", "cx", "cy", "width", "height", "scene"])?;
    let (intr, _) = read_intrinsics(cfg)?;
    let scene_name = cfg.require_str("scene")?;
    let preset = ScenePreset::from_name(scene_name)
        .ok_or_else(|| Error::Format(format!("unknown scene preset {scene_name:?}")))?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("gen needs --out DIR".into()))?;
    let scene = preset_scene(preset, cli.seed);
    let snippet = make_snippet(&scene, &intr)?;
    let teacher = match cfg.get_f64("teacher_gamma")? {
        Some(gamma) => {
            let bias = smooth_bias_field(
                intr.width,
                intr.height,
                cfg.f64_or("teacher_bias_amplitude", 0.12)?,
                cfg.f64_or("teacher_bias_cycles", 1.2)?,
                cli.seed,
            );
            Some(make_teacher(snippet.gt_depth(), gamma, &bias)?)
        }
        None => None,
    };
    write_snippet_bundle(out, &snippet, teacher.as_ref())?;
    Ok(())
}

fn load_bundle(cli: &Cli) -> Result<LoadedBundle, Error> {
    let dir = cli
        .bundle
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("this subcommand needs --bundle DIR".into()))?;
    read_snippet_bundle(dir)
}

fn mask_image(mask: &ValidityMask) -> ImageBuffer {
    ImageBuffer::from_vec(
        mask.width(),
        mask.height(),
        mask.data().iter().map(|b| if *b { 1.0 } else { 0.0 }).collect(),
    )
    .expect("mask image in range")
}

fn cmd_warp(cli: &Cli, cfg: &Config) -> Result<(), Error> {
    let all = allowed(&[INTRINSICS_KEYS]);
    cfg.check_keys(&all, &["fx", "fy", "cx", "cy", "width", "height"])?;
    let (intr, rect) = read_intrinsics(cfg)?;
    let bundle = load_bundle(cli)?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("warp needs --out DIR".into()))?;
    std::fs::create_dir_all(out)?;
    let depth = match &cli.depth {
        Some(path) => read_pfm(path)?,
        None => bundle.gt.clone(),
    };
    let (src, pose) = match cli.source.as_str() {
        "prev" => (&bundle.prev, &bundle.pose_prev),
        "next" => (&bundle.next, &bundle.pose_next),
        other => {
            return Err(Error::InvalidParam(format!(
                "--source must be prev or next, got {other:?}"
            )));
        }
    };
    let d_hat = rectify_depth(&depth, &intr, &rect)?;
    let (synth, synth_mask) = synthesize_view(src, &d_hat, pose, &intr, &rect)?;
    let (target_rect, target_mask) = rectified_target(&bundle.target, &intr, &rect)?;
    write_pgm(out.join("synthesized.pgm"), &synth, PgmDepth::Sixteen)?;
    write_pgm(out.join("rectified_target.pgm"), &target_rect, PgmDepth::Sixteen)?;
    write_pgm(out.join("synthesized_mask.pgm"), &mask_image(&synth_mask), PgmDepth::Eight)?;
    write_pgm(
        out.join("rectified_target_mask.pgm"),
        &mask_image(&target_mask),
        PgmDepth::Eight,
    )?;
    Ok(())
}

fn build_problem(cli: &Cli, cfg: &Config) -> Result<(DepthProblem, LoadedBundle), Error> {
    let (intr, rect) = read_intrinsics(cfg)?;
    let (loss, sched) = read_loss_config(cfg)?;
    let bundle = load_bundle(cli)?;
    let teacher = match &bundle.teacher_path {
        Some(path) => {
            let mode = match cfg.get_str("teacher_mode").unwrap_or("depth") {
                "depth" => TeacherMode::Depth,
                "inverse_depth" => TeacherMode::InverseDepth,
                other => {
                    return Err(Error::Format(format!(
                        "teacher_mode must be depth or inverse_depth, got {other:?}"
                    )));
                }
            };
            Some(ingest_teacher(path, mode)?)
        }
        None => None,
    };
    let problem = DepthProblem {
        target: bundle.target.clone(),
        prev: bundle.prev.clone(),
        next: bundle.next.clone(),
        pose_prev: bundle.pose_prev.clone(),
        pose_next: bundle.pose_next.clone(),
        intr,
        rect,
        teacher,
        loss,
        sched,
    };
    problem.validate()?;
    Ok((problem, bundle))
}

fn cmd_loss(cli: &Cli, cfg: &Config) -> Result<(), Error> {
    let all = allowed(&[INTRINSICS_KEYS, LOSS_KEYS, TEACHER_KEYS, &["d_min", "d_max"]]);
    cfg.check_keys(&all, &["fx", "fy", "cx", "cy", "width", "height"])?;
    let (problem, bundle) = build_problem(cli, cfg)?;
    let depth = match &cli.depth {
        Some(path) => read_pfm(path)?,
        None => bundle.gt,
    };
    let bounds = DepthBounds::new(cfg.f64_or("d_min", 0.1)?, cfg.f64_or("d_max", 100.0)?)?;
    let logits = LogitGrid::from_depth(&depth, problem.loss.scales, bounds)?;
    let pyramid = logits_to_depth_pyramid(&logits, bounds);
    let inputs = SnippetInputs {
        target: &problem.target,
        prev: &problem.prev,
        next: &problem.next,
        pose_prev: &problem.pose_prev,
        pose_next: &problem.pose_next,
        intr: &problem.intr,
        rect: &problem.rect,
        teacher: problem.teacher.as_ref(),
    };
    let report = total_loss(&inputs, &pyramid, &problem.loss, &problem.sched, cli.steps)?;
    println!("{}", report.to_json_line());
    Ok(())
}

fn cmd_optimize(cli: &Cli, cfg: &Config) -> Result<(), Error> {
    let all = allowed(&[INTRINSICS_KEYS, LOSS_KEYS, OPTIM_KEYS, TEACHER_KEYS]);
    cfg.check_keys(
        &all,
        &["fx", "fy", "cx", "cy", "width", "height", "iterations", "step_size"],
    )?;
    let (problem, _) = build_problem(cli, cfg)?;
    let opt_cfg = read_optimize_config(cfg, cli.seed)?;
    let out = cli
        .out
        .as_ref()
        .ok_or_else(|| Error::InvalidParam("optimize needs --out DIR".into()))?;
    std::fs::create_dir_all(out)?;
    let trace = optimize(&problem, &opt_cfg)?;
    let mut lines = String::new();
    for report in &trace.reports {
        lines.push_str(&report.to_json_line());
        lines.push('\n');
    }
    std::fs::write(out.join("trace.jsonl"), lines)?;
    write_pfm(out.join("depth.pfm"), &trace.final_depth)?;
    if let Some(cloud_path) = &cli.cloud {
        let d_hat = rectify_depth(&trace.final_depth, &problem.intr, &problem.rect)?;
        let points = unproject_rectified(&d_hat, &problem.rect)?;
        write_xyz(cloud_path, &points, d_hat.mask())?;
    }
    if let Some(last) = trace.reports.last() {
        println!("{}", last.to_json_line());
    }
    Ok(())
}

fn cmd_eval(cli: &Cli, cfg: &Config) -> Result<(), Error> {
    cfg.check_keys(&["cap", "median_scaling"], &[])?;
    if cli.pairs.is_empty() {
        return Err(Error::InvalidParam("eval needs at least one --pred/--gt pair".into()));
    }
    let cap = cfg.f64_or("cap", 20.0)?;
    let scaling = cfg.bool_or("median_scaling", true)?;
    let mut reports: Vec<MetricReport> = Vec::new();
    for (pred_path, gt_path) in &cli.pairs {
        let pred = read_pfm(pred_path)?;
        let gt = read_pfm(gt_path)?;
        let pred = if scaling { median_scale(&pred, &gt)? } else { pred };
        reports.push(compute_metrics(&pred, &gt, cap)?);
    }
    let report = if reports.len() == 1 {
        reports.pop().expect("one report")
    } else {
        average_reports(&reports)?
    };
    let mut value = serde_json::to_value(&report).expect("metric report serializes");
    value["median_scaled"] = serde_json::Value::Bool(scaling);
    println!("{value}");
    Ok(())
}

fn cmd_gradcheck(cli: &Cli, cfg: &Config) -> Result<(), Error> {
    let all = allowed(&[INTRINSICS_KEYS, LOSS_KEYS, OPTIM_KEYS, TEACHER_KEYS]);
    cfg.check_keys(&all, &["fx", "fy", "cx", "cy", "width", "height"])?;
    let (problem, _) = build_problem(cli, cfg)?;
    let init_logit = cfg.f64_or("init_logit", 0.0)?;
    let init_jitter = cfg.f64_or("init_jitter", 0.5)?;
    let mut logits = LogitGrid::constant(
        problem.intr.width,
        problem.intr.height,
        problem.loss.scales,
        init_logit,
    )?;
    if init_jitter > 0.0 {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(cli.seed);
        for l in 0..logits.num_levels() {
            for v in logits.level_mut(l).data.iter_mut() {
                *v += rng.random_range(-init_jitter..init_jitter);
            }
        }
    }
    let report = gradcheck(&problem, &logits, cli.samples, cli.seed)?;
    println!(
        "{{\"max_rel_error\":{},\"mean_rel_error\":{},\"n_checked\":{},\"n_excluded\":{},\"n_negligible\":{}}}",
        report.max_rel_error,
        report.mean_rel_error,
        report.n_checked,
        report.n_excluded,
        report.n_negligible
    );
    Ok(())
}
