//! Direct first-order minimization of the total loss over the logit grid,
//! standing in for network training at desk scale.

mod grad;

pub use grad::{gradcheck, loss_and_gradient, GradCheckReport, PoseGradients};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::camera::{FisheyeIntrinsics, RectifiedIntrinsics, RigidPose};
use crate::depth_param::{logits_to_depth_pyramid, DepthBounds, LogitGrid};
use crate::error::{Error, Result};
use crate::loss::{DecaySchedule, LossConfig, LossReport, PipelineCache, SnippetInputs};
use crate::raster::{DepthGrid, ImageBuffer};

/// One direct depth-recovery problem: a three-frame snippet, the relative
/// poses, the intrinsics pair, an optional teacher map, and the loss setup.
#[derive(Debug, Clone)]
pub struct DepthProblem {
    pub target: ImageBuffer,
    pub prev: ImageBuffer,
    pub next: ImageBuffer,
    pub pose_prev: RigidPose,
    pub pose_next: RigidPose,
    pub intr: FisheyeIntrinsics,
    pub rect: RectifiedIntrinsics,
    pub teacher: Option<DepthGrid>,
    pub loss: LossConfig,
    pub sched: DecaySchedule,
}

impl DepthProblem {
    pub fn validate(&self) -> Result<()> {
        self.loss.validate()?;
        self.sched.validate()?;
        self.inputs(&self.pose_prev, &self.pose_next).validate()
    }

    pub(crate) fn inputs<'a>(
        &'a self,
        pose_prev: &'a RigidPose,
        pose_next: &'a RigidPose,
    ) -> SnippetInputs<'a> {
        SnippetInputs {
            target: &self.target,
            prev: &self.prev,
            next: &self.next,
            pose_prev,
            pose_next,
            intr: &self.intr,
            rect: &self.rect,
            teacher: self.teacher.as_ref(),
        }
    }
}

/// The snippet's relative poses as mutable optimizer state.
#[derive(Debug, Clone, PartialEq)]
pub struct SnippetPoses {
    pub prev: RigidPose,
    pub next: RigidPose,
}

/// Per-parameter step scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adaptivity {
    /// Plain gradient descent (gradient debugging).
    None,
    /// Second-moment scaling with epsilon 1e-8, the default.
    SecondMoment,
}

/// How the logit grid is initialized.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitMode {
    /// Every logit set to this value (0 gives mid-range depth).
    Constant(f64),
    /// Inverted from the problem's teacher map.
    FromTeacher,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeConfig {
    pub iterations: usize,
    pub step_size: f64,
    pub adaptivity: Adaptivity,
    pub pose_refinement: bool,
    pub seed: u64,
    pub init: InitMode,
    /// Uniform [-j, j] noise added to the initial logits (seeded); breaks the
    /// degenerate constant-field case when distillation is active.
    pub init_jitter: f64,
    pub bounds: DepthBounds,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        Self {
            iterations: 500,
            step_size: 0.1,
            adaptivity: Adaptivity::SecondMoment,
            pose_refinement: false,
            seed: 0,
            init: InitMode::Constant(0.0),
            init_jitter: 0.0,
            bounds: DepthBounds::default(),
        }
    }
}

impl OptimizeConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations == 0 {
            return Err(Error::InvalidParam("iterations must be >= 1".into()));
        }
        if self.step_size <= 0.0 || !self.step_size.is_finite() {
            return Err(Error::InvalidParam(format!(
                "step_size must be positive, got {}",
                self.step_size
            )));
        }
        if self.init_jitter < 0.0 {
            return Err(Error::InvalidParam("init_jitter must be >= 0".into()));
        }
        Ok(())
    }
}

/// Optimization record: one report per iteration (loss values as evaluated,
/// before each step), the final full-resolution depth, and the final poses.
#[derive(Debug, Clone)]
pub struct OptTrace {
    pub reports: Vec<LossReport>,
    pub final_depth: DepthGrid,
    pub final_poses: SnippetPoses,
}

const BETA2: f64 = 0.99;
const ADAPT_EPS: f64 = 1e-8;

/// Deterministic first-order descent on the logit grid (and optionally the
/// snippet poses). The decay schedule advances with the iteration count.
pub fn optimize(problem: &DepthProblem, cfg: &OptimizeConfig) -> Result<OptTrace> {
    problem.validate()?;
    cfg.validate()?;
    let (w, h) = (problem.intr.width, problem.intr.height);
    let mut logits = match cfg.init {
        InitMode::Constant(v) => LogitGrid::constant(w, h, problem.loss.scales, v)?,
        InitMode::FromTeacher => {
            let teacher = problem.teacher.as_ref().ok_or_else(|| {
                Error::InvalidParam("init = FromTeacher requires a teacher map".into())
            })?;
            LogitGrid::from_depth(teacher, problem.loss.scales, cfg.bounds)?
        }
    };
    if cfg.init_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for l in 0..logits.num_levels() {
            for v in logits.level_mut(l).data.iter_mut() {
                *v += rng.random_range(-cfg.init_jitter..cfg.init_jitter);
            }
        }
    }

    let cache = PipelineCache::new(&problem.inputs(&problem.pose_prev, &problem.pose_next), &problem.loss)?;
    let mut poses = SnippetPoses { prev: problem.pose_prev.clone(), next: problem.pose_next.clone() };
    let mut second_moment = logits.zeros_like();
    let mut pose_moment = [[0.0f64; 6]; 2];
    let mut reports = Vec::with_capacity(cfg.iterations);

    for it in 0..cfg.iterations {
        let (report, grad, pose_grad, _) = grad::evaluate_at(
            problem,
            &cache,
            &logits,
            &poses,
            cfg.bounds,
            it as u64,
            cfg.pose_refinement,
        )?;
        if !report.total.is_finite() {
            return Err(Error::Diverged(format!(
                "total loss became non-finite at iteration {it}: {report:?}"
            )));
        }
        reports.push(report);

        let bias_fix = 1.0 - BETA2.powi(it as i32 + 1);
        for l in 0..logits.num_levels() {
            let level = logits.level_mut(l);
            let g_level = &grad.level(l).data;
            let m_level = &mut second_moment.level_mut(l).data;
            for i in 0..level.data.len() {
                let g = g_level[i];
                let step = match cfg.adaptivity {
                    Adaptivity::None => cfg.step_size * g,
                    Adaptivity::SecondMoment => {
                        m_level[i] = BETA2 * m_level[i] + (1.0 - BETA2) * g * g;
                        let v_hat = m_level[i] / bias_fix;
                        cfg.step_size * g / (v_hat.sqrt() + ADAPT_EPS)
                    }
                };
                level.data[i] -= step;
            }
        }

        if cfg.pose_refinement {
            let pg = pose_grad.expect("pose gradients requested");
            let mut tangents = [[0.0f64; 6]; 2];
            for s in 0..2 {
                for i in 0..6 {
                    let g = pg.tangents[s][i];
                    tangents[s][i] = match cfg.adaptivity {
                        Adaptivity::None => -cfg.step_size * g,
                        Adaptivity::SecondMoment => {
                            pose_moment[s][i] = BETA2 * pose_moment[s][i] + (1.0 - BETA2) * g * g;
                            let v_hat = pose_moment[s][i] / bias_fix;
                            -cfg.step_size * g / (v_hat.sqrt() + ADAPT_EPS)
                        }
                    };
                }
            }
            poses.prev = RigidPose::exp(&tangents[0]).compose(&poses.prev);
            poses.next = RigidPose::exp(&tangents[1]).compose(&poses.next);
        }
    }

    let pyramid = logits_to_depth_pyramid(&logits, cfg.bounds);
    let final_depth = pyramid.into_iter().next().expect("scales >= 1");
    Ok(OptTrace { reports, final_depth, final_poses: poses })
}
