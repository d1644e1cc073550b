//! Training losses and their decay-weighted combination.
//!
//! The total objective is the per-pixel minimum photometric reprojection
//! over the two snippet sources (auto-masked), an edge-aware smoothness term
//! on mean-normalized inverse depth, and two teacher-distillation terms
//! (pairwise ordinal ranking and scale/shift-invariant L1), the latter two
//! shrunk over training by the decay schedule.

mod distill;
mod fingerprint;
mod photometric;
mod pipeline;
mod smoothness;
mod ssim;

pub use distill::{
    normalize_scale_shift, ordinal_distillation_loss, ordinal_pair_loss, scale_invariant_loss,
};
pub use photometric::{auto_mask, min_reprojection, photometric_residual};
pub use pipeline::{total_loss, SnippetInputs};
pub use smoothness::smoothness_loss;
pub use ssim::ssim_map;

pub(crate) use distill::{
    ordinal_distillation_grad, ordinal_grid_core, scale_invariant_core, scale_invariant_grad,
};
pub(crate) use photometric::{min_reprojection_indexed, photometric_backward};
pub(crate) use pipeline::{evaluate, PipelineCache, TotalGradSink};
pub(crate) use smoothness::{smoothness_core, smoothness_loss_grad};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Loss weights and shape parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Smoothness weight (divided by 2^scale per pyramid level).
    pub w_sm: f64,
    /// Ordinal distillation weight.
    pub w_od: f64,
    /// Scale-invariant distillation weight.
    pub w_sd: f64,
    /// Ranking-gap parameter above which the teacher calls a pair "farther".
    pub alpha: f64,
    /// Ranking-gap parameter below which the teacher calls a pair "closer".
    pub beta: f64,
    /// SSIM share of the photometric residual (the rest is L1).
    pub ssim_weight: f64,
    /// Number of pyramid levels the loss is built over.
    pub scales: usize,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            w_sm: 1e-3,
            w_od: 1.0,
            w_sd: 1.0,
            alpha: 1.1,
            beta: 0.9,
            ssim_weight: 0.85,
            scales: 4,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if self.w_sm < 0.0 || self.w_od < 0.0 || self.w_sd < 0.0 {
            return Err(Error::InvalidParam("loss weights must be >= 0".into()));
        }
        if !(self.beta < 1.0 && 1.0 < self.alpha) {
            return Err(Error::InvalidParam(format!(
                "ranking gap must satisfy beta < 1 < alpha, got ({}, {})",
                self.beta, self.alpha
            )));
        }
        if !(0.0..=1.0).contains(&self.ssim_weight) {
            return Err(Error::InvalidParam("ssim_weight must lie in [0, 1]".into()));
        }
        if self.scales < 1 {
            return Err(Error::InvalidParam("scales must be >= 1".into()));
        }
        Ok(())
    }
}

/// How the decay exponent advances with the step count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DecayMode {
    /// lambda = floor(steps / period).
    PiecewiseConstant,
    /// lambda = steps / period.
    Continuous,
}

/// Distillation decay: s = base^(2 lambda).
#[derive(Debug, Clone, PartialEq)]
pub struct DecaySchedule {
    pub base: f64,
    pub period: u64,
    pub mode: DecayMode,
}

impl Default for DecaySchedule {
    fn default() -> Self {
        Self { base: 0.9, period: 10_000, mode: DecayMode::PiecewiseConstant }
    }
}

impl DecaySchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.base > 0.0 && self.base <= 1.0) {
            return Err(Error::InvalidParam(format!("decay base must lie in (0, 1], got {}", self.base)));
        }
        if self.period == 0 {
            return Err(Error::InvalidParam("decay period must be >= 1".into()));
        }
        Ok(())
    }
}

/// Decay factor at a step count.
pub fn decay_factor(steps: u64, sched: &DecaySchedule) -> f64 {
    let lambda = match sched.mode {
        DecayMode::PiecewiseConstant => (steps / sched.period) as f64,
        DecayMode::Continuous => steps as f64 / sched.period as f64,
    };
    sched.base.powf(2.0 * lambda)
}

/// Scalar summary of one loss evaluation. `smoothness` is the mean over
/// scales of L_sm / 2^scale, so the invariant
/// total = ph + w_sm * sm + s * (w_od * od + w_sd * sd) holds exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    #[serde(rename = "ph")]
    pub photometric: f64,
    #[serde(rename = "sm")]
    pub smoothness: f64,
    #[serde(rename = "od")]
    pub ordinal: f64,
    #[serde(rename = "sd")]
    pub scale_invariant: f64,
    pub total: f64,
    pub steps: u64,
    pub s: f64,
}

impl LossReport {
    /// Single-line JSON record.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("loss report serializes")
    }
}
