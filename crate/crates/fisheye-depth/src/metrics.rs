//! Depth evaluation metrics with median scaling and depth capping.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::raster::DepthGrid;

/// Clamp floor applied before the log metrics.
const CLAMP_FLOOR: f64 = 1e-3;

/// Standard depth metric set over the jointly valid pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub abs_rel: f64,
    pub sq_rel: f64,
    pub rmse: f64,
    pub rmse_log: f64,
    pub delta1: f64,
    pub delta2: f64,
    pub delta3: f64,
    pub n_pixels: usize,
}

impl MetricReport {
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("metric report serializes")
    }
}

/// Rescale the prediction by median(gt) / median(pred) over the jointly
/// valid pixels.
pub fn median_scale(pred: &DepthGrid, gt: &DepthGrid) -> Result<DepthGrid> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Contract("median_scale: extent mismatch".into()));
    }
    let joint: Vec<bool> = pred
        .mask()
        .data()
        .iter()
        .zip(gt.mask().data())
        .map(|(a, b)| *a && *b)
        .collect();
    let collect = |g: &DepthGrid| -> Vec<f64> {
        g.values()
            .iter()
            .zip(&joint)
            .filter(|(_, ok)| **ok)
            .map(|(v, _)| *v)
            .collect()
    };
    let gt_vals = collect(gt);
    if gt_vals.is_empty() {
        return Err(Error::Contract("median_scale: no jointly valid pixels".into()));
    }
    let med_gt = crate::raster::median(gt_vals)?;
    let med_pred = crate::raster::median(collect(pred))?;
    if med_pred <= 0.0 || med_gt <= 0.0 {
        return Err(Error::Contract("median_scale: nonpositive median".into()));
    }
    pred.scaled(med_gt / med_pred)
}

/// Metric set with both grids clamped into (CLAMP_FLOOR, cap].
pub fn compute_metrics(pred: &DepthGrid, gt: &DepthGrid, cap: f64) -> Result<MetricReport> {
    if pred.width() != gt.width() || pred.height() != gt.height() {
        return Err(Error::Contract("compute_metrics: extent mismatch".into()));
    }
    if cap <= CLAMP_FLOOR || cap.is_nan() {
        return Err(Error::InvalidParam(format!("cap must exceed {CLAMP_FLOOR}, got {cap}")));
    }
    let mut n = 0usize;
    let mut abs_rel = 0.0;
    let mut sq_rel = 0.0;
    let mut sq = 0.0;
    let mut sq_log = 0.0;
    let mut d1 = 0usize;
    let mut d2 = 0usize;
    let mut d3 = 0usize;
    for i in 0..pred.values().len() {
        if !pred.mask().data()[i] || !gt.mask().data()[i] {
            continue;
        }
        let p = pred.values()[i].clamp(CLAMP_FLOOR, cap);
        let g = gt.values()[i].clamp(CLAMP_FLOOR, cap);
        n += 1;
        let diff = p - g;
        abs_rel += diff.abs() / g;
        sq_rel += diff * diff / g;
        sq += diff * diff;
        let dl = p.ln() - g.ln();
        sq_log += dl * dl;
        let ratio = (p / g).max(g / p);
        if ratio < 1.25 {
            d1 += 1;
        }
        if ratio < 1.25f64.powi(2) {
            d2 += 1;
        }
        if ratio < 1.25f64.powi(3) {
            d3 += 1;
        }
    }
    if n == 0 {
        return Err(Error::Contract("compute_metrics: no valid pixels".into()));
    }
    let nf = n as f64;
    Ok(MetricReport {
        abs_rel: abs_rel / nf,
        sq_rel: sq_rel / nf,
        rmse: (sq / nf).sqrt(),
        rmse_log: (sq_log / nf).sqrt(),
        delta1: d1 as f64 / nf,
        delta2: d2 as f64 / nf,
        delta3: d3 as f64 / nf,
        n_pixels: n,
    })
}

/// Unweighted mean of per-image reports (batch mode); pixel counts add up.
pub fn average_reports(reports: &[MetricReport]) -> Result<MetricReport> {
    if reports.is_empty() {
        return Err(Error::Contract("average_reports: empty batch".into()));
    }
    let nf = reports.len() as f64;
    Ok(MetricReport {
        abs_rel: reports.iter().map(|r| r.abs_rel).sum::<f64>() / nf,
        sq_rel: reports.iter().map(|r| r.sq_rel).sum::<f64>() / nf,
        rmse: reports.iter().map(|r| r.rmse).sum::<f64>() / nf,
        rmse_log: reports.iter().map(|r| r.rmse_log).sum::<f64>() / nf,
        delta1: reports.iter().map(|r| r.delta1).sum::<f64>() / nf,
        delta2: reports.iter().map(|r| r.delta2).sum::<f64>() / nf,
        delta3: reports.iter().map(|r| r.delta3).sum::<f64>() / nf,
        n_pixels: reports.iter().map(|r| r.n_pixels).sum(),
    })
}
