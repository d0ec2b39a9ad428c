//! Prediction quality metrics and the LML timing harness.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{HgpError, Result};
use crate::executor::Executor;
use crate::expert::GaussianPrediction;
use crate::hgp::evaluate_objective;
use crate::kernel::Hyperparameters;
use crate::partition::assign_random;
use crate::synth::{synthetic_split, SampleMethod};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

fn check_variance(g: &GaussianPrediction) -> Result<()> {
    if g.variance > 0.0 && g.variance.is_finite() && g.mean.is_finite() {
        Ok(())
    } else {
        Err(HgpError::InvalidGaussian(format!("N({}, {})", g.mean, g.variance)))
    }
}

/// `KL(g1 ‖ g2)` for univariate Gaussians.
pub fn kl_gaussian(g1: &GaussianPrediction, g2: &GaussianPrediction) -> Result<f64> {
    check_variance(g1)?;
    check_variance(g2)?;
    let r = g1.variance / g2.variance;
    let d = g1.mean - g2.mean;
    // ln(σ₂/σ₁) + (σ₁² + d²)/(2σ₂²) − ½, with the ratio kept together so g1 = g2 gives exactly 0
    let kl = 0.5 * (r - 1.0 - r.ln()) + d * d / (2.0 * g2.variance);
    Ok(kl.max(0.0))
}

/// `exp(−KL(g1 ‖ g2))`; `g1` is the reference (full GP) prediction.
/// Floored at the smallest normal double so it stays positive past KL ≈ 708.
pub fn likelihood_ratio(g1: &GaussianPrediction, g2: &GaussianPrediction) -> Result<f64> {
    Ok((-kl_gaussian(g1, g2)?).exp().max(f64::MIN_POSITIVE))
}

/// Geometric mean of per-point likelihood ratios, `exp(−mean KL)`.
pub fn aggregate_lr(pairs: &[(GaussianPrediction, GaussianPrediction)]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(HgpError::Empty("likelihood ratio pairs"));
    }
    let mut total = 0.0;
    for (a, b) in pairs {
        total += kl_gaussian(a, b)?;
    }
    Ok((-total / pairs.len() as f64).exp())
}

fn check_lengths(a: usize, b: usize) -> Result<()> {
    if a == 0 {
        return Err(HgpError::Empty("predictions"));
    }
    if a != b {
        return Err(HgpError::DimensionMismatch { expected: b, found: a });
    }
    Ok(())
}

pub fn rmse(means: &[f64], targets: &[f64]) -> Result<f64> {
    check_lengths(means.len(), targets.len())?;
    let sse: f64 = means.iter().zip(targets).map(|(m, y)| (m - y).powi(2)).sum();
    Ok((sse / means.len() as f64).sqrt())
}

/// Mean negative log density of `targets` under the predictive Gaussians.
pub fn nlpd(predictions: &[GaussianPrediction], targets: &[f64]) -> Result<f64> {
    check_lengths(predictions.len(), targets.len())?;
    let mut total = 0.0;
    for (p, y) in predictions.iter().zip(targets) {
        check_variance(p)?;
        total += 0.5 * (LN_2PI + p.variance.ln()) + (y - p.mean).powi(2) / (2.0 * p.variance);
    }
    Ok(total / predictions.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub count: usize,
    pub rmse: f64,
    pub nlpd: f64,
    /// Per-point `LR(reference ‖ model)`; empty without a reference.
    pub likelihood_ratios: Vec<f64>,
    /// Geometric mean of the ratios.
    pub aggregate_lr: Option<f64>,
    /// Arithmetic mean of the ratios, for comparison.
    pub mean_lr: Option<f64>,
}

impl MetricReport {
    pub fn compute(
        predictions: &[GaussianPrediction],
        targets: &[f64],
        reference: Option<&[GaussianPrediction]>,
    ) -> Result<Self> {
        let means: Vec<f64> = predictions.iter().map(|p| p.mean).collect();
        let rmse = rmse(&means, targets)?;
        let nlpd = nlpd(predictions, targets)?;
        let (likelihood_ratios, aggregate_lr, mean_lr) = match reference {
            None => (Vec::new(), None, None),
            Some(r) => {
                check_lengths(r.len(), predictions.len())?;
                let pairs: Vec<_> = r.iter().copied().zip(predictions.iter().copied()).collect();
                let lrs = pairs.iter().map(|(a, b)| likelihood_ratio(a, b)).collect::<Result<Vec<_>>>()?;
                let mean = lrs.iter().sum::<f64>() / lrs.len() as f64;
                (lrs, Some(aggregate_lr(&pairs)?), Some(mean))
            }
        };
        Ok(Self { count: predictions.len(), rmse, nlpd, likelihood_ratios, aggregate_lr, mean_lr })
    }

    /// `metric,value` rows.
    pub fn to_csv(&self) -> String {
        let mut out = format!("metric,value\ncount,{}\nrmse,{:.17e}\nnlpd,{:.17e}\n", self.count, self.rmse, self.nlpd);
        if let (Some(g), Some(m)) = (self.aggregate_lr, self.mean_lr) {
            out.push_str(&format!("aggregate_lr,{g:.17e}\nmean_lr,{m:.17e}\n"));
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimingOptions {
    pub dim: usize,
    pub seed: u64,
    /// Bytes a row may use; rows estimated above it are skipped and reported.
    pub memory_budget: Option<u64>,
}

impl Default for TimingOptions {
    fn default() -> Self {
        Self { dim: 3, seed: 0, memory_budget: available_memory() }
    }
}

/// `MemAvailable` from `/proc/meminfo`, where present.
pub fn available_memory() -> Option<u64> {
    let info = std::fs::read_to_string("/proc/meminfo").ok()?;
    let line = info.lines().find(|l| l.starts_with("MemAvailable:"))?;
    let kb: u64 = line.split_whitespace().nth(1)?.parse().ok()?;
    Some(kb * 1024)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub n: usize,
    pub experts: usize,
    /// Median seconds of one objective + gradient evaluation.
    pub seconds: Option<f64>,
    pub error: Option<String>,
}

/// Rough peak bytes for one evaluation: the data plus three p×p matrices
/// per concurrently running leaf.
pub fn estimate_bytes(n: usize, dim: usize, leaf_size: usize, workers: usize) -> u64 {
    let p = leaf_size.min(n) as u64;
    let data = (n as u64) * (dim as u64 + 2) * 8;
    data + workers as u64 * 3 * p * p * 8
}

/// Times one objective + gradient evaluation per size, with
/// `c = ceil(N / leaf_size)` experts on a random plan.
pub fn time_lml_gradient(
    sizes: &[usize],
    leaf_size: usize,
    workers: usize,
    repetitions: usize,
    opts: &TimingOptions,
) -> Result<Vec<TimingRow>> {
    if leaf_size == 0 || repetitions == 0 || opts.dim == 0 {
        return Err(HgpError::Config("leaf size, repetitions and dimension must be positive".into()));
    }
    let exec = Executor::with_workers(workers)?;
    let hp = Hyperparameters::isotropic(1.0, 0.3, 0.1, opts.dim)?;
    let mut rows = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let experts = n.div_ceil(leaf_size).max(1);
        let row = |seconds, error| TimingRow { n, experts, seconds, error };
        let need = estimate_bytes(n, opts.dim, leaf_size, workers);
        if let Some(budget) = opts.memory_budget.filter(|&b| need > b) {
            rows.push(row(None, Some(format!("out of memory: needs ~{need} bytes, {budget} available"))));
            continue;
        }
        let measured = (|| -> Result<f64> {
            // the cost does not depend on the targets, so a cheap sampler suffices
            let (data, _) = synthetic_split(n, 0, &hp, SampleMethod::Fourier { features: 256 }, opts.seed)?;
            let plan = assign_random(n, experts, 1, opts.seed)?;
            let mut times = Vec::with_capacity(repetitions);
            for _ in 0..repetitions {
                let clock = Instant::now();
                evaluate_objective(&exec, &data, &plan, &[experts], &hp)?;
                times.push(clock.elapsed().as_secs_f64());
            }
            times.sort_by(f64::total_cmp);
            Ok(times[times.len() / 2])
        })();
        rows.push(match measured {
            Ok(s) => row(Some(s), None),
            Err(e) => row(None, Some(e.to_string())),
        });
    }
    Ok(rows)
}

/// Least-squares slope of `ln seconds` against `ln N` over rows with a time.
pub fn loglog_slope(rows: &[TimingRow]) -> Option<f64> {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.seconds.filter(|&s| s > 0.0).map(|s| ((r.n as f64).ln(), s.ln()))).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxy: f64 = pts.iter().map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| (x - mx).powi(2)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// `n,experts,seconds,error` rows.
pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("n,experts,seconds,error\n");
    for r in rows {
        let secs = r.seconds.map(|s| format!("{s:.6}")).unwrap_or_default();
        let err = r.error.as_deref().unwrap_or("").replace(',', ";");
        out.push_str(&format!("{},{},{secs},{err}\n", r.n, r.experts));
    }
    out
}
