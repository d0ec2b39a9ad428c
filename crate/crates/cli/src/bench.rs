//! Depth sweep and time-vs-N plot behind `hgp bench`.

use std::fmt::Write as _;
use std::time::Instant;

use hgp_core::evaluation::TimingRow;
use hgp_core::hgp::{batch_predict_moments, build_tree, evaluate_objective, hgp_lml};
use hgp_core::partition::{assign_random, build_plan};
use hgp_core::synth::{synthetic_split, SampleMethod};
use hgp_core::{
    train, Dataset, Executor, GaussianPrediction, HgpTree, Hyperparameters, Init, MetricReport, PartitionMethod,
    PartitionPlan, Target, TrainConfig,
};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone)]
pub struct DepthConfig {
    pub n: usize,
    pub n_test: usize,
    /// Generating hyperparameters.
    pub hp: Hyperparameters,
    pub levels: usize,
    pub branching_factor: usize,
    pub method: PartitionMethod,
    pub sharing: usize,
    pub seed: u64,
    pub workers: usize,
    pub max_iterations: usize,
    /// Evaluate every model at `hp` instead of training it.
    pub fixed_hyperparameters: bool,
    pub reference_limit: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DepthRow {
    /// 0 for the full GP reference.
    pub level: usize,
    pub experts: usize,
    pub points_per_expert: usize,
    pub iterations: usize,
    /// Per training iteration, or per objective evaluation with fixed hyperparameters.
    pub seconds_per_iteration: f64,
    pub lml: f64,
    pub hyperparameters: Hyperparameters,
    pub aggregate_lr: Option<f64>,
    pub mean_lr: Option<f64>,
    pub rmse: f64,
    pub nlpd: f64,
}

struct Fitted {
    tree: HgpTree,
    iterations: usize,
    seconds: f64,
}

fn fit(
    exec: &Executor,
    cfg: &DepthConfig,
    data: &Dataset,
    plan: &PartitionPlan,
    branching: &[usize],
) -> CliResult<Fitted> {
    if cfg.fixed_hyperparameters {
        let clock = Instant::now();
        evaluate_objective(exec, data, plan, branching, &cfg.hp)?;
        let seconds = clock.elapsed().as_secs_f64();
        let tree = build_tree(exec, data, plan, branching, &cfg.hp)?;
        return Ok(Fitted { tree, iterations: 0, seconds });
    }
    let tc = TrainConfig { max_iterations: cfg.max_iterations, init: Init::Auto, ..Default::default() };
    let (tree, report) = train(exec, data, plan, branching, &tc)?;
    Ok(Fitted { tree, iterations: report.iterations, seconds: report.seconds_per_iteration() })
}

/// Trains (or evaluates) a full-GP reference and HGPs with
/// `branching_factor^level` experts for `level = 1..=levels`, all on one
/// synthetic draw, and scores each on the same test set.
pub fn depth_sweep(cfg: &DepthConfig) -> CliResult<Vec<DepthRow>> {
    if cfg.levels == 0 || cfg.branching_factor < 2 || cfg.n_test == 0 {
        return Err(CliError::Config("depth sweep needs levels ≥ 1, branching factor ≥ 2 and test rows".into()));
    }
    let exec = Executor::with_workers(cfg.workers)?;
    let (data, test) = synthetic_split(cfg.n, cfg.n_test, &cfg.hp, SampleMethod::Auto, cfg.seed)?;
    let predict = |tree: &HgpTree| -> CliResult<Vec<GaussianPrediction>> {
        Ok(batch_predict_moments(&exec, tree, &data, test.inputs(), Target::Noisy)?)
    };

    let mut rows = Vec::new();
    let mut reference: Option<Vec<GaussianPrediction>> = None;
    let mut push = |level: usize,
                    fitted: Fitted,
                    preds: &[GaussianPrediction],
                    reference: Option<&[GaussianPrediction]>|
     -> CliResult<()> {
        let metrics = MetricReport::compute(preds, test.targets(), reference)?;
        rows.push(DepthRow {
            level,
            experts: fitted.tree.num_leaves(),
            points_per_expert: fitted.tree.plan().max_subset_len(),
            iterations: fitted.iterations,
            seconds_per_iteration: fitted.seconds,
            lml: hgp_lml(&fitted.tree, &data)?,
            hyperparameters: fitted.tree.hyperparameters().clone(),
            aggregate_lr: metrics.aggregate_lr,
            mean_lr: metrics.mean_lr,
            rmse: metrics.rmse,
            nlpd: metrics.nlpd,
        });
        Ok(())
    };

    if cfg.n <= cfg.reference_limit {
        let plan = assign_random(cfg.n, 1, 1, cfg.seed)?;
        let fitted = fit(&exec, cfg, &data, &plan, &[1])?;
        let preds = predict(&fitted.tree)?;
        push(0, fitted, &preds, Some(&preds))?;
        reference = Some(preds);
    }
    for level in 1..=cfg.levels {
        let branching = vec![cfg.branching_factor; level];
        let experts: usize = branching.iter().product();
        let plan = build_plan(data.inputs(), cfg.method, experts, cfg.sharing, cfg.seed, None)?;
        let fitted = fit(&exec, cfg, &data, &plan, &branching)?;
        let preds = predict(&fitted.tree)?;
        push(level, fitted, &preds, reference.as_deref())?;
    }
    Ok(rows)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.6}")).unwrap_or_default()
}

pub fn depth_csv(rows: &[DepthRow]) -> String {
    let mut out = String::from(
        "level,experts,points_per_expert,iterations,seconds_per_iteration,lml,aggregate_lr,mean_lr,rmse,nlpd\n",
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{:.6},{:.6},{},{},{:.6},{:.6}",
            r.level,
            r.experts,
            r.points_per_expert,
            r.iterations,
            r.seconds_per_iteration,
            r.lml,
            opt(r.aggregate_lr),
            opt(r.mean_lr),
            r.rmse,
            r.nlpd
        );
    }
    out
}

/// Time against N on log-log axes, one marker per timed row.
pub fn timing_svg(rows: &[TimingRow]) -> String {
    let pts: Vec<(f64, f64)> =
        rows.iter().filter_map(|r| r.seconds.filter(|&s| s > 0.0).map(|s| ((r.n as f64).log10(), s.log10()))).collect();
    let (w, h, pad) = (640.0, 400.0, 60.0);
    let mut svg = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"12\">\n\
         <rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
    );
    let _ = writeln!(
        svg,
        "<line x1=\"{pad}\" y1=\"{}\" x2=\"{}\" y2=\"{}\" stroke=\"black\"/><line x1=\"{pad}\" y1=\"{pad}\" x2=\"{pad}\" y2=\"{}\" stroke=\"black\"/>",
        h - pad,
        w - pad,
        h - pad,
        h - pad
    );
    let _ = writeln!(svg, "<text x=\"{}\" y=\"{}\" text-anchor=\"middle\">N (log scale)</text>", w / 2.0, h - 15.0);
    let _ = writeln!(
        svg,
        "<text x=\"15\" y=\"{}\" transform=\"rotate(-90 15 {})\" text-anchor=\"middle\">seconds (log scale)</text>",
        h / 2.0,
        h / 2.0
    );
    if pts.is_empty() {
        svg.push_str("</svg>\n");
        return svg;
    }
    let span = |f: fn(&(f64, f64)) -> f64| {
        let lo = pts.iter().map(f).fold(f64::INFINITY, f64::min).floor();
        let hi = pts.iter().map(f).fold(f64::NEG_INFINITY, f64::max).ceil();
        (lo, if hi > lo { hi } else { lo + 1.0 })
    };
    let (x0, x1) = span(|p| p.0);
    let (y0, y1) = span(|p| p.1);
    let sx = |x: f64| pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
    let sy = |y: f64| h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
    for e in x0 as i32..=x1 as i32 {
        let _ = writeln!(
            svg,
            "<text x=\"{:.1}\" y=\"{}\" text-anchor=\"middle\">1e{e}</text>",
            sx(e as f64),
            h - pad + 18.0
        );
    }
    for e in y0 as i32..=y1 as i32 {
        let _ =
            writeln!(svg, "<text x=\"{}\" y=\"{:.1}\" text-anchor=\"end\">1e{e}</text>", pad - 6.0, sy(e as f64) + 4.0);
    }
    let path: Vec<String> = pts.iter().map(|&(x, y)| format!("{:.1},{:.1}", sx(x), sy(y))).collect();
    let _ = writeln!(
        svg,
        "<polyline points=\"{}\" fill=\"none\" stroke=\"steelblue\" stroke-dasharray=\"6 3\"/>",
        path.join(" ")
    );
    for &(x, y) in &pts {
        let _ = writeln!(svg, "<circle cx=\"{:.1}\" cy=\"{:.1}\" r=\"3\" fill=\"steelblue\"/>", sx(x), sy(y));
    }
    svg.push_str("</svg>\n");
    svg
}
