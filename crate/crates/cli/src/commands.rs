use std::fmt::Write as _;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use hgp_core::evaluation::{loglog_slope, time_lml_gradient, timing_csv, TimingOptions};
use hgp_core::hgp::{batch_predict_moments, build_tree, validate_branching};
use hgp_core::partition::build_plan;
use hgp_core::synth::{synthetic_split_in, SampleMethod};
use hgp_core::{
    train, Dataset, Executor, GaussianPrediction, HgpTree, Hyperparameters, Init, MetricReport, Target, TrainConfig,
};

use crate::args::{
    BenchArgs, BenchMode, EvalArgs, GpArgs, ModelArgs, PredictArgs, SampleArg, SynthArgs, TrainArgs, WorkerArgs,
};
use crate::bench::{depth_csv, depth_sweep, timing_svg, DepthConfig};
use crate::error::{io_error, CliError, CliResult};
use crate::ingest::{ingest_csv, read_inputs};
use crate::model::{sha256_file, DataRef, ModelFile, ReportSummary, FORMAT_VERSION};

fn workers(w: &WorkerArgs) -> CliResult<usize> {
    match w.workers {
        Some(0) => Err(CliError::Config("--workers must be at least 1".into())),
        Some(n) => Ok(n),
        None => Ok(std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1)),
    }
}

fn executor(w: &WorkerArgs) -> CliResult<Executor> {
    Ok(Executor::with_workers(workers(w)?)?)
}

fn generating_hp(gp: &GpArgs) -> CliResult<Hyperparameters> {
    let ls = match gp.lengthscale.len() {
        1 => vec![gp.lengthscale[0]; gp.dim],
        n if n == gp.dim => gp.lengthscale.clone(),
        n => return Err(CliError::Config(format!("{n} lengthscales given for dimension {}", gp.dim))),
    };
    Hyperparameters::new(gp.sigma_f, ls, gp.sigma_eps).map_err(|e| CliError::Config(e.to_string()))
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    std::fs::write(path, contents).map_err(|e| io_error(path, e))
}

/// Writes to `path`, or standard output without one.
fn emit(path: Option<&Path>, contents: &str) -> CliResult<()> {
    match path {
        Some(p) => write_file(p, contents),
        None => io::stdout().write_all(contents.as_bytes()).map_err(|e| CliError::Data(format!("stdout: {e}"))),
    }
}

fn dataset_csv(data: &Dataset) -> String {
    let mut out = String::with_capacity(data.len() * 24 * (data.dim() + 1));
    for d in 0..data.dim() {
        let _ = write!(out, "x{d},");
    }
    out.push_str("y\n");
    for (row, y) in data.inputs().iter_rows().zip(data.targets()) {
        for v in row {
            let _ = write!(out, "{v},");
        }
        let _ = writeln!(out, "{y}");
    }
    out
}

pub fn cmd_synth(a: &SynthArgs) -> CliResult<()> {
    let hp = generating_hp(&a.gp)?;
    let method = match a.sampler {
        SampleArg::Auto => SampleMethod::Auto,
        SampleArg::Exact => SampleMethod::Exact,
        SampleArg::Fourier => SampleMethod::Fourier { features: a.features },
    };
    if a.n_test > 0 && a.test_out.is_none() {
        return Err(CliError::Config("--n-test needs --test-out".into()));
    }
    let (train, test) = synthetic_split_in(a.n, a.n_test, &hp, method, a.extent, a.seed).map_err(|e| {
        if e.is_numerical() {
            CliError::from(e)
        } else {
            CliError::Config(e.to_string())
        }
    })?;
    write_file(&a.out, &dataset_csv(&train))?;
    if let Some(p) = &a.test_out {
        write_file(p, &dataset_csv(&test))?;
    }
    Ok(())
}

pub fn cmd_train(a: &TrainArgs) -> CliResult<()> {
    if let (Some(c), Some(b)) = (a.experts, &a.branching) {
        validate_branching(b, c)?;
    }
    if a.sharing == 0 {
        return Err(CliError::Config("--sharing must be at least 1".into()));
    }
    if a.leaf_size == Some(0) {
        return Err(CliError::Config("--leaf-size must be at least 1".into()));
    }
    let exec = executor(&a.workers)?;
    let init = match &a.init_model {
        Some(p) => Init::Given(ModelFile::load(p)?.hyperparameters),
        None => Init::Auto,
    };
    let cfg =
        TrainConfig { max_iterations: a.max_iters, tie_lengthscales: a.tie_lengthscales, init, ..Default::default() };
    cfg.validate()?;

    let data = ingest_csv(&a.data, a.target_col.as_ref(), a.header)?;
    if data.is_empty() {
        return Err(CliError::Data(format!("{}: no training rows", a.data.display())));
    }
    let experts = match (a.experts, a.leaf_size, &a.branching) {
        (Some(c), _, _) => c,
        (None, Some(l), _) => data.len().div_ceil(l),
        (None, None, Some(b)) => b.iter().product(),
        (None, None, None) => 1,
    };
    let branching = a.branching.clone().unwrap_or_else(|| vec![experts]);
    validate_branching(&branching, experts)?;
    let plan = build_plan(data.inputs(), a.method.into(), experts, a.sharing, a.seed, None)?;

    let (_, report) = train(&exec, &data, &plan, &branching, &cfg)?;
    let model = ModelFile {
        format_version: FORMAT_VERSION,
        hyperparameters: report.hyperparameters.clone(),
        plan,
        branching,
        noise_placement: a.noise_placement.into(),
        training_data: DataRef {
            path: std::path::absolute(&a.data).unwrap_or_else(|_| a.data.clone()),
            sha256: sha256_file(&a.data)?,
            target_column: a.target_col.as_ref().map(|c| c.to_string()),
            has_header: a.header,
            rows: data.len(),
            dim: data.dim(),
        },
        report: ReportSummary::from(&report),
    };
    model.save(&a.model)?;
    let log = a.log.clone().unwrap_or_else(|| {
        let mut p = a.model.clone().into_os_string();
        p.push(".log.csv");
        PathBuf::from(p)
    });
    write_file(&log, &report.to_log_csv())?;
    eprintln!(
        "trained {} experts on {} points: lml {:.6}, {} iterations ({}), {:.3}s per iteration",
        model.plan.num_subsets(),
        data.len(),
        report.final_objective,
        report.iterations,
        report.termination,
        report.seconds_per_iteration()
    );
    Ok(())
}

/// A loaded model with its leaves refitted on the training data.
pub struct LoadedModel {
    pub file: ModelFile,
    pub data: Dataset,
    pub tree: HgpTree,
}

pub fn load_model(
    path: &Path,
    train_data: Option<&Path>,
    override_hash: bool,
    exec: &Executor,
) -> CliResult<LoadedModel> {
    let file = ModelFile::load(path)?;
    let data = file.load_training_data(train_data, override_hash)?;
    let tree = build_tree(exec, &data, &file.plan, &file.branching, &file.hyperparameters)?
        .with_noise_placement(file.noise_placement);
    Ok(LoadedModel { file, data, tree })
}

fn predict_with(
    exec: &Executor,
    m: &LoadedModel,
    x: &hgp_core::Inputs,
    target: Target,
) -> CliResult<Vec<GaussianPrediction>> {
    if x.rows() == 0 {
        return Ok(Vec::new());
    }
    if x.dim() != m.data.dim() {
        return Err(CliError::Data(format!(
            "dimension mismatch: model expects {} input columns, data has {}",
            m.data.dim(),
            x.dim()
        )));
    }
    Ok(batch_predict_moments(exec, &m.tree, &m.data, x, target)?)
}

fn open_model(a: &ModelArgs, exec: &Executor) -> CliResult<LoadedModel> {
    load_model(&a.model, a.train_data.as_deref(), a.override_hash, exec)
}

pub fn cmd_predict(a: &PredictArgs) -> CliResult<()> {
    let exec = executor(&a.model.workers)?;
    let x = read_inputs(&a.data, a.target_col.as_ref(), a.header)?;
    let m = open_model(&a.model, &exec)?;
    let preds = predict_with(&exec, &m, &x, a.target.into())?;
    let mut out = String::with_capacity(16 + preds.len() * 48);
    out.push_str("mean,variance\n");
    for p in &preds {
        let _ = writeln!(out, "{},{}", p.mean, p.variance);
    }
    match &a.out {
        Some(path) => {
            let f = File::create(path).map_err(|e| io_error(path, e))?;
            let mut w = BufWriter::new(f);
            w.write_all(out.as_bytes()).and_then(|_| w.flush()).map_err(|e| io_error(path, e))
        }
        None => emit(None, &out),
    }
}

pub fn cmd_eval(a: &EvalArgs) -> CliResult<()> {
    let exec = executor(&a.model.workers)?;
    let test = ingest_csv(&a.data, a.target_col.as_ref(), a.header)?;
    if test.is_empty() {
        return Err(CliError::Data(format!("{}: no test rows", a.data.display())));
    }
    let m = open_model(&a.model, &exec)?;
    let preds = predict_with(&exec, &m, test.inputs(), Target::Noisy)?;
    let reference = match &a.reference_model {
        Some(path) => {
            let r = load_model(path, a.reference_train_data.as_deref(), a.model.override_hash, &exec)?;
            Some(predict_with(&exec, &r, test.inputs(), Target::Noisy)?)
        }
        None => None,
    };
    let report = MetricReport::compute(&preds, test.targets(), reference.as_deref())?;
    emit(a.out.as_deref(), &report.to_csv())
}

pub fn cmd_bench(a: &BenchArgs) -> CliResult<()> {
    let w = workers(&a.workers)?;
    match a.mode {
        BenchMode::Scaling => {
            let opts = TimingOptions { dim: a.gp.dim, seed: a.seed, ..Default::default() };
            let rows = time_lml_gradient(&a.sizes, a.leaf_size, w, a.repetitions, &opts)?;
            for r in rows.iter().filter(|r| r.error.is_some()) {
                eprintln!("N = {}: {}", r.n, r.error.as_deref().unwrap_or_default());
            }
            if let Some(s) = loglog_slope(&rows) {
                eprintln!("log-log slope of time against N: {s:.3}");
            }
            if let Some(p) = &a.plot {
                write_file(p, &timing_svg(&rows))?;
            }
            emit(a.out.as_deref(), &timing_csv(&rows))
        }
        BenchMode::Depth => {
            let cfg = DepthConfig {
                n: a.n,
                n_test: a.n_test,
                hp: generating_hp(&a.gp)?,
                levels: a.levels,
                branching_factor: a.branching_factor,
                method: a.method.into(),
                sharing: a.sharing,
                seed: a.seed,
                workers: w,
                max_iterations: a.max_iters,
                fixed_hyperparameters: a.fixed_hyperparameters,
                reference_limit: a.reference_limit,
            };
            let rows = depth_sweep(&cfg)?;
            emit(a.out.as_deref(), &depth_csv(&rows))
        }
    }
}
