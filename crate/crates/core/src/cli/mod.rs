//! Command-line front end. Every command writes `run.json` next to its
//! outputs, echoing the resolved configuration and the content hashes of
//! its inputs.
//!
//! Exit codes: 0 success, 2 invalid configuration, 3 numerical failure,
//! 4 I/O or artifact error.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use crate::analysis::{certify_observer_trace, certify_trace, perturbation_fields, speedup_benchmark, StabilityReport};
use crate::dataset::{build_dataset, load_dataset, sample_lambda, Dataset, DATA_FILE, MANIFEST_FILE};
use crate::error::{invalid, Error, Result};
use crate::grid::{KernelField, ReactionProfile};
use crate::kernel::{kernel_residuals, solve_kernel, solve_kernel_fd, GoursatSolveOptions, SolveMethod};
use crate::operator::{
    kernel_error_report, load_model, load_trainer, save_trainer, DeepOperatorModel, PreparedData, TrainerState,
};
use crate::operator::persist::{MODEL_MANIFEST, MODEL_PARAMS};
use crate::sim::{
    simulate_closed_loop, simulate_observer, simulate_open_loop, simulate_output_feedback, SimulationTrace,
};
use crate::util::sha256_hex;

mod config;
pub use config::{ExperimentConfig, LambdaSpec, Mode, ObserverSection, Preset, SCHEMA_VERSION};

pub const RUN_FILE: &str = "run.json";

#[derive(Debug, Parser)]
#[command(name = "backstep", version, about = "Backstepping control with a learned gain-kernel operator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample reaction profiles, solve their kernels and write a dataset.
    GenData(GenDataArgs),
    /// Train the operator on a dataset.
    Train(TrainArgs),
    /// Solve the gain kernel of one reaction profile.
    SolveKernel(SolveKernelArgs),
    /// Simulate the plant under one of the control modes.
    Simulate(SimulateArgs),
    /// Approximation errors and stability certificates of a trained model.
    Analyze(AnalyzeArgs),
    /// Time operator inference against the marching solver.
    Bench(BenchArgs),
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    /// Experiment config; only `family`, `n_samples`, `solver` and
    /// `training.split` are read.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Family preset: `control` (amplitude 50) or `observer` (amplitude 20).
    #[arg(long)]
    pub spec: Option<String>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub grid: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub threads: usize,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out_model: PathBuf,
    /// Continue the checkpoint in this directory instead of starting fresh.
    #[arg(long)]
    pub resume: Option<PathBuf>,
    /// Stop after this many epochs of the schedule and checkpoint.
    #[arg(long)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SolveKernelArgs {
    /// `zero`, `control-gamma5`, `control-gamma8` or `observer-gamma5`.
    #[arg(long, conflicts_with = "lambda_file")]
    pub lambda_preset: Option<String>,
    /// Nodal values of lambda on a uniform grid.
    #[arg(long)]
    pub lambda_file: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = MethodArg::Fd)]
    pub method: MethodArg,
    #[arg(long, default_value_t = 101)]
    pub grid: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum MethodArg {
    Fd,
    Integral,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, value_enum)]
    pub mode: Option<Mode>,
    /// `exact`, `zero` or `operator:PATH`.
    #[arg(long, default_value = "exact")]
    pub gain: String,
    /// Replaces the preset configuration when both are given.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long, required_unless_present = "self_test")]
    pub model: Option<PathBuf>,
    #[arg(long, required_unless_present = "self_test")]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Report the closed-form constants at reference points only.
    #[arg(long)]
    pub self_test: bool,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long)]
    pub model: PathBuf,
    /// Comma-separated grid sizes.
    #[arg(long, value_delimiter = ',')]
    pub grid_list: Option<Vec<usize>>,
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for an error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidInput(_) | Error::Domain { .. } | Error::GridMismatch(..) => 2,
        Error::Convergence { .. } | Error::TrainingDivergence { .. } => 3,
        Error::Sample { source, .. } => exit_code(source),
        Error::Checksum { .. }
        | Error::Version { .. }
        | Error::Truncated { .. }
        | Error::Structural(_)
        | Error::Io(_)
        | Error::Json(_)
        | Error::Csv(_) => 4,
    }
}

/// Parse `args` (program name first), run, and return the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match run(&cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn run(cmd: &Command) -> Result<()> {
    match cmd {
        Command::GenData(a) => gen_data(a),
        Command::Train(a) => train_cmd(a),
        Command::SolveKernel(a) => solve_kernel_cmd(a),
        Command::Simulate(a) => simulate_cmd(a),
        Command::Analyze(a) => analyze_cmd(a),
        Command::Bench(a) => bench_cmd(a),
    }
}

fn load_config(path: Option<&Path>) -> Result<ExperimentConfig> {
    match path {
        Some(p) => ExperimentConfig::load(p),
        None => Ok(ExperimentConfig::default()),
    }
}

#[derive(Serialize)]
struct InputHash {
    path: String,
    sha256: String,
}

/// Content hash of a file, hashed git-style as `blob <len>\0<bytes>`.
fn blob_hash(path: &Path) -> Result<InputHash> {
    let bytes = fs::read(path)?;
    let mut data = format!("blob {}\0", bytes.len()).into_bytes();
    data.extend_from_slice(&bytes);
    Ok(InputHash {
        path: path.display().to_string(),
        sha256: sha256_hex(&data),
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn write_run(out: &Path, command: &str, config: Value, inputs: &[PathBuf]) -> Result<()> {
    let hashes = inputs.iter().map(|p| blob_hash(p)).collect::<Result<Vec<_>>>()?;
    let combined: String = hashes.iter().map(|h| h.sha256.as_str()).collect::<Vec<_>>().join("\n");
    let run = json!({
        "tool": "backstep",
        "version": env!("CARGO_PKG_VERSION"),
        "command": command,
        "config": config,
        "inputs": hashes,
        "inputs_sha256": sha256_hex(combined.as_bytes()),
    });
    write_json(&out.join(RUN_FILE), &run)
}

fn dataset_inputs(dir: &Path) -> Vec<PathBuf> {
    vec![dir.join(MANIFEST_FILE), dir.join(DATA_FILE)]
}

fn model_inputs(dir: &Path) -> Vec<PathBuf> {
    vec![dir.join(MODEL_MANIFEST), dir.join(MODEL_PARAMS)]
}

fn gen_data(a: &GenDataArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    match a.spec.as_deref() {
        None => {}
        Some("control") => cfg.family = crate::dataset::LambdaFamilySpec::control(),
        Some("observer") => cfg.family = crate::dataset::LambdaFamilySpec::observer(),
        Some(other) => return Err(invalid(format!("unknown family spec `{other}`"))),
    }
    if let Some(n) = a.n {
        cfg.n_samples = n;
    }
    if let Some(g) = a.grid {
        cfg.solver.n_points = g;
    }
    if let Some(s) = a.seed {
        cfg.family.seed = s;
    }
    cfg.validate()?;
    let ds = build_dataset(&cfg.family, cfg.n_samples, &cfg.solver, cfg.training.split, a.threads)?;
    ds.write(&a.out)?;
    let mut inputs = Vec::new();
    inputs.extend(a.config.clone());
    write_run(
        &a.out,
        "gen-data",
        json!({"family": cfg.family, "n_samples": cfg.n_samples, "solver": cfg.solver, "split": cfg.training.split}),
        &inputs,
    )?;
    println!("samples {} grid {} checksum {}", ds.len(), ds.manifest.n_points, ds.manifest.checksum);
    Ok(())
}

fn write_loss_csv(state: &TrainerState, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["epoch", "train_loss", "train_rel_l2", "test_rel_l2"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &state.curve {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            opt(r.train_rel_l2),
            opt(r.test_rel_l2),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn train_cmd(a: &TrainArgs) -> Result<()> {
    let ds = load_dataset(&a.data)?;
    let mut inputs = dataset_inputs(&a.data);
    let mut state = match &a.resume {
        Some(dir) => {
            if a.config.is_some() {
                return Err(invalid("--resume takes its configuration from the checkpoint"));
            }
            inputs.extend(model_inputs(dir));
            load_trainer(dir)?
        }
        None => {
            let cfg = load_config(a.config.as_deref())?;
            inputs.extend(a.config.clone());
            if cfg.architecture.sensors < 2 {
                return Err(invalid("architecture needs at least two sensors"));
            }
            let model = DeepOperatorModel::new(cfg.architecture.clone(), cfg.resolved_input_scale(), cfg.model_seed)?;
            let mut training = cfg.training.clone();
            // the split belongs to the dataset
            training.split = ds.manifest.split;
            TrainerState::new(model, training)?
        }
    };
    let data = PreparedData::new(&state.model, &ds, state.config.split)?;
    let target = a.stop_after.unwrap_or(state.config.epochs);
    state.run_until(&data, target)?;
    save_trainer(&state, &a.out_model)?;
    write_loss_csv(&state, &a.out_model.join("loss.csv"))?;
    write_run(
        &a.out_model,
        "train",
        json!({
            "architecture": state.model.arch,
            "input_scale": state.model.input_scale,
            "init_seed": state.model.init_seed,
            "training": state.config,
            "epochs_done": state.epochs_done,
        }),
        &inputs,
    )?;
    let last = state.curve.iter().rev().find(|r| r.test_rel_l2.is_some() || r.train_rel_l2.is_some());
    match last {
        Some(r) => println!(
            "epochs {} train_rel_l2 {} test_rel_l2 {}",
            state.epochs_done,
            r.train_rel_l2.map_or("n/a".into(), |v| format!("{v:.4e}")),
            r.test_rel_l2.map_or("n/a".into(), |v| format!("{v:.4e}")),
        ),
        None => println!("epochs {}", state.epochs_done),
    }
    Ok(())
}

fn write_kernel_csv(k: &KernelField, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["i", "j", "x", "y", "k"])?;
    let g = k.grid();
    for i in 0..g.n_points() {
        for j in 0..=i {
            w.write_record([
                i.to_string(),
                j.to_string(),
                g.node(i).to_string(),
                g.node(j).to_string(),
                k.get(i, j).to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn solve_kernel_cmd(a: &SolveKernelArgs) -> Result<()> {
    let spec = match (&a.lambda_preset, &a.lambda_file) {
        (Some(p), None) => LambdaSpec::preset(p)?,
        (None, Some(f)) => LambdaSpec::from_file(f)?,
        _ => return Err(invalid("give exactly one of --lambda-preset and --lambda-file")),
    };
    let lambda = spec.profile(a.grid)?;
    let opts = GoursatSolveOptions {
        n_points: a.grid,
        method: match a.method {
            MethodArg::Fd => SolveMethod::FdMarching,
            MethodArg::Integral => SolveMethod::IntegralFixedPoint,
        },
        ..Default::default()
    };
    let k = solve_kernel(&lambda, &opts)?;
    let residuals = kernel_residuals(&k, &lambda)?;
    fs::create_dir_all(&a.out)?;
    write_kernel_csv(&k, &a.out.join("kernel.csv"))?;
    write_json(
        &a.out.join("residuals.json"),
        &json!({
            "method": opts.method,
            "n_points": a.grid,
            "lambda_bar": lambda.sup_norm(),
            "kernel_sup": k.sup_norm(),
            "residuals": residuals,
        }),
    )?;
    write_run(
        &a.out,
        "solve-kernel",
        json!({"lambda": spec, "solver": opts}),
        &a.lambda_file.iter().cloned().collect::<Vec<_>>(),
    )?;
    println!(
        "kernel_sup {:.6e} pde_residual_sup {:.3e} bound_margin {:.3e}",
        k.sup_norm(),
        residuals.pde_residual_sup,
        residuals.bound_margin
    );
    Ok(())
}

/// Gain kernel selected by `--gain`, with its measured approximation error
/// against the exact kernel.
fn resolve_gain(gain: &str, lambda: &ReactionProfile, exact: &KernelField) -> Result<(KernelField, f64, Option<PathBuf>)> {
    let k = match gain {
        "exact" => return Ok((exact.clone(), 0.0, None)),
        "zero" => KernelField::zeros(exact.grid()),
        g => match g.strip_prefix("operator:") {
            Some(path) => {
                let model = load_model(Path::new(path))?;
                let k = model.predict_kernel(lambda, exact.grid().n_points())?;
                let eps = kernel_error_report(&k, exact, lambda)?.epsilon;
                return Ok((k, eps, Some(PathBuf::from(path))));
            }
            None => return Err(invalid(format!("unknown gain `{g}`"))),
        },
    };
    let eps = kernel_error_report(&k, exact, lambda)?.epsilon;
    Ok((k, eps, None))
}

fn norm_summary(times: &[f64], norms: &[f64]) -> Value {
    let first = norms.first().copied().unwrap_or(0.0);
    let last = norms.last().copied().unwrap_or(0.0);
    json!({
        "t_final": times.last(),
        "initial": first,
        "final": last,
        "ratio": if first > 0.0 { last / first } else { f64::NAN },
        "max": norms.iter().fold(0.0_f64, |m, v| m.max(*v)),
    })
}

fn simulate_cmd(a: &SimulateArgs) -> Result<()> {
    let (mut cfg, preset_mode) = match a.preset {
        Some(p) => {
            let (c, m) = p.config();
            (c, Some(m))
        }
        None => (ExperimentConfig::default(), None),
    };
    if let Some(path) = &a.config {
        cfg = ExperimentConfig::load(path)?;
    }
    cfg.validate()?;
    let mode = a
        .mode
        .or(preset_mode)
        .ok_or_else(|| invalid("simulate needs --mode or --preset"))?;
    let sim = &cfg.simulation;
    let lambda = cfg.lambda.profile(sim.n_points)?;
    let lambda_bar = lambda.sup_norm();
    let mut inputs: Vec<PathBuf> = a.config.iter().cloned().collect();

    let trace: SimulationTrace;
    let mut stability = None;
    let mut epsilon = None;
    if mode == Mode::Open {
        trace = simulate_open_loop(&lambda, sim)?;
    } else {
        let exact = solve_kernel_fd(&lambda, sim.n_points)?;
        let (k, eps, model_path) = resolve_gain(&a.gain, &lambda, &exact)?;
        if let Some(p) = model_path {
            inputs.extend(model_inputs(&p));
        }
        epsilon = Some(eps);
        let report = StabilityReport::new(eps, lambda_bar)?;
        trace = match mode {
            Mode::Closed => simulate_closed_loop(&lambda, &k, sim)?,
            Mode::Observer => {
                simulate_observer(&lambda, &k, sim, &cfg.observer.initial_condition, &cfg.observer.signal)?
            }
            Mode::OutputFeedback => simulate_output_feedback(&lambda, &k, sim, &cfg.observer.initial_condition)?,
            Mode::Open => unreachable!(),
        };
        stability = Some(match mode {
            Mode::Observer => certify_observer_trace(&trace, &report)?,
            _ => certify_trace(&trace, &report)?,
        });
    }

    fs::create_dir_all(&a.out)?;
    trace.save_csv(&a.out.join("trace.csv"))?;
    if !trace.snapshots.is_empty() {
        trace.write_snapshots_csv(fs::File::create(a.out.join("snapshots.csv"))?)?;
    }
    if !trace.estimate_snapshots.is_empty() {
        trace.write_estimate_snapshots_csv(fs::File::create(a.out.join("estimate_snapshots.csv"))?)?;
    }
    let summary = json!({
        "mode": mode,
        "gain": if mode == Mode::Open { Value::Null } else { json!(a.gain) },
        "lambda_bar": lambda_bar,
        "epsilon": epsilon,
        "steps": sim.n_steps(),
        "state_norm": norm_summary(&trace.times, &trace.l2_norms),
        "error_norm": trace.err_norms.as_ref().map(|e| norm_summary(&trace.times, e)),
        "max_abs_control": trace.control.iter().fold(0.0_f64, |m, v| m.max(v.abs())),
        "stability": stability,
        "envelope_violations": stability.and_then(|s| s.envelope_violations),
    });
    write_json(&a.out.join("summary.json"), &summary)?;
    write_run(
        &a.out,
        "simulate",
        json!({"mode": mode, "gain": a.gain, "preset": a.preset, "experiment": cfg}),
        &inputs,
    )?;
    let n = &trace.l2_norms;
    println!(
        "mode {:?} norm {:.4e} -> {:.4e}{}",
        mode,
        n[0],
        n[n.len() - 1],
        stability
            .and_then(|s| s.envelope_violations)
            .map_or(String::new(), |v| format!(" envelope_violations {v}"))
    );
    Ok(())
}

#[derive(Serialize)]
struct SampleAnalysis {
    index: usize,
    gamma: f64,
    kernel_sup_err: f64,
    diag_deriv_err: f64,
    pde_functional_err: f64,
    epsilon: f64,
    rel_l2: f64,
    delta_k0_sup: f64,
    delta_k1_sup: f64,
    report: StabilityReport,
}

fn self_test_reports() -> Result<Value> {
    let m00 = crate::analysis::overshoot_m(0.0, 0.0)?;
    Ok(json!({
        "overshoot_m_0_0": m00,
        "epsilon_star_0": crate::analysis::epsilon_star(0.0)?,
        "lambda_bar_0": StabilityReport::new(0.0, 0.0)?,
        "lambda_bar_1": StabilityReport::new(0.0, 1.0)?,
        "lambda_bar_20": StabilityReport::new(0.0, 20.0)?,
        "lambda_bar_50": StabilityReport::new(0.0, 50.0)?,
    }))
}

fn analyze_dataset(model: &DeepOperatorModel, ds: &Dataset) -> Result<Vec<SampleAnalysis>> {
    let (_, test) = ds.split_indices(ds.manifest.split);
    let idx = if test.is_empty() { (0..ds.len()).collect() } else { test };
    let n = ds.manifest.n_points;
    let basis = model.trunk_basis(n)?;
    idx.into_iter()
        .map(|i| {
            let s = &ds.samples[i];
            let k_hat = model.predict_with_basis(&basis, &s.lambda)?;
            let err = kernel_error_report(&k_hat, &s.kernel, &s.lambda)?;
            let p = perturbation_fields(&k_hat, &s.kernel, &s.lambda)?;
            Ok(SampleAnalysis {
                index: i,
                gamma: ds.manifest.gammas[i],
                kernel_sup_err: err.kernel_sup_err,
                diag_deriv_err: err.diag_deriv_err,
                pde_functional_err: err.pde_functional_err,
                epsilon: err.epsilon,
                rel_l2: err.rel_l2,
                delta_k0_sup: p.delta_k0_sup(),
                delta_k1_sup: p.delta_k1_sup(),
                report: StabilityReport::new(err.epsilon, s.lambda.sup_norm())?,
            })
        })
        .collect()
}

fn analyze_cmd(a: &AnalyzeArgs) -> Result<()> {
    fs::create_dir_all(&a.out)?;
    let mut out = json!({"self_test": self_test_reports()?});
    let mut inputs = Vec::new();
    if let (Some(mdir), Some(ddir)) = (&a.model, &a.data) {
        let model = load_model(mdir)?;
        let ds = load_dataset(ddir)?;
        inputs.extend(model_inputs(mdir));
        inputs.extend(dataset_inputs(ddir));
        let rows = analyze_dataset(&model, &ds)?;
        let n = rows.len() as f64;
        let summary = json!({
            "samples": rows.len(),
            "mean_rel_l2": rows.iter().map(|r| r.rel_l2).sum::<f64>() / n,
            "max_epsilon": rows.iter().fold(0.0_f64, |m, r| m.max(r.epsilon)),
            "certified": rows.iter().filter(|r| r.report.certified).count(),
            "vacuous": rows.iter().filter(|r| r.report.vacuous_bound).count(),
        });
        println!("{summary}");
        out["summary"] = summary;
        out["samples"] = serde_json::to_value(&rows)?;
    } else {
        println!("{}", out["self_test"]);
    }
    write_json(&a.out.join("analysis.json"), &out)?;
    write_run(&a.out, "analyze", json!({"self_test": a.self_test}), &inputs)
}

fn bench_cmd(a: &BenchArgs) -> Result<()> {
    let mut cfg = load_config(a.config.as_deref())?;
    if let Some(g) = &a.grid_list {
        cfg.bench.grid_list = g.clone();
    }
    let model = load_model(&a.model)?;
    let n_max = cfg.bench.grid_list.iter().copied().max().unwrap_or(101);
    let lambdas = (0..cfg.bench_lambdas)
        .map(|i| sample_lambda(&cfg.family, i, n_max))
        .collect::<Result<Vec<_>>>()?;
    let report = speedup_benchmark(&model, &lambdas, &cfg.bench)?;
    report.save(&a.out)?;
    let mut inputs = model_inputs(&a.model);
    inputs.extend(a.config.clone());
    write_run(
        &a.out,
        "bench",
        json!({"bench": cfg.bench, "family": cfg.family, "bench_lambdas": cfg.bench_lambdas}),
        &inputs,
    )?;
    for e in &report.entries {
        println!(
            "N {} fd {:.3e}s predict {:.3e}s cached {:.3e}s speedup {:.3} cached_speedup {:.3}",
            e.n_points, e.fd_median_s, e.predict_median_s, e.cached_median_s, e.speedup, e.cached_speedup
        );
    }
    Ok(())
}
