//! `fnc`: simulate, label, train, evaluate and export frequency nadir
//! constraints.
//!
//! Exit status is 0 on success, 1 for bad input or usage and 2 when a
//! computation fails.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use fnc_core::constraints::{emit_constraints, render_constraints, render_constraints_csv};
use fnc_core::data::{
    generate_scenarios, label_dataset, parse_dataset, perturb_dataset, render_dataset, split, LoadProfile,
    NoiseSpec,
};
use fnc_core::elm::{feature_vector, init_weights};
use fnc_core::eval::{render_report, run_experiment, ExperimentConfig, ReportFormat};
use fnc_core::io::{model_hash, parse_model, parse_scenario, parse_system, render_model, ModelFile};
use fnc_core::margin::{margin_bisect, MarginSpec};
use fnc_core::pwl::{train_elm_pwl, PwlOptions};
use fnc_core::reduced::{aggregate, analytic_margin, analytic_nadir, reduced_margin};
use fnc_core::sfr::{find_nadir, simulate_response, SimOptions};
use fnc_core::{Dataset, FncError, Scenario, System};

#[derive(Parser, Debug)]
#[command(name = "fnc", version, about = "Frequency nadir constraint learning and export")]
struct Cli {
    /// Seed for every random draw not given its own seed.
    #[arg(long, global = true, env = "FNC_SEED", default_value_t = 0)]
    seed: u64,

    /// Worker threads; results do not depend on it.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Full-order frequency response to a step loss.
    Simulate(SimulateArgs),
    /// Second-order aggregate of a commitment and its closed-form nadir.
    Reduce(ReduceArgs),
    /// Simulated frequency security margin of a commitment.
    Margin(MarginArgs),
    /// Generate and label commitment scenarios.
    GenData(GenDataArgs),
    /// Noisy, relabeled replica of a dataset.
    Perturb(PerturbArgs),
    /// Random train/test split of a dataset.
    Split(SplitArgs),
    /// Train the margin predictor.
    Train(TrainArgs),
    /// Predict the margin of one scenario.
    Predict(PredictArgs),
    /// Compare the predictor with the two-step baseline.
    Evaluate(EvaluateArgs),
    /// Write the per-outage linear constraints of a trained predictor.
    ExportFnc(ExportArgs),
}

#[derive(Args, Debug)]
struct SystemArg {
    /// System description (TOML).
    #[arg(long, visible_alias = "model", value_name = "FILE")]
    system: PathBuf,
}

#[derive(Args, Debug)]
struct ScenarioArg {
    /// Scenario file (TOML); everything online when omitted.
    #[arg(long, value_name = "FILE")]
    scenario: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SimArgs {
    /// Integration step in seconds.
    #[arg(long, default_value_t = 1e-3)]
    dt: f64,
    /// Simulated time in seconds.
    #[arg(long, default_value_t = 30.0)]
    horizon: f64,
    /// Run the full horizon instead of stopping shortly after the nadir.
    #[arg(long)]
    no_early_stop: bool,
}

impl SimArgs {
    fn options(&self) -> SimOptions<f64> {
        SimOptions {
            dt: self.dt,
            horizon_s: self.horizon,
            early_stop_s: if self.no_early_stop {
                None
            } else {
                SimOptions::<f64>::default().early_stop_s
            },
        }
    }
}

#[derive(Args, Debug)]
struct MarginOpts {
    /// Nadir limit in pu frequency.
    #[arg(long, default_value_t = 0.01)]
    fmax: f64,
    /// Bracket width of the margin search in pu power.
    #[arg(long, default_value_t = 1e-4)]
    tol: f64,
    #[command(flatten)]
    sim: SimArgs,
}

impl MarginOpts {
    fn spec(&self) -> Result<MarginSpec<f64>> {
        let spec = MarginSpec {
            delta_f_max_pu: self.fmax,
            tol_pu: self.tol,
            sim: self.sim.options(),
            ..MarginSpec::default()
        };
        spec.validate()?;
        Ok(spec)
    }
}

#[derive(Args, Debug)]
struct SimulateArgs {
    #[command(flatten)]
    system: SystemArg,
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Step loss in pu of the system base.
    #[arg(long)]
    dp: f64,
    #[command(flatten)]
    sim: SimArgs,
    /// Write the trace as `t_s,delta_f_pu` rows.
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[command(flatten)]
    system: SystemArg,
    #[command(flatten)]
    scenario: ScenarioArg,
    /// Step loss in pu for the closed-form nadir.
    #[arg(long, default_value_t = 0.05)]
    dp: f64,
    /// Nadir limit in pu frequency.
    #[arg(long, default_value_t = 0.01)]
    fmax: f64,
}

#[derive(Args, Debug)]
struct MarginArgs {
    #[command(flatten)]
    system: SystemArg,
    #[command(flatten)]
    scenario: ScenarioArg,
    #[command(flatten)]
    margin: MarginOpts,
}

#[derive(Args, Debug)]
struct GenDataArgs {
    #[command(flatten)]
    system: SystemArg,
    #[arg(long)]
    count: usize,
    #[command(flatten)]
    margin: MarginOpts,
    /// Lowest load in MW [default: 30% of TG capacity].
    #[arg(long)]
    load_min: Option<f64>,
    /// Highest load in MW [default: 80% of TG capacity].
    #[arg(long)]
    load_max: Option<f64>,
    /// Committed capacity over net load.
    #[arg(long, default_value_t = 1.1)]
    reserve: f64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PerturbArgs {
    #[command(flatten)]
    system: SystemArg,
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Flip probability of every commitment and participation bit.
    #[arg(long, default_value_t = 0.05)]
    flip: f64,
    /// Relative half-width of the uniform RES output jitter.
    #[arg(long, default_value_t = 0.1)]
    jitter: f64,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[command(flatten)]
    system: SystemArg,
    #[arg(long = "in", value_name = "FILE")]
    input: PathBuf,
    /// Number of training records.
    #[arg(long)]
    train: usize,
    /// Training part [default: <in>.train.fds].
    #[arg(long, value_name = "FILE")]
    out_train: Option<PathBuf>,
    /// Test part [default: <in>.test.fds].
    #[arg(long, value_name = "FILE")]
    out_test: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[command(flatten)]
    system: SystemArg,
    #[arg(long, value_name = "FILE")]
    data: PathBuf,
    /// Number of affine segments.
    #[arg(long = "L", default_value_t = 3)]
    segments: usize,
    /// Hidden neurons per unit type.
    #[arg(long, default_value_t = 10)]
    hidden: usize,
    #[arg(long, default_value_t = 10)]
    restarts: usize,
    #[arg(long, default_value_t = 50)]
    max_iters: usize,
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct PredictArgs {
    #[command(flatten)]
    system: SystemArg,
    #[arg(long, value_name = "FILE")]
    model_file: PathBuf,
    #[command(flatten)]
    scenario: ScenarioArg,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Table,
    Csv,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Experiment file (TOML); relative paths resolve against its folder.
    #[arg(long, value_name = "FILE")]
    config: PathBuf,
    /// Report file, written without the timing column.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
    #[arg(long, value_enum, default_value_t = Format::Table)]
    format: Format,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[command(flatten)]
    system: SystemArg,
    #[arg(long, value_name = "FILE")]
    model_file: PathBuf,
    /// Text export; a `.csv` companion is written next to it.
    #[arg(long, value_name = "FILE")]
    out: PathBuf,
}

/// Input problems map to exit status 1.
fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path)
        .map_err(|e| FncError::InvalidParameter(format!("cannot read {}: {e}", path.display())).into())
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn load_system(arg: &SystemArg) -> Result<System> {
    parse_system(&read(&arg.system)?).with_context(|| format!("in {}", arg.system.display()))
}

fn load_scenario(arg: &ScenarioArg, model: &System) -> Result<Scenario> {
    match &arg.scenario {
        None => Ok(Scenario::all_on(model)),
        Some(p) => parse_scenario(&read(p)?, model).with_context(|| format!("in {}", p.display())),
    }
}

fn load_dataset(path: &Path, model: &System) -> Result<Dataset> {
    parse_dataset(&read(path)?, model).with_context(|| format!("in {}", path.display()))
}

fn load_model_file(path: &Path, model: &System) -> Result<ModelFile<f64>> {
    let file: ModelFile<f64> = parse_model(&read(path)?).with_context(|| format!("in {}", path.display()))?;
    file.check_system(model)?;
    Ok(file)
}

fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    path.with_file_name(format!("{stem}.{suffix}"))
}

fn simulate(args: &SimulateArgs) -> Result<()> {
    let model = load_system(&args.system)?;
    let scenario = load_scenario(&args.scenario, &model)?;
    let trace = simulate_response(&model, &scenario, args.dp, &args.sim.options())?;
    let nadir = find_nadir(&trace)?;
    println!(
        "nadir {} pu ({} Hz) at t = {} s",
        nadir.delta_f_pu,
        nadir.delta_f_pu * model.f_base_hz(),
        nadir.t_s
    );
    if let Some(out) = &args.out {
        let mut text = String::from("t_s,delta_f_pu\n");
        for (k, v) in trace.samples.iter().enumerate() {
            let _ = writeln!(text, "{},{}", trace.time(k), v);
        }
        write(out, &text)?;
    }
    Ok(())
}

fn reduce(args: &ReduceArgs) -> Result<()> {
    let model = load_system(&args.system)?;
    let scenario = load_scenario(&args.scenario, &model)?;
    let rm = aggregate(&model, &scenario)?;
    let (h, d, r, f, t) = (rm.h, rm.d, rm.r, rm.f, rm.t);
    println!("H = {h}\nD = {d}\nR = {r}\nF = {f}\nT = {t}");
    println!("zeta = {}\nomega_n = {}", rm.zeta, rm.omega_n);
    match analytic_nadir(&rm, args.dp) {
        Ok((t_m, nadir)) => {
            println!("nadir({}) = {nadir} pu at t = {t_m} s", args.dp);
            println!("margin = {} pu", analytic_margin(&rm, args.fmax)?);
        }
        Err(FncError::Overdamped { zeta }) => {
            println!("overdamped (zeta = {zeta}); simulated second-order margin follows");
            println!("margin = {} pu", reduced_margin(&rm, args.fmax, 1e-3)?);
        }
        Err(e) => return Err(e.into()),
    }
    Ok(())
}

fn margin(args: &MarginArgs) -> Result<()> {
    let model = load_system(&args.system)?;
    let scenario = load_scenario(&args.scenario, &model)?;
    let out = margin_bisect(&model, &scenario, &args.margin.spec()?)?;
    println!(
        "margin {} pu ({} MW){}",
        out.margin_pu,
        out.margin_pu * model.s_base_mva(),
        if out.unbounded { ", search cap reached" } else { "" }
    );
    Ok(())
}

fn gen_data(args: &GenDataArgs, seed: u64) -> Result<()> {
    let model = load_system(&args.system)?;
    let spec = args.margin.spec()?;
    let mut profile = LoadProfile::for_model(&model);
    profile.load_min_mw = args.load_min.unwrap_or(profile.load_min_mw);
    profile.load_max_mw = args.load_max.unwrap_or(profile.load_max_mw);
    profile.reserve_factor = args.reserve;
    let scenarios = generate_scenarios(&model, args.count, seed, &profile)?;
    let mut ds = label_dataset(&model, &scenarios, &spec)?;
    ds.provenance.generator_seed = Some(seed);
    info!("{} of {} scenarios labeled", ds.len(), args.count);
    write(&args.out, &render_dataset(&ds))?;
    println!("{} records written to {}", ds.len(), args.out.display());
    Ok(())
}

fn perturb(args: &PerturbArgs, seed: u64) -> Result<()> {
    let model = load_system(&args.system)?;
    let ds = load_dataset(&args.input, &model)?;
    let noise = NoiseSpec {
        seed,
        flip_prob: args.flip,
        jitter: args.jitter,
    };
    let out = perturb_dataset(&model, &ds, &noise)?;
    write(&args.out, &render_dataset(&out))?;
    println!("{} records written to {}", out.len(), args.out.display());
    Ok(())
}

fn split_cmd(args: &SplitArgs, seed: u64) -> Result<()> {
    let model = load_system(&args.system)?;
    let ds = load_dataset(&args.input, &model)?;
    let (train, test) = split(&ds, args.train, seed)?;
    let tr = args.out_train.clone().unwrap_or_else(|| sibling(&args.input, "train.fds"));
    let te = args.out_test.clone().unwrap_or_else(|| sibling(&args.input, "test.fds"));
    write(&tr, &render_dataset(&train))?;
    write(&te, &render_dataset(&test))?;
    println!("{} train records to {}, {} test records to {}", train.len(), tr.display(), test.len(), te.display());
    Ok(())
}

fn train(args: &TrainArgs, seed: u64) -> Result<()> {
    let model = load_system(&args.system)?;
    let ds = load_dataset(&args.data, &model)?;
    let weights = init_weights(args.hidden, seed, &model)?;
    let features = ds.features(&weights, &model)?;
    let labels = ds.labels();
    let opts = PwlOptions {
        segments: args.segments,
        seed,
        max_iters: args.max_iters,
        restarts: args.restarts,
        ..PwlOptions::default()
    };
    let pwl = train_elm_pwl(&features, &labels, &opts)?;
    let worst = features
        .iter()
        .zip(&labels)
        .map(|(z, y)| pwl.eval(z).map(|p| p - y))
        .collect::<Result<Vec<f64>, _>>()?
        .into_iter()
        .fold(f64::NEG_INFINITY, f64::max);
    println!(
        "trained {} segments on {} records; max(prediction - label) = {worst} pu",
        pwl.segments().len(),
        ds.len()
    );
    let file = ModelFile {
        system_hash: model_hash(&model),
        weights,
        pwl,
    };
    write(&args.out, &render_model(&file))
}

fn predict(args: &PredictArgs) -> Result<()> {
    let model = load_system(&args.system)?;
    let file = load_model_file(&args.model_file, &model)?;
    let scenario = load_scenario(&args.scenario, &model)?;
    let z = feature_vector(&file.weights, &model, &scenario)?;
    let (p, l) = file.pwl.eval_with_segment(&z.values)?;
    println!("margin {p} pu ({} MW), active segment {l}", p * model.s_base_mva());
    Ok(())
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let cfg = ExperimentConfig::parse(&read(&args.config)?).with_context(|| format!("in {}", args.config.display()))?;
    let settings = cfg.settings()?;
    let base = args.config.parent().unwrap_or_else(|| Path::new("."));
    let model: System = parse_system(&read(&base.join(&cfg.model))?)?;
    let mut datasets = Vec::new();
    for d in &cfg.datasets {
        let path = base.join(d);
        let name = Path::new(d)
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| d.clone());
        datasets.push((name, load_dataset(&path, &model)?));
    }
    let report = run_experiment(&model, &datasets, &settings)?;
    let format = match args.format {
        Format::Table => ReportFormat::Table,
        Format::Csv => ReportFormat::Csv,
    };
    write(&args.out, &render_report(&report, format, false))?;
    print!("{}", render_report(&report, ReportFormat::Table, true));
    Ok(())
}

fn export(args: &ExportArgs) -> Result<()> {
    let model = load_system(&args.system)?;
    let file = load_model_file(&args.model_file, &model)?;
    let blocks = emit_constraints(&file.pwl, &file.weights, &model)?;
    write(&args.out, &render_constraints(&blocks, &model))?;
    let csv = args.out.with_extension("csv");
    write(&csv, &render_constraints_csv(&blocks, &model))?;
    println!(
        "{} blocks of {} rows written to {} and {}",
        blocks.len(),
        file.pwl.segments().len(),
        args.out.display(),
        csv.display()
    );
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Reduce(a) => reduce(a),
        Command::Margin(a) => margin(a),
        Command::GenData(a) => gen_data(a, cli.seed),
        Command::Perturb(a) => perturb(a, cli.seed),
        Command::Split(a) => split_cmd(a, cli.seed),
        Command::Train(a) => train(a, cli.seed),
        Command::Predict(a) => predict(a),
        Command::Evaluate(a) => evaluate(a),
        Command::ExportFnc(a) => export(a),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    let validation = err
        .chain()
        .filter_map(|e| e.downcast_ref::<FncError>())
        .any(FncError::is_validation);
    if validation {
        1
    } else {
        2
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be >= 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
