use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use symnet_core::config::{preset, Noise, RunConfig};
use symnet_core::expr::{parse_text, ConstantTable, Expr};
use symnet_core::io::{
    emit_comparison, load_checkpoint, load_config, load_dataset, load_run_report,
    load_selection_report, load_system_file, save_checkpoint, save_comparison, save_dataset,
    save_run_report, save_selection_report, save_train_summary, RunReport, SelectionReport,
    TrainSummary, VerdictRow,
};
use symnet_core::loss::LossConfig;
use symnet_core::network::{extract_expression, InitSpec, NetworkShape};
use symnet_core::pipeline::{example_verdict, run};
use symnet_core::select::select_model;
use symnet_core::systems::{build_dataset, builtin, relative_rmse, SystemDef};
use symnet_core::train::{train_kfold, TrainConfig};
use symnet_core::{Error, Result};

/// Default directory for outputs whose path is not given explicitly.
const OUT_DIR_ENV: &str = "SYMNET_OUT_DIR";

const EXIT_VALIDATION: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_DOMAIN: u8 = 4;
const EXIT_IO: u8 = 5;
const EXIT_VERDICT: u8 = 6;

#[derive(Parser)]
#[command(name = "symnet", version, about = "Identify closed-form ODEs from noisy samples")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a noisy dataset from a built-in or user-defined system.
    Generate(GenerateArgs),
    /// Train the network with k-fold restarts and write the best checkpoint.
    Train(TrainArgs),
    /// Extract, round and score a trained checkpoint.
    Select(SelectArgs),
    /// Relative-RMSE of a selected model (and the ground truth) on a dataset.
    Evaluate(EvaluateArgs),
    /// Integrate a selected model next to the ground truth.
    Simulate(SimulateArgs),
    /// Print a run or selection report.
    Report(ReportArgs),
    /// Run a built-in example end to end and check its recovery thresholds.
    Reproduce(ReproduceArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum LossArg {
    Custom,
    L1mse,
}

impl LossArg {
    fn config(self) -> LossConfig {
        match self {
            Self::Custom => LossConfig::custom(),
            Self::L1mse => LossConfig::l1_mse(),
        }
    }
}

fn non_negative(s: &str) -> std::result::Result<f64, String> {
    let v: f64 = s.parse().map_err(|e| format!("{e}"))?;
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(format!("must be a finite number >= 0, got {s}"))
    }
}

fn positive(s: &str) -> std::result::Result<f64, String> {
    let v = non_negative(s)?;
    if v > 0.0 {
        Ok(v)
    } else {
        Err(format!("must be > 0, got {s}"))
    }
}

fn at_least_one(s: &str) -> std::result::Result<usize, String> {
    match s.parse::<usize>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("must be an integer >= 1, got {s}")),
    }
}

#[derive(Clone)]
struct Point(Vec<f64>);

fn point(s: &str) -> std::result::Result<Point, String> {
    s.split(',')
        .map(|p| {
            p.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad coordinate {p:?}"))
        })
        .collect::<std::result::Result<_, _>>()
        .map(Point)
}

#[derive(Args)]
struct GenerateArgs {
    /// Built-in system name or a system JSON file.
    #[arg(long)]
    system: String,
    #[arg(long, value_parser = non_negative, allow_hyphen_values = true)]
    sigma1: Option<f64>,
    #[arg(long, value_parser = non_negative, allow_hyphen_values = true)]
    sigma2: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the large noise-floor layout instead of the training layout.
    #[arg(long)]
    large: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TrainArgs {
    #[arg(long)]
    data: PathBuf,
    /// Built-in preset name.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Run-config JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = at_least_one)]
    stacks: Option<usize>,
    #[arg(long, value_parser = at_least_one)]
    layers: Option<usize>,
    #[arg(long, value_parser = positive, allow_hyphen_values = true)]
    lr: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long)]
    seed: Option<u64>,
    /// Cap on concurrently trained folds.
    #[arg(long, value_parser = at_least_one)]
    threads: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SelectArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    data: PathBuf,
    /// Selection report whose winner is evaluated.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    /// Built-in system name or a system JSON file.
    #[arg(long)]
    system: String,
    /// Selection report whose winner is integrated.
    #[arg(long)]
    report: PathBuf,
    /// Initial state, comma separated; defaults to the centre of the sampling box.
    #[arg(long, value_parser = point, allow_hyphen_values = true)]
    x0: Option<Point>,
    #[arg(long, value_parser = non_negative)]
    horizon: Option<f64>,
    #[arg(long, value_parser = positive)]
    dt: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ReportArgs {
    /// Run or selection report file.
    #[arg(long)]
    report: PathBuf,
}

#[derive(Args)]
struct ReproduceArgs {
    #[arg(long)]
    example: String,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Attempts with consecutive seeds before giving up.
    #[arg(long, default_value_t = 3, value_parser = at_least_one)]
    retries: usize,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long, value_enum)]
    loss: Option<LossArg>,
    #[arg(long, value_parser = at_least_one)]
    threads: Option<usize>,
    /// Directory for the dataset, checkpoint, report and comparison.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

fn out_dir() -> PathBuf {
    std::env::var_os(OUT_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("."))
}

fn or_default(p: Option<PathBuf>, name: &str) -> PathBuf {
    p.unwrap_or_else(|| out_dir().join(name))
}

fn resolve_system(s: &str) -> Result<SystemDef> {
    if let Some(sys) = builtin(s) {
        return Ok(sys);
    }
    let p = Path::new(s);
    if p.is_file() {
        return load_system_file(p);
    }
    Err(Error::Invalid(format!(
        "unknown system {s:?}; expected one of {:?} or a system file",
        symnet_core::systems::builtin_names()
    )))
}

fn winner_exprs(r: &SelectionReport) -> Result<Vec<Expr>> {
    r.winner()
        .exprs
        .iter()
        .map(|t| parse_text(t, &r.var_names))
        .collect()
}

fn generate(a: GenerateArgs) -> Result<()> {
    let sys = resolve_system(&a.system)?;
    let layout = if a.large { sys.large_layout } else { sys.layout };
    let data = build_dataset(
        &sys,
        &layout,
        a.sigma1.unwrap_or(sys.sigma1),
        a.sigma2.unwrap_or(sys.sigma2),
        a.seed,
    )?;
    let out = or_default(a.out, &format!("{}.csv", sys.name));
    save_dataset(&data, &out)?;
    println!("wrote {} ({} rows)", out.display(), data.len());
    Ok(())
}

fn train(a: TrainArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let mut cfg = match (&a.preset, &a.config) {
        (Some(p), _) => preset(p).ok_or_else(|| Error::Invalid(format!("unknown preset {p:?}")))?,
        (None, Some(c)) => load_config(c)?,
        (None, None) => RunConfig {
            system: data.system.clone(),
            noise: Noise {
                sigma1: data.sigma1,
                sigma2: data.sigma2,
            },
            shape: NetworkShape::new(data.n(), 1, 10)?,
            loss: LossConfig::custom(),
            train: TrainConfig::default(),
            seed: 0,
        },
    };
    if let Some(k) = a.stacks {
        cfg.shape.stacks = k;
    }
    if let Some(l) = a.layers {
        cfg.shape.layers = l;
    }
    if let Some(lr) = a.lr {
        cfg.train.learning_rate = lr;
    }
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(l) = a.loss {
        cfg.loss = l.config();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if a.threads.is_some() {
        cfg.train.threads = a.threads;
    }
    cfg.noise = Noise {
        sigma1: data.sigma1,
        sigma2: data.sigma2,
    };
    cfg.validate()?;
    if cfg.shape.n != data.n() {
        return Err(Error::Invalid(format!(
            "dataset has {} states, configuration expects {}",
            data.n(),
            cfg.shape.n
        )));
    }
    let start = Instant::now();
    let k = train_kfold(
        &data,
        &cfg.shape,
        &InitSpec::with_seed(cfg.seed),
        &cfg.loss,
        &cfg.train,
    )?;
    let summary = TrainSummary::new(&cfg, &k, start.elapsed().as_secs_f64());
    let out = or_default(a.out, "checkpoint.json");
    save_checkpoint(&k.best().weights, cfg.seed, &out)?;
    let side = out.with_extension("train.json");
    save_train_summary(&summary, &side)?;
    for f in &summary.folds {
        match (&f.held_out_loss, &f.error) {
            (Some(l), _) => println!("fold {}: held-out loss {l:.6}", f.fold),
            (_, Some(e)) => println!("fold {}: {e}", f.fold),
            _ => {}
        }
    }
    println!(
        "selected fold {}; wrote {} and {}",
        k.best,
        out.display(),
        side.display()
    );
    Ok(())
}

fn print_selection(r: &SelectionReport) {
    println!("{:>8}  {:>4}  {:>14}  {:>14}  model", "tol", "P", "mse", "aic");
    for (i, c) in r.candidates.iter().enumerate() {
        let mark = if i == r.winner { "*" } else { " " };
        let num = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.6e}"));
        let aic = if c.degenerate {
            "-inf".to_string()
        } else {
            num(c.aic)
        };
        let model = match &c.discarded_reason {
            Some(r) => format!("discarded: {r}"),
            None => c.exprs.join(" ; "),
        };
        println!(
            "{mark}{:>7}  {:>4}  {:>14}  {:>14}  {model}",
            c.tolerance,
            c.p,
            num(c.mse),
            aic
        );
    }
    println!("winner:");
    for (v, e) in r.var_names.iter().zip(&r.winner().exprs) {
        println!("  d{v}/dt = {e}");
    }
}

fn select(a: SelectArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let (weights, _) = load_checkpoint(&a.checkpoint)?;
    if weights.shape.n != data.n() {
        return Err(Error::Invalid(format!(
            "checkpoint has {} outputs, dataset has {} states",
            weights.shape.n,
            data.n()
        )));
    }
    let model = extract_expression(&weights);
    let selection = select_model(&model, &data.x, &data.y, &ConstantTable::default())?;
    let report = SelectionReport::new(&model, &selection, &data.var_names);
    let out = or_default(a.out, "selection.json");
    save_selection_report(&report, &out)?;
    print_selection(&report);
    println!("wrote {}", out.display());
    Ok(())
}

fn evaluate(a: EvaluateArgs) -> Result<()> {
    let data = load_dataset(&a.data)?;
    let report = load_selection_report(&a.report)?;
    let model = winner_exprs(&report)?;
    if model.len() != data.n() {
        return Err(Error::Invalid(format!(
            "model has {} components, dataset has {} states",
            model.len(),
            data.n()
        )));
    }
    let winner_rmse = relative_rmse(&model, &data)?;
    let truth = builtin(&data.system);
    let truth_rmse = truth
        .as_ref()
        .map(|s| relative_rmse(&s.rhs, &data))
        .transpose()?;
    let verdict = truth
        .as_ref()
        .map(|s| example_verdict(s, data.seed, &model, winner_rmse))
        .transpose()?;
    let out = serde_json::json!({
        "system": data.system,
        "winner_rmse": winner_rmse,
        "truth_rmse": truth_rmse,
        "verdict": verdict.as_ref().map(VerdictRow::from),
    });
    println!("{}", serde_json::to_string_pretty(&out).map_err(Error::Json)?);
    Ok(())
}

fn simulate(a: SimulateArgs) -> Result<()> {
    let sys = resolve_system(&a.system)?;
    let report = load_selection_report(&a.report)?;
    let model = winner_exprs(&report)?;
    let x0 = a
        .x0
        .map(|p| p.0)
        .unwrap_or_else(|| sys.ic_box.iter().map(|(lo, hi)| 0.5 * (lo + hi)).collect());
    let c = emit_comparison(
        &sys,
        &model,
        &x0,
        a.horizon.unwrap_or(sys.layout.horizon),
        a.dt.unwrap_or(sys.layout.sample_dt()),
    )?;
    let out = or_default(a.out, &format!("{}_comparison.csv", sys.name));
    save_comparison(&c, &out)?;
    let failed = c
        .rows
        .iter()
        .filter(|r| r.status != symnet_core::io::RowStatus::Ok)
        .count();
    println!(
        "wrote {} ({} rows, {failed} flagged); max deviation {:.6e}",
        out.display(),
        c.rows.len(),
        c.max_deviation()
    );
    Ok(())
}

fn report(a: ReportArgs) -> Result<()> {
    if let Ok(r) = load_run_report(&a.report) {
        println!("system {} seed {}", r.config.system, r.config.seed);
        for f in &r.folds {
            match (&f.held_out_loss, &f.error) {
                (Some(l), _) => println!("fold {}: held-out loss {l:.6}", f.fold),
                (_, Some(e)) => println!("fold {}: {e}", f.fold),
                _ => {}
            }
        }
        println!("selected fold {}", r.selected_fold);
        print_selection(&r.selection);
        println!("relative RMSE {:.4}%", 100.0 * r.winner_rmse);
        if let Some(t) = r.truth_rmse {
            println!("ground truth relative RMSE {:.4}%", 100.0 * t);
        }
        if let Some(v) = &r.verdict {
            println!("verdict: {} ({})", if v.passed { "pass" } else { "fail" }, v.detail);
        }
        return Ok(());
    }
    let r = load_selection_report(&a.report)?;
    print_selection(&r);
    Ok(())
}

/// Returns whether the verdict passed.
fn reproduce(a: ReproduceArgs) -> Result<bool> {
    let sys = builtin(&a.example)
        .ok_or_else(|| Error::Invalid(format!("unknown example {:?}", a.example)))?;
    let mut cfg = preset(&a.example).expect("every built-in system has a preset");
    if let Some(e) = a.epochs {
        cfg.train.epochs = e;
    }
    if let Some(l) = a.loss {
        cfg.loss = l.config();
    }
    cfg.train.threads = a.threads;
    let dir = a.out_dir.unwrap_or_else(|| out_dir().join(&a.example));
    let mut last = None;
    for attempt in 0..a.retries {
        cfg.seed = a.seed + attempt as u64;
        let (data, id) = run(&sys, &cfg)?;
        let truth = relative_rmse(&sys.rhs, &data)?;
        let verdict = example_verdict(&sys, cfg.seed, id.winner(), id.winner_rmse)?;
        println!(
            "seed {}: {} | relative RMSE {:.3}% (ground truth {:.3}%) | {}",
            cfg.seed,
            if verdict.passed { "pass" } else { "fail" },
            100.0 * id.winner_rmse,
            100.0 * truth,
            verdict.detail
        );
        let passed = verdict.passed;
        last = Some((cfg.clone(), data, id, truth, verdict));
        if passed {
            break;
        }
    }
    let (cfg, data, id, truth, verdict) = last.expect("at least one attempt");
    let mut rep = RunReport::new(&cfg, &id, &sys.var_names, Some(truth));
    rep.verdict = Some(VerdictRow::from(&verdict));
    save_dataset(&data, &dir.join("dataset.csv"))?;
    save_checkpoint(&id.kfold.best().weights, cfg.seed, &dir.join("checkpoint.json"))?;
    save_run_report(&rep, &dir.join("report.json"))?;
    let cmp = emit_comparison(
        &sys,
        id.winner(),
        &data.x[0],
        sys.layout.horizon,
        sys.layout.sample_dt(),
    )?;
    save_comparison(&cmp, &dir.join("comparison.csv"))?;
    for (v, e) in sys.var_names.iter().zip(&rep.winner) {
        println!("  d{v}/dt = {e}");
    }
    println!("wrote {}", dir.display());
    Ok(verdict.passed)
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Invalid(_) | Error::Parse { .. } | Error::Schema(_) | Error::Validation { .. } => {
            EXIT_VALIDATION
        }
        Error::Diverged { .. } | Error::AllFoldsDiverged(_) => EXIT_DIVERGED,
        Error::Domain(_)
        | Error::NonFinite(_)
        | Error::CorrectionUndefined { .. }
        | Error::DegenerateFit(_)
        | Error::DivideByZero(_) => EXIT_DOMAIN,
        Error::Csv(c) if !c.is_io_error() => EXIT_VALIDATION,
        Error::Io(_) | Error::Json(_) | Error::Csv(_) => EXIT_IO,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Generate(a) => generate(a).map(|_| true),
        Command::Train(a) => train(a).map(|_| true),
        Command::Select(a) => select(a).map(|_| true),
        Command::Evaluate(a) => evaluate(a).map(|_| true),
        Command::Simulate(a) => simulate(a).map(|_| true),
        Command::Report(a) => report(a).map(|_| true),
        Command::Reproduce(a) => reproduce(a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERDICT),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
