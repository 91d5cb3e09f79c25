//! Command-line front end: experiment pipelines, generators, sizing,
//! training, evaluation, rate studies, bound tables, and margin checks.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use hdclass::data::{dataset_from_csv, dataset_to_csv};
use hdclass::{
    covering_bound, estimate_margin_exponent, lower_bound_rate, mc_excess_risk,
    select_dropout, size_architecture, upper_bound_rate, NetworkArch, NoiseProfile,
    RateExponents, TrainConfig, TrainedClassifier,
};
use hdclass_cli::{
    build_manifest, run_study, BuiltInstance, CliError, CliResult, ExperimentConfig,
    InstanceSpec,
};

#[derive(Parser)]
#[command(name = "hdclass", version, about = "Sparse ReLU network classification experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline from a JSON config: generate, size, train,
    /// evaluate, fit, compare; writes CSV, models, and a manifest.
    Run(RunArgs),
    /// Run the study and emit only the rate CSV.
    RateStudy(RateStudyArgs),
    /// Sample a dataset from an instance description.
    Gen(GenArgs),
    /// Print the sized architecture for given exponents.
    Size(SizeArgs),
    /// Train on a dataset CSV and emit the model plus the dropout table.
    Train(TrainArgs),
    /// Estimate the excess risk of a saved model against an instance.
    Evaluate(EvaluateArgs),
    /// Print theoretical rate-curve values as CSV rows.
    Bounds(BoundsArgs),
    /// Check the margin condition for an instance.
    VerifyMargin(VerifyMarginArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Path to the experiment config (JSON).
    config: PathBuf,
    /// Worker threads for study cells.
    #[arg(long, default_value_t = 0)]
    threads: usize,
    /// Force serial cell order (output must match parallel runs anyway).
    #[arg(long)]
    deterministic: bool,
    /// Output directory; defaults to the config's out_dir, then
    /// $HDCLASS_OUT_DIR, then "results".
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

#[derive(Args)]
struct RateStudyArgs {
    config: PathBuf,
    #[arg(long, default_value_t = 0)]
    threads: usize,
    #[arg(long)]
    deterministic: bool,
    /// Write the CSV here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenArgs {
    /// Instance description file (JSON with a "family" tag).
    #[arg(long, conflicts_with = "family")]
    instance: Option<PathBuf>,
    /// Built-in family: gam-linear | tensor-anova | hard.
    #[arg(long)]
    family: Option<String>,
    /// Ambient dimension.
    #[arg(long)]
    d: usize,
    /// 0-based coordinate indices for gam-linear.
    #[arg(long, value_delimiter = ',')]
    indices: Vec<usize>,
    /// Interaction order for tensor-anova.
    #[arg(long, default_value_t = 2)]
    order: usize,
    /// Noise exponent for hard calibration.
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    /// Noise constant for hard calibration.
    #[arg(long, default_value_t = 1.0)]
    c_d: f64,
    #[arg(long, default_value_t = 1.0)]
    beta_star: f64,
    #[arg(long, default_value_t = 1)]
    t_star: usize,
    /// Sample size the hard instance is calibrated against (defaults to n).
    #[arg(long)]
    calibration_n: Option<usize>,
    /// Number of samples to draw.
    #[arg(long)]
    n: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output CSV path (stdout when omitted).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the built instance description (for hard: the calibrated
    /// instance) as JSON.
    #[arg(long)]
    emit_instance: Option<PathBuf>,
}

#[derive(Args)]
struct SizeArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    d: usize,
    #[arg(long)]
    s0: f64,
    #[arg(long)]
    s1: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    c_d: f64,
}

#[derive(Args)]
struct TrainArgs {
    /// Dataset CSV with columns x1..xd,y.
    #[arg(long)]
    data: PathBuf,
    /// Architecture JSON file ({L, widths, s, B}); omit to auto-size.
    #[arg(long)]
    arch: Option<PathBuf>,
    /// Exponents for auto-sizing.
    #[arg(long, default_value_t = 0.4)]
    s0: f64,
    #[arg(long, default_value_t = 0.4)]
    s1: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 8.0)]
    c_d: f64,
    /// Dropout candidates.
    #[arg(long, value_delimiter = ',', default_values_t = vec![0.0])]
    rho: Vec<f64>,
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    #[arg(long, default_value_t = 32)]
    batch_size: usize,
    #[arg(long, default_value_t = 0.5)]
    step_size: f64,
    #[arg(long, default_value_t = 4)]
    projection_period: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Model JSON output path.
    #[arg(long)]
    out_model: PathBuf,
    /// Per-candidate selection table CSV output path (stdout when omitted).
    #[arg(long)]
    out_table: Option<PathBuf>,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Trained model JSON.
    #[arg(long)]
    model: PathBuf,
    /// Instance description JSON.
    #[arg(long)]
    instance: PathBuf,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 100_000)]
    n_test: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct BoundsArgs {
    /// Sample sizes (comma separated).
    #[arg(long, value_delimiter = ',')]
    n: Vec<usize>,
    /// Values of ln d (comma separated).
    #[arg(long, value_delimiter = ',')]
    logd: Vec<f64>,
    #[arg(long)]
    s0: f64,
    #[arg(long, default_value_t = 1.0)]
    c_d: f64,
    #[arg(long, default_value_t = 1.0)]
    d1: f64,
    #[arg(long, default_value_t = 1.0)]
    d2: f64,
    /// Also print the covering bound for this architecture, given as
    /// L,p_max,d,s,B,upsilon.
    #[arg(long, value_delimiter = ',', num_args = 6)]
    covering: Option<Vec<f64>>,
}

#[derive(Args)]
struct VerifyMarginArgs {
    /// Instance description JSON; omit to calibrate a hard instance from the
    /// flags below.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[arg(long, default_value = "hard")]
    family: String,
    #[arg(long)]
    d: usize,
    #[arg(long, default_value_t = 0.0)]
    alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    c_d: f64,
    #[arg(long, default_value_t = 1.0)]
    beta_star: f64,
    #[arg(long, default_value_t = 1)]
    t_star: usize,
    #[arg(long, default_value_t = 10_000)]
    calibration_n: usize,
    /// Thresholds to check (comma separated); default is a 10-point grid.
    #[arg(long, value_delimiter = ',')]
    t_grid: Vec<f64>,
    #[arg(long, default_value_t = 100_000)]
    n_mc: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => cmd_run(args),
        Command::RateStudy(args) => cmd_rate_study(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Size(args) => cmd_size(args),
        Command::Train(args) => cmd_train(args),
        Command::Evaluate(args) => cmd_evaluate(args),
        Command::Bounds(args) => cmd_bounds(args),
        Command::VerifyMargin(args) => cmd_verify_margin(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Schema(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn read_file(path: &Path) -> CliResult<String> {
    fs::read_to_string(path)
        .map_err(|e| CliError::Runtime(format!("reading {}: {e}", path.display())))
}

fn write_file(path: &Path, content: &str) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent)
                .map_err(|e| CliError::Runtime(format!("creating {}: {e}", parent.display())))?;
        }
    }
    fs::write(path, content)
        .map_err(|e| CliError::Runtime(format!("writing {}: {e}", path.display())))
}

fn load_instance_spec(path: &Path) -> CliResult<InstanceSpec> {
    let text = read_file(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Schema(format!("{}: {e} (line {}, column {})", path.display(), e.line(), e.column()))
    })
}

fn effective_threads(requested: usize, deterministic: bool) -> usize {
    if deterministic {
        1
    } else if requested == 0 {
        std::thread::available_parallelism().map(|p| p.get()).unwrap_or(1)
    } else {
        requested
    }
}

fn resolve_out_dir(flag: Option<PathBuf>, cfg: &ExperimentConfig) -> PathBuf {
    flag.or_else(|| cfg.out_dir.clone().map(PathBuf::from))
        .or_else(|| std::env::var_os("HDCLASS_OUT_DIR").map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("results"))
}

fn cmd_run(args: RunArgs) -> CliResult<()> {
    let cfg = ExperimentConfig::from_json(&read_file(&args.config)?)?;
    let threads = effective_threads(args.threads, args.deterministic);
    let output = run_study(&cfg, threads)?;
    let out_dir = resolve_out_dir(args.out_dir, &cfg);
    write_file(&out_dir.join("results.csv"), &output.csv)?;
    let manifest = build_manifest(&cfg, &output);
    let manifest_json = serde_json::to_string_pretty(&manifest)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&out_dir.join("manifest.json"), &manifest_json)?;
    for (name, json) in &output.models {
        write_file(&out_dir.join("models").join(name), json)?;
    }
    if let Some(cmp) = &output.comparison {
        let report = serde_json::to_string_pretty(cmp)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(&out_dir.join("comparison.json"), &report)?;
        println!(
            "study complete: {} cells, slope {}, verdict {:?}",
            output.cells.len(),
            cmp.slope.map_or("NA".to_string(), |s| format!("{s:.4}")),
            cmp.verdict
        );
    } else {
        println!("study complete: {} cells (no comparison available)", output.cells.len());
    }
    println!("results written to {}", out_dir.display());
    Ok(())
}

fn cmd_rate_study(args: RateStudyArgs) -> CliResult<()> {
    let cfg = ExperimentConfig::from_json(&read_file(&args.config)?)?;
    let threads = effective_threads(args.threads, args.deterministic);
    let output = run_study(&cfg, threads)?;
    match args.out {
        Some(path) => write_file(&path, &output.csv)?,
        None => print!("{}", output.csv),
    }
    Ok(())
}

fn spec_from_gen_args(args: &GenArgs) -> CliResult<InstanceSpec> {
    if let Some(path) = &args.instance {
        return load_instance_spec(path);
    }
    let family = args
        .family
        .as_deref()
        .ok_or_else(|| CliError::Schema("either --instance or --family is required".into()))?;
    match family {
        "gam-linear" | "gam_linear" => {
            if args.indices.is_empty() {
                return Err(CliError::Schema("--indices is required for gam-linear".into()));
            }
            Ok(InstanceSpec::GamLinear { indices: args.indices.clone() })
        }
        "tensor-anova" | "tensor_anova" => {
            if args.indices.len() < args.order {
                return Err(CliError::Schema(
                    "--indices must list at least `order` coordinates for tensor-anova".into(),
                ));
            }
            // one tuple per consecutive window of the given indices
            let tuples: Vec<Vec<usize>> = args
                .indices
                .windows(args.order)
                .map(|w| w.to_vec())
                .collect();
            Ok(InstanceSpec::TensorAnova { order: args.order, tuples })
        }
        "hard" => Ok(InstanceSpec::Hard {
            alpha: args.alpha,
            c_d: args.c_d,
            beta_star: args.beta_star,
            t_star: args.t_star,
            calibration_n: args.calibration_n.unwrap_or(args.n),
        }),
        other => Err(CliError::Schema(format!("unknown family '{other}'"))),
    }
}

fn cmd_gen(args: GenArgs) -> CliResult<()> {
    let spec = spec_from_gen_args(&args)?;
    let built = spec.build(args.d)?;
    let data = built
        .as_instance()
        .sample(args.n, args.seed)
        .map_err(CliError::from)?;
    let csv = dataset_to_csv(&data);
    match &args.out {
        Some(path) => write_file(path, &csv)?,
        None => print!("{csv}"),
    }
    if let Some(path) = &args.emit_instance {
        let desc = match &built {
            BuiltInstance::Hard { inst, .. } => {
                serde_json::to_string_pretty(&InstanceSpec::HardInstance { instance: inst.clone() })
            }
            BuiltInstance::Modular(_) => serde_json::to_string_pretty(&spec),
        }
        .map_err(|e| CliError::Runtime(e.to_string()))?;
        write_file(path, &desc)?;
    }
    Ok(())
}

fn cmd_size(args: SizeArgs) -> CliResult<()> {
    let exps = RateExponents { s0: args.s0, s1: args.s1, u_star: 0, beta_eff: vec![] };
    let noise = NoiseProfile::new(args.alpha, args.c_d).map_err(CliError::from)?;
    let sized = size_architecture(args.n, args.d, &exps, &noise).map_err(CliError::from)?;
    let json = serde_json::to_string_pretty(&sized).map_err(|e| CliError::Runtime(e.to_string()))?;
    println!("{json}");
    Ok(())
}

fn cmd_train(args: TrainArgs) -> CliResult<()> {
    let data = dataset_from_csv(&read_file(&args.data)?).map_err(CliError::from)?;
    let d = data[0].x.len();
    let arch = match &args.arch {
        Some(path) => {
            let text = read_file(path)?;
            let arch: NetworkArch = serde_json::from_str(&text)
                .map_err(|e| CliError::Schema(format!("{}: {e}", path.display())))?;
            arch.validate().map_err(CliError::from)?;
            arch
        }
        None => {
            let exps = RateExponents { s0: args.s0, s1: args.s1, u_star: 0, beta_eff: vec![] };
            let noise = NoiseProfile::new(args.alpha, args.c_d).map_err(CliError::from)?;
            size_architecture(data.len(), d, &exps, &noise)
                .map_err(CliError::from)?
                .arch
        }
    };
    let cfg = TrainConfig {
        epochs: args.epochs,
        batch_size: args.batch_size,
        step_size: args.step_size,
        projection_period: args.projection_period,
        seed: args.seed,
        ..TrainConfig::default()
    };
    let selection = select_dropout(&data, &arch, &args.rho, &cfg).map_err(CliError::from)?;
    let mut table = String::from("rho,test_error,degenerate\n");
    for row in &selection.table {
        table.push_str(&format!("{},{},{}\n", row.rho, row.test_error, row.degenerate));
    }
    match &args.out_table {
        Some(path) => write_file(path, &table)?,
        None => print!("{table}"),
    }
    let model = serde_json::to_string_pretty(&selection.classifier)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_file(&args.out_model, &model)?;
    println!(
        "selected rho = {} (final hinge risk {:.6})",
        selection.rho_hat, selection.classifier.diagnostics.final_risk
    );
    Ok(())
}

fn cmd_evaluate(args: EvaluateArgs) -> CliResult<()> {
    let model: TrainedClassifier = serde_json::from_str(&read_file(&args.model)?)
        .map_err(|e| CliError::Schema(format!("{}: {e}", args.model.display())))?;
    model.net.validate().map_err(CliError::from)?;
    let spec = load_instance_spec(&args.instance)?;
    let built = spec.build(args.d)?;
    let est = mc_excess_risk(&model, built.as_instance(), args.n_test, args.seed)
        .map_err(CliError::from)?;
    println!("excess_risk,std_error");
    println!("{},{}", est.estimate, est.std_error);
    Ok(())
}

fn cmd_bounds(args: BoundsArgs) -> CliResult<()> {
    if args.n.is_empty() || args.logd.is_empty() {
        return Err(CliError::Schema("--n and --logd must be nonempty".into()));
    }
    if let Some(cov) = &args.covering {
        let v = covering_bound(cov[0] as usize, cov[1] as usize, cov[2] as usize, cov[3] as usize, cov[4], cov[5])
            .map_err(CliError::from)?;
        println!("covering_bound,{v}");
    }
    println!("n,logd,lower,upper");
    for &n in &args.n {
        for &logd in &args.logd {
            let lo = lower_bound_rate(n, logd, args.c_d, args.s0, args.d1);
            let hi = upper_bound_rate(n, logd, args.c_d, args.s0, args.d2);
            println!("{n},{logd},{lo},{hi}");
        }
    }
    Ok(())
}

fn cmd_verify_margin(args: VerifyMarginArgs) -> CliResult<()> {
    let t_grid: Vec<f64> = if args.t_grid.is_empty() {
        (1..=10).map(|i| i as f64 * 0.045).collect()
    } else {
        args.t_grid.clone()
    };
    let spec = match &args.instance {
        Some(path) => load_instance_spec(path)?,
        None => {
            if args.family != "hard" {
                return Err(CliError::Schema(
                    "only --family hard can be calibrated from flags; use --instance otherwise".into(),
                ));
            }
            InstanceSpec::Hard {
                alpha: args.alpha,
                c_d: args.c_d,
                beta_star: args.beta_star,
                t_star: args.t_star,
                calibration_n: args.calibration_n,
            }
        }
    };
    let built = spec.build(args.d)?;
    println!("t,p_hat,std_err,bound,verdict");
    let all_pass = match &built {
        BuiltInstance::Hard { inst, .. } => {
            let report = inst
                .verify_margin(args.alpha, args.c_d, &t_grid, args.n_mc, args.seed)
                .map_err(CliError::from)?;
            for row in &report.rows {
                println!(
                    "{},{},{},{},{}",
                    row.t,
                    row.p_hat,
                    row.std_err,
                    row.bound,
                    if row.pass { "PASS" } else { "FLAG" }
                );
            }
            report.all_pass
        }
        BuiltInstance::Modular(inst) => {
            let report = estimate_margin_exponent(inst, &inst.noise, &t_grid, args.n_mc, args.seed)
                .map_err(CliError::from)?;
            for row in &report.rows {
                println!(
                    "{},{},{},{},{}",
                    row.t,
                    row.p_hat,
                    row.std_err,
                    row.declared_bound,
                    if row.violates { "FLAG" } else { "PASS" }
                );
            }
            if let Some(alpha) = report.alpha_hat {
                println!("# fitted alpha = {alpha}");
            }
            report.rows.iter().all(|r| !r.violates)
        }
    };
    println!("# overall: {}", if all_pass { "PASS" } else { "FLAG" });
    if !all_pass {
        return Err(CliError::Runtime("margin condition violated".into()));
    }
    Ok(())
}
