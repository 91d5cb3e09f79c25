//! Experiment orchestration: JSON experiment configs, derived-seed study
//! cells, parallel execution with deterministic output, and CSV/manifest
//! emission.

use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use hdclass::data::Instance;
use hdclass::seeding::{cell_seed, mix_seed, SEED_MIXER_ID};
use hdclass::{
    compare_to_theory, fit_rate, mc_excess_risk, rate_exponents, select_dropout,
    size_architecture, HardInstance, ModularInstance, NetworkArch, NoiseProfile, RateExponents,
    RateFit, SmoothnessSpec, StudyCell, TheoryComparison, TolerancePolicy, TrainConfig,
    TrainedClassifier,
};

const TAG_DATA: u64 = 0x44415441;
const TAG_TRAIN: u64 = 0x545241494E;
const TAG_EVAL: u64 = 0x4556414C;

/// Errors split by exit code: schema problems exit 2, runtime failures 1.
#[derive(Debug)]
pub enum CliError {
    Schema(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Schema(m) => write!(f, "config error: {m}"),
            CliError::Runtime(m) => write!(f, "runtime error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hdclass::CoreError> for CliError {
    fn from(e: hdclass::CoreError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult<T> = Result<T, CliError>;

fn schema_err(msg: impl Into<String>) -> CliError {
    CliError::Schema(msg.into())
}

/// Instance description: a built-in family plus parameters, or a fully
/// serialized hard instance.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum InstanceSpec {
    /// Additive family with identity components on the given coordinates
    /// (0-based).
    GamLinear { indices: Vec<usize> },
    /// Tensor-product interaction family over strictly increasing index
    /// tuples (0-based).
    TensorAnova { order: usize, tuples: Vec<Vec<usize>> },
    /// Hard signed-bump population calibrated at the given sample size.
    Hard {
        alpha: f64,
        c_d: f64,
        beta_star: f64,
        t_star: usize,
        calibration_n: usize,
    },
    /// A pre-calibrated hard instance embedded verbatim.
    HardInstance { instance: HardInstance },
}

/// A built instance with the metadata needed for auto-sizing.
pub enum BuiltInstance {
    Modular(ModularInstance),
    Hard {
        inst: HardInstance,
        noise: NoiseProfile,
        spec: SmoothnessSpec,
    },
}

impl BuiltInstance {
    pub fn as_instance(&self) -> &dyn Instance {
        match self {
            BuiltInstance::Modular(m) => m,
            BuiltInstance::Hard { inst, .. } => inst,
        }
    }

    pub fn noise(&self) -> NoiseProfile {
        match self {
            BuiltInstance::Modular(m) => m.noise,
            BuiltInstance::Hard { noise, .. } => *noise,
        }
    }

    pub fn smoothness(&self) -> &SmoothnessSpec {
        match self {
            BuiltInstance::Modular(m) => &m.spec,
            BuiltInstance::Hard { spec, .. } => spec,
        }
    }

    pub fn dim(&self) -> usize {
        self.as_instance().dim()
    }
}

impl InstanceSpec {
    pub fn build(&self, d: usize) -> CliResult<BuiltInstance> {
        match self {
            InstanceSpec::GamLinear { indices } => Ok(BuiltInstance::Modular(
                ModularInstance::gam_linear(d, indices).map_err(CliError::from)?,
            )),
            InstanceSpec::TensorAnova { order, tuples } => Ok(BuiltInstance::Modular(
                ModularInstance::tensor_anova(d, *order, tuples).map_err(CliError::from)?,
            )),
            InstanceSpec::Hard { alpha, c_d, beta_star, t_star, calibration_n } => {
                let spec = SmoothnessSpec::single_stage(d, *t_star, *beta_star, 1.0)
                    .map_err(CliError::from)?;
                let inst = HardInstance::calibrate(*calibration_n, d, &spec, *alpha, *c_d)
                    .map_err(CliError::from)?;
                let noise = NoiseProfile::new(*alpha, *c_d).map_err(CliError::from)?;
                Ok(BuiltInstance::Hard { inst, noise, spec })
            }
            InstanceSpec::HardInstance { instance } => {
                instance.validate().map_err(CliError::from)?;
                if instance.d != d {
                    return Err(schema_err(format!(
                        "embedded hard instance has d = {}, config says {d}",
                        instance.d
                    )));
                }
                let spec =
                    SmoothnessSpec::single_stage(d, instance.t_star, instance.beta_star, 1.0)
                        .map_err(CliError::from)?;
                let noise = NoiseProfile::new(0.0, 1.0).map_err(CliError::from)?;
                Ok(BuiltInstance::Hard { inst: instance.clone(), noise, spec })
            }
        }
    }
}

/// Architecture policy: size from the instance's exponents, or use the given
/// architecture verbatim.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ArchPolicy {
    Auto,
    Explicit { arch: NetworkArch },
}

/// A full experiment configuration.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub instance: InstanceSpec,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub arch: ArchPolicy,
    #[serde(default)]
    pub train: TrainConfig,
    pub rho_candidates: Vec<f64>,
    pub n_test: usize,
    pub base_seed: u64,
    #[serde(default)]
    pub out_dir: Option<String>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> CliResult<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| {
            schema_err(format!("{e} (line {}, column {})", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        if self.n_grid.is_empty() {
            return Err(schema_err("n_grid must be nonempty"));
        }
        if self.n_grid.windows(2).any(|w| w[0] >= w[1]) {
            return Err(schema_err("n_grid values must be strictly increasing"));
        }
        if self.seeds.is_empty() {
            return Err(schema_err("seeds must be nonempty"));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(schema_err("seeds must be distinct"));
        }
        if self.rho_candidates.is_empty() {
            return Err(schema_err("rho_candidates must be nonempty"));
        }
        if self.rho_candidates.iter().any(|r| !(0.0..1.0).contains(r)) {
            return Err(schema_err("rho_candidates must lie in [0, 1)"));
        }
        if self.n_test == 0 {
            return Err(schema_err("n_test must be positive"));
        }
        if self.n_grid[0] < 10 {
            return Err(schema_err("n values below 10 cannot be split 70/30"));
        }
        self.train.validate().map_err(|e| schema_err(e.to_string()))?;
        Ok(())
    }

    /// Hash of the canonical (parsed, re-serialized) config; whitespace and
    /// key order in the input file do not matter, every field value does.
    pub fn canonical_hash(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        let digest = Sha256::digest(canonical.as_bytes());
        digest.iter().fold(String::new(), |mut acc, b| {
            let _ = write!(acc, "{b:02x}");
            acc
        })
    }
}

/// One evaluated study cell plus its trained model.
pub struct CellOutcome {
    pub cell: StudyCell,
    pub rho_hat: f64,
    pub model_json: String,
}

/// Full study output.
pub struct StudyOutput {
    pub cells: Vec<StudyCell>,
    pub rho_hats: Vec<f64>,
    pub models: Vec<(String, String)>,
    pub fit: Option<RateFit>,
    pub comparison: Option<TheoryComparison>,
    pub exponents: RateExponents,
    pub csv: String,
}

fn run_cell(
    cfg: &ExperimentConfig,
    built: &BuiltInstance,
    exps: &RateExponents,
    n: usize,
    replicate: usize,
) -> CliResult<CellOutcome> {
    let d = cfg.d;
    let seed = cfg.seeds[replicate];
    let cseed = cell_seed(cfg.base_seed, n, d, replicate);
    let data = built
        .as_instance()
        .sample(n, mix_seed(cseed, &[TAG_DATA]))
        .map_err(CliError::from)?;
    let arch = match &cfg.arch {
        ArchPolicy::Auto => {
            size_architecture(n, d, exps, &built.noise())
                .map_err(CliError::from)?
                .arch
        }
        ArchPolicy::Explicit { arch } => arch.clone(),
    };
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = mix_seed(cseed, &[TAG_TRAIN]);
    let selection = select_dropout(&data, &arch, &cfg.rho_candidates, &train_cfg)
        .map_err(CliError::from)?;
    let est = mc_excess_risk(
        &selection.classifier,
        built.as_instance(),
        cfg.n_test,
        mix_seed(cseed, &[TAG_EVAL]),
    )
    .map_err(CliError::from)?;
    let model_json = model_to_json(&selection.classifier).map_err(CliError::from)?;
    Ok(CellOutcome {
        cell: StudyCell { n, d, seed, excess_risk: est.estimate, std_error: est.std_error },
        rho_hat: selection.rho_hat,
        model_json,
    })
}

fn model_to_json(clf: &TrainedClassifier) -> hdclass::Result<String> {
    Ok(serde_json::to_string_pretty(clf).map_err(hdclass::CoreError::from)?)
}

/// Runs the full study: every `(n, seed)` cell is generated, sized, trained
/// (with dropout selection), and evaluated; then the rate fit and theory
/// comparison are computed and rendered as CSV.
///
/// `threads = 1` forces serial execution; any thread count produces
/// byte-identical output because every cell derives its own seeds.
pub fn run_study(cfg: &ExperimentConfig, threads: usize) -> CliResult<StudyOutput> {
    cfg.validate()?;
    let built = cfg.instance.build(cfg.d)?;
    let noise = built.noise();
    let exps = rate_exponents(built.smoothness(), noise.alpha).map_err(CliError::from)?;

    let jobs: Vec<(usize, usize)> = cfg
        .n_grid
        .iter()
        .flat_map(|&n| (0..cfg.seeds.len()).map(move |r| (n, r)))
        .collect();

    let outcomes: Vec<CliResult<CellOutcome>> = if threads <= 1 {
        jobs.iter().map(|&(n, r)| run_cell(cfg, &built, &exps, n, r)).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        pool.install(|| {
            jobs.par_iter()
                .map(|&(n, r)| run_cell(cfg, &built, &exps, n, r))
                .collect()
        })
    };

    let mut cells = Vec::with_capacity(jobs.len());
    let mut rho_hats = Vec::with_capacity(jobs.len());
    let mut models = Vec::with_capacity(jobs.len());
    for outcome in outcomes {
        let o = outcome?;
        models.push((format!("model_n{}_seed{}.json", o.cell.n, o.cell.seed), o.model_json));
        rho_hats.push(o.rho_hat);
        cells.push(o.cell);
    }

    let fit_input: Vec<(f64, f64)> = cells.iter().map(|c| (c.n as f64, c.excess_risk)).collect();
    let fit = fit_rate(&fit_input).ok();
    let comparison =
        compare_to_theory(&cells, &exps, &noise, &TolerancePolicy::default()).ok();
    let csv = render_csv(&cells, &noise, &exps, fit.as_ref(), comparison.as_ref());
    Ok(StudyOutput { cells, rho_hats, models, fit, comparison, exponents: exps, csv })
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| format!("{x}"))
}

/// CSV with columns `n,d,seed,excess_risk,std_error,theory_lower,theory_upper,slope_fit`.
pub fn render_csv(
    cells: &[StudyCell],
    noise: &NoiseProfile,
    exps: &RateExponents,
    fit: Option<&RateFit>,
    comparison: Option<&TheoryComparison>,
) -> String {
    let mut out = String::from("n,d,seed,excess_risk,std_error,theory_lower,theory_upper,slope_fit\n");
    let d1 = comparison.map(|c| c.fitted_d1).unwrap_or(1.0);
    let d2 = comparison.map(|c| c.fitted_d2).unwrap_or(1.0);
    let slope = fit.map(|f| f.slope);
    for c in cells {
        let log_d = (c.d as f64).ln();
        let lower = hdclass::lower_bound_rate(c.n, log_d, noise.c_d, exps.s0, d1);
        let upper = hdclass::upper_bound_rate(c.n, log_d, noise.c_d, exps.s0, d2);
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            c.n,
            c.d,
            c.seed,
            c.excess_risk,
            c.std_error,
            lower,
            upper,
            fmt_opt(slope)
        );
    }
    out
}

/// Run manifest recorded next to the results.
#[derive(Debug, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed_mixer: String,
    pub package_version: String,
    pub family: String,
    pub d: usize,
    pub n_grid: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base_seed: u64,
    pub s0: f64,
    pub s1: f64,
    pub selected_rhos: Vec<f64>,
}

pub fn build_manifest(cfg: &ExperimentConfig, output: &StudyOutput) -> Manifest {
    let family = match &cfg.instance {
        InstanceSpec::GamLinear { .. } => "gam_linear",
        InstanceSpec::TensorAnova { .. } => "tensor_anova",
        InstanceSpec::Hard { .. } => "hard",
        InstanceSpec::HardInstance { .. } => "hard_instance",
    };
    Manifest {
        config_hash: cfg.canonical_hash(),
        seed_mixer: SEED_MIXER_ID.to_string(),
        package_version: env!("CARGO_PKG_VERSION").to_string(),
        family: family.to_string(),
        d: cfg.d,
        n_grid: cfg.n_grid.clone(),
        seeds: cfg.seeds.clone(),
        base_seed: cfg.base_seed,
        s0: output.exponents.s0,
        s1: output.exponents.s1,
        selected_rhos: output.rho_hats.clone(),
    }
}
