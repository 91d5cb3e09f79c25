//! Hinge-loss empirical risk minimization over the sparse network class:
//! minibatch projected subgradient descent with per-update dropout masks,
//! plus data-splitting selection of the dropout rate.

use rand::seq::SliceRandom;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledSample;
use crate::error::{invalid, CoreError, Result};
use crate::network::{DropoutMasks, EvalScratch, Gradients, NetworkArch, SparseNetwork};
use crate::seeding::mix_seed;

const TAG_SPLIT: u64 = 0x53504C49;
const TAG_CANDIDATE: u64 = 0x52484F;
const TAG_FINAL: u64 = 0x46494E;
const TAG_RESTART: u64 = 0x52535452;

/// Relative epoch-over-epoch risk growth tolerated before a step-decay retry
/// is charged.
const RISK_INCREASE_TOL: f64 = 0.01;

/// Training hyperparameters.
///
/// The optimizer is minibatch projected subgradient descent. The full-data
/// risk of the projected iterate is monitored once per epoch; on an increase
/// the step size is halved and the best iterate restored, up to
/// `max_retries` times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial step size; decays by `step_decay` on each monitored increase.
    pub step_size: f64,
    pub step_decay: f64,
    pub max_retries: u32,
    /// Dropout rate on hidden units, in `[0, 1)`.
    pub dropout: f64,
    /// Apply the class projection every this many updates (and at the end).
    pub projection_period: usize,
    /// Multiplier on the scaled-uniform init half-width
    /// `sqrt(6 / (fan_in + fan_out))`; shifts start at zero.
    pub init_scale: f64,
    /// Independent training restarts; the one with the lowest final
    /// empirical hinge risk is returned (ties to the earliest restart).
    pub restarts: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 100,
            batch_size: 32,
            step_size: 0.05,
            step_decay: 0.5,
            max_retries: 5,
            dropout: 0.0,
            projection_period: 64,
            init_scale: 1.0,
            restarts: 3,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 || self.projection_period == 0 {
            return Err(invalid("epochs, batch_size, projection_period must be positive"));
        }
        if !(self.step_size > 0.0) || !(self.step_decay > 0.0 && self.step_decay < 1.0) {
            return Err(invalid("step_size must be positive and step_decay in (0, 1)"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(invalid("dropout rate must lie in [0, 1)"));
        }
        if !(self.init_scale > 0.0) {
            return Err(invalid("init_scale must be positive"));
        }
        Ok(())
    }
}

/// Training outcome diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainDiagnostics {
    pub initial_risk: f64,
    pub final_risk: f64,
    pub epochs_run: usize,
    pub retries: u32,
    /// Set when the dropout rate was chosen by data splitting.
    pub selected_dropout: Option<f64>,
}

/// A trained, in-class classifier.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainedClassifier {
    pub net: SparseNetwork,
    pub diagnostics: TrainDiagnostics,
}

impl TrainedClassifier {
    /// Sign of the network output; zero maps to `+1`.
    pub fn classify(&self, x: &[f64]) -> Result<i8> {
        Ok(if self.net.forward(x)? >= 0.0 { 1 } else { -1 })
    }
}

impl crate::data::Classifier for TrainedClassifier {
    fn decide(&self, x: &[f64]) -> Result<i8> {
        self.classify(x)
    }
}

fn init_network(arch: &NetworkArch, scale: f64, rng: &mut ChaCha8Rng) -> Result<SparseNetwork> {
    let mut net = SparseNetwork::zeros(arch.clone())?;
    for l in 0..=arch.depth {
        let fan_in = arch.widths[l] as f64;
        let fan_out = arch.widths[l + 1] as f64;
        let half = scale * (6.0 / (fan_in + fan_out)).sqrt();
        for row in &mut net.weights[l] {
            for v in row.iter_mut() {
                *v = rng.gen_range(-half..half).clamp(-arch.bound, arch.bound);
            }
        }
        // Identity backbone on all but the readout layer: at depth ceil(ln n)
        // a purely uniform init has no magnitude-coherent input-output path,
        // so the per-layer magnitude projection collapses the network to the
        // zero function. Unit diagonals keep signal flowing and survive
        // pruning until trained weights take over.
        if l < arch.depth {
            let k = arch.widths[l].min(arch.widths[l + 1]);
            for (i, row) in net.weights[l].iter_mut().enumerate().take(k) {
                row[i] = 1.0f64.min(arch.bound);
            }
        }
    }
    Ok(net)
}

fn as_pairs(data: &[LabeledSample]) -> Vec<(Vec<f64>, f64)> {
    data.iter().map(|s| (s.x.clone(), s.y_f64())).collect()
}

/// Minimizes the empirical hinge risk over the sparse class.
///
/// Deterministic per seed; the returned network is projected and always
/// satisfies the class constraints, and its full-data hinge risk never
/// exceeds the risk of the projected initializer.
pub fn train_erm(
    data: &[LabeledSample],
    arch: &NetworkArch,
    cfg: &TrainConfig,
) -> Result<TrainedClassifier> {
    cfg.validate()?;
    arch.validate()?;
    if data.is_empty() {
        return Err(invalid("training requires nonempty data"));
    }
    let d = arch.input_dim();
    if data.iter().any(|s| s.x.len() != d) {
        return Err(CoreError::DimensionMismatch { expected: d, got: data[0].x.len() });
    }
    let pairs = as_pairs(data);
    let mut winner: Option<TrainedClassifier> = None;
    for restart in 0..cfg.restarts.max(1) {
        let seed = if restart == 0 {
            cfg.seed
        } else {
            mix_seed(cfg.seed, &[TAG_RESTART, restart as u64])
        };
        let run = train_once(&pairs, arch, cfg, seed)?;
        let better = winner
            .as_ref()
            .map_or(true, |w| run.diagnostics.final_risk < w.diagnostics.final_risk);
        if better {
            winner = Some(run);
        }
    }
    Ok(winner.expect("at least one restart"))
}

fn train_once(
    pairs: &[(Vec<f64>, f64)],
    arch: &NetworkArch,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<TrainedClassifier> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut net = init_network(arch, cfg.init_scale, &mut rng)?;
    net.project_in_place();
    let initial_risk = net.empirical_hinge_risk(pairs)?;

    let mut best = net.clone();
    let mut best_risk = initial_risk;
    let mut step = cfg.step_size;
    let mut retries = 0u32;
    let mut epochs_run = 0usize;

    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut scratch = EvalScratch::new(arch);
    let mut grads = Gradients::zeros_like(&net);
    let mut updates = 0usize;
    let use_dropout = cfg.dropout > 0.0;
    let keep_prob = 1.0 - cfg.dropout;

    'epochs: for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            grads.reset();
            for &i in batch {
                // Masks are resampled per sample: a shared mask per update
                // zeroes the few surviving units of a projected-sparse layer
                // for the whole batch, which destroys the only signal path;
                // averaging over masks within the batch keeps the gradient
                // aligned with the dropout ensemble.
                let masks = if use_dropout {
                    Some(DropoutMasks {
                        keep: (0..arch.depth)
                            .map(|l| {
                                (0..arch.widths[l + 1]).map(|_| rng.gen::<f64>() < keep_prob).collect()
                            })
                            .collect(),
                        scale: 1.0 / keep_prob,
                    })
                } else {
                    None
                };
                net.accumulate_sample_subgrad(
                    &pairs[i].0,
                    pairs[i].1,
                    masks.as_ref(),
                    &mut scratch,
                    &mut grads,
                );
            }
            grads.scale(1.0 / batch.len() as f64);
            net.apply_step(&grads, step);
            updates += 1;
            if updates % cfg.projection_period == 0 {
                net.project_in_place();
            }
        }
        epochs_run += 1;
        let mut probe = net.clone();
        probe.project_in_place();
        let proj_risk = probe.empirical_hinge_risk(pairs)?;
        if std::env::var_os("HDCLASS_TRACE_TRAIN").is_some() {
            let dense = net.empirical_hinge_risk(pairs)?;
            let mut pos = 0usize;
            let mut pos_dense = 0usize;
            for (x, _) in pairs {
                if probe.forward(x)? > 0.0 {
                    pos += 1;
                }
                if net.forward(x)? > 0.0 {
                    pos_dense += 1;
                }
            }
            eprintln!(
                "epoch {epochs_run}: dense={dense:.5} proj={proj_risk:.5} step={step:.5} retries={retries} pos_frac_proj={:.3} pos_frac_dense={:.3}",
                pos as f64 / pairs.len() as f64,
                pos_dense as f64 / pairs.len() as f64,
            );
        }
        if proj_risk < best_risk {
            best_risk = proj_risk;
            best = probe;
        } else if proj_risk > best_risk * (1.0 + RISK_INCREASE_TOL) {
            // Material increase over the best projected risk: decay the step
            // and charge a retry. The iterate is kept (it carries the sparse
            // structure being reinforced); the returned model is the best
            // projected snapshot, so its risk cannot exceed the initial.
            step *= cfg.step_decay;
            retries += 1;
            if retries > cfg.max_retries {
                break 'epochs;
            }
        }
    }

    debug_assert!(best.class_membership().in_class);
    Ok(TrainedClassifier {
        net: best,
        diagnostics: TrainDiagnostics {
            initial_risk,
            final_risk: best_risk,
            epochs_run,
            retries,
            selected_dropout: None,
        },
    })
}

/// Misclassification frequency `(1/n) sum 1{f(x_i) y_i < 0}`.
///
/// The inequality is strict: an output of exactly zero is not counted as an
/// error (a degenerate all-zero predictor scores 0 here and is flagged in the
/// selection table instead).
pub fn test_error(clf: &TrainedClassifier, data: &[LabeledSample]) -> Result<f64> {
    if data.is_empty() {
        return Err(invalid("test error requires nonempty data"));
    }
    let mut errs = 0usize;
    for s in data {
        let f = clf.net.forward(&s.x)?;
        if f * s.y_f64() < 0.0 {
            errs += 1;
        }
    }
    Ok(errs as f64 / data.len() as f64)
}

/// One row of the dropout-selection table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutRow {
    pub rho: f64,
    pub test_error: f64,
    /// True when the trained predictor returned exactly zero on the whole
    /// holdout split.
    pub degenerate: bool,
}

/// Outcome of dropout-rate selection.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DropoutSelection {
    pub rho_hat: f64,
    pub table: Vec<DropoutRow>,
    pub classifier: TrainedClassifier,
}

/// Data-splitting selection of the dropout rate: one random 70/30 split
/// (train size `ceil(0.7 n)`), one model per candidate trained on the train
/// split and scored on the holdout split, argmin with ties to the smallest
/// candidate, then a final refit on all data at the chosen rate.
pub fn select_dropout(
    data: &[LabeledSample],
    arch: &NetworkArch,
    candidates: &[f64],
    cfg: &TrainConfig,
) -> Result<DropoutSelection> {
    if data.len() < 10 {
        return Err(invalid("dropout selection requires at least 10 samples"));
    }
    if candidates.is_empty() {
        return Err(invalid("candidate set must be nonempty"));
    }
    let mut rhos: Vec<f64> = candidates.to_vec();
    if rhos.iter().any(|r| !(0.0..1.0).contains(r)) {
        return Err(invalid("dropout candidates must lie in [0, 1)"));
    }
    rhos.sort_by(f64::total_cmp);
    rhos.dedup();

    let n = data.len();
    let n_train = (0.7 * n as f64).ceil() as usize;
    let mut indices: Vec<usize> = (0..n).collect();
    let mut split_rng = ChaCha8Rng::seed_from_u64(mix_seed(cfg.seed, &[TAG_SPLIT]));
    indices.shuffle(&mut split_rng);
    let train_set: Vec<LabeledSample> = indices[..n_train].iter().map(|&i| data[i].clone()).collect();
    let test_set: Vec<LabeledSample> = indices[n_train..].iter().map(|&i| data[i].clone()).collect();
    if test_set.is_empty() {
        return Err(invalid("holdout split is empty; need more data"));
    }

    let mut table = Vec::with_capacity(rhos.len());
    for (i, &rho) in rhos.iter().enumerate() {
        let mut run_cfg = cfg.clone();
        run_cfg.dropout = rho;
        run_cfg.seed = mix_seed(cfg.seed, &[TAG_CANDIDATE, i as u64]);
        let model = train_erm(&train_set, arch, &run_cfg)?;
        let err = test_error(&model, &test_set)?;
        let degenerate = test_set
            .iter()
            .all(|s| model.net.forward(&s.x).map(|f| f == 0.0).unwrap_or(false));
        table.push(DropoutRow { rho, test_error: err, degenerate });
    }
    let mut rho_hat = table[0].rho;
    let mut best = table[0].test_error;
    for row in &table[1..] {
        if row.test_error < best {
            best = row.test_error;
            rho_hat = row.rho;
        }
    }

    let mut final_cfg = cfg.clone();
    final_cfg.dropout = rho_hat;
    final_cfg.seed = mix_seed(cfg.seed, &[TAG_FINAL]);
    let mut classifier = train_erm(data, arch, &final_cfg)?;
    classifier.diagnostics.selected_dropout = Some(rho_hat);
    Ok(DropoutSelection { rho_hat, table, classifier })
}
