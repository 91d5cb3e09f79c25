//! Populations whose conditional probability has a modular (compositional)
//! structure, including generalized-additive and tensor-product ANOVA
//! families, margin-condition diagnostics, and the density-ratio sufficient
//! condition for the margin exponent.

use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::architecture::{NoiseProfile, SmoothnessSpec};
use crate::data::{Instance, LabeledSample};
use crate::error::{invalid, CoreError, Result};

/// Slack allowed on declared stage ranges before an evaluation is rejected;
/// absorbs floating-point drift in stage arithmetic.
const RANGE_TOL: f64 = 1e-9;

/// Number of random points swept at construction to validate stage ranges.
pub const VALIDATION_SWEEP_POINTS: usize = 100_000;

const VALIDATION_SWEEP_SEED: u64 = 0x5EED_CAFE;

type Rule = Box<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// One component function of a stage: reads only its active coordinates.
pub struct Component {
    pub active: Vec<usize>,
    rule: Rule,
}

impl Component {
    pub fn new(active: Vec<usize>, rule: impl Fn(&[f64]) -> f64 + Send + Sync + 'static) -> Self {
        Component { active, rule: Box::new(rule) }
    }
}

/// One stage of the composition.
pub struct Stage {
    pub components: Vec<Component>,
}

/// Label priors; the margin floor `c` is `min(pi_p, pi_q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Priors {
    pub pi_p: f64,
}

impl Priors {
    pub fn pi_q(&self) -> f64 {
        1.0 - self.pi_p
    }

    pub fn margin_floor(&self) -> f64 {
        self.pi_p.min(self.pi_q())
    }
}

/// An executable modular conditional probability with its smoothness
/// metadata, sampling marginal (uniform on `[0,1]^d`), priors, and declared
/// noise profile. Immutable after construction.
pub struct ModularInstance {
    pub spec: SmoothnessSpec,
    stages: Vec<Stage>,
    pub priors: Priors,
    pub noise: NoiseProfile,
    pub family: String,
}

impl ModularInstance {
    /// Builds and validates an instance from explicit stages. Validation
    /// sweeps random points and checks every stage output against its
    /// declared range, then derives the label prior from the sweep mean.
    pub fn custom(
        spec: SmoothnessSpec,
        stages: Vec<Stage>,
        noise: NoiseProfile,
        family: impl Into<String>,
    ) -> Result<Self> {
        spec.validate()?;
        let q = spec.q();
        if stages.len() != q + 1 {
            return Err(invalid(format!("expected {} stages, got {}", q + 1, stages.len())));
        }
        for (u, stage) in stages.iter().enumerate() {
            if stage.components.len() != spec.dim(u + 1) {
                return Err(invalid(format!(
                    "stage {u} must have {} components, got {}",
                    spec.dim(u + 1),
                    stage.components.len()
                )));
            }
            for comp in &stage.components {
                if comp.active.len() != spec.intrinsic[u] {
                    return Err(invalid(format!(
                        "stage {u} components must read exactly t_{u} = {} coordinates",
                        spec.intrinsic[u]
                    )));
                }
                if comp.active.iter().any(|&i| i >= spec.dim(u)) {
                    return Err(invalid(format!("stage {u} active index out of range")));
                }
            }
        }
        let mut inst = ModularInstance {
            spec,
            stages,
            priors: Priors { pi_p: 0.5 },
            noise,
            family: family.into(),
        };
        let mean_eta = inst.validation_sweep(VALIDATION_SWEEP_POINTS, VALIDATION_SWEEP_SEED)?;
        inst.priors = Priors { pi_p: mean_eta };
        Ok(inst)
    }

    /// Evaluates the composition at `x`, checking each stage output against
    /// its declared range and the final value against `[0, 1]`.
    pub fn eval_eta(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.spec.ambient_dim {
            return Err(CoreError::DimensionMismatch { expected: self.spec.ambient_dim, got: x.len() });
        }
        let (lo0, hi0) = (self.spec.lo[0], self.spec.hi[0]);
        if x.iter().any(|&v| v < lo0 - RANGE_TOL || v > hi0 + RANGE_TOL) {
            return Err(invalid("input outside the instance domain"));
        }
        let mut cur = x.to_vec();
        let mut args = Vec::new();
        for (u, stage) in self.stages.iter().enumerate() {
            let lo = self.spec.lo[u + 1];
            let hi = self.spec.hi[u + 1];
            let mut next = Vec::with_capacity(stage.components.len());
            for comp in &stage.components {
                args.clear();
                args.extend(comp.active.iter().map(|&i| cur[i]));
                let v = (comp.rule)(&args);
                if !(v >= lo - RANGE_TOL && v <= hi + RANGE_TOL) {
                    return Err(CoreError::InstanceValidation(format!(
                        "stage {u} output {v} outside declared range [{lo}, {hi}]"
                    )));
                }
                next.push(v.clamp(lo, hi));
            }
            cur = next;
        }
        let eta = cur[0];
        if !(0.0 - RANGE_TOL..=1.0 + RANGE_TOL).contains(&eta) {
            return Err(CoreError::InstanceValidation(format!("eta value {eta} outside [0, 1]")));
        }
        Ok(eta.clamp(0.0, 1.0))
    }

    /// Ambient coordinates the instance actually reads (union of stage-0
    /// active sets).
    pub fn active_coordinates(&self) -> Vec<usize> {
        let mut coords: Vec<usize> = self.stages[0]
            .components
            .iter()
            .flat_map(|c| c.active.iter().copied())
            .collect();
        coords.sort_unstable();
        coords.dedup();
        coords
    }

    /// Evaluates the composition treating only the active coordinates as
    /// free; the rest are pinned at 1/2.
    pub fn eval_eta_active(&self, active_values: &[f64]) -> Result<f64> {
        let coords = self.active_coordinates();
        if coords.len() != active_values.len() {
            return Err(CoreError::DimensionMismatch { expected: coords.len(), got: active_values.len() });
        }
        let mut x = vec![0.5; self.spec.ambient_dim];
        for (i, &c) in coords.iter().enumerate() {
            x[c] = active_values[i];
        }
        self.eval_eta(&x)
    }

    fn validation_sweep(&self, points: usize, seed: u64) -> Result<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut total = 0.0;
        for _ in 0..points {
            let x: Vec<f64> = (0..self.spec.ambient_dim).map(|_| rng.gen::<f64>()).collect();
            total += self.eval_eta(&x)?;
        }
        Ok(total / points as f64)
    }

    /// Generalized additive family: `g0(x) = (f_j(x_j))_{j in J}`, `g1 = sum`,
    /// followed by the centered affine squash
    /// `eta = 1/2 + (sum - mid) / (2 (hi - lo))` which lands in `[1/4, 3/4]`.
    pub fn gam(
        d: usize,
        indices: &[usize],
        f: impl Fn(f64) -> f64 + Send + Sync + Clone + 'static,
        f_range: (f64, f64),
        noise: NoiseProfile,
        family: impl Into<String>,
    ) -> Result<Self> {
        if indices.is_empty() {
            return Err(invalid("index set must be nonempty"));
        }
        if indices.iter().any(|&j| j >= d) {
            return Err(invalid("index set out of range"));
        }
        let d1 = indices.len();
        let (flo, fhi) = f_range;
        if !(flo < fhi) {
            return Err(invalid("component range must satisfy lo < hi"));
        }
        let sum_lo = d1 as f64 * flo;
        let sum_hi = d1 as f64 * fhi;
        let spec = SmoothnessSpec {
            ambient_dim: d,
            stage_dims: vec![d1, 1],
            intrinsic: vec![1, d1, 1],
            betas: vec![1.0, 1.0, 1.0],
            lo: vec![0.0, flo, sum_lo, 0.0],
            hi: vec![1.0, fhi, sum_hi, 1.0],
            radii: vec![1.0, d1 as f64, 1.0],
        };
        let mut stages = Vec::new();
        let comps = indices
            .iter()
            .map(|&j| {
                let f = f.clone();
                Component::new(vec![j], move |a: &[f64]| f(a[0]))
            })
            .collect();
        stages.push(Stage { components: comps });
        stages.push(Stage {
            components: vec![Component::new((0..d1).collect(), |a: &[f64]| a.iter().sum())],
        });
        let mid = 0.5 * (sum_lo + sum_hi);
        let halfspan = 2.0 * (sum_hi - sum_lo);
        stages.push(Stage {
            components: vec![Component::new(vec![0], move |a: &[f64]| 0.5 + (a[0] - mid) / halfspan)],
        });
        Self::custom(spec, stages, noise, family)
    }

    /// The linear GAM reference instance: identity components on the chosen
    /// coordinates. For two indices the Bayes rule is
    /// `sign(x_i + x_j - 1)` and the margin law is `8t - 16t^2`.
    pub fn gam_linear(d: usize, indices: &[usize]) -> Result<Self> {
        let noise = NoiseProfile::new(1.0, 8.0)?;
        Self::gam(d, indices, |z| z, (0.0, 1.0), noise, "gam_linear")
    }

    /// Tensor-product ANOVA family of interaction order `r`: components are
    /// products `f(x_{j1}) ... f(x_{jr})` over strictly increasing tuples,
    /// then sum and squash.
    pub fn tensor_anova(d: usize, order: usize, tuples: &[Vec<usize>]) -> Result<Self> {
        if order == 0 || order >= d.max(2) {
            return Err(invalid("interaction order must satisfy 1 <= r < d"));
        }
        if tuples.is_empty() {
            return Err(invalid("tuple set must be nonempty"));
        }
        for t in tuples {
            if t.len() != order {
                return Err(invalid("every tuple must have length r"));
            }
            if t.windows(2).any(|w| w[0] >= w[1]) {
                return Err(invalid("tuples must be strictly increasing"));
            }
            if t.iter().any(|&j| j >= d) {
                return Err(invalid("tuple index out of range"));
            }
        }
        let d1 = tuples.len();
        let sum_lo = 0.0;
        let sum_hi = d1 as f64;
        let spec = SmoothnessSpec {
            ambient_dim: d,
            stage_dims: vec![d1, 1],
            intrinsic: vec![order, d1, 1],
            betas: vec![1.0, 1.0, 1.0],
            lo: vec![0.0, 0.0, sum_lo, 0.0],
            hi: vec![1.0, 1.0, sum_hi, 1.0],
            radii: vec![order as f64, d1 as f64, 1.0],
        };
        let mut stages = Vec::new();
        let comps = tuples
            .iter()
            .map(|t| Component::new(t.clone(), |a: &[f64]| a.iter().product()))
            .collect();
        stages.push(Stage { components: comps });
        stages.push(Stage {
            components: vec![Component::new((0..d1).collect(), |a: &[f64]| a.iter().sum())],
        });
        let mid = 0.5 * (sum_lo + sum_hi);
        let halfspan = 2.0 * (sum_hi - sum_lo);
        stages.push(Stage {
            components: vec![Component::new(vec![0], move |a: &[f64]| 0.5 + (a[0] - mid) / halfspan)],
        });
        let noise = NoiseProfile::new(1.0, 4.0 * (d1 as f64) + 4.0)?;
        Self::custom(spec, stages, noise, "tensor_anova")
    }
}

impl Instance for ModularInstance {
    fn dim(&self) -> usize {
        self.spec.ambient_dim
    }

    fn eta(&self, x: &[f64]) -> Result<f64> {
        self.eval_eta(x)
    }

    fn sample_x(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        (0..self.spec.ambient_dim).map(|_| rng.gen::<f64>()).collect()
    }
}

/// Draws an iid dataset from the instance: `X` uniform on `[0,1]^d`, label
/// `+1` with probability `eta(X)`.
pub fn sample_dataset(inst: &ModularInstance, n: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    inst.sample(n, seed)
}

/// One row of the margin-probability table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginRow {
    pub t: f64,
    pub p_hat: f64,
    pub std_err: f64,
    pub declared_bound: f64,
    pub violates: bool,
}

/// Monte-Carlo margin-condition diagnostics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginReport {
    /// Fitted noise exponent; `None` when every probability is zero.
    pub alpha_hat: Option<f64>,
    pub c_hat: Option<f64>,
    pub rows: Vec<MarginRow>,
    /// True when no sampled point had `|eta - 1/2| <= max t`.
    pub infinite_margin: bool,
}

/// Estimates `P(|eta(X) - 1/2| <= t)` over a grid of thresholds, fits
/// `log P = alpha log t + log C` by least squares, and flags rows exceeding
/// the declared bound by more than three binomial standard errors.
pub fn estimate_margin_exponent(
    inst: &(impl Instance + ?Sized),
    declared: &NoiseProfile,
    t_grid: &[f64],
    n_mc: usize,
    seed: u64,
) -> Result<MarginReport> {
    if t_grid.is_empty() {
        return Err(invalid("threshold grid must be nonempty"));
    }
    if t_grid.iter().any(|&t| !(t > 0.0 && t < 0.5)) {
        return Err(invalid("thresholds must lie in (0, 1/2)"));
    }
    if n_mc == 0 {
        return Err(invalid("n_mc must be positive"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut margins = Vec::with_capacity(n_mc);
    for _ in 0..n_mc {
        let x = inst.sample_x(&mut rng);
        margins.push((inst.eta(&x)? - 0.5).abs());
    }
    margins.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let count = margins.partition_point(|&m| m <= t);
        let p_hat = count as f64 / n_mc as f64;
        let std_err = (p_hat * (1.0 - p_hat) / n_mc as f64).sqrt();
        let declared_bound = declared.c_d * t.powf(declared.alpha);
        let violates = p_hat > declared_bound + 3.0 * std_err;
        rows.push(MarginRow { t, p_hat, std_err, declared_bound, violates });
    }
    let pts: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.p_hat > 0.0)
        .map(|r| (r.t.ln(), r.p_hat.ln()))
        .collect();
    let (alpha_hat, c_hat, infinite) = if pts.is_empty() {
        (None, None, true)
    } else if pts.len() == 1 {
        (None, Some(pts[0].1.exp()), false)
    } else {
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        if sxx == 0.0 {
            (None, Some(my.exp()), false)
        } else {
            let slope = sxy / sxx;
            (Some(slope), Some((my - slope * mx).exp()), false)
        }
    };
    Ok(MarginReport { alpha_hat, c_hat, rows, infinite_margin: infinite })
}

/// Evidence about the density of the likelihood ratio `q/p` near the
/// decision boundary.
pub enum RatioEvidence<'a> {
    /// A density handle evaluated on a grid.
    Density(&'a dyn Fn(f64) -> f64),
    /// Samples of the ratio; the density is estimated by histogram.
    Samples(&'a [f64]),
}

/// Verdict of the density-ratio sufficient condition for the margin bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Prop1Report {
    pub holds: bool,
    pub c1: f64,
    pub c2: f64,
    pub implied_alpha: f64,
    pub implied_c_d: f64,
    /// Observed `sup f(r) |r - center|^tau` over the delta-neighborhood.
    pub sup_weighted_density: f64,
}

/// Checks `sup_{|r - center| <= delta} f_{q/p}(r) |r - center|^tau <= M_d`
/// and computes the implied margin-condition constants
/// `C1 = 2^{2-tau}/(1-tau) ((2(1-c) + c delta)/c)^{1-tau}`,
/// `C2 = ((4-2c)/(c delta))^{1-tau}`, `alpha = 1 - tau`,
/// `C_d = max(C1 M_d, C2)`.
pub fn check_prop1(
    evidence: RatioEvidence<'_>,
    center: f64,
    delta: f64,
    tau: f64,
    c: f64,
    m_d: f64,
) -> Result<Prop1Report> {
    if !(delta > 0.0 && delta < 1.0) {
        return Err(invalid("delta must lie in (0, 1)"));
    }
    if !(0.0..1.0).contains(&tau) {
        return Err(invalid("tau must lie in [0, 1)"));
    }
    if !(c > 0.0 && c <= 0.5) {
        return Err(invalid("c must lie in (0, 1/2]"));
    }
    if !(m_d > 0.0) {
        return Err(invalid("M_d must be positive"));
    }
    let c1 = 2.0f64.powf(2.0 - tau) / (1.0 - tau)
        * ((2.0 * (1.0 - c) + c * delta) / c).powf(1.0 - tau);
    let c2 = ((4.0 - 2.0 * c) / (c * delta)).powf(1.0 - tau);
    let sup = match evidence {
        RatioEvidence::Density(f) => {
            let grid = 4001usize;
            let mut sup = 0.0f64;
            for i in 0..grid {
                let r = center - delta + 2.0 * delta * i as f64 / (grid - 1) as f64;
                sup = sup.max(f(r) * (r - center).abs().powf(tau));
            }
            sup
        }
        RatioEvidence::Samples(samples) => {
            if samples.is_empty() {
                return Err(invalid("ratio sample set must be nonempty"));
            }
            let bins = ((samples.len() as f64).cbrt().ceil() as usize).clamp(20, 400);
            let width = 2.0 * delta / bins as f64;
            let mut counts = vec![0usize; bins];
            for &r in samples {
                if (r - center).abs() <= delta {
                    let b = (((r - center + delta) / width) as usize).min(bins - 1);
                    counts[b] += 1;
                }
            }
            let n = samples.len() as f64;
            let mut sup = 0.0f64;
            for (b, &cnt) in counts.iter().enumerate() {
                let mid = center - delta + (b as f64 + 0.5) * width;
                let dens = cnt as f64 / (n * width);
                sup = sup.max(dens * (mid - center).abs().powf(tau));
            }
            sup
        }
    };
    Ok(Prop1Report {
        holds: sup <= m_d * (1.0 + 1e-9),
        c1,
        c2,
        implied_alpha: 1.0 - tau,
        implied_c_d: (c1 * m_d).max(c2),
        sup_weighted_density: sup,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::bayes_classify;

    pub(crate) fn constant_instance(value: f64) -> ModularInstance {
        let spec = SmoothnessSpec {
            ambient_dim: 2,
            stage_dims: vec![],
            intrinsic: vec![1],
            betas: vec![1.0],
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
            radii: vec![1.0],
        };
        let stage = Stage { components: vec![Component::new(vec![0], move |_: &[f64]| value)] };
        ModularInstance::custom(spec, vec![stage], NoiseProfile::new(0.0, 1.0).unwrap(), "constant")
            .unwrap()
    }

    #[test]
    fn constant_half_instance() {
        let inst = constant_instance(0.5);
        assert_eq!(inst.eval_eta(&[0.3, 0.9]).unwrap(), 0.5);
    }

    #[test]
    fn gam_linear_reference_values() {
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let eta = inst.eval_eta(&[1.0, 1.0, 0.2, 0.9]).unwrap();
        assert!((eta - 0.75).abs() < 1e-12);
        let eta = inst.eval_eta(&[0.5, 0.5, 0.0, 0.0]).unwrap();
        assert!((eta - 0.5).abs() < 1e-12);
        // Bayes rule is sign(x1 + x2 - 1)
        assert_eq!(bayes_classify(inst.eval_eta(&[0.9, 0.3, 0.0, 0.0]).unwrap()), 1);
        assert_eq!(bayes_classify(inst.eval_eta(&[0.2, 0.3, 0.0, 0.0]).unwrap()), -1);
        assert_eq!(inst.active_coordinates(), vec![0, 1]);
        // spec records t0 = 1, t1 = |J|
        assert_eq!(inst.spec.intrinsic[0], 1);
        assert_eq!(inst.spec.intrinsic[1], 2);
    }

    #[test]
    fn single_index_boundary_at_half() {
        let inst = ModularInstance::gam_linear(3, &[0]).unwrap();
        assert!(inst.eval_eta(&[0.49, 0.0, 0.0]).unwrap() < 0.5);
        assert!(inst.eval_eta(&[0.51, 0.0, 0.0]).unwrap() > 0.5);
        assert_eq!(bayes_classify(inst.eval_eta(&[0.5, 0.0, 0.0]).unwrap()), 1);
    }

    #[test]
    fn tensor_anova_products_and_metadata() {
        let inst = ModularInstance::tensor_anova(4, 2, &[vec![0, 1]]).unwrap();
        // g0 = x1 x2, squash = 1/2 + (x1 x2 - 1/2)/2
        let eta = inst.eval_eta(&[0.5, 0.5, 0.1, 0.1]).unwrap();
        assert!((eta - (0.5 + (0.25 - 0.5) / 2.0)).abs() < 1e-12);
        assert_eq!(inst.spec.intrinsic[0], 2);
        assert_eq!(inst.spec.intrinsic[1], 1);

        // order 1 reduces to the additive family
        let anova1 = ModularInstance::tensor_anova(4, 1, &[vec![0], vec![1]]).unwrap();
        let gam = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        for p in [[0.2, 0.9], [0.5, 0.5], [0.8, 0.1]] {
            let x = [p[0], p[1], 0.3, 0.3];
            assert!((anova1.eval_eta(&x).unwrap() - gam.eval_eta(&x).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn invalid_range_declaration_is_rejected() {
        let spec = SmoothnessSpec {
            ambient_dim: 1,
            stage_dims: vec![],
            intrinsic: vec![1],
            betas: vec![1.0],
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
            radii: vec![1.0],
        };
        // maps into [0, 2]: violates the declared [0, 1] output range
        let stage = Stage { components: vec![Component::new(vec![0], |a: &[f64]| 2.0 * a[0])] };
        let noise = NoiseProfile::new(0.0, 1.0).unwrap();
        assert!(ModularInstance::custom(spec, vec![stage], noise, "bad").is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_respects_eta() {
        let inst = constant_instance(1.0);
        let data = sample_dataset(&inst, 200, 9).unwrap();
        assert!(data.iter().all(|s| s.y == 1));

        let half = constant_instance(0.5);
        let n = 10_000;
        let data = sample_dataset(&half, n, 11).unwrap();
        let mean: f64 = data.iter().map(|s| s.y as f64).sum::<f64>() / n as f64;
        assert!(mean.abs() <= 4.0 / (n as f64).sqrt());

        let a = sample_dataset(&half, 50, 3).unwrap();
        let b = sample_dataset(&half, 50, 3).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn label_frequency_matches_eta_mean() {
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let n = 20_000;
        let data = sample_dataset(&inst, n, 5).unwrap();
        let freq = data.iter().filter(|s| s.y == 1).count() as f64 / n as f64;
        // E[eta] = 1/2 for this family
        assert!((freq - 0.5).abs() <= 4.0 * (0.25f64 / n as f64).sqrt() + 0.01);
    }

    #[test]
    fn pointwise_bayes_rule_minimizes_regret() {
        for i in 0..=20 {
            let eta = i as f64 / 20.0;
            let bayes = bayes_classify(eta);
            for other in [-1i8, 1] {
                let regret = (2.0 * eta - 1.0).abs() * if other != bayes { 1.0 } else { 0.0 };
                assert!(regret >= 0.0);
                if other != bayes && (eta - 0.5).abs() > 0.0 {
                    assert!(regret > 0.0);
                }
            }
        }
    }

    #[test]
    fn margin_exponent_degenerate_cases() {
        let sure = constant_instance(1.0);
        let report =
            estimate_margin_exponent(&sure, &sure.noise, &[0.01, 0.1, 0.4], 5_000, 1).unwrap();
        assert!(report.infinite_margin);
        assert!(report.alpha_hat.is_none());

        let half = constant_instance(0.5);
        let report =
            estimate_margin_exponent(&half, &half.noise, &[0.01, 0.1, 0.4], 5_000, 1).unwrap();
        assert!(!report.infinite_margin);
        let alpha = report.alpha_hat.unwrap();
        assert!(alpha.abs() < 1e-12);
        assert!(report.rows.iter().all(|r| r.p_hat == 1.0));
    }

    #[test]
    fn gam_linear_margin_law_quick() {
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let report = estimate_margin_exponent(&inst, &inst.noise, &[0.01, 0.05, 0.1], 200_000, 2)
            .unwrap();
        for row in &report.rows {
            let truth = 8.0 * row.t - 16.0 * row.t * row.t;
            assert!((row.p_hat - truth).abs() <= 4.0 * row.std_err + 1e-4, "t={} p={} truth={truth}", row.t, row.p_hat);
            assert!(!row.violates);
        }
        let alpha = report.alpha_hat.unwrap();
        assert!((alpha - 1.0).abs() < 0.2, "alpha_hat = {alpha}");
    }

    #[test]
    fn prop1_reference_constants() {
        let density = |_r: f64| 1.0;
        let report = check_prop1(RatioEvidence::Density(&density), 1.0, 0.5, 0.0, 0.5, 2.0).unwrap();
        assert_eq!(report.c1, 10.0);
        assert_eq!(report.c2, 12.0);
        assert_eq!(report.implied_alpha, 1.0);
        assert!(report.holds);
        assert_eq!(report.implied_c_d, 20.0);
    }

    #[test]
    fn prop1_diverges_as_tau_approaches_one() {
        let density = |_r: f64| 1.0;
        let near = check_prop1(RatioEvidence::Density(&density), 1.0, 0.5, 0.999, 0.5, 1.0).unwrap();
        let nearer = check_prop1(RatioEvidence::Density(&density), 1.0, 0.5, 0.9999, 0.5, 1.0).unwrap();
        assert!(nearer.c1 > near.c1);
        assert!(check_prop1(RatioEvidence::Density(&density), 1.0, 0.5, 1.0, 0.5, 1.0).is_err());
    }

    #[test]
    fn prop1_sample_route_bounded_ratio() {
        // Ratio samples from r = (3 - s)/(1 + s) with s = x1 + x2 triangular:
        // the density near r = 1 is bounded by about 1.
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let samples: Vec<f64> = (0..200_000)
            .map(|_| {
                let x = inst.sample_x(&mut rng);
                let eta = inst.eval_eta(&x).unwrap();
                (1.0 - eta) / eta
            })
            .collect();
        let report = check_prop1(RatioEvidence::Samples(&samples), 1.0, 0.5, 0.0, 0.5, 1.2).unwrap();
        assert!(report.holds, "sup density estimate {}", report.sup_weighted_density);
        assert!(report.sup_weighted_density > 0.5);
    }
}
