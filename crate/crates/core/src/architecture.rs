//! Closed-form quantities for the sparse-network classification theory:
//! effective smoothness and rate exponents of a modular smoothness
//! specification, minimax rate curves, architecture sizing, covering-number
//! and approximation-error budgets, plus two small constructive builders
//! (the decision head and a univariate piecewise-linear ReLU approximator).
//!
//! Logarithms are natural throughout, and proportionality constants in the
//! sizing rules are fixed to 1 with ceiling rounding; the interesting
//! constants (`D1`, `D2`) are caller-supplied or fitted from data.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::network::{NetworkArch, SparseNetwork};

/// Modular smoothness specification: composition depth `q`, stage output
/// dimensions `d_1..d_q`, intrinsic dimensions `t_0..t_q`, Hölder exponents
/// `beta_0..beta_q`, stage ranges, and Hölder radii `K_0..K_q`.
///
/// Stage `u` maps `[lo[u], hi[u]]^{d_u}` into `[lo[u+1], hi[u+1]]^{d_{u+1}}`
/// with each component depending on `t_u` coordinates; `d_0` is the ambient
/// dimension and `d_{q+1} = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessSpec {
    pub ambient_dim: usize,
    /// `d_1..d_q` (length `q`).
    pub stage_dims: Vec<usize>,
    /// `t_0..t_q` (length `q+1`).
    pub intrinsic: Vec<usize>,
    /// `beta_0..beta_q` (length `q+1`).
    pub betas: Vec<f64>,
    /// Range lower ends `a_0..a_{q+1}` (length `q+2`).
    pub lo: Vec<f64>,
    /// Range upper ends `b_0..b_{q+1}` (length `q+2`).
    pub hi: Vec<f64>,
    /// Hölder radii `K_0..K_q` (length `q+1`).
    pub radii: Vec<f64>,
}

impl SmoothnessSpec {
    /// Single-stage spec on `[0,1]^d`: one Hölder function of `t` of the `d`
    /// coordinates.
    pub fn single_stage(d: usize, t: usize, beta: f64, radius: f64) -> Result<Self> {
        let spec = SmoothnessSpec {
            ambient_dim: d,
            stage_dims: vec![],
            intrinsic: vec![t],
            betas: vec![beta],
            lo: vec![0.0, 0.0],
            hi: vec![1.0, 1.0],
            radii: vec![radius],
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Composition depth minus one.
    pub fn q(&self) -> usize {
        self.betas.len() - 1
    }

    /// Dimension `d_u` for `u = 0..=q+1`.
    pub fn dim(&self, u: usize) -> usize {
        if u == 0 {
            self.ambient_dim
        } else if u <= self.q() {
            self.stage_dims[u - 1]
        } else {
            1
        }
    }

    pub fn validate(&self) -> Result<()> {
        let q = self.q();
        if self.betas.is_empty() {
            return Err(invalid("at least one stage is required"));
        }
        if self.stage_dims.len() != q {
            return Err(invalid(format!("stage_dims must have length q = {q}")));
        }
        if self.intrinsic.len() != q + 1 || self.radii.len() != q + 1 {
            return Err(invalid("intrinsic and radii must have length q+1"));
        }
        if self.lo.len() != q + 2 || self.hi.len() != q + 2 {
            return Err(invalid("lo and hi must have length q+2"));
        }
        if self.ambient_dim == 0 || self.stage_dims.iter().any(|&d| d == 0) {
            return Err(invalid("all dimensions must be positive"));
        }
        for u in 0..=q {
            if self.intrinsic[u] == 0 || self.intrinsic[u] > self.dim(u) {
                return Err(invalid(format!(
                    "intrinsic dimension t_{u} must lie in 1..=d_{u} = {}",
                    self.dim(u)
                )));
            }
            if !(self.betas[u] > 0.0) || !(self.radii[u] > 0.0) {
                return Err(invalid("Hölder exponents and radii must be positive"));
            }
        }
        for u in 0..=q + 1 {
            if !(self.lo[u] < self.hi[u]) {
                return Err(invalid(format!("stage range {u} must satisfy a < b")));
            }
        }
        Ok(())
    }
}

/// Noise (margin) condition parameters: `P(|eta - 1/2| <= t) <= C_d t^alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseProfile {
    pub alpha: f64,
    pub c_d: f64,
}

impl NoiseProfile {
    pub fn new(alpha: f64, c_d: f64) -> Result<Self> {
        if !(alpha >= 0.0) {
            return Err(invalid("noise exponent alpha must be nonnegative"));
        }
        if !(c_d > 0.0) {
            return Err(invalid("noise constant C_d must be positive"));
        }
        Ok(NoiseProfile { alpha, c_d })
    }
}

/// Rate exponents derived from a smoothness spec and a noise exponent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateExponents {
    pub s0: f64,
    pub s1: f64,
    /// Stage achieving the minimum in `s0` (smallest index on ties).
    pub u_star: usize,
    /// Effective smoothness per stage.
    pub beta_eff: Vec<f64>,
}

/// Effective smoothness `beta*_u = beta_u * prod_{k>u} min(beta_k, 1)`.
pub fn effective_smoothness(spec: &SmoothnessSpec) -> Vec<f64> {
    let q = spec.q();
    let mut out = vec![0.0; q + 1];
    let mut tail = 1.0;
    for u in (0..=q).rev() {
        out[u] = spec.betas[u] * tail;
        tail *= spec.betas[u].min(1.0);
    }
    out
}

/// Rate exponents
/// `s0 = min_u beta*_u (alpha+1) / (beta*_u (alpha+2) + t_u)` and
/// `s1 = max_u t_u / (beta*_u (alpha+2) + t_u)`.
pub fn rate_exponents(spec: &SmoothnessSpec, alpha: f64) -> Result<RateExponents> {
    spec.validate()?;
    if !(alpha >= 0.0) {
        return Err(invalid("alpha must be nonnegative"));
    }
    let beta_eff = effective_smoothness(spec);
    let mut s0 = f64::INFINITY;
    let mut s1 = f64::NEG_INFINITY;
    let mut u_star = 0;
    for u in 0..beta_eff.len() {
        let t = spec.intrinsic[u] as f64;
        let denom = beta_eff[u] * (alpha + 2.0) + t;
        let term0 = beta_eff[u] * (alpha + 1.0) / denom;
        let term1 = t / denom;
        if term0 < s0 {
            s0 = term0;
            u_star = u;
        }
        s1 = s1.max(term1);
    }
    Ok(RateExponents { s0, s1, u_star, beta_eff })
}

/// An architecture sized for `n` samples in ambient dimension `d`, plus the
/// feasibility flag `C_d^{1/s0} ln d <= n / ln^2 n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SizedArchitecture {
    pub arch: NetworkArch,
    pub feasible: bool,
    /// The sample-complexity ratio `n / (ln^2 n (ln n + ln d))`.
    pub lambda: f64,
}

/// Sizes a network for sample count `n` and dimension `d`:
/// depth `ceil(ln n)`, hidden width `max(d, ceil(Lambda^{s1}))`,
/// per-layer sparsity `ceil(Lambda^{s1} ln n)`, and bound
/// `Lambda^{s0/(alpha+1)}`, where `Lambda = n / (ln^2 n (ln n + ln d))`.
pub fn size_architecture(
    n: usize,
    d: usize,
    exps: &RateExponents,
    noise: &NoiseProfile,
) -> Result<SizedArchitecture> {
    if n < 2 {
        return Err(invalid("architecture sizing requires n >= 2"));
    }
    if d < 1 {
        return Err(invalid("architecture sizing requires d >= 1"));
    }
    let ln_n = (n as f64).ln();
    let ln_d = (d as f64).ln();
    let lambda = n as f64 / (ln_n * ln_n * (ln_n + ln_d));
    let depth = ln_n.ceil() as usize;
    let width = d.max(lambda.powf(exps.s1).ceil() as usize).max(1);
    let sparsity = (lambda.powf(exps.s1) * ln_n).ceil().max(1.0) as usize;
    let bound = lambda.powf(exps.s0 / (noise.alpha + 1.0));
    let arch = NetworkArch::uniform(depth, d, width, sparsity, bound)?;
    let feasible = noise.c_d.powf(1.0 / exps.s0) * ln_d <= n as f64 / (ln_n * ln_n);
    Ok(SizedArchitecture { arch, feasible, lambda })
}

/// Minimax lower-bound curve `min(D1 C_d (ln d / n)^{s0}, 1)`.
pub fn lower_bound_rate(n: usize, log_d: f64, c_d: f64, s0: f64, d1: f64) -> f64 {
    (d1 * c_d * (log_d / n as f64).powf(s0)).min(1.0)
}

/// Excess-risk upper-bound curve `D2 C_d ((ln^3 n + ln^2 n ln d) / n)^{s0}`.
pub fn upper_bound_rate(n: usize, log_d: f64, c_d: f64, s0: f64, d2: f64) -> f64 {
    let ln_n = (n as f64).ln();
    d2 * c_d * ((ln_n.powi(3) + ln_n.powi(2) * log_d) / n as f64).powf(s0)
}

/// Metric-entropy bound for the sparse network class:
/// `2L(s+1) ln(v^{-1} (L+1) (max(p_max, d) + 1) max(B, 1))`.
pub fn covering_bound(
    depth: usize,
    p_max: usize,
    d: usize,
    sparsity: usize,
    bound: f64,
    upsilon: f64,
) -> Result<f64> {
    if !(upsilon > 0.0) {
        return Err(invalid("covering radius must be positive"));
    }
    let inner = (1.0 / upsilon)
        * (depth as f64 + 1.0)
        * (p_max.max(d) as f64 + 1.0)
        * bound.max(1.0);
    Ok(2.0 * depth as f64 * (sparsity as f64 + 1.0) * inner.ln())
}

/// Sup-norm error budget for approximating one `(beta, K)`-Hölder function of
/// `r` variables with width parameter `N` and depth parameter `m`:
/// `(2K+1)(1+r^2+beta^2) 6^r N 2^{-m} + K 3^beta N^{-beta/r}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxErrorBound {
    pub value: f64,
    /// Whether `N >= max((beta+1)^r, (K+1)e^r)` and `m >= 1` hold; the value
    /// is computed either way.
    pub preconditions_ok: bool,
}

pub fn approx_error_bound(beta: f64, r: usize, k: f64, n_units: f64, m: u32) -> ApproxErrorBound {
    let rf = r as f64;
    let first = (2.0 * k + 1.0) * (1.0 + rf * rf + beta * beta)
        * 6.0f64.powi(r as i32)
        * n_units
        * 0.5f64.powi(m as i32);
    let second = k * 3.0f64.powf(beta) * n_units.powf(-beta / rf);
    let n_min = (beta + 1.0).powi(r as i32).max((k + 1.0) * std::f64::consts::E.powi(r as i32));
    ApproxErrorBound { value: first + second, preconditions_ok: n_units >= n_min && m >= 1 }
}

/// Size of the approximating network behind [`approx_error_bound`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApproxNetworkSize {
    pub depth: usize,
    pub width: f64,
    pub sparsity: f64,
}

pub fn approx_network_size(beta: f64, r: usize, n_units: f64, m: u32) -> ApproxNetworkSize {
    let rf = r as f64;
    let depth = 8 + (m as usize + 5) * (1 + rf.max(beta).log2().ceil().max(0.0) as usize);
    let width = 6.0 * (rf + beta.ceil()) * n_units;
    let sparsity = 141.0 * (rf + beta + 1.0).powf(3.0 + rf) * n_units * (m as f64 + 6.0);
    ApproxNetworkSize { depth, width, sparsity }
}

/// Sup-norm error of a composition from per-stage sup errors:
/// `K_q prod_{l<q} (2K_l)^{beta_{l+1}} * sum_u e_u^{prod_{l>u} min(beta_l, 1)}`.
pub fn composition_error_bound(spec: &SmoothnessSpec, stage_errors: &[f64]) -> Result<f64> {
    spec.validate()?;
    let q = spec.q();
    if stage_errors.len() != q + 1 {
        return Err(invalid(format!("expected {} stage errors, got {}", q + 1, stage_errors.len())));
    }
    if stage_errors.iter().any(|&e| e < 0.0) {
        return Err(invalid("stage errors must be nonnegative"));
    }
    let mut prefactor = spec.radii[q];
    for l in 0..q {
        prefactor *= (2.0 * spec.radii[l]).powf(spec.betas[l + 1]);
    }
    let mut sum = 0.0;
    for u in 0..=q {
        let expo: f64 = spec.betas[u + 1..].iter().map(|&b| b.min(1.0)).product();
        sum += stage_errors[u].powf(expo);
    }
    Ok(prefactor * sum)
}

/// Combined approximation budget for a modular regression function, with the
/// network size realizing it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionBudget {
    pub epsilon: f64,
    pub depth: usize,
    pub width: f64,
    pub sparsity: f64,
    /// Weight bound, defined as `1/epsilon`.
    pub bound: f64,
}

/// Approximation budget
/// `eps = sum_u A_u C(t_u) (N 2^{-m})^{beta**_u} + sum_u B_u N^{-beta*_u/t_u}`
/// with `A_u = pref (2Q_u + 1)`, `B_u = pref (Q_u 3^{beta_u})^{beta**_u}`,
/// `C(t) = 2 t^2 6^{t beta**_u}`, `pref = K_q prod_{l<q} (2K_l)^{beta_{l+1}}`,
/// and `beta**_u = prod_{l>u} min(beta_l, 1)`, plus the realizing network
/// size. The absolute constants `Q_u` default to 1.
pub fn regression_approx_budget(
    spec: &SmoothnessSpec,
    n_units: f64,
    m: u32,
    q_consts: Option<&[f64]>,
) -> Result<RegressionBudget> {
    spec.validate()?;
    let q = spec.q();
    let qc: Vec<f64> = match q_consts {
        Some(v) => {
            if v.len() != q + 1 {
                return Err(invalid(format!("expected {} Q constants, got {}", q + 1, v.len())));
            }
            v.to_vec()
        }
        None => vec![1.0; q + 1],
    };
    let mut prefactor = spec.radii[q];
    for l in 0..q {
        prefactor *= (2.0 * spec.radii[l]).powf(spec.betas[l + 1]);
    }
    let beta_eff = effective_smoothness(spec);
    let mut epsilon = 0.0;
    for u in 0..=q {
        let bss: f64 = spec.betas[u + 1..].iter().map(|&b| b.min(1.0)).product();
        let t = spec.intrinsic[u] as f64;
        let a_u = prefactor * (2.0 * qc[u] + 1.0);
        let b_u = prefactor * (qc[u] * 3.0f64.powf(spec.betas[u])).powf(bss);
        let c_t = 2.0 * t * t * 6.0f64.powf(t * bss);
        epsilon += a_u * c_t * (n_units * 0.5f64.powi(m as i32)).powf(bss);
        epsilon += b_u * n_units.powf(-beta_eff[u] / t);
    }
    let mut depth_sum = 0usize;
    for u in 0..=q {
        let tb = (spec.intrinsic[u] as f64).max(spec.betas[u]);
        depth_sum += 8 + (m as usize + 5) * (1 + tb.log2().ceil().max(0.0) as usize);
    }
    let depth = (3 * q).saturating_sub(1) + depth_sum;
    let r = (0..=q)
        .map(|u| spec.dim(u + 1) as f64 * (spec.intrinsic[u] as f64 + spec.betas[u].ceil()))
        .fold(0.0f64, f64::max);
    let width = 12.0 * r * n_units;
    let mut sparsity = 0.0;
    for u in 0..=q {
        let t = spec.intrinsic[u] as f64;
        sparsity += spec.dim(u + 1) as f64
            * (141.0 * (t + spec.betas[u] + 1.0).powf(3.0 + t) * n_units * (m as f64 + 6.0) + 4.0);
    }
    let sparsity = 2.0 * sparsity + 7.0;
    Ok(RegressionBudget { epsilon, depth, width, sparsity, bound: 1.0 / epsilon })
}

/// Depth parameter `m` at which the two budget terms balance:
/// `max_u ((beta**_u)^{-1} log2(A_u C(t_u) / B_u) + (1 + beta_u/t_u) log2 N)`.
pub fn entropy_matched_depth(spec: &SmoothnessSpec, n_units: f64, q_consts: Option<&[f64]>) -> Result<f64> {
    spec.validate()?;
    let q = spec.q();
    let qc: Vec<f64> = match q_consts {
        Some(v) => v.to_vec(),
        None => vec![1.0; q + 1],
    };
    let mut prefactor = spec.radii[q];
    for l in 0..q {
        prefactor *= (2.0 * spec.radii[l]).powf(spec.betas[l + 1]);
    }
    let mut best = f64::NEG_INFINITY;
    for u in 0..=q {
        let bss: f64 = spec.betas[u + 1..].iter().map(|&b| b.min(1.0)).product();
        let t = spec.intrinsic[u] as f64;
        let a_u = prefactor * (2.0 * qc[u] + 1.0);
        let b_u = prefactor * (qc[u] * 3.0f64.powf(spec.betas[u])).powf(bss);
        let c_t = 2.0 * t * t * 6.0f64.powf(t * bss);
        let v = (a_u * c_t / b_u).log2() / bss + (1.0 + spec.betas[u] / t) * n_units.log2();
        best = best.max(v);
    }
    Ok(best)
}

/// Entropy scaling of the sized class at approximation level `eps`:
/// `C2 ln^2(1/eps) eps^{-max_u t_u/beta*_u} (ln(1/v) + ln d + ln(1/eps))`,
/// exposed in base e.
pub fn entropy_scaling(eps: f64, upsilon: f64, log_d: f64, max_t_over_beta: f64, c2: f64) -> Result<f64> {
    if !(eps > 0.0) || !(upsilon > 0.0) {
        return Err(invalid("entropy scaling requires positive eps and upsilon"));
    }
    let li = (1.0 / eps).ln();
    Ok(c2 * li * li * eps.powf(-max_t_over_beta) * ((1.0 / upsilon).ln() + log_d + li))
}

/// Two-ReLU-layer decision head mapping an estimated conditional probability
/// to a soft sign: `2(relu(u) - relu(u - 1)) - 1` with `u = (eta - 1/2)/eps`.
///
/// Output is exactly `+1` for `eta >= 1/2 + eps`, exactly `-1` for
/// `eta <= 1/2`, and linear in between; realized with weight magnitudes at
/// most `1/eps` (for `eps <= 1/2`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DecisionHead {
    pub epsilon: f64,
}

pub fn build_decision_head(epsilon: f64) -> Result<DecisionHead> {
    if !(epsilon > 0.0) {
        return Err(invalid("decision head requires epsilon > 0"));
    }
    Ok(DecisionHead { epsilon })
}

impl DecisionHead {
    pub fn eval(&self, eta_tilde: f64) -> f64 {
        let u = (eta_tilde - 0.5) / self.epsilon;
        2.0 * (u.max(0.0) - (u - 1.0).max(0.0)) - 1.0
    }

    /// Largest weight magnitude in the two-layer realization: the input
    /// scale `1/eps` and shifts `1/(2 eps)` and `1/(2 eps) + 1` dominate the
    /// output weights `+-2` whenever `eps <= 1/2`.
    pub fn max_weight_magnitude(&self) -> f64 {
        (1.0 / self.epsilon).max(2.0)
    }
}

/// Builds a one-hidden-layer ReLU network interpolating `f` piecewise
/// linearly at the knots `k/N`, `k = 0..=N`.
///
/// For `f` in a `(beta, K)`-Hölder ball with `beta <= 1` the sup error on
/// `[0,1]` is at most `K N^{-beta}`.
pub fn pwl_approximator(
    f: impl Fn(f64) -> f64,
    beta: f64,
    _k: f64,
    n_knots: usize,
) -> Result<SparseNetwork> {
    if !(beta > 0.0 && beta <= 1.0) {
        return Err(invalid("piecewise-linear approximator requires beta in (0, 1]"));
    }
    if n_knots == 0 {
        return Err(invalid("at least one knot interval is required"));
    }
    let n = n_knots;
    let values: Vec<f64> = (0..=n).map(|k| f(k as f64 / n as f64)).collect();
    let slopes: Vec<f64> = (0..n)
        .map(|k| (values[k + 1] - values[k]) * n as f64)
        .collect();
    // Units: shift -1 carries the constant f(0) (since relu(x+1) - relu(x) = 1
    // on [0,1]); shift k/N carries the slope increment at knot k.
    let mut shifts = vec![-1.0];
    let mut coefs = vec![values[0]];
    shifts.push(0.0);
    coefs.push(slopes[0] - values[0]);
    for k in 1..n {
        shifts.push(k as f64 / n as f64);
        coefs.push(slopes[k] - slopes[k - 1]);
    }
    let units = shifts.len();
    let max_entry = coefs
        .iter()
        .map(|c| c.abs())
        .fold(1.0f64, f64::max);
    let max_value = values.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    let bound = max_entry.max(max_value).max(1.0);
    let nonzero_shifts = shifts.iter().filter(|&&v| v != 0.0).count();
    let nonzero_coefs = coefs.iter().filter(|&&v| v != 0.0).count();
    let sparsity = units.max(nonzero_shifts).max(nonzero_coefs).max(1);
    let arch = NetworkArch::new(1, vec![1, units, 1], sparsity, bound)?;
    SparseNetwork::new(arch, vec![vec![vec![1.0]; units], vec![coefs]], vec![shifts])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn plain_spec(betas: Vec<f64>, intrinsic: Vec<usize>) -> SmoothnessSpec {
        let q = betas.len() - 1;
        SmoothnessSpec {
            ambient_dim: *intrinsic.iter().max().unwrap(),
            stage_dims: vec![*intrinsic.iter().max().unwrap(); q],
            intrinsic,
            betas,
            lo: vec![0.0; q + 2],
            hi: vec![1.0; q + 2],
            radii: vec![1.0; q + 1],
        }
    }

    #[test]
    fn effective_smoothness_examples() {
        let single = plain_spec(vec![1.7], vec![1]);
        assert_eq!(effective_smoothness(&single), vec![1.7]);

        let spec = plain_spec(vec![2.0, 0.5, 3.0], vec![1, 1, 1]);
        let eff = effective_smoothness(&spec);
        assert!((eff[0] - 1.0).abs() < 1e-15);
        assert!((eff[1] - 0.5).abs() < 1e-15);
        assert!((eff[2] - 3.0).abs() < 1e-15);

        let all_big = plain_spec(vec![1.5, 2.0, 1.0], vec![1, 1, 1]);
        assert_eq!(effective_smoothness(&all_big), vec![1.5, 2.0, 1.0]);
    }

    #[test]
    fn rate_exponent_examples() {
        let spec = plain_spec(vec![1.0, 1.0], vec![1, 1]);
        let e = rate_exponents(&spec, 0.0).unwrap();
        assert_eq!(e.s0, 1.0 / 3.0);
        assert_eq!(e.s1, 1.0 / 3.0);

        let spec = plain_spec(vec![2.0], vec![1]);
        let e = rate_exponents(&spec, 1.0).unwrap();
        assert_eq!(e.s0, 4.0 / 7.0);
        assert_eq!(e.s1, 1.0 / 7.0);
    }

    #[test]
    fn uniform_case_closed_form() {
        // With a single stage, s0 = beta(alpha+1) / (beta(alpha+2) + t).
        let beta = 1.7;
        let t = 3usize;
        let alpha = 0.5;
        let mut spec = plain_spec(vec![beta], vec![t]);
        spec.ambient_dim = 5;
        let e = rate_exponents(&spec, alpha).unwrap();
        let expected = beta * (alpha + 1.0) / (beta * (alpha + 2.0) + t as f64);
        assert!((e.s0 - expected).abs() < 1e-15);
    }

    #[test]
    fn s0_stays_below_noise_ceiling() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for _ in 0..50 {
            let q = rng.gen_range(0..=2);
            let betas: Vec<f64> = (0..=q).map(|_| rng.gen_range(0.3..4.0)).collect();
            let ts: Vec<usize> = (0..=q).map(|_| rng.gen_range(1..=3)).collect();
            let spec = plain_spec(betas, ts);
            let alpha = rng.gen_range(0.0..3.0);
            let e = rate_exponents(&spec, alpha).unwrap();
            assert!(e.s0 < (alpha + 1.0) / (alpha + 2.0));
            assert!(e.s0 > 0.0 && e.s0 < 1.0);
            assert!(e.s1 > 0.0 && e.s1 < 1.0);
        }
    }

    #[test]
    fn argmin_survives_appending_slack_stage() {
        // Appending a final stage with beta >= 1 and a larger s0-term leaves
        // both the minimizing value and s1 unchanged.
        let spec = plain_spec(vec![1.0, 1.0], vec![1, 1]);
        let base = rate_exponents(&spec, 0.0).unwrap();
        let extended = plain_spec(vec![1.0, 1.0, 5.0], vec![1, 1, 1]);
        let ext = rate_exponents(&extended, 0.0).unwrap();
        assert_eq!(base.s0, ext.s0);
        assert_eq!(base.u_star, ext.u_star);
    }

    #[test]
    fn size_architecture_reference_point() {
        let exps = RateExponents { s0: 1.0 / 3.0, s1: 1.0 / 3.0, u_star: 0, beta_eff: vec![1.0] };
        let noise = NoiseProfile::new(0.0, 1.0).unwrap();
        let sized = size_architecture(4096, 16, &exps, &noise).unwrap();
        assert_eq!(sized.arch.depth, 9);
        assert_eq!(sized.arch.widths[1], 16);
        assert_eq!(sized.arch.sparsity, 15);
        assert!((sized.arch.bound - 1.75).abs() < 0.01);
        assert!(sized.feasible);
    }

    #[test]
    fn width_switches_to_lambda_branch_for_small_d() {
        let exps = RateExponents { s0: 0.5, s1: 0.5, u_star: 0, beta_eff: vec![1.0] };
        let noise = NoiseProfile::new(0.0, 1.0).unwrap();
        let sized = size_architecture(1_000_000, 1, &exps, &noise).unwrap();
        assert!(sized.arch.widths[1] > 1);
    }

    #[test]
    fn feasibility_flag_detects_large_dimension() {
        let exps = RateExponents { s0: 1.0 / 3.0, s1: 1.0 / 3.0, u_star: 0, beta_eff: vec![1.0] };
        let noise = NoiseProfile::new(0.0, 1.0).unwrap();
        let sized = size_architecture(10, 8, &exps, &noise).unwrap();
        assert!(!sized.feasible);
        assert!(size_architecture(1, 8, &exps, &noise).is_err());
    }

    #[test]
    fn rate_curve_examples() {
        let v = lower_bound_rate(1000, 10.0, 1.0, 1.0 / 3.0, 1.0);
        assert!((v - 0.01f64.powf(1.0 / 3.0)).abs() < 1e-12);
        assert_eq!(lower_bound_rate(10, 5.0, 100.0, 0.5, 10.0), 1.0);

        let u = upper_bound_rate(1000, 10.0, 1.0, 1.0 / 3.0, 1.0);
        assert!((u - 0.9309).abs() < 1e-3);
        // ln d = 0 drops the mixed term
        let ln_n = 1000f64.ln();
        let pure = (ln_n.powi(3) / 1000.0).powf(1.0 / 3.0);
        assert!((upper_bound_rate(1000, 0.0, 1.0, 1.0 / 3.0, 1.0) - pure).abs() < 1e-12);
    }

    #[test]
    fn rate_curves_are_monotone_and_ordered() {
        let mut prev = f64::INFINITY;
        for &n in &[10usize, 100, 1000, 10_000, 100_000] {
            let v = lower_bound_rate(n, 2.0, 0.5, 0.4, 0.5);
            assert!(v <= prev);
            prev = v;
        }
        for &n in &[3usize, 10, 100, 10_000] {
            for &d in &[3usize, 10, 1000] {
                let log_d = (d as f64).ln();
                let lo = lower_bound_rate(n, log_d, 1.0, 0.4, 1.0);
                let hi = upper_bound_rate(n, log_d, 1.0, 0.4, 1.0);
                assert!(hi >= lo, "upper {hi} < lower {lo} at n={n}, d={d}");
            }
        }
    }

    #[test]
    fn covering_bound_example_and_monotonicity() {
        let v = covering_bound(2, 4, 4, 3, 1.0, 0.5).unwrap();
        assert!((v - 16.0 * 30f64.ln()).abs() < 1e-12);
        // B <= 1 leaves the bound unchanged
        assert_eq!(covering_bound(2, 4, 4, 3, 0.2, 0.5).unwrap(), v);
        assert!(covering_bound(3, 4, 4, 3, 1.0, 0.5).unwrap() > v);
        assert!(covering_bound(2, 4, 4, 5, 1.0, 0.5).unwrap() > v);
        assert!(covering_bound(2, 4, 4, 3, 1.0, 0.25).unwrap() > v);
        assert!(covering_bound(2, 4, 4, 3, 1.0, 0.0).is_err());
    }

    #[test]
    fn approx_error_reference_values() {
        let b = approx_error_bound(1.0, 1, 1.0, 8.0, 10);
        assert_eq!(b.value, 0.796875);
        assert!(b.preconditions_ok);

        // As m grows the first term vanishes.
        let tail = approx_error_bound(1.0, 1, 1.0, 8.0, 500);
        assert!((tail.value - 3.0 / 8.0).abs() < 1e-12);

        let size = approx_network_size(1.0, 1, 8.0, 6);
        assert_eq!(size.depth, 19);
        assert_eq!(size.width, 6.0 * 2.0 * 8.0);

        let small_n = approx_error_bound(1.0, 1, 1.0, 2.0, 10);
        assert!(!small_n.preconditions_ok);
    }

    #[test]
    fn composition_bound_examples() {
        let spec = plain_spec(vec![1.0, 1.0], vec![1, 1]);
        assert_eq!(composition_error_bound(&spec, &[0.0, 0.0]).unwrap(), 0.0);
        let v = composition_error_bound(&spec, &[0.1, 0.2]).unwrap();
        assert!((v - 0.6).abs() < 1e-15);
        assert!(composition_error_bound(&spec, &[0.1]).is_err());
    }

    #[test]
    fn regression_budget_reference_point() {
        let spec = plain_spec(vec![1.0], vec![1]);
        let budget = regression_approx_budget(&spec, 8.0, 10, None).unwrap();
        assert_eq!(budget.epsilon, 0.65625);
        assert_eq!(budget.bound, 1.0 / budget.epsilon);
        // epsilon strictly decreasing in m at fixed N
        let deeper = regression_approx_budget(&spec, 8.0, 12, None).unwrap();
        assert!(deeper.epsilon < budget.epsilon);
    }

    #[test]
    fn decision_head_regimes() {
        let head = build_decision_head(0.1).unwrap();
        assert_eq!(head.eval(0.7), 1.0);
        assert_eq!(head.eval(0.5), -1.0);
        // linear branch: the formula value 2u - 1 computed the same way
        assert_eq!(head.eval(0.55), 2.0 * ((0.55 - 0.5) / 0.1) - 1.0);
        assert!(head.eval(0.55).abs() < 1e-15);
        assert!(build_decision_head(0.0).is_err());
        // output in [-1, 1] everywhere
        for i in 0..=1000 {
            let eta = -1.0 + 3.0 * i as f64 / 1000.0;
            let v = head.eval(eta);
            assert!((-1.0..=1.0).contains(&v));
        }
    }

    #[test]
    fn pwl_reproduces_linear_functions_exactly() {
        let net = pwl_approximator(|x| x, 1.0, 1.0, 1).unwrap();
        for i in 0..=100 {
            let x = i as f64 / 100.0;
            assert!((net.forward(&[x]).unwrap() - x).abs() < 1e-15);
        }
    }

    #[test]
    fn pwl_meets_quadratic_error_target() {
        let net = pwl_approximator(|x| x * x, 1.0, 2.0, 10).unwrap();
        let mut worst: f64 = 0.0;
        for i in 0..=10_000 {
            let x = i as f64 / 10_000.0;
            worst = worst.max((net.forward(&[x]).unwrap() - x * x).abs());
        }
        // true sup error of the exact interpolant is h^2 f''/8 = 0.0025
        assert!(worst <= 0.0025 + 1e-12, "pwl error {worst}");
        assert!(worst <= 2.0 * 10f64.powf(-1.0)); // Hölder guarantee
    }

    #[test]
    fn pwl_error_nonincreasing_on_convex_samples() {
        // Convex piecewise-linear targets: chord error shrinks under nested
        // dyadic refinement.
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..5 {
            let breaks: Vec<f64> = (0..4).map(|_| rng.gen_range(0.1..0.9)).collect();
            let amps: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..0.25)).collect();
            let f = move |x: f64| -> f64 {
                breaks.iter().zip(&amps).map(|(&b, &a)| a * (x - b).max(0.0)).sum()
            };
            let mut prev = f64::INFINITY;
            for &n in &[4usize, 8, 16, 32] {
                let net = pwl_approximator(&f, 1.0, 1.0, n).unwrap();
                let mut worst: f64 = 0.0;
                for i in 0..=2000 {
                    let x = i as f64 / 2000.0;
                    worst = worst.max((net.forward(&[x]).unwrap() - f(x)).abs());
                }
                assert!(worst <= prev + 1e-12, "error grew from {prev} to {worst} at N={n}");
                prev = worst;
            }
        }
    }

    #[test]
    fn entropy_helpers_are_finite() {
        let spec = plain_spec(vec![1.0, 1.0], vec![1, 2]);
        let m = entropy_matched_depth(&spec, 64.0, None).unwrap();
        assert!(m.is_finite() && m > 0.0);
        let h = entropy_scaling(0.1, 0.01, 3.0, 2.0, 1.0).unwrap();
        assert!(h.is_finite() && h > 0.0);
    }
}
