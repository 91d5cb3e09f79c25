//! Sparse feedforward ReLU networks: evaluation, hinge-loss risk, exact
//! subgradients, and projection onto the sparsity/bound-constrained class.
//!
//! A network computes `W_L σ_{V_L} ... W_1 σ_{V_1} W_0 x` where
//! `σ_V(y) = (max(y_i - v_i, 0))_i`, followed by a clamp of the scalar output
//! to `[-B, B]`. The class constrains, per layer, the number of nonzero
//! entries (at most `s`) and every entry magnitude (at most `B`).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, CoreError, Result};

/// A dense row-major matrix stored as nested vectors; serializes as nested
/// JSON arrays.
pub type Matrix = Vec<Vec<f64>>;

/// Architecture metadata for the sparse class: depth, widths, per-layer
/// nonzero budget `s`, and entry/sup-norm bound `B`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkArch {
    /// Number of hidden layers.
    #[serde(rename = "L")]
    pub depth: usize,
    /// Layer widths `p_0..p_{L+1}`; `p_0` is the input dimension, `p_{L+1} = 1`.
    pub widths: Vec<usize>,
    /// Maximum nonzero entries per weight matrix and per shift vector.
    #[serde(rename = "s")]
    pub sparsity: usize,
    /// Bound on entry magnitudes and on the network sup-norm.
    #[serde(rename = "B")]
    pub bound: f64,
}

impl NetworkArch {
    pub fn new(depth: usize, widths: Vec<usize>, sparsity: usize, bound: f64) -> Result<Self> {
        let arch = NetworkArch { depth, widths, sparsity, bound };
        arch.validate()?;
        Ok(arch)
    }

    /// Uniform hidden width `w` for input dimension `d`.
    pub fn uniform(depth: usize, d: usize, hidden: usize, sparsity: usize, bound: f64) -> Result<Self> {
        let mut widths = vec![hidden; depth + 2];
        widths[0] = d;
        widths[depth + 1] = 1;
        Self::new(depth, widths, sparsity, bound)
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn validate(&self) -> Result<()> {
        if self.depth == 0 {
            return Err(invalid("network depth must be at least 1"));
        }
        if self.widths.len() != self.depth + 2 {
            return Err(invalid(format!(
                "widths must have length L+2 = {}, got {}",
                self.depth + 2,
                self.widths.len()
            )));
        }
        if self.widths.iter().any(|&w| w == 0) {
            return Err(invalid("all widths must be positive"));
        }
        if *self.widths.last().unwrap() != 1 {
            return Err(invalid("output width must be 1"));
        }
        if self.sparsity == 0 {
            return Err(invalid("sparsity budget s must be at least 1"));
        }
        if !(self.bound > 0.0) || !self.bound.is_finite() {
            return Err(invalid("bound B must be a positive finite real"));
        }
        Ok(())
    }
}

/// A concrete network: weights `W_0..W_L` and shifts `V_1..V_L`.
///
/// Immutable for evaluation; training updates and projection mutate through
/// `&mut self` under a single writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SparseNetwork {
    pub arch: NetworkArch,
    /// `weights[l]` is `W_l` of shape `p_{l+1} x p_l`.
    pub weights: Vec<Matrix>,
    /// `shifts[l]` is `V_{l+1}` of length `p_{l+1}`.
    pub shifts: Vec<Vec<f64>>,
}

/// Subgradient record with the same shapes as the network parameters.
#[derive(Debug, Clone)]
pub struct Gradients {
    pub weights: Vec<Matrix>,
    pub shifts: Vec<Vec<f64>>,
}

impl Gradients {
    pub fn zeros_like(net: &SparseNetwork) -> Self {
        Gradients {
            weights: net
                .weights
                .iter()
                .map(|m| m.iter().map(|row| vec![0.0; row.len()]).collect())
                .collect(),
            shifts: net.shifts.iter().map(|v| vec![0.0; v.len()]).collect(),
        }
    }

    pub fn reset(&mut self) {
        for m in &mut self.weights {
            for row in m {
                row.iter_mut().for_each(|v| *v = 0.0);
            }
        }
        for v in &mut self.shifts {
            v.iter_mut().for_each(|x| *x = 0.0);
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for m in &mut self.weights {
            for row in m {
                row.iter_mut().for_each(|v| *v *= factor);
            }
        }
        for v in &mut self.shifts {
            v.iter_mut().for_each(|x| *x *= factor);
        }
    }

    pub fn max_abs(&self) -> f64 {
        let w = self
            .weights
            .iter()
            .flat_map(|m| m.iter().flat_map(|r| r.iter()))
            .fold(0.0f64, |a, &v| a.max(v.abs()));
        self.shifts
            .iter()
            .flat_map(|v| v.iter())
            .fold(w, |a, &v| a.max(v.abs()))
    }
}

/// Hinge loss `(1 - margin)_+`.
pub fn hinge(margin: f64) -> f64 {
    (1.0 - margin).max(0.0)
}

/// Per-update dropout state: one keep-mask per hidden layer plus the
/// `1/(1-rho)` rescale applied to kept units.
pub(crate) struct DropoutMasks {
    pub keep: Vec<Vec<bool>>,
    pub scale: f64,
}

/// Reusable forward/backward buffers.
pub(crate) struct EvalScratch {
    /// `acts[l]` is the layer-`l` activation (post-shift-ReLU, post-dropout);
    /// `acts[0]` is the input.
    acts: Vec<Vec<f64>>,
    /// `pres[l]` is the pre-activation entering hidden layer `l+1`.
    pres: Vec<Vec<f64>>,
    delta: Vec<f64>,
    delta_next: Vec<f64>,
}

impl EvalScratch {
    pub fn new(arch: &NetworkArch) -> Self {
        let l = arch.depth;
        let acts = (0..=l).map(|i| vec![0.0; arch.widths[i]]).collect();
        let pres = (0..l).map(|i| vec![0.0; arch.widths[i + 1]]).collect();
        let max_w = *arch.widths.iter().max().unwrap();
        EvalScratch { acts, pres, delta: vec![0.0; max_w], delta_next: vec![0.0; max_w] }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

impl SparseNetwork {
    /// All-zero network of the given architecture.
    pub fn zeros(arch: NetworkArch) -> Result<Self> {
        arch.validate()?;
        let weights = (0..=arch.depth)
            .map(|l| vec![vec![0.0; arch.widths[l]]; arch.widths[l + 1]])
            .collect();
        let shifts = (0..arch.depth).map(|l| vec![0.0; arch.widths[l + 1]]).collect();
        Ok(SparseNetwork { arch, weights, shifts })
    }

    pub fn new(arch: NetworkArch, weights: Vec<Matrix>, shifts: Vec<Vec<f64>>) -> Result<Self> {
        let net = SparseNetwork { arch, weights, shifts };
        net.validate()?;
        Ok(net)
    }

    pub fn input_dim(&self) -> usize {
        self.arch.input_dim()
    }

    /// Checks that the weight/shift shapes match the architecture exactly.
    pub fn validate(&self) -> Result<()> {
        self.arch.validate()?;
        let l = self.arch.depth;
        if self.weights.len() != l + 1 {
            return Err(invalid(format!("expected {} weight matrices, got {}", l + 1, self.weights.len())));
        }
        if self.shifts.len() != l {
            return Err(invalid(format!("expected {} shift vectors, got {}", l, self.shifts.len())));
        }
        for (i, m) in self.weights.iter().enumerate() {
            if m.len() != self.arch.widths[i + 1] {
                return Err(invalid(format!("weight matrix {i} has {} rows, expected {}", m.len(), self.arch.widths[i + 1])));
            }
            for row in m {
                if row.len() != self.arch.widths[i] {
                    return Err(invalid(format!("weight matrix {i} has a row of length {}, expected {}", row.len(), self.arch.widths[i])));
                }
            }
        }
        for (i, v) in self.shifts.iter().enumerate() {
            if v.len() != self.arch.widths[i + 1] {
                return Err(invalid(format!("shift vector {i} has length {}, expected {}", v.len(), self.arch.widths[i + 1])));
            }
        }
        Ok(())
    }

    /// Evaluates the network and clamps the scalar output to `[-B, B]`.
    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.input_dim() {
            return Err(CoreError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
        }
        let mut scratch = EvalScratch::new(&self.arch);
        let (_, f) = self.forward_into(x, None, &mut scratch);
        Ok(f)
    }

    /// Forward pass filling `scratch`; returns `(pre-clamp output, clamped output)`.
    pub(crate) fn forward_into(
        &self,
        x: &[f64],
        masks: Option<&DropoutMasks>,
        scratch: &mut EvalScratch,
    ) -> (f64, f64) {
        let l = self.arch.depth;
        scratch.acts[0].copy_from_slice(x);
        for layer in 0..l {
            // pre = W_layer * act_layer, then shifted ReLU, then dropout.
            for i in 0..self.arch.widths[layer + 1] {
                scratch.pres[layer][i] = dot(&self.weights[layer][i], &scratch.acts[layer]);
            }
            for i in 0..self.arch.widths[layer + 1] {
                let h = scratch.pres[layer][i] - self.shifts[layer][i];
                let mut a = if h > 0.0 { h } else { 0.0 };
                if let Some(m) = masks {
                    a = if m.keep[layer][i] { a * m.scale } else { 0.0 };
                }
                // Split borrows: pres and acts are distinct fields.
                scratch.acts[layer + 1][i] = a;
            }
        }
        let z = dot(&self.weights[l][0], &scratch.acts[l]);
        let b = self.arch.bound;
        (z, z.clamp(-b, b))
    }

    /// Mean hinge loss `(1/n) sum_i (1 - y_i f(x_i))_+`.
    pub fn empirical_hinge_risk(&self, data: &[(Vec<f64>, f64)]) -> Result<f64> {
        if data.is_empty() {
            return Err(invalid("empirical risk requires nonempty data"));
        }
        let mut scratch = EvalScratch::new(&self.arch);
        let mut total = 0.0;
        for (x, y) in data {
            if x.len() != self.input_dim() {
                return Err(CoreError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
            }
            let (_, f) = self.forward_into(x, None, &mut scratch);
            total += hinge(y * f);
        }
        Ok(total / data.len() as f64)
    }

    /// Adds the subgradient of `hinge(y * f(x))` (optionally with dropout
    /// masks) into `grads`; returns the sample's hinge loss.
    ///
    /// Kink conventions: hinge subgradient at margin exactly 1 is 0, ReLU
    /// subgradient at exactly 0 is 0, and the output clamp contributes 0
    /// outside `[-B, B]`.
    pub(crate) fn accumulate_sample_subgrad(
        &self,
        x: &[f64],
        y: f64,
        masks: Option<&DropoutMasks>,
        scratch: &mut EvalScratch,
        grads: &mut Gradients,
    ) -> f64 {
        let l = self.arch.depth;
        let (z, f) = self.forward_into(x, masks, scratch);
        let loss = hinge(y * f);
        if y * f >= 1.0 {
            return loss; // flat region of the hinge
        }
        if z.abs() > self.arch.bound {
            return loss; // clamp active: zero subgradient
        }
        let upstream = -y;
        // Output layer: dL/dW_L = upstream * a_L.
        for j in 0..self.arch.widths[l] {
            grads.weights[l][0][j] += upstream * scratch.acts[l][j];
        }
        for j in 0..self.arch.widths[l] {
            scratch.delta[j] = upstream * self.weights[l][0][j];
        }
        for layer in (0..l).rev() {
            let width = self.arch.widths[layer + 1];
            // delta currently holds dL/d act_{layer+1}; gate through the
            // shifted ReLU (and the dropout mask it passed through).
            for i in 0..width {
                let active = scratch.pres[layer][i] - self.shifts[layer][i] > 0.0;
                let mult = if !active {
                    0.0
                } else if let Some(m) = masks {
                    if m.keep[layer][i] { m.scale } else { 0.0 }
                } else {
                    1.0
                };
                scratch.delta[i] *= mult;
            }
            for i in 0..width {
                grads.shifts[layer][i] -= scratch.delta[i];
            }
            for i in 0..width {
                let di = scratch.delta[i];
                if di != 0.0 {
                    let row = &mut grads.weights[layer][i];
                    for (j, a) in scratch.acts[layer].iter().enumerate() {
                        row[j] += di * a;
                    }
                }
            }
            if layer > 0 {
                let prev_width = self.arch.widths[layer];
                for j in 0..prev_width {
                    scratch.delta_next[j] = 0.0;
                }
                for i in 0..width {
                    let di = scratch.delta[i];
                    if di != 0.0 {
                        let row = &self.weights[layer][i];
                        for j in 0..prev_width {
                            scratch.delta_next[j] += di * row[j];
                        }
                    }
                }
                std::mem::swap(&mut scratch.delta, &mut scratch.delta_next);
            }
        }
        loss
    }

    /// Exact subgradient of the empirical hinge risk.
    pub fn grad_empirical_hinge(&self, data: &[(Vec<f64>, f64)]) -> Result<Gradients> {
        if data.is_empty() {
            return Err(invalid("gradient requires nonempty data"));
        }
        let mut scratch = EvalScratch::new(&self.arch);
        let mut grads = Gradients::zeros_like(self);
        for (x, y) in data {
            if x.len() != self.input_dim() {
                return Err(CoreError::DimensionMismatch { expected: self.input_dim(), got: x.len() });
            }
            self.accumulate_sample_subgrad(x, *y, None, &mut scratch, &mut grads);
        }
        grads.scale(1.0 / data.len() as f64);
        Ok(grads)
    }

    /// In-place subgradient step `theta -= step * grads`.
    pub fn apply_step(&mut self, grads: &Gradients, step: f64) {
        for (m, gm) in self.weights.iter_mut().zip(&grads.weights) {
            for (row, grow) in m.iter_mut().zip(gm) {
                for (v, g) in row.iter_mut().zip(grow) {
                    *v -= step * g;
                }
            }
        }
        for (v, gv) in self.shifts.iter_mut().zip(&grads.shifts) {
            for (x, g) in v.iter_mut().zip(gv) {
                *x -= step * g;
            }
        }
    }

    /// Projects onto the constrained class: clips every entry to `[-B, B]`,
    /// then keeps only the `s` largest-magnitude entries of each weight
    /// matrix and each shift vector (ties broken by lowest flat index).
    /// Idempotent and never increases any entry magnitude.
    pub fn project_in_place(&mut self) {
        let b = self.arch.bound;
        let s = self.arch.sparsity;
        for m in &mut self.weights {
            let cols = m.first().map_or(0, |r| r.len());
            for row in m.iter_mut() {
                for v in row.iter_mut() {
                    *v = v.clamp(-b, b);
                }
            }
            prune_matrix(m, cols, s);
        }
        for v in &mut self.shifts {
            for x in v.iter_mut() {
                *x = x.clamp(-b, b);
            }
            prune_vector(v, s);
        }
    }

    /// Clip-then-prune projection, returning the projected copy.
    pub fn project_to_class(&self) -> SparseNetwork {
        let mut out = self.clone();
        out.project_in_place();
        out
    }

    /// Checks the per-layer nonzero counts and entry magnitudes against the
    /// class constraints and reports the witnesses.
    pub fn class_membership(&self) -> Membership {
        let mut max_nonzeros = 0usize;
        let mut max_abs_entry = 0.0f64;
        for m in &self.weights {
            let mut count = 0usize;
            for row in m {
                for &v in row {
                    if v != 0.0 {
                        count += 1;
                    }
                    max_abs_entry = max_abs_entry.max(v.abs());
                }
            }
            max_nonzeros = max_nonzeros.max(count);
        }
        for v in &self.shifts {
            let count = v.iter().filter(|&&x| x != 0.0).count();
            max_nonzeros = max_nonzeros.max(count);
            for &x in v {
                max_abs_entry = max_abs_entry.max(x.abs());
            }
        }
        Membership {
            in_class: max_nonzeros <= self.arch.sparsity && max_abs_entry <= self.arch.bound,
            max_nonzeros,
            max_abs_entry,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let net: SparseNetwork = serde_json::from_str(text)?;
        net.validate()?;
        Ok(net)
    }
}

/// Class-membership report with witnesses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Membership {
    pub in_class: bool,
    pub max_nonzeros: usize,
    pub max_abs_entry: f64,
}

fn top_s_indices(abs: &[f64], s: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..abs.len()).collect();
    idx.sort_by(|&a, &b| abs[b].total_cmp(&abs[a]).then(a.cmp(&b)));
    idx.truncate(s);
    idx
}

fn prune_matrix(m: &mut Matrix, cols: usize, s: usize) {
    let total: usize = m.len() * cols;
    if total <= s {
        return;
    }
    let nonzeros = m.iter().flat_map(|r| r.iter()).filter(|&&v| v != 0.0).count();
    if nonzeros <= s {
        return;
    }
    let abs: Vec<f64> = m.iter().flat_map(|r| r.iter().map(|v| v.abs())).collect();
    let keep = top_s_indices(&abs, s);
    let mut mask = vec![false; total];
    for k in keep {
        mask[k] = true;
    }
    for (r, row) in m.iter_mut().enumerate() {
        for (c, v) in row.iter_mut().enumerate() {
            if !mask[r * cols + c] {
                *v = 0.0;
            }
        }
    }
}

fn prune_vector(v: &mut [f64], s: usize) {
    if v.len() <= s || v.iter().filter(|&&x| x != 0.0).count() <= s {
        return;
    }
    let abs: Vec<f64> = v.iter().map(|x| x.abs()).collect();
    let keep = top_s_indices(&abs, s);
    let mut mask = vec![false; v.len()];
    for k in keep {
        mask[k] = true;
    }
    for (i, x) in v.iter_mut().enumerate() {
        if !mask[i] {
            *x = 0.0;
        }
    }
}
