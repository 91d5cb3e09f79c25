//! The hard-population construction for minimax lower bounds: a regular grid
//! of signed smooth bumps with calibrated cell masses, so the margin
//! condition binds at the chosen noise exponent.

use std::sync::OnceLock;

use rand::Rng;
use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::architecture::{rate_exponents, SmoothnessSpec};
use crate::data::{Instance, LabeledSample};
use crate::error::{invalid, CoreError, Result};
use crate::quad::{composite_simpson, simpson3};

/// Quadrature step used for the cached bump profile.
pub const BUMP_QUAD_STEP: f64 = 1e-5;

/// Hölder budget used when calibrating the bump amplitude.
const HOLDER_BUDGET: f64 = 1.0;

/// The unnormalized mollifier kernel: `exp(1/((x - 1/4)(x - 1/2)))` on
/// `(1/4, 1/2)` and zero elsewhere; the exponent is negative there so values
/// lie in `(0, 1)`.
pub fn gamma1(x: f64) -> f64 {
    if x > 0.25 && x < 0.5 {
        (1.0 / ((x - 0.25) * (x - 0.5))).exp()
    } else {
        0.0
    }
}

/// Smooth transition profile `gamma`: equals 1 on `[0, 1/4]`, 0 on
/// `[1/2, inf)`, and the normalized tail integral of [`gamma1`] in between.
/// Values are tabulated by composite Simpson quadrature at fixed step.
pub struct BumpFunction {
    step: f64,
    total: f64,
    /// `tails[i]` is the integral of `gamma1` from `1/4 + i*step` to `1/2`.
    tails: Vec<f64>,
}

impl BumpFunction {
    pub fn with_step(step: f64) -> Self {
        let n = ((0.25 / step).ceil() as usize).max(2);
        let h = 0.25 / n as f64;
        let mut tails = vec![0.0; n + 1];
        for i in (0..n).rev() {
            let a = 0.25 + h * i as f64;
            let b = 0.25 + h * (i + 1) as f64;
            tails[i] = tails[i + 1] + simpson3(gamma1, a, b);
        }
        BumpFunction { step: h, total: tails[0], tails }
    }

    /// Shared profile at the default quadrature step.
    pub fn standard() -> &'static BumpFunction {
        static CELL: OnceLock<BumpFunction> = OnceLock::new();
        CELL.get_or_init(|| BumpFunction::with_step(BUMP_QUAD_STEP))
    }

    pub fn normalizer(&self) -> f64 {
        self.total
    }

    pub fn gamma(&self, x: f64) -> f64 {
        if x <= 0.25 {
            return 1.0;
        }
        if x >= 0.5 {
            return 0.0;
        }
        let pos = (x - 0.25) / self.step;
        let i = (pos.ceil() as usize).min(self.tails.len() - 1);
        let node = 0.25 + self.step * i as f64;
        let partial = if node > x { simpson3(gamma1, x, node) } else { 0.0 };
        ((partial + self.tails[i]) / self.total).clamp(0.0, 1.0)
    }
}

/// Direct (untabulated) evaluation of `gamma` by composite Simpson at the
/// given step; used to cross-check the table at two resolutions.
pub fn gamma_direct(x: f64, step: f64) -> f64 {
    if x <= 0.25 {
        return 1.0;
    }
    if x >= 0.5 {
        return 0.0;
    }
    let total = composite_simpson(gamma1, 0.25, 0.5, step);
    composite_simpson(gamma1, x, 0.5, step) / total
}

/// A calibrated hard instance.
///
/// The conditional probability depends on the first `t_star` coordinates:
/// on each of the `m` active grid cells it is
/// `1/2 + sigma_j/2 * h(x)^{beta_tilde}` with
/// `h(x) = nu^{-beta_star} C_gamma gamma(nu ||x - center||_2)`, and on the
/// residual cells it is `residual_eta`. The sampling marginal puts mass `w`
/// on each active cell (uniform over the inner ball where `gamma = 1`) and
/// the rest on the residual cells.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HardInstance {
    pub d: usize,
    pub t_star: usize,
    pub beta_star: f64,
    pub beta_tilde: f64,
    pub nu: u32,
    pub c_gamma: f64,
    pub m: usize,
    pub w: f64,
    pub sigma: Vec<i8>,
    pub residual_eta: f64,
}

impl HardInstance {
    pub fn validate(&self) -> Result<()> {
        if self.d == 0 || self.t_star == 0 || self.t_star > self.d {
            return Err(invalid("require 1 <= t_star <= d"));
        }
        if self.nu == 0 {
            return Err(invalid("grid resolution nu must be positive"));
        }
        let cells = (self.nu as f64).powi(self.t_star as i32);
        if self.m == 0 || (self.m as f64) > cells {
            return Err(invalid("active cell count must satisfy 1 <= m <= nu^t"));
        }
        if self.sigma.len() != self.m || self.sigma.iter().any(|&s| s != 1 && s != -1) {
            return Err(invalid("sigma must be m signs in {-1, +1}"));
        }
        let mass = self.m as f64 * self.w;
        if !(self.w > 0.0) || mass > 1.0 + 1e-12 {
            return Err(invalid("cell masses must satisfy 0 < m*w <= 1"));
        }
        if mass < 1.0 - 1e-12 && (self.m as f64) >= cells {
            return Err(invalid("residual mass requires at least one free cell"));
        }
        if !(self.c_gamma > 0.0) || self.c_gamma * (self.nu as f64).powf(-self.beta_star) > 1.0 {
            return Err(invalid("bump amplitude must keep eta within [0, 1]"));
        }
        if !(0.0..=1.0).contains(&self.residual_eta) {
            return Err(invalid("residual eta must lie in [0, 1]"));
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        (self.nu as usize).pow(self.t_star as u32)
    }

    /// Active-cell margin `|eta - 1/2|` on the inner ball:
    /// `(1/2) (C_gamma nu^{-beta_star})^{beta_tilde}`.
    pub fn amplitude(&self) -> f64 {
        0.5 * (self.c_gamma * (self.nu as f64).powf(-self.beta_star)).powf(self.beta_tilde)
    }

    /// Grid centers `(2k+1)/(2 nu)` per coordinate, lexicographic order.
    pub fn grid_points(nu: u32, t: usize) -> Vec<Vec<f64>> {
        let mut out = Vec::with_capacity((nu as usize).pow(t as u32));
        let mut idx = vec![0u32; t];
        loop {
            out.push(idx.iter().map(|&k| (2.0 * k as f64 + 1.0) / (2.0 * nu as f64)).collect());
            let mut pos = t;
            while pos > 0 {
                idx[pos - 1] += 1;
                if idx[pos - 1] < nu {
                    break;
                }
                idx[pos - 1] = 0;
                pos -= 1;
            }
            if pos == 0 {
                break;
            }
        }
        out
    }

    fn center_coord(nu: u32, k: u32) -> f64 {
        (2.0 * k as f64 + 1.0) / (2.0 * nu as f64)
    }

    /// Per-coordinate index of the max-norm nearest center, ties resolved to
    /// the lexicographically smallest center.
    fn nearest_indices(x: &[f64], nu: u32) -> Vec<u32> {
        // Pass 1: per-coordinate nearest distances (ties to the smaller k).
        let per: Vec<(u32, f64)> = x
            .iter()
            .map(|&xi| {
                let mut k = ((xi * nu as f64).floor() as i64).clamp(0, nu as i64 - 1) as u32;
                let mut dist = (xi - Self::center_coord(nu, k)).abs();
                if k > 0 {
                    let d_prev = (xi - Self::center_coord(nu, k - 1)).abs();
                    if d_prev <= dist {
                        k -= 1;
                        dist = d_prev;
                    }
                }
                if k + 1 < nu {
                    let d_next = (xi - Self::center_coord(nu, k + 1)).abs();
                    if d_next < dist {
                        k += 1;
                        dist = d_next;
                    }
                }
                (k, dist)
            })
            .collect();
        let radius = per.iter().map(|p| p.1).fold(0.0f64, f64::max);
        // Pass 2: smallest center within the max-norm radius, per coordinate.
        per.iter()
            .zip(x)
            .map(|(&(k, _), &xi)| {
                if k > 0 && (xi - Self::center_coord(nu, k - 1)).abs() <= radius {
                    k - 1
                } else {
                    k
                }
            })
            .collect()
    }

    /// Nearest grid center to `x` in max-norm (lexicographically smallest on
    /// ties).
    pub fn nearest_center(x: &[f64], nu: u32) -> Vec<f64> {
        Self::nearest_indices(x, nu)
            .into_iter()
            .map(|k| Self::center_coord(nu, k))
            .collect()
    }

    fn cell_of(&self, x_t: &[f64]) -> (usize, Vec<f64>) {
        let idx = Self::nearest_indices(x_t, self.nu);
        let mut cell = 0usize;
        for &k in &idx {
            cell = cell * self.nu as usize + k as usize;
        }
        let center = idx.into_iter().map(|k| Self::center_coord(self.nu, k)).collect();
        (cell, center)
    }

    fn center_of(&self, cell: usize) -> Vec<f64> {
        let mut rem = cell;
        let mut idx = vec![0u32; self.t_star];
        for pos in (0..self.t_star).rev() {
            idx[pos] = (rem % self.nu as usize) as u32;
            rem /= self.nu as usize;
        }
        idx.into_iter().map(|k| Self::center_coord(self.nu, k)).collect()
    }

    /// The scaled bump `nu^{-beta_star} C_gamma gamma(nu ||x - n(x)||_2)` on
    /// the first `t_star` coordinates.
    pub fn bump_h(&self, x_t: &[f64]) -> f64 {
        let (_, center) = self.cell_of(x_t);
        let dist: f64 = x_t
            .iter()
            .zip(&center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        (self.nu as f64).powf(-self.beta_star)
            * self.c_gamma
            * BumpFunction::standard().gamma(self.nu as f64 * dist)
    }

    /// Conditional probability at an ambient point (only the first `t_star`
    /// coordinates matter).
    pub fn eta_sigma(&self, x: &[f64]) -> Result<f64> {
        if x.len() < self.t_star {
            return Err(CoreError::DimensionMismatch { expected: self.d, got: x.len() });
        }
        let x_t = &x[..self.t_star];
        let (cell, _) = self.cell_of(x_t);
        if cell < self.m {
            let h = self.bump_h(x_t);
            Ok(0.5 + 0.5 * self.sigma[cell] as f64 * h.powf(self.beta_tilde))
        } else {
            Ok(self.residual_eta)
        }
    }

    /// Calibrates a hard instance for sample size `n` and ambient dimension
    /// `d`: grid resolution `nu = ceil(nu0 (ln d)^e)` with
    /// `nu0 = ceil(n^e)`, `e = 1/((2+alpha) beta* + t*)`; per-cell mass
    /// capped at `nu^{2 beta*}/n`; the cell count chosen so the active mass
    /// is exactly `nu^{-alpha beta*}`.
    pub fn calibrate(n: usize, d: usize, spec: &SmoothnessSpec, alpha: f64, _c_d: f64) -> Result<Self> {
        if n < 2 {
            return Err(invalid("calibration requires n >= 2"));
        }
        if d < 2 {
            return Err(invalid("calibration requires d >= 2"));
        }
        let exps = rate_exponents(spec, alpha)?;
        let u = exps.u_star;
        let beta_star = spec.betas[u];
        let t_star = spec.intrinsic[u];
        if t_star > d {
            return Err(invalid("intrinsic dimension exceeds ambient dimension"));
        }
        let beta_tilde: f64 = spec.betas[u + 1..].iter().map(|&b| b.min(1.0)).product();
        let expo = 1.0 / ((2.0 + alpha) * beta_star + t_star as f64);
        let nu0 = (n as f64).powf(expo).ceil();
        let nu = (nu0 * (d as f64).ln().powf(expo)).ceil().max(1.0) as u32;
        let nu_f = nu as f64;
        let cells = nu_f.powi(t_star as i32);
        let w_cap = nu_f.powf(2.0 * beta_star) / n as f64;
        let target_mass = nu_f.powf(-alpha * beta_star);
        let m_f = (target_mass / w_cap).ceil().max(1.0);
        if m_f > cells {
            return Err(CoreError::Calibration(format!(
                "need {m_f} active cells of mass at most {w_cap:.3e} to reach mass {target_mass:.3e}, \
                 but the grid nu={nu} has only {cells} cells (n={n}, d={d}, beta*={beta_star}, t*={t_star})"
            )));
        }
        if target_mass < 1.0 - 1e-12 && m_f >= cells {
            return Err(CoreError::Calibration(format!(
                "residual mass {:.3e} has no free cell to live on (m={m_f}, cells={cells})",
                1.0 - target_mass
            )));
        }
        let m = m_f as usize;
        let w = target_mass / m as f64;
        let c_gamma = select_bump_amplitude(nu, beta_star, t_star);
        let sigma = (0..m).map(|j| if j % 2 == 0 { 1 } else { -1 }).collect();
        let inst = HardInstance {
            d,
            t_star,
            beta_star,
            beta_tilde,
            nu,
            c_gamma,
            m,
            w,
            sigma,
            residual_eta: 1.0,
        };
        inst.validate()?;
        Ok(inst)
    }

    /// Monte-Carlo check of `P(|eta - 1/2| <= t) <= C_d t^alpha` (with three
    /// binomial standard errors of slack) under the instance marginal.
    pub fn verify_margin(
        &self,
        alpha: f64,
        c_d: f64,
        t_grid: &[f64],
        n_mc: usize,
        seed: u64,
    ) -> Result<MarginVerification> {
        if t_grid.is_empty() || n_mc == 0 {
            return Err(invalid("verify_margin requires a grid and samples"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut margins = Vec::with_capacity(n_mc);
        for _ in 0..n_mc {
            let x = self.sample_x(&mut rng);
            margins.push((self.eta_sigma(&x)? - 0.5).abs());
        }
        margins.sort_by(f64::total_cmp);
        let rows = t_grid
            .iter()
            .map(|&t| {
                let p_hat = margins.partition_point(|&v| v <= t) as f64 / n_mc as f64;
                let std_err = (p_hat * (1.0 - p_hat) / n_mc as f64).sqrt();
                let bound = c_d * t.powf(alpha);
                MarginCheckRow { t, p_hat, std_err, bound, pass: p_hat <= bound + 3.0 * std_err }
            })
            .collect::<Vec<_>>();
        let all_pass = rows.iter().all(|r| r.pass);
        Ok(MarginVerification { rows, all_pass })
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let inst: HardInstance = serde_json::from_str(text)?;
        inst.validate()?;
        Ok(inst)
    }
}

/// One threshold row of a margin verification.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarginCheckRow {
    pub t: f64,
    pub p_hat: f64,
    pub std_err: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginVerification {
    pub rows: Vec<MarginCheckRow>,
    pub all_pass: bool,
}

/// Largest power-of-two amplitude whose scaled bump passes an empirical
/// Hölder-quotient test at budget 1.
///
/// The quotient of the unit-amplitude bump is measured over seeded random
/// pairs at a range of separations; scaling by the amplitude is linear, so
/// the amplitude is the largest `2^{-k}` putting the product under budget.
fn select_bump_amplitude(nu: u32, beta_star: f64, t_star: usize) -> f64 {
    let expo = beta_star.min(1.0);
    let probe = HardInstance {
        d: t_star,
        t_star,
        beta_star,
        beta_tilde: 1.0,
        nu,
        c_gamma: 1.0,
        m: 1,
        w: 1.0,
        sigma: vec![1],
        residual_eta: 1.0,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0xB0B5);
    let mut quotient = 0.0f64;
    let nu_f = nu as f64;
    for _ in 0..10_000 {
        let x: Vec<f64> = (0..t_star).map(|_| rng.gen::<f64>()).collect();
        let scale = 10f64.powf(-rng.gen::<f64>() * 3.0) / nu_f;
        let mut y = x.clone();
        for v in y.iter_mut() {
            *v = (*v + rng.gen_range(-1.0..1.0) * scale).clamp(0.0, 1.0);
        }
        let dist = x
            .iter()
            .zip(&y)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        if dist == 0.0 {
            continue;
        }
        let gap = (probe.bump_h(&x) - probe.bump_h(&y)).abs();
        quotient = quotient.max(gap / dist.powf(expo));
    }
    let sup = nu_f.powf(-beta_star); // sup norm of the unit-amplitude bump
    let worst = quotient.max(sup);
    if worst <= HOLDER_BUDGET {
        1.0
    } else {
        0.5f64.powi((worst / HOLDER_BUDGET).log2().ceil() as i32)
    }
}

impl Instance for HardInstance {
    fn dim(&self) -> usize {
        self.d
    }

    fn eta(&self, x: &[f64]) -> Result<f64> {
        self.eta_sigma(x)
    }

    fn sample_x(&self, rng: &mut dyn RngCore) -> Vec<f64> {
        let mut x = vec![0.0; self.d];
        let cells = self.cells();
        let active_mass = self.m as f64 * self.w;
        let u: f64 = rng.gen();
        let in_active = u < active_mass || cells == self.m;
        if in_active {
            let j = ((u / self.w) as usize).min(self.m - 1);
            let center = self.center_of(j);
            let r = 1.0 / (4.0 * self.nu as f64);
            // Uniform over the Euclidean inner ball where gamma = 1, by
            // rejection from the enclosing box.
            loop {
                let offs: Vec<f64> =
                    (0..self.t_star).map(|_| rng.gen_range(-1.0f64..1.0) * r).collect();
                let norm2: f64 = offs.iter().map(|o| o * o).sum();
                if self.t_star == 1 || norm2 <= r * r {
                    for (i, o) in offs.into_iter().enumerate() {
                        x[i] = center[i] + o;
                    }
                    break;
                }
            }
        } else {
            let free = cells - self.m;
            let pick: f64 = rng.gen();
            let cell = self.m + ((pick * free as f64) as usize).min(free - 1);
            let center = self.center_of(cell);
            let half = 1.0 / (2.0 * self.nu as f64);
            for i in 0..self.t_star {
                x[i] = center[i] + rng.gen_range(-1.0f64..1.0) * half * 0.999_999;
            }
        }
        for i in self.t_star..self.d {
            x[i] = rng.gen();
        }
        x
    }
}

/// Draws a labeled dataset from the hard marginal.
pub fn sample_hard(inst: &HardInstance, n: usize, seed: u64) -> Result<Vec<LabeledSample>> {
    if inst.m as f64 * inst.w > 1.0 + 1e-12 {
        return Err(invalid("active mass m*w exceeds 1"));
    }
    inst.sample(n, seed)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_stage_spec(beta: f64, t: usize, d: usize) -> SmoothnessSpec {
        SmoothnessSpec::single_stage(d, t, beta, 1.0).unwrap()
    }

    #[test]
    fn gamma_endpoints() {
        let bump = BumpFunction::standard();
        assert_eq!(bump.gamma(0.2), 1.0);
        assert_eq!(bump.gamma(0.0), 1.0);
        assert_eq!(bump.gamma(0.6), 0.0);
        assert_eq!(bump.gamma(0.5), 0.0);
    }

    #[test]
    fn gamma_midpoint_is_half_by_symmetry() {
        // gamma1 is symmetric about 3/8, so the half-tail integral is half
        // the total. Golden value frozen from the two-resolution oracle.
        let coarse = gamma_direct(0.375, 1e-5);
        let fine = gamma_direct(0.375, 5e-6);
        assert!((coarse - fine).abs() < 1e-8);
        assert!((coarse - 0.5).abs() < 1e-9);
        assert!((BumpFunction::standard().gamma(0.375) - 0.5).abs() < 1e-9);
    }

    #[test]
    fn gamma_two_resolutions_agree_and_monotone() {
        let bump = BumpFunction::standard();
        let mut prev = f64::INFINITY;
        let mut x = 0.0;
        while x <= 0.55 {
            let v = bump.gamma(x);
            assert!(v <= prev + 1e-12, "gamma not nonincreasing at {x}");
            assert!((0.0..=1.0).contains(&v));
            if x > 0.25 && x < 0.5 {
                let direct = gamma_direct(x, 1e-5);
                let fine = gamma_direct(x, 5e-6);
                assert!((direct - fine).abs() < 1e-8, "step disagreement at {x}");
                assert!((v - direct).abs() < 1e-8, "table disagreement at {x}");
            }
            prev = v;
            x += 1e-3;
        }
    }

    #[test]
    fn grid_examples() {
        assert_eq!(HardInstance::grid_points(1, 1), vec![vec![0.5]]);
        assert_eq!(HardInstance::grid_points(2, 1), vec![vec![0.25], vec![0.75]]);
        assert_eq!(HardInstance::grid_points(2, 2).len(), 4);
        assert_eq!(HardInstance::nearest_center(&[0.3], 2), vec![0.25]);
        // tie at 0.5: lexicographically smallest center wins
        assert_eq!(HardInstance::nearest_center(&[0.5], 2), vec![0.25]);
        // 2-D tie in one coordinate with slack in the other
        assert_eq!(HardInstance::nearest_center(&[0.5, 0.55], 2), vec![0.25, 0.75]);
    }

    fn tiny_instance(nu: u32, m: usize, w: f64, beta_star: f64, beta_tilde: f64) -> HardInstance {
        let sigma = (0..m).map(|j| if j % 2 == 0 { 1 } else { -1 }).collect();
        HardInstance {
            d: 2,
            t_star: 1,
            beta_star,
            beta_tilde,
            nu,
            c_gamma: 0.5,
            m,
            w,
            sigma,
            residual_eta: 1.0,
        }
    }

    #[test]
    fn bump_values() {
        let inst = tiny_instance(1, 1, 1.0, 1.0, 1.0);
        // at the center gamma(0) = 1
        assert_eq!(inst.bump_h(&[0.5]), 0.5);
        // far from every center the bump vanishes: nu ||x - c|| >= 1/2
        let inst4 = tiny_instance(4, 4, 0.25, 1.0, 1.0);
        assert_eq!(inst4.bump_h(&[0.0]), (4.0f64).powf(-1.0) * 0.5 * BumpFunction::standard().gamma(0.5));
        assert_eq!(inst4.bump_h(&[0.0]), 0.0);
    }

    #[test]
    fn eta_signs_and_amplitude() {
        let inst = tiny_instance(2, 2, 0.5, 1.0, 1.0);
        let amp = inst.amplitude();
        assert!((inst.eta_sigma(&[0.25, 0.9]).unwrap() - (0.5 + amp)).abs() < 1e-15);
        assert!((inst.eta_sigma(&[0.75, 0.1]).unwrap() - (0.5 - amp)).abs() < 1e-15);
        // everywhere on active cells the margin is at most the amplitude
        for i in 0..100 {
            let x = i as f64 / 99.0;
            let eta = inst.eta_sigma(&[x, 0.5]).unwrap();
            assert!((eta - 0.5).abs() <= amp + 1e-15);
            assert!((0.0..=1.0).contains(&eta));
        }
    }

    #[test]
    fn sign_flip_mirrors_eta() {
        let inst = tiny_instance(2, 2, 0.5, 1.0, 1.0);
        let mut flipped = inst.clone();
        for s in flipped.sigma.iter_mut() {
            *s = -*s;
        }
        for i in 0..50 {
            let x = i as f64 / 49.0;
            let a = inst.eta_sigma(&[x, 0.2]).unwrap();
            let b = flipped.eta_sigma(&[x, 0.2]).unwrap();
            assert!((a + b - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn sampler_masses_and_margins() {
        // single cell, full mass
        let inst = tiny_instance(2, 1, 1.0, 1.0, 1.0);
        let data = sample_hard(&inst, 500, 7).unwrap();
        for s in &data {
            assert!((s.x[0] - 0.25).abs() <= 1.0 / 8.0 + 1e-12);
        }

        // half the mass in one active cell, rest on the residual cell
        let inst = tiny_instance(2, 1, 0.5, 1.0, 1.0);
        let n = 10_000;
        let data = sample_hard(&inst, n, 13).unwrap();
        let amp = inst.amplitude();
        let mut active = 0usize;
        for s in &data {
            let margin = (inst.eta_sigma(&s.x).unwrap() - 0.5).abs();
            if margin < 0.4 {
                active += 1;
                assert!((margin - amp).abs() < 1e-15);
            } else {
                assert_eq!(margin, 0.5); // residual eta = 1
            }
        }
        let frac = active as f64 / n as f64;
        assert!((frac - 0.5).abs() <= 4.0 * (0.25f64 / n as f64).sqrt());
    }

    #[test]
    fn calibration_reference_point() {
        // nu0 = ceil(100^{1/3}) = 5; with d = 3, nu = ceil(5 * ln(3)^{1/3}) = 6.
        let spec = single_stage_spec(1.0, 1, 3);
        let inst = HardInstance::calibrate(100, 3, &spec, 0.0, 1.0).unwrap();
        assert_eq!(inst.nu, 6);
        assert_eq!(inst.t_star, 1);
        assert_eq!(inst.beta_star, 1.0);
        // alpha = 0: the active mass fills the whole marginal
        assert!((inst.m as f64 * inst.w - 1.0).abs() < 1e-12);

        let mut prev_nu = 0;
        for &n in &[50usize, 100, 200, 400, 800] {
            let inst = HardInstance::calibrate(n, 3, &spec, 0.0, 1.0).unwrap();
            assert!(inst.nu >= prev_nu, "nu decreased when n doubled");
            prev_nu = inst.nu;
        }
    }

    #[test]
    fn calibrated_instance_passes_margin_check() {
        let spec = single_stage_spec(1.0, 1, 3);
        let inst = HardInstance::calibrate(500, 3, &spec, 0.0, 1.0).unwrap();
        let grid: Vec<f64> = (1..=8).map(|i| i as f64 * 0.05).collect();
        let report = inst.verify_margin(0.0, 1.0, &grid, 20_000, 3).unwrap();
        assert!(report.all_pass, "{:?}", report.rows);
    }

    #[test]
    fn amplitude_satisfies_holder_budget() {
        let spec = single_stage_spec(1.0, 1, 3);
        let inst = HardInstance::calibrate(200, 3, &spec, 0.0, 1.0).unwrap();
        // quotient of the calibrated bump over random nearby pairs
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let mut worst = 0.0f64;
        for _ in 0..10_000 {
            let x = vec![rng.gen::<f64>()];
            let y = vec![(x[0] + rng.gen_range(-0.05..0.05)).clamp(0.0, 1.0)];
            let dist = (x[0] - y[0]).abs();
            if dist == 0.0 {
                continue;
            }
            worst = worst.max((inst.bump_h(&x) - inst.bump_h(&y)).abs() / dist);
        }
        assert!(worst <= 1.0 + 1e-9, "Hölder quotient {worst}");
    }

    #[test]
    fn json_round_trip() {
        let inst = tiny_instance(3, 2, 0.3, 1.0, 0.5);
        let text = inst.to_json().unwrap();
        let back = HardInstance::from_json(&text).unwrap();
        assert_eq!(inst.nu, back.nu);
        assert_eq!(inst.sigma, back.sigma);
        assert_eq!(inst.w.to_bits(), back.w.to_bits());
    }

    #[test]
    fn infeasible_calibration_is_reported() {
        // d = 2 shrinks nu below nu0 (ln 2 < 1), so the grid cannot hold
        // enough cells of the capped mass.
        let spec = single_stage_spec(1.0, 1, 2);
        let err = HardInstance::calibrate(10_000, 2, &spec, 0.0, 1.0);
        assert!(matches!(err, Err(CoreError::Calibration(_))));
    }
}
