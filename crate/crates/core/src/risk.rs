//! Excess-risk estimation against known populations, log-log rate fitting,
//! and comparison with the theoretical rate curves.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::architecture::{lower_bound_rate, upper_bound_rate, NoiseProfile, RateExponents};
use crate::data::{bayes_classify, Classifier, Instance};
use crate::error::{invalid, CoreError, Result};
use crate::modular::ModularInstance;
use crate::quad::adaptive_simpson;

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RiskEstimate {
    pub estimate: f64,
    pub std_error: f64,
}

/// Plug-in estimator of the excess misclassification risk
/// `E[|2 eta(X) - 1| 1{C(X) != C*(X)}]` under the instance marginal.
///
/// Uses the exact conditional probability, so the Bayes classifier scores
/// exactly zero and no labels are needed. A fixed seed gives common random
/// numbers across classifiers.
pub fn mc_excess_risk(
    classifier: &(impl Classifier + ?Sized),
    inst: &(impl Instance + ?Sized),
    n_test: usize,
    seed: u64,
) -> Result<RiskEstimate> {
    if n_test == 0 {
        return Err(invalid("excess risk estimation requires n_test >= 1"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    for _ in 0..n_test {
        let x = inst.sample_x(&mut rng);
        let eta = inst.eta(&x)?;
        let star = bayes_classify(eta);
        let pred = classifier.decide(&x)?;
        let v = if pred != star { (2.0 * eta - 1.0).abs() } else { 0.0 };
        sum += v;
        sum_sq += v * v;
    }
    let n = n_test as f64;
    let mean = sum / n;
    let var = ((sum_sq / n - mean * mean).max(0.0)) / n.max(2.0);
    Ok(RiskEstimate { estimate: mean, std_error: var.sqrt() })
}

/// Bayes misclassification risk `E[min(eta, 1 - eta)]` by adaptive
/// quadrature over the instance's active coordinates (closed form for the
/// built-ins is a test oracle, not an implementation shortcut).
pub fn analytic_bayes_risk(inst: &ModularInstance) -> Result<f64> {
    let coords = inst.active_coordinates();
    let integrand_of = |eta: f64| eta.min(1.0 - eta);
    match coords.len() {
        0 => inst.eval_eta_active(&[]).map(integrand_of),
        1 => {
            let f = |x: f64| integrand_of(inst.eval_eta_active(&[x]).expect("validated instance"));
            Ok(adaptive_simpson(&f, 0.0, 1.0, 1e-8))
        }
        2 => {
            let outer = |x0: f64| {
                let inner =
                    |x1: f64| integrand_of(inst.eval_eta_active(&[x0, x1]).expect("validated instance"));
                adaptive_simpson(&inner, 0.0, 1.0, 1e-9)
            };
            Ok(adaptive_simpson(&outer, 0.0, 1.0, 1e-8))
        }
        k => Err(CoreError::Unsupported(format!(
            "quadrature supports at most 2 active coordinates, instance has {k}"
        ))),
    }
}

/// Ordinary least squares of `ln(risk)` on `ln(n)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// Cells dropped because their risk estimate was not positive.
    pub excluded: usize,
}

/// Fits a power law through `(n, risk)` cells; nonpositive risks are
/// excluded, and at least three cells must remain.
pub fn fit_rate(cells: &[(f64, f64)]) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = cells
        .iter()
        .filter(|&&(_, r)| r > 0.0)
        .map(|&(n, r)| (n.ln(), r.ln()))
        .collect();
    let excluded = cells.len() - pts.len();
    if pts.len() < 3 {
        return Err(CoreError::RateFit(format!(
            "need at least 3 positive-risk cells, have {} ({} excluded)",
            pts.len(),
            excluded
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(CoreError::RateFit("all cells share the same n".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: f64 = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    let ss_res: f64 = pts
        .iter()
        .map(|p| {
            let e = p.1 - (intercept + slope * p.0);
            e * e
        })
        .sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(RateFit { slope, intercept, r_squared, excluded })
}

/// One measured cell of a rate study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyCell {
    pub n: usize,
    pub d: usize,
    pub seed: u64,
    pub excess_risk: f64,
    pub std_error: f64,
}

/// Measured cells with the fitted power law and theory comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RateStudy {
    pub cells: Vec<StudyCell>,
    pub fit: Option<RateFit>,
    pub comparison: Option<TheoryComparison>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Pass,
    Flag,
    NotApplicable,
}

/// Tolerance policy for the comparison verdict.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TolerancePolicy {
    /// Acceptable fitted-slope band (inclusive).
    pub slope_band: (f64, f64),
    /// Median inversions tolerated along the n-grid.
    pub max_inversions: usize,
}

impl Default for TolerancePolicy {
    fn default() -> Self {
        TolerancePolicy { slope_band: (-1.0, -0.15), max_inversions: 1 }
    }
}

/// Comparison of measured excess risks against the theoretical curves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TheoryComparison {
    pub s0: f64,
    /// Smallest constant whose upper curve dominates every estimate plus
    /// three standard errors.
    pub fitted_d2: f64,
    /// Largest constant whose lower curve stays below every estimate minus
    /// three standard errors.
    pub fitted_d1: f64,
    pub slope: Option<f64>,
    /// Mean of `ln(ln d)/ln n` over the cells, the regime exponent at which
    /// `ln d` behaves like `n^eps`.
    pub epsilon_regime: f64,
    /// Slope the rate theory predicts in that regime, `-(1 - eps) s0`.
    pub regime_slope: f64,
    pub per_n_medians: Vec<(usize, f64)>,
    pub median_inversions: usize,
    pub upper_dominates_medians: bool,
    pub verdict: Verdict,
}

fn median(values: &mut Vec<f64>) -> f64 {
    values.sort_by(f64::total_cmp);
    let k = values.len();
    if k % 2 == 1 {
        values[k / 2]
    } else {
        0.5 * (values[k / 2 - 1] + values[k / 2])
    }
}

/// Fits `D1`, `D2` from the study cells and issues a PASS/FLAG verdict under
/// the tolerance policy. All cells must share one ambient dimension.
pub fn compare_to_theory(
    study: &[StudyCell],
    exps: &RateExponents,
    noise: &NoiseProfile,
    policy: &TolerancePolicy,
) -> Result<TheoryComparison> {
    if study.is_empty() {
        return Err(invalid("empty study"));
    }
    let d = study[0].d;
    if study.iter().any(|c| c.d != d) {
        return Err(invalid("rate comparison requires cells sharing one dimension"));
    }
    let log_d = (d as f64).ln();
    let s0 = exps.s0;

    let degenerate = study.iter().all(|c| c.excess_risk == 0.0);

    let mut fitted_d2 = 0.0f64;
    let mut fitted_d1 = f64::INFINITY;
    for c in study {
        let unit_upper = upper_bound_rate(c.n, log_d, noise.c_d, s0, 1.0);
        let unit_lower = lower_bound_rate(c.n, log_d, noise.c_d, s0, 1.0);
        fitted_d2 = fitted_d2.max((c.excess_risk + 3.0 * c.std_error) / unit_upper);
        if unit_lower > 0.0 {
            fitted_d1 = fitted_d1.min((c.excess_risk - 3.0 * c.std_error).max(0.0) / unit_lower);
        }
    }
    if !fitted_d1.is_finite() {
        fitted_d1 = 0.0;
    }

    let fit_input: Vec<(f64, f64)> = study.iter().map(|c| (c.n as f64, c.excess_risk)).collect();
    let slope = fit_rate(&fit_input).ok().map(|f| f.slope);

    let mut ns: Vec<usize> = study.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let per_n_medians: Vec<(usize, f64)> = ns
        .iter()
        .map(|&n| {
            let mut vals: Vec<f64> =
                study.iter().filter(|c| c.n == n).map(|c| c.excess_risk).collect();
            (n, median(&mut vals))
        })
        .collect();
    let median_inversions = per_n_medians
        .windows(2)
        .filter(|w| w[1].1 > w[0].1 + 1e-12)
        .count();
    let upper_dominates_medians = per_n_medians
        .iter()
        .all(|&(n, med)| upper_bound_rate(n, log_d, noise.c_d, s0, fitted_d2) >= med - 1e-12);

    let epsilon_regime = study
        .iter()
        .map(|c| log_d.max(1.0).ln() / (c.n as f64).ln())
        .sum::<f64>()
        / study.len() as f64;
    let regime_slope = -(1.0 - epsilon_regime) * s0;

    let verdict = if degenerate {
        Verdict::NotApplicable
    } else {
        let slope_ok = slope.map_or(false, |s| {
            s < 0.0 && s >= policy.slope_band.0 && s <= policy.slope_band.1
        });
        if slope_ok && median_inversions <= policy.max_inversions && upper_dominates_medians {
            Verdict::Pass
        } else {
            Verdict::Flag
        }
    };

    Ok(TheoryComparison {
        s0,
        fitted_d2,
        fitted_d1,
        slope,
        epsilon_regime,
        regime_slope,
        per_n_medians,
        median_inversions,
        upper_dominates_medians,
        verdict,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::BayesClassifier;
    use crate::modular::ModularInstance;

    #[test]
    fn bayes_classifier_scores_exact_zero() {
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let bayes = BayesClassifier(&inst);
        let est = mc_excess_risk(&bayes, &inst, 50_000, 1).unwrap();
        assert_eq!(est.estimate, 0.0);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn constant_instance_constant_integrand() {
        // eta = 3/4 everywhere, classifier always -1: risk = |2*3/4 - 1| = 1/2
        let spec = crate::architecture::SmoothnessSpec::single_stage(2, 1, 1.0, 1.0).unwrap();
        let stage = crate::modular::Stage {
            components: vec![crate::modular::Component::new(vec![0], |_: &[f64]| 0.75)],
        };
        let inst = ModularInstance::custom(
            spec,
            vec![stage],
            NoiseProfile::new(0.0, 1.0).unwrap(),
            "constant",
        )
        .unwrap();
        let always_neg = |_x: &[f64]| -1i8;
        let est = mc_excess_risk(&always_neg, &inst, 10_000, 2).unwrap();
        assert_eq!(est.estimate, 0.5);
        assert_eq!(est.std_error, 0.0);
    }

    #[test]
    fn first_coordinate_classifier_reference_value() {
        // sign(x1 - 1/2) against the two-index linear family: 1/48.
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let clf = |x: &[f64]| if x[0] >= 0.5 { 1i8 } else { -1 };
        let est = mc_excess_risk(&clf, &inst, 200_000, 3).unwrap();
        let truth = 1.0 / 48.0;
        assert!(
            (est.estimate - truth).abs() <= 3.0 * est.std_error,
            "estimate {} truth {truth} se {}",
            est.estimate,
            est.std_error
        );
    }

    #[test]
    fn zero_probability_modification_is_invisible() {
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let base = |x: &[f64]| if x[0] >= 0.5 { 1i8 } else { -1 };
        let warped = |x: &[f64]| {
            if x[0] == 0.123456789 {
                1i8
            } else if x[0] >= 0.5 {
                1
            } else {
                -1
            }
        };
        let a = mc_excess_risk(&base, &inst, 20_000, 7).unwrap();
        let b = mc_excess_risk(&warped, &inst, 20_000, 7).unwrap();
        assert_eq!(a.estimate, b.estimate);
    }

    #[test]
    fn nested_disagreement_is_monotone_under_crn() {
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        // flip the Bayes decision on nested slabs
        let narrow = |x: &[f64]| {
            let bayes = if x[0] + x[1] >= 1.0 { 1i8 } else { -1 };
            if x[0] < 0.2 { -bayes } else { bayes }
        };
        let wide = |x: &[f64]| {
            let bayes = if x[0] + x[1] >= 1.0 { 1i8 } else { -1 };
            if x[0] < 0.4 { -bayes } else { bayes }
        };
        let a = mc_excess_risk(&narrow, &inst, 30_000, 11).unwrap();
        let b = mc_excess_risk(&wide, &inst, 30_000, 11).unwrap();
        assert!(b.estimate >= a.estimate);
    }

    #[test]
    fn analytic_bayes_risk_values() {
        let spec = crate::architecture::SmoothnessSpec::single_stage(2, 1, 1.0, 1.0).unwrap();
        let half = ModularInstance::custom(
            spec.clone(),
            vec![crate::modular::Stage {
                components: vec![crate::modular::Component::new(vec![0], |_: &[f64]| 0.5)],
            }],
            NoiseProfile::new(0.0, 1.0).unwrap(),
            "half",
        )
        .unwrap();
        assert!((analytic_bayes_risk(&half).unwrap() - 0.5).abs() < 1e-9);

        let sure = ModularInstance::custom(
            spec,
            vec![crate::modular::Stage {
                components: vec![crate::modular::Component::new(vec![0], |_: &[f64]| 1.0)],
            }],
            NoiseProfile::new(0.0, 1.0).unwrap(),
            "sure",
        )
        .unwrap();
        assert!(analytic_bayes_risk(&sure).unwrap().abs() < 1e-9);

        let gam = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let v = analytic_bayes_risk(&gam).unwrap();
        assert!((v - 5.0 / 12.0).abs() < 1e-6, "quadrature value {v}");
    }

    #[test]
    fn fit_recovers_planted_power_laws() {
        let cells: Vec<(f64, f64)> = [512.0, 1024.0, 2048.0, 4096.0]
            .iter()
            .map(|&n| (n, 1.0 / n))
            .collect();
        let fit = fit_rate(&cells).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);

        let cells: Vec<(f64, f64)> = [512.0f64, 1024.0, 2048.0, 4096.0]
            .iter()
            .map(|&n| (n, 2.0 * n.powf(-1.0 / 3.0)))
            .collect();
        let fit = fit_rate(&cells).unwrap();
        assert!((fit.slope + 1.0 / 3.0).abs() < 1e-12);
        assert!((fit.intercept - 2f64.ln()).abs() < 1e-12);

        let mut shuffled = cells.clone();
        shuffled.swap(0, 3);
        shuffled.swap(1, 2);
        let fit2 = fit_rate(&shuffled).unwrap();
        assert!((fit.slope - fit2.slope).abs() < 1e-12);
        assert!((fit.intercept - fit2.intercept).abs() < 1e-12);
    }

    #[test]
    fn fit_excludes_nonpositive_and_errors_when_thin() {
        let cells = vec![(512.0, 0.1), (1024.0, 0.0), (2048.0, 0.05), (4096.0, 0.02)];
        let fit = fit_rate(&cells).unwrap();
        assert_eq!(fit.excluded, 1);
        assert!(fit_rate(&cells[..2]).is_err());
    }

    #[test]
    fn comparison_passes_on_planted_rate() {
        let exps = RateExponents { s0: 0.4, s1: 0.4, u_star: 0, beta_eff: vec![1.0] };
        let noise = NoiseProfile::new(1.0, 8.0).unwrap();
        let cells: Vec<StudyCell> = [512usize, 1024, 2048, 4096]
            .iter()
            .flat_map(|&n| {
                (0..3).map(move |s| StudyCell {
                    n,
                    d: 16,
                    seed: s,
                    excess_risk: 2.0 * (n as f64).powf(-0.4),
                    std_error: 1e-4,
                })
            })
            .collect();
        let cmp = compare_to_theory(&cells, &exps, &noise, &TolerancePolicy::default()).unwrap();
        assert_eq!(cmp.verdict, Verdict::Pass);
        assert!((cmp.slope.unwrap() + 0.4).abs() < 1e-9);
        assert!(cmp.upper_dominates_medians);
        assert_eq!(cmp.median_inversions, 0);

        let zeros: Vec<StudyCell> = cells
            .iter()
            .map(|c| StudyCell { excess_risk: 0.0, std_error: 0.0, ..*c })
            .collect();
        let cmp = compare_to_theory(&zeros, &exps, &noise, &TolerancePolicy::default()).unwrap();
        assert_eq!(cmp.verdict, Verdict::NotApplicable);
    }

    #[test]
    fn estimates_are_never_negative() {
        let inst = ModularInstance::gam_linear(4, &[0, 1]).unwrap();
        let clf = |x: &[f64]| if x[1] >= 0.3 { 1i8 } else { -1 };
        let est = mc_excess_risk(&clf, &inst, 5_000, 5).unwrap();
        assert!(est.estimate >= 0.0);
        assert!(est.estimate >= -3.0 * est.std_error);
    }
}
