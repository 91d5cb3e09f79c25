//! High-dimensional binary classification with sparse deep ReLU networks.
//!
//! The crate has three layers:
//!
//! - **Models**: [`network`] implements the constrained network class
//!   (evaluation, hinge risk, exact subgradients, projection), and [`train`]
//!   fits it by projected subgradient descent with dropout-rate selection.
//! - **Populations**: [`modular`] builds synthetic populations whose
//!   conditional probability has a low-dimensional compositional structure;
//!   [`hard`] builds the signed-bump populations that make the margin
//!   condition bind.
//! - **Theory**: [`architecture`] computes rate exponents, sizing rules, and
//!   covering/approximation budgets; [`risk`] estimates excess risks and
//!   fits empirical convergence rates against the theoretical curves.

pub mod architecture;
pub mod data;
pub mod error;
pub mod hard;
pub mod modular;
pub mod network;
pub mod quad;
pub mod risk;
pub mod seeding;
pub mod train;

pub use architecture::{
    approx_error_bound, approx_network_size, build_decision_head, composition_error_bound,
    covering_bound, effective_smoothness, lower_bound_rate, pwl_approximator, rate_exponents,
    regression_approx_budget, size_architecture, upper_bound_rate, DecisionHead, NoiseProfile,
    RateExponents, SizedArchitecture, SmoothnessSpec,
};
pub use data::{bayes_classify, BayesClassifier, Classifier, Instance, LabeledSample};
pub use error::{CoreError, Result};
pub use hard::{sample_hard, BumpFunction, HardInstance};
pub use modular::{
    check_prop1, estimate_margin_exponent, sample_dataset, ModularInstance, Prop1Report,
    RatioEvidence,
};
pub use network::{hinge, Gradients, Membership, NetworkArch, SparseNetwork};
pub use risk::{
    analytic_bayes_risk, compare_to_theory, fit_rate, mc_excess_risk, RateFit, RateStudy,
    RiskEstimate, StudyCell, TheoryComparison, TolerancePolicy, Verdict,
};
pub use train::{select_dropout, test_error, train_erm, DropoutSelection, TrainConfig, TrainedClassifier};
