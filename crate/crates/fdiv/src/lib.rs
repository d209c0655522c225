//! f-divergence objectives for classification that stay robust under label
//! noise.
//!
//! The crate provides, at desk scale:
//!
//! - a catalog of eight f-divergences (generators, Fenchel conjugates,
//!   optimal variational values, output activations) — [`divergence`];
//! - joint/product distributions of (prediction, label) and the
//!   variational difference d_f(h, g) — [`joint`];
//! - structured label-noise models and analytic corruption — [`noise`];
//! - the exact decoupling of the noisy variational difference into
//!   shrink · clean + bias, bias correction, and robustness predicates —
//!   [`decoupling`];
//! - brute-force oracles on enumerable instances (Bayes classifiers,
//!   divergence maximizers, robustness verdicts, grid suprema) —
//!   [`oracle`];
//! - a softmax-linear trainer ascending the three-mini-batch variational
//!   objective, with a cross-entropy baseline — [`train`];
//! - synthetic data with analytic posteriors plus CSV/metrics I/O —
//!   [`data`];
//! - seeded verification suites — [`verify`].

pub mod data;
pub mod decoupling;
pub mod divergence;
pub mod error;
pub mod joint;
pub mod noise;
pub mod oracle;
pub mod seed;
pub mod special;
pub mod train;
pub mod verify;

pub use decoupling::{
    bias_corrected_difference, bias_scaling_probe, bias_term, decoupling_check, delta_term,
    fit_response, hstar_membership, log_log_slope, monotone_t_condition, shrink_factor,
    DecouplingReport,
};
pub use divergence::{
    divergence_closed_form, divergence_from_cells, CatalogRow, ConjugateDomain, Divergence,
};
pub use error::{Error, Result};
pub use joint::{
    estimate_joint, f_mutual_information, fit_measure, variational_difference, JointDistribution,
    VariationalTable,
};
pub use noise::{NoiseStructure, PairFlip, TransitionMatrix};
pub use oracle::{
    conjugate_oracle, df_maximizer, enumerate_classifiers, induced_joint, is_confident,
    robustness_verdict, variational_sup_oracle, Atom, FiniteInstance, GeometricGrid, OracleValue,
    TabularClassifier,
};
pub use special::lambert_w;
pub use train::{
    evaluate, train, train_step, LrSchedule, Objective, ScoreMode, SoftmaxLinearModel,
    TrainConfig, TrainHistory,
};
