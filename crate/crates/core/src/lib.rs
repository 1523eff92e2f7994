//! Latent multi-group membership graph model.
//!
//! Nodes carry binary features and sit in a directed graph. Each node has an
//! independent membership probability in each of `K` latent groups; features
//! follow a sparse logistic model of the memberships and links follow a
//! multiplicative affinity model over group indicators. The crate fits the
//! model by alternating gradient ascent on a variational surrogate and uses
//! it for missing-feature prediction, held-out link prediction and node
//! classification.

pub mod baselines;
pub mod error;
pub mod fitting;
pub mod gradients;
pub mod io;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod prediction;
pub mod selection;
pub mod synth;

pub use error::{Error, Result};
pub use fitting::{fit, fit_holdout, FitReport};
pub use model::{
    expected_edge_prob, feature_prob, objective, pair_expectation, AffinityTensor, Dataset,
    FeatureWeights, Hyperparams, Memberships, ModelState, ObjectiveBreakdown, PhiSweep, Table,
};
