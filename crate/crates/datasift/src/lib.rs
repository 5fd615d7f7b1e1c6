//! Budgeted data acquisition for demographic parity.
//!
//! Starting from a small biased training set, a large unlabeled-cost pool,
//! and a binary classification task with a binary sensitive attribute, the
//! crate buys pool points in batches so the trained classifier's
//! demographic-parity gap shrinks without giving up accuracy. The pool is
//! partitioned into clusters, a UCB bandit learns which clusters pay off,
//! and (optionally) an influence approximation ranks points inside each
//! cluster so batches lead with the points predicted to close the gap.
//!
//! Module map:
//! - [`dataset`]: examples, CSV loading with a typed schema, splits, and a
//!   synthetic generator for controlled bias.
//! - [`model`]: L2-regularized logistic regression via damped Newton.
//! - [`fairness`]: demographic parity, its smooth surrogate, and entropy.
//! - [`partition`]: diagonal-covariance mixture clustering with BIC model
//!   selection, plus grouping by a categorical column.
//! - [`valuation`]: influence of one point on the parity surrogate, a ridge
//!   regressor that generalizes scores to unseen points, and batch order.
//! - [`bandit`]: the UCB arm state, reward rule, and acquisition loop.
//! - [`harness`]: baselines, config-driven experiment runs, trace/summary
//!   artifacts, and a brute-force batch oracle for tests.

pub mod bandit;
pub mod dataset;
pub mod error;
pub mod fairness;
pub mod harness;
pub mod linalg;
pub mod model;
pub mod partition;
pub mod valuation;

pub use bandit::{BanditConfig, RewardKind, StopReason};
pub use dataset::{Dataset, Example, SplitSpec, SyntheticSpec};
pub use error::{Error, Result};
pub use fairness::{demographic_parity, FairnessReport};
pub use harness::{run_experiment, ExperimentConfig, Method, RunSummary};
pub use model::{train, TrainConfig, TrainedModel};
pub use partition::Partitioning;
pub use valuation::FairnessInfluence;
