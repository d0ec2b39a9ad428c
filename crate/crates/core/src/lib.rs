//! Hierarchical mixture-of-experts Gaussian process regression.
//!
//! A large training set is split into subsets, an exact GP expert is fitted
//! on each, and the experts are recombined: log-marginal likelihoods add up,
//! predictive Gaussians multiply. All experts share one set of SE-ARD
//! hyperparameters, trained by L-BFGS on the summed objective.

pub mod data;
pub mod error;
pub mod evaluation;
pub mod executor;
pub mod expert;
pub mod hgp;
pub mod kernel;
pub mod optimizer;
pub mod partition;
pub mod synth;

#[cfg(test)]
pub(crate) mod test_util;

pub use data::{Dataset, Inputs};
pub use error::{HgpError, Result};
pub use evaluation::{aggregate_lr, kl_gaussian, likelihood_ratio, nlpd, rmse, MetricReport};
pub use executor::{Executor, ExecutorConfig};
pub use expert::{ExpertState, FitOptions, GaussianPrediction};
pub use hgp::{CombinedPrediction, HgpTree, NoisePlacement, Target};
pub use kernel::{Hyperparameters, LogHyperparameters};
pub use optimizer::{train, Init, Termination, TrainConfig, TrainReport};
pub use partition::{PartitionMethod, PartitionPlan};
