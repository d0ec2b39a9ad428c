//! Fixtures for the criterion benches.

use hgp_core::partition::build_plan;
use hgp_core::synth::synthetic_dataset;
use hgp_core::{Dataset, Hyperparameters, PartitionMethod, PartitionPlan};

pub const DIM: usize = 3;

pub fn generating() -> Hyperparameters {
    Hyperparameters::isotropic(1.0, 0.5, 0.1, DIM).expect("valid hyperparameters")
}

/// A synthetic training set and a kd-tree plan with `leaf` points per expert.
pub fn fixture(n: usize, leaf: usize, seed: u64) -> (Dataset, PartitionPlan) {
    let data = synthetic_dataset(n, &generating(), seed).expect("synthetic draw");
    let plan =
        build_plan(data.inputs(), PartitionMethod::KdtreeStriped, n.div_ceil(leaf), 1, seed, None).expect("plan");
    (data, plan)
}
