//! The hierarchical model.
//!
//! Leaves are exact GP experts on the subsets of a [`PartitionPlan`]; interior
//! nodes only recombine. The training objective is the sum of the leaf
//! log-marginal likelihoods and a prediction is the normalized product of the
//! leaf Gaussians, so the shape of the tree above the leaves changes neither.
//! The tree still decides how work is spread over workers and the order in
//! which predictions are folded together.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Inputs};
use crate::error::{HgpError, Result};
use crate::executor::{assign_groups, Executor, WorkerGroups};
use crate::expert::{self, ExpertState, FitOptions, GaussianPrediction, PREDICT_BLOCK};
use crate::kernel::Hyperparameters;
use crate::partition::PartitionPlan;

/// Quantity being predicted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    /// The latent function value f(x*).
    Latent,
    /// A noisy observation y* = f(x*) + ε.
    Noisy,
}

/// Where σ_ε² enters a noisy prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoisePlacement {
    /// Once, on the combined variance.
    #[default]
    Root,
    /// On every leaf variance before combining; shrinks the combined noise by ~1/c.
    PerLeaf,
}

/// Product of several Gaussians, normalized.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedPrediction {
    pub mean: f64,
    pub variance: f64,
    /// Leaf weights `σ_k⁻² / Σ_j σ_j⁻²` in canonical leaf order.
    pub weights: Vec<f64>,
}

impl CombinedPrediction {
    pub fn gaussian(&self) -> GaussianPrediction {
        GaussianPrediction { mean: self.mean, variance: self.variance }
    }
}

/// Leaves in depth-first order plus the branching factor of each level.
#[derive(Debug, Clone)]
pub struct HgpTree {
    branching: Vec<usize>,
    leaves: Vec<ExpertState>,
    plan: PartitionPlan,
    hp: Hyperparameters,
    noise_placement: NoisePlacement,
}

impl HgpTree {
    pub fn branching(&self) -> &[usize] {
        &self.branching
    }

    pub fn leaves(&self) -> &[ExpertState] {
        &self.leaves
    }

    pub fn plan(&self) -> &PartitionPlan {
        &self.plan
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    pub fn num_leaves(&self) -> usize {
        self.leaves.len()
    }

    pub fn noise_placement(&self) -> NoisePlacement {
        self.noise_placement
    }

    pub fn with_noise_placement(mut self, placement: NoisePlacement) -> Self {
        self.noise_placement = placement;
        self
    }

    /// Same leaves, different interior shape.
    pub fn reshaped(&self, branching: &[usize]) -> Result<HgpTree> {
        validate_branching(branching, self.leaves.len())?;
        Ok(HgpTree { branching: branching.to_vec(), ..self.clone() })
    }
}

pub fn validate_branching(branching: &[usize], experts: usize) -> Result<()> {
    if branching.is_empty() || branching.contains(&0) {
        return Err(HgpError::Tree(format!("branching factors must be positive, got {branching:?}")));
    }
    let product = branching.iter().try_fold(1usize, |acc, &b| acc.checked_mul(b));
    match product {
        Some(p) if p == experts => Ok(()),
        Some(p) => Err(HgpError::Tree(format!("branching product {p} ≠ experts {experts}"))),
        None => Err(HgpError::Tree(format!("branching product overflows, experts {experts}"))),
    }
}

fn schedule(exec: &Executor, branching: &[usize]) -> WorkerGroups {
    assign_groups(exec.workers(), branching)
}

fn leaf_error(e: HgpError) -> HgpError {
    match e {
        HgpError::Task { index, source } => HgpError::Leaf { leaf: index, source },
        other => other,
    }
}

pub fn build_tree(
    exec: &Executor,
    data: &Dataset,
    plan: &PartitionPlan,
    branching: &[usize],
    hp: &Hyperparameters,
) -> Result<HgpTree> {
    build_tree_with(exec, data, plan, branching, hp, &FitOptions::default())
}

pub fn build_tree_with(
    exec: &Executor,
    data: &Dataset,
    plan: &PartitionPlan,
    branching: &[usize],
    hp: &Hyperparameters,
    opts: &FitOptions,
) -> Result<HgpTree> {
    validate_branching(branching, plan.num_subsets())?;
    hp.check_dim(data.dim())?;
    let leaves = exec
        .map_grouped(&schedule(exec, branching), |k| expert::fit_with(data, &plan.subsets[k], hp, opts))
        .map_err(leaf_error)?;
    Ok(HgpTree {
        branching: branching.to_vec(),
        leaves,
        plan: plan.clone(),
        hp: hp.clone(),
        noise_placement: NoisePlacement::Root,
    })
}

/// Σ over leaves of the exact log-marginal likelihood, in leaf order.
pub fn hgp_lml(tree: &HgpTree, data: &Dataset) -> Result<f64> {
    let mut total = 0.0;
    for (k, leaf) in tree.leaves.iter().enumerate() {
        total +=
            expert::log_marginal_likelihood(leaf, data).map_err(|e| HgpError::Leaf { leaf: k, source: Box::new(e) })?;
    }
    Ok(total)
}

fn add_into(mut acc: Vec<f64>, g: Vec<f64>) -> Vec<f64> {
    if acc.is_empty() {
        return g;
    }
    for (a, b) in acc.iter_mut().zip(g) {
        *a += b;
    }
    acc
}

/// Σ over leaves of the log-marginal likelihood gradient, in leaf order.
pub fn hgp_lml_gradient(exec: &Executor, tree: &HgpTree, data: &Dataset) -> Result<Vec<f64>> {
    let grads = exec
        .map_grouped(&schedule(exec, &tree.branching), |k| expert::lml_gradient(&tree.leaves[k], data))
        .map_err(leaf_error)?;
    Ok(grads.into_iter().fold(Vec::new(), add_into))
}

/// Objective and gradient at `hp` without keeping the leaf factors.
/// Bit-identical to building the tree and calling [`hgp_lml`] and
/// [`hgp_lml_gradient`].
pub fn evaluate_objective(
    exec: &Executor,
    data: &Dataset,
    plan: &PartitionPlan,
    branching: &[usize],
    hp: &Hyperparameters,
) -> Result<(f64, Vec<f64>)> {
    validate_branching(branching, plan.num_subsets())?;
    hp.check_dim(data.dim())?;
    let terms = exec
        .map_grouped(&schedule(exec, branching), |k| expert::evaluate(data, &plan.subsets[k], hp))
        .map_err(leaf_error)?;
    let mut lml = 0.0;
    let mut grad = Vec::new();
    for (l, g) in terms {
        lml += l;
        grad = add_into(grad, g);
    }
    Ok((lml, grad))
}

/// Precision-weighted product of Gaussians.
pub fn combine_gaussians(children: &[GaussianPrediction]) -> Result<CombinedPrediction> {
    let (mean, variance) = product_moments(children)?;
    let weights = children.iter().map(|c| c.precision() * variance).collect();
    Ok(CombinedPrediction { mean, variance, weights })
}

fn product_moments(children: &[GaussianPrediction]) -> Result<(f64, f64)> {
    if children.is_empty() {
        return Err(HgpError::Empty("no gaussians to combine"));
    }
    let mut precision = 0.0;
    let mut weighted = 0.0;
    for c in children {
        if !(c.variance.is_finite() && c.variance > 0.0) {
            return Err(HgpError::InvalidGaussian(format!("variance {}", c.variance)));
        }
        let p = 1.0 / c.variance;
        precision += p;
        weighted += c.mean * p;
    }
    let variance = 1.0 / precision;
    Ok((variance * weighted, variance))
}

/// Folds leaf predictions bottom-up through the tree.
fn combine_through_tree(branching: &[usize], leaves: &[GaussianPrediction]) -> Result<(f64, f64)> {
    let mut level: Vec<GaussianPrediction> = leaves.to_vec();
    for &b in branching.iter().rev() {
        level = level
            .chunks(b)
            .map(|group| product_moments(group).map(|(mean, variance)| GaussianPrediction { mean, variance }))
            .collect::<Result<_>>()?;
    }
    debug_assert_eq!(level.len(), 1);
    Ok((level[0].mean, level[0].variance))
}

fn combine_point(tree: &HgpTree, leaf_preds: &mut [GaussianPrediction], target: Target) -> Result<CombinedPrediction> {
    let noise = tree.hp.noise_variance();
    if target == Target::Noisy && tree.noise_placement == NoisePlacement::PerLeaf {
        for p in leaf_preds.iter_mut() {
            p.variance += noise;
        }
    }
    let (mean, mut variance) = combine_through_tree(&tree.branching, leaf_preds)?;
    let total_precision: f64 = leaf_preds.iter().map(GaussianPrediction::precision).sum();
    let weights = leaf_preds.iter().map(|p| p.precision() / total_precision).collect();
    if target == Target::Noisy && tree.noise_placement == NoisePlacement::Root {
        variance += noise;
    }
    Ok(CombinedPrediction { mean, variance, weights })
}

pub fn hgp_predict(
    exec: &Executor,
    tree: &HgpTree,
    data: &Dataset,
    x_star: &[f64],
    target: Target,
) -> Result<CombinedPrediction> {
    if x_star.len() != data.dim() {
        return Err(HgpError::DimensionMismatch { expected: data.dim(), found: x_star.len() });
    }
    let x = Inputs::from_row_major(x_star.to_vec(), 1, x_star.len())?;
    Ok(batch_predict(exec, tree, data, &x, target)?.pop().expect("one prediction"))
}

/// Test points per pass; a multiple of the expert block size so a point's
/// result does not depend on how many others are predicted with it.
const POINT_CHUNK: usize = 4 * PREDICT_BLOCK;

/// Predictions at every row of `x_star`, in row order.
pub fn batch_predict(
    exec: &Executor,
    tree: &HgpTree,
    data: &Dataset,
    x_star: &Inputs,
    target: Target,
) -> Result<Vec<CombinedPrediction>> {
    predict_chunks(exec, tree, data, x_star, |tree, preds| combine_point(tree, preds, target))
}

/// As [`batch_predict`] without the per-leaf weights, for large batches.
pub fn batch_predict_moments(
    exec: &Executor,
    tree: &HgpTree,
    data: &Dataset,
    x_star: &Inputs,
    target: Target,
) -> Result<Vec<GaussianPrediction>> {
    predict_chunks(exec, tree, data, x_star, |tree, preds| combine_point(tree, preds, target).map(|c| c.gaussian()))
}

fn predict_chunks<T: Send>(
    exec: &Executor,
    tree: &HgpTree,
    data: &Dataset,
    x_star: &Inputs,
    combine: impl Fn(&HgpTree, &mut [GaussianPrediction]) -> Result<T> + Sync,
) -> Result<Vec<T>> {
    if x_star.dim() != data.dim() {
        return Err(HgpError::DimensionMismatch { expected: data.dim(), found: x_star.dim() });
    }
    let m = x_star.rows();
    let c = tree.leaves.len();
    let groups = schedule(exec, &tree.branching);
    let mut out = Vec::with_capacity(m);
    let mut start = 0;
    while start < m {
        let len = POINT_CHUNK.min(m - start);
        let chunk = Inputs::from_row_major(
            x_star.as_slice()[start * x_star.dim()..(start + len) * x_star.dim()].to_vec(),
            len,
            x_star.dim(),
        )?;
        let per_leaf =
            exec.map_grouped(&groups, |k| expert::predict_batch(&tree.leaves[k], data, &chunk)).map_err(leaf_error)?;
        let combined = exec.map(len, |i| {
            let mut preds: Vec<GaussianPrediction> = (0..c).map(|k| per_leaf[k][i]).collect();
            combine(tree, &mut preds)
        });
        out.extend(combined.map_err(|e| match e {
            HgpError::Task { index, source } => HgpError::Task { index: start + index, source },
            other => other,
        })?);
        start += len;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::partition::{assign_random, PartitionMethod};
    use crate::test_util::{random_dataset, random_hp, random_inputs, rng};
    use proptest::prelude::*;

    fn g(mean: f64, variance: f64) -> GaussianPrediction {
        GaussianPrediction { mean, variance }
    }

    fn one_subset(n: usize) -> PartitionPlan {
        PartitionPlan { subsets: vec![(0..n).collect()], sharing_factor: 1, method: PartitionMethod::Random, seed: 0 }
    }

    #[test]
    fn combine_symmetric_and_equal_variances() {
        let c = combine_gaussians(&[g(0.0, 1.0), g(0.0, 1.0)]).unwrap();
        assert_eq!((c.mean, c.variance), (0.0, 0.5));
        let c = combine_gaussians(&[g(1.0, 1.0), g(3.0, 1.0)]).unwrap();
        assert_eq!((c.mean, c.variance), (2.0, 0.5));
        assert_eq!(c.weights, vec![0.5, 0.5]);
    }

    #[test]
    fn combine_rejects_empty_and_bad_variance() {
        assert!(matches!(combine_gaussians(&[]), Err(HgpError::Empty(_))));
        assert!(combine_gaussians(&[g(0.0, 0.0)]).is_err());
    }

    #[test]
    fn branching_must_match_experts() {
        assert!(validate_branching(&[2, 2], 4).is_ok());
        let err = validate_branching(&[3, 3], 4).unwrap_err();
        assert_eq!(err.to_string(), "invalid tree: branching product 9 ≠ experts 4");
        assert!(validate_branching(&[], 1).is_err());
        assert!(validate_branching(&[0, 4], 0).is_err());
    }

    #[test]
    fn single_leaf_is_a_full_gp() {
        let mut r = rng(1);
        let data = random_dataset(&mut r, 40, 2);
        let hp = random_hp(&mut r, 2);
        let ex = Executor::with_workers(2).unwrap();
        let tree = build_tree(&ex, &data, &one_subset(40), &[1], &hp).unwrap();
        let full = expert::fit(&data, &(0..40).collect::<Vec<_>>(), &hp).unwrap();
        assert_eq!(hgp_lml(&tree, &data).unwrap(), expert::log_marginal_likelihood(&full, &data).unwrap());
        assert_eq!(hgp_lml_gradient(&ex, &tree, &data).unwrap(), expert::lml_gradient(&full, &data).unwrap());
        let x = [0.3, -0.2];
        let p = hgp_predict(&ex, &tree, &data, &x, Target::Latent).unwrap();
        let f = expert::predict(&full, &data, &x).unwrap();
        assert_eq!((p.mean, p.variance), (f.mean, f.variance));
        assert_eq!(p.weights, vec![1.0]);
        let noisy = hgp_predict(&ex, &tree, &data, &x, Target::Noisy).unwrap();
        assert_eq!(noisy.variance, f.variance + hp.noise_variance());
    }

    #[test]
    fn leaves_do_not_depend_on_shape() {
        let mut r = rng(2);
        let data = random_dataset(&mut r, 64, 2);
        let hp = random_hp(&mut r, 2);
        let plan = assign_random(64, 4, 1, 9).unwrap();
        let ex = Executor::with_workers(3).unwrap();
        let flat = build_tree(&ex, &data, &plan, &[4], &hp).unwrap();
        let deep = build_tree(&ex, &data, &plan, &[2, 2], &hp).unwrap();
        for (a, b) in flat.leaves().iter().zip(deep.leaves()) {
            assert_eq!(a.data_indices(), b.data_indices());
            assert_eq!(a.alpha(), b.alpha());
        }
        assert_eq!(hgp_lml(&flat, &data).unwrap().to_bits(), hgp_lml(&deep, &data).unwrap().to_bits());
    }

    #[test]
    fn lml_is_sum_of_leaf_gps() {
        let mut r = rng(3);
        let data = random_dataset(&mut r, 128, 2);
        let hp = random_hp(&mut r, 2);
        let plan = assign_random(128, 4, 1, 1).unwrap();
        let ex = Executor::with_workers(2).unwrap();
        let tree = build_tree(&ex, &data, &plan, &[4], &hp).unwrap();
        let oracle: f64 = plan
            .subsets
            .iter()
            .map(|s| {
                let sub = data.subset(s).unwrap();
                let all: Vec<usize> = (0..s.len()).collect();
                expert::log_marginal_likelihood(&expert::fit(&sub, &all, &hp).unwrap(), &sub).unwrap()
            })
            .sum();
        let got = hgp_lml(&tree, &data).unwrap();
        assert!((got - oracle).abs() <= 1e-12 * oracle.abs(), "{got} vs {oracle}");
        let (l, grad) = evaluate_objective(&ex, &data, &plan, &[2, 2], &hp).unwrap();
        assert_eq!(l.to_bits(), got.to_bits());
        assert_eq!(grad, hgp_lml_gradient(&ex, &tree, &data).unwrap());
    }

    #[test]
    fn gradient_matches_finite_differences_with_sharing() {
        let mut r = rng(4);
        let data = random_dataset(&mut r, 96, 2);
        let ex = Executor::with_workers(2).unwrap();
        for sharing in [1, 2] {
            let plan = assign_random(96, 4, sharing, 3).unwrap();
            let hp = random_hp(&mut r, 2);
            let (_, grad) = evaluate_objective(&ex, &data, &plan, &[4], &hp).unwrap();
            let base = hp.to_log();
            for j in 0..base.len() {
                let at = |d: f64| {
                    let mut v = base.clone();
                    v.0[j] += d;
                    evaluate_objective(&ex, &data, &plan, &[4], &v.to_natural().unwrap()).unwrap().0
                };
                let fd = (at(1e-5) - at(-1e-5)) / 2e-5;
                let rel = (fd - grad[j]).abs() / fd.abs().max(grad[j].abs()).max(1.0);
                assert!(rel < 1e-5, "s={sharing} param {j}: {fd} vs {}", grad[j]);
            }
        }
    }

    #[test]
    fn prediction_is_depth_invariant() {
        let mut r = rng(5);
        let data = random_dataset(&mut r, 128, 2);
        let hp = random_hp(&mut r, 2);
        let plan = assign_random(128, 8, 2, 4).unwrap();
        let ex = Executor::with_workers(2).unwrap();
        let flat = build_tree(&ex, &data, &plan, &[8], &hp).unwrap();
        let deep = flat.reshaped(&[2, 2, 2]).unwrap();
        let x = random_inputs(&mut r, 20, 2);
        let a = batch_predict(&ex, &flat, &data, &x, Target::Noisy).unwrap();
        let b = batch_predict(&ex, &deep, &data, &x, Target::Noisy).unwrap();
        for (p, q) in a.iter().zip(&b) {
            assert!((p.mean - q.mean).abs() < 1e-12);
            assert!((p.variance - q.variance).abs() < 1e-12);
            assert_eq!(p.weights, q.weights);
            assert!((p.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn far_away_variance_is_prior_over_c() {
        let mut r = rng(6);
        let data = random_dataset(&mut r, 64, 2);
        let hp = Hyperparameters::new(1.3, vec![0.2, 0.2], 0.1).unwrap();
        let plan = assign_random(64, 4, 1, 0).unwrap();
        let ex = Executor::with_workers(1).unwrap();
        let tree = build_tree(&ex, &data, &plan, &[4], &hp).unwrap();
        let p = hgp_predict(&ex, &tree, &data, &[50.0, 50.0], Target::Latent).unwrap();
        assert!(p.mean.abs() < 1e-12);
        assert!((p.variance - hp.signal_variance() / 4.0).abs() < 1e-12);
    }

    #[test]
    fn per_leaf_noise_shrinks_noise_term() {
        let mut r = rng(7);
        let data = random_dataset(&mut r, 64, 2);
        let hp = Hyperparameters::new(1.0, vec![0.2, 0.2], 0.3).unwrap();
        let plan = assign_random(64, 4, 1, 0).unwrap();
        let ex = Executor::with_workers(1).unwrap();
        let root = build_tree(&ex, &data, &plan, &[4], &hp).unwrap();
        let leaf = root.clone().with_noise_placement(NoisePlacement::PerLeaf);
        let a = hgp_predict(&ex, &root, &data, &[50.0, 50.0], Target::Noisy).unwrap();
        let b = hgp_predict(&ex, &leaf, &data, &[50.0, 50.0], Target::Noisy).unwrap();
        assert!((a.variance - (0.25 + 0.09)).abs() < 1e-12);
        assert!((b.variance - (1.09 / 4.0)).abs() < 1e-12);
    }

    #[test]
    fn batch_edge_cases_and_determinism() {
        let mut r = rng(8);
        let data = random_dataset(&mut r, 200, 3);
        let hp = random_hp(&mut r, 3);
        let plan = assign_random(200, 8, 1, 2).unwrap();
        let serial = Executor::with_workers(1).unwrap();
        let parallel = Executor::with_workers(4).unwrap();
        let tree = build_tree(&serial, &data, &plan, &[2, 4], &hp).unwrap();

        assert!(batch_predict(&serial, &tree, &data, &Inputs::empty(3), Target::Noisy).unwrap().is_empty());

        let one = random_inputs(&mut r, 1, 3);
        let b = batch_predict(&serial, &tree, &data, &one, Target::Latent).unwrap();
        assert_eq!(b[0], hgp_predict(&serial, &tree, &data, one.row(0), Target::Latent).unwrap());

        let many = random_inputs(&mut r, POINT_CHUNK + 33, 3);
        let s = batch_predict(&serial, &tree, &data, &many, Target::Noisy).unwrap();
        let p = batch_predict(&parallel, &tree, &data, &many, Target::Noisy).unwrap();
        assert_eq!(s, p);
        let moments = batch_predict_moments(&parallel, &tree, &data, &many, Target::Noisy).unwrap();
        assert!(moments.iter().zip(&s).all(|(m, c)| *m == c.gaussian()));

        assert!(matches!(
            hgp_predict(&serial, &tree, &data, &[0.0], Target::Latent),
            Err(HgpError::DimensionMismatch { expected: 3, found: 1 })
        ));
    }

    #[test]
    fn leaf_failure_names_the_leaf() {
        let x = Inputs::from_rows(&[[0.0], [0.0], [1.0], [2.0]]).unwrap();
        let data = Dataset::new(x, vec![1.0, 1.0, 0.0, 0.5]).unwrap();
        let hp = Hyperparameters::new(1.0, vec![1.0], 1e-12).unwrap();
        let plan = PartitionPlan {
            subsets: vec![vec![2, 3], vec![0, 1]],
            sharing_factor: 1,
            method: PartitionMethod::Random,
            seed: 0,
        };
        let opts = FitOptions { jitter_start: 1e-30, jitter_max: 1e-30, ..Default::default() };
        let ex = Executor::with_workers(1).unwrap();
        let err = build_tree_with(&ex, &data, &plan, &[2], &hp, &opts).unwrap_err();
        assert!(matches!(err, HgpError::Leaf { leaf: 1, .. }), "{err}");
        assert!(err.is_numerical());
    }

    proptest! {
        #[test]
        fn combination_is_associative(
            parts in prop::collection::vec((-5.0f64..5.0, 0.01f64..4.0), 4)
        ) {
            let gs: Vec<GaussianPrediction> = parts.iter().map(|&(m, v)| g(m, v)).collect();
            let ab = combine_gaussians(&gs[..2]).unwrap().gaussian();
            let cd = combine_gaussians(&gs[2..]).unwrap().gaussian();
            let nested = combine_gaussians(&[ab, cd]).unwrap();
            let flat = combine_gaussians(&gs).unwrap();
            prop_assert!((nested.mean - flat.mean).abs() < 1e-12);
            prop_assert!((nested.variance - flat.variance).abs() < 1e-12);
            // precision adds and weights are a distribution
            let prec: f64 = gs.iter().map(|g| 1.0 / g.variance).sum();
            prop_assert!((1.0 / flat.variance - prec).abs() <= 1e-12 * prec);
            prop_assert!(flat.variance <= gs.iter().map(|g| g.variance).fold(f64::INFINITY, f64::min));
            prop_assert!((flat.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(flat.weights.iter().all(|&w| w >= 0.0));
        }

        #[test]
        fn larger_variance_never_gains_weight(
            parts in prop::collection::vec((-5.0f64..5.0, 0.01f64..4.0), 2..6),
            bump in 0.0f64..10.0,
        ) {
            let gs: Vec<GaussianPrediction> = parts.iter().map(|&(m, v)| g(m, v)).collect();
            let before = combine_gaussians(&gs).unwrap().weights[0];
            let mut changed = gs.clone();
            changed[0].variance += bump;
            let after = combine_gaussians(&changed).unwrap().weights[0];
            prop_assert!(after <= before + 1e-15);
        }
    }
}
