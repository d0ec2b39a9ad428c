//! Assignment of training points to experts.
//!
//! Two constructions are provided. The striped one first cuts the input space
//! into KD-tree regions, splits every region into `c` random groups, and gives
//! expert `k` group `k` of every region, so each expert sees the whole input
//! space. The random one deals a shuffled index list round-robin. Both can
//! place every point in `s` experts instead of one.

use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Inputs;
use crate::error::{HgpError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartitionMethod {
    KdtreeStriped,
    Random,
}

impl fmt::Display for PartitionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PartitionMethod::KdtreeStriped => "kdtree_striped",
            PartitionMethod::Random => "random",
        })
    }
}

/// Index subsets assigned to the leaf experts, leaf `k` ↔ `subsets[k]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionPlan {
    pub subsets: Vec<Vec<usize>>,
    pub sharing_factor: usize,
    pub method: PartitionMethod,
    pub seed: u64,
}

impl PartitionPlan {
    pub fn num_subsets(&self) -> usize {
        self.subsets.len()
    }

    /// Σ_k |D^(k)|, equal to `s·N` for a valid plan.
    pub fn total_assignments(&self) -> usize {
        self.subsets.iter().map(Vec::len).sum()
    }

    pub fn max_subset_len(&self) -> usize {
        self.subsets.iter().map(Vec::len).max().unwrap_or(0)
    }

    pub fn min_subset_len(&self) -> usize {
        self.subsets.iter().map(Vec::len).min().unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Split {
    pub dim: usize,
    pub threshold: f64,
}

/// A leaf cell of the KD-tree.
#[derive(Debug, Clone, PartialEq)]
pub struct KdRegion {
    pub indices: Vec<usize>,
    /// One entry per level, root first. Points at or below the threshold went left.
    pub splits: Vec<(Split, Side)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    Left,
    Right,
}

fn widest_dimension(x: &Inputs, indices: &[usize]) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for d in 0..x.dim() {
        let (lo, hi) = indices.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
            let v = x.row(i)[d];
            (lo.min(v), hi.max(v))
        });
        if hi - lo > best.1 {
            best = (d, hi - lo);
        }
    }
    best.0
}

/// Recursively halves the input space at the median of the widest dimension
/// until `num_regions` cells exist. Regions come back in depth-first order.
pub fn build_kdtree_regions(x: &Inputs, num_regions: usize) -> Result<Vec<KdRegion>> {
    if num_regions == 0 || !num_regions.is_power_of_two() {
        return Err(HgpError::Partition(format!("number of regions must be a power of 2, got {num_regions}")));
    }
    if num_regions > x.rows() {
        return Err(HgpError::Partition(format!("cannot build {num_regions} regions from {} points", x.rows())));
    }
    let mut regions = vec![KdRegion { indices: (0..x.rows()).collect(), splits: Vec::new() }];
    while regions.len() < num_regions {
        let mut next = Vec::with_capacity(regions.len() * 2);
        for mut region in regions {
            let dim = widest_dimension(x, &region.indices);
            region.indices.sort_by(|&a, &b| x.row(a)[dim].total_cmp(&x.row(b)[dim]).then(a.cmp(&b)));
            let left_len = region.indices.len().div_ceil(2);
            let threshold = x.row(region.indices[left_len - 1])[dim];
            let right = region.indices.split_off(left_len);
            let split = Split { dim, threshold };
            let mut left_splits = region.splits.clone();
            left_splits.push((split, Side::Left));
            let mut right_splits = region.splits;
            right_splits.push((split, Side::Right));
            next.push(KdRegion { indices: region.indices, splits: left_splits });
            next.push(KdRegion { indices: right, splits: right_splits });
        }
        regions = next;
    }
    Ok(regions)
}

fn check_sharing(c: usize, sharing: usize) -> Result<()> {
    if c == 0 {
        return Err(HgpError::Partition("at least one subset required".into()));
    }
    if sharing == 0 || sharing > c {
        return Err(HgpError::Partition(format!("sharing factor {sharing} must lie in 1..={c}")));
    }
    Ok(())
}

/// Splits every region into `p_groups` random groups and gives subset `k`
/// group `k` of every region. With `sharing > 1`, a point in group `g` also
/// joins subsets `g+1, …, g+sharing−1` (mod `p_groups`).
///
/// Remainders are handed out one per group with a cursor that carries over
/// between regions, so subset sizes stay within `sharing` of each other.
pub fn assign_striped(regions: &[KdRegion], p_groups: usize, sharing: usize, seed: u64) -> Result<PartitionPlan> {
    check_sharing(p_groups, sharing)?;
    let min_region = regions.iter().map(|r| r.indices.len()).min().unwrap_or(0);
    if regions.is_empty() || p_groups > min_region {
        return Err(HgpError::Partition(format!(
            "{p_groups} groups requested but the smallest region has {min_region} points"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subsets = vec![Vec::new(); p_groups];
    let mut cursor = 0;
    for region in regions {
        let mut shuffled = region.indices.clone();
        shuffled.shuffle(&mut rng);
        let base = shuffled.len() / p_groups;
        let extra = shuffled.len() % p_groups;
        let mut rest = shuffled.as_slice();
        for g in 0..p_groups {
            let len = base + usize::from((g + p_groups - cursor) % p_groups < extra);
            let (group, tail) = rest.split_at(len);
            rest = tail;
            for r in 0..sharing {
                subsets[(g + r) % p_groups].extend_from_slice(group);
            }
        }
        cursor = (cursor + extra) % p_groups;
    }
    for s in &mut subsets {
        s.sort_unstable();
    }
    Ok(PartitionPlan { subsets, sharing_factor: sharing, method: PartitionMethod::KdtreeStriped, seed })
}

/// Deals a seeded shuffle of `0..n` round-robin over `c` subsets; copy `r` of
/// the point at shuffled position `i` goes to subset `(i + r) mod c`.
pub fn assign_random(n: usize, c: usize, sharing: usize, seed: u64) -> Result<PartitionPlan> {
    check_sharing(c, sharing)?;
    if n < c {
        return Err(HgpError::Partition(format!("{c} subsets requested from {n} points")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng);
    let mut subsets = vec![Vec::with_capacity(sharing * n.div_ceil(c)); c];
    for (pos, &idx) in order.iter().enumerate() {
        for r in 0..sharing {
            subsets[(pos + r) % c].push(idx);
        }
    }
    for s in &mut subsets {
        s.sort_unstable();
    }
    Ok(PartitionPlan { subsets, sharing_factor: sharing, method: PartitionMethod::Random, seed })
}

/// Largest power of two not exceeding `n / c`, at least 1.
pub fn default_region_count(n: usize, c: usize) -> usize {
    let per = (n / c.max(1)).max(1);
    1usize << (usize::BITS - 1 - per.leading_zeros())
}

/// Builds a plan with `c` subsets by either method. `regions` overrides the
/// KD-tree region count.
pub fn build_plan(
    x: &Inputs,
    method: PartitionMethod,
    c: usize,
    sharing: usize,
    seed: u64,
    regions: Option<usize>,
) -> Result<PartitionPlan> {
    match method {
        PartitionMethod::Random => assign_random(x.rows(), c, sharing, seed),
        PartitionMethod::KdtreeStriped => {
            if c == 0 || c > x.rows() {
                return Err(HgpError::Partition(format!("{c} subsets requested from {} points", x.rows())));
            }
            let regions = build_kdtree_regions(x, regions.unwrap_or_else(|| default_region_count(x.rows(), c)))?;
            assign_striped(&regions, c, sharing, seed)
        }
    }
}

/// First problem found in a plan.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlanViolation {
    NoSubsets,
    ZeroSharing,
    EmptySubset { subset: usize },
    OutOfRange { subset: usize, index: usize },
    DuplicateInSubset { subset: usize, index: usize },
    Coverage { index: usize, count: usize, expected: usize },
}

impl fmt::Display for PlanViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlanViolation::NoSubsets => write!(f, "plan has no subsets"),
            PlanViolation::ZeroSharing => write!(f, "sharing factor is 0"),
            PlanViolation::EmptySubset { subset } => write!(f, "subset {subset} is empty"),
            PlanViolation::OutOfRange { subset, index } => {
                write!(f, "subset {subset} holds out-of-range index {index}")
            }
            PlanViolation::DuplicateInSubset { subset, index } => {
                write!(f, "subset {subset} holds index {index} more than once")
            }
            PlanViolation::Coverage { index, count, expected } => {
                write!(f, "index {index} covered {count} times, expected {expected}")
            }
        }
    }
}

pub fn validate_plan(plan: &PartitionPlan, n: usize) -> std::result::Result<(), PlanViolation> {
    if plan.subsets.is_empty() {
        return Err(PlanViolation::NoSubsets);
    }
    if plan.sharing_factor == 0 {
        return Err(PlanViolation::ZeroSharing);
    }
    let mut count = vec![0usize; n];
    let mut last_seen = vec![usize::MAX; n];
    for (k, subset) in plan.subsets.iter().enumerate() {
        if subset.is_empty() {
            return Err(PlanViolation::EmptySubset { subset: k });
        }
        for &i in subset {
            if i >= n {
                return Err(PlanViolation::OutOfRange { subset: k, index: i });
            }
            if last_seen[i] == k {
                return Err(PlanViolation::DuplicateInSubset { subset: k, index: i });
            }
            last_seen[i] = k;
            count[i] += 1;
        }
    }
    match count.iter().position(|&c| c != plan.sharing_factor) {
        Some(index) => Err(PlanViolation::Coverage { index, count: count[index], expected: plan.sharing_factor }),
        None => Ok(()),
    }
}
