//! Data sampled from a GP prior, for tests and benchmarks.
//!
//! Inputs are uniform on the unit cube. Small problems draw the latent
//! function exactly through a Cholesky factor of the joint kernel matrix;
//! large ones use a random Fourier feature approximation of the SE-ARD
//! kernel, which costs O(N·M·D) instead of O(N³).

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Inputs};
use crate::error::{HgpError, Result};
use crate::expert::try_cholesky;
use crate::kernel::{fill_kernel_matrix, Hyperparameters};

/// Largest joint sample drawn exactly under [`SampleMethod::Auto`].
pub const EXACT_LIMIT: usize = 6000;
pub const DEFAULT_FEATURES: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleMethod {
    /// Exact below [`EXACT_LIMIT`] points, Fourier features above.
    Auto,
    Exact,
    Fourier {
        features: usize,
    },
}

fn uniform_inputs(rng: &mut ChaCha8Rng, n: usize, dim: usize, extent: f64) -> Result<Inputs> {
    if n == 0 {
        return Ok(Inputs::empty(dim));
    }
    let v = (0..n * dim).map(|_| extent * rng.random::<f64>()).collect();
    Inputs::from_row_major(v, n, dim)
}

/// One draw of the latent function at every row of `x`.
pub fn sample_latent(x: &Inputs, hp: &Hyperparameters, method: SampleMethod, seed: u64) -> Result<Vec<f64>> {
    hp.check_dim(x.dim())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let method = match method {
        SampleMethod::Auto if x.rows() <= EXACT_LIMIT => SampleMethod::Exact,
        SampleMethod::Auto => SampleMethod::Fourier { features: DEFAULT_FEATURES },
        m => m,
    };
    match method {
        SampleMethod::Exact => exact(x, hp, &mut rng),
        SampleMethod::Fourier { features } => fourier(x, hp, features, &mut rng),
        SampleMethod::Auto => unreachable!(),
    }
}

fn exact(x: &Inputs, hp: &Hyperparameters, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    let n = x.rows();
    if n == 0 {
        return Ok(Vec::new());
    }
    let rows: Vec<&[f64]> = x.iter_rows().collect();
    let mut k = Mat::zeros(n, n);
    fill_kernel_matrix(&mut k, &rows, hp);
    let sf2 = hp.signal_variance();
    // escalate on the ratio so an overflowing σ_f² still terminates
    let mut ratio = 1e-10;
    let l = loop {
        let jitter = ratio * sf2;
        let mut kj = k.clone();
        for i in 0..n {
            kj[(i, i)] += jitter;
        }
        if let Some(l) = try_cholesky(&kj) {
            break l;
        }
        if ratio >= 1e-4 {
            return Err(HgpError::CholeskyFailed { jitter });
        }
        ratio *= 10.0;
    };
    let z: Vec<f64> = (0..n).map(|_| StandardNormal.sample(rng)).collect();
    Ok((0..n).map(|i| (0..=i).map(|j| l[(i, j)] * z[j]).sum()).collect())
}

fn fourier(x: &Inputs, hp: &Hyperparameters, features: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if features == 0 {
        return Err(HgpError::Config("fourier sampler needs at least one feature".into()));
    }
    let d = x.dim();
    let omega: Vec<f64> = (0..features * d)
        .map(|i| {
            let z: f64 = StandardNormal.sample(rng);
            z / hp.lengthscales()[i % d]
        })
        .collect();
    let phase: Vec<f64> = (0..features).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
    let weight: Vec<f64> = (0..features).map(|_| StandardNormal.sample(rng)).collect();
    let scale = hp.sigma_f() * (2.0 / features as f64).sqrt();
    Ok(x.iter_rows()
        .map(|row| {
            let mut f = 0.0;
            for m in 0..features {
                let w = &omega[m * d..(m + 1) * d];
                let arg: f64 = w.iter().zip(row).map(|(a, b)| a * b).sum::<f64>() + phase[m];
                f += weight[m] * arg.cos();
            }
            scale * f
        })
        .collect())
}

/// Training and test sets observed from the same function draw, with
/// Gaussian noise of variance σ_ε² added to every target. Inputs are
/// uniform on the unit cube.
pub fn synthetic_split(
    n_train: usize,
    n_test: usize,
    hp: &Hyperparameters,
    method: SampleMethod,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    synthetic_split_in(n_train, n_test, hp, method, 1.0, seed)
}

/// As [`synthetic_split`] with inputs uniform on `[0, extent)^D`.
pub fn synthetic_split_in(
    n_train: usize,
    n_test: usize,
    hp: &Hyperparameters,
    method: SampleMethod,
    extent: f64,
    seed: u64,
) -> Result<(Dataset, Dataset)> {
    if n_train == 0 {
        return Err(HgpError::Empty("training set"));
    }
    if !(extent.is_finite() && extent > 0.0) {
        return Err(HgpError::Config(format!("input extent must be positive, got {extent}")));
    }
    let dim = hp.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_train + n_test;
    let x = uniform_inputs(&mut rng, n, dim, extent)?;
    let f = sample_latent(&x, hp, method, rng.random())?;
    let y: Vec<f64> = f
        .iter()
        .map(|v| {
            let z: f64 = StandardNormal.sample(&mut rng);
            v + hp.sigma_eps() * z
        })
        .collect();
    let flat = x.as_slice();
    let train =
        Dataset::new(Inputs::from_row_major(flat[..n_train * dim].to_vec(), n_train, dim)?, y[..n_train].to_vec())?;
    let test = if n_test == 0 {
        Dataset::empty(dim)
    } else {
        Dataset::new(Inputs::from_row_major(flat[n_train * dim..].to_vec(), n_test, dim)?, y[n_train..].to_vec())?
    };
    Ok((train, test))
}

/// A single noisy training set.
pub fn synthetic_dataset(n: usize, hp: &Hyperparameters, seed: u64) -> Result<Dataset> {
    synthetic_split(n, 0, hp, SampleMethod::Auto, seed).map(|(train, _)| train)
}
