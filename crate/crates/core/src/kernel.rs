//! Squared-exponential ARD covariance.
//!
//! `k(a, b) = σ_f² exp(−½ Σ_d (a_d − b_d)² / l_d²)`
//!
//! Derivatives are taken with respect to the natural logs of the
//! hyperparameters so the optimizer can work without positivity constraints.
//! The noise term `σ_ε² I` is never added here; callers add it where needed.

use faer::Mat;
use serde::{Deserialize, Serialize};

use crate::data::Inputs;
use crate::error::{HgpError, Result};

/// Kernel and likelihood parameters shared by every expert.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hyperparameters {
    sigma_f: f64,
    lengthscales: Vec<f64>,
    sigma_eps: f64,
}

impl Hyperparameters {
    pub fn new(sigma_f: f64, lengthscales: Vec<f64>, sigma_eps: f64) -> Result<Self> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        if lengthscales.is_empty() {
            return Err(HgpError::InvalidHyperparameters("at least one lengthscale required".into()));
        }
        if !ok(sigma_f) {
            return Err(HgpError::InvalidHyperparameters(format!("sigma_f = {sigma_f}")));
        }
        if !ok(sigma_eps) {
            return Err(HgpError::InvalidHyperparameters(format!("sigma_eps = {sigma_eps}")));
        }
        if let Some((d, l)) = lengthscales.iter().enumerate().find(|(_, &l)| !ok(l)) {
            return Err(HgpError::InvalidHyperparameters(format!("lengthscale[{d}] = {l}")));
        }
        Ok(Self { sigma_f, lengthscales, sigma_eps })
    }

    /// Same lengthscale in every one of `dim` dimensions.
    pub fn isotropic(sigma_f: f64, lengthscale: f64, sigma_eps: f64, dim: usize) -> Result<Self> {
        Self::new(sigma_f, vec![lengthscale; dim], sigma_eps)
    }

    pub fn sigma_f(&self) -> f64 {
        self.sigma_f
    }

    pub fn sigma_eps(&self) -> f64 {
        self.sigma_eps
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    pub fn signal_variance(&self) -> f64 {
        self.sigma_f * self.sigma_f
    }

    pub fn noise_variance(&self) -> f64 {
        self.sigma_eps * self.sigma_eps
    }

    /// Number of free parameters, D + 2.
    pub fn len(&self) -> usize {
        self.lengthscales.len() + 2
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn to_log(&self) -> LogHyperparameters {
        let mut v = Vec::with_capacity(self.len());
        v.push(self.sigma_f.ln());
        v.extend(self.lengthscales.iter().map(|l| l.ln()));
        v.push(self.sigma_eps.ln());
        LogHyperparameters(v)
    }

    pub fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.dim() {
            return Err(HgpError::DimensionMismatch { expected: self.dim(), found: dim });
        }
        Ok(())
    }
}

/// Componentwise natural log of `(σ_f, l_1..l_D, σ_ε)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogHyperparameters(pub Vec<f64>);

impl LogHyperparameters {
    pub fn to_natural(&self) -> Result<Hyperparameters> {
        let v = &self.0;
        if v.len() < 3 {
            return Err(HgpError::InvalidHyperparameters(format!("{} log-parameters, need at least 3", v.len())));
        }
        let n = v.len();
        Hyperparameters::new(v[0].exp(), v[1..n - 1].iter().map(|x| x.exp()).collect(), v[n - 1].exp())
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `Σ_d ((a_d − b_d)/l_d)²`, scaling before squaring.
#[inline]
pub(crate) fn scaled_sq_dist(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((x, y), l)| {
            let t = (x - y) / l;
            t * t
        })
        .sum()
}

#[inline]
pub(crate) fn eval_unchecked(a: &[f64], b: &[f64], hp: &Hyperparameters) -> f64 {
    hp.signal_variance() * (-0.5 * scaled_sq_dist(a, b, &hp.lengthscales)).exp()
}

pub fn kernel_eval(a: &[f64], b: &[f64], hp: &Hyperparameters) -> Result<f64> {
    if a.len() != b.len() {
        return Err(HgpError::DimensionMismatch { expected: a.len(), found: b.len() });
    }
    hp.check_dim(a.len())?;
    Ok(eval_unchecked(a, b, hp))
}

/// Fills `out` with the kernel matrix over `rows`. Symmetric, written in full.
pub(crate) fn fill_kernel_matrix(out: &mut Mat<f64>, rows: &[&[f64]], hp: &Hyperparameters) {
    let n = rows.len();
    let sf2 = hp.signal_variance();
    for j in 0..n {
        out[(j, j)] = sf2;
        for i in (j + 1)..n {
            let k = eval_unchecked(rows[i], rows[j], hp);
            out[(i, j)] = k;
            out[(j, i)] = k;
        }
    }
}

pub fn kernel_matrix(x: &Inputs, hp: &Hyperparameters) -> Result<Mat<f64>> {
    hp.check_dim(x.dim())?;
    let rows: Vec<&[f64]> = x.iter_rows().collect();
    let mut k = Mat::zeros(rows.len(), rows.len());
    fill_kernel_matrix(&mut k, &rows, hp);
    Ok(k)
}

/// Derivatives of `K + σ_ε² I` with respect to `log σ_f`, each `log l_d`, and `log σ_ε`,
/// in that order.
pub fn kernel_matrix_gradients(x: &Inputs, hp: &Hyperparameters) -> Result<Vec<Mat<f64>>> {
    let k = kernel_matrix(x, hp)?;
    let n = x.rows();
    let mut out = Vec::with_capacity(hp.len());
    out.push(Mat::from_fn(n, n, |i, j| 2.0 * k[(i, j)]));
    for (d, &l) in hp.lengthscales.iter().enumerate() {
        out.push(Mat::from_fn(n, n, |i, j| {
            let t = (x.row(i)[d] - x.row(j)[d]) / l;
            k[(i, j)] * t * t
        }));
    }
    let s2 = 2.0 * hp.noise_variance();
    out.push(Mat::from_fn(n, n, |i, j| if i == j { s2 } else { 0.0 }));
    Ok(out)
}

pub fn kernel_vector(x_star: &[f64], x: &Inputs, hp: &Hyperparameters) -> Result<Vec<f64>> {
    if x_star.len() != x.dim() {
        return Err(HgpError::DimensionMismatch { expected: x.dim(), found: x_star.len() });
    }
    hp.check_dim(x.dim())?;
    Ok(x.iter_rows().map(|r| eval_unchecked(x_star, r, hp)).collect())
}
