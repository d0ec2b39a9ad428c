//! Exact GP computations on one data subset.
//!
//! An expert factors `K̃ = K + σ_ε² I` once at fit time and caches the
//! Cholesky factor and `α = K̃⁻¹ y`, after which the predictive mean costs
//! O(p) and the variance O(p²) per test point.

use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::cholesky::llt;
use faer::linalg::triangular_solve::solve_lower_triangular_in_place;
use faer::{Mat, MatRef, Par};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, Inputs};
use crate::error::{HgpError, Result};
use crate::kernel::{eval_unchecked, fill_kernel_matrix, Hyperparameters};

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Test points are pushed through the triangular solve in blocks of this many
/// columns. Fixed so results never depend on how work was scheduled.
pub const PREDICT_BLOCK: usize = 256;

/// Predictive mean and variance at a single test input.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianPrediction {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianPrediction {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !mean.is_finite() || !variance.is_finite() || variance <= 0.0 {
            return Err(HgpError::InvalidGaussian(format!("mean {mean}, variance {variance}")));
        }
        Ok(Self { mean, variance })
    }

    pub fn precision(&self) -> f64 {
        1.0 / self.variance
    }
}

/// Numerical policy for fitting an expert.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    /// Predictive variances are clamped from below at this multiple of σ_f².
    pub variance_floor_ratio: f64,
    /// First diagonal jitter tried, as a multiple of σ_f².
    pub jitter_start: f64,
    /// Largest jitter tried before giving up, as a multiple of σ_f².
    pub jitter_max: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { variance_floor_ratio: 1e-12, jitter_start: 1e-8, jitter_max: 1e-2 }
    }
}

/// A fitted leaf: Cholesky factor of `K̃` plus the solve vector.
#[derive(Debug, Clone)]
pub struct ExpertState {
    data_indices: Vec<usize>,
    chol: Mat<f64>,
    alpha: Vec<f64>,
    hp: Hyperparameters,
    jitter: f64,
    variance_floor: f64,
}

impl ExpertState {
    pub fn data_indices(&self) -> &[usize] {
        &self.data_indices
    }

    /// Lower-triangular factor; the strict upper triangle is zero.
    pub fn chol(&self) -> MatRef<'_, f64> {
        self.chol.as_ref()
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    pub fn hyperparameters(&self) -> &Hyperparameters {
        &self.hp
    }

    /// Absolute jitter that had to be added to the diagonal, zero if none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    pub fn len(&self) -> usize {
        self.data_indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data_indices.is_empty()
    }

    pub fn variance_floor(&self) -> f64 {
        self.variance_floor
    }
}

pub(crate) fn try_cholesky(a: &Mat<f64>) -> Option<Mat<f64>> {
    let n = a.nrows();
    let mut l = a.clone();
    let mut buf = MemBuffer::new(llt::factor::cholesky_in_place_scratch::<f64>(n, Par::Seq, Default::default()));
    let stack = MemStack::new(&mut buf);
    llt::factor::cholesky_in_place(l.as_mut(), Default::default(), Par::Seq, stack, Default::default()).ok()?;
    for j in 0..n {
        if !(l[(j, j)].is_finite() && l[(j, j)] > 0.0) {
            return None;
        }
        for i in 0..j {
            l[(i, j)] = 0.0;
        }
    }
    Some(l)
}

/// Factors `k_noisy`, escalating diagonal jitter on failure. Returns the
/// factor and the jitter used.
fn factor_with_jitter(mut k_noisy: Mat<f64>, sf2: f64, opts: &FitOptions) -> Result<(Mat<f64>, f64)> {
    if let Some(l) = try_cholesky(&k_noisy) {
        return Ok((l, 0.0));
    }
    let n = k_noisy.nrows();
    let mut ratio = opts.jitter_start;
    let mut applied = 0.0;
    loop {
        let jitter = ratio * sf2;
        for i in 0..n {
            k_noisy[(i, i)] += jitter - applied;
        }
        applied = jitter;
        if let Some(l) = try_cholesky(&k_noisy) {
            return Ok((l, jitter));
        }
        if ratio >= opts.jitter_max * (1.0 - 1e-12) {
            return Err(HgpError::CholeskyFailed { jitter });
        }
        ratio *= 10.0;
    }
}

fn check_indices(data: &Dataset, indices: &[usize]) -> Result<()> {
    if indices.is_empty() {
        return Err(HgpError::Empty("expert subset"));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= data.len()) {
        return Err(HgpError::InvalidDataset(format!("index {bad} out of range for {} rows", data.len())));
    }
    Ok(())
}

pub fn fit(data: &Dataset, indices: &[usize], hp: &Hyperparameters) -> Result<ExpertState> {
    fit_with(data, indices, hp, &FitOptions::default())
}

pub fn fit_with(data: &Dataset, indices: &[usize], hp: &Hyperparameters, opts: &FitOptions) -> Result<ExpertState> {
    check_indices(data, indices)?;
    hp.check_dim(data.dim())?;
    let p = indices.len();
    let rows = data.inputs().select(indices);
    let mut k = Mat::zeros(p, p);
    fill_kernel_matrix(&mut k, &rows, hp);
    let s2 = hp.noise_variance();
    for i in 0..p {
        k[(i, i)] += s2;
    }
    let sf2 = hp.signal_variance();
    let (chol, jitter) = factor_with_jitter(k, sf2, opts)?;

    let mut rhs = Mat::from_fn(p, 1, |i, _| data.targets()[indices[i]]);
    let mut buf = MemBuffer::new(llt::solve::solve_in_place_scratch::<f64>(p, 1, Par::Seq));
    llt::solve::solve_in_place(chol.as_ref(), rhs.as_mut(), Par::Seq, MemStack::new(&mut buf));
    let alpha: Vec<f64> = (0..p).map(|i| rhs[(i, 0)]).collect();
    if alpha.iter().any(|a| !a.is_finite()) {
        return Err(HgpError::CholeskyFailed { jitter });
    }

    Ok(ExpertState {
        data_indices: indices.to_vec(),
        chol,
        alpha,
        hp: hp.clone(),
        jitter,
        variance_floor: opts.variance_floor_ratio * sf2,
    })
}

/// `−½ yᵀα − Σ log L_ii − (p/2) log 2π`, constant included.
pub fn log_marginal_likelihood(state: &ExpertState, data: &Dataset) -> Result<f64> {
    check_indices(data, &state.data_indices)?;
    let y = data.targets();
    let data_fit: f64 = state.data_indices.iter().zip(&state.alpha).map(|(&i, a)| y[i] * a).sum();
    let log_det_half: f64 = (0..state.len()).map(|i| state.chol[(i, i)].ln()).sum();
    Ok(-0.5 * data_fit - log_det_half - 0.5 * state.len() as f64 * LN_2PI)
}

/// Gradient of the log-marginal likelihood in log-parameter coordinates,
/// ordered `(σ_f, l_1..l_D, σ_ε)`.
///
/// Each component is `½ tr((ααᵀ − K̃⁻¹) ∂K̃/∂θ)`; the derivative matrices are
/// never materialized, each kernel entry is recomputed once and feeds every
/// component.
pub fn lml_gradient(state: &ExpertState, data: &Dataset) -> Result<Vec<f64>> {
    check_indices(data, &state.data_indices)?;
    let p = state.len();
    let hp = &state.hp;
    let dim = hp.dim();

    // K̃⁻¹ assembled from the Cholesky factor; only the lower triangle is written.
    let mut inv = Mat::<f64>::zeros(p, p);
    let mut buf = MemBuffer::new(llt::inverse::inverse_scratch::<f64>(p, Par::Seq));
    llt::inverse::inverse(inv.as_mut(), state.chol.as_ref(), Par::Seq, MemStack::new(&mut buf));

    let rows = data.inputs().select(&state.data_indices);
    let alpha = &state.alpha;
    let sf2 = hp.signal_variance();
    let inv_l: Vec<f64> = hp.lengthscales().iter().map(|l| 1.0 / l).collect();

    let mut g_sf = 0.0;
    let mut g_eps = 0.0;
    let mut g_l = vec![0.0; dim];
    let mut t2 = vec![0.0; dim];
    for j in 0..p {
        let c_jj = alpha[j] * alpha[j] - inv[(j, j)];
        g_sf += c_jj * sf2;
        g_eps += c_jj;
        let xj = rows[j];
        for i in (j + 1)..p {
            let xi = rows[i];
            let mut r2 = 0.0;
            for d in 0..dim {
                let t = (xi[d] - xj[d]) * inv_l[d];
                t2[d] = t * t;
                r2 += t2[d];
            }
            let k = sf2 * (-0.5 * r2).exp();
            // off-diagonal pairs appear twice in the trace
            let ck = 2.0 * (alpha[i] * alpha[j] - inv[(i, j)]) * k;
            g_sf += ck;
            for d in 0..dim {
                g_l[d] += ck * t2[d];
            }
        }
    }

    let mut grad = Vec::with_capacity(dim + 2);
    // ∂K̃/∂log σ_f = 2K
    grad.push(g_sf);
    grad.extend(g_l.iter().map(|g| 0.5 * g));
    // ∂K̃/∂log σ_ε = 2σ_ε² I
    grad.push(g_eps * hp.noise_variance());
    Ok(grad)
}

/// Fits, evaluates the LML and its gradient, and drops the factor.
pub fn evaluate(data: &Dataset, indices: &[usize], hp: &Hyperparameters) -> Result<(f64, Vec<f64>)> {
    let state = fit(data, indices, hp)?;
    Ok((log_marginal_likelihood(&state, data)?, lml_gradient(&state, data)?))
}

/// Latent-f predictive distribution at one input.
pub fn predict(state: &ExpertState, data: &Dataset, x_star: &[f64]) -> Result<GaussianPrediction> {
    let x = Inputs::from_row_major(x_star.to_vec(), 1, x_star.len().max(1))
        .map_err(|_| HgpError::DimensionMismatch { expected: data.dim(), found: x_star.len() })?;
    Ok(predict_batch(state, data, &x)?[0])
}

/// Latent-f predictive distributions at every row of `x_star`.
///
/// Variances are clamped to `[variance_floor, σ_f²]`.
pub fn predict_batch(state: &ExpertState, data: &Dataset, x_star: &Inputs) -> Result<Vec<GaussianPrediction>> {
    if x_star.dim() != data.dim() {
        return Err(HgpError::DimensionMismatch { expected: data.dim(), found: x_star.dim() });
    }
    check_indices(data, &state.data_indices)?;
    let hp = &state.hp;
    let sf2 = hp.signal_variance();
    let rows = data.inputs().select(&state.data_indices);
    let p = rows.len();
    let m = x_star.rows();
    let mut out = Vec::with_capacity(m);

    let mut start = 0;
    while start < m {
        let width = PREDICT_BLOCK.min(m - start);
        let mut ks = Mat::from_fn(p, width, |i, c| eval_unchecked(x_star.row(start + c), rows[i], hp));
        let means: Vec<f64> = (0..width).map(|c| (0..p).map(|i| ks[(i, c)] * state.alpha[i]).sum()).collect();
        solve_lower_triangular_in_place(state.chol.as_ref(), ks.as_mut(), Par::Seq);
        for (c, mean) in means.into_iter().enumerate() {
            let explained: f64 = (0..p).map(|i| ks[(i, c)] * ks[(i, c)]).sum();
            let variance = (sf2 - explained).clamp(state.variance_floor, sf2);
            out.push(GaussianPrediction { mean, variance });
        }
        start += width;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::kernel_matrix;
    use crate::test_util::{dense_inverse_logdet, random_dataset, random_hp, rng};

    fn scalar_data(y: f64) -> Dataset {
        Dataset::new(Inputs::from_rows(&[[0.5]]).unwrap(), vec![y]).unwrap()
    }

    fn noisy_kernel(data: &Dataset, hp: &Hyperparameters) -> Mat<f64> {
        let k = kernel_matrix(data.inputs(), hp).unwrap();
        let n = data.len();
        Mat::from_fn(n, n, |i, j| k[(i, j)] + if i == j { hp.noise_variance() } else { 0.0 })
    }

    fn all(n: usize) -> Vec<usize> {
        (0..n).collect()
    }

    #[test]
    fn scalar_fit() {
        let hp = Hyperparameters::new(1.0, vec![1.0], 1.0).unwrap();
        let s = fit(&scalar_data(2.0), &[0], &hp).unwrap();
        assert!((s.chol()[(0, 0)] - 2f64.sqrt()).abs() < 1e-15);
        assert!((s.alpha()[0] - 1.0).abs() < 1e-15);
        assert_eq!(s.jitter(), 0.0);
    }

    #[test]
    fn scalar_lml() {
        let hp = Hyperparameters::new(1.0, vec![1.0], 1.0).unwrap();
        let data = scalar_data(1.0);
        let s = fit(&data, &[0], &hp).unwrap();
        let v = log_marginal_likelihood(&s, &data).unwrap();
        let expect = -0.25 - 0.5 * 2f64.ln() - 0.5 * LN_2PI;
        assert!((v - expect).abs() < 1e-14 && (v + 1.515512).abs() < 1e-6, "{v}");

        let hp = Hyperparameters::new(0.7, vec![1.0], 0.4).unwrap();
        let data = scalar_data(0.0);
        let s = fit(&data, &[0], &hp).unwrap();
        let expect = -0.5 * (0.49f64 + 0.16).ln() - 0.5 * LN_2PI;
        assert!((log_marginal_likelihood(&s, &data).unwrap() - expect).abs() < 1e-14);
    }

    #[test]
    fn scalar_noise_gradient() {
        let hp = Hyperparameters::new(1.0, vec![1.0], 1.0).unwrap();
        let data = scalar_data(0.0);
        let s = fit(&data, &[0], &hp).unwrap();
        let g = lml_gradient(&s, &data).unwrap();
        assert!((g[2] + 0.5).abs() < 1e-15, "{g:?}");
        assert!((g[0] + 0.5).abs() < 1e-15, "{g:?}");
        assert_eq!(g[1], 0.0);
    }

    #[test]
    fn duplicate_inputs_need_jitter() {
        // σ_ε² = 1e-24 vanishes against 1.0, so K̃ is singular in floating point
        let hp = Hyperparameters::new(1.0, vec![1.0], 1e-12).unwrap();
        let data = Dataset::new(Inputs::from_rows(&[[0.0], [0.0]]).unwrap(), vec![0.3, 0.3]).unwrap();
        let s = fit(&data, &[0, 1], &hp).unwrap();
        assert!(s.jitter() > 0.0);
        assert!(s.alpha().iter().all(|a| a.is_finite()));
    }

    #[test]
    fn reports_final_jitter_on_failure() {
        let hp = Hyperparameters::new(1.0, vec![1.0], 1e-12).unwrap();
        let data = Dataset::new(Inputs::from_rows(&[[0.0], [0.0]]).unwrap(), vec![0.3, 0.3]).unwrap();
        let opts = FitOptions { jitter_start: 1e-30, jitter_max: 1e-28, ..Default::default() };
        match fit_with(&data, &[0, 1], &hp, &opts) {
            Err(HgpError::CholeskyFailed { jitter }) => assert!((jitter - 1e-28).abs() < 1e-40),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn rejects_bad_indices() {
        let hp = Hyperparameters::new(1.0, vec![1.0], 0.1).unwrap();
        let data = scalar_data(1.0);
        assert!(matches!(fit(&data, &[], &hp), Err(HgpError::Empty(_))));
        assert!(fit(&data, &[1], &hp).is_err());
    }

    #[test]
    fn cholesky_reconstructs_noisy_kernel() {
        let mut r = rng(1);
        let data = random_dataset(&mut r, 32, 3);
        let hp = random_hp(&mut r, 3);
        let s = fit(&data, &all(32), &hp).unwrap();
        let l = s.chol();
        let rec = l * l.transpose();
        let k = noisy_kernel(&data, &hp);
        let rel = (&rec - &k).norm_l2() / k.norm_l2();
        assert!(rel < 1e-10, "{rel}");
    }

    #[test]
    fn lml_matches_dense_formula() {
        let mut r = rng(2);
        for _ in 0..3 {
            let data = random_dataset(&mut r, 64, 2);
            let hp = random_hp(&mut r, 2);
            let s = fit(&data, &all(64), &hp).unwrap();
            let (inv, logdet) = dense_inverse_logdet(&noisy_kernel(&data, &hp));
            let y = data.targets();
            let quad: f64 = (0..64).map(|i| (0..64).map(|j| y[i] * inv[(i, j)] * y[j]).sum::<f64>()).sum();
            let dense = -0.5 * (quad + logdet) - 32.0 * LN_2PI;
            let got = log_marginal_likelihood(&s, &data).unwrap();
            assert!((got - dense).abs() <= 1e-8 * dense.abs().max(1.0), "{got} vs {dense}");
        }
    }

    #[test]
    fn lml_is_permutation_invariant() {
        let mut r = rng(3);
        let data = random_dataset(&mut r, 40, 2);
        let hp = random_hp(&mut r, 2);
        let a = log_marginal_likelihood(&fit(&data, &all(40), &hp).unwrap(), &data).unwrap();
        let rev: Vec<usize> = (0..40).rev().collect();
        let b = log_marginal_likelihood(&fit(&data, &rev, &hp).unwrap(), &data).unwrap();
        assert!((a - b).abs() < 1e-10 * a.abs());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut r = rng(4);
        let h = 1e-5;
        for _ in 0..4 {
            let data = random_dataset(&mut r, 32, 3);
            let hp = random_hp(&mut r, 3);
            let s = fit(&data, &all(32), &hp).unwrap();
            let g = lml_gradient(&s, &data).unwrap();
            let base = hp.to_log();
            for j in 0..base.len() {
                let at = |delta: f64| {
                    let mut v = base.clone();
                    v.0[j] += delta;
                    let hp = v.to_natural().unwrap();
                    log_marginal_likelihood(&fit(&data, &all(32), &hp).unwrap(), &data).unwrap()
                };
                let fd = (at(h) - at(-h)) / (2.0 * h);
                let rel = (fd - g[j]).abs() / fd.abs().max(g[j].abs()).max(1.0);
                assert!(rel < 1e-5, "param {j}: fd {fd} analytic {}", g[j]);
            }
        }
    }

    #[test]
    fn zero_targets_signal_gradient_is_minus_trace() {
        let mut r = rng(5);
        let mut data = random_dataset(&mut r, 20, 2);
        data = Dataset::new(data.inputs().clone(), vec![0.0; 20]).unwrap();
        let hp = random_hp(&mut r, 2);
        let s = fit(&data, &all(20), &hp).unwrap();
        let g = lml_gradient(&s, &data).unwrap();
        let (inv, _) = dense_inverse_logdet(&noisy_kernel(&data, &hp));
        let k = kernel_matrix(data.inputs(), &hp).unwrap();
        let trace: f64 = (0..20).map(|i| (0..20).map(|j| inv[(i, j)] * k[(j, i)]).sum::<f64>()).sum();
        assert!(g[0] <= 0.0);
        assert!((g[0] + trace).abs() < 1e-9 * trace, "{} vs {}", g[0], -trace);
    }

    #[test]
    fn predict_matches_dense_formulas() {
        let mut r = rng(6);
        let data = random_dataset(&mut r, 32, 2);
        let hp = random_hp(&mut r, 2);
        let s = fit(&data, &all(32), &hp).unwrap();
        let (inv, _) = dense_inverse_logdet(&noisy_kernel(&data, &hp));
        let tests = crate::test_util::random_inputs(&mut r, 10, 2);
        let preds = predict_batch(&s, &data, &tests).unwrap();
        for (t, pred) in tests.iter_rows().zip(&preds) {
            let ks = crate::kernel::kernel_vector(t, data.inputs(), &hp).unwrap();
            let mean: f64 =
                (0..32).map(|i| (0..32).map(|j| ks[i] * inv[(i, j)] * data.targets()[j]).sum::<f64>()).sum();
            let quad: f64 = (0..32).map(|i| (0..32).map(|j| ks[i] * inv[(i, j)] * ks[j]).sum::<f64>()).sum();
            let var = hp.signal_variance() - quad;
            assert!((pred.mean - mean).abs() < 1e-10, "{} vs {mean}", pred.mean);
            assert!((pred.variance - var).abs() < 1e-10, "{} vs {var}", pred.variance);
            let single = predict(&s, &data, t).unwrap();
            assert_eq!(single.mean, pred.mean);
            assert!((single.variance - pred.variance).abs() < 1e-14);
        }
    }

    #[test]
    fn far_away_reverts_to_prior() {
        let mut r = rng(7);
        let data = random_dataset(&mut r, 16, 2);
        let hp = Hyperparameters::new(1.7, vec![0.3, 0.3], 0.1).unwrap();
        let s = fit(&data, &all(16), &hp).unwrap();
        let p = predict(&s, &data, &[100.0, -100.0]).unwrap();
        assert!(p.mean.abs() < 1e-12);
        assert_eq!(p.variance, hp.signal_variance());
    }

    #[test]
    fn interpolates_with_tiny_noise() {
        let mut r = rng(8);
        let x = crate::test_util::random_inputs(&mut r, 12, 1);
        let y = x.iter_rows().map(|v| (3.0 * v[0]).sin()).collect();
        let data = Dataset::new(x, y).unwrap();
        let hp = Hyperparameters::new(1.0, vec![0.5], 1e-4).unwrap();
        let s = fit(&data, &all(12), &hp).unwrap();
        for i in 0..12 {
            let p = predict(&s, &data, data.inputs().row(i)).unwrap();
            assert!((p.mean - data.targets()[i]).abs() < 1e-3);
            assert!(p.variance >= s.variance_floor());
        }
    }

    #[test]
    fn predict_rejects_wrong_dimension() {
        let mut r = rng(9);
        let data = random_dataset(&mut r, 4, 2);
        let hp = random_hp(&mut r, 2);
        let s = fit(&data, &all(4), &hp).unwrap();
        assert_eq!(
            predict(&s, &data, &[1.0, 2.0, 3.0]).unwrap_err(),
            HgpError::DimensionMismatch { expected: 2, found: 3 }
        );
    }

    #[test]
    fn blocked_prediction_spans_blocks() {
        let mut r = rng(10);
        let data = random_dataset(&mut r, 8, 1);
        let hp = random_hp(&mut r, 1);
        let s = fit(&data, &all(8), &hp).unwrap();
        let tests = crate::test_util::random_inputs(&mut r, PREDICT_BLOCK + 7, 1);
        let batch = predict_batch(&s, &data, &tests).unwrap();
        assert_eq!(batch.len(), PREDICT_BLOCK + 7);
        let last = predict(&s, &data, tests.row(PREDICT_BLOCK + 6)).unwrap();
        assert!((batch[PREDICT_BLOCK + 6].variance - last.variance).abs() < 1e-14);
    }
}
