//! Shared fixtures and independent oracles for unit tests.

use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::data::{Dataset, Inputs};
use crate::kernel::Hyperparameters;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_inputs(r: &mut ChaCha8Rng, n: usize, d: usize) -> Inputs {
    let v = (0..n * d).map(|_| r.random_range(-1.0..1.0)).collect();
    Inputs::from_row_major(v, n, d).unwrap()
}

pub fn random_dataset(r: &mut ChaCha8Rng, n: usize, d: usize) -> Dataset {
    let x = random_inputs(r, n, d);
    let y = x
        .iter_rows()
        .map(|row| row.iter().map(|v| (3.0 * v).sin()).sum::<f64>() + 0.1 * r.random_range(-1.0..1.0))
        .collect();
    Dataset::new(x, y).unwrap()
}

pub fn random_hp(r: &mut ChaCha8Rng, d: usize) -> Hyperparameters {
    Hyperparameters::new(
        r.random_range(0.5..2.0),
        (0..d).map(|_| r.random_range(0.3..1.5)).collect(),
        r.random_range(0.05..0.5),
    )
    .unwrap()
}

/// Gauss-Jordan inverse with partial pivoting plus `log|det|`.
pub fn dense_inverse_logdet(a: &Mat<f64>) -> (Mat<f64>, f64) {
    let n = a.nrows();
    let mut m = a.clone();
    let mut inv = Mat::<f64>::identity(n, n);
    let mut logdet = 0.0;
    for col in 0..n {
        let piv = (col..n).max_by(|&i, &j| m[(i, col)].abs().total_cmp(&m[(j, col)].abs())).unwrap();
        if piv != col {
            for k in 0..n {
                let t = m[(col, k)];
                m[(col, k)] = m[(piv, k)];
                m[(piv, k)] = t;
                let t = inv[(col, k)];
                inv[(col, k)] = inv[(piv, k)];
                inv[(piv, k)] = t;
            }
        }
        let d = m[(col, col)];
        logdet += d.abs().ln();
        for k in 0..n {
            m[(col, k)] /= d;
            inv[(col, k)] /= d;
        }
        for i in 0..n {
            if i != col {
                let f = m[(i, col)];
                if f != 0.0 {
                    for k in 0..n {
                        m[(i, k)] -= f * m[(col, k)];
                        inv[(i, k)] -= f * inv[(col, k)];
                    }
                }
            }
        }
    }
    (inv, logdet)
}
