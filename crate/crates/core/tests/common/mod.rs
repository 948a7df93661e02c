#![allow(dead_code)]

use lcreg::{Dataset, ModelParams};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Intercept plus `p - 1` standard-uniform-ish covariates, uniform responses.
pub fn random_dataset(rng: &mut ChaCha8Rng, n: usize, counts: &[usize], p: usize) -> Dataset {
    let design = DMatrix::from_fn(n, p, |_, c| {
        if c == 0 {
            1.0
        } else {
            rng.random_range(-1.5..1.5)
        }
    });
    let codes = (0..n)
        .flat_map(|_| {
            counts
                .iter()
                .map(|&k| rng.random_range(0..k))
                .collect::<Vec<_>>()
        })
        .collect();
    Dataset::from_codes(n, codes, counts.to_vec(), design).unwrap()
}

/// Coefficients with the given spread and item profiles bounded away from 0.
pub fn random_params(
    rng: &mut ChaCha8Rng,
    n_classes: usize,
    counts: &[usize],
    p: usize,
    beta_scale: f64,
) -> ModelParams {
    let beta = DMatrix::from_fn(n_classes - 1, p, |_, _| {
        rng.random_range(-beta_scale..beta_scale)
    });
    let pi = (0..n_classes)
        .map(|_| {
            counts
                .iter()
                .map(|&k| {
                    let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.05..1.0)).collect();
                    simplex(&raw)
                })
                .collect()
        })
        .collect();
    ModelParams::new(n_classes, beta, pi).unwrap()
}

/// Normalizes to a probability vector whose sum is 1 to the last bit.
pub fn simplex(raw: &[f64]) -> Vec<f64> {
    let total: f64 = raw.iter().sum();
    let mut row: Vec<f64> = raw.iter().map(|v| v / total).collect();
    let k = row.len();
    row[k - 1] = 1.0 - row[..k - 1].iter().sum::<f64>();
    row
}

/// Class probabilities computed directly as `exp(eta) / sum exp(eta)`.
pub fn naive_nu(params: &ModelParams, data: &Dataset, i: usize) -> Vec<f64> {
    let x = data.design().row(i);
    let mut eta: Vec<f64> = (0..params.n_classes - 1)
        .map(|r| x.dot(&params.beta.row(r)))
        .collect();
    eta.push(0.0);
    let total: f64 = eta.iter().map(|e| e.exp()).sum();
    eta.iter().map(|e| e.exp() / total).collect()
}

/// Observed log-likelihood by direct products, without any log-domain tricks.
pub fn naive_loglik(params: &ModelParams, data: &Dataset) -> f64 {
    (0..data.n_units())
        .map(|i| {
            let nu = naive_nu(params, data, i);
            let lik: f64 = (0..params.n_classes)
                .map(|r| {
                    nu[r]
                        * (0..data.n_items())
                            .map(|j| params.pi[r][j][data.code(i, j)])
                            .product::<f64>()
                })
                .sum();
            lik.ln()
        })
        .sum()
}

/// Replaces `beta[(r, c)]` by `value`.
pub fn with_beta(params: &ModelParams, r: usize, c: usize, value: f64) -> ModelParams {
    let mut out = params.clone();
    out.beta[(r, c)] = value;
    out
}
