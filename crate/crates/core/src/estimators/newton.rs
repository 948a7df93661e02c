//! Newton-type `beta` updates.
//!
//! Coefficients are stacked class-block by class-block: entry `r * P + p` of
//! the stacked vector is `beta[(r, p)]`.

use nalgebra::{DMatrix, DVector};

use super::driver::run;
use super::{m_step_pi, Algorithm, EstimatorConfig, FitResult, Initialization};
use crate::error::{LcError, Result};
use crate::model::{
    log_class_probabilities_for, responsibilities, Dataset, ModelParams, Responsibilities,
};
use crate::pg::solve_spd;

/// Newton systems are only rejected once they are singular to working
/// precision; a nearly-empty class legitimately makes them ill-conditioned.
pub const NEWTON_MAX_CONDITION: f64 = 1e15;

pub fn stack_beta(beta: &DMatrix<f64>) -> DVector<f64> {
    DVector::from_iterator(
        beta.len(),
        (0..beta.nrows()).flat_map(|r| (0..beta.ncols()).map(move |p| beta[(r, p)])),
    )
}

pub fn unstack_beta(v: &DVector<f64>, n_free: usize, p: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n_free, p, |r, c| v[r * p + c])
}

fn class_probs(beta: &DMatrix<f64>, n_classes: usize, data: &Dataset) -> Result<DMatrix<f64>> {
    Ok(log_class_probabilities_for(beta, n_classes, data)?.map(f64::exp))
}

/// Gradient of the expected multinomial-logit term with respect to the stacked
/// coefficients: block `r` is `sum_i (sbar_ir - nu_ir) x_i`.
///
/// With `sbar` evaluated at the current parameters this is also the gradient
/// of the observed-data log-likelihood.
pub fn q1_score(
    beta: &DMatrix<f64>,
    sbar: &Responsibilities,
    data: &Dataset,
) -> Result<DVector<f64>> {
    let n_classes = sbar.n_classes();
    let nu = class_probs(beta, n_classes, data)?;
    Ok(score_from(&nu, sbar.weights(), data))
}

fn score_from(nu: &DMatrix<f64>, s: &DMatrix<f64>, data: &Dataset) -> DVector<f64> {
    let p = data.n_covariates();
    let n_free = nu.ncols() - 1;
    let x = data.design();
    let mut g = DVector::zeros(n_free * p);
    for i in 0..data.n_units() {
        for r in 0..n_free {
            let resid = s[(i, r)] - nu[(i, r)];
            for c in 0..p {
                g[r * p + c] += resid * x[(i, c)];
            }
        }
    }
    g
}

/// Accumulates `sum_i w_i(r, l) x_i x_i'` into the `(r, l)` blocks.
fn block_outer<F>(data: &Dataset, n_free: usize, mut weight: F) -> DMatrix<f64>
where
    F: FnMut(usize, usize, usize) -> f64,
{
    let p = data.n_covariates();
    let x = data.design();
    let mut h = DMatrix::zeros(n_free * p, n_free * p);
    for i in 0..data.n_units() {
        for r in 0..n_free {
            for l in 0..n_free {
                let w = weight(i, r, l);
                if w == 0.0 {
                    continue;
                }
                for a in 0..p {
                    let wxa = w * x[(i, a)];
                    for b in 0..p {
                        h[(r * p + a, l * p + b)] += wxa * x[(i, b)];
                    }
                }
            }
        }
    }
    h
}

/// Hessian of the expected multinomial-logit term (soft-label multinomial
/// logit): blocks `-sum_i nu_ir (delta_rl - nu_il) x_i x_i'`.
pub fn q1_hessian(beta: &DMatrix<f64>, n_classes: usize, data: &Dataset) -> Result<DMatrix<f64>> {
    let nu = class_probs(beta, n_classes, data)?;
    Ok(q1_hessian_from(&nu, data))
}

fn q1_hessian_from(nu: &DMatrix<f64>, data: &Dataset) -> DMatrix<f64> {
    block_outer(data, nu.ncols() - 1, |i, r, l| {
        let delta = if r == l { 1.0 } else { 0.0 };
        -nu[(i, r)] * (delta - nu[(i, l)])
    })
}

/// Observed-data score in `beta` at fixed `pi`.
pub fn observed_score(params: &ModelParams, data: &Dataset) -> Result<DVector<f64>> {
    let sbar = responsibilities(params, data)?;
    q1_score(&params.beta, &sbar, data)
}

/// Observed-data Hessian in `beta` at fixed `pi`: blocks
/// `sum_i [sbar_ir (delta_rl - sbar_il) - nu_ir (delta_rl - nu_il)] x_i x_i'`.
pub fn observed_hessian(params: &ModelParams, data: &Dataset) -> Result<DMatrix<f64>> {
    let sbar = responsibilities(params, data)?;
    let nu = class_probs(&params.beta, params.n_classes, data)?;
    Ok(observed_hessian_from(&nu, sbar.weights(), data))
}

fn observed_hessian_from(nu: &DMatrix<f64>, s: &DMatrix<f64>, data: &Dataset) -> DMatrix<f64> {
    block_outer(data, nu.ncols() - 1, |i, r, l| {
        let delta = if r == l { 1.0 } else { 0.0 };
        s[(i, r)] * (delta - s[(i, l)]) - nu[(i, r)] * (delta - nu[(i, l)])
    })
}

/// Solves a general square system, rejecting ill-conditioned matrices.
fn solve_general(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    let sv = a.clone().svd(false, false).singular_values;
    let max = sv.iter().copied().fold(0.0, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !(condition <= NEWTON_MAX_CONDITION) {
        return Err(LcError::Singular {
            class: None,
            condition,
        });
    }
    a.lu().solve(b).ok_or(LcError::Singular {
        class: None,
        condition,
    })
}

fn apply_step(params: &mut ModelParams, direction: &DVector<f64>, scale: f64) {
    let p = params.beta.ncols();
    for r in 0..params.beta.nrows() {
        for c in 0..p {
            params.beta[(r, c)] += scale * direction[r * p + c];
        }
    }
}

/// `pi` update followed by one Newton step on the expected multinomial-logit
/// term, both driven by `sbar` at the incoming parameters.
pub(crate) fn q1_newton_step(
    params: &mut ModelParams,
    sbar: &Responsibilities,
    data: &Dataset,
    alpha: f64,
) -> Result<()> {
    let nu = class_probs(&params.beta, params.n_classes, data)?;
    let g = score_from(&nu, sbar.weights(), data);
    let neg_h = -q1_hessian_from(&nu, data);
    params.pi = m_step_pi(sbar, data)?;
    let direction = solve_spd(neg_h, &g, NEWTON_MAX_CONDITION)?;
    apply_step(params, &direction, alpha);
    Ok(())
}

/// EM with one Newton step on the expected multinomial-logit term per iteration.
pub fn fit_nr_em_q1(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    run(
        Algorithm::NrEmQ1,
        data,
        n_classes,
        init,
        cfg,
        |params, sbar, _| q1_newton_step(params, sbar, data, cfg.alpha),
    )
}

/// EM whose `beta` step is one Newton step on the observed-data
/// log-likelihood, using its exact score and Hessian at the incoming parameters.
pub fn fit_nr_em(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    run(
        Algorithm::NrEm,
        data,
        n_classes,
        init,
        cfg,
        |params, sbar, _| {
            let nu = class_probs(&params.beta, params.n_classes, data)?;
            let g = score_from(&nu, sbar.weights(), data);
            let h = observed_hessian_from(&nu, sbar.weights(), data);
            params.pi = m_step_pi(sbar, data)?;
            let direction = solve_general(h, &(-g))?;
            apply_step(params, &direction, cfg.alpha);
            Ok(())
        },
    )
}

/// Maximizes the multinomial-logit likelihood of fixed responses `sbar` by
/// damped Newton iterations from `beta = 0`. Returns the coefficients and the
/// number of Newton steps.
pub(crate) fn fit_multinomial_logit(
    sbar: &Responsibilities,
    data: &Dataset,
    tol: f64,
    max_steps: usize,
) -> Result<(DMatrix<f64>, usize)> {
    let n_classes = sbar.n_classes();
    let p = data.n_covariates();
    let mut beta = DMatrix::zeros(n_classes - 1, p);
    if n_classes == 1 {
        return Ok((beta, 0));
    }
    let q1 = |b: &DMatrix<f64>| crate::model::expected_loglik_q1(b, sbar, data);
    let mut current = q1(&beta)?;
    for step in 1..=max_steps {
        let nu = class_probs(&beta, n_classes, data)?;
        let g = score_from(&nu, sbar.weights(), data);
        let direction = solve_spd(-q1_hessian_from(&nu, data), &g, NEWTON_MAX_CONDITION)?;
        let mut scale = 1.0;
        let (next_beta, next) = loop {
            let candidate = &beta + unstack_beta(&direction, n_classes - 1, p) * scale;
            let value = q1(&candidate)?;
            if value >= current || scale < 1e-8 {
                break (candidate, value);
            }
            scale *= 0.5;
        };
        let increment = next - current;
        beta = next_beta;
        current = next;
        if increment < tol {
            return Ok((beta, step));
        }
    }
    Ok((beta, max_steps))
}
