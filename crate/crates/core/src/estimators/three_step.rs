use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use super::newton::fit_multinomial_logit;
use super::{
    check_inputs, m_step_pi, Algorithm, EstimatorConfig, FitResult, Initialization, StopReason,
};
use crate::error::{LcError, Result};
use crate::model::{
    class_probabilities, log_item_densities, log_likelihood, log_sum_exp, Dataset, ModelParams,
    Responsibilities,
};

/// Newton iterations allowed for the final multinomial logit.
const LOGIT_MAX_STEPS: usize = 200;

/// Latent class model without covariates, fitted by plain EM.
#[derive(Debug, Clone)]
pub struct NoCovariateFit {
    pub class_weights: DVector<f64>,
    pub pi: Vec<Vec<Vec<f64>>>,
    pub sbar: Responsibilities,
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

fn lca_e_step(
    weights: &DVector<f64>,
    pi: &[Vec<Vec<f64>>],
    data: &Dataset,
) -> Result<(Responsibilities, f64)> {
    let n_classes = weights.len();
    let shell = ModelParams {
        n_classes,
        beta: DMatrix::zeros(n_classes - 1, data.n_covariates()),
        pi: pi.to_vec(),
    };
    let mut joint = log_item_densities(&shell, data)?;
    let log_w: Vec<f64> = weights.iter().map(|w| w.ln()).collect();
    let mut total = 0.0;
    let mut buf = vec![0.0; n_classes];
    for i in 0..data.n_units() {
        for r in 0..n_classes {
            buf[r] = joint[(i, r)] + log_w[r];
        }
        let lse = log_sum_exp(&buf);
        if !lse.is_finite() {
            return Err(LcError::DegenerateUnit { unit: i });
        }
        total += lse;
        for r in 0..n_classes {
            joint[(i, r)] = (buf[r] - lse).exp();
        }
    }
    Ok((Responsibilities::new(joint)?, total))
}

/// EM for the latent class model with constant class weights.
pub fn fit_no_covariate_lca(
    data: &Dataset,
    class_weights: DVector<f64>,
    pi: Vec<Vec<Vec<f64>>>,
    cfg: &EstimatorConfig,
) -> Result<NoCovariateFit> {
    let mut weights = class_weights;
    let mut pi = pi;
    let (mut sbar, mut ll) = lca_e_step(&weights, &pi, data).map_err(|e| e.at_iteration(0))?;
    let mut trace = vec![ll];
    let mut iterations = 0;
    let mut converged = false;
    while iterations < cfg.max_iter {
        iterations += 1;
        let it = iterations;
        pi = m_step_pi(&sbar, data).map_err(|e| e.at_iteration(it))?;
        weights = sbar.weights().row_mean().transpose();
        let (next_sbar, next_ll) =
            lca_e_step(&weights, &pi, data).map_err(|e| e.at_iteration(it))?;
        let increment = next_ll - ll;
        trace.push(next_ll);
        sbar = next_sbar;
        ll = next_ll;
        if !(increment >= cfg.tol) {
            converged = increment >= -cfg.decay_slack;
            break;
        }
    }
    Ok(NoCovariateFit {
        class_weights: weights,
        pi,
        sbar,
        loglik_trace: trace,
        iterations,
        converged,
    })
}

/// Classical three-step estimation: no-covariate latent class model, modal
/// class assignment, then a multinomial logit of the assigned classes on the
/// covariates. The trace holds a single entry, the observed-data
/// log-likelihood at the combined estimate.
pub fn fit_three_step_classical(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    check_inputs(data, n_classes, init, cfg)?;
    let start = Instant::now();
    let start_weights = class_probabilities(&init.params, data)?
        .row_mean()
        .transpose();
    let lca = fit_no_covariate_lca(data, start_weights, init.params.pi.clone(), cfg)?;

    let (labels, ties) = lca.sbar.modal_assignment();
    let mut counts = vec![0usize; n_classes];
    for &s in &labels {
        counts[s] += 1;
    }
    if let Some(r) = counts.iter().position(|&c| c == 0) {
        return Err(LcError::EmptyClass {
            class: r,
            mass: 0.0,
        });
    }
    let hard = Responsibilities::from_labels(&labels, n_classes)?;
    let (beta, _) = fit_multinomial_logit(&hard, data, cfg.tol, LOGIT_MAX_STEPS)?;

    let params = ModelParams {
        n_classes,
        beta,
        pi: lca.pi,
    };
    let ll = log_likelihood(&params, data)?;
    let stop_reason = if lca.converged {
        StopReason::Converged
    } else {
        StopReason::MaxIter
    };
    Ok(FitResult {
        algorithm: Algorithm::ThreeStep,
        params,
        loglik_trace: vec![ll],
        iterations: lca.iterations,
        converged: lca.converged,
        stop_reason,
        decay_count: 0,
        wall_time: start.elapsed().as_secs_f64(),
        switch_iteration: None,
        modal_ties: Some(ties),
    })
}
