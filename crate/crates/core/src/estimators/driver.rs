use std::time::Instant;

use super::{
    check_inputs, m_step_pi, Algorithm, EstimatorConfig, FitResult, Initialization, StopReason,
};
use crate::error::{LcError, Result};
use crate::model::{e_step, Dataset, ModelParams, Responsibilities};

pub(crate) struct StepContext {
    /// 1-based index of the iteration about to run.
    pub iteration: usize,
    /// Increment produced by the previous iteration.
    pub last_increment: Option<f64>,
}

/// Shared outer loop. `step` receives the parameters at iteration `t` together
/// with the responsibilities computed from them and must leave the parameters
/// at iteration `t + 1`.
pub(crate) fn run<F>(
    algorithm: Algorithm,
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
    mut step: F,
) -> Result<FitResult>
where
    F: FnMut(&mut ModelParams, &Responsibilities, &StepContext) -> Result<()>,
{
    check_inputs(data, n_classes, init, cfg)?;
    let start = Instant::now();
    let mut params = init.params.clone();
    let (mut sbar, mut ll) = e_step(&params, data).map_err(|e| e.at_iteration(0))?;
    let mut trace = vec![ll];

    if n_classes == 1 {
        // no mixture: the closed-form pi update is the maximum
        params.pi = m_step_pi(&sbar, data).map_err(|e| e.at_iteration(1))?;
        let (_, final_ll) = e_step(&params, data).map_err(|e| e.at_iteration(1))?;
        trace.push(final_ll);
        return Ok(FitResult {
            algorithm,
            params,
            loglik_trace: trace,
            iterations: 1,
            converged: true,
            stop_reason: StopReason::Converged,
            decay_count: 0,
            wall_time: start.elapsed().as_secs_f64(),
            switch_iteration: None,
            modal_ties: None,
        });
    }

    let mut decays = 0;
    let mut iterations = 0;
    let mut stop = StopReason::MaxIter;
    let mut last_increment = None;
    while iterations < cfg.max_iter {
        let iteration = iterations + 1;
        let ctx = StepContext {
            iteration,
            last_increment,
        };
        step(&mut params, &sbar, &ctx).map_err(|e| e.at_iteration(iteration))?;
        if params.beta.iter().any(|b| !b.is_finite()) {
            return Err(LcError::Diverged.at_iteration(iteration));
        }
        let (next_sbar, next_ll) = e_step(&params, data).map_err(|e| e.at_iteration(iteration))?;
        iterations = iteration;
        let increment = next_ll - ll;
        trace.push(next_ll);
        sbar = next_sbar;
        ll = next_ll;
        last_increment = Some(increment);
        if increment < -cfg.decay_slack {
            decays += 1;
        }
        if !(increment >= cfg.tol) {
            stop = if increment < -cfg.decay_slack {
                StopReason::Decayed
            } else {
                StopReason::Converged
            };
            break;
        }
    }

    Ok(FitResult {
        algorithm,
        params,
        loglik_trace: trace,
        iterations,
        converged: stop == StopReason::Converged,
        stop_reason: stop,
        decay_count: decays,
        wall_time: start.elapsed().as_secs_f64(),
        switch_iteration: None,
        modal_ties: None,
    })
}
