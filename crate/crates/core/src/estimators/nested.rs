use nalgebra::DMatrix;

use super::driver::{run, StepContext};
use super::newton::q1_newton_step;
use super::{m_step_pi, Algorithm, EstimatorConfig, FitResult, Initialization};
use crate::error::{LcError, Result};
use crate::model::{responsibilities, Dataset, ModelParams, Responsibilities};
use crate::pg::{class_offsets, gls_update, pg_weights_for_cycle};

/// State of one nested cycle, reported to an observer after the update.
#[derive(Debug, Clone)]
pub struct CycleRecord {
    pub iteration: usize,
    /// 0-based class block updated in this cycle.
    pub class: usize,
    /// Responsibilities at the updated `pi` and the coefficients entering the cycle.
    pub sbar: Responsibilities,
    pub beta_before: DMatrix<f64>,
    pub beta_after: DMatrix<f64>,
}

type Observer<'a> = Option<&'a mut dyn FnMut(&CycleRecord)>;

/// One nested-EM iteration: `pi` update from `sbar`, then a sweep of
/// conditional GLS updates over the free class blocks, each preceded by a
/// fresh E-step at the most recent parameters.
fn nested_step(
    params: &mut ModelParams,
    sbar: &Responsibilities,
    data: &Dataset,
    iteration: usize,
    observer: &mut Observer<'_>,
) -> Result<()> {
    params.pi = m_step_pi(sbar, data)?;
    for r in 0..params.n_classes - 1 {
        let cycle_sbar = responsibilities(params, data)?;
        let sbar_r: Vec<f64> = cycle_sbar.weights().column(r).iter().copied().collect();
        let offsets = class_offsets(&params.beta, r, data)?;
        let beta_r: Vec<f64> = params.beta.row(r).iter().copied().collect();
        let weights = pg_weights_for_cycle(&beta_r, &offsets, &sbar_r, data)?;
        let updated = gls_update(data.design(), &weights).map_err(|e| tag_class(e, r))?;
        let before = observer.is_some().then(|| params.beta.clone());
        params.beta.row_mut(r).copy_from(&updated.transpose());
        if let (Some(obs), Some(beta_before)) = (observer.as_mut(), before) {
            obs(&CycleRecord {
                iteration,
                class: r,
                sbar: cycle_sbar,
                beta_before,
                beta_after: params.beta.clone(),
            });
        }
    }
    Ok(())
}

fn tag_class(err: LcError, class: usize) -> LcError {
    match err {
        LcError::Singular { condition, .. } => LcError::Singular {
            class: Some(class),
            condition,
        },
        other => other,
    }
}

/// Nested EM: monotone in the observed-data log-likelihood.
pub fn fit_nested_em(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    fit_nested_inner(data, n_classes, init, cfg, None)
}

/// [`fit_nested_em`] with a callback invoked after every nested cycle.
pub fn fit_nested_em_observed(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
    observer: &mut dyn FnMut(&CycleRecord),
) -> Result<FitResult> {
    fit_nested_inner(data, n_classes, init, cfg, Some(observer))
}

fn fit_nested_inner(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
    mut observer: Observer<'_>,
) -> Result<FitResult> {
    run(
        Algorithm::NestedEm,
        data,
        n_classes,
        init,
        cfg,
        |params, sbar, ctx: &StepContext| {
            nested_step(params, sbar, data, ctx.iteration, &mut observer)
        },
    )
}

/// Exact EM for two classes. The `beta_1` update uses the Pólya-gamma GLS
/// with working response `(sbar_i1 - 1/2) / omega_i1`, after refreshing the
/// responsibilities at the updated `pi`.
pub fn fit_em_two_class(
    data: &Dataset,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    run(
        Algorithm::EmTwoClass,
        data,
        2,
        init,
        cfg,
        |params, sbar, _| {
            params.pi = m_step_pi(sbar, data)?;
            let refreshed = responsibilities(params, data)?;
            let eta = data.design() * params.beta.row(0).transpose();
            let n = data.n_units();
            let mut weights = crate::pg::PgWeights {
                omega_bar: Vec::with_capacity(n),
                eta_bar: Vec::with_capacity(n),
                offsets: vec![0.0; n],
            };
            for i in 0..n {
                let w = crate::pg::pg_expectation(eta[i])?.max(crate::pg::OMEGA_FLOOR);
                weights.omega_bar.push(w);
                weights
                    .eta_bar
                    .push((refreshed.weights()[(i, 0)] - 0.5) / w);
            }
            let updated = gls_update(data.design(), &weights).map_err(|e| tag_class(e, 0))?;
            params.beta.row_mut(0).copy_from(&updated.transpose());
            Ok(())
        },
    )
}

/// Nested EM until the increment drops to `cfg.epsilon`, then Newton steps on
/// the expected multinomial-logit term. The switch is one-way.
pub fn fit_hybrid_em(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    let mut switched_at: Option<usize> = None;
    let mut result = run(
        Algorithm::HybridEm,
        data,
        n_classes,
        init,
        cfg,
        |params, sbar, ctx| {
            if switched_at.is_none() && ctx.last_increment.is_some_and(|d| d <= cfg.epsilon) {
                switched_at = Some(ctx.iteration);
            }
            if switched_at.is_some() {
                q1_newton_step(params, sbar, data, cfg.alpha)
            } else {
                nested_step(params, sbar, data, ctx.iteration, &mut None)
            }
        },
    )?;
    result.switch_iteration = switched_at;
    Ok(result)
}
