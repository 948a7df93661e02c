use nalgebra::DMatrix;

use super::driver::run;
use super::newton::{q1_score, unstack_beta};
use super::{check_inputs, m_step_pi, Algorithm, EstimatorConfig, FitResult, Initialization};
use crate::error::{LcError, Result};
use crate::model::Dataset;
use crate::pg::{condition_number, MAX_CONDITION};

/// Böhning's curvature bound `1/2 (I - 11'/R) ⊗ X'X` on the negative Hessian
/// of the multinomial-logit log-likelihood, in stacked-coefficient order.
pub fn bohning_bound(data: &Dataset, n_classes: usize) -> DMatrix<f64> {
    let n_free = n_classes.saturating_sub(1);
    let p = data.n_covariates();
    let xtx = data.design().tr_mul(data.design());
    let mut b = DMatrix::zeros(n_free * p, n_free * p);
    for r in 0..n_free {
        for l in 0..n_free {
            let coef = 0.5 * (if r == l { 1.0 } else { 0.0 } - 1.0 / n_classes as f64);
            for a in 0..p {
                for c in 0..p {
                    b[(r * p + a, l * p + c)] = coef * xtx[(a, c)];
                }
            }
        }
    }
    b
}

/// EM whose `beta` step is the MM update `beta + B^{-1} score` with the fixed
/// bound `B`, factored once per fit.
pub fn fit_mm_em(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    check_inputs(data, n_classes, init, cfg)?;
    let chol = if n_classes > 1 {
        let bound = bohning_bound(data, n_classes);
        let condition = condition_number(&bound);
        if !(condition <= MAX_CONDITION) {
            return Err(LcError::Singular {
                class: None,
                condition,
            });
        }
        Some(bound.cholesky().ok_or(LcError::Singular {
            class: None,
            condition,
        })?)
    } else {
        None
    };
    let p = data.n_covariates();
    run(
        Algorithm::MmEm,
        data,
        n_classes,
        init,
        cfg,
        |params, sbar, _| {
            let g = q1_score(&params.beta, sbar, data)?;
            params.pi = m_step_pi(sbar, data)?;
            let chol = chol.as_ref().expect("bound factored for R > 1");
            let step = chol.solve(&g);
            params.beta += unstack_beta(&step, n_classes - 1, p);
            Ok(())
        },
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::{init_random, q1_hessian};

    fn toy() -> Dataset {
        Dataset::new(
            vec![vec![1, 2], vec![2, 2], vec![1, 1], vec![3, 1], vec![2, 1]],
            vec![3, 2],
            DMatrix::from_row_slice(5, 2, &[1.0, 0.1, 1.0, -0.3, 1.0, 0.8, 1.0, 1.2, 1.0, -1.0]),
        )
        .unwrap()
    }

    #[test]
    fn bound_dominates_negative_hessian() {
        let data = toy();
        let b = bohning_bound(&data, 3);
        for seed in 0..10 {
            let init = init_random(&data, 3, seed).unwrap();
            let neg_h = -q1_hessian(&init.params.beta, 3, &data).unwrap();
            let gap = &b - neg_h;
            let eig = gap.symmetric_eigenvalues();
            assert!(eig.min() > -1e-12, "B - (-H) not PSD: {}", eig.min());
        }
    }

    #[test]
    fn two_class_bound_is_quarter_xtx() {
        let data = toy();
        let b = bohning_bound(&data, 2);
        let xtx = data.design().tr_mul(data.design()) * 0.25;
        assert!((b - xtx).amax() < 1e-15);
    }

    #[test]
    fn rank_deficient_design_is_rejected() {
        let data = Dataset::new(
            vec![vec![1], vec![2], vec![1]],
            vec![2],
            DMatrix::from_row_slice(3, 2, &[1.0, 1.0, 1.0, 1.0, 1.0, 1.0]),
        )
        .unwrap();
        let init = init_random(&data, 2, 0).unwrap();
        assert!(matches!(
            fit_mm_em(&data, 2, &init, &EstimatorConfig::default()),
            Err(LcError::Singular { .. })
        ));
    }
}
