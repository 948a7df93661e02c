//! Fitting routines for latent class regression.
//!
//! Every one-step estimator shares the same outer loop (E-step, closed-form
//! `pi` update, some update of `beta`) and differs only in the `beta` step:
//!
//! | identifier     | `beta` step                                                  |
//! |----------------|--------------------------------------------------------------|
//! | `nested_em`    | `R-1` conditional cycles, each a Pólya-gamma GLS solve         |
//! | `em_two_class` | the same for `R = 2`, written without offsets                 |
//! | `hybrid_em`    | `nested_em` until the increment drops to `epsilon`, then `nr_em_q1` |
//! | `nr_em_q1`     | one Newton step on the expected multinomial-logit term        |
//! | `nr_em`        | one Newton step using the observed-data score and Hessian     |
//! | `mm_em`        | one step with Böhning's fixed curvature bound                 |
//! | `three_step`   | no-covariate LCA, modal assignment, then multinomial logit    |

mod driver;
mod mm;
mod nested;
mod newton;
mod three_step;

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{LcError, Result};
use crate::model::{Dataset, ModelParams, Responsibilities};

pub use mm::{bohning_bound, fit_mm_em};
pub use nested::{
    fit_em_two_class, fit_hybrid_em, fit_nested_em, fit_nested_em_observed, CycleRecord,
};
pub use newton::{
    fit_nr_em, fit_nr_em_q1, observed_hessian, observed_score, q1_hessian, q1_score, stack_beta,
    unstack_beta,
};
pub use three_step::{fit_no_covariate_lca, fit_three_step_classical, NoCovariateFit};

/// Variance of the Gaussian draws used to initialize `beta`.
pub const INIT_BETA_VARIANCE: f64 = 0.5;

/// Minimum total responsibility a class needs for the `pi` update.
pub const EMPTY_CLASS_MASS: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    NestedEm,
    HybridEm,
    NrEm,
    NrEmQ1,
    MmEm,
    ThreeStep,
    EmTwoClass,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::NestedEm,
        Algorithm::HybridEm,
        Algorithm::NrEm,
        Algorithm::NrEmQ1,
        Algorithm::MmEm,
        Algorithm::ThreeStep,
        Algorithm::EmTwoClass,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::NestedEm => "nested_em",
            Algorithm::HybridEm => "hybrid_em",
            Algorithm::NrEm => "nr_em",
            Algorithm::NrEmQ1 => "nr_em_q1",
            Algorithm::MmEm => "mm_em",
            Algorithm::ThreeStep => "three_step",
            Algorithm::EmTwoClass => "em_two_class",
        }
    }

    /// Whether log-likelihood decays are meaningful for this estimator.
    pub fn tracks_decays(self) -> bool {
        self != Algorithm::ThreeStep
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = LcError;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.as_str() == s.trim())
            .ok_or_else(|| {
                LcError::Invalid(format!(
                    "unknown algorithm '{s}' (expected one of: {})",
                    Algorithm::ALL.map(Algorithm::as_str).join(", ")
                ))
            })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    /// Stop once the log-likelihood increment falls below this.
    pub tol: f64,
    pub max_iter: usize,
    /// Hybrid switch threshold on the increment.
    pub epsilon: f64,
    /// Newton step-size rescaling in `(0, 1]`.
    pub alpha: f64,
    /// Decreases smaller than this are not counted as decays.
    pub decay_slack: f64,
    pub seed: u64,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        EstimatorConfig {
            tol: 1e-11,
            max_iter: 100_000,
            epsilon: 0.01,
            alpha: 1.0,
            decay_slack: 1e-9,
            seed: 0,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol > 0.0) {
            return Err(LcError::Invalid(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if !(self.alpha > 0.0 && self.alpha <= 1.0) {
            return Err(LcError::Invalid(format!(
                "alpha must lie in (0, 1], got {}",
                self.alpha
            )));
        }
        if !(self.epsilon >= 0.0) {
            return Err(LcError::Invalid(format!(
                "epsilon must be non-negative, got {}",
                self.epsilon
            )));
        }
        if !(self.decay_slack >= 0.0) {
            return Err(LcError::Invalid("decay_slack must be non-negative".into()));
        }
        if self.max_iter == 0 {
            return Err(LcError::Invalid("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

/// Starting values shared by all estimators within a run.
#[derive(Debug, Clone, PartialEq)]
pub struct Initialization {
    pub params: ModelParams,
}

/// `beta` entries i.i.d. N(0, 0.5); each `pi[r][j]` from a flat Dirichlet.
pub fn init_random(data: &Dataset, n_classes: usize, seed: u64) -> Result<Initialization> {
    if n_classes == 0 {
        return Err(LcError::Invalid("need at least one class".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = data.n_covariates();
    let normal = Normal::new(0.0, INIT_BETA_VARIANCE.sqrt()).expect("valid normal");
    let beta = DMatrix::from_fn(n_classes - 1, p, |_, _| normal.sample(&mut rng));
    let pi = (0..n_classes)
        .map(|_| {
            data.category_counts()
                .iter()
                .map(|&k| flat_dirichlet(&mut rng, k))
                .collect()
        })
        .collect();
    Ok(Initialization {
        params: ModelParams::new(n_classes, beta, pi)?,
    })
}

fn flat_dirichlet<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    let draws: Vec<f64> = (0..k).map(|_| Exp1.sample(rng)).collect::<Vec<f64>>();
    let total: f64 = draws.iter().sum();
    let mut row: Vec<f64> = draws.iter().map(|d| d / total).collect();
    // absorb rounding so the row sums to one to machine precision
    let drift: f64 = 1.0 - row.iter().sum::<f64>();
    let last = row.len() - 1;
    row[last] += drift;
    row
}

/// Closed-form maximizer of the expected categorical term:
/// responsibility-weighted category frequencies per class and item.
pub fn m_step_pi(sbar: &Responsibilities, data: &Dataset) -> Result<Vec<Vec<Vec<f64>>>> {
    if sbar.n_units() != data.n_units() {
        return Err(LcError::Shape(format!(
            "responsibilities have {} rows, dataset has {} units",
            sbar.n_units(),
            data.n_units()
        )));
    }
    let w = sbar.weights();
    let n_classes = sbar.n_classes();
    let mut pi: Vec<Vec<Vec<f64>>> = (0..n_classes)
        .map(|_| {
            data.category_counts()
                .iter()
                .map(|&k| vec![0.0; k])
                .collect()
        })
        .collect();
    for i in 0..data.n_units() {
        let codes = data.unit_codes(i);
        for (r, class) in pi.iter_mut().enumerate() {
            let s = w[(i, r)];
            for (row, &c) in class.iter_mut().zip(codes) {
                row[c] += s;
            }
        }
    }
    for (r, class) in pi.iter_mut().enumerate() {
        let mass: f64 = w.column(r).sum();
        if mass < EMPTY_CLASS_MASS {
            return Err(LcError::EmptyClass { class: r, mass });
        }
        for row in class.iter_mut() {
            // per-row totals equal `mass` analytically; normalizing by the row
            // total keeps each row on the simplex to the last bit
            let total: f64 = row.iter().sum();
            for v in row.iter_mut() {
                *v /= total;
            }
        }
    }
    Ok(pi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Increment below `tol` without a decay.
    Converged,
    /// The last iteration decreased the log-likelihood by more than the slack.
    Decayed,
    MaxIter,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub algorithm: Algorithm,
    pub params: ModelParams,
    /// Log-likelihood at the initial values followed by one entry per iteration.
    pub loglik_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
    pub decay_count: usize,
    /// Seconds.
    pub wall_time: f64,
    /// Iteration at which `hybrid_em` switched to Newton steps.
    pub switch_iteration: Option<usize>,
    /// Modal-assignment ties broken toward the lower class (`three_step` only).
    pub modal_ties: Option<usize>,
}

impl FitResult {
    pub fn final_loglik(&self) -> f64 {
        *self.loglik_trace.last().expect("trace is never empty")
    }
}

/// Runs the named estimator.
pub fn fit(
    algorithm: Algorithm,
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<FitResult> {
    match algorithm {
        Algorithm::NestedEm => fit_nested_em(data, n_classes, init, cfg),
        Algorithm::HybridEm => fit_hybrid_em(data, n_classes, init, cfg),
        Algorithm::NrEm => fit_nr_em(data, n_classes, init, cfg),
        Algorithm::NrEmQ1 => fit_nr_em_q1(data, n_classes, init, cfg),
        Algorithm::MmEm => fit_mm_em(data, n_classes, init, cfg),
        Algorithm::ThreeStep => fit_three_step_classical(data, n_classes, init, cfg),
        Algorithm::EmTwoClass => {
            if n_classes != 2 {
                return Err(LcError::Invalid(format!(
                    "em_two_class needs exactly 2 classes, got {n_classes}"
                )));
            }
            fit_em_two_class(data, init, cfg)
        }
    }
}

pub(crate) fn check_inputs(
    data: &Dataset,
    n_classes: usize,
    init: &Initialization,
    cfg: &EstimatorConfig,
) -> Result<()> {
    cfg.validate()?;
    if init.params.n_classes != n_classes {
        return Err(LcError::Invalid(format!(
            "initialization has {} classes, requested {n_classes}",
            init.params.n_classes
        )));
    }
    init.params.validate()?;
    init.params.check_compatible(data)
}
