//! Pólya-gamma expectations and the weighted least-squares update they induce.
//!
//! For a logistic term with linear predictor `z`, the conditional mean of the
//! augmenting PG(1, z) variable is `tanh(z/2) / (2z)`. Replacing the latent
//! weights with that mean turns the logistic log-likelihood into a weighted
//! Gaussian one in `x'beta`, maximized by generalized least squares.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{LcError, Result};
use crate::model::{log_sum_exp, Dataset};

/// Below this `|z|` the closed form loses precision to cancellation.
const SERIES_THRESHOLD: f64 = 1e-4;

/// Lower bound on the expectation before it is used as a divisor.
pub const OMEGA_FLOOR: f64 = 1e-12;

/// Largest accepted condition number of the GLS normal matrix.
pub const MAX_CONDITION: f64 = 1e12;

#[inline]
pub(crate) fn pg_mean(z: f64) -> f64 {
    if z.abs() < SERIES_THRESHOLD {
        0.25 - z * z / 48.0
    } else {
        (0.5 * z).tanh() / (2.0 * z)
    }
}

/// Mean of a PG(1, z) variable, `tanh(z/2) / (2z)`, with the value `1/4` at `z = 0`.
pub fn pg_expectation(z: f64) -> Result<f64> {
    if !z.is_finite() {
        return Err(LcError::Domain(format!(
            "Pólya-gamma expectation needs a finite argument, got {z}"
        )));
    }
    Ok(pg_mean(z))
}

/// Per-unit quantities for one nested cycle (one class block).
#[derive(Debug, Clone, PartialEq)]
pub struct PgWeights {
    pub omega_bar: Vec<f64>,
    pub eta_bar: Vec<f64>,
    pub offsets: Vec<f64>,
}

impl PgWeights {
    /// Checks `0 < omega <= 1/4` and finiteness.
    pub fn validate(&self) -> Result<()> {
        let n = self.omega_bar.len();
        if self.eta_bar.len() != n || self.offsets.len() != n {
            return Err(LcError::Shape("PgWeights vectors differ in length".into()));
        }
        if self
            .omega_bar
            .iter()
            .any(|w| !(w.is_finite() && *w > 0.0 && *w <= 0.25))
        {
            return Err(LcError::Invalid("omega_bar outside (0, 1/4]".into()));
        }
        if self
            .eta_bar
            .iter()
            .chain(&self.offsets)
            .any(|v| !v.is_finite())
        {
            return Err(LcError::Invalid(
                "non-finite working response or offset".into(),
            ));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.omega_bar.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega_bar.is_empty()
    }
}

/// Offsets `a_i = log sum_{l != r} exp(x_i'beta_l)` for class block `r`
/// (0-based, `r < R-1`), counting the reference class as `exp(0)`.
pub fn class_offsets(beta: &DMatrix<f64>, r: usize, data: &Dataset) -> Result<Vec<f64>> {
    if r >= beta.nrows() {
        return Err(LcError::Shape(format!(
            "class block {} out of range for {} free blocks",
            r + 1,
            beta.nrows()
        )));
    }
    if beta.ncols() != data.n_covariates() {
        return Err(LcError::Shape(format!(
            "beta has {} columns, design has {}",
            beta.ncols(),
            data.n_covariates()
        )));
    }
    let eta = data.design() * beta.transpose();
    let mut buf = Vec::with_capacity(beta.nrows());
    Ok((0..data.n_units())
        .map(|i| {
            buf.clear();
            buf.extend((0..beta.nrows()).filter(|&l| l != r).map(|l| eta[(i, l)]));
            buf.push(0.0);
            log_sum_exp(&buf)
        })
        .collect())
}

fn linear_predictor(beta_r: &[f64], data: &Dataset) -> Result<DVector<f64>> {
    if beta_r.len() != data.n_covariates() {
        return Err(LcError::Shape(format!(
            "coefficient row has length {}, design has {} columns",
            beta_r.len(),
            data.n_covariates()
        )));
    }
    Ok(data.design() * DVector::from_column_slice(beta_r))
}

/// Nested expectation step for one class block: PG means at the current
/// `beta_r` and the matching working responses.
pub fn pg_weights_for_cycle(
    beta_r: &[f64],
    offsets: &[f64],
    sbar_r: &[f64],
    data: &Dataset,
) -> Result<PgWeights> {
    let n = data.n_units();
    if offsets.len() != n || sbar_r.len() != n {
        return Err(LcError::Shape(format!(
            "offsets ({}) and responsibilities ({}) must have one entry per unit ({n})",
            offsets.len(),
            sbar_r.len()
        )));
    }
    if let Some(i) = sbar_r.iter().position(|s| !(0.0..=1.0).contains(s)) {
        return Err(LcError::Domain(format!(
            "responsibility {} of unit {} outside [0, 1]",
            sbar_r[i],
            i + 1
        )));
    }
    let eta = linear_predictor(beta_r, data)?;
    let mut omega_bar = Vec::with_capacity(n);
    let mut eta_bar = Vec::with_capacity(n);
    for i in 0..n {
        let z = eta[i] - offsets[i];
        let w = pg_expectation(z)?.max(OMEGA_FLOOR);
        omega_bar.push(w);
        eta_bar.push((sbar_r[i] - 0.5 + w * offsets[i]) / w);
    }
    Ok(PgWeights {
        omega_bar,
        eta_bar,
        offsets: offsets.to_vec(),
    })
}

/// Weighted least squares `(X'WX)^{-1} X'W eta` with `W = diag(omega_bar)`.
///
/// Rejects systems whose condition number exceeds [`MAX_CONDITION`].
pub fn gls_update(design: &DMatrix<f64>, weights: &PgWeights) -> Result<DVector<f64>> {
    let n = design.nrows();
    let p = design.ncols();
    if weights.len() != n || weights.eta_bar.len() != n {
        return Err(LcError::Shape(format!(
            "weights have length {}, design has {n} rows",
            weights.len()
        )));
    }
    if weights
        .omega_bar
        .iter()
        .any(|w| !(w.is_finite() && *w > 0.0))
    {
        return Err(LcError::Domain(
            "GLS weights must be positive and finite".into(),
        ));
    }
    let mut normal = DMatrix::zeros(p, p);
    let mut rhs = DVector::zeros(p);
    for i in 0..n {
        let w = weights.omega_bar[i];
        let we = w * weights.eta_bar[i];
        for a in 0..p {
            let xa = design[(i, a)];
            rhs[a] += xa * we;
            let wxa = w * xa;
            for b in a..p {
                normal[(a, b)] += wxa * design[(i, b)];
            }
        }
    }
    for a in 0..p {
        for b in 0..a {
            normal[(a, b)] = normal[(b, a)];
        }
    }
    solve_spd(normal, &rhs, MAX_CONDITION)
}

/// Solves `A x = b` for symmetric positive-definite `A` after a condition check,
/// with one round of iterative refinement.
pub(crate) fn solve_spd(
    a: DMatrix<f64>,
    b: &DVector<f64>,
    max_condition: f64,
) -> Result<DVector<f64>> {
    let condition = condition_number(&a);
    if !(condition <= max_condition) {
        return Err(LcError::Singular {
            class: None,
            condition,
        });
    }
    let chol = a.clone().cholesky().ok_or(LcError::Singular {
        class: None,
        condition,
    })?;
    let mut x = chol.solve(b);
    let residual = b - &a * &x;
    x += chol.solve(&residual);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(LcError::Diverged);
    }
    Ok(x)
}

/// Spectral condition number of a symmetric matrix (`inf` if not positive definite).
pub(crate) fn condition_number(a: &DMatrix<f64>) -> f64 {
    if a.iter().any(|v| !v.is_finite()) {
        return f64::INFINITY;
    }
    let eig = SymmetricEigen::new(a.clone()).eigenvalues;
    let max = eig.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = eig.iter().copied().fold(f64::INFINITY, f64::min);
    if min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Logistic log-likelihood with offsets and soft responses,
/// `sum_i [s_i z_i - log(1 + exp z_i)]` with `z_i = x_i'beta_r - a_i`.
///
/// Up to a constant this is the conditional expected log-likelihood of one
/// class block given the others.
pub fn offset_logistic_loglik(
    beta_r: &[f64],
    offsets: &[f64],
    sbar_r: &[f64],
    data: &Dataset,
) -> Result<f64> {
    let eta = linear_predictor(beta_r, data)?;
    if offsets.len() != data.n_units() || sbar_r.len() != data.n_units() {
        return Err(LcError::Shape(
            "offsets/responsibilities length mismatch".into(),
        ));
    }
    Ok((0..data.n_units())
        .map(|i| {
            let z = eta[i] - offsets[i];
            sbar_r[i] * z - softplus(z)
        })
        .sum())
}

/// `log(1 + exp(z))` without overflow.
#[inline]
pub fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn intercept_data(n: usize) -> Dataset {
        Dataset::from_codes(n, vec![0; n], vec![2], DMatrix::from_element(n, 1, 1.0)).unwrap()
    }

    #[test]
    fn expectation_values() {
        assert_eq!(pg_expectation(0.0).unwrap(), 0.25);
        assert_relative_eq!(
            pg_expectation(2.0).unwrap(),
            1f64.tanh() / 4.0,
            epsilon = 1e-15
        );
        assert_relative_eq!(pg_expectation(1.0).unwrap(), 0.2310586, epsilon = 1e-7);
        for z in [1e-6, 3e-4, 0.7, 13.0, 700.0] {
            assert_eq!(pg_expectation(z).unwrap(), pg_expectation(-z).unwrap());
        }
        assert!((pg_expectation(1e-8).unwrap() - 0.25).abs() < 1e-10);
        assert!(pg_expectation(f64::NAN).is_err());
        assert!(pg_expectation(f64::INFINITY).is_err());
    }

    #[test]
    fn series_branch_matches_closed_form_at_threshold() {
        let z = SERIES_THRESHOLD;
        let series = 0.25 - z * z / 48.0;
        let closed = (0.5 * z).tanh() / (2.0 * z);
        assert!((series - closed).abs() < 1e-15);
    }

    #[test]
    fn zero_offsets_zero_beta() {
        let data = intercept_data(3);
        let s = [0.1, 0.5, 0.9];
        let w = pg_weights_for_cycle(&[0.0], &[0.0; 3], &s, &data).unwrap();
        assert_eq!(w.omega_bar, vec![0.25; 3]);
        for (e, s) in w.eta_bar.iter().zip(s) {
            assert_relative_eq!(*e, 4.0 * (s - 0.5), epsilon = 1e-15);
        }
        w.validate().unwrap();
    }

    #[test]
    fn offset_shifts_argument() {
        let data = intercept_data(1);
        let w = pg_weights_for_cycle(&[2.0], &[1.0], &[0.3], &data).unwrap();
        assert_relative_eq!(w.omega_bar[0], 0.5f64.tanh() / 2.0, epsilon = 1e-15);
        assert_relative_eq!(w.omega_bar[0], 0.2310586, epsilon = 1e-7);
        assert_relative_eq!(
            w.eta_bar[0],
            (0.3 - 0.5) / w.omega_bar[0] + 1.0,
            epsilon = 1e-12
        );
    }

    #[test]
    fn two_class_offsets_are_zero() {
        let data = Dataset::from_codes(
            2,
            vec![0, 1],
            vec![2],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.3, 1.0, -2.0]),
        )
        .unwrap();
        let beta = DMatrix::from_row_slice(1, 2, &[0.4, 1.1]);
        assert_eq!(class_offsets(&beta, 0, &data).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn three_class_offsets() {
        let data = Dataset::from_codes(
            1,
            vec![0],
            vec![2],
            DMatrix::from_row_slice(1, 2, &[1.0, 0.5]),
        )
        .unwrap();
        let beta = DMatrix::from_row_slice(2, 2, &[0.2, 0.4, -1.0, 2.0]);
        let a0 = class_offsets(&beta, 0, &data).unwrap()[0];
        let a1 = class_offsets(&beta, 1, &data).unwrap()[0];
        assert_relative_eq!(a0, (0f64.exp() + 1.0).ln(), epsilon = 1e-15);
        assert_relative_eq!(a1, (0.4f64.exp() + 1.0).ln(), epsilon = 1e-15);
    }

    #[test]
    fn gls_weighted_mean() {
        let data = intercept_data(3);
        let w = PgWeights {
            omega_bar: vec![1.0, 2.0, 1.0],
            eta_bar: vec![0.0, 3.0, 0.0],
            offsets: vec![0.0; 3],
        };
        let beta = gls_update(data.design(), &w).unwrap();
        assert_relative_eq!(beta[0], 1.5, epsilon = 1e-14);
    }

    #[test]
    fn gls_interpolates_square_design() {
        let x = DMatrix::from_row_slice(3, 3, &[1.0, 0.2, -1.0, 1.0, 1.5, 0.3, 1.0, -0.7, 2.0]);
        let w = PgWeights {
            omega_bar: vec![0.1, 0.2, 0.05],
            eta_bar: vec![1.0, -2.0, 0.5],
            offsets: vec![0.0; 3],
        };
        let beta = gls_update(&x, &w).unwrap();
        let fitted = &x * &beta;
        for i in 0..3 {
            assert_relative_eq!(fitted[i], w.eta_bar[i], epsilon = 1e-10);
        }
    }

    #[test]
    fn gls_scale_invariant_in_weights() {
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 0.2, 1.0, 1.5, 1.0, -0.7, 1.0, 3.0]);
        let eta = vec![1.0, -2.0, 0.5, 0.1];
        let base = gls_update(
            &x,
            &PgWeights {
                omega_bar: vec![0.2; 4],
                eta_bar: eta.clone(),
                offsets: vec![0.0; 4],
            },
        )
        .unwrap();
        let scaled = gls_update(
            &x,
            &PgWeights {
                omega_bar: vec![0.2 * 7.5; 4],
                eta_bar: eta,
                offsets: vec![0.0; 4],
            },
        )
        .unwrap();
        assert_relative_eq!(base, scaled, epsilon = 1e-12);
    }

    #[test]
    fn gls_rejects_rank_deficient_design() {
        let x = DMatrix::from_row_slice(3, 2, &[1.0, 2.0, 1.0, 2.0, 1.0, 2.0]);
        let w = PgWeights {
            omega_bar: vec![0.25; 3],
            eta_bar: vec![1.0, 0.0, -1.0],
            offsets: vec![0.0; 3],
        };
        assert!(matches!(
            gls_update(&x, &w),
            Err(LcError::Singular { class: None, .. })
        ));
    }

    #[test]
    fn softplus_is_stable() {
        assert_relative_eq!(softplus(0.0), 2f64.ln(), epsilon = 1e-15);
        assert_relative_eq!(softplus(800.0), 800.0, epsilon = 1e-12);
        assert!(softplus(-800.0) >= 0.0);
    }
}
