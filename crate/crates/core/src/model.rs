//! Data model and the likelihood computations shared by every estimator.
//!
//! A latent class regression model with `R` classes has multinomial-logit
//! class weights `nu_r(x) = exp(x'beta_r) / sum_l exp(x'beta_l)` with the last
//! class pinned to `beta_R = 0`, and class-conditional independent categorical
//! responses `pi[r][j][k]`. All products over items are carried in log space.
//!
//! Category codes are 0-based inside this crate. The 1-based convention only
//! exists at ingestion boundaries ([`Dataset::new`], file readers).

use nalgebra::DMatrix;

use crate::error::{LcError, Result};

/// Tolerance for the simplex constraint on each `pi[r][j]` row.
pub const SIMPLEX_TOL: f64 = 1e-12;

/// `n` units with `J` categorical responses each, plus an `n x P` design.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    n_units: usize,
    n_items: usize,
    /// Row-major `n x J`, 0-based codes.
    codes: Vec<usize>,
    category_counts: Vec<usize>,
    design: DMatrix<f64>,
}

impl Dataset {
    /// Builds a dataset from 1-based response codes (`responses[i][j]` in `1..=K_j`).
    pub fn new(
        responses: Vec<Vec<usize>>,
        category_counts: Vec<usize>,
        design: DMatrix<f64>,
    ) -> Result<Self> {
        let n_items = category_counts.len();
        let mut codes = Vec::with_capacity(responses.len() * n_items);
        for (i, row) in responses.iter().enumerate() {
            if row.len() != n_items {
                return Err(LcError::Shape(format!(
                    "unit {} has {} responses, expected {}",
                    i + 1,
                    row.len(),
                    n_items
                )));
            }
            for (j, &y) in row.iter().enumerate() {
                if y == 0 || y > category_counts[j] {
                    return Err(LcError::Invalid(format!(
                        "response code {y} for unit {}, item {} outside 1..={}",
                        i + 1,
                        j + 1,
                        category_counts[j]
                    )));
                }
                codes.push(y - 1);
            }
        }
        Self::from_codes(responses.len(), codes, category_counts, design)
    }

    /// Builds a dataset from 0-based, row-major codes.
    pub fn from_codes(
        n_units: usize,
        codes: Vec<usize>,
        category_counts: Vec<usize>,
        design: DMatrix<f64>,
    ) -> Result<Self> {
        let n_items = category_counts.len();
        if n_units == 0 || n_items == 0 || design.ncols() == 0 {
            return Err(LcError::Invalid(
                "dataset needs n >= 1 units, J >= 1 items and P >= 1 design columns".into(),
            ));
        }
        if let Some(j) = category_counts.iter().position(|&k| k < 2) {
            return Err(LcError::Invalid(format!(
                "item {} declares {} categories, need at least 2",
                j + 1,
                category_counts[j]
            )));
        }
        if codes.len() != n_units * n_items {
            return Err(LcError::Shape(format!(
                "{} codes for {} units x {} items",
                codes.len(),
                n_units,
                n_items
            )));
        }
        if design.nrows() != n_units {
            return Err(LcError::Shape(format!(
                "design has {} rows, dataset has {} units",
                design.nrows(),
                n_units
            )));
        }
        for (idx, &c) in codes.iter().enumerate() {
            let j = idx % n_items;
            if c >= category_counts[j] {
                return Err(LcError::Invalid(format!(
                    "response code {} for unit {}, item {} outside 1..={}",
                    c + 1,
                    idx / n_items + 1,
                    j + 1,
                    category_counts[j]
                )));
            }
        }
        if let Some(pos) = design.iter().position(|v| !v.is_finite()) {
            return Err(LcError::Invalid(format!(
                "non-finite design entry at unit {}, column {}",
                pos % n_units + 1,
                pos / n_units + 1
            )));
        }
        Ok(Dataset {
            n_units,
            n_items,
            codes,
            category_counts,
            design,
        })
    }

    pub fn n_units(&self) -> usize {
        self.n_units
    }

    pub fn n_items(&self) -> usize {
        self.n_items
    }

    pub fn n_covariates(&self) -> usize {
        self.design.ncols()
    }

    pub fn category_counts(&self) -> &[usize] {
        &self.category_counts
    }

    pub fn design(&self) -> &DMatrix<f64> {
        &self.design
    }

    /// 0-based code of unit `i` on item `j`.
    #[inline]
    pub fn code(&self, i: usize, j: usize) -> usize {
        self.codes[i * self.n_items + j]
    }

    /// 0-based codes of unit `i`.
    #[inline]
    pub fn unit_codes(&self, i: usize) -> &[usize] {
        &self.codes[i * self.n_items..(i + 1) * self.n_items]
    }

    /// Responses as 1-based codes, one row per unit.
    pub fn responses_one_based(&self) -> Vec<Vec<usize>> {
        (0..self.n_units)
            .map(|i| self.unit_codes(i).iter().map(|c| c + 1).collect())
            .collect()
    }
}

/// Regression coefficients and class-conditional response probabilities.
///
/// `beta` is `(R-1) x P`; row `r` holds `beta_r`. The reference class `R` has
/// coefficients identically zero and is never stored. `pi[r][j][k]` is the
/// probability of category `k` (0-based) on item `j` in class `r`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub n_classes: usize,
    pub beta: DMatrix<f64>,
    pub pi: Vec<Vec<Vec<f64>>>,
}

impl ModelParams {
    pub fn new(n_classes: usize, beta: DMatrix<f64>, pi: Vec<Vec<Vec<f64>>>) -> Result<Self> {
        let params = ModelParams {
            n_classes,
            beta,
            pi,
        };
        params.validate()?;
        Ok(params)
    }

    /// Checks the structural invariants (not compatibility with a dataset).
    pub fn validate(&self) -> Result<()> {
        if self.n_classes == 0 {
            return Err(LcError::Invalid("need at least one class".into()));
        }
        if self.beta.nrows() != self.n_classes - 1 {
            return Err(LcError::Shape(format!(
                "beta has {} rows, expected R-1 = {}",
                self.beta.nrows(),
                self.n_classes - 1
            )));
        }
        if self.beta.iter().any(|b| !b.is_finite()) {
            return Err(LcError::Invalid("beta has non-finite entries".into()));
        }
        if self.pi.len() != self.n_classes {
            return Err(LcError::Shape(format!(
                "pi has {} classes, expected {}",
                self.pi.len(),
                self.n_classes
            )));
        }
        let n_items = self.pi[0].len();
        for (r, class) in self.pi.iter().enumerate() {
            if class.len() != n_items {
                return Err(LcError::Shape(format!(
                    "pi class {} has {} items, class 1 has {}",
                    r + 1,
                    class.len(),
                    n_items
                )));
            }
            for (j, row) in class.iter().enumerate() {
                if row.len() != self.pi[0][j].len() {
                    return Err(LcError::Shape(format!(
                        "pi class {} item {} has {} categories, class 1 has {}",
                        r + 1,
                        j + 1,
                        row.len(),
                        self.pi[0][j].len()
                    )));
                }
                let sum: f64 = row.iter().sum();
                if row.iter().any(|p| !(0.0..=1.0).contains(p)) || (sum - 1.0).abs() > SIMPLEX_TOL {
                    return Err(LcError::Invalid(format!(
                        "pi class {} item {} is not a probability vector (sum {sum})",
                        r + 1,
                        j + 1
                    )));
                }
            }
        }
        Ok(())
    }

    /// Checks that the parameter shapes match the dataset.
    pub fn check_compatible(&self, data: &Dataset) -> Result<()> {
        if self.beta.ncols() != data.n_covariates() && self.n_classes > 1 {
            return Err(LcError::Shape(format!(
                "beta has {} columns, design has {}",
                self.beta.ncols(),
                data.n_covariates()
            )));
        }
        if self.pi.len() != self.n_classes {
            return Err(LcError::Shape(
                "pi does not have one entry per class".into(),
            ));
        }
        for class in &self.pi {
            if class.len() != data.n_items() {
                return Err(LcError::Shape(format!(
                    "pi has {} items, dataset has {}",
                    class.len(),
                    data.n_items()
                )));
            }
            for (j, row) in class.iter().enumerate() {
                if row.len() != data.category_counts()[j] {
                    return Err(LcError::Shape(format!(
                        "pi item {} has {} categories, dataset declares {}",
                        j + 1,
                        row.len(),
                        data.category_counts()[j]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn n_items(&self) -> usize {
        self.pi.first().map_or(0, Vec::len)
    }
}

/// Posterior class-membership probabilities, `n x R`.
#[derive(Debug, Clone, PartialEq)]
pub struct Responsibilities {
    weights: DMatrix<f64>,
}

impl Responsibilities {
    /// Wraps a user-supplied matrix; rows must be probability vectors (within 1e-9).
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        for (i, row) in weights.row_iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|w| !(0.0..=1.0).contains(w)) || (sum - 1.0).abs() > 1e-9 {
                return Err(LcError::Invalid(format!(
                    "responsibility row {} is not a probability vector",
                    i + 1
                )));
            }
        }
        Ok(Responsibilities { weights })
    }

    /// One-hot responsibilities from 0-based hard labels.
    pub fn from_labels(labels: &[usize], n_classes: usize) -> Result<Self> {
        let mut weights = DMatrix::zeros(labels.len(), n_classes);
        for (i, &s) in labels.iter().enumerate() {
            if s >= n_classes {
                return Err(LcError::Domain(format!(
                    "label {} of unit {} outside 1..={n_classes}",
                    s + 1,
                    i + 1
                )));
            }
            weights[(i, s)] = 1.0;
        }
        Ok(Responsibilities { weights })
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    pub fn n_classes(&self) -> usize {
        self.weights.ncols()
    }

    pub fn n_units(&self) -> usize {
        self.weights.nrows()
    }

    /// Modal class per unit, ties broken toward the lowest index, plus the tie count.
    pub fn modal_assignment(&self) -> (Vec<usize>, usize) {
        let mut ties = 0;
        let labels = self
            .weights
            .row_iter()
            .map(|row| {
                let mut best = 0;
                for r in 1..row.len() {
                    if row[r] > row[best] {
                        best = r;
                    }
                }
                if (0..row.len()).any(|r| r != best && row[r] == row[best]) {
                    ties += 1;
                }
                best
            })
            .collect();
        (labels, ties)
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.weights
    }
}

/// `log(sum(exp(v)))`, returning `-inf` when every entry is `-inf`.
#[inline]
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + values.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}

fn check_beta_shape(beta: &DMatrix<f64>, n_classes: usize, data: &Dataset) -> Result<()> {
    if beta.nrows() + 1 != n_classes {
        return Err(LcError::Shape(format!(
            "beta has {} rows, expected R-1 = {}",
            beta.nrows(),
            n_classes.saturating_sub(1)
        )));
    }
    if n_classes > 1 && beta.ncols() != data.n_covariates() {
        return Err(LcError::Shape(format!(
            "beta has {} columns, design has {}",
            beta.ncols(),
            data.n_covariates()
        )));
    }
    Ok(())
}

/// `n x R` matrix of log class weights `log nu_r(x_i)`.
pub fn log_class_probabilities_for(
    beta: &DMatrix<f64>,
    n_classes: usize,
    data: &Dataset,
) -> Result<DMatrix<f64>> {
    check_beta_shape(beta, n_classes, data)?;
    let n = data.n_units();
    if n_classes == 1 {
        return Ok(DMatrix::zeros(n, 1));
    }
    let eta = data.design() * beta.transpose();
    let mut out = DMatrix::zeros(n, n_classes);
    let mut row = vec![0.0; n_classes];
    for i in 0..n {
        for r in 0..n_classes - 1 {
            row[r] = eta[(i, r)];
        }
        row[n_classes - 1] = 0.0;
        let lse = log_sum_exp(&row);
        for r in 0..n_classes {
            out[(i, r)] = row[r] - lse;
        }
    }
    Ok(out)
}

/// Covariate-dependent class probabilities `nu_r(x_i)`, one row per unit.
pub fn class_probabilities(params: &ModelParams, data: &Dataset) -> Result<DMatrix<f64>> {
    Ok(log_class_probabilities_for(&params.beta, params.n_classes, data)?.map(f64::exp))
}

/// `n x R` matrix of `sum_j log pi_jr(y_ij)`; `-inf` where a probability is zero.
pub fn log_item_densities(params: &ModelParams, data: &Dataset) -> Result<DMatrix<f64>> {
    params.check_compatible(data)?;
    let log_pi: Vec<Vec<Vec<f64>>> = params
        .pi
        .iter()
        .map(|class| {
            class
                .iter()
                .map(|row| row.iter().map(|p| p.ln()).collect())
                .collect()
        })
        .collect();
    let n = data.n_units();
    let mut out = DMatrix::zeros(n, params.n_classes);
    for i in 0..n {
        let codes = data.unit_codes(i);
        for (r, class) in log_pi.iter().enumerate() {
            out[(i, r)] = codes.iter().zip(class).map(|(&c, row)| row[c]).sum();
        }
    }
    Ok(out)
}

/// Log joint `log nu_r(x_i) + sum_j log pi_jr(y_ij)`, `n x R`.
fn log_joint(params: &ModelParams, data: &Dataset) -> Result<DMatrix<f64>> {
    let log_nu = log_class_probabilities_for(&params.beta, params.n_classes, data)?;
    let dens = log_item_densities(params, data)?;
    Ok(log_nu + dens)
}

/// Observed-data log-likelihood. Returns `-inf` if some unit has zero mixture density.
pub fn log_likelihood(params: &ModelParams, data: &Dataset) -> Result<f64> {
    let joint = log_joint(params, data)?;
    let mut total = 0.0;
    let mut buf = vec![0.0; params.n_classes];
    for i in 0..data.n_units() {
        for r in 0..params.n_classes {
            buf[r] = joint[(i, r)];
        }
        total += log_sum_exp(&buf);
    }
    Ok(total)
}

/// Responsibilities together with the log-likelihood they were normalized by.
pub fn e_step(params: &ModelParams, data: &Dataset) -> Result<(Responsibilities, f64)> {
    let mut joint = log_joint(params, data)?;
    let mut total = 0.0;
    let mut buf = vec![0.0; params.n_classes];
    for i in 0..data.n_units() {
        for r in 0..params.n_classes {
            buf[r] = joint[(i, r)];
        }
        let lse = log_sum_exp(&buf);
        if !lse.is_finite() {
            return Err(LcError::DegenerateUnit { unit: i });
        }
        total += lse;
        for r in 0..params.n_classes {
            joint[(i, r)] = (buf[r] - lse).exp();
        }
    }
    Ok((Responsibilities { weights: joint }, total))
}

/// Posterior class-membership probabilities given current parameters.
pub fn responsibilities(params: &ModelParams, data: &Dataset) -> Result<Responsibilities> {
    e_step(params, data).map(|(s, _)| s)
}

/// Complete-data log-likelihood for 0-based hard labels: the multinomial-logit
/// term plus the within-class categorical term.
pub fn complete_loglik(params: &ModelParams, data: &Dataset, labels: &[usize]) -> Result<f64> {
    if labels.len() != data.n_units() {
        return Err(LcError::Shape(format!(
            "{} labels for {} units",
            labels.len(),
            data.n_units()
        )));
    }
    if let Some(i) = labels.iter().position(|&s| s >= params.n_classes) {
        return Err(LcError::Domain(format!(
            "label {} of unit {} outside 1..={}",
            labels[i] + 1,
            i + 1,
            params.n_classes
        )));
    }
    let log_nu = log_class_probabilities_for(&params.beta, params.n_classes, data)?;
    let dens = log_item_densities(params, data)?;
    Ok(labels
        .iter()
        .enumerate()
        .map(|(i, &s)| log_nu[(i, s)] + dens[(i, s)])
        .sum())
}

/// Expected multinomial-logit log-likelihood `sum_i sum_r sbar_ir log nu_r(x_i)`.
pub fn expected_loglik_q1(
    beta: &DMatrix<f64>,
    sbar: &Responsibilities,
    data: &Dataset,
) -> Result<f64> {
    if sbar.n_units() != data.n_units() {
        return Err(LcError::Shape(format!(
            "responsibilities have {} rows, dataset has {} units",
            sbar.n_units(),
            data.n_units()
        )));
    }
    let log_nu = log_class_probabilities_for(beta, sbar.n_classes(), data)?;
    let w = sbar.weights();
    let mut total = 0.0;
    for i in 0..data.n_units() {
        for r in 0..sbar.n_classes() {
            if w[(i, r)] > 0.0 {
                total += w[(i, r)] * log_nu[(i, r)];
            }
        }
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn intercept(n: usize) -> DMatrix<f64> {
        DMatrix::from_element(n, 1, 1.0)
    }

    fn two_item_params() -> ModelParams {
        ModelParams::new(
            2,
            DMatrix::from_row_slice(1, 2, &[0.3, -0.7]),
            vec![
                vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.4]],
                vec![vec![0.7, 0.1, 0.2], vec![0.25, 0.75]],
            ],
        )
        .unwrap()
    }

    #[test]
    fn zero_beta_gives_uniform_class_weights() {
        let data = Dataset::new(
            vec![vec![1], vec![2], vec![1]],
            vec![2],
            DMatrix::from_row_slice(3, 2, &[1.0, -3.0, 1.0, 0.5, 1.0, 9.0]),
        )
        .unwrap();
        for r in [2usize, 3, 5] {
            let params = ModelParams {
                n_classes: r,
                beta: DMatrix::zeros(r - 1, 2),
                pi: vec![vec![vec![0.5, 0.5]]; r],
            };
            let nu = class_probabilities(&params, &data).unwrap();
            for v in nu.iter() {
                assert_relative_eq!(*v, 1.0 / r as f64, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn ln2_intercept_gives_two_thirds() {
        let data = Dataset::new(vec![vec![1]], vec![2], intercept(1)).unwrap();
        let params = ModelParams::new(
            2,
            DMatrix::from_element(1, 1, 2f64.ln()),
            vec![vec![vec![0.5, 0.5]]; 2],
        )
        .unwrap();
        let nu = class_probabilities(&params, &data).unwrap();
        assert_relative_eq!(nu[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(nu[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn beta_shape_mismatch_is_a_shape_error() {
        let data = Dataset::new(vec![vec![1]], vec![2], intercept(1)).unwrap();
        let params = ModelParams {
            n_classes: 2,
            beta: DMatrix::zeros(1, 3),
            pi: vec![vec![vec![0.5, 0.5]]; 2],
        };
        assert!(matches!(
            class_probabilities(&params, &data),
            Err(LcError::Shape(_))
        ));
    }

    #[test]
    fn single_uniform_class_loglik() {
        let data = Dataset::new(vec![vec![1], vec![2]], vec![2], intercept(2)).unwrap();
        let params = ModelParams::new(1, DMatrix::zeros(0, 1), vec![vec![vec![0.5, 0.5]]]).unwrap();
        assert_relative_eq!(
            log_likelihood(&params, &data).unwrap(),
            2.0 * 0.5f64.ln(),
            epsilon = 1e-12
        );
    }

    #[test]
    fn identical_classes_collapse_to_one_class() {
        let data = Dataset::new(
            vec![vec![1, 2], vec![3, 1], vec![2, 2]],
            vec![3, 2],
            intercept(3),
        )
        .unwrap();
        let pi = vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.4]];
        let one = ModelParams::new(1, DMatrix::zeros(0, 1), vec![pi.clone()]).unwrap();
        let two = ModelParams::new(2, DMatrix::zeros(1, 1), vec![pi.clone(), pi]).unwrap();
        assert_relative_eq!(
            log_likelihood(&one, &data).unwrap(),
            log_likelihood(&two, &data).unwrap(),
            epsilon = 1e-12
        );
        let s = responsibilities(&two, &data).unwrap();
        for v in s.weights().iter() {
            assert_relative_eq!(*v, 0.5, epsilon = 1e-15);
        }
    }

    #[test]
    fn single_unit_matches_enumeration() {
        let params = two_item_params();
        let x = [1.0, 0.4];
        let data = Dataset::new(
            vec![vec![2, 1]],
            vec![3, 2],
            DMatrix::from_row_slice(1, 2, &x),
        )
        .unwrap();
        let e1 = (0.3 * x[0] - 0.7 * x[1]).exp();
        let nu = [e1 / (e1 + 1.0), 1.0 / (e1 + 1.0)];
        let dens = [0.5 * 0.6, 0.1 * 0.25];
        let expected = (nu[0] * dens[0] + nu[1] * dens[1]).ln();
        assert_relative_eq!(
            log_likelihood(&params, &data).unwrap(),
            expected,
            epsilon = 1e-14
        );
    }

    #[test]
    fn bayes_rule_responsibilities() {
        let data = Dataset::new(vec![vec![1]], vec![2], intercept(1)).unwrap();
        let params = ModelParams::new(
            2,
            DMatrix::zeros(1, 1),
            vec![vec![vec![0.8, 0.2]], vec![vec![0.4, 0.6]]],
        )
        .unwrap();
        let s = responsibilities(&params, &data).unwrap();
        assert_relative_eq!(s.weights()[(0, 0)], 2.0 / 3.0, epsilon = 1e-15);
        assert_relative_eq!(s.weights()[(0, 1)], 1.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_density_unit_signals_instead_of_aborting() {
        let data = Dataset::new(vec![vec![1], vec![2]], vec![2], intercept(2)).unwrap();
        let params = ModelParams::new(
            2,
            DMatrix::zeros(1, 1),
            vec![vec![vec![1.0, 0.0]], vec![vec![1.0, 0.0]]],
        )
        .unwrap();
        assert_eq!(log_likelihood(&params, &data).unwrap(), f64::NEG_INFINITY);
        assert_eq!(
            responsibilities(&params, &data).unwrap_err(),
            LcError::DegenerateUnit { unit: 1 }
        );
    }

    #[test]
    fn exact_zero_in_one_class_is_fine() {
        let data = Dataset::new(vec![vec![1], vec![2]], vec![2], intercept(2)).unwrap();
        let params = ModelParams::new(
            2,
            DMatrix::zeros(1, 1),
            vec![vec![vec![1.0, 0.0]], vec![vec![0.5, 0.5]]],
        )
        .unwrap();
        let s = responsibilities(&params, &data).unwrap();
        assert_eq!(s.weights()[(1, 0)], 0.0);
        assert_eq!(s.weights()[(1, 1)], 1.0);
        assert!(log_likelihood(&params, &data).unwrap().is_finite());
    }

    #[test]
    fn tiny_probabilities_stay_finite() {
        // 4 items at 1e-300 underflows a direct product.
        let data = Dataset::new(vec![vec![1, 1, 1, 1]], vec![2; 4], intercept(1)).unwrap();
        let tiny = vec![vec![1e-300, 1.0 - 1e-300]; 4];
        let params = ModelParams::new(2, DMatrix::zeros(1, 1), vec![tiny.clone(), tiny]).unwrap();
        let ll = log_likelihood(&params, &data).unwrap();
        assert!(ll.is_finite());
        assert_relative_eq!(ll, 4.0 * 1e-300f64.ln(), max_relative = 1e-12);
    }

    #[test]
    fn complete_loglik_single_class_and_unrolled() {
        let data = Dataset::new(
            vec![vec![2, 1], vec![3, 2]],
            vec![3, 2],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.4, 1.0, -1.0]),
        )
        .unwrap();
        let one = ModelParams::new(
            1,
            DMatrix::zeros(0, 2),
            vec![vec![vec![0.2, 0.5, 0.3], vec![0.6, 0.4]]],
        )
        .unwrap();
        let expected = 0.5f64.ln() + 0.6f64.ln() + 0.3f64.ln() + 0.4f64.ln();
        assert_relative_eq!(
            complete_loglik(&one, &data, &[0, 0]).unwrap(),
            expected,
            epsilon = 1e-14
        );

        let params = two_item_params();
        let e1 = (0.3 - 0.7 * 0.4f64).exp();
        let unrolled = (e1 / (1.0 + e1)).ln() + 0.5f64.ln() + 0.6f64.ln();
        let one_unit = Dataset::new(
            vec![vec![2, 1]],
            vec![3, 2],
            DMatrix::from_row_slice(1, 2, &[1.0, 0.4]),
        )
        .unwrap();
        assert_relative_eq!(
            complete_loglik(&params, &one_unit, &[0]).unwrap(),
            unrolled,
            epsilon = 1e-14
        );
        assert!(matches!(
            complete_loglik(&params, &data, &[0, 2]),
            Err(LcError::Domain(_))
        ));
    }

    #[test]
    fn q1_at_zero_beta_and_with_hard_labels() {
        let data = Dataset::new(
            vec![vec![1], vec![2], vec![1], vec![2]],
            vec![2],
            DMatrix::from_row_slice(4, 2, &[1.0, 0.1, 1.0, -0.4, 1.0, 2.0, 1.0, 0.0]),
        )
        .unwrap();
        let soft = Responsibilities::new(DMatrix::from_row_slice(
            4,
            3,
            &[0.2, 0.3, 0.5, 1.0, 0.0, 0.0, 0.1, 0.1, 0.8, 0.3, 0.3, 0.4],
        ))
        .unwrap();
        let q = expected_loglik_q1(&DMatrix::zeros(2, 2), &soft, &data).unwrap();
        assert_relative_eq!(q, -4.0 * 3f64.ln(), epsilon = 1e-12);

        let params = ModelParams::new(
            3,
            DMatrix::from_row_slice(2, 2, &[0.5, -1.0, -0.2, 0.7]),
            vec![vec![vec![0.5, 0.5]]; 3],
        )
        .unwrap();
        let labels = [2, 0, 1, 1];
        let hard = Responsibilities::from_labels(&labels, 3).unwrap();
        let q_hard = expected_loglik_q1(&params.beta, &hard, &data).unwrap();
        let l2 = 4.0 * 0.5f64.ln();
        assert_relative_eq!(
            q_hard,
            complete_loglik(&params, &data, &labels).unwrap() - l2,
            epsilon = 1e-12
        );
    }

    #[test]
    fn q1_soft_two_unit_hand_value() {
        let data = Dataset::new(
            vec![vec![1], vec![2]],
            vec![2],
            DMatrix::from_row_slice(2, 1, &[1.0, 2.0]),
        )
        .unwrap();
        let s =
            Responsibilities::new(DMatrix::from_row_slice(2, 2, &[0.25, 0.75, 0.6, 0.4])).unwrap();
        let beta = DMatrix::from_element(1, 1, 0.5);
        // unit 1: z = 0.5, unit 2: z = 1.0
        let lp = |z: f64| (z.exp() / (1.0 + z.exp())).ln();
        let lq = |z: f64| (1.0 / (1.0 + z.exp())).ln();
        let expected = 0.25 * lp(0.5) + 0.75 * lq(0.5) + 0.6 * lp(1.0) + 0.4 * lq(1.0);
        assert_relative_eq!(
            expected_loglik_q1(&beta, &s, &data).unwrap(),
            expected,
            epsilon = 1e-14
        );
    }

    #[test]
    fn dataset_rejects_out_of_range_codes() {
        let err = Dataset::new(vec![vec![1, 5]], vec![2, 4], intercept(1)).unwrap_err();
        assert!(err.to_string().contains("item 2"));
        assert!(Dataset::new(vec![vec![0]], vec![2], intercept(1)).is_err());
        assert!(Dataset::new(vec![vec![1]], vec![1], intercept(1)).is_err());
        let nan = DMatrix::from_element(1, 1, f64::NAN);
        assert!(Dataset::new(vec![vec![1]], vec![2], nan).is_err());
    }

    #[test]
    fn params_reject_non_simplex_rows() {
        assert!(ModelParams::new(1, DMatrix::zeros(0, 1), vec![vec![vec![0.6, 0.6]]]).is_err());
        assert!(ModelParams::new(2, DMatrix::zeros(2, 1), vec![vec![vec![0.5, 0.5]]; 2]).is_err());
    }

    #[test]
    fn modal_assignment_breaks_ties_low() {
        let s = Responsibilities::new(DMatrix::from_row_slice(
            3,
            3,
            &[0.4, 0.4, 0.2, 0.1, 0.2, 0.7, 0.2, 0.4, 0.4],
        ))
        .unwrap();
        let (labels, ties) = s.modal_assignment();
        assert_eq!(labels, vec![0, 2, 1]);
        assert_eq!(ties, 2);
    }
}
