//! Synthetic data generation and the multi-start benchmark protocol.

use std::time::Instant;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{LcError, Result};
use crate::estimators::{fit, init_random, Algorithm, EstimatorConfig};
use crate::model::{class_probabilities, Dataset, ModelParams};

/// Converged log-likelihoods within this distance of the best are counted as
/// reaching the maximum.
pub const MODE_TOL: f64 = 1e-4;

/// Generator for one design column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovariateSpec {
    Intercept,
    Normal {
        mean: f64,
        sd: f64,
    },
    Uniform {
        low: f64,
        high: f64,
    },
    /// Numeric codes drawn with the given probabilities.
    Categorical {
        values: Vec<f64>,
        probs: Vec<f64>,
    },
}

impl CovariateSpec {
    fn validate(&self) -> Result<()> {
        match self {
            CovariateSpec::Intercept => Ok(()),
            CovariateSpec::Normal { mean, sd } => {
                if mean.is_finite() && sd.is_finite() && *sd >= 0.0 {
                    Ok(())
                } else {
                    Err(LcError::Invalid(
                        "normal covariate needs finite mean and sd >= 0".into(),
                    ))
                }
            }
            CovariateSpec::Uniform { low, high } => {
                if low.is_finite() && high.is_finite() && low < high {
                    Ok(())
                } else {
                    Err(LcError::Invalid(
                        "uniform covariate needs finite low < high".into(),
                    ))
                }
            }
            CovariateSpec::Categorical { values, probs } => {
                let sum: f64 = probs.iter().sum();
                if values.is_empty()
                    || values.len() != probs.len()
                    || values.iter().any(|v| !v.is_finite())
                    || probs.iter().any(|p| !(*p >= 0.0))
                    || (sum - 1.0).abs() > 1e-9
                {
                    Err(LcError::Invalid(
                        "categorical covariate needs matching values and a probability vector"
                            .into(),
                    ))
                } else {
                    Ok(())
                }
            }
        }
    }

    fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            CovariateSpec::Intercept => 1.0,
            CovariateSpec::Normal { mean, sd } => {
                mean + sd * Normal::new(0.0, 1.0).expect("unit normal").sample(rng)
            }
            CovariateSpec::Uniform { low, high } => rng.random_range(*low..*high),
            CovariateSpec::Categorical { values, probs } => values[sample_index(rng, probs)],
        }
    }
}

fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return k;
        }
    }
    // u landed in the rounding gap above the cumulative sum
    probs
        .iter()
        .rposition(|p| *p > 0.0)
        .unwrap_or(probs.len() - 1)
}

/// Generating parameters plus a description of how to draw covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct TrueModel {
    pub params: ModelParams,
    pub covariates: Vec<CovariateSpec>,
}

impl TrueModel {
    pub fn new(params: ModelParams, covariates: Vec<CovariateSpec>) -> Result<Self> {
        let model = TrueModel { params, covariates };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.covariates.is_empty() {
            return Err(LcError::Invalid(
                "need at least one covariate column".into(),
            ));
        }
        if self.params.n_classes > 1 && self.params.beta.ncols() != self.covariates.len() {
            return Err(LcError::Shape(format!(
                "beta has {} columns but {} covariates are specified",
                self.params.beta.ncols(),
                self.covariates.len()
            )));
        }
        if self.params.n_items() == 0 {
            return Err(LcError::Invalid("need at least one item".into()));
        }
        self.covariates.iter().try_for_each(CovariateSpec::validate)
    }

    pub fn category_counts(&self) -> Vec<usize> {
        self.params.pi[0].iter().map(Vec::len).collect()
    }

    /// A survey-shaped model with three classes: two partisan classes that
    /// rate one candidate favourably and the other poorly on `n_items / 2`
    /// four-point items each, and a lukewarm middle class. Class membership
    /// depends on a seven-point party-identification code.
    pub fn election_analog() -> Self {
        let n_items = 12;
        let half = n_items / 2;
        let favourable = [0.40, 0.40, 0.15, 0.05];
        let unfavourable = [0.05, 0.20, 0.40, 0.35];
        let lukewarm = [0.15, 0.40, 0.30, 0.15];
        let class = |first: [f64; 4], second: [f64; 4]| -> Vec<Vec<f64>> {
            (0..n_items)
                .map(|j| {
                    if j < half {
                        first.to_vec()
                    } else {
                        second.to_vec()
                    }
                })
                .collect()
        };
        let pi = vec![
            class(favourable, unfavourable),
            class(unfavourable, favourable),
            class(lukewarm, lukewarm),
        ];
        // party code 1 (strong democrat) .. 7 (strong republican); class 3 is the reference
        let beta = DMatrix::from_row_slice(2, 2, &[2.4, -0.7, -3.2, 0.7]);
        let party_probs = [0.20, 0.14, 0.12, 0.10, 0.12, 0.14, 0.18];
        TrueModel::new(
            ModelParams::new(3, beta, pi).expect("valid election analog"),
            vec![
                CovariateSpec::Intercept,
                CovariateSpec::Categorical {
                    values: (1..=7).map(f64::from).collect(),
                    probs: party_probs.to_vec(),
                },
            ],
        )
        .expect("valid election analog")
    }

    /// Random model with an intercept and a seven-level party-style covariate.
    /// Class profiles are Dirichlet(0.5) draws, which keeps classes distinct.
    pub fn random(
        n_classes: usize,
        n_items: usize,
        n_categories: usize,
        seed: u64,
    ) -> Result<Self> {
        if n_classes == 0 || n_items == 0 || n_categories < 2 {
            return Err(LcError::Invalid(
                "random model needs R >= 1, J >= 1 and K >= 2".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).expect("unit normal");
        let beta = DMatrix::from_fn(n_classes - 1, 2, |_, c| {
            let z: f64 = normal.sample(&mut rng);
            if c == 0 {
                z
            } else {
                0.3 * z
            }
        });
        let gamma = rand_distr::Gamma::new(0.5, 1.0).expect("valid gamma");
        let pi = (0..n_classes)
            .map(|_| {
                (0..n_items)
                    .map(|_| {
                        let draws: Vec<f64> = (0..n_categories)
                            .map(|_| gamma.sample(&mut rng) + 1e-3)
                            .collect();
                        let total: f64 = draws.iter().sum();
                        let mut row: Vec<f64> = draws.iter().map(|d| d / total).collect();
                        let drift = 1.0 - row.iter().sum::<f64>();
                        row[n_categories - 1] += drift;
                        row
                    })
                    .collect()
            })
            .collect();
        TrueModel::new(
            ModelParams::new(n_classes, beta, pi)?,
            vec![
                CovariateSpec::Intercept,
                CovariateSpec::Categorical {
                    values: (1..=7).map(f64::from).collect(),
                    probs: vec![1.0 / 7.0; 7],
                },
            ],
        )
    }
}

/// A simulated dataset and the (hidden) 0-based class labels that generated it.
#[derive(Debug, Clone, PartialEq)]
pub struct Simulated {
    pub dataset: Dataset,
    pub labels: Vec<usize>,
}

/// Draws `n` units from the generative hierarchy: covariates, then the class
/// given covariates, then each response given the class.
pub fn simulate(model: &TrueModel, n: usize, seed: u64) -> Result<Simulated> {
    if n == 0 {
        return Err(LcError::Invalid("n must be at least 1".into()));
    }
    model.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let p = model.covariates.len();
    let mut design = DMatrix::zeros(n, p);
    for i in 0..n {
        for (c, spec) in model.covariates.iter().enumerate() {
            design[(i, c)] = spec.sample(&mut rng);
        }
    }
    let counts = model.category_counts();
    let placeholder = Dataset::from_codes(n, vec![0; n * counts.len()], counts.clone(), design)?;
    let nu = class_probabilities(&model.params, &placeholder)?;
    let mut labels = Vec::with_capacity(n);
    let mut codes = Vec::with_capacity(n * counts.len());
    for i in 0..n {
        let weights: Vec<f64> = nu.row(i).iter().copied().collect();
        let s = sample_index(&mut rng, &weights);
        labels.push(s);
        for row in &model.params.pi[s] {
            codes.push(sample_index(&mut rng, row));
        }
    }
    let design = placeholder.design().clone();
    Ok(Simulated {
        dataset: Dataset::from_codes(n, codes, counts, design)?,
        labels,
    })
}

/// Outcome of one (run, algorithm) pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub algorithm: Algorithm,
    pub loglik: Option<f64>,
    pub iterations: Option<usize>,
    pub decay_count: Option<usize>,
    pub converged: bool,
    pub local_mode: bool,
    pub error: Option<String>,
    /// Seconds; excluded from the serialized report so it stays reproducible.
    #[serde(skip, default)]
    pub wall_time: f64,
}

/// One row of the benchmark summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlgorithmSummary {
    pub algorithm: Algorithm,
    /// `None` where decays are not meaningful (three-step estimation).
    pub decay_runs: Option<usize>,
    pub local_mode_runs: usize,
    pub failed_runs: usize,
    /// Median `|loglik - max|` over the local-mode runs.
    pub median_gap: Option<f64>,
    /// Median iteration count over the runs that reached the maximum.
    pub median_iters_to_max: Option<f64>,
    #[serde(skip, default)]
    pub mean_wall_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub n_classes: usize,
    pub n_runs: usize,
    pub base_seed: u64,
    pub seeds: Vec<u64>,
    pub mode_tol: f64,
    /// Best log-likelihood over all successful (algorithm, run) pairs.
    pub global_max_loglik: Option<f64>,
    pub per_algorithm: Vec<AlgorithmSummary>,
    pub runs: Vec<RunRecord>,
}

impl BenchmarkReport {
    pub fn summary(&self, algorithm: Algorithm) -> Option<&AlgorithmSummary> {
        self.per_algorithm.iter().find(|s| s.algorithm == algorithm)
    }
}

fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let m = values.len() / 2;
    Some(if values.len() % 2 == 1 {
        values[m]
    } else {
        0.5 * (values[m - 1] + values[m])
    })
}

/// Multi-start benchmark on the global rayon pool. See [`run_benchmark_with_jobs`].
pub fn run_benchmark(
    data: &Dataset,
    n_classes: usize,
    algorithms: &[Algorithm],
    n_runs: usize,
    cfg: &EstimatorConfig,
    base_seed: u64,
) -> Result<BenchmarkReport> {
    benchmark_inner(data, n_classes, algorithms, n_runs, cfg, base_seed)
}

/// Runs every algorithm from a shared initialization drawn from seed
/// `base_seed + k` for run `k`. Estimator failures are recorded per run.
/// Results do not depend on `jobs` (runs are independent and reduced in order).
pub fn run_benchmark_with_jobs(
    data: &Dataset,
    n_classes: usize,
    algorithms: &[Algorithm],
    n_runs: usize,
    cfg: &EstimatorConfig,
    base_seed: u64,
    jobs: usize,
) -> Result<BenchmarkReport> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| LcError::Invalid(format!("cannot build thread pool: {e}")))?;
    pool.install(|| benchmark_inner(data, n_classes, algorithms, n_runs, cfg, base_seed))
}

fn benchmark_inner(
    data: &Dataset,
    n_classes: usize,
    algorithms: &[Algorithm],
    n_runs: usize,
    cfg: &EstimatorConfig,
    base_seed: u64,
) -> Result<BenchmarkReport> {
    if n_runs == 0 {
        return Err(LcError::Invalid("need at least one run".into()));
    }
    if algorithms.is_empty() {
        return Err(LcError::Invalid("need at least one algorithm".into()));
    }
    cfg.validate()?;
    let seeds: Vec<u64> = (0..n_runs as u64)
        .map(|k| base_seed.wrapping_add(k))
        .collect();

    // grid[k][a] is run k of algorithm a
    let grid: Vec<Vec<RunRecord>> = seeds
        .par_iter()
        .enumerate()
        .map(|(k, &seed)| {
            let init = init_random(data, n_classes, seed);
            algorithms
                .iter()
                .map(|&algorithm| {
                    let start = Instant::now();
                    let outcome = init.as_ref().map_err(Clone::clone).and_then(|init| {
                        fit(
                            algorithm,
                            data,
                            n_classes,
                            init,
                            &EstimatorConfig { seed, ..*cfg },
                        )
                    });
                    let wall_time = start.elapsed().as_secs_f64();
                    match outcome {
                        Ok(res) => RunRecord {
                            run: k,
                            seed,
                            algorithm,
                            loglik: Some(res.final_loglik()),
                            iterations: Some(res.iterations),
                            decay_count: algorithm.tracks_decays().then_some(res.decay_count),
                            converged: res.converged,
                            local_mode: false,
                            error: None,
                            wall_time,
                        },
                        Err(e) => RunRecord {
                            run: k,
                            seed,
                            algorithm,
                            loglik: None,
                            iterations: None,
                            decay_count: None,
                            converged: false,
                            local_mode: false,
                            error: Some(e.to_string()),
                            wall_time,
                        },
                    }
                })
                .collect()
        })
        .collect();

    let global_max = grid
        .iter()
        .flatten()
        .filter_map(|r| r.loglik)
        .fold(None, |acc: Option<f64>, ll| {
            Some(acc.map_or(ll, |m| m.max(ll)))
        });

    let mut grid = grid;
    for rec in grid.iter_mut().flatten() {
        if let (Some(ll), Some(max)) = (rec.loglik, global_max) {
            rec.local_mode = ll < max - MODE_TOL;
        }
    }

    let per_algorithm = algorithms
        .iter()
        .enumerate()
        .map(|(a, &algorithm)| {
            let column: Vec<&RunRecord> = grid.iter().map(|row| &row[a]).collect();
            let ok: Vec<&&RunRecord> = column.iter().filter(|r| r.loglik.is_some()).collect();
            let max = global_max.unwrap_or(f64::NAN);
            let mut gaps: Vec<f64> = ok
                .iter()
                .filter(|r| r.local_mode)
                .map(|r| (r.loglik.unwrap() - max).abs())
                .collect();
            let mut iters: Vec<f64> = ok
                .iter()
                .filter(|r| !r.local_mode)
                .map(|r| r.iterations.unwrap() as f64)
                .collect();
            AlgorithmSummary {
                algorithm,
                decay_runs: algorithm
                    .tracks_decays()
                    .then(|| ok.iter().filter(|r| r.decay_count.unwrap_or(0) > 0).count()),
                local_mode_runs: ok.iter().filter(|r| r.local_mode).count(),
                failed_runs: column.len() - ok.len(),
                median_gap: median(&mut gaps),
                median_iters_to_max: if algorithm == Algorithm::ThreeStep {
                    None
                } else {
                    median(&mut iters)
                },
                mean_wall_time: column.iter().map(|r| r.wall_time).sum::<f64>()
                    / column.len() as f64,
            }
        })
        .collect();

    Ok(BenchmarkReport {
        n_classes,
        n_runs,
        base_seed,
        seeds,
        mode_tol: MODE_TOL,
        global_max_loglik: global_max,
        per_algorithm,
        runs: grid.into_iter().flatten().collect(),
    })
}
