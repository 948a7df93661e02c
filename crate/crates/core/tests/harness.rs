mod common;

use lcreg::harness::{run_benchmark_with_jobs, simulate, CovariateSpec, TrueModel, MODE_TOL};
use lcreg::{run_benchmark, Algorithm, Dataset, EstimatorConfig, ModelParams};
use nalgebra::DMatrix;

fn data() -> Dataset {
    let model = TrueModel::random(2, 5, 3, 4).unwrap();
    simulate(&model, 250, 6).unwrap().dataset
}

const ALGS: [Algorithm; 4] = [
    Algorithm::NestedEm,
    Algorithm::MmEm,
    Algorithm::ThreeStep,
    Algorithm::NrEmQ1,
];

#[test]
fn report_is_deterministic_across_thread_counts() {
    let data = data();
    let cfg = EstimatorConfig::default();
    let a = run_benchmark_with_jobs(&data, 2, &ALGS, 4, &cfg, 10, 1).unwrap();
    let b = run_benchmark_with_jobs(&data, 2, &ALGS, 4, &cfg, 10, 3).unwrap();
    assert_eq!(
        serde_json::to_string(&a).unwrap(),
        serde_json::to_string(&b).unwrap()
    );
}

#[test]
fn report_does_not_depend_on_algorithm_order() {
    let data = data();
    let cfg = EstimatorConfig::default();
    let fwd = run_benchmark(&data, 2, &ALGS, 3, &cfg, 0).unwrap();
    let mut rev_algs = ALGS;
    rev_algs.reverse();
    let rev = run_benchmark(&data, 2, &rev_algs, 3, &cfg, 0).unwrap();
    assert_eq!(fwd.global_max_loglik, rev.global_max_loglik);
    for alg in ALGS {
        let a = serde_json::to_string(fwd.summary(alg).unwrap()).unwrap();
        let b = serde_json::to_string(rev.summary(alg).unwrap()).unwrap();
        assert_eq!(a, b, "{alg}");
    }
}

#[test]
fn global_max_is_attained_and_not_exceeded() {
    let data = data();
    let report = run_benchmark(&data, 2, &ALGS, 5, &EstimatorConfig::default(), 3).unwrap();
    let max = report.global_max_loglik.unwrap();
    let lls: Vec<f64> = report.runs.iter().filter_map(|r| r.loglik).collect();
    assert!(lls.contains(&max));
    assert!(lls.iter().all(|&ll| ll <= max));
    for r in &report.runs {
        if let Some(ll) = r.loglik {
            assert_eq!(r.local_mode, ll < max - MODE_TOL);
        }
    }
    for s in &report.per_algorithm {
        assert!(s.local_mode_runs <= report.n_runs);
    }
    assert_eq!(report.seeds, vec![3, 4, 5, 6, 7]);
}

#[test]
fn single_run_reduces_to_the_fit() {
    let data = data();
    let cfg = EstimatorConfig::default();
    let report = run_benchmark(&data, 2, &[Algorithm::NestedEm], 1, &cfg, 42).unwrap();
    let init = lcreg::init_random(&data, 2, 42).unwrap();
    let direct = lcreg::fit(Algorithm::NestedEm, &data, 2, &init, &cfg).unwrap();
    let run = &report.runs[0];
    assert_eq!(run.loglik, Some(direct.final_loglik()));
    assert_eq!(run.iterations, Some(direct.iterations));
    assert!(!run.local_mode);
    let s = &report.per_algorithm[0];
    assert_eq!(s.decay_runs, Some(0));
    assert_eq!(s.median_iters_to_max, Some(direct.iterations as f64));
    assert_eq!(s.median_gap, None);
}

#[test]
fn duplicate_entries_give_identical_rows() {
    let data = data();
    let algs = [Algorithm::MmEm, Algorithm::MmEm];
    let report = run_benchmark(&data, 2, &algs, 3, &EstimatorConfig::default(), 0).unwrap();
    assert_eq!(report.per_algorithm.len(), 2);
    assert_eq!(
        serde_json::to_string(&report.per_algorithm[0]).unwrap(),
        serde_json::to_string(&report.per_algorithm[1]).unwrap()
    );
}

#[test]
fn three_step_has_no_decay_or_iteration_summary() {
    let data = data();
    let report = run_benchmark(
        &data,
        2,
        &[Algorithm::ThreeStep],
        2,
        &EstimatorConfig::default(),
        0,
    )
    .unwrap();
    let s = &report.per_algorithm[0];
    assert_eq!(s.decay_runs, None);
    assert_eq!(s.median_iters_to_max, None);
}

#[test]
fn zero_runs_is_rejected() {
    let data = data();
    assert!(run_benchmark(&data, 2, &ALGS, 0, &EstimatorConfig::default(), 0).is_err());
}

#[test]
fn zero_coefficients_give_even_class_frequencies() {
    let pi = vec![vec![vec![0.5, 0.5]]; 3];
    let model = TrueModel::new(
        ModelParams::new(3, DMatrix::zeros(2, 2), pi).unwrap(),
        vec![
            CovariateSpec::Intercept,
            CovariateSpec::Normal { mean: 0.0, sd: 1.0 },
        ],
    )
    .unwrap();
    let sim = simulate(&model, 100_000, 77).unwrap();
    for r in 0..3 {
        let freq = sim.labels.iter().filter(|&&l| l == r).count() as f64 / 1e5;
        assert!((freq - 1.0 / 3.0).abs() < 0.01, "class {r}: {freq}");
    }
}

#[test]
fn single_class_labels_are_constant() {
    let model = TrueModel::random(1, 4, 3, 1).unwrap();
    let sim = simulate(&model, 50, 2).unwrap();
    assert!(sim.labels.iter().all(|&l| l == 0));
}

#[test]
fn simulate_is_deterministic() {
    let model = TrueModel::election_analog();
    let a = simulate(&model, 100, 9).unwrap();
    let b = simulate(&model, 100, 9).unwrap();
    assert_eq!(a.labels, b.labels);
    assert_eq!(a.dataset, b.dataset);
    assert!(simulate(&model, 0, 9).is_err());
}
