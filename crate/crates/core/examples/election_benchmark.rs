//! Multi-start benchmark on a simulated election-shaped survey.
//!
//! cargo run --release -p lcreg --example election_benchmark -- [runs] [data_seed]

use lcreg::harness::{run_benchmark, simulate, TrueModel};
use lcreg::{Algorithm, EstimatorConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let runs: usize = args.next().map_or(Ok(100), |a| a.parse())?;
    let data_seed: u64 = args.next().map_or(Ok(2016), |a| a.parse())?;

    let sim = simulate(&TrueModel::election_analog(), 880, data_seed)?;
    let algorithms = [
        Algorithm::NrEm,
        Algorithm::NrEmQ1,
        Algorithm::MmEm,
        Algorithm::ThreeStep,
        Algorithm::NestedEm,
        Algorithm::HybridEm,
    ];
    let report = run_benchmark(
        &sim.dataset,
        3,
        &algorithms,
        runs,
        &EstimatorConfig::default(),
        1,
    )?;

    println!(
        "max loglik {:.4}",
        report.global_max_loglik.unwrap_or(f64::NAN)
    );
    println!(
        "{:<12} {:>7} {:>7} {:>7} {:>10} {:>8} {:>9}",
        "algorithm", "decays", "local", "failed", "gap", "iters", "time[s]"
    );
    for row in &report.per_algorithm {
        println!(
            "{:<12} {:>7} {:>7} {:>7} {:>10.3} {:>8.1} {:>9.4}",
            row.algorithm.as_str(),
            row.decay_runs.map_or("NA".into(), |d| d.to_string()),
            row.local_mode_runs,
            row.failed_runs,
            row.median_gap.unwrap_or(f64::NAN),
            row.median_iters_to_max.unwrap_or(f64::NAN),
            row.mean_wall_time,
        );
    }
    let mut errors: Vec<String> = report
        .runs
        .iter()
        .filter_map(|r| r.error.as_ref().map(|e| format!("{}: {e}", r.algorithm)))
        .collect();
    errors.sort();
    errors.dedup();
    for e in errors.iter().take(10) {
        eprintln!("failure: {e}");
    }
    Ok(())
}
