// Feature re-weighting without group memory: every item queries the rest of
// the database and the mean accuracy curve is reported.

use refine_core::session::{SessionConfig, WeightMode};
use refine_core::sim::{generate_synthetic, run_baseline, SyntheticConfig};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate_synthetic(&SyntheticConfig {
        labels: 10,
        per_label: 100,
        dim: 32,
        separation: 4.0,
        noise: 1.0,
        seed: 42,
    })?;
    let ids: Vec<&str> = dataset.items().iter().map(|i| i.id.as_str()).collect();
    for mode in [WeightMode::SigmaRatio, WeightMode::Discriminant] {
        let cfg = SessionConfig {
            weight_mode: mode,
            rng_seed: 42,
            ..SessionConfig::default()
        };
        let report = run_baseline(&dataset, &ids, &ids, &cfg)?;
        report.check_invariants()?;
        let eval = report.baseline.expect("baseline evaluation");
        println!(
            "{mode:?}: RF0 precision {:.3}, mean accuracy {:.3}, mean RF iterations {:.2}",
            eval.mean_rf0_precision.unwrap_or(0.0),
            eval.mean_accuracy.unwrap_or(0.0),
            eval.mean_rf_iteration_number.unwrap_or(0.0)
        );
        println!(
            "  accuracy by iteration: {:.3?}",
            eval.mean_accuracy_by_iteration
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
