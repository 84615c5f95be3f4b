// Streams validation queries through group memory and evaluates the test
// queries at five equal checkpoints.

use refine_core::data::split_dataset;
use refine_core::session::SessionConfig;
use refine_core::sim::{generate_synthetic, run_grouping_experiment, SyntheticConfig};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate_synthetic(&SyntheticConfig {
        labels: 10,
        per_label: 100,
        dim: 32,
        separation: 4.0,
        noise: 1.0,
        seed: 42,
    })?;
    let split = split_dataset(&dataset, 42, 2, 500)?;
    let cfg = SessionConfig {
        rng_seed: 42,
        ..SessionConfig::default()
    };
    let report = run_grouping_experiment(&dataset, &split, 5, &cfg)?;
    report.check_invariants()?;
    let mut table = Vec::new();
    report.write_csv(&mut table)?;
    print!("{}", String::from_utf8(table)?);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
