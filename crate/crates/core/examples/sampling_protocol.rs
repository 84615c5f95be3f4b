// Samples a fraction of the database as feedback queries, exports the pairs
// their feedback yields and tabulates in-sample / out-of-sample precision.
// The encoder swap here is the identity: the original features written to a
// file, standing in for vectors from a retrained encoder.

use refine_core::session::SessionConfig;
use refine_core::sim::{
    generate_synthetic, run_sampling_protocol, SamplingOptions, SyntheticConfig, DEFAULT_FRACTIONS,
};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate_synthetic(&SyntheticConfig {
        labels: 10,
        per_label: 50,
        dim: 32,
        separation: 4.0,
        noise: 1.0,
        seed: 42,
    })?;
    let dir = tempfile::tempdir()?;
    let swap = dir.path().join("retrained.fvec");
    dataset.features()?.write(&swap)?;

    let options = SamplingOptions {
        fractions: DEFAULT_FRACTIONS.to_vec(),
        encoder_swaps: vec![Some(swap); DEFAULT_FRACTIONS.len()],
        pairs_dir: Some(dir.path().to_path_buf()),
    };
    let report = run_sampling_protocol(&dataset, &options, &SessionConfig::default())?;
    report.check_invariants()?;
    let mut table = Vec::new();
    report.write_csv(&mut table)?;
    print!("{}", String::from_utf8(table)?);
    for row in &report.sampling {
        println!(
            "{:>3}%: {} similar and {} dissimilar pairs",
            (row.fraction * 100.0).round(),
            row.similar_pairs,
            row.dissimilar_pairs
        );
    }
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
