// Writes a synthetic dataset as a manifest plus feature file, loads it back
// and splits it into test queries, validation queries and a retrieval
// database.

use refine_core::data::{load_dataset, split_dataset, write_manifest};
use refine_core::sim::{generate_synthetic, SyntheticConfig};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dir = tempfile::tempdir()?;
    let dataset = generate_synthetic(&SyntheticConfig {
        labels: 5,
        per_label: 30,
        dim: 16,
        separation: 6.0,
        noise: 1.0,
        seed: 7,
    })?;

    let manifest = dir.path().join("items.jsonl");
    let features = dir.path().join("features.fvec");
    write_manifest(&manifest, dataset.items())?;
    dataset.features()?.write(&features)?;

    let loaded = load_dataset(&manifest, &features)?;
    assert_eq!(loaded.features()?, dataset.features()?);
    println!(
        "loaded {} items, {} labels, dim {}",
        loaded.len(),
        loaded.labels().len(),
        loaded.dim()
    );

    let split = split_dataset(&loaded, 7, 1, 40)?;
    split.write(dir.path().join("split.json"))?;
    println!(
        "split: {} test, {} validation, {} in the retrieval database",
        split.test.len(),
        split.validation.len(),
        split.retrieval_db.len()
    );
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
