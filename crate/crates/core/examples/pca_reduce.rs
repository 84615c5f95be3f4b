// Reduces 64-dimensional features to 8 principal components and persists the
// model.

use refine_core::pca::{fit_pca, PcaModel};
use refine_core::sim::{generate_synthetic, SyntheticConfig};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let dataset = generate_synthetic(&SyntheticConfig {
        labels: 8,
        per_label: 25,
        dim: 64,
        separation: 8.0,
        noise: 1.0,
        seed: 3,
    })?;
    let features = dataset.features()?;
    let model = fit_pca(features, 8)?;

    let total: f64 = fit_pca(features, 64.min(features.rows() - 1))?
        .explained_variance()
        .iter()
        .sum();
    let kept: f64 = model.explained_variance().iter().sum();
    println!(
        "8 of 64 components keep {:.1}% of the variance",
        100.0 * kept / total
    );

    let reduced = model.transform(features)?;
    let dataset = dataset.with_features(reduced)?;
    println!(
        "reduced dataset: {} items of dim {}",
        dataset.len(),
        dataset.dim()
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("pca.model");
    model.write(&path)?;
    assert_eq!(PcaModel::read(&path)?, model);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
