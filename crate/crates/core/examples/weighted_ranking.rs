// Ranks a small database under uniform weights and under weights learned from
// one round of relevance judgements.

use std::collections::HashSet;

use refine_core::data::{Dataset, FeatureMatrix, ItemRecord};
use refine_core::retrieval::{rank, WeightVector};
use refine_core::session::{compute_weights, SessionConfig};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    // Feature 0 separates the labels; feature 1 is noise with a large spread.
    let rows = vec![
        vec![0.0, 0.0],
        vec![0.1, 4.0],
        vec![0.2, -3.0],
        vec![1.0, 0.5],
        vec![1.1, -0.5],
        vec![0.9, 0.2],
    ];
    let labels = ["a", "a", "a", "b", "b", "b"];
    let items = labels
        .iter()
        .enumerate()
        .map(|(i, l)| ItemRecord::new(format!("item{i}"), *l))
        .collect();
    let db = Dataset::new(items, FeatureMatrix::from_rows(&rows)?)?;
    let query = db.vector("item0")?.to_vec();
    let exclude: HashSet<String> = ["item0".to_string()].into();

    let uniform = rank(&query, &db, &WeightVector::uniform(2), &exclude, 5)?;
    println!("uniform ranking: {:?}", uniform.ids());

    let weights = compute_weights(
        &["item1", "item2"],
        &["item3", "item4"],
        &db,
        &SessionConfig::default(),
    )?;
    println!("learned weights: {:?}", weights.as_slice());
    let learned = rank(&query, &db, &weights, &exclude, 5)?;
    println!("learned ranking: {:?}", learned.ids());
    assert_eq!(&learned.ids()[..2], ["item1", "item2"]);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
