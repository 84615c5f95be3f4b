// Drives one relevance-feedback session by hand: show a batch, mark the items
// that share the query's label, repeat until the session completes.

use refine_core::metrics::SessionMetrics;
use refine_core::session::{Query, Session, SessionConfig};
use refine_core::sim::{generate_synthetic, SyntheticConfig};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let db = generate_synthetic(&SyntheticConfig {
        labels: 10,
        per_label: 60,
        dim: 32,
        separation: 4.0,
        noise: 1.0,
        seed: 11,
    })?;
    let query_id = db.items()[0].id.clone();
    let query_label = db.items()[0].label.clone();

    let mut session = Session::start(Query::Item(query_id.clone()), &db, SessionConfig::default())?;
    println!("query {query_id} ({query_label})");
    while !session.is_complete() {
        let batch = session.current_batch().ids();
        let relevant: Vec<&String> = batch
            .iter()
            .filter(|id| db.label_of(id) == Some(query_label.as_str()))
            .collect();
        println!(
            "iteration {}: {} shown, {} relevant",
            session.iteration(),
            batch.len(),
            relevant.len()
        );
        session.submit_feedback(&relevant, &db, None)?;
    }

    let metrics = SessionMetrics::from_session(&session);
    println!("accuracy by iteration: {:?}", metrics.retrieval_accuracy);
    println!("RF iteration number: {}", metrics.rf_iteration_number);
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
