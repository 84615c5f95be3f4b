// Turns logged feedback into training data: labelled pairs for a similarity
// model and a per-group class dataset.

use refine_core::export::{export_class_dataset, export_pairs};
use refine_core::groups::GroupStore;
use refine_core::session::{Query, SessionConfig};
use refine_core::sim::{generate_synthetic, run_oracle_session, SyntheticConfig};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let db = generate_synthetic(&SyntheticConfig {
        labels: 6,
        per_label: 40,
        dim: 16,
        separation: 4.0,
        noise: 1.0,
        seed: 5,
    })?;
    let cfg = SessionConfig {
        grouping_enabled: true,
        ..SessionConfig::default()
    };
    let mut store = GroupStore::new();
    let mut events = Vec::new();
    for (k, item) in db.items().iter().step_by(8).enumerate() {
        let session = run_oracle_session(
            &db,
            Query::Item(item.id.clone()),
            &item.label,
            &cfg,
            Some(&store),
        )?;
        store.record_session(session.relevant(), session.matched_roots());
        events.extend(session.feedback_events(&format!("s{k}"), k as u64 * 100));
    }

    let pairs = export_pairs(&events)?;
    println!(
        "{} events -> {} pairs ({} similar, {} dissimilar, {} flagged)",
        events.len(),
        pairs.pairs.len(),
        pairs.similar(),
        pairs.dissimilar(),
        pairs.flagged()
    );
    let mut head = Vec::new();
    pairs.write_csv(&mut head)?;
    for line in String::from_utf8(head)?.lines().take(4) {
        println!("  {line}");
    }

    let classes = export_class_dataset(&store, 10, 0.2, 5)?;
    for g in &classes.groups {
        println!(
            "group {}: {} train, {} validation",
            g.root,
            g.train.len(),
            g.validation.len()
        );
    }
    println!("{} groups pruned", classes.pruned_groups.len());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
