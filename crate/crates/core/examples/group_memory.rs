// Group memory across sessions: completed sessions form groups, later
// sessions match them and pull unseen members into their batches.

use std::collections::HashSet;

use refine_core::groups::GroupStore;
use refine_core::session::{Query, SessionConfig};
use refine_core::sim::{generate_synthetic, run_oracle_session, SyntheticConfig};

fn run_example() -> Result<(), Box<dyn std::error::Error>> {
    let mut store = GroupStore::new();
    let outcome = store.record_session(&["cat01", "cat02", "cat03"], &Default::default());
    println!("{outcome:?}");
    let outcome = store.record_session(&["cat09", "cat10"], &Default::default());
    println!("{outcome:?}");

    // A session that found cat03 and cat09 links the two groups.
    let matched = store.match_groups(&["cat03", "cat09"]);
    let outcome = store.record_session(&["cat03", "cat09", "cat11"], &matched);
    println!("{outcome:?}");
    println!("{:?}", store.stats());

    let shown: HashSet<&str> = ["cat01"].into();
    let fill = store.group_fill(&store.match_groups(&["cat02"]), 3, &shown, 1);
    println!("fill for a session that has seen cat01: {fill:?}");

    // Simulated sessions feeding one store.
    let db = generate_synthetic(&SyntheticConfig {
        labels: 4,
        per_label: 50,
        dim: 16,
        separation: 5.0,
        noise: 1.0,
        seed: 2,
    })?;
    let cfg = SessionConfig {
        grouping_enabled: true,
        ..SessionConfig::default()
    };
    let mut store = GroupStore::new();
    for item in db.items().iter().step_by(10) {
        let session = run_oracle_session(
            &db,
            Query::Item(item.id.clone()),
            &item.label,
            &cfg,
            Some(&store),
        )?;
        store.record_session(session.relevant(), session.matched_roots());
    }
    println!(
        "after 20 sessions: {} groups over {} items",
        store.group_count(),
        store.grouped_items()
    );

    let dir = tempfile::tempdir()?;
    let path = dir.path().join("groups.jsonl");
    store.save(&path)?;
    assert_eq!(GroupStore::load(&path)?.groups(), store.groups());
    Ok(())
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    run_example()
}
