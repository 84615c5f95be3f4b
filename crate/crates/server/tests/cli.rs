use std::collections::BTreeSet;
use std::path::Path;
use std::process::{Command, Output};

use refine_core::data::load_dataset;
use refine_core::groups::{append_events, GroupStore};
use refine_core::session::{Query, SessionConfig};
use refine_core::sim::{run_oracle_session, ExperimentReport};

fn refine(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_refine"))
        .args(args)
        .env_remove("REFINE_MANIFEST")
        .env_remove("REFINE_FEATURES")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = refine(args);
    assert!(
        out.status.success(),
        "refine {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn report(path: &Path) -> ExperimentReport {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn data_and_sim_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "data",
        "synth",
        "--labels",
        "5",
        "--per-label",
        "20",
        "--dim",
        "12",
        "--seed",
        "3",
        "--out",
        s(d),
    ]);
    let manifest = d.join("items.jsonl");
    let features = d.join("features.fvec");

    let out = ok(&[
        "data",
        "split",
        "--manifest",
        s(&manifest),
        "--features",
        s(&features),
        "--seed",
        "1",
        "--test-per-label",
        "1",
        "--validation",
        "40",
        "--select",
        "lowest-rf0",
        "--out",
        s(d),
    ]);
    assert_eq!(out.trim(), "5 test, 40 validation, 55 retrieval");

    let reduced = d.join("reduced.fvec");
    ok(&[
        "data",
        "pca",
        "--features",
        s(&features),
        "--k",
        "4",
        "--out",
        s(&reduced),
    ]);
    assert!(std::fs::read_to_string(&reduced)
        .unwrap()
        .starts_with("FVEC1 100 4"));
    assert!(std::fs::read_to_string(d.join("reduced.fvec.pca"))
        .unwrap()
        .starts_with("PCA1 4 12"));

    let split = d.join("split.json");
    let common = [
        "--manifest",
        s(&manifest),
        "--features",
        s(&features),
        "--seed",
        "9",
    ];
    let baseline = d.join("baseline.json");
    let mut args = vec!["sim", "baseline"];
    args.extend(common);
    args.extend(["--split", s(&split), "--report", s(&baseline)]);
    ok(&args);
    assert_eq!(report(&baseline).baseline.unwrap().queries, 5);
    let csv = std::fs::read_to_string(d.join("baseline.csv")).unwrap();
    assert!(csv.starts_with("iteration,mean_accuracy\n"));

    let grouping = d.join("grouping.json");
    let mut args = vec!["sim", "grouping"];
    args.extend(common);
    args.extend([
        "--split",
        s(&split),
        "--checkpoints",
        "4",
        "--report",
        s(&grouping),
    ]);
    ok(&args);
    let at: Vec<usize> = report(&grouping)
        .checkpoints
        .iter()
        .map(|c| c.validation_queries)
        .collect();
    assert_eq!(at, [0, 10, 20, 30, 40]);

    // Same command, same bytes.
    let first = std::fs::read(&grouping).unwrap();
    ok(&args);
    assert_eq!(std::fs::read(&grouping).unwrap(), first);

    let sampling = d.join("sampling.json");
    let pairs = d.join("pairs");
    let mut args = vec!["sim", "sampling"];
    args.extend(common);
    args.extend([
        "--fractions",
        "0,0.5,1",
        "--swap",
        "-",
        "--swap",
        s(&features),
        "--swap",
        "missing.fvec",
        "--pairs-dir",
        s(&pairs),
        "--report",
        s(&sampling),
    ]);
    ok(&args);
    let rep = report(&sampling);
    assert_eq!(rep.sampling.len(), 3);
    assert_eq!(rep.warnings.len(), 1, "missing swap file is reported");
    assert!(rep.sampling[1].swapped_features.is_some());
    let table = std::fs::read_to_string(d.join("sampling.csv")).unwrap();
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines[0], "Sample %,Overall,In Sample,Out of Sample");
    assert!(lines[1].starts_with("0,") && lines[1].contains(",-,"));
    assert!(lines[3].starts_with("100,") && lines[3].ends_with(",-"));
    assert!(pairs.join("pairs_50.csv").exists());
}

#[test]
fn export_and_group_commands() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "data",
        "synth",
        "--labels",
        "3",
        "--per-label",
        "25",
        "--dim",
        "6",
        "--separation",
        "10",
        "--out",
        s(d),
    ]);
    let db = load_dataset(d.join("items.jsonl"), d.join("features.fvec")).unwrap();

    let events = d.join("events.jsonl");
    let mut store = GroupStore::new();
    for (k, item) in db.items().iter().step_by(5).enumerate() {
        let session = run_oracle_session(
            &db,
            Query::Item(item.id.clone()),
            &item.label,
            &SessionConfig::default(),
            None,
        )
        .unwrap();
        append_events(
            &events,
            &session.feedback_events(&format!("s{k}"), k as u64),
        )
        .unwrap();
        store.record_session(session.relevant(), &BTreeSet::new());
    }
    let store_path = d.join("groups.jsonl");
    store.save(&store_path).unwrap();

    let pairs = d.join("pairs.csv");
    ok(&[
        "export",
        "pairs",
        "--events",
        s(&events),
        "--out",
        s(&pairs),
        "--manifest",
        s(&d.join("items.jsonl")),
    ]);
    assert!(std::fs::read_to_string(&pairs)
        .unwrap()
        .starts_with("id_a,id_b,label,flagged\n"));
    assert!(d.join("pairs.csv.thumbnails.csv").exists());

    let classes = d.join("classes.json");
    ok(&[
        "export",
        "classes",
        "--groups",
        s(&store_path),
        "--min-size",
        "10",
        "--out",
        s(&classes),
    ]);
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&classes).unwrap()).unwrap();
    assert_eq!(
        manifest["groups"].as_array().unwrap().len(),
        store.group_count()
    );

    let stats: serde_json::Value =
        serde_json::from_str(&ok(&["groups", "stats", "--store", s(&store_path)])).unwrap();
    assert_eq!(stats["group_count"], store.group_count());
    let copy = d.join("copy.jsonl");
    ok(&[
        "groups",
        "export",
        "--store",
        s(&store_path),
        "--out",
        s(&copy),
    ]);
    assert_eq!(GroupStore::load(&copy).unwrap().groups(), store.groups());
}

#[test]
fn failures_exit_nonzero() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&[
        "data",
        "synth",
        "--labels",
        "2",
        "--per-label",
        "5",
        "--dim",
        "3",
        "--out",
        s(d),
    ]);
    let out = refine(&[
        "serve",
        "--manifest",
        s(&d.join("items.jsonl")),
        "--features",
        s(&d.join("absent.fvec")),
        "--data-dir",
        s(&d.join("data")),
        "--bind",
        "127.0.0.1:0",
    ]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.fvec"));

    let out = refine(&[
        "data",
        "split",
        "--manifest",
        s(&d.join("items.jsonl")),
        "--test-per-label",
        "5",
        "--out",
        s(d),
    ]);
    assert!(!out.status.success());
    assert!(refine(&["sim", "frobnicate"]).status.code() != Some(0));
}
