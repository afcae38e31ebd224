use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn xdomain(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xdomain"))
        .args(args)
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = xdomain(args);
    assert!(
        out.status.success(),
        "xdomain {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn staged_pipeline_matches_snapshot_build() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let raw = d.join("raw.jsonl");
    ok(&["synth", "domains", "--docs", "150", "--domains", "3", "--out", s(&raw)]);

    let snap = d.join("snap");
    ok(&[
        "snapshot", "build", "--input", s(&raw), "--out-dir", s(&snap), "--k", "3", "--dim", "32",
    ]);

    let corpus = d.join("corpus.jsonl");
    let docs = d.join("docs.cache");
    let sents = d.join("sents.cache");
    let clusters = d.join("clusters.json");
    let index = d.join("index");
    ok(&["corpus", "ingest", "--input", s(&raw), "--out", s(&corpus)]);
    ok(&["embed", "--corpus", s(&corpus), "--kind", "doc", "--dim", "32", "--out", s(&docs)]);
    ok(&["embed", "--corpus", s(&corpus), "--kind", "sent", "--dim", "32", "--out", s(&sents)]);
    ok(&[
        "cluster", "--vectors", s(&docs), "--k", "3", "--seed", "42", "--out", s(&clusters), "--corpus", s(&corpus),
    ]);
    ok(&[
        "index", "build", "--corpus", s(&corpus), "--sent-cache", s(&sents), "--clusters", s(&clusters), "--out-dir",
        s(&index),
    ]);

    let same = |a: &Path, b: &Path| assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap(), "{a:?} vs {b:?}");
    same(&corpus, &snap.join("corpus.jsonl"));
    same(&docs, &snap.join("doc_vectors.cache"));
    same(&sents, &snap.join("sent_vectors.cache"));
    same(&clusters, &snap.join("clusters.json"));
    for c in 0..3 {
        let f = format!("cluster_{c:03}.idx");
        same(&index.join(&f), &snap.join("index").join(&f));
    }

    let manifest: Value = serde_json::from_slice(&std::fs::read(snap.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["corpus"]["documents"], 150);
    assert_eq!(manifest["cluster_sizes"].as_array().unwrap().len(), 3);

    // a rebuild into the same directory reuses the caches and changes nothing
    let before = std::fs::read(snap.join("manifest.json")).unwrap();
    ok(&[
        "snapshot", "build", "--input", s(&raw), "--out-dir", s(&snap), "--k", "3", "--dim", "32",
    ]);
    assert_eq!(before, std::fs::read(snap.join("manifest.json")).unwrap());

    let out = ok(&[
        "search",
        "--snapshot-dir",
        s(&snap),
        "--abstract",
        "A first sentence to search from. A second sentence with other words.",
        "--sentence-index",
        "1",
        "--t",
        "4",
    ]);
    let groups: Value = serde_json::from_str(&out).unwrap();
    let groups = groups.as_array().unwrap();
    assert_eq!(groups.len(), 3);
    assert!(groups.iter().all(|g| g["hits"].as_array().unwrap().len() == 4));
}

#[test]
fn eval_command_reports_both_conditions() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let kws = d.join("kws.txt");
    std::fs::write(&kws, "alloys\nceramics\nthin films\n").unwrap();
    let raw = d.join("planted.jsonl");
    ok(&["synth", "planted", "--keywords", s(&kws), "--docs-per-class", "30", "--out", s(&raw)]);
    let csv = d.join("purity.csv");
    let table = ok(&[
        "eval", "purity", "--corpus", s(&raw), "--keywords", s(&kws), "--k", "3", "--runs", "2", "--strip-keywords",
        "--reps", "random,tfidf,doc", "--dim", "64", "--out", s(&csv),
    ]);
    assert!(table.contains("90 documents, 3 classes"), "{table}");
    let mut reader = csv::Reader::from_path(&csv).unwrap();
    // 3 representations x 2 conditions x (2 runs + mean)
    assert_eq!(reader.records().count(), 18);

    let bad = xdomain(&["eval", "purity", "--corpus", s(&raw), "--keywords", s(&kws), "--k", "4"]);
    assert!(!bad.status.success());
}

#[test]
fn bad_input_fails_cleanly() {
    let out = xdomain(&["snapshot", "build", "--input", "/nonexistent.jsonl", "--out-dir", "/tmp/never"]);
    assert!(!out.status.success());
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
    let out = xdomain(&["search", "--snapshot-dir", "/nonexistent", "--abstract", "x."]);
    assert!(!out.status.success());
}
