use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use clausewatch::classify::Prediction;
use clausewatch::eval::read_observations;
use clausewatch::{f1_scores, rank_configs, MetricReport, TaskName, TaskSpec, Taxonomy};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_clausewatch"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = run(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn corpus(dir: &Path) {
    ok(dir, &["--seed", "5", "synth", "--ok", "240", "--abusive", "90", "--out", "corpus.jsonl"]);
}

#[test]
fn help_and_exit_codes() {
    let out = bin().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let usage = String::from_utf8_lossy(&out.stdout);
    for sub in ["split", "index", "train-detector", "scan", "classify", "eval", "errors", "meta", "serve"] {
        assert!(usage.contains(sub), "usage lacks {sub}");
    }
    let out = bin().arg("--no-such-flag").output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("Usage"));

    let dir = tempfile::tempdir().unwrap();
    let out = run(dir.path(), &["eval", "--predictions", "missing.jsonl", "--task", "dark-classify"]);
    assert_eq!(out.status.code(), Some(1));
    corpus(dir.path());
    let out = run(dir.path(), &["split", "--corpus", "corpus.jsonl", "--ratios", "0.5,0.5,0.5", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(1));
    let out = run(dir.path(), &["split", "--corpus", "corpus.jsonl", "--task", "purple-detect", "--out", "s.json"]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn runtime_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    // The output path is a directory, so writing fails after validation.
    fs::create_dir(dir.path().join("taken")).unwrap();
    let out = run(dir.path(), &["split", "--corpus", "corpus.jsonl", "--out", "taken"]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn split_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    for (name, seed) in [("a.json", "42"), ("b.json", "42"), ("c.json", "43")] {
        ok(d, &["split", "--corpus", "corpus.jsonl", "--ratios", "0.7,0.1,0.2", "--seed", seed, "--out", name]);
    }
    let a = fs::read(d.join("a.json")).unwrap();
    assert_eq!(a, fs::read(d.join("b.json")).unwrap());
    assert_ne!(a, fs::read(d.join("c.json")).unwrap());
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    let n = |k: &str| v[k].as_array().unwrap().len();
    assert_eq!(n("train") + n("val") + n("test"), 330);
}

#[test]
fn eval_matches_in_process_scores() {
    let dir = tempfile::tempdir().unwrap();
    let fixture = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/predictions.jsonl");
    let out = ok(dir.path(), &["eval", "--predictions", fixture.to_str().unwrap(), "--task", "dark-classify"]);
    let got: MetricReport = serde_json::from_slice(&out.stdout).unwrap();

    let preds: Vec<Prediction> =
        fs::read_to_string(&fixture).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let gold: Vec<Vec<String>> = preds.iter().map(|p| p.gold.clone()).collect();
    let pred: Vec<Vec<String>> = preds.iter().map(|p| p.predicted.clone()).collect();
    let task = TaskSpec::new(TaskName::DarkClassify, &Taxonomy::default());
    let want = f1_scores(&gold, &pred, &task.class_set).unwrap();
    assert_eq!(got, want);
    assert_eq!(got.instances, 8);
}

#[test]
fn classify_eval_meta_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    ok(d, &["split", "--corpus", "corpus.jsonl", "--task", "joint-detect", "--out", "joint.json"]);
    ok(d, &["index", "--corpus", "corpus.jsonl", "--split", "joint.json", "--out", "kb"]);
    for task in ["dark-classify", "gray-classify"] {
        let split = format!("{task}.json");
        ok(d, &["split", "--corpus", "corpus.jsonl", "--task", task, "--out", &split]);
        for seed in ["1", "2"] {
            for (id, extra) in [("rag", vec!["--mode", "rag"]), ("vote", vec!["--mode", "majority-vote"])] {
                let preds = format!("{task}-{id}-{seed}.jsonl");
                let mut args = vec!["--seed", seed, "classify", "--corpus", "corpus.jsonl", "--split", &split];
                args.extend(["--task", task, "--kb", "kb", "--out", &preds]);
                args.extend(extra);
                ok(d, &args);
                ok(d, &["--seed", seed, "eval", "--predictions", &preds, "--task", task, "--runs", "runs.jsonl", "--config-id", id]);
            }
        }
    }
    // Stub providers make batch classification reproducible.
    assert_eq!(
        fs::read(d.join("dark-classify-rag-1.jsonl")).unwrap(),
        fs::read(d.join("dark-classify-rag-2.jsonl")).unwrap()
    );

    let out = ok(d, &["meta", "--runs", "runs.jsonl"]);
    let got: Vec<serde_json::Value> = serde_json::from_slice(&out.stdout).unwrap();
    let obs = read_observations(fs::File::open(d.join("runs.jsonl")).unwrap()).unwrap();
    assert_eq!(obs.len(), 8);
    let want = rank_configs(&obs).unwrap();
    let ids: Vec<&str> = got.iter().map(|r| r["config_id"].as_str().unwrap()).collect();
    let want_ids: Vec<&str> = want.iter().map(|r| r.config_id.as_str()).collect();
    assert_eq!(ids, want_ids);

    ok(d, &["errors", "--predictions", "rag=dark-classify-rag-1.jsonl", "--task", "dark-classify", "--csv", "--out", "err.csv"]);
    let csv = fs::read_to_string(d.join("err.csv")).unwrap();
    assert!(csv.lines().nth(1).unwrap().starts_with("rag,"));
}

#[test]
fn demo_scan_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let doc = "1. El usuario puede contactar a soporte a través del formulario del sitio en horario hábil.\n\n\
               2. Podemos modificar estos términos en cualquier momento a nuestra discreción, según corresponda.\n";
    fs::write(d.join("doc.txt"), doc).unwrap();
    let a = ok(d, &["scan", "--demo", "doc.txt"]).stdout;
    let b = ok(d, &["scan", "--demo", "doc.txt"]).stdout;
    assert_eq!(a, b);
    let v: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert_eq!(v["findings"].as_array().unwrap().len(), 1);
    assert_eq!(v["findings"][0]["labels"], serde_json::json!(["cr"]));
}

#[test]
fn train_and_scan_with_config() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    corpus(d);
    fs::write(
        d.join("clausewatch.toml"),
        "[paths]\nknowledge_base = \"kb\"\ndetector = \"detector.json\"\n\n[providers.stub]\nchat = \"phrase\"\n",
    )
    .unwrap();
    ok(d, &["--config", "clausewatch.toml", "index", "--corpus", "corpus.jsonl"]);
    let out = ok(d, &["--config", "clausewatch.toml", "train-detector", "--corpus", "corpus.jsonl"]);
    let summary: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(summary["train_f1"].as_f64().unwrap() > 0.9);
    fs::write(d.join("page.html"), "<html><body><p>Sin cláusulas relevantes aquí.</p></body></html>").unwrap();
    let out = ok(d, &["--config", "clausewatch.toml", "scan", "page.html"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["document"]["content_type"], "html");

    fs::write(d.join("bad.toml"), "[paths]\nno_such_key = 1\n").unwrap();
    let out = run(d, &["--config", "bad.toml", "scan", "page.html"]);
    assert_eq!(out.status.code(), Some(1));
}
