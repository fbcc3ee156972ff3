use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sidn_cli::{Ctx, RunConfig};
use sidn_core::corpus::RISK_WORDS;
use sidn_core::dataset::EncodedDataset;
use sidn_core::metrics::{evaluate, DEFAULT_THRESHOLD};
use sidn_core::model::load_weights;

fn sidn(out: &Path, config: Option<&Path>, args: &[&str]) -> Output {
    let mut c = Command::new(env!("CARGO_BIN_EXE_sidn"));
    c.args(args).arg("--out").arg(out).env_remove("SIDN_SEED");
    if let Some(p) = config {
        c.arg("--config").arg(p);
    }
    c.output().unwrap()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}: {}", o.status, String::from_utf8_lossy(&o.stderr));
    o
}

fn write_config(dir: &Path, json: &str) -> PathBuf {
    let p = dir.join("config.json");
    std::fs::write(&p, json).unwrap();
    p
}

/// Short documents so that test instances fit the exact oracle; small
/// enough to train to a useful model in seconds.
const SHORT_DOCS: &str = r#"{
  "seed": 3,
  "synthetic": {"n_docs": 600, "min_len": 4, "max_len": 8},
  "prep": {"vocab_size": 500, "maxlen": 20},
  "word2vec": {"dim": 16},
  "model": {"variant": "baseline", "conv_filters": 16, "lstm_units": 8, "dense_units": 16, "dropout": 0.2},
  "train": {"epochs_max": 30, "batch_size": 32, "lr": 0.003},
  "explain": {"n_coalitions": 256, "instances": 15, "background": 10, "top_k": 10}
}"#;

fn svg_ok(path: &Path) {
    let text = std::fs::read_to_string(path).unwrap();
    let doc = roxmltree::Document::parse(&text).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    assert_eq!(doc.root_element().tag_name().name(), "svg");
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

#[test]
fn end_to_end_on_short_documents() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SHORT_DOCS);
    let out = dir.path().join("out");
    let c = Some(cfg.as_path());
    for step in [&["gen-data"][..], &["prep"], &["embed"], &["train"], &["eval"]] {
        ok(sidn(&out, c, step));
    }

    // Vectors: one row per vocabulary word plus a header, word + 16 columns.
    let vocab_rows = std::fs::read_to_string(out.join(sidn_cli::VOCAB)).unwrap().lines().count();
    let vectors = std::fs::read_to_string(out.join(sidn_cli::VECTORS)).unwrap();
    assert_eq!(vectors.lines().count(), vocab_rows);
    assert!(vectors.lines().skip(1).all(|l| l.split(',').count() == 17));

    // History: one row per epoch; an early stop leaves best + patience rows.
    let history = std::fs::read_to_string(out.join(sidn_cli::HISTORY)).unwrap();
    let rows: Vec<Vec<f64>> =
        history.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    let best = rows.iter().min_by(|a, b| a[3].total_cmp(&b[3])).unwrap()[0] as usize;
    assert!(rows.len() == 30 || rows.len() == best + 4, "{} rows, best {best}", rows.len());

    // Metrics: exact key set, and equal to a library recomputation.
    let metrics = json(&out.join(sidn_cli::METRICS));
    let keys: Vec<&str> = metrics.as_object().unwrap().keys().map(String::as_str).collect();
    assert_eq!(keys, ["accuracy", "auc", "confusion", "f1", "precision", "recall"]);
    let data = EncodedDataset::load(out.join(sidn_cli::ENCODED)).unwrap();
    let model = load_weights(out.join(sidn_cli::WEIGHTS)).unwrap();
    let (p, y) = sidn_cli::test_predictions(&model, &data).unwrap();
    let (report, _) = evaluate(&p, &y, DEFAULT_THRESHOLD).unwrap();
    let text = std::fs::read_to_string(out.join(sidn_cli::METRICS)).unwrap();
    assert_eq!(text, serde_json::to_string_pretty(&report).unwrap() + "\n");
    assert!(report.accuracy >= 0.85, "{report:?}");
    svg_ok(&out.join(sidn_cli::CONFUSION_SVG));
    svg_ok(&out.join(sidn_cli::ROC_SVG));

    // Force mode: sampled run with a budget covering every coalition equals --exact.
    ok(sidn(&out, c, &["explain", "--mode", "force", "--instance", "2", "--n-coalitions", "4096"]));
    let kernel = json(&out.join(sidn_cli::FORCE_JSON));
    svg_ok(&out.join(sidn_cli::FORCE_SVG));
    ok(sidn(&out, c, &["explain", "--mode", "force", "--instance", "2", "--exact"]));
    let exact = json(&out.join(sidn_cli::FORCE_JSON));
    assert_eq!(exact["method"], "exact");
    for f in [&kernel, &exact] {
        let phi: f64 = f["contributions"].as_array().unwrap().iter().map(|c| c["phi"].as_f64().unwrap()).sum();
        let gap = (f["base_value"].as_f64().unwrap() + phi - f["prediction"].as_f64().unwrap()).abs();
        assert!(gap <= 1e-6, "additivity gap {gap}");
        assert!(f["additivity_gap"].as_f64().unwrap() <= 1e-6);
    }
    let by_position = |f: &serde_json::Value| -> Vec<(u64, f64)> {
        let mut v: Vec<(u64, f64)> = f["contributions"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| (c["position"].as_u64().unwrap(), c["phi"].as_f64().unwrap()))
            .collect();
        v.sort_by_key(|x| x.0);
        v
    };
    let (ka, ea) = (by_position(&kernel), by_position(&exact));
    assert_eq!(ka.len(), ea.len());
    for ((pk, vk), (pe, ve)) in ka.iter().zip(&ea) {
        assert_eq!(pk, pe);
        assert!((vk - ve).abs() <= 1e-6, "position {pk}: {vk} vs {ve}");
    }

    // Summary mode on the planted corpus ranks a risk word first.
    ok(sidn(&out, c, &["explain", "--mode", "summary"]));
    let summary = std::fs::read_to_string(out.join(sidn_cli::SUMMARY_CSV)).unwrap();
    let mut lines = summary.lines();
    assert_eq!(lines.next(), Some("word,mean_phi,mean_abs_phi,count"));
    let top = lines.next().unwrap().split(',').next().unwrap().to_string();
    let risk_stems: Vec<String> = RISK_WORDS.iter().map(|w| sidn_core::textprep::stem(w)).collect();
    assert!(risk_stems.contains(&top), "top word {top}");
    svg_ok(&out.join(sidn_cli::SUMMARY_SVG));

    let manifest = json(&out.join(sidn_cli::MANIFEST));
    assert_eq!(manifest["files"][sidn_cli::WEIGHTS]["command"], "train");
    assert_eq!(manifest["files"][sidn_cli::WEIGHTS]["seed"], 3);

    // A cap below the instance length makes --exact refuse.
    let capped = write_config(
        dir.path(),
        &SHORT_DOCS.replace(r#""n_coalitions": 256"#, r#""n_coalitions": 256, "max_exact": 1"#),
    );
    let o = sidn(&out, Some(&capped), &["explain", "--exact", "--instance", "2"]);
    assert!(!o.status.success());
}

#[test]
fn prep_is_deterministic_and_pads_to_100() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"synthetic": {"n_docs": 300}}"#);
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(sidn(out, Some(&cfg), &["gen-data"]));
        ok(sidn(out, Some(&cfg), &["prep"]));
    }
    for f in [sidn_cli::CORPUS, sidn_cli::VOCAB, sidn_cli::ENCODED] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }
    let d = EncodedDataset::load(a.join(sidn_cli::ENCODED)).unwrap();
    assert_eq!(d.len(), 300);
    for i in 0..d.len() {
        let s = d.sequence(i);
        let zeros = s.indices.iter().take_while(|&&v| v == 0).count();
        assert_eq!(s.indices.len(), 100);
        assert!(!s.indices[zeros..].contains(&0));
    }
}

#[test]
fn malformed_rows_are_reported_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("bad.csv");
    std::fs::write(&input, "text,label\nfine words,suicide\nother words,perhaps\nmore,non-suicide\n").unwrap();
    let o = sidn(dir.path(), None, &["prep", "--input", input.to_str().unwrap()]);
    assert!(!o.status.success());
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn empty_text_is_encoded_as_padding_with_a_warning() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("c.csv");
    let mut text = String::from("text,label\n");
    for i in 0..30 {
        let label = if i % 2 == 0 { "suicide" } else { "non-suicide" };
        let body = if i == 7 { String::new() } else { format!("word{} alpha beta", i % 5) };
        text.push_str(&format!("\"{body}\",{label}\n"));
    }
    std::fs::write(&input, text).unwrap();
    let o = ok(sidn(dir.path(), None, &["prep", "--input", input.to_str().unwrap()]));
    assert!(String::from_utf8_lossy(&o.stderr).contains("warning: document 7"));
    let d = EncodedDataset::load(dir.path().join(sidn_cli::ENCODED)).unwrap();
    assert!(d.sequence(7).indices.iter().all(|&v| v == 0));
}

#[test]
fn seed_flag_overrides_the_environment() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"synthetic": {"n_docs": 50}}"#);
    let run = |name: &str, env: Option<&str>, flag: Option<&str>| {
        let out = dir.path().join(name);
        let mut c = Command::new(env!("CARGO_BIN_EXE_sidn"));
        c.args(["gen-data", "--config"]).arg(&cfg).arg("--out").arg(&out).env_remove("SIDN_SEED");
        if let Some(s) = env {
            c.env("SIDN_SEED", s);
        }
        if let Some(s) = flag {
            c.args(["--seed", s]);
        }
        ok(c.output().unwrap());
        std::fs::read(out.join(sidn_cli::CORPUS)).unwrap()
    };
    let env5 = run("e5", Some("5"), None);
    assert_eq!(env5, run("f5", None, Some("5")));
    assert_eq!(run("both", Some("5"), Some("0")), run("none", None, None));
    assert_ne!(env5, run("zero", None, None));
}

#[test]
fn bad_configs_and_mismatched_weights_fail() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write_config(dir.path(), r#"{"train": {"momentum": 0.9}}"#);
    assert!(!sidn(dir.path(), Some(&unknown), &["gen-data"]).status.success());

    let out = dir.path().join("out");
    let cfg = write_config(
        dir.path(),
        r#"{"synthetic": {"n_docs": 100}, "prep": {"maxlen": 12}, "word2vec": {"dim": 8},
            "model": {"conv_filters": 4, "lstm_units": 2, "dense_units": 4}, "train": {"epochs_max": 1}}"#,
    );
    for step in [&["gen-data"][..], &["prep"], &["embed"], &["train", "--variant", "baseline"]] {
        ok(sidn(&out, Some(&cfg), step));
    }
    let other = write_config(dir.path(), r#"{"synthetic": {"n_docs": 100}, "prep": {"maxlen": 15}}"#);
    ok(sidn(&out, Some(&other), &["prep"]));
    let o = sidn(&out, Some(&other), &["eval"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("weights expect"));
}

#[test]
fn library_stages_compose_without_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg: RunConfig = serde_json::from_str(SHORT_DOCS).unwrap();
    cfg.train.epochs_max = 2;
    let ctx = Ctx::new(cfg, 11, dir.path()).unwrap();
    assert_eq!(sidn_cli::gen_data(&ctx).unwrap(), 600);
    let d = sidn_cli::prep(&ctx, &ctx.path(sidn_cli::CORPUS)).unwrap();
    assert_eq!(d.splits.train.len() + d.splits.val.len() + d.splits.test.len(), 600);
    assert_eq!(sidn_cli::embed(&ctx).unwrap().dim(), 16);
    let h = sidn_cli::train(&ctx, &mut |_| {}).unwrap();
    assert_eq!(h.records.len(), 2);
}
