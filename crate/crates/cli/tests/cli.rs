use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn sic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sic")).args(args).output().unwrap()
}

fn ok(args: &[&str]) {
    let out = sic(args);
    assert!(out.status.success(), "sic {args:?}: {}", String::from_utf8_lossy(&out.stderr));
}

fn code(args: &[&str]) -> (i32, String) {
    let out = sic(args);
    (out.status.code().unwrap(), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

struct Workspace {
    dir: TempDir,
}

impl Workspace {
    fn new() -> Self {
        let ws = Workspace { dir: tempfile::tempdir().unwrap() };
        ok(&["synth", "-c", "3", "--n-per-cluster", "100", "--d", "16", "--seed", "3", "-o", &ws.p("data")]);
        ws
    }

    fn p(&self, rel: &str) -> String {
        self.path(rel).to_str().unwrap().to_string()
    }

    fn path(&self, rel: &str) -> PathBuf {
        self.dir.path().join(rel)
    }
}

#[test]
fn full_pipeline() {
    let ws = Workspace::new();
    ok(&["filter-nouns", "--images", &ws.p("data/images.emb"), "--lexicon", &ws.p("data/lexicon.emb"), "-c", "3", "-o", &ws.p("filter")]);
    let report = json(ws.path("filter/filter_report.json"));
    assert!(report["removed"].as_array().unwrap().iter().any(|w| w == "general"));
    assert_eq!(report["semantic_size"], report["unique_size"]);
    assert!(ws.path("filter/semantics.jsonl").exists());
    assert!(ws.path("filter/filter-nouns.config.json").exists());

    ok(&[
        "train",
        "--images",
        &ws.p("data/images.emb"),
        "--semantics",
        &ws.p("filter/semantics.emb"),
        "--labels",
        &ws.p("data/labels.json"),
        "-c",
        "3",
        "--epochs",
        "30",
        "-o",
        &ws.p("train"),
    ]);
    let metrics = json(ws.path("train/metrics.json"));
    assert!(metrics["acc"].as_f64().unwrap() >= 0.95, "{metrics}");
    for f in ["head.emb", "head.json", "trace.csv", "labels.json", "pseudo_labels.json", "train.log"] {
        assert!(ws.path("train").join(f).exists(), "{f}");
    }

    ok(&["predict", "--images", &ws.p("data/images.emb"), "--checkpoint", &ws.p("train/head.emb"), "-o", &ws.p("predict")]);
    assert_eq!(
        std::fs::read(ws.path("predict/labels.json")).unwrap(),
        std::fs::read(ws.path("train/labels.json")).unwrap()
    );

    ok(&["evaluate", "--predictions", &ws.p("predict/labels.json"), "--labels", &ws.p("data/labels.json"), "-o", &ws.p("eval")]);
    assert_eq!(json(ws.path("eval/metrics.json")), metrics);

    ok(&["bound-report", "--images", &ws.p("data/images.emb"), "--checkpoint", &ws.p("train/head.emb"), "-o", &ws.p("bound")]);
    let bound = json(ws.path("bound/bound_report.json"));
    assert!(bound["bound_gap"].as_f64().unwrap() > 0.0);

    ok(&["convergence-report", "--trace", &ws.p("train/trace.csv"), "-o", &ws.p("conv")]);
    assert!(json(ws.path("conv/convergence.json"))["slope"].is_number());
    let rows = std::fs::read_to_string(ws.path("conv/convergence.csv")).unwrap();
    assert_eq!(rows.lines().count(), 31);
}

#[test]
fn training_filters_a_raw_lexicon() {
    let ws = Workspace::new();
    for strategy in ["direct", "center", "adjusted"] {
        let out = ws.p(strategy);
        ok(&[
            "train",
            "--images",
            &ws.p("data/images.emb"),
            "--lexicon",
            &ws.p("data/lexicon.emb"),
            "-c",
            "3",
            "--epochs",
            "3",
            "--strategy",
            strategy,
            "-o",
            &out,
        ]);
        assert!(ws.path(strategy).join("labels.json").exists());
    }
}

#[test]
fn baseline_kmeans() {
    let ws = Workspace::new();
    let run = |c: &str, out: &str| {
        ok(&["baseline-kmeans", "--images", &ws.p("data/images.emb"), "--labels", &ws.p("data/labels.json"), "-c", c, "-o", &ws.p(out)]);
    };
    run("3", "a");
    run("3", "b");
    assert_eq!(
        std::fs::read(ws.path("a/kmeans_labels.json")).unwrap(),
        std::fs::read(ws.path("b/kmeans_labels.json")).unwrap()
    );
    assert!(json(ws.path("a/kmeans_metrics.json"))["acc"].as_f64().unwrap() >= 0.95);

    run("1", "one");
    let acc = json(ws.path("one/kmeans_metrics.json"))["acc"].as_f64().unwrap();
    assert!((acc - 1.0 / 3.0).abs() < 1e-12, "{acc}");
}

#[test]
fn missing_file_names_the_path() {
    let (c, err) = code(&["train", "--images", "/no/such/images.emb", "--lexicon", "/no/such/lex.emb"]);
    assert_eq!(c, 2);
    assert!(err.contains("/no/such/images.emb"), "{err}");
}

#[test]
fn out_of_range_values_exit_2() {
    let ws = Workspace::new();
    let images = ws.p("data/images.emb");
    let lexicon = ws.p("data/lexicon.emb");
    for extra in [["--lambda", "-1"], ["--delta", "1"], ["--lr", "0"], ["--strategy", "nearest"]] {
        let mut args = vec!["train", "--images", &images, "--lexicon", &lexicon, "-o"];
        let out = ws.p("bad");
        args.push(&out);
        args.extend(extra);
        assert_eq!(code(&args).0, 2, "{extra:?}");
    }
}

#[test]
fn wrong_label_count_is_a_data_error() {
    let ws = Workspace::new();
    std::fs::write(ws.path("short.json"), "[0, 1]").unwrap();
    let (c, _) = code(&["evaluate", "--predictions", &ws.p("data/labels.json"), "--labels", &ws.p("short.json"), "-o", &ws.p("e")]);
    assert_eq!(c, 3);
}

#[test]
fn config_file_and_flag_precedence() {
    let ws = Workspace::new();
    let cfg = ws.path("run.json");
    std::fs::write(&cfg, r#"{"c": 3, "epochs": 2, "lambda": 2.5, "strategy": "center"}"#).unwrap();
    ok(&[
        "train",
        "--config",
        cfg.to_str().unwrap(),
        "--images",
        &ws.p("data/images.emb"),
        "--lexicon",
        &ws.p("data/lexicon.emb"),
        "--lambda",
        "4",
        "-o",
        &ws.p("t"),
    ]);
    let echo = json(ws.path("t/train.config.json"));
    assert_eq!(echo["lambda"], 4.0);
    assert_eq!(echo["epochs"], 2);
    assert_eq!(echo["strategy"], "center");
    assert_eq!(echo["xi_a"], 20);
    assert_eq!(std::fs::read_to_string(ws.path("t/trace.csv")).unwrap().lines().count(), 3);

    std::fs::write(&cfg, r#"{"lamda": 2}"#).unwrap();
    let (c, err) = code(&["train", "--config", cfg.to_str().unwrap()]);
    assert_eq!(c, 2);
    assert!(err.contains("lamda"), "{err}");
}

#[test]
fn help_lists_defaults() {
    for cmd in [
        "filter-nouns",
        "train",
        "predict",
        "evaluate",
        "baseline-kmeans",
        "bound-report",
        "synth",
        "convergence-report",
    ] {
        let out = sic(&[cmd, "--help"]);
        assert!(out.status.success());
        let text = String::from_utf8_lossy(&out.stdout);
        for needle in ["1e-4", "0.05", "200", "0.9n/c", "--xi-a", "--lambda", "--beta"] {
            assert!(text.contains(needle), "{cmd} --help lacks {needle}");
        }
    }
}

#[test]
fn invalid_thread_count_exits_2() {
    let out = Command::new(env!("CARGO_BIN_EXE_sic"))
        .args(["synth", "-o", "/tmp/unused"])
        .env("SIC_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn synth_is_deterministic() {
    let ws = Workspace::new();
    ok(&["synth", "-c", "3", "--n-per-cluster", "100", "--d", "16", "--seed", "3", "-o", &ws.p("again")]);
    for f in ["images.emb", "lexicon.emb", "lexicon.jsonl", "labels.json", "truth_nouns.json"] {
        assert_eq!(std::fs::read(ws.path("data").join(f)).unwrap(), std::fs::read(ws.path("again").join(f)).unwrap(), "{f}");
    }
}
