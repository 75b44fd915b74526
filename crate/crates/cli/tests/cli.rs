use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;
use vcg_core::graph::EmbeddingMatrix;

const BIN: &str = env!("CARGO_BIN_EXE_vcg");

fn vcg(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

struct Fixture {
    dir: TempDir,
}

impl Fixture {
    /// Four images around two directions; "talk to person" links all four,
    /// each image also has five private descriptions.
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let ids = ["img0", "img1", "img2", "img3"];
        let rows = vec![vec![1.0f32, 0.0, 0.1], vec![0.9, 0.1, 0.0], vec![0.0, 1.0, 0.2], vec![-0.2, 0.8, 0.1]];
        let emb = EmbeddingMatrix::from_rows(ids.iter().map(|s| s.to_string()).collect(), &rows).unwrap();
        emb.save(dir.path().join("emb.bin")).unwrap();

        let mut lines = Vec::new();
        for (i, id) in ids.iter().enumerate() {
            lines.push(record(id, "intent", "Talk to person."));
            for k in 0..5 {
                let rel = ["before", "after", "intent"][k % 3];
                lines.push(record(id, rel, &format!("do thing {i} {k}")));
            }
        }
        // Reverse so ingest has to reorder.
        lines.reverse();
        std::fs::write(dir.path().join("graph.jsonl"), lines.join("\n") + "\n").unwrap();
        std::fs::write(
            dir.path().join("train.jsonl"),
            record("z", "after", "do thing 0 0") + "\n" + &record("z", "after", "talk to person") + "\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("corpus.jsonl"),
            [
                r#"{"image_id":"img0","relation":"intent","text":"talk to person"}"#,
                r#"{"image_id":"img1","relation":"intent","text":"do thing 1 0","parse":"(S (VP do (NP thing)) (NP 1 0))"}"#,
                r#"{"image_id":"img2","relation":"after","text":"walk the dog"}"#,
            ]
            .join("\n")
                + "\n",
        )
        .unwrap();
        std::fs::write(
            dir.path().join("refs.jsonl"),
            [
                r#"{"image_id":"img0","relation":"intent","references":["talk to person","talk to the person"]}"#,
                r#"{"image_id":"img1","relation":"intent","references":["do thing 1 0"]}"#,
                r#"{"image_id":"img2","relation":"after","references":["walk the cat"]}"#,
            ]
            .join("\n")
                + "\n",
        )
        .unwrap();
        Self { dir }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn s(&self, name: &str) -> String {
        self.path(name).to_string_lossy().into_owned()
    }
}

fn record(id: &str, rel: &str, desc: &str) -> String {
    serde_json::json!({"image_id": id, "event": "", "place": "", "relation": rel, "description": desc}).to_string()
}

fn read_json(p: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(p).unwrap()).unwrap()
}

#[test]
fn help_on_every_subcommand() {
    let expected: &[(&str, &[&str])] = &[
        ("ingest", &["--graph", "--emb", "--out"]),
        ("stats", &["--graph", "--emb", "--top-k", "--report"]),
        ("filter", &["--graph", "--emb", "--t", "--out", "--report", "--removed"]),
        ("sweep", &["--thresholds", "--report"]),
        ("subset", &["--kind", "--train", "--min-desc", "--out", "--report"]),
        ("evaluate", &["--corpus", "--train", "--references", "--text-emb", "--image-emb", "--k", "--report"]),
        ("retrieval-eval", &["--text-emb", "--image-emb", "--k", "--report"]),
        ("gradcheck", &["--seed", "--seeds", "--report"]),
        (
            "train-toy",
            &["--data", "--eval", "--lambda", "--lr", "--weight-decay", "--epochs", "--batch", "--seed", "--d-e", "--d-h", "--d-r", "--h-size", "--trace", "--checkpoint", "--report"],
        ),
        ("report-entropy", &["--corpus", "--train", "--bin-width", "--report"]),
    ];
    for (cmd, flags) in expected {
        let o = vcg(&[cmd, "--help"]);
        assert_eq!(code(&o), 0, "{cmd}");
        let text = String::from_utf8_lossy(&o.stdout);
        for f in flags.iter().chain(&["--config"]) {
            assert!(text.contains(f), "{cmd} help lacks {f}");
        }
    }
    assert_eq!(code(&vcg(&["--help"])), 0);
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(code(&vcg(&[])), 1);
    assert_eq!(code(&vcg(&["nonsense"])), 1);
    assert_eq!(code(&vcg(&["filter", "--t", "abc"])), 1);
    assert_eq!(code(&vcg(&["filter", "--graph", "g"])), 1);
    assert_eq!(code(&vcg(&["subset", "--kind", "rare", "--graph", "g", "--emb", "e", "--out", "o"])), 1);
    let o = Command::new(BIN).args(["gradcheck"]).env("DIVE_THREADS", "zero").output().unwrap();
    assert_eq!(code(&o), 1);
}

#[test]
fn data_errors_exit_two() {
    let f = Fixture::new();
    let o = vcg(&["stats", "--graph", &f.s("missing.jsonl"), "--emb", &f.s("emb.bin")]);
    assert_eq!(code(&o), 2);
    std::fs::write(f.path("bad.jsonl"), record("img0", "during", "x") + "\n").unwrap();
    let o = vcg(&["stats", "--graph", &f.s("bad.jsonl"), "--emb", &f.s("emb.bin")]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));
    std::fs::write(f.path("trunc.bin"), b"DIVEEMB1\x02\x00\x00\x00").unwrap();
    std::fs::write(f.path("trunc.bin.ids.jsonl"), "").unwrap();
    let o = vcg(&["stats", "--graph", &f.s("graph.jsonl"), "--emb", &f.s("trunc.bin")]);
    assert_eq!(code(&o), 2);
}

#[test]
fn ingest_is_canonical_and_idempotent() {
    let f = Fixture::new();
    let o = vcg(&["ingest", "--graph", &f.s("graph.jsonl"), "--emb", &f.s("emb.bin"), "--out", &f.s("a.jsonl")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = vcg(&["ingest", "--graph", &f.s("a.jsonl"), "--emb", &f.s("emb.bin"), "--out", &f.s("b.jsonl")]);
    assert_eq!(code(&o), 0);
    let a = std::fs::read(f.path("a.jsonl")).unwrap();
    assert_eq!(a, std::fs::read(f.path("b.jsonl")).unwrap());
    let first = String::from_utf8(a).unwrap();
    assert!(first.lines().next().unwrap().contains("\"img0\""));
    assert_eq!(first.lines().count(), 24);
}

#[test]
fn stats_report() {
    let f = Fixture::new();
    let o = vcg(&["stats", "--graph", &f.s("graph.jsonl"), "--emb", &f.s("emb.bin"), "--top-k", "1"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["images"], 4);
    assert_eq!(v["edges"], 24);
    assert_eq!(v["descriptions"], 21);
    assert_eq!(v["top_descriptions"][0]["description"], "talk to person");
}

#[test]
fn filter_happy_path_and_determinism() {
    let f = Fixture::new();
    let args = |out: &str, rep: &str| {
        vec![
            "filter".to_string(),
            "--graph".into(),
            f.s("graph.jsonl"),
            "--emb".into(),
            f.s("emb.bin"),
            "--t".into(),
            "1".into(),
            "--out".into(),
            f.s(out),
            "--report".into(),
            f.s(rep),
            "--removed".into(),
            f.s("removed.jsonl"),
        ]
    };
    let run = |out: &str, rep: &str| {
        let a = args(out, rep);
        let refs: Vec<&str> = a.iter().map(String::as_str).collect();
        vcg(&refs)
    };
    assert_eq!(code(&run("f1.jsonl", "r1.json")), 0);
    assert_eq!(code(&run("f2.jsonl", "r2.json")), 0);
    assert_eq!(std::fs::read(f.path("f1.jsonl")).unwrap(), std::fs::read(f.path("f2.jsonl")).unwrap());
    assert_eq!(std::fs::read(f.path("r1.json")).unwrap(), std::fs::read(f.path("r2.json")).unwrap());

    let report = read_json(&f.path("r1.json"));
    assert_eq!(report["edges_before"], 24);
    // The shared description over four images is the only one with freq > 1.
    let removed = report["edges_before"].as_u64().unwrap() - report["edges_after"].as_u64().unwrap();
    let generic = report["decisions"]
        .as_array()
        .unwrap()
        .iter()
        .find(|d| d["description"] == "talk to person")
        .unwrap();
    assert_eq!(generic["remove_count"].as_u64().unwrap(), removed);
    assert!(removed > 0);
    let removed_lines = std::fs::read_to_string(f.path("removed.jsonl")).unwrap();
    assert_eq!(removed_lines.lines().count() as u64, removed);
}

#[test]
fn config_file_supplies_flags_and_flags_override() {
    let f = Fixture::new();
    let cfg = format!(
        "graph = {:?}\nemb = {:?}\nt = 1000\nout = {:?}\nreport = {:?}\n",
        f.s("graph.jsonl"),
        f.s("emb.bin"),
        f.s("cfg.jsonl"),
        f.s("cfg.json")
    );
    std::fs::write(f.path("run.toml"), cfg).unwrap();
    let o = vcg(&["filter", "--config", &f.s("run.toml")]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    // Large t keeps everything.
    assert_eq!(read_json(&f.path("cfg.json"))["edges_after"], 24);
    let o = vcg(&["filter", "--config", &f.s("run.toml"), "--t", "1"]);
    assert_eq!(code(&o), 0);
    assert!(read_json(&f.path("cfg.json"))["edges_after"].as_u64().unwrap() < 24);

    std::fs::write(f.path("bad.toml"), "t = \"ten\"\n").unwrap();
    let o = vcg(&["filter", "--config", &f.s("bad.toml"), "--graph", "g", "--emb", "e", "--out", "o"]);
    assert_eq!(code(&o), 1);
}

#[test]
fn sweep_is_monotone() {
    let f = Fixture::new();
    let o = vcg(&["sweep", "--graph", &f.s("graph.jsonl"), "--emb", &f.s("emb.bin")]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let after: Vec<u64> = v.as_array().unwrap().iter().map(|r| r["edges_after"].as_u64().unwrap()).collect();
    assert_eq!(after.len(), 5);
    assert!(after.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn subsets() {
    let f = Fixture::new();
    let o = vcg(&[
        "subset", "--kind", "unique", "--graph", &f.s("graph.jsonl"), "--emb", &f.s("emb.bin"), "--min-desc", "5", "--out",
        &f.s("u.jsonl"), "--report", &f.s("u.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let r = read_json(&f.path("u.json"));
    assert_eq!(r["images_kept"], 4);
    assert_eq!(r["edges_kept"], 20);

    let o = vcg(&[
        "subset", "--kind", "novel", "--graph", &f.s("graph.jsonl"), "--emb", &f.s("emb.bin"), "--train", &f.s("train.jsonl"),
        "--out", &f.s("n.jsonl"), "--report", &f.s("n.json"),
    ]);
    assert_eq!(code(&o), 0);
    let r = read_json(&f.path("n.json"));
    // img0 lost "do thing 0 0" to the training split and falls to four.
    assert_eq!(r["images_kept"], 3);
    assert_eq!(r["images_dropped_by_threshold"], 1);

    let o = vcg(&["subset", "--kind", "novel", "--graph", &f.s("graph.jsonl"), "--emb", &f.s("emb.bin"), "--out", &f.s("n.jsonl")]);
    assert_eq!(code(&o), 1);
}

#[test]
fn evaluate_and_entropy() {
    let f = Fixture::new();
    let o = vcg(&[
        "evaluate", "--corpus", &f.s("corpus.jsonl"), "--train", &f.s("train.jsonl"), "--references", &f.s("refs.jsonl"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["count"], 3);
    assert_eq!(v["yngve_mode"], "mixed");
    assert!((v["novel_pct"].as_f64().unwrap() - 200.0 / 3.0).abs() < 1e-9);
    assert!(v["bleu2"].as_f64().unwrap() > 0.0);
    assert!(v.get("cider").is_some());
    assert!(v.get("recall_at").is_none());

    let o = vcg(&["report-entropy", "--corpus", &f.s("corpus.jsonl"), "--train", &f.s("train.jsonl"), "--bin-width", "1"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let total: f64 = v["bins"].as_array().unwrap().iter().map(|b| b["ratio"].as_f64().unwrap()).sum();
    assert!((total - 1.0).abs() < 1e-12);
}

#[test]
fn retrieval_eval_perfect_match() {
    let f = Fixture::new();
    let o = vcg(&[
        "retrieval-eval", "--text-emb", &f.s("emb.bin"), "--image-emb", &f.s("emb.bin"), "--k", "1,4", "--report", &f.s("rr.json"),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = read_json(&f.path("rr.json"));
    assert_eq!(v["R@1"], 100.0);
    assert_eq!(v["R@4"], 100.0);
    let o = vcg(&["retrieval-eval", "--text-emb", &f.s("emb.bin"), "--image-emb", &f.s("emb.bin"), "--k", "9"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn gradcheck_exit_status() {
    let o = vcg(&["gradcheck", "--seed", "7"]);
    assert_eq!(code(&o), 0);
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["max_rel_error"].as_f64().unwrap() < 1e-5);
    assert!(String::from_utf8_lossy(&o.stderr).contains("max relative error"));
}

#[test]
fn train_toy_artifacts_are_reproducible() {
    let f = Fixture::new();
    let run = |tag: &str| {
        let o = vcg(&[
            "train-toy", "--epochs", "3", "--lr", "0.01", "--seed", "4", "--trace", &f.s(&format!("{tag}.csv")), "--checkpoint",
            &f.s(&format!("{tag}.bin")), "--report", &f.s(&format!("{tag}.json")),
        ]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    };
    run("a");
    run("b");
    for ext in ["csv", "bin", "json"] {
        assert_eq!(
            std::fs::read(f.path(&format!("a.{ext}"))).unwrap(),
            std::fs::read(f.path(&format!("b.{ext}"))).unwrap(),
            "{ext}"
        );
    }
    let csv = std::fs::read_to_string(f.path("a.csv")).unwrap();
    assert_eq!(csv.lines().next().unwrap(), "epoch,mean_l_org,mean_l_crl,retrieval_acc");
    assert_eq!(csv.lines().count(), 4);
    let ck = std::fs::read(f.path("a.bin")).unwrap();
    assert_eq!(&ck[..8], b"DIVETOY1");
}

#[test]
fn train_toy_on_dataset_file() {
    let f = Fixture::new();
    let (train, held) = vcg_core::contrastive::synthetic_clusters(Default::default()).unwrap();
    train.save(f.path("toy.jsonl")).unwrap();
    held.save(f.path("held.jsonl")).unwrap();
    let o = vcg(&["train-toy", "--data", &f.s("toy.jsonl"), "--eval", &f.s("held.jsonl"), "--epochs", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["train_images"], 32);
    assert_eq!(v["eval_items"], 16);
}
