use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nextcell::cli::load_dataset;
use nextcell::train::{GraphInput, TrainConfig};
use nextcell::vgae::{Vgae, VgaeDims};

fn nextcell(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nextcell")).args(args).current_dir(cwd).env_remove("NEXTCELL_THREADS").output().unwrap()
}

fn ok(args: &[&str], cwd: &Path) -> String {
    let out = nextcell(args, cwd);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn field(report: &str, key: &str) -> f64 {
    report
        .split_whitespace()
        .find_map(|kv| kv.strip_prefix(&format!("{key}=")))
        .unwrap_or_else(|| panic!("{key} missing from {report}"))
        .parse()
        .unwrap()
}

fn manifest_value(path: &Path, key: &str) -> String {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")).map(str::to_string))
        .unwrap()
}

#[test]
fn gen_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--seed", "3", "--out", "a"], dir.path());
    ok(&["gen", "--seed", "3", "--out", "b"], dir.path());
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for name in ["trace.csv", "nodes.csv", "edges.csv", "dataset.cfg"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let fp = |d: &Path| manifest_value(&d.join("manifest-gen.txt"), "fingerprint");
    assert_eq!(fp(&a), fp(&b));
    ok(&["gen", "--seed", "4", "--out", "c"], dir.path());
    assert_ne!(fp(&a), fp(&dir.path().join("c")));
}

#[test]
fn invalid_config_names_the_field() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("bad.cfg"), "n_ues = 70\nsample_period_s = -1\n").unwrap();
    let out = nextcell(&["gen", "--config", "bad.cfg", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("sample_period_s"));
    fs::write(dir.path().join("typo.cfg"), "n_cels = 5\n").unwrap();
    let out = nextcell(&["gen", "--config", "typo.cfg", "--out", "x"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("n_cels"));
}

#[test]
fn usage_errors_exit_two() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nextcell(&["train", "knn", "--data", "."], dir.path()).status.code(), Some(2));
    assert_eq!(nextcell(&["frobnicate"], dir.path()).status.code(), Some(2));
    ok(&["gen", "--seed", "1", "--out", "em"], dir.path());
    let out = Command::new(env!("CARGO_BIN_EXE_nextcell"))
        .args(["split", "--data", "em"])
        .current_dir(dir.path())
        .env("NEXTCELL_THREADS", "lots")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(nextcell(&["train", "vgae", "--data", "em", "--set", "lr=-1"], dir.path()).status.code(), Some(2));
}

#[test]
fn missing_dataset_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(nextcell(&["split", "--data", "nowhere"], dir.path()).status.code(), Some(3));
}

#[test]
fn train_sweep_writes_rows_checkpoints_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--seed", "2", "--out", "em"], dir.path());
    ok(&["split", "--data", "em", "--seed", "5"], dir.path());
    assert!(dir.path().join("em/split-5.csv").exists());
    let stdout = ok(&["train", "vgae", "--data", "em", "--seeds", "1..3", "--split-seed", "5"], dir.path());
    assert_eq!(stdout.lines().count(), 4);
    let runs = dir.path().join("em/runs");
    let results = fs::read_to_string(runs.join("results.csv")).unwrap();
    let lines: Vec<&str> = results.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("model,dataset,seed,auc"));
    assert!(lines[4].starts_with("vgae,em,mean,"));
    for seed in 1..=3 {
        assert!(runs.join(format!("vgae-s{seed}.ckpt")).exists());
        let curve = fs::read_to_string(runs.join(format!("vgae-s{seed}.curve.csv"))).unwrap();
        assert!(curve.starts_with("epoch,loss,auc,ap"));
    }
    let manifest = runs.join("manifest-train.txt");
    assert_eq!(manifest_value(&manifest, "config.results_lines"), "2..5");
    assert_eq!(manifest_value(&manifest, "seeds"), "1,2,3");

    // A second sweep appends and gets its own manifest.
    ok(&["train", "vgae", "--data", "em", "--seeds", "4"], dir.path());
    assert_eq!(fs::read_to_string(runs.join("results.csv")).unwrap().lines().count(), 6);
    assert_eq!(manifest_value(&runs.join("manifest-train-2.txt"), "config.results_lines"), "6..6");

    let report = ok(&["eval", "--checkpoint", "em/runs/vgae-s2.ckpt", "--data", "em"], dir.path());
    assert!(field(&report, "auc") > 0.6);
}

#[test]
fn untrained_checkpoints_score_below_trained_ones() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--seed", "6", "--out", "em"], dir.path());
    let ds = load_dataset(&dir.path().join("em")).unwrap();
    let input = GraphInput::new(&ds.graph, &ds.graph.edge_pairs()).unwrap();
    let dims = VgaeDims::new(&input, &TrainConfig::vgae());
    let eval_auc = |model: &Vgae, name: &str| {
        let path = dir.path().join(name);
        model.to_checkpoint().save(&path).unwrap();
        field(&ok(&["eval", "--checkpoint", path.to_str().unwrap(), "--data", "em"], dir.path()), "auc")
    };

    let mut zero = Vgae::init(dims, 1);
    let names: Vec<String> = zero.state.names().map(str::to_string).collect();
    for name in names {
        let z = zero.state.get(&name).unwrap().map(|_| 0.0);
        zero.state.insert(name, z);
    }
    assert_eq!(eval_auc(&zero, "zero.ckpt"), 0.5);

    // Random weights still propagate structure, so they sit between chance and trained.
    let random: Vec<f64> = (1..=5).map(|seed| eval_auc(&Vgae::init(dims, seed), &format!("init-{seed}.ckpt"))).collect();
    ok(&["train", "vgae", "--data", "em", "--seeds", "1..5"], dir.path());
    let trained: Vec<f64> =
        (1..=5).map(|seed| field(&ok(&["eval", "--checkpoint", &format!("em/runs/vgae-s{seed}.ckpt"), "--data", "em", "--split-seed", "1"], dir.path()), "auc")).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&random) >= 0.4 && mean(&random) + 0.1 < mean(&trained), "{random:?} vs {trained:?}");
}

#[test]
fn schema_mismatch_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--seed", "1", "--out", "em"], dir.path());
    ok(&["train", "vgae", "--data", "em", "--set", "max_epochs=3", "--set", "patience=1"], dir.path());
    ok(&["ingest", "--rw-like", "--rw-cells", "8", "--rw-ues", "90", "--out", "rw"], dir.path());
    let out = nextcell(&["eval", "--checkpoint", "em/runs/vgae-s1.ckpt", "--data", "rw"], dir.path());
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn seal_refuses_oversized_data() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["ingest", "--rw-like", "--rw-cells", "400", "--rw-ues", "19600", "--out", "rw20k"], dir.path());
    let out = nextcell(&["train", "seal", "--data", "rw20k"], dir.path());
    assert_eq!(out.status.code(), Some(3));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("estimated cost") && stderr.contains("--force"), "{stderr}");
    assert!(!dir.path().join("rw20k/runs/results.csv").exists());
}

#[test]
fn seal_trains_under_the_limit() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--seed", "1", "--out", "em"], dir.path());
    let stdout = ok(&["train", "seal", "--data", "em", "--set", "max_epochs=4", "--set", "patience=2"], dir.path());
    assert!(stdout.starts_with("seal,em,1,"));
    let report = ok(&["eval", "--checkpoint", "em/runs/seal-s1.ckpt", "--data", "em"], dir.path());
    assert!(field(&report, "auc") > 0.5);
}

#[test]
fn replay_with_oracle_and_model() {
    let dir = tempfile::tempdir().unwrap();
    ok(&["gen", "--seed", "1", "--holdout-frac", "0.3", "--out", "em"], dir.path());
    let oracle = ok(&["replay", "--data", "em", "--oracle"], dir.path());
    assert_eq!(field(&oracle, "accuracy"), 1.0);
    assert!(field(&oracle, "pingpong") <= field(&oracle, "handovers"));

    ok(&["train", "vgae", "--data", "em"], dir.path());
    let model = ok(&["replay", "--data", "em", "--checkpoint", "em/runs/vgae-s1.ckpt", "--events", "ev.csv"], dir.path());
    assert!(field(&model, "accuracy") > field(&model, "baseline_accuracy"));
    let log = fs::read_to_string(dir.path().join("ev.csv")).unwrap();
    assert!(log.starts_with("t,ue,from,to,predicted,correct,latency_s\n"));
    assert_eq!(log.lines().count() as f64, field(&model, "handovers") + 1.0);

    // No held-out tail without --holdout-frac.
    ok(&["gen", "--seed", "1", "--out", "full"], dir.path());
    assert_eq!(nextcell(&["replay", "--data", "full", "--oracle"], dir.path()).status.code(), Some(3));
}

#[test]
fn reference_graph_and_ingest_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["gen", "--reference", "--out", "ref"], dir.path());
    assert!(stdout.contains("101 nodes, 489 edges"));
    let p = |f: &str| dir.path().join("ref").join(f).to_str().unwrap().to_string();
    let stdout = ok(&["ingest", "--nodes", &p("nodes.csv"), "--edges", &p("edges.csv"), "--out", "copy"], dir.path());
    assert!(stdout.contains("70 UEs, 31 cells, 489 edges"), "{stdout}");
    let stdout = ok(
        &["ingest", "--nodes", &p("nodes.csv"), "--edges", &p("edges.csv"), "--subset-cells", "10", "--subset-ues", "30", "--out", "sub"],
        dir.path(),
    );
    assert!(stdout.contains("30 UEs, 10 cells"), "{stdout}");
}

#[test]
fn bench_prints_a_table_and_fit() {
    let dir = tempfile::tempdir().unwrap();
    let stdout = ok(&["bench", "--factors", "1,2", "--seeds", "1", "--epochs", "3", "--repeats", "1", "--out", "bench.csv"], dir.path());
    assert!(stdout.starts_with("model,factor,seed,n_nodes,n_edges,epochs,train_s\n"));
    assert!(stdout.contains("fit: train_s ="));
    assert_eq!(fs::read_to_string(dir.path().join("bench.csv")).unwrap().lines().count(), 3);
}
