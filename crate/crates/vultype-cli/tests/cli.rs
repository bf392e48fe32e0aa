//! End-to-end tests driving the compiled binary: synth → prepare →
//! train → eval → report/diagnose/sweep, plus the exit-code contract.

use std::path::{Path, PathBuf};
use std::process::Command;

fn vultype() -> Command {
    Command::new(env!("CARGO_BIN_EXE_vultype"))
}

fn run_ok(cmd: &mut Command) -> String {
    let out = cmd.output().expect("spawn vultype");
    assert!(
        out.status.success(),
        "command failed\nstdout: {}\nstderr: {}",
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn run_err(cmd: &mut Command) -> (i32, String) {
    let out = cmd.output().expect("spawn vultype");
    assert!(
        !out.status.success(),
        "expected failure but got success\nstdout: {}",
        String::from_utf8_lossy(&out.stdout)
    );
    (
        out.status.code().expect("exit code"),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&read(path)).unwrap_or_else(|e| panic!("parse {}: {e}", path.display()))
}

/// Generate a corpus through the synth command and return its path.
fn synth_corpus(dir: &Path, counts: &[usize], seed: u64) -> PathBuf {
    let recipe = dir.join("recipe.toml");
    std::fs::write(
        &recipe,
        format!(
            "[synth]\ncounts = {counts:?}\nvocab_size = 20\nsignal_strength = 0.9\nseed = {seed}\n"
        ),
    )
    .unwrap();
    let out = dir.join("synth");
    run_ok(vultype().args(["synth", "--config"]).arg(&recipe).arg("--out").arg(&out));
    out.join("corpus.jsonl")
}

/// A config sized for test corpora: tiny widths, shallow propagation.
fn write_config(dir: &Path, corpus: &Path, tail: &str) -> PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(
        &path,
        format!(
            "[data]\ncorpus = \"{}\"\nseed = 42\nremain_threshold = 2\n\n\
             [model]\ndim = 8\nlayers = 2\ngraph_mlp_hidden = 8\n\
             token_limit = 16\nhidden = 8\nseq_mlp_hidden = 8\n\n{tail}",
            corpus.display()
        ),
    )
    .unwrap();
    path
}

const FAST_TRAIN: &str = "[loss]\nkind = \"ce\"\n\n[train]\nepochs = 2\nbatch_size = 8\nlearning_rate = 0.002\n";

#[test]
fn synth_honors_exact_counts_and_seed_override() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.toml");
    std::fs::write(
        &recipe,
        "[synth]\ncounts = [4, 5, 6]\nvocab_size = 10\nsignal_strength = 0.5\nseed = 9\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    run_ok(vultype().args(["synth", "--config"]).arg(&recipe).arg("--out").arg(&out));

    let corpus = read(&out.join("corpus.jsonl"));
    assert_eq!(corpus.lines().filter(|l| !l.trim().is_empty()).count(), 15);

    let meta = json(&out.join("synth.meta.json"));
    assert_eq!(meta["classes"], 3);
    assert_eq!(meta["samples"], 15);
    assert_eq!(meta["label_counts"]["CWE-100"], 4);
    assert_eq!(meta["label_counts"]["CWE-101"], 5);
    assert_eq!(meta["label_counts"]["CWE-102"], 6);
    assert_eq!(meta["provenance"]["seed"], 9);
    assert_eq!(meta["provenance"]["tool"], "vultype");

    let out2 = dir.path().join("out2");
    run_ok(
        vultype()
            .args(["synth", "--config"])
            .arg(&recipe)
            .arg("--out")
            .arg(&out2)
            .args(["--seed", "10"]),
    );
    let meta2 = json(&out2.join("synth.meta.json"));
    assert_eq!(meta2["provenance"]["seed"], 10);
    assert_ne!(
        read(&out.join("corpus.jsonl")),
        read(&out2.join("corpus.jsonl")),
        "different seed, different corpus"
    );
}

#[test]
fn synth_without_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.toml");
    std::fs::write(
        &recipe,
        "[synth]\ncounts = [3]\nvocab_size = 10\nsignal_strength = 0.5\n",
    )
    .unwrap();
    let (code, stderr) = run_err(
        vultype()
            .args(["synth", "--config"])
            .arg(&recipe)
            .arg("--out")
            .arg(dir.path().join("out")),
    );
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("seed"), "stderr: {stderr}");
}

#[test]
fn zipf_recipe_populates_every_frequency_group() {
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.toml");
    std::fs::write(
        &recipe,
        "[synth]\nvocab_size = 30\nsignal_strength = 0.5\nseed = 3\n\
         [synth.zipf]\nclasses = 20\nbase = 300.0\nexponent = 1.5\nfloor = 5\n",
    )
    .unwrap();
    let out = dir.path().join("out");
    run_ok(vultype().args(["synth", "--config"]).arg(&recipe).arg("--out").arg(&out));

    // default thresholds: >200 head, 50..=200 medium, <50 tail
    let config = dir.path().join("run.toml");
    std::fs::write(
        &config,
        format!("[data]\ncorpus = \"{}\"\n", out.join("corpus.jsonl").display()),
    )
    .unwrap();
    let prep = dir.path().join("prep");
    run_ok(vultype().args(["prepare", "--config"]).arg(&config).arg("--out").arg(&prep));

    let groups = json(&prep.join("groups.json"));
    let classes = groups["classes"].as_array().unwrap();
    let n_of = |g: &str| classes.iter().filter(|c| c["group"] == g).count();
    assert!(n_of("head") > 0, "{groups}");
    assert!(n_of("medium") > 0, "{groups}");
    assert!(n_of("tail") > 0, "{groups}");
    assert!(classes.iter().any(|c| c["name"] == "Remain"), "{groups}");
}

#[test]
fn prepare_writes_manifests_and_reruns_identically() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path(), &[6, 6, 6], 5);
    let config = write_config(dir.path(), &corpus, "");

    let out1 = dir.path().join("prep1");
    run_ok(vultype().args(["prepare", "--config"]).arg(&config).arg("--out").arg(&out1));
    for name in ["train.ids.json", "valid.ids.json", "test.ids.json", "groups.json"] {
        assert!(out1.join(name).exists(), "missing {name}");
    }
    let train = json(&out1.join("train.ids.json"));
    assert_eq!(train["split"], "train");
    assert_eq!(
        train["count"].as_u64().unwrap(),
        train["ids"].as_array().unwrap().len() as u64
    );
    let groups = json(&out1.join("groups.json"));
    assert_eq!(groups["samples"], 18);
    assert_eq!(groups["classes"].as_array().unwrap().len(), 3);

    let out2 = dir.path().join("prep2");
    run_ok(vultype().args(["prepare", "--config"]).arg(&config).arg("--out").arg(&out2));
    for name in ["train.ids.json", "valid.ids.json", "test.ids.json", "groups.json"] {
        assert_eq!(read(&out1.join(name)), read(&out2.join(name)), "{name} differs across reruns");
    }

    let out3 = dir.path().join("prep3");
    run_ok(
        vultype()
            .args(["prepare", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(&out3)
            .args(["--seed", "7"]),
    );
    assert_ne!(
        read(&out1.join("train.ids.json")),
        read(&out3.join("train.ids.json")),
        "--seed should reshuffle the split"
    );
}

#[test]
fn corrupt_corpus_line_is_named_and_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let mut lines: Vec<String> = (0..11)
        .map(|i| {
            format!(
                "{{\"id\":\"s{i}\",\"code\":\"int f{i}(void) {{ return {i}; }}\",\"label\":\"CWE-{}\"}}",
                100 + i % 2
            )
        })
        .collect();
    lines.push("{ not json at all".to_string());
    let corpus = dir.path().join("corpus.jsonl");
    std::fs::write(&corpus, lines.join("\n")).unwrap();
    let config = write_config(dir.path(), &corpus, "");

    let (code, stderr) = run_err(
        vultype()
            .args(["prepare", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join("prep")),
    );
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("line 12"), "stderr: {stderr}");
}

#[test]
fn missing_corpus_exits_2_with_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_config(dir.path(), &dir.path().join("nowhere.jsonl"), "");
    let (code, stderr) = run_err(
        vultype()
            .args(["prepare", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join("prep")),
    );
    assert_eq!(code, 2, "stderr: {stderr}");
    assert!(stderr.contains("nowhere.jsonl"), "stderr: {stderr}");
}

#[test]
fn train_writes_checkpoint_log_and_meta() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path(), &[12, 12], 5);
    let config = write_config(dir.path(), &corpus, FAST_TRAIN);

    let out = dir.path().join("train");
    run_ok(vultype().args(["train", "--config"]).arg(&config).arg("--out").arg(&out));
    assert!(out.join("model.ckpt").exists());

    let log = read(&out.join("run.jsonl"));
    // header + one line per epoch + final line
    assert_eq!(log.lines().count(), 1 + 2 + 1, "{log}");

    let meta = json(&out.join("train.meta.json"));
    assert_eq!(meta["epochs"], 2);
    assert_eq!(meta["mode"], "type-classification");
    assert_eq!(meta["embedding_dim"], 8);
    let fp = meta["config_fingerprint"].as_str().unwrap();
    assert_eq!(fp.len(), 16, "fingerprint should be a 16-hex-digit hash: {fp}");
    assert!(meta["best_accuracy"].as_f64().unwrap() >= 0.0);
}

#[test]
fn identical_config_and_seed_reproduce_run_artifacts_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path(), &[8, 8], 11);
    let config = write_config(dir.path(), &corpus, FAST_TRAIN);

    let out1 = dir.path().join("t1");
    let out2 = dir.path().join("t2");
    run_ok(vultype().args(["train", "--config"]).arg(&config).arg("--out").arg(&out1));
    run_ok(vultype().args(["train", "--config"]).arg(&config).arg("--out").arg(&out2));
    assert_eq!(read(&out1.join("run.jsonl")), read(&out2.join("run.jsonl")));
    assert_eq!(
        std::fs::read(out1.join("model.ckpt")).unwrap(),
        std::fs::read(out2.join("model.ckpt")).unwrap()
    );

    let e1 = dir.path().join("e1");
    let e2 = dir.path().join("e2");
    run_ok(
        vultype()
            .args(["eval", "--config"])
            .arg(&config)
            .arg("--checkpoint")
            .arg(out1.join("model.ckpt"))
            .arg("--out")
            .arg(&e1),
    );
    run_ok(
        vultype()
            .args(["eval", "--config"])
            .arg(&config)
            .arg("--checkpoint")
            .arg(out2.join("model.ckpt"))
            .arg("--out")
            .arg(&e2),
    );
    assert_eq!(read(&e1.join("metrics.json")), read(&e2.join("metrics.json")));
}

#[test]
fn eval_on_a_perfect_prediction_fixture_reports_accuracy_one() {
    // two classes with fully disjoint cue vocabularies (signal 1.0):
    // thirty epochs reach exact train-split memorization
    let dir = tempfile::tempdir().unwrap();
    let recipe = dir.path().join("recipe.toml");
    std::fs::write(
        &recipe,
        "[synth]\ncounts = [15, 15]\nvocab_size = 20\nsignal_strength = 1.0\nseed = 13\n",
    )
    .unwrap();
    let synth_out = dir.path().join("synth");
    run_ok(vultype().args(["synth", "--config"]).arg(&recipe).arg("--out").arg(&synth_out));
    let config = write_config(
        dir.path(),
        &synth_out.join("corpus.jsonl"),
        "[loss]\nkind = \"ce\"\n\n[train]\nepochs = 30\nbatch_size = 8\nlearning_rate = 0.005\n",
    );

    let train_out = dir.path().join("train");
    run_ok(vultype().args(["train", "--config"]).arg(&config).arg("--out").arg(&train_out));
    let eval_out = dir.path().join("eval");
    run_ok(
        vultype()
            .args(["eval", "--config"])
            .arg(&config)
            .arg("--checkpoint")
            .arg(train_out.join("model.ckpt"))
            .args(["--split", "train"])
            .arg("--out")
            .arg(&eval_out),
    );

    let metrics = json(&eval_out.join("metrics.json"));
    assert_eq!(metrics["report"]["accuracy"], 1.0, "{metrics}");
    assert_eq!(metrics["report"]["f1"], 1.0);
    assert_eq!(metrics["split"], "train");
    let csv = read(&eval_out.join("metrics.csv"));
    assert!(csv.starts_with("# vultype"), "{csv}");
    assert!(csv.contains("accuracy,1"), "{csv}");
}

#[test]
fn eval_rejects_a_checkpoint_from_a_different_model_shape() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path(), &[8, 8], 5);
    let config = write_config(dir.path(), &corpus, FAST_TRAIN);
    let train_out = dir.path().join("train");
    run_ok(vultype().args(["train", "--config"]).arg(&config).arg("--out").arg(&train_out));

    // same corpus, different propagation depth
    let other = read(&config).replace("layers = 2", "layers = 3");
    let config2 = dir.path().join("run2.toml");
    std::fs::write(&config2, other).unwrap();
    let (code, stderr) = run_err(
        vultype()
            .args(["eval", "--config"])
            .arg(&config2)
            .arg("--checkpoint")
            .arg(train_out.join("model.ckpt"))
            .arg("--out")
            .arg(dir.path().join("eval")),
    );
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("checkpoint"), "stderr: {stderr}");
}

#[test]
fn report_merges_metrics_and_projects_representations() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path(), &[12, 12], 5);
    let config = write_config(dir.path(), &corpus, FAST_TRAIN);
    let train_out = dir.path().join("train");
    run_ok(vultype().args(["train", "--config"]).arg(&config).arg("--out").arg(&train_out));

    let eval_out = dir.path().join("eval");
    run_ok(
        vultype()
            .args(["eval", "--config"])
            .arg(&config)
            .arg("--checkpoint")
            .arg(train_out.join("model.ckpt"))
            .args(["--split", "train", "--export-representations"])
            .arg("--out")
            .arg(&eval_out),
    );
    let reps = eval_out.join("representations.csv");
    let header = read(&reps);
    assert!(header.lines().nth(1).unwrap().starts_with("id,label,group,fused_0"), "{header}");

    // two "runs" to merge: the same metrics under two names
    let a = dir.path().join("a.json");
    let b = dir.path().join("b.json");
    std::fs::copy(eval_out.join("metrics.json"), &a).unwrap();
    std::fs::copy(eval_out.join("metrics.json"), &b).unwrap();

    let report_out = dir.path().join("report");
    run_ok(
        vultype()
            .arg("report")
            .arg("--metrics")
            .arg(&a)
            .arg("--metrics")
            .arg(&b)
            .arg("--representations")
            .arg(&reps)
            .arg("--out")
            .arg(&report_out),
    );

    let table = read(&report_out.join("comparison.csv"));
    let rows: Vec<&str> = table.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3, "{table}"); // header + one row per input
    assert!(rows[0].starts_with("file,split,n_test,accuracy"));
    assert!(rows[1].starts_with("a,train,"));
    assert!(rows[2].starts_with("b,train,"));

    for svg in ["groups.svg", "per_class_a.svg", "per_class_b.svg", "representations.svg"] {
        let content = read(&report_out.join(svg));
        assert!(content.starts_with("<svg"), "{svg} is not an svg");
        assert!(content.contains("config_sha256="), "{svg} missing provenance");
    }
}

#[test]
fn diagnose_tabulates_similarity_by_depth() {
    let dir = tempfile::tempdir().unwrap();
    // a 6-node ring with distinct node texts
    let nodes: Vec<serde_json::Value> = (0..6)
        .map(|i| serde_json::json!({"id": i, "code": format!("stmt_{i} x{i}"), "type": "NODE"}))
        .collect();
    let edges: Vec<serde_json::Value> = (0..6)
        .map(|i| serde_json::json!([i, (i + 1) % 6, "AST"]))
        .collect();
    let graph = dir.path().join("graph.json");
    std::fs::write(
        &graph,
        serde_json::json!({"nodes": nodes, "edges": edges}).to_string(),
    )
    .unwrap();
    let config = write_config(dir.path(), &dir.path().join("unused.jsonl"), "");

    let out = dir.path().join("diag");
    run_ok(
        vultype()
            .args(["diagnose", "--config"])
            .arg(&config)
            .arg("--graph")
            .arg(&graph)
            .args(["--depths", "0,1,2,4"])
            .arg("--out")
            .arg(&out),
    );
    let csv = read(&out.join("oversmoothing.csv"));
    assert!(csv.contains("# nodes=6 components=1"), "{csv}");
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 5, "{csv}"); // header + 4 depths
    assert!(rows[0].starts_with("depth,stacked_similarity,differentiated_similarity"));
    assert!(rows[1].starts_with("0,"));
    assert!(rows[4].starts_with("4,"));
    assert!(read(&out.join("oversmoothing.svg")).starts_with("<svg"));

    // default depth grid goes to 16 in powers of two
    let out2 = dir.path().join("diag2");
    run_ok(
        vultype()
            .args(["diagnose", "--config"])
            .arg(&config)
            .arg("--graph")
            .arg(&graph)
            .arg("--out")
            .arg(&out2),
    );
    let csv = read(&out2.join("oversmoothing.csv"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 7, "{csv}");
    assert!(rows[6].starts_with("16,"), "{csv}");
}

#[test]
fn sweep_trains_one_row_per_grid_value() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path(), &[10, 10], 5);
    let config = write_config(
        dir.path(),
        &corpus,
        "[loss]\nkind = \"ce\"\n\n[train]\nepochs = 2\nbatch_size = 8\nlearning_rate = 0.002\n\n\
         [sweep]\nlayers = [1, 2]\nhidden = [8]\n",
    );

    let out = dir.path().join("sweep");
    run_ok(
        vultype()
            .args(["sweep", "--config"])
            .arg(&config)
            .args(["--axis", "layers"])
            .arg("--out")
            .arg(&out),
    );
    let csv = read(&out.join("sweep.csv"));
    let rows: Vec<&str> = csv.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 3, "{csv}"); // header + 2 grid values
    assert_eq!(rows[0], "axis,value,accuracy,best_epoch");
    assert!(rows[1].starts_with("layers,1,"), "{csv}");
    assert!(rows[2].starts_with("layers,2,"), "{csv}");
    assert!(read(&out.join("sweep.svg")).starts_with("<svg"));
}

#[test]
fn invalid_thread_hint_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth_corpus(dir.path(), &[8, 8], 5);
    let config = write_config(dir.path(), &corpus, FAST_TRAIN);
    let (code, stderr) = run_err(
        vultype()
            .env("VULTYPE_THREADS", "lots")
            .args(["train", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join("train")),
    );
    assert_eq!(code, 3, "stderr: {stderr}");
    assert!(stderr.contains("VULTYPE_THREADS"), "stderr: {stderr}");
}
