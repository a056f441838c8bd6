//! End-to-end runs of the `hris-bench` binary on small configurations.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use hris_bench::artifacts::{CsvTable, MethodSeRow, RewardRow, RuntimeRow, SeRow, REWARD_HEADER, SE_HEADER};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hris-bench"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = run(args, dir);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let p = dir.join(name);
    fs::write(&p, json).unwrap();
    p
}

/// Small networks and batches so training takes well under a second.
const TINY_PPO: &str = r#""ppo": {"batch_len": 128, "minibatch_size": 32, "epochs_per_update": 2, "hidden": [16, 16]}"#;

#[test]
fn one_episode_gives_one_data_row() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"episodes": 1}"#);
    ok(&["train", "--config", cfg.to_str().unwrap(), "--out", "o"], dir.path());
    let text = fs::read_to_string(dir.path().join("o/reward_dynamic.csv")).unwrap();
    let data: Vec<&str> = text.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(data.len(), 2, "{text}");
    assert_eq!(data[0], REWARD_HEADER.join(","));
    assert!(dir.path().join("o/checkpoint_dynamic.json").exists());
}

#[test]
fn rerun_is_byte_identical_and_carries_provenance() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "c.json", r#"{"episodes": 40}"#);
    let c = cfg.to_str().unwrap();
    ok(&["train", "--config", c, "--out", "a", "--seed", "5"], dir.path());
    ok(&["train", "--config", c, "--out", "b", "--seed", "5"], dir.path());
    for f in ["reward_dynamic.csv", "checkpoint_dynamic.json"] {
        let a = fs::read(dir.path().join("a").join(f)).unwrap();
        let b = fs::read(dir.path().join("b").join(f)).unwrap();
        assert!(a == b, "{f} differs between reruns");
    }
    let t = CsvTable::read(&dir.path().join("a/reward_dynamic.csv")).unwrap();
    assert_eq!(t.provenance.get("seed"), Some("5"));
    assert_eq!(t.provenance.get("version"), Some(env!("CARGO_PKG_VERSION")));
    assert_eq!(t.provenance.get("config_hash").map(str::len), Some(16));
    let rows: Vec<RewardRow> = t.rows().unwrap();
    assert_eq!(rows.len(), 40);
    // 40 × 64 steps: one update, reported from the episode after it
    assert!(rows[..32].iter().all(|r| r.clip_fraction == 0.0));
    assert!(rows[32..].iter().all(|r| r.kl_estimate != 0.0));

    ok(&["train", "--config", c, "--out", "c", "--seed", "6"], dir.path());
    let other = CsvTable::read(&dir.path().join("c/reward_dynamic.csv")).unwrap();
    assert_ne!(other.provenance.get("config_hash"), t.provenance.get("config_hash"));
}

#[test]
fn exit_codes_distinguish_failures() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let unknown = write_config(d, "u.json", r#"{"ppo": {"learning_rate": 0.1}}"#);
    assert_eq!(run(&["train", "--config", unknown.to_str().unwrap()], d).status.code(), Some(2));
    let invalid = write_config(d, "i.json", r#"{"system": {"n_active": 99}}"#);
    assert_eq!(run(&["train", "--config", invalid.to_str().unwrap()], d).status.code(), Some(2));
    assert_eq!(run(&["train", "--config", "missing.json"], d).status.code(), Some(2));
    assert_eq!(run(&["train", "--profile", "huge"], d).status.code(), Some(2));

    let out = run(&["evaluate", "--out", "nothing-here"], d);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));

    fs::write(d.join("garbage.json"), "{not json").unwrap();
    fs::create_dir(d.join("g")).unwrap();
    fs::copy(d.join("garbage.json"), d.join("g/checkpoint_dynamic.json")).unwrap();
    assert_eq!(run(&["evaluate", "--out", "g"], d).status.code(), Some(4));
}

#[test]
fn checkpoint_from_another_system_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "c.json", r#"{"episodes": 1}"#);
    ok(&["train", "--config", cfg.to_str().unwrap(), "--out", "o"], d);
    let other = write_config(d, "k3.json", r#"{"system": {"n_active": 3}}"#);
    let out = run(&["evaluate", "--config", other.to_str().unwrap(), "--out", "o"], d);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn evaluate_compares_three_methods_on_the_same_channels() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "c.json",
        &format!(r#"{{"episodes": 2, "eval_channels": 6, "mode": "fixed", "ao": {{"restarts": 1}}, {TINY_PPO}}}"#),
    );
    let c = cfg.to_str().unwrap();
    ok(&["train", "--config", c, "--out", "o"], d);
    ok(&["evaluate", "--config", c, "--out", "o"], d);
    let rows: Vec<MethodSeRow> = CsvTable::read(&d.join("o/eval_fixed.csv")).unwrap().rows().unwrap();
    let methods: Vec<&str> = rows.iter().map(|r| r.method.as_str()).collect();
    assert_eq!(methods, ["drl", "ao-surrogate", "random"]);
    assert!(rows.iter().all(|r| r.mode == "fixed" && r.n_channels == 6 && r.k_active == 2));
    // the optimizer starts from the random baseline's configuration
    assert!(rows[1].mean_se_bpshz >= rows[2].mean_se_bpshz);
}

#[test]
fn sweep_pairs_channels_and_plots_one_line_per_mode() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "c.json",
        &format!(
            r#"{{"episodes": 2, "eval_channels": 12, "ao": {{"restarts": 2}},
                "sweep": {{"k_values": [0, 1, 2, 3], "drl": "train"}}, {TINY_PPO}}}"#
        ),
    );
    let c = cfg.to_str().unwrap();
    ok(&["sweep-k", "--config", c, "--out", "o"], d);
    let ao: Vec<SeRow> = CsvTable::read(&d.join("o/se_vs_k.csv")).unwrap().rows().unwrap();
    let drl: Vec<SeRow> = CsvTable::read(&d.join("o/se_vs_k_drl.csv")).unwrap().rows().unwrap();
    assert_eq!(ao.len(), 12);
    assert_eq!(drl.len(), 12);
    let at = |rows: &[SeRow], mode: &str, k: usize| {
        rows.iter().find(|r| r.mode == mode && r.k_active == k).unwrap().mean_se_bpshz
    };
    for rows in [&ao, &drl] {
        let p = at(rows, "passive", 0);
        for m in ["fixed", "dynamic"] {
            assert!((at(rows, m, 0) - p).abs() <= 1e-9 * p, "{m} at K=0");
        }
    }
    for k in 1..4 {
        assert!(at(&ao, "dynamic", k) >= at(&ao, "dynamic", k - 1), "dynamic optimizer drops at K={k}");
        assert_eq!(at(&ao, "passive", k), at(&ao, "passive", 0));
    }
    // rerun from the checkpoints the first sweep wrote
    let again = write_config(
        d,
        "again.json",
        &format!(
            r#"{{"episodes": 2, "eval_channels": 12, "ao": {{"restarts": 2}},
                "sweep": {{"k_values": [0, 1, 2, 3], "drl": "checkpoint"}}, {TINY_PPO}}}"#
        ),
    );
    ok(&["sweep-k", "--config", again.to_str().unwrap(), "--out", "o"], d);
    let reloaded: Vec<SeRow> = CsvTable::read(&d.join("o/se_vs_k_drl.csv")).unwrap().rows().unwrap();
    assert_eq!(reloaded, drl);

    ok(&["plot", "--out", "figs", "o/se_vs_k.csv", "o/se_vs_k_drl.csv"], d);
    for f in ["figs/se_vs_k.svg", "figs/se_vs_k_drl.svg"] {
        let svg = fs::read_to_string(d.join(f)).unwrap();
        let doc = roxmltree::Document::parse(&svg).expect("valid XML");
        assert_eq!(doc.root_element().tag_name().name(), "svg");
        let labels: Vec<&str> = doc
            .descendants()
            .filter(|n| n.has_tag_name("polyline"))
            .map(|n| n.attribute("data-label").unwrap())
            .collect();
        assert_eq!(labels, ["passive", "fixed", "dynamic"], "{f}");
    }
}

#[test]
fn missing_sweep_checkpoint_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(d, "c.json", r#"{"eval_channels": 2, "ao": {"restarts": 1, "max_sweeps": 1}, "sweep": {"k_values": [0], "drl": "checkpoint"}}"#);
    assert_eq!(run(&["sweep-k", "--config", cfg.to_str().unwrap(), "--out", "o"], d).status.code(), Some(4));
}

#[test]
fn runtime_bench_and_plots() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let cfg = write_config(
        d,
        "c.json",
        r#"{"runtime": {"n_values": [4, 8], "drl_trials": 10, "ao_trials": 3, "warmup": 1}, "ao": {"restarts": 1}, "episodes": 3}"#,
    );
    let c = cfg.to_str().unwrap();
    ok(&["bench-runtime", "--config", c, "--out", "o"], d);
    ok(&["train", "--config", c, "--out", "o"], d);
    let t = CsvTable::read(&d.join("o/runtime.csv")).unwrap();
    let rows: Vec<RuntimeRow> = t.rows().unwrap();
    let methods: Vec<(&str, usize, usize)> = rows.iter().map(|r| (r.method.as_str(), r.n_ris, r.n_trials)).collect();
    assert_eq!(
        methods,
        [("drl-untrained", 4, 10), ("ao-surrogate", 4, 3), ("drl-untrained", 8, 10), ("ao-surrogate", 8, 3)]
    );
    assert!(rows.iter().all(|r| r.min_ms <= r.median_ms && r.median_ms <= r.max_ms && r.min_ms > 0.0));
    assert!(t.provenance.get("reference_full_scale").is_some());

    ok(&["plot", "--out", "figs", "o/runtime.csv", "o/reward_dynamic.csv"], d);
    let svg = fs::read_to_string(d.join("figs/runtime.svg")).unwrap();
    let doc = roxmltree::Document::parse(&svg).unwrap();
    assert_eq!(doc.descendants().filter(|n| n.has_tag_name("polyline")).count(), 2);
    let desc = doc.descendants().find(|n| n.has_tag_name("desc")).unwrap().text().unwrap();
    assert!(desc.contains("config_hash"));
    let reward = fs::read_to_string(d.join("figs/reward_dynamic.svg")).unwrap();
    roxmltree::Document::parse(&reward).unwrap();
}

#[test]
fn plotting_empty_or_unknown_csv_fails_without_output() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    fs::write(d.join("empty.csv"), format!("# seed: 1\n{}\n", SE_HEADER.join(","))).unwrap();
    let out = run(&["plot", "--out", "figs", "empty.csv"], d);
    assert_eq!(out.status.code(), Some(2));
    assert!(!d.join("figs/empty.svg").exists());

    fs::write(d.join("odd.csv"), "a,b\n1,2\n").unwrap();
    assert_eq!(run(&["plot", "--out", "figs", "odd.csv"], d).status.code(), Some(2));
    fs::write(d.join("bad.csv"), format!("{}\ndynamic,16,2,abc,0,3\n", SE_HEADER.join(","))).unwrap();
    assert_eq!(run(&["plot", "--out", "figs", "bad.csv"], d).status.code(), Some(2));
    assert_eq!(run(&["plot", "--out", "figs", "absent.csv"], d).status.code(), Some(4));
    assert!(!d.join("figs").exists() || fs::read_dir(d.join("figs")).unwrap().next().is_none());
}
