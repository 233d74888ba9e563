use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use labelset::experiment::{ExperimentConfig, MANIFEST_FILE, SUMMARY_FILE};
use labelset::Dims;

fn labelset(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_labelset"))
        .args(args)
        .env_remove("LABELSET_THREADS")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Four cases on 8³ grids: two fully annotated, one partial, one test.
fn small_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::four_way_scenario(5);
    cfg.phantom.dims = Dims::cube(8);
    let keep = ["train00", "train01", "train05", "test00"];
    cfg.cases.retain(|c| keep.contains(&c.id.as_str()));
    cfg.train.max_epochs = 5;
    cfg
}

fn write_config(dir: &Path, cfg: &ExperimentConfig) -> PathBuf {
    let path = dir.join("config.json");
    fs::write(&path, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    path
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn generate_writes_three_volumes_per_case_and_is_deterministic() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &small_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = labelset(&["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "generate"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let listing = files(&a);
    let volumes = listing.iter().filter(|(n, _)| n.ends_with(".lsv")).count();
    assert_eq!(volumes, 12);
    assert!(listing.iter().any(|(n, _)| n == MANIFEST_FILE));
    assert_eq!(listing.len(), 13);
    assert_eq!(listing, files(&b));
}

#[test]
fn seed_flag_changes_the_phantoms() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &small_config());
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let c = config.to_str().unwrap();
    assert!(labelset(&["--config", c, "--out", a.to_str().unwrap(), "generate"]).status.success());
    assert!(labelset(&["--config", c, "--out", b.to_str().unwrap(), "--seed", "6", "generate"])
        .status
        .success());
    assert_ne!(fs::read(a.join("train00.features.lsv")).unwrap(), fs::read(b.join("train00.features.lsv")).unwrap());
}

#[test]
fn unknown_label_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = small_config();
    cfg.cases[2].unannotated = vec!["inner".into(), "mantle".into()];
    let config = write_config(tmp.path(), &cfg);
    let out = tmp.path().join("out");
    let o = labelset(&["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "generate"]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("invalid configuration"), "{}", stderr(&o));
    assert!(stderr(&o).contains("mantle"));
    assert!(!out.join(MANIFEST_FILE).exists());
}

#[test]
fn malformed_config_is_a_usage_error() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tmp.path().join("config.json");
    fs::write(&config, "{ not json").unwrap();
    let o = labelset(&["--config", config.to_str().unwrap(), "generate"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn unknown_suite_and_bad_thread_count_are_usage_errors() {
    assert_eq!(labelset(&["check", "everything"]).status.code(), Some(2));
    let o = Command::new(env!("CARGO_BIN_EXE_labelset"))
        .args(["check", "axioms"])
        .env("LABELSET_THREADS", "0")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn check_axioms_passes_with_the_negative_control_row() {
    let o = labelset(&["check", "axioms"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    let text = stdout(&o);
    let control = text.lines().find(|l| l.contains("SoftTargetDice: fixed counterexample")).unwrap();
    assert!(control.starts_with("[PASS]") && control.contains("negative control"));
    assert!(!text.contains("[FAIL]"));
}

#[test]
fn check_grad_passes() {
    let o = labelset(&["check", "grad"]);
    assert_eq!(o.status.code(), Some(0), "{}", stdout(&o));
    for kind in ["LeafDice", "ConvertedDice", "MarginalCrossEntropy", "SoftTargetDice", "MeanClassDice"] {
        assert!(stdout(&o).contains(kind));
    }
}

#[test]
fn check_oracle_names_its_first_failing_property() {
    let tmp = tempfile::tempdir().unwrap();
    let o = labelset(&["check", "oracle", "--out", tmp.path().to_str().unwrap()]);
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("check-oracle.json")).unwrap()).unwrap();
    let rows = report["rows"].as_array().unwrap();
    let failing: Vec<&str> =
        rows.iter().filter(|r| r["passed"] == false).map(|r| r["name"].as_str().unwrap()).collect();
    if failing.is_empty() {
        assert_eq!(o.status.code(), Some(0));
    } else {
        assert_eq!(o.status.code(), Some(1));
        assert!(stderr(&o).contains(failing[0]));
    }
    assert!(rows.iter().any(|r| r["name"].as_str().unwrap().contains("balanced off-block mass")
        && r["passed"] == true));
}

#[test]
fn train_then_evaluate_writes_model_log_and_metrics() {
    let tmp = tempfile::tempdir().unwrap();
    let config = write_config(tmp.path(), &small_config());
    let out = tmp.path().join("out");
    let (c, d) = (config.to_str().unwrap(), out.to_str().unwrap());
    let o = labelset(&["--config", c, "--out", d, "train", "--loss", "leafdice"]);
    assert_eq!(o.status.code(), Some(1), "training needs generated phantoms");
    assert!(labelset(&["--config", c, "--out", d, "generate"]).status.success());
    let o = labelset(&["--config", c, "--out", d, "train", "--loss", "leafdice"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let log = fs::read_to_string(out.join("LeafDice.log.csv")).unwrap();
    assert!(log.starts_with("epoch,split,loss\n0,train,"));
    let model = out.join("LeafDice.model.json");
    let o = labelset(&["--config", c, "--out", d, "evaluate", "--model", model.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("LeafDice.metrics.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("case_id,class_name,dsc,hd95_vox"));
    assert_eq!(csv.lines().count(), 1 + 5);
}

#[test]
fn compare_summary_has_one_entry_per_loss_and_class_and_reruns_identically() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small_config();
    let config = write_config(tmp.path(), &cfg);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    for out in [&a, &b] {
        let o = labelset(&["--config", config.to_str().unwrap(), "--out", out.to_str().unwrap(), "compare"]);
        assert!(o.status.success(), "{}", stderr(&o));
    }
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.join(SUMMARY_FILE)).unwrap()).unwrap();
    let losses = summary.as_object().unwrap();
    assert_eq!(losses.len(), cfg.losses.len());
    let entries: usize = losses
        .values()
        .map(|classes| classes.as_object().unwrap().values().filter(|s| s["dsc_mean"].is_number()).count())
        .sum();
    assert_eq!(entries, cfg.losses.len() * cfg.num_labels());
    assert_eq!(files(&a), files(&b));
}
