use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use icode::anomaly::{AnomalyKind, DatasetTriple, LabeledDataset};
use icode::model::IcodeModel;
use icode::ode::{SystemKind, SystemSpec, Trajectory};
use icode_cli::audit::audit_benchmark;
use icode_cli::benchmark::{run_benchmark, CellStatus, SUMMARY_FILE};
use icode_cli::commands::{cmd_analyze, cmd_simulate, cmd_train, load_checkpoint, load_dataset};
use icode_cli::pipeline::detect;
use icode_cli::{CliError, ExperimentConfig};

const SMALL: [&str; 6] = [
    "system.p=8",
    "protocol.points_per_period=4000",
    "protocol.n_segments=4",
    "protocol.downsample_to=400",
    "train.epochs=3",
    "analysis.retrain_epochs=3",
];

fn small(extra: &[&str]) -> ExperimentConfig {
    let sets: Vec<String> = SMALL.iter().chain(extra).map(|s| s.to_string()).collect();
    ExperimentConfig::load(None, &sets).unwrap()
}

fn icode(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_icode")).args(args).current_dir(dir).output().unwrap()
}

fn set_args(extra: &[&str]) -> Vec<String> {
    SMALL.iter().chain(extra).flat_map(|s| ["--set".to_string(), s.to_string()]).collect()
}

#[test]
fn simulate_writes_every_period_and_is_repeatable() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(&[]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    cmd_simulate(&cfg, &a).unwrap();
    cmd_simulate(&cfg, &b).unwrap();
    for period in ["normal", "cyber", "measurement"] {
        for file in ["trajectory.csv", "labels.csv", "segments.json", "meta.json"] {
            let (x, y) = (a.join(period).join(file), b.join(period).join(file));
            assert_eq!(fs::read(&x).unwrap(), fs::read(&y).unwrap(), "{}", x.display());
        }
    }
    let back = load_dataset(&a).unwrap();
    assert_eq!(back.normal.trajectory.p(), 8);
    assert_eq!(back.cyber.segments.len(), 4);
}

#[test]
fn invalid_lorenz_dimension_exits_with_validation_code() {
    let tmp = tempfile::tempdir().unwrap();
    let out = icode(tmp.path(), &["simulate", "--set", "system.kind=lorenz96", "--set", "system.p=2"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("p >= 4"), "{err}");
}

#[test]
fn unknown_config_field_is_a_validation_error() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"train": {"epochs": 3, "learning_rate": 0.1}}"#).unwrap();
    let out = icode(tmp.path(), &["simulate", "--config", "c.json"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("learning_rate"));
}

#[test]
fn missing_checkpoint_is_a_clean_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    cmd_simulate(&small(&[]), &tmp.path().join("data")).unwrap();
    let out = icode(tmp.path(), &["analyze", "--dataset", "data", "--checkpoint", "absent.json"]);
    assert_eq!(out.status.code(), Some(4));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("absent.json") && err.contains("not found"), "{err}");
    assert!(!err.contains("panicked"), "{err}");
}

#[test]
fn missing_dataset_is_a_clean_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let out = icode(tmp.path(), &["train", "--dataset", "nowhere"]);
    assert_eq!(out.status.code(), Some(4));
}

#[test]
fn train_is_repeatable_and_round_trips() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(&[]);
    let data = cmd_simulate(&cfg, &tmp.path().join("data")).unwrap();
    let first = cmd_train(&data, &cfg, &tmp.path().join("m1")).unwrap();
    cmd_train(&data, &cfg, &tmp.path().join("m2")).unwrap();
    for f in ["checkpoint.json", "loss.csv"] {
        assert_eq!(fs::read(tmp.path().join("m1").join(f)).unwrap(), fs::read(tmp.path().join("m2").join(f)).unwrap());
    }
    let log = fs::read_to_string(tmp.path().join("m1/loss.csv")).unwrap();
    assert_eq!(log.lines().count(), 1 + cfg.train.epochs);
    let back = load_checkpoint(&tmp.path().join("m1/checkpoint.json")).unwrap();
    for (x, y) in back.params().iter().zip(first.model.params()) {
        assert_eq!(x.data(), y.data());
    }
}

#[test]
fn diverging_training_exits_with_divergence_code() {
    let tmp = tempfile::tempdir().unwrap();
    cmd_simulate(&small(&[]), &tmp.path().join("data")).unwrap();
    let mut args = vec!["train".to_string(), "--dataset".into(), "data".into()];
    args.extend(set_args(&["train.lr=1e6", "train.epochs=20"]));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = icode(tmp.path(), &args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn fixed_point_data_and_exact_model_raise_no_flags() {
    let p = 6;
    let spec = SystemSpec::<f64>::standard(SystemKind::ReactionDiffusion, p, 0).unwrap();
    let rows = vec![vec![1.0; p]; 400];
    let period = || LabeledDataset::new(Trajectory::from_states(&rows).unwrap(), vec![], spec.clone()).unwrap();
    let data = DatasetTriple { normal: period(), cyber: period(), measurement: period() };
    let model = IcodeModel::<f64>::zeros(p, 4);
    let d = detect(&model, &data, &ExperimentConfig::default()).unwrap();
    assert!(d.normal_scores.iter().all(|&s| s == 0.0));
    for period in &d.periods {
        assert!(period.report.flags.iter().all(|&f| !f), "{}", period.period);
    }
    assert_eq!(d.pooled.tp + d.pooled.fp, 0);
}

#[test]
fn strong_measurement_anomalies_are_concentrated() {
    let tmp = tempfile::tempdir().unwrap();
    // Reaction-diffusion cyber offsets near 5 blow up after the window, so
    // alpha = 2 is the strong setting here; p = 20 lets one line hold all
    // ten selected entries.
    let cfg = small(&["system.p=20", "protocol.alpha=2", "train.epochs=30", "analysis.retrain_epochs=50"]);
    let data = cmd_simulate(&cfg, &tmp.path().join("data")).unwrap();
    let model = cmd_train(&data, &cfg, &tmp.path().join("model")).unwrap().model;
    let analysis = cmd_analyze(&data, &model, &cfg, &tmp.path().join("analysis")).unwrap();
    let measurement: Vec<_> =
        analysis.segments.iter().map(|s| &s.record).filter(|r| r.true_kind == AnomalyKind::Measurement).collect();
    assert_eq!(measurement.len(), 4);
    for r in measurement {
        assert_eq!(r.predicted_kind, AnomalyKind::Measurement, "{}: M = {}", r.id, r.measurement_score);
        assert!(r.measurement_score >= 0.8);
    }
    for f in ["detection.json", "rca.json", "metrics.json", "causality.csv", "graph.csv", "config.json"] {
        assert!(tmp.path().join("analysis").join(f).is_file(), "{f}");
    }
    assert!(tmp.path().join("analysis/segments/measurement_00/diff.csv").is_file());
    assert!(tmp.path().join("analysis/segments/cyber_03/c_prime.csv").is_file());
}

#[test]
fn single_cell_suite_has_one_row() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run_benchmark(&small(&[]), tmp.path()).unwrap();
    assert_eq!(summary.rows.len(), 1);
    assert_eq!(summary.cells.len(), 1);
    assert_eq!(summary.failed(), 0);
}

#[test]
fn suite_mirrors_table_layout_reruns_identically_and_audits_clean() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = small(&[
        r#"suite.systems=["lotka_volterra","lorenz96","reaction_diffusion"]"#,
        "suite.alphas=[0.5,1]",
        "suite.workers=3",
        "train.epochs=1",
        "analysis.retrain_epochs=1",
    ]);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let first = run_benchmark(&cfg, &a).unwrap();
    assert_eq!(first.rows.len(), 6);
    assert_eq!(first.failed(), 0);
    let second = run_benchmark(&cfg, &b).unwrap();
    assert_eq!(first, second);
    assert_eq!(fs::read(a.join(SUMMARY_FILE)).unwrap(), fs::read(b.join(SUMMARY_FILE)).unwrap());

    let report = audit_benchmark(&a).unwrap();
    assert!(report.passed(), "{:?}", report.mismatches);
    assert!(report.checked > 100);

    // A tampered ranking is caught.
    let rca = a.join("cells/reaction_diffusion_a1_s0/analysis/rca.json");
    let mut records: serde_json::Value = serde_json::from_str(&fs::read_to_string(&rca).unwrap()).unwrap();
    let ranking = records[0]["ranking"].as_array_mut().unwrap();
    ranking.swap(0, 1);
    fs::write(&rca, serde_json::to_string(&records).unwrap()).unwrap();
    let report = audit_benchmark(&a).unwrap();
    assert!(report.mismatches.iter().any(|m| m.contains("ranking")), "{:?}", report.mismatches);
}

#[test]
fn failed_cell_is_recorded_and_suite_continues() {
    let tmp = tempfile::tempdir().unwrap();
    // Lorenz-96 needs p >= 4, reaction-diffusion accepts p = 3.
    let cfg = small(&[r#"suite.systems=["reaction_diffusion","lorenz96"]"#, "system.p=3"]);
    let summary = run_benchmark(&cfg, tmp.path()).unwrap();
    assert_eq!(summary.cells.len(), 2);
    let lorenz = summary.cells.iter().find(|c| c.system == SystemKind::Lorenz96).unwrap();
    assert_eq!(lorenz.status, CellStatus::Failed);
    assert_eq!(lorenz.exit_code, Some(CliError::Validation(String::new()).exit_code()));
    assert!(lorenz.error.as_deref().unwrap().contains("p >= 4"));
    let rd = summary.cells.iter().find(|c| c.system == SystemKind::ReactionDiffusion).unwrap();
    assert_eq!(rd.status, CellStatus::Ok);
    assert!(tmp.path().join(SUMMARY_FILE).is_file());
    assert!(audit_benchmark(tmp.path()).unwrap().passed());

    let mut args = vec!["benchmark".to_string()];
    args.extend(set_args(&[r#"suite.systems=["reaction_diffusion","lorenz96"]"#, "system.p=3", "output_dir=out"]));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = icode(tmp.path(), &args);
    assert_eq!(out.status.code(), Some(1));
    assert!(tmp.path().join("out").join(SUMMARY_FILE).is_file());
}

#[test]
fn output_root_comes_from_the_environment() {
    let tmp = tempfile::tempdir().unwrap();
    let mut args = vec!["simulate".to_string()];
    args.extend(set_args(&[]));
    let args: Vec<&str> = args.iter().map(String::as_str).collect();
    let out = Command::new(env!("CARGO_BIN_EXE_icode"))
        .args(&args)
        .current_dir(tmp.path())
        .env(icode_cli::config::OUTPUT_ROOT_ENV, "from-env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(tmp.path().join("from-env/dataset/normal/trajectory.csv").is_file());
}
