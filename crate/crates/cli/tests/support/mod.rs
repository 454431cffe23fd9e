//! Checks that each subcommand's files parse back to what the library returns for the same inputs.
//! Shared by the `cli` and `acceptance` test targets.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use pickeff_core::annotate::{annotate_session, DbscanParams, FieldBoundary, LabelSequence, MassBounds};
use pickeff_core::efficiency::{
    compute_reports, read_report_csv, season_summary, EfficiencyParams, EfficiencyReport, SessionInput,
};
use pickeff_core::evaluate::{confusion_labels, ConfusionCounts};
use pickeff_core::ingest::{
    load_break_log, load_session_csv, load_tray_counts, save_session_csv, CartSession,
};
use pickeff_core::model::{
    build_model, classify, group_by_date, load_model, loocv, train, write_model, FeatureSet, ModelConfig, TrainConfig,
};
use pickeff_core::synth::{read_truth_json, SynthConfig};
use tempfile::TempDir;

fn pickeff(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pickeff")).args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = pickeff(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

const SMALL: [&str; 6] =
    ["--set", "synth.n_carts=2", "--set", "synth.day_length_s=600", "--set", "synth.breaks=[]"];

fn small_cfg() -> SynthConfig {
    SynthConfig { n_carts: 2, day_length_s: 600.0, breaks: vec![], ..Default::default() }
}

/// Two small synthetic days written through the CLI.
fn dataset() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let mut args = vec!["synth", "--days", "2", "--out", s(&data)];
    args.extend(SMALL);
    ok(&args);
    (dir, data)
}

fn day(data: &Path, d: u32) -> PathBuf {
    data.join(format!("telemetry_4-{}-24.csv", d + 1))
}

const TINY_TRAIN: [&str; 6] =
    ["--set", "train.epochs=1", "--set", "train.batch_size=4", "--set", "train.micro_batch=4"];

fn tiny_tc(fs: FeatureSet) -> TrainConfig {
    TrainConfig { epochs: 1, batch_size: 4, micro_batch: 4, feature_set: fs, ..Default::default() }
}

pub fn synth_is_reproducible_and_matches_library() {
    let (dir, data) = dataset();
    let again = dir.path().join("again");
    let mut args = vec!["synth", "--days", "2", "--out", s(&again)];
    args.extend(SMALL);
    ok(&args);
    for entry in std::fs::read_dir(&data).unwrap() {
        let p = entry.unwrap().path();
        let q = again.join(p.file_name().unwrap());
        if p.file_name().unwrap() == "manifest.json" {
            continue;
        }
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap(), "{}", p.display());
    }
    let lib = pickeff_core::synth::generate_season(&small_cfg(), 2).unwrap();
    assert_eq!(load_session_csv(day(&data, 0)).unwrap().len(), lib[0].sessions.len());
    let truth = read_truth_json(std::fs::File::open(data.join("truth.json")).unwrap()).unwrap();
    assert_eq!(truth.days[1], lib[1].truth);
    assert!(truth.injections.is_none());
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(data.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "synth");
    assert_eq!(manifest["config"]["synth"]["n_carts"], 2);
    assert_eq!(manifest["seed"], 42);
}

pub fn synth_severity_logs_injections() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("dirty");
    let mut args = vec!["synth", "--days", "1", "--severity", "0.2", "--seed", "7", "--out", s(&out)];
    args.extend(SMALL);
    ok(&args);
    let truth = read_truth_json(std::fs::File::open(out.join("truth.json")).unwrap()).unwrap();
    let log = truth.injections.expect("injection log");
    assert_eq!(log.severity, 0.2);
    assert!(!log.entries.is_empty());
    assert_eq!(truth.config.seed, 7);
}

pub fn annotate_matches_library_bytes() {
    let (dir, data) = dataset();
    let out = dir.path().join("ann");
    ok(&["annotate", "--telemetry", s(&day(&data, 0)), "--boundary", s(&data.join("boundary.csv")), "--out", s(&out)]);
    let field = FieldBoundary::load_csv(data.join("boundary.csv")).unwrap();
    let lib: Vec<CartSession> = load_session_csv(day(&data, 0))
        .unwrap()
        .into_iter()
        .map(|sess| {
            let l = annotate_session(&sess, &field, &DbscanParams::default(), &MassBounds::default()).unwrap();
            sess.with_labels(&l.labels)
        })
        .collect();
    let expected = dir.path().join("lib.csv");
    save_session_csv(&lib, &expected).unwrap();
    assert_eq!(std::fs::read(out.join("telemetry_4-1-24.csv")).unwrap(), std::fs::read(expected).unwrap());
}

pub fn missing_boundary_exits_2_naming_the_path() {
    let (dir, data) = dataset();
    let missing = dir.path().join("nowhere").join("boundary.csv");
    let out = pickeff(&["annotate", "--telemetry", s(&day(&data, 0)), "--boundary", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains(s(&missing)));
}

pub fn unknown_configuration_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = pickeff(&["synth", "--days", "1", "--set", "synth.carts=2", "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "[train]\nepochz = 3\n").unwrap();
    let out = pickeff(&["synth", "--days", "1", "--config", s(&cfg), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

fn library_reports(data: &Path) -> Vec<EfficiencyReport> {
    let sessions: Vec<CartSession> =
        (0..2).flat_map(|d| load_session_csv(day(data, d)).unwrap()).collect();
    let labels: Vec<LabelSequence> = sessions.iter().map(|x| LabelSequence::from_session(x).unwrap()).collect();
    let inputs: Vec<SessionInput> =
        sessions.iter().zip(&labels).map(|(session, labels)| SessionInput { session, labels }).collect();
    let breaks = load_break_log(data.join("break_log.csv")).unwrap();
    let trays = load_tray_counts(data.join("tray_counts.csv")).unwrap();
    compute_reports(&inputs, &breaks, &trays, &EfficiencyParams::default()).unwrap().reports
}

fn read_reports(p: &Path) -> Vec<EfficiencyReport> {
    read_report_csv(std::fs::File::open(p).unwrap()).unwrap()
}

pub fn efficiency_and_season_match_library() {
    let (dir, data) = dataset();
    let eff = dir.path().join("eff");
    ok(&[
        "efficiency",
        "--telemetry",
        s(&day(&data, 0)),
        s(&day(&data, 1)),
        "--break-log",
        s(&data.join("break_log.csv")),
        "--tray-counts",
        s(&data.join("tray_counts.csv")),
        "--out",
        s(&eff),
    ]);
    let cli_reports = read_reports(&eff.join("report.csv"));
    let lib = library_reports(&data);
    assert_eq!(cli_reports.len(), 4, "one row per cart-day");
    let mut buf = Vec::new();
    pickeff_core::efficiency::write_report_csv(&mut buf, &lib).unwrap();
    assert_eq!(cli_reports, read_report_csv(buf.as_slice()).unwrap());

    for (iqr, flag) in [("on", true), ("off", false)] {
        let season = dir.path().join(format!("season_{iqr}"));
        ok(&["season", "--reports", s(&eff.join("report.csv")), "--metric", "efficiency", "--iqr", iqr, "--out", s(&season)]);
        let json: serde_json::Value =
            serde_json::from_slice(&std::fs::read(season.join("summary.json")).unwrap()).unwrap();
        assert_eq!(json["iqr"], flag);
        let values: Vec<f64> = cli_reports.iter().map(|r| r.efficiency_pct).collect();
        let want = season_summary(&values, "efficiency", flag).unwrap();
        let got: pickeff_core::efficiency::SeasonSummary =
            serde_json::from_value(json["summaries"][0].clone()).unwrap();
        assert_eq!(got, want);
        assert_eq!(got.mean, want.mean);
        for plot in ["efficiency_box.svg", "efficiency_hist.svg", "efficiency_trend.svg"] {
            let text = std::fs::read_to_string(season.join(plot)).unwrap();
            assert!(text.starts_with("<svg"), "{plot}");
        }
    }
}

pub fn train_and_classify_match_library() {
    let (dir, data) = dataset();
    let model_dir = dir.path().join("model");
    let (d0, d1) = (day(&data, 0), day(&data, 1));
    let mut args = vec!["train", "--telemetry", s(&d0), "--features", "mass,accel", "--out", s(&model_dir)];
    args.extend(TINY_TRAIN);
    ok(&args);
    let cli_model = load_model(model_dir.join("model.json")).unwrap();
    assert_eq!(cli_model.config.in_channels, 4);

    let sessions = load_session_csv(day(&data, 0)).unwrap();
    let tc = tiny_tc(FeatureSet::MassAccel);
    let m = build_model(&ModelConfig::for_features(FeatureSet::MassAccel), tc.feature_set, tc.seed).unwrap();
    let lib_model = train(m, &sessions, &tc).unwrap().model;
    let mut lib_bytes = Vec::new();
    write_model(&mut lib_bytes, &lib_model).unwrap();
    assert_eq!(std::fs::read(model_dir.join("model.json")).unwrap(), lib_bytes);

    let cls = dir.path().join("cls");
    ok(&["classify", "--model", s(&model_dir.join("model.json")), "--telemetry", s(&d1), "--out", s(&cls)]);
    let predicted = load_session_csv(cls.join("telemetry_4-2-24.csv")).unwrap();
    for (p, orig) in predicted.iter().zip(load_session_csv(day(&data, 1)).unwrap()) {
        let lib = classify(&lib_model, &orig).unwrap();
        assert_eq!(p.labels().unwrap(), lib.labels.labels);
    }

    let mass_dir = dir.path().join("mass");
    let mut args = vec!["train", "--telemetry", s(&d0), "--features", "mass", "--out", s(&mass_dir)];
    args.extend(TINY_TRAIN);
    ok(&args);
    assert_eq!(load_model(mass_dir.join("model.json")).unwrap().config.in_channels, 1);
}

pub fn loocv_writes_fold_rows_and_mean() {
    let (dir, data) = dataset();
    let out = dir.path().join("cv");
    let (d0, d1) = (day(&data, 0), day(&data, 1));
    let mut args = vec!["loocv", "--telemetry", s(&d0), s(&d1), "--features", "mass", "--out", s(&out)];
    args.extend(TINY_TRAIN);
    ok(&args);
    let mut rdr = csv::Reader::from_path(out.join("folds.csv")).unwrap();
    let rows: Vec<csv::StringRecord> = rdr.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[2][0], "mean");

    let sessions: Vec<CartSession> = (0..2).flat_map(|d| load_session_csv(day(&data, d)).unwrap()).collect();
    let (days, _) = group_by_date(sessions);
    let dates: Vec<_> = days.iter().map(|d| d.date).collect();
    let report = loocv(&days, &dates, &ModelConfig::for_features(FeatureSet::Mass), &tiny_tc(FeatureSet::Mass)).unwrap();
    for (row, fold) in rows.iter().zip(&report.folds) {
        assert_eq!(&row[0], fold.held_out.to_string());
        let counts = ConfusionCounts {
            tp: row[1].parse().unwrap(),
            fp: row[2].parse().unwrap(),
            fn_: row[3].parse().unwrap(),
            tn: row[4].parse().unwrap(),
        };
        assert_eq!(counts, fold.counts);
        assert!((row[7].parse::<f64>().unwrap() - fold.metrics.f1).abs() <= 5e-7);
    }
    assert!((rows[2][7].parse::<f64>().unwrap() - report.macro_avg.f1).abs() <= 5e-7);
}

pub fn evaluate_matches_library() {
    let (dir, data) = dataset();
    let ann = dir.path().join("ann");
    ok(&["annotate", "--telemetry", s(&day(&data, 0)), "--boundary", s(&data.join("boundary.csv")), "--out", s(&ann)]);
    let out = dir.path().join("ev");
    let eff_truth = dir.path().join("eff_truth");
    let eff_ann = dir.path().join("eff_ann");
    for (src, dest) in [(day(&data, 0), &eff_truth), (ann.join("telemetry_4-1-24.csv"), &eff_ann)] {
        ok(&[
            "efficiency",
            "--telemetry",
            s(&src),
            "--break-log",
            s(&data.join("break_log.csv")),
            "--tray-counts",
            s(&data.join("tray_counts.csv")),
            "--out",
            s(dest),
        ]);
    }
    ok(&[
        "evaluate",
        "--pred",
        s(&ann.join("telemetry_4-1-24.csv")),
        "--truth",
        s(&day(&data, 0)),
        "--truth-report",
        s(&eff_truth.join("report.csv")),
        "--est-report",
        s(&eff_ann.join("report.csv")),
        "--out",
        s(&out),
    ]);
    let json: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("evaluation.json")).unwrap()).unwrap();
    let pred = load_session_csv(ann.join("telemetry_4-1-24.csv")).unwrap();
    let truth = load_session_csv(day(&data, 0)).unwrap();
    let mut pooled = ConfusionCounts::default();
    for (p, t) in pred.iter().zip(&truth) {
        pooled.add(&confusion_labels(&p.labels().unwrap(), &t.labels().unwrap()).unwrap());
    }
    let got: ConfusionCounts = serde_json::from_value(json["labels"]["counts"].clone()).unwrap();
    assert_eq!(got, pooled);
    let gt: Vec<f64> = read_reports(&eff_truth.join("report.csv")).iter().map(|r| r.efficiency_pct).collect();
    let est: Vec<f64> = read_reports(&eff_ann.join("report.csv")).iter().map(|r| r.efficiency_pct).collect();
    let want = pickeff_core::evaluate::estimation_accuracy(&gt, &est).unwrap();
    assert_eq!(json["estimates"]["efficiency"]["accuracy_pct"].as_f64().unwrap(), want.accuracy_pct);
}
