use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use pickeff_core::annotate::{annotate_session, FieldBoundary, LabelSequence};
use pickeff_core::efficiency::{
    compute_reports, read_report_csv, season_summary, write_report_csv, EfficiencyReport, Metric, SeasonSummary,
    SessionInput,
};
use pickeff_core::evaluate::{
    confusion_labels, estimation_accuracy, precision_recall_f1, AccuracyReport, Averaging, ConfusionCounts, Metrics,
};
use pickeff_core::ingest::{
    load_break_log, load_session_csv, load_tray_counts, save_session_csv, CartSession, HarvestDate,
};
use pickeff_core::model::{
    build_model, classify_with, group_by_date, load_model, loocv, save_model, train, write_history_csv, Stitching,
};
use pickeff_core::synth::{corrupt, generate_season, write_season_files, InjectionLog};
use serde::{Deserialize, Serialize};

use crate::config::{resolve, Resolved};
use crate::error::CliError;
use crate::manifest::Manifest;
use crate::{plots, Cli, Command, MetricChoice, Toggle};

pub fn run(cli: &Cli) -> Result<(), CliError> {
    let features = match &cli.command {
        Command::Train { features, .. } | Command::Loocv { features, .. } => *features,
        _ => None,
    };
    let resolved = resolve(cli.common.config.as_deref(), &cli.common.set, cli.common.seed, features)?;
    match &cli.command {
        Command::Annotate { telemetry, boundary, out } => annotate(&resolved, telemetry, boundary, out),
        Command::Train { telemetry, out, .. } => train_cmd(&resolved, telemetry, out),
        Command::Classify { model, telemetry, overlap_stride, out } => {
            classify_cmd(&resolved, model, telemetry, *overlap_stride, out)
        }
        Command::Loocv { telemetry, held_out_dates, averaging, save_predictions, out, .. } => {
            loocv_cmd(&resolved, telemetry, held_out_dates, *averaging, *save_predictions, out)
        }
        Command::Evaluate { pred, truth, truth_report, est_report, out } => {
            evaluate_cmd(&resolved, pred, truth, truth_report.as_deref(), est_report.as_deref(), out)
        }
        Command::Efficiency { telemetry, break_log, tray_counts, strict, out } => {
            efficiency_cmd(&resolved, telemetry, break_log.as_deref(), tray_counts.as_deref(), *strict, out)
        }
        Command::Season { reports, metric, iqr, out } => season_cmd(&resolved, reports, *metric, *iqr, out),
        Command::Synth { days, severity, out } => synth_cmd(&resolved, *days, *severity, out),
    }
}

fn out_dir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::output(dir, e))
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::output(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| CliError::output(path, e))?;
    w.flush().map_err(|e| CliError::output(path, e))
}

fn file_name(p: &Path) -> PathBuf {
    p.file_name().map(PathBuf::from).unwrap_or_else(|| PathBuf::from("telemetry.csv"))
}

/// Loads each telemetry file, recording it as an input.
fn load_all(paths: &[PathBuf], m: &mut Manifest) -> Result<Vec<(PathBuf, Vec<CartSession>)>, CliError> {
    for p in paths {
        m.input(p)?;
    }
    paths.iter().map(|p| Ok((p.clone(), load_session_csv(p)?))).collect()
}

fn finish(m: &Manifest, out: &Path) -> Result<(), CliError> {
    let path = m.write(out)?;
    log::info!("wrote {}", path.display());
    Ok(())
}

fn annotate(r: &Resolved, telemetry: &[PathBuf], boundary: &Path, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("annotate", r);
    m.input(boundary)?;
    let field = FieldBoundary::load_csv(boundary)?;
    let files = load_all(telemetry, &mut m)?;
    out_dir(out)?;
    let cfg = &r.config.annotate;
    for (path, sessions) in files {
        let mut labeled = Vec::with_capacity(sessions.len());
        for s in sessions {
            let labels = annotate_session(&s, &field, &cfg.dbscan, &cfg.mass)?;
            log::info!("{}: {} of {} samples Pick", s.session_id, labels.pick_count(), s.len());
            labeled.push(s.with_labels(&labels.labels));
        }
        let dest = out.join(file_name(&path));
        save_session_csv(&labeled, &dest)?;
        m.output(&dest);
    }
    finish(&m, out)
}

fn train_cmd(r: &Resolved, telemetry: &[PathBuf], out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("train", r);
    let files = load_all(telemetry, &mut m)?;
    out_dir(out)?;
    let mut sessions = Vec::new();
    for s in files.into_iter().flat_map(|(_, s)| s) {
        if s.is_labeled() {
            sessions.push(s);
        } else {
            m.skip(&s.session_id, "not fully labeled");
        }
    }
    let tc = &r.config.train;
    let model = build_model(&r.config.model, tc.feature_set, tc.seed)?;
    log::info!("training {} parameters on {} sessions", model.param_count(), sessions.len());
    let outcome = train(model, &sessions, tc)?;
    let model_path = out.join("model.json");
    save_model(&model_path, &outcome.model)?;
    m.output(&model_path);
    let hist = out.join("history.csv");
    let mut w = create(&hist)?;
    write_history_csv(&mut w, &outcome.history).map_err(|e| CliError::output(&hist, e))?;
    w.flush().map_err(|e| CliError::output(&hist, e))?;
    m.output(&hist);
    m.notes.push(format!(
        "best epoch {} of {}; {} training and {} validation windows",
        outcome.best_epoch,
        outcome.history.len(),
        outcome.train_windows,
        outcome.val_windows
    ));
    finish(&m, out)
}

fn stitching(overlap: Option<usize>) -> Stitching {
    overlap.map_or(Stitching::Tiled, |stride| Stitching::Overlap { stride })
}

fn classify_cmd(
    r: &Resolved,
    model: &Path,
    telemetry: &[PathBuf],
    overlap: Option<usize>,
    out: &Path,
) -> Result<(), CliError> {
    let mut m = Manifest::new("classify", r);
    m.input(model)?;
    let trained = load_model(model)?;
    m.notes.push(format!("model feature set {}", trained.feature_set));
    let files = load_all(telemetry, &mut m)?;
    out_dir(out)?;
    for (path, sessions) in files {
        let mut labeled = Vec::with_capacity(sessions.len());
        for s in sessions {
            let c = classify_with(&trained, &s, stitching(overlap))?;
            labeled.push(s.with_labels(&c.labels.labels));
        }
        let dest = out.join(file_name(&path));
        save_session_csv(&labeled, &dest)?;
        m.output(&dest);
    }
    finish(&m, out)
}

pub const FOLDS_HEADER: [&str; 9] = ["held_out", "tp", "fp", "fn", "tn", "precision", "recall", "f1", "best_epoch"];

#[derive(Debug, Serialize, Deserialize)]
pub struct LoocvOutput {
    pub averaging: String,
    pub folds: Vec<pickeff_core::model::FoldSummary>,
    pub mean: Metrics,
    pub macro_avg: Metrics,
    pub micro_avg: Metrics,
}

fn loocv_cmd(
    r: &Resolved,
    telemetry: &[PathBuf],
    held_out: &[String],
    averaging: Averaging,
    save_predictions: bool,
    out: &Path,
) -> Result<(), CliError> {
    let mut m = Manifest::new("loocv", r);
    let files = load_all(telemetry, &mut m)?;
    out_dir(out)?;
    let (days, undated) = group_by_date(files.into_iter().flat_map(|(_, s)| s).collect());
    for s in &undated {
        m.skip(&s.session_id, "no date in session id");
    }
    let dates: Vec<HarvestDate> = if held_out.is_empty() {
        days.iter().map(|d| d.date).collect()
    } else {
        held_out
            .iter()
            .map(|s| HarvestDate::parse(s).ok_or_else(|| CliError::Config(format!("bad held-out date `{s}`"))))
            .collect::<Result<_, _>>()?
    };
    let report = loocv(&days, &dates, &r.config.model, &r.config.train)?;
    let mean = report.average(averaging);

    let folds_path = out.join("folds.csv");
    let mut w = csv::Writer::from_path(&folds_path).map_err(|e| CliError::output(&folds_path, e))?;
    let io = |e: csv::Error| CliError::output(&folds_path, e);
    w.write_record(FOLDS_HEADER).map_err(io)?;
    let f = pickeff_core::ingest::format_float;
    for fold in &report.folds {
        let c = fold.counts;
        w.write_record([
            fold.held_out.to_string(),
            c.tp.to_string(),
            c.fp.to_string(),
            c.fn_.to_string(),
            c.tn.to_string(),
            f(fold.metrics.precision),
            f(fold.metrics.recall),
            f(fold.metrics.f1),
            fold.best_epoch.to_string(),
        ])
        .map_err(io)?;
        let hist = out.join(format!("history_{}.csv", fold.held_out));
        let mut hw = create(&hist)?;
        write_history_csv(&mut hw, &fold.history).map_err(|e| CliError::output(&hist, e))?;
        hw.flush().map_err(|e| CliError::output(&hist, e))?;
        m.output(&hist);
        if save_predictions {
            let test = &days.iter().find(|d| d.date == fold.held_out).expect("held-out date exists").sessions;
            let labeled: Vec<CartSession> =
                test.iter().zip(&fold.predictions).map(|(s, p)| s.clone().with_labels(&p.labels)).collect();
            let dest = out.join(format!("predictions_{}.csv", fold.held_out));
            save_session_csv(&labeled, &dest)?;
            m.output(&dest);
        }
    }
    w.write_record(["mean".into(), String::new(), String::new(), String::new(), String::new(), f(mean.precision), f(mean.recall), f(mean.f1), String::new()])
        .map_err(io)?;
    w.flush().map_err(|e| CliError::output(&folds_path, e))?;
    m.output(&folds_path);

    let json = out.join("loocv.json");
    write_json(
        &json,
        &LoocvOutput {
            averaging: format!("{averaging:?}").to_lowercase(),
            folds: report.summaries(),
            mean,
            macro_avg: report.macro_avg,
            micro_avg: report.micro_avg,
        },
    )?;
    m.output(&json);
    finish(&m, out)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SessionScore {
    pub session_id: String,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelScores {
    pub sessions: Vec<SessionScore>,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EstimateScores {
    pub sessions: Vec<String>,
    pub efficiency: AccuracyReport,
    pub tray_fill: Option<AccuracyReport>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EvaluationOutput {
    pub labels: Option<LabelScores>,
    pub estimates: Option<EstimateScores>,
}

fn evaluate_cmd(
    r: &Resolved,
    pred: &[PathBuf],
    truth: &[PathBuf],
    truth_report: Option<&Path>,
    est_report: Option<&Path>,
    out: &Path,
) -> Result<(), CliError> {
    let mut m = Manifest::new("evaluate", r);
    let labels_requested = !pred.is_empty() || !truth.is_empty();
    let reports_requested = truth_report.is_some() || est_report.is_some();
    if !labels_requested && !reports_requested {
        return Err(CliError::Config("give --pred/--truth, --truth-report/--est-report, or both".into()));
    }
    if labels_requested && (pred.is_empty() || truth.is_empty()) {
        return Err(CliError::Config("--pred and --truth go together".into()));
    }
    if reports_requested && (truth_report.is_none() || est_report.is_none()) {
        return Err(CliError::Config("--truth-report and --est-report go together".into()));
    }
    let mut output = EvaluationOutput { labels: None, estimates: None };

    if labels_requested {
        let preds: Vec<CartSession> = load_all(pred, &mut m)?.into_iter().flat_map(|(_, s)| s).collect();
        let truths: HashMap<_, _> = load_all(truth, &mut m)?
            .into_iter()
            .flat_map(|(_, s)| s)
            .map(|s| (s.session_id.clone(), s))
            .collect();
        let mut scores = LabelScores { sessions: Vec::new(), counts: ConfusionCounts::default(), metrics: Metrics::default() };
        for p in &preds {
            let Some(t) = truths.get(&p.session_id) else {
                m.skip(&p.session_id, "no truth session");
                continue;
            };
            let (Some(pl), Some(tl)) = (p.labels(), t.labels()) else {
                m.skip(&p.session_id, "unlabeled samples");
                continue;
            };
            let counts = match confusion_labels(&pl, &tl) {
                Ok(c) => c,
                Err(e) => {
                    m.skip(&p.session_id, e);
                    continue;
                }
            };
            scores.counts.add(&counts);
            scores.sessions.push(SessionScore {
                session_id: p.session_id.to_string(),
                counts,
                metrics: precision_recall_f1(&counts),
            });
        }
        scores.metrics = precision_recall_f1(&scores.counts);
        output.labels = Some(scores);
    }

    if let (Some(tp), Some(ep)) = (truth_report, est_report) {
        m.input(tp)?;
        m.input(ep)?;
        let truth_rows = read_reports(tp)?;
        let est_rows: HashMap<String, EfficiencyReport> =
            read_reports(ep)?.into_iter().map(|r| (r.session_id.to_string(), r)).collect();
        let mut ids = Vec::new();
        let (mut gt_eff, mut est_eff, mut gt_fill, mut est_fill) = (vec![], vec![], vec![], vec![]);
        for t in &truth_rows {
            let Some(e) = est_rows.get(t.session_id.as_str()) else {
                m.skip(&t.session_id, "no estimated report");
                continue;
            };
            ids.push(t.session_id.to_string());
            gt_eff.push(t.efficiency_pct);
            est_eff.push(e.efficiency_pct);
            if let (Some(a), Some(b)) = (t.tray_fill_min, e.tray_fill_min) {
                gt_fill.push(a);
                est_fill.push(b);
            }
        }
        let tray_fill = if gt_fill.is_empty() { None } else { Some(estimation_accuracy(&gt_fill, &est_fill)?) };
        output.estimates =
            Some(EstimateScores { sessions: ids, efficiency: estimation_accuracy(&gt_eff, &est_eff)?, tray_fill });
    }
    out_dir(out)?;
    let path = out.join("evaluation.json");
    write_json(&path, &output)?;
    m.output(&path);
    finish(&m, out)
}

fn read_reports(path: &Path) -> Result<Vec<EfficiencyReport>, CliError> {
    let f = File::open(path).map_err(|_| CliError::MissingInput(path.to_path_buf()))?;
    Ok(read_report_csv(std::io::BufReader::new(f))?)
}

fn efficiency_cmd(
    r: &Resolved,
    telemetry: &[PathBuf],
    break_log: Option<&Path>,
    tray_counts: Option<&Path>,
    strict: bool,
    out: &Path,
) -> Result<(), CliError> {
    let mut m = Manifest::new("efficiency", r);
    let breaks = match break_log {
        Some(p) => {
            m.input(p)?;
            load_break_log(p)?
        }
        None => {
            m.notes.push("no break log: every detected break is excised".into());
            Vec::new()
        }
    };
    let trays = match tray_counts {
        Some(p) => {
            m.input(p)?;
            load_tray_counts(p)?
        }
        None => {
            m.notes.push("no tray counts: trays are counted from the mass signal".into());
            Vec::new()
        }
    };
    let sessions: Vec<CartSession> = load_all(telemetry, &mut m)?.into_iter().flat_map(|(_, s)| s).collect();
    let mut labels = Vec::with_capacity(sessions.len());
    let mut kept = Vec::with_capacity(sessions.len());
    for s in &sessions {
        match LabelSequence::from_session(s) {
            Some(l) => {
                labels.push(l);
                kept.push(s);
            }
            None => m.skip(&s.session_id, "not fully labeled"),
        }
    }
    let inputs: Vec<SessionInput> =
        kept.iter().zip(&labels).map(|(s, l)| SessionInput { session: s, labels: l }).collect();
    let set = compute_reports(&inputs, &breaks, &trays, &r.config.efficiency)?;
    for s in &set.skipped {
        m.skip(&s.session_id, &s.reason);
    }
    for (id, want, found) in &set.break_shortfalls {
        m.notes.push(format!("{id}: break log expects {want} breaks, {found} detected"));
    }
    out_dir(out)?;
    let path = out.join("report.csv");
    let mut w = create(&path)?;
    write_report_csv(&mut w, &set.reports)?;
    w.flush().map_err(|e| CliError::output(&path, e))?;
    m.output(&path);
    finish(&m, out)?;
    if strict && !m.skipped.is_empty() {
        return Err(CliError::SessionsSkipped(m.skipped.len()));
    }
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct DateRow {
    pub date: String,
    pub sessions: usize,
    pub efficiency_mean: Option<f64>,
    pub tray_fill_mean: Option<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SeasonOutput {
    pub iqr: bool,
    pub summaries: Vec<SeasonSummary>,
    pub per_date: Vec<DateRow>,
}

fn mean(v: &[f64]) -> Option<f64> {
    (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
}

fn season_cmd(r: &Resolved, reports: &[PathBuf], choice: MetricChoice, iqr: Toggle, out: &Path) -> Result<(), CliError> {
    let mut m = Manifest::new("season", r);
    let mut rows = Vec::new();
    for p in reports {
        m.input(p)?;
        rows.extend(read_reports(p)?);
    }
    let iqr = iqr == Toggle::On;
    let metrics: &[Metric] = match choice {
        MetricChoice::Efficiency => &[Metric::Efficiency],
        MetricChoice::TrayFill => &[Metric::TrayFillTime],
        MetricChoice::Both => &[Metric::Efficiency, Metric::TrayFillTime],
    };
    out_dir(out)?;
    let mut summaries = Vec::new();
    for &metric in metrics {
        let values: Vec<f64> = rows.iter().filter_map(|r| metric.select(r)).collect();
        let summary = season_summary(&values, metric.name(), iqr)?;
        let kept: Vec<f64> = if iqr {
            let (lo, hi) = pickeff_core::efficiency::iqr_fences(&values)?;
            values.iter().copied().filter(|v| (lo..=hi).contains(v)).collect()
        } else {
            values.clone()
        };
        let (title, unit) = match metric {
            Metric::Efficiency => ("Picker efficiency", "efficiency (%)"),
            Metric::TrayFillTime => ("Tray fill time", "minutes per tray"),
        };
        let stem = metric.name();
        let box_path = out.join(format!("{stem}_box.svg"));
        plots::box_plot(&box_path, title, unit, &kept)?;
        let hist_path = out.join(format!("{stem}_hist.svg"));
        plots::histogram(&hist_path, title, unit, &kept, 15)?;
        let trend_path = out.join(format!("{stem}_trend.svg"));
        let by_date = per_date(&rows, |r| metric.select(r).filter(|v| !iqr || kept.contains(v)));
        let points: Vec<(String, f64)> = by_date.into_iter().filter_map(|(d, v)| mean(&v).map(|x| (d, x))).collect();
        plots::trend(&trend_path, &format!("{title} by date"), unit, &points)?;
        for p in [box_path, hist_path, trend_path] {
            m.output(&p);
        }
        summaries.push(summary);
    }
    let eff = per_date(&rows, |r| Some(r.efficiency_pct));
    let fill: HashMap<String, Vec<f64>> = per_date(&rows, |r| r.tray_fill_min).into_iter().collect();
    let per_date_rows = eff
        .iter()
        .map(|(d, v)| DateRow {
            date: d.clone(),
            sessions: v.len(),
            efficiency_mean: mean(v),
            tray_fill_mean: fill.get(d).and_then(|f| mean(f)),
        })
        .collect();
    let path = out.join("summary.json");
    write_json(&path, &SeasonOutput { iqr, summaries, per_date: per_date_rows })?;
    m.output(&path);
    finish(&m, out)
}

/// Values grouped by the date in the session id, in calendar order; undated rows go last.
fn per_date(rows: &[EfficiencyReport], pick: impl Fn(&EfficiencyReport) -> Option<f64>) -> Vec<(String, Vec<f64>)> {
    let mut dated: BTreeMap<Option<HarvestDate>, Vec<f64>> = BTreeMap::new();
    for r in rows {
        let entry = dated.entry(r.session_id.date()).or_default();
        if let Some(v) = pick(r) {
            entry.push(v);
        }
    }
    let mut out: Vec<(String, Vec<f64>)> = Vec::new();
    let undated = dated.remove(&None);
    for (d, v) in dated {
        out.push((d.map(|d| d.to_string()).unwrap_or_default(), v));
    }
    if let Some(v) = undated {
        out.push(("undated".into(), v));
    }
    out
}

fn synth_cmd(r: &Resolved, days: u32, severity: f64, out: &Path) -> Result<(), CliError> {
    if !(0.0..=1.0).contains(&severity) {
        return Err(CliError::Config(format!("--severity must be in [0, 1], got {severity}")));
    }
    let mut m = Manifest::new("synth", r);
    m.seed = r.config.synth.seed;
    let cfg = &r.config.synth;
    let mut season = generate_season(cfg, days)?;
    let injections = if severity > 0.0 {
        let mut log = InjectionLog { severity, entries: Vec::new() };
        for (i, day) in season.iter_mut().enumerate() {
            let (dirty, l) = corrupt(&day.sessions, severity, cfg.seed.wrapping_add(i as u64));
            day.sessions = dirty;
            log.entries.extend(l.entries);
        }
        m.notes.push(format!("{} anomalies injected", log.entries.len()));
        Some(log)
    } else {
        None
    };
    let files = write_season_files(out, cfg, &season, injections.as_ref())?;
    for p in files.telemetry.iter().chain([&files.break_log, &files.tray_counts, &files.boundary, &files.truth]) {
        m.output(p);
    }
    finish(&m, out)
}
