use std::sync::OnceLock;

use pickeff_core::evaluate::{confusion_labels, precision_recall_f1};
use pickeff_core::ingest::{CartSession, SessionId};
use pickeff_core::model::{
    build_model, classify, classify_with, group_by_date, load_model, loocv, save_model, train, window_spans,
    FeatureSet, ModelConfig, NormStats, Stitching, TrainConfig, TrainOutcome, WindowBatch,
};
use pickeff_core::synth::{generate_day, generate_season, SynthConfig};

fn small_day() -> SynthConfig {
    SynthConfig { n_carts: 1, day_length_s: 900.0, breaks: vec![], ..Default::default() }
}

fn tiny_train(epochs: usize) -> TrainConfig {
    TrainConfig { epochs, batch_size: 4, micro_batch: 4, feature_set: FeatureSet::MassAccel, ..Default::default() }
}

fn overfit_run() -> &'static (CartSession, TrainOutcome) {
    static RUN: OnceLock<(CartSession, TrainOutcome)> = OnceLock::new();
    RUN.get_or_init(|| {
        let session = generate_day(&small_day(), 0).unwrap().sessions.remove(0);
        let cfg = ModelConfig::for_features(FeatureSet::MassAccel);
        let tc = tiny_train(12);
        let model = build_model(&cfg, tc.feature_set, tc.seed).unwrap();
        let out = train(model, std::slice::from_ref(&session), &tc).unwrap();
        (session, out)
    })
}

#[test]
fn one_cart_day_is_memorized() {
    let (session, out) = overfit_run();
    let pred = classify(&out.model, session).unwrap();
    let c = confusion_labels(&pred.labels.labels, &session.labels().unwrap()).unwrap();
    assert!(c.accuracy() >= 0.99, "training accuracy {:.4}", c.accuracy());
}

#[test]
fn training_loss_falls() {
    let (_, out) = overfit_run();
    assert!(out.history.len() >= 5);
    assert!(out.history[4].train_loss < out.history[0].train_loss, "{:?}", out.history);
}

#[test]
fn same_seed_same_parameters() {
    let session = generate_day(&small_day(), 1).unwrap().sessions.remove(0);
    let cfg = ModelConfig::for_features(FeatureSet::Mass);
    let tc = TrainConfig { feature_set: FeatureSet::Mass, ..tiny_train(1) };
    let run = || {
        let m = build_model(&cfg, FeatureSet::Mass, 3).unwrap();
        train(m, std::slice::from_ref(&session), &tc).unwrap().model
    };
    let (a, b) = (run(), run());
    assert_eq!(a.net.state(), b.net.state());
    assert_eq!(a.norm_stats, b.norm_stats);
}

#[test]
fn inference_output_matches_session_length() {
    let (session, out) = overfit_run();
    let seq = out.model.config.seq_len;
    let short = CartSession::new(SessionId::new("4-1-24_9"), session.samples[..500].to_vec());
    assert_eq!(classify(&out.model, &short).unwrap().labels.len(), 500);
    assert_eq!(window_spans(2 * seq, seq, seq), vec![(0, seq), (seq, seq)]);
    let exact = CartSession::new(SessionId::new("4-1-24_9"), session.samples[..2 * seq].to_vec());
    let tiled = classify(&out.model, &exact).unwrap();
    assert_eq!(tiled.labels.len(), 2 * seq);
    let overlapped = classify_with(&out.model, &exact, Stitching::Overlap { stride: seq / 2 }).unwrap();
    assert_eq!(overlapped.labels.len(), 2 * seq);
}

#[test]
fn batch_rows_are_independent_and_outputs_are_probabilities() {
    let (session, out) = overfit_run();
    let m = &out.model;
    let (seq, ch) = (m.config.seq_len, m.config.in_channels);
    let mut rows = pickeff_core::model::session_features(session, m.feature_set, &m.speed).unwrap();
    m.norm_stats.apply(&mut rows);
    let id = session.session_id.clone();
    let spans = [(0, seq), (seq, seq), (0, seq)];
    let batch = WindowBatch::from_rows(&id, &rows, ch, seq, &spans);
    let probs = m.forward(&batch).unwrap();
    for t in 0..seq {
        assert_eq!(probs.row(t), probs.row(2 * seq + t));
    }
    for r in 0..3 * seq {
        let p = probs.row(r);
        assert!(p.iter().all(|v| *v >= 0.0) && (p.iter().sum::<f32>() - 1.0).abs() <= 1e-5);
    }
    let zeros = WindowBatch::from_rows(&id, &vec![0.0; seq * ch], ch, seq, &[(0, seq)]);
    assert_eq!(m.forward(&zeros).unwrap(), m.forward(&zeros).unwrap());
}

#[test]
fn artifact_file_reproduces_predictions() {
    let (session, out) = overfit_run();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.json");
    save_model(&path, &out.model).unwrap();
    let back = load_model(&path).unwrap();
    assert_eq!(classify(&back, session).unwrap(), classify(&out.model, session).unwrap());
}

#[test]
fn normalization_is_fitted_on_training_windows() {
    let (_, out) = overfit_run();
    let ns: &NormStats = &out.model.norm_stats;
    assert_eq!(ns.channels(), 4);
    assert!(ns.std.iter().all(|s| *s > 0.0));
}

#[test]
fn two_day_loocv_averages_folds() {
    let days = generate_season(&small_day(), 2).unwrap();
    let (grouped, undated) = group_by_date(days.into_iter().flat_map(|d| d.sessions).collect());
    assert!(undated.is_empty());
    let dates: Vec<_> = grouped.iter().map(|d| d.date).collect();
    let cfg = ModelConfig::for_features(FeatureSet::MassAccel);
    let report = loocv(&grouped, &dates, &cfg, &tiny_train(1)).unwrap();
    assert_eq!(report.folds.len(), 2);
    let mean_f1 = report.folds.iter().map(|f| f.metrics.f1).sum::<f64>() / 2.0;
    assert!((report.macro_avg.f1 - mean_f1).abs() < 1e-12);
    for f in &report.folds {
        for v in [f.metrics.precision, f.metrics.recall, f.metrics.f1] {
            assert!((0.0..=1.0).contains(&v));
        }
        assert_eq!(f.metrics, precision_recall_f1(&f.counts));
    }
}
