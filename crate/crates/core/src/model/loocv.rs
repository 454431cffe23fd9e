use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::{ModelConfig, TrainConfig};
use super::infer::classify;
use super::train::{train, EpochRecord};
use super::{build_model, ModelError, TrainedModel};
use crate::annotate::LabelSequence;
use crate::evaluate::{average_metrics, confusion_labels, precision_recall_f1, Averaging, ConfusionCounts, Metrics};
use crate::ingest::{CartSession, HarvestDate};

#[derive(Debug, Clone)]
pub struct DaySessions {
    pub date: HarvestDate,
    pub sessions: Vec<CartSession>,
}

/// Groups sessions by the date in their id, in date order. Sessions without a parseable date are returned separately.
pub fn group_by_date(sessions: Vec<CartSession>) -> (Vec<DaySessions>, Vec<CartSession>) {
    let mut days: BTreeMap<HarvestDate, Vec<CartSession>> = BTreeMap::new();
    let mut undated = Vec::new();
    for s in sessions {
        match s.date() {
            Some(d) => days.entry(d).or_default().push(s),
            None => undated.push(s),
        }
    }
    (days.into_iter().map(|(date, sessions)| DaySessions { date, sessions }).collect(), undated)
}

#[derive(Debug, Clone)]
pub struct FoldResult {
    pub held_out: HarvestDate,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub predictions: Vec<LabelSequence>,
    pub model: TrainedModel,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FoldSummary {
    pub held_out: HarvestDate,
    pub counts: ConfusionCounts,
    pub metrics: Metrics,
    pub best_epoch: usize,
}

#[derive(Debug, Clone)]
pub struct LoocvReport {
    pub folds: Vec<FoldResult>,
    /// Unweighted mean over folds.
    pub macro_avg: Metrics,
    /// Metrics of counts pooled over folds.
    pub micro_avg: Metrics,
}

impl LoocvReport {
    pub fn average(&self, averaging: Averaging) -> Metrics {
        match averaging {
            Averaging::Macro => self.macro_avg,
            Averaging::Micro => self.micro_avg,
        }
    }

    pub fn summaries(&self) -> Vec<FoldSummary> {
        self.folds
            .iter()
            .map(|f| FoldSummary { held_out: f.held_out, counts: f.counts, metrics: f.metrics, best_epoch: f.best_epoch })
            .collect()
    }
}

/// Leave-one-date-out evaluation: for each held-out date, train a freshly seeded
/// model on every other date and score it on the held-out sessions.
pub fn loocv(
    days: &[DaySessions],
    held_out: &[HarvestDate],
    cfg: &ModelConfig,
    tc: &TrainConfig,
) -> Result<LoocvReport, ModelError> {
    if days.len() < 2 {
        return Err(ModelError::TooFewDates(days.len()));
    }
    for d in held_out {
        if !days.iter().any(|day| day.date == *d) {
            return Err(ModelError::UnknownDate(*d));
        }
    }
    tc.validate(cfg)?;
    let mut folds = Vec::with_capacity(held_out.len());
    for (k, &date) in held_out.iter().enumerate() {
        log::info!("fold {}/{}: holding out {date}", k + 1, held_out.len());
        let train_sessions: Vec<CartSession> =
            days.iter().filter(|d| d.date != date).flat_map(|d| d.sessions.iter().cloned()).collect();
        let test = &days.iter().find(|d| d.date == date).expect("checked").sessions;
        let model = build_model(cfg, tc.feature_set, tc.seed)?;
        let outcome = train(model, &train_sessions, tc)?;
        let mut counts = ConfusionCounts::default();
        let mut predictions = Vec::with_capacity(test.len());
        for s in test {
            let pred = classify(&outcome.model, s)?;
            if let Some(gt) = s.labels() {
                counts.add(&confusion_labels(&pred.labels.labels, &gt).expect("aligned by construction"));
            }
            predictions.push(pred.labels);
        }
        let metrics = precision_recall_f1(&counts);
        log::info!("fold {date}: precision {:.4} recall {:.4} f1 {:.4}", metrics.precision, metrics.recall, metrics.f1);
        folds.push(FoldResult {
            held_out: date,
            counts,
            metrics,
            history: outcome.history,
            best_epoch: outcome.best_epoch,
            predictions,
            model: outcome.model,
        });
    }
    let counts: Vec<ConfusionCounts> = folds.iter().map(|f| f.counts).collect();
    Ok(LoocvReport {
        macro_avg: average_metrics(&counts, Averaging::Macro),
        micro_avg: average_metrics(&counts, Averaging::Micro),
        folds,
    })
}
