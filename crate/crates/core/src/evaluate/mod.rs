//! Classification and estimation metrics.

use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotate::LabelSequence;
use crate::efficiency::{compute_reports, EfficiencyError, EfficiencyParams, ReportSet, SessionInput};
use crate::ingest::{Activity, BreakRecord, CartSession, SessionId, TrayCountRecord};

#[derive(Debug, thiserror::Error)]
pub enum EvaluateError {
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("ground truth value {index} is not positive")]
    ZeroGroundTruth { index: usize },
    #[error("session {0} is not fully labeled")]
    Unlabeled(SessionId),
    #[error("no values to compare")]
    Empty,
    #[error(transparent)]
    Efficiency(#[from] EfficiencyError),
}

/// Per-sample counts with `Pick` as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionCounts {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn add(&mut self, other: &ConfusionCounts) {
        self.tp += other.tp;
        self.fp += other.fp;
        self.fn_ += other.fn_;
        self.tn += other.tn;
    }

    /// Counts with prediction and truth exchanged.
    pub fn swapped(&self) -> ConfusionCounts {
        ConfusionCounts { tp: self.tp, fp: self.fn_, fn_: self.fp, tn: self.tn }
    }

    pub fn accuracy(&self) -> f64 {
        if self.total() == 0 {
            0.0
        } else {
            (self.tp + self.tn) as f64 / self.total() as f64
        }
    }
}

pub fn confusion_labels(pred: &[Activity], gt: &[Activity]) -> Result<ConfusionCounts, EvaluateError> {
    if pred.len() != gt.len() {
        return Err(EvaluateError::LengthMismatch(format!("{} predictions vs {} truths", pred.len(), gt.len())));
    }
    let mut c = ConfusionCounts::default();
    for (p, g) in pred.iter().zip(gt) {
        match (p.is_pick(), g.is_pick()) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn confusion(pred: &LabelSequence, gt: &LabelSequence) -> Result<ConfusionCounts, EvaluateError> {
    confusion_labels(&pred.labels, &gt.labels)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    /// Set when any ratio was 0/0 and reported as 0.
    pub degenerate: bool,
}

pub fn precision_recall_f1(c: &ConfusionCounts) -> Metrics {
    let mut degenerate = false;
    let mut ratio = |num: f64, den: f64| {
        if den == 0.0 {
            degenerate = true;
            0.0
        } else {
            num / den
        }
    };
    let p = ratio(c.tp as f64, (c.tp + c.fp) as f64);
    let r = ratio(c.tp as f64, (c.tp + c.fn_) as f64);
    let f1 = ratio(2.0 * p * r, p + r);
    Metrics { precision: p, recall: r, f1, degenerate }
}

/// How fold metrics are combined.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Averaging {
    /// Unweighted mean of per-fold metrics.
    #[default]
    Macro,
    /// Metrics of the pooled counts.
    Micro,
}

impl FromStr for Averaging {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "macro" => Ok(Averaging::Macro),
            "micro" => Ok(Averaging::Micro),
            other => Err(format!("unknown averaging `{other}`, expected macro or micro")),
        }
    }
}

pub fn average_metrics(folds: &[ConfusionCounts], averaging: Averaging) -> Metrics {
    match averaging {
        Averaging::Micro => {
            let mut pooled = ConfusionCounts::default();
            folds.iter().for_each(|c| pooled.add(c));
            precision_recall_f1(&pooled)
        }
        Averaging::Macro => {
            if folds.is_empty() {
                return Metrics { degenerate: true, ..Default::default() };
            }
            let n = folds.len() as f64;
            let ms: Vec<Metrics> = folds.iter().map(precision_recall_f1).collect();
            Metrics {
                precision: ms.iter().map(|m| m.precision).sum::<f64>() / n,
                recall: ms.iter().map(|m| m.recall).sum::<f64>() / n,
                f1: ms.iter().map(|m| m.f1).sum::<f64>() / n,
                degenerate: ms.iter().any(|m| m.degenerate),
            }
        }
    }
}

/// Agreement between estimated and ground-truth per-cart values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyReport {
    /// `|gt - est| / gt` per cart.
    pub relative_errors: Vec<f64>,
    /// `(1 - mean relative error) * 100`.
    pub accuracy_pct: f64,
    /// Statistics of the per-cart accuracies `(1 - e) * 100`.
    pub median_pct: f64,
    pub min_pct: f64,
    pub max_pct: f64,
    pub sd_pct: f64,
}

pub fn estimation_accuracy(gt: &[f64], est: &[f64]) -> Result<AccuracyReport, EvaluateError> {
    if gt.len() != est.len() {
        return Err(EvaluateError::LengthMismatch(format!("{} truths vs {} estimates", gt.len(), est.len())));
    }
    if gt.is_empty() {
        return Err(EvaluateError::Empty);
    }
    if let Some(index) = gt.iter().position(|&g| !(g > 0.0)) {
        return Err(EvaluateError::ZeroGroundTruth { index });
    }
    let errors: Vec<f64> = gt.iter().zip(est).map(|(g, e)| (g - e).abs() / g).collect();
    let n = errors.len() as f64;
    let mut acc: Vec<f64> = errors.iter().map(|e| (1.0 - e) * 100.0).collect();
    acc.sort_by(f64::total_cmp);
    let mean = acc.iter().sum::<f64>() / n;
    let sd = if acc.len() > 1 { (acc.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt() } else { 0.0 };
    Ok(AccuracyReport {
        accuracy_pct: (1.0 - errors.iter().sum::<f64>() / n) * 100.0,
        relative_errors: errors,
        median_pct: crate::efficiency::quantile(&acc, 0.5),
        min_pct: acc[0],
        max_pct: acc[acc.len() - 1],
        sd_pct: sd,
    })
}

/// Efficiency reports computed from the sessions' own labels.
pub fn ground_truth_efficiency(
    sessions: &[CartSession],
    break_log: &[BreakRecord],
    tray_counts: &[TrayCountRecord],
    params: &EfficiencyParams,
) -> Result<ReportSet, EvaluateError> {
    let labels: Vec<LabelSequence> = sessions
        .iter()
        .map(|s| LabelSequence::from_session(s).ok_or_else(|| EvaluateError::Unlabeled(s.session_id.clone())))
        .collect::<Result<_, _>>()?;
    let inputs: Vec<SessionInput> =
        sessions.iter().zip(&labels).map(|(session, labels)| SessionInput { session, labels }).collect();
    Ok(compute_reports(&inputs, break_log, tray_counts, params)?)
}
