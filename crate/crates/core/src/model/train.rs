use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::features::{session_features, window_spans, NormStats};
use super::network::{cross_entropy, softmax_rows, Network};
use super::tensor::Seq;
use super::{ModelError, TrainedModel};
use crate::evaluate::{precision_recall_f1, ConfusionCounts};
use crate::ingest::{Activity, CartSession};

pub const HISTORY_HEADER: &str = "epoch,train_loss,val_loss,val_f1";

/// Class index used by the network; `Pick` is 1.
pub(crate) fn class_of(a: Activity) -> usize {
    usize::from(a.is_pick())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_f1: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest validation loss.
    pub model: TrainedModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub train_windows: usize,
    pub val_windows: usize,
}

/// Normalized features and labels of every window.
pub(crate) struct Dataset {
    channels: usize,
    seq_len: usize,
    rows: Vec<Vec<f64>>,
    labels: Vec<Vec<usize>>,
    /// `(session, start, valid)`.
    windows: Vec<(usize, usize, usize)>,
}

impl Dataset {
    fn batch(&self, idx: &[usize]) -> (Seq<f32>, Vec<Option<usize>>) {
        let (l, ch) = (self.seq_len, self.channels);
        let mut x = Seq::zeros(idx.len(), l, ch);
        let mut targets = vec![None; idx.len() * l];
        for (b, &w) in idx.iter().enumerate() {
            let (s, start, valid) = self.windows[w];
            let src = &self.rows[s][start * ch..(start + valid) * ch];
            for (d, v) in x.data[b * l * ch..].iter_mut().zip(src) {
                *d = *v as f32;
            }
            for t in 0..valid {
                targets[b * l + t] = Some(self.labels[s][start + t]);
            }
        }
        (x, targets)
    }

    fn majority(&self, w: usize) -> usize {
        let (s, start, valid) = self.windows[w];
        let picks = self.labels[s][start..start + valid].iter().filter(|&&c| c == 1).count();
        usize::from(2 * picks > valid)
    }
}

struct Adam {
    m: Vec<Vec<f32>>,
    v: Vec<Vec<f32>>,
    step: i32,
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
}

impl Adam {
    fn new(net: &Network<f32>, tc: &TrainConfig) -> Self {
        let shapes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
        Adam {
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
            lr: tc.learning_rate,
            beta1: tc.beta1,
            beta2: tc.beta2,
            eps: tc.adam_epsilon,
        }
    }

    fn update(&mut self, net: &mut Network<f32>) {
        self.step += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let lr_t = (self.lr * (1.0 - self.beta2.powi(self.step)).sqrt() / (1.0 - self.beta1.powi(self.step))) as f32;
        let eps = self.eps as f32;
        for ((p, m), v) in net.params_mut().into_iter().zip(&mut self.m).zip(&mut self.v) {
            for i in 0..p.value.len() {
                let g = p.grad[i];
                m[i] = b1 * m[i] + (1.0 - b1) * g;
                v[i] = b2 * v[i] + (1.0 - b2) * g * g;
                p.value[i] -= lr_t * m[i] / (v[i].sqrt() + eps);
            }
        }
    }
}

/// Loss and confusion counts in inference mode.
fn evaluate_windows(
    net: &mut Network<f32>,
    ds: &Dataset,
    idx: &[usize],
    chunk: usize,
    weights: &[f64],
) -> Result<(f64, ConfusionCounts), ModelError> {
    let mut loss_sum = 0.0;
    let mut weight_sum = 0.0;
    let mut counts = ConfusionCounts::default();
    for part in idx.chunks(chunk.max(1)) {
        let (x, targets) = ds.batch(part);
        let logits = net.logits(&x, false)?;
        let w: f64 = targets.iter().flatten().map(|&c| weights[c]).sum();
        let (loss, _) = cross_entropy(&logits, &targets, weights);
        loss_sum += loss * w;
        weight_sum += w;
        let mut probs = logits;
        softmax_rows(&mut probs);
        for (r, t) in targets.iter().enumerate() {
            let Some(truth) = *t else { continue };
            let row = probs.row(r);
            let pred = usize::from(row[1] > row[0]);
            match (pred, truth) {
                (1, 1) => counts.tp += 1,
                (1, _) => counts.fp += 1,
                (_, 1) => counts.fn_ += 1,
                _ => counts.tn += 1,
            }
        }
    }
    Ok((if weight_sum > 0.0 { loss_sum / weight_sum } else { 0.0 }, counts))
}

/// Fits `model` to labeled sessions.
///
/// Windows are split 80:20 (per `val_fraction`) within each majority class by a
/// seeded shuffle. Normalization statistics come from training windows only.
/// Each batch is processed in slices of `micro_batch` windows whose gradients
/// are accumulated before one optimizer step.
pub fn train(model: TrainedModel, sessions: &[CartSession], tc: &TrainConfig) -> Result<TrainOutcome, ModelError> {
    tc.validate(&model.config)?;
    let labeled: Vec<&CartSession> = sessions.iter().filter(|s| s.is_labeled()).collect();
    if labeled.is_empty() {
        return Err(ModelError::NoLabeledData);
    }
    let (ch, seq_len) = (model.config.in_channels, model.config.seq_len);
    let mut rows = Vec::with_capacity(labeled.len());
    let mut labels = Vec::with_capacity(labeled.len());
    let mut windows = Vec::new();
    for (i, s) in labeled.iter().enumerate() {
        rows.push(session_features(s, tc.feature_set, &model.speed)?);
        labels.push(s.samples.iter().map(|p| class_of(p.activity.expect("labeled"))).collect::<Vec<_>>());
        windows.extend(window_spans(s.len(), seq_len, seq_len).into_iter().map(|(a, v)| (i, a, v)));
    }
    if windows.len() < 2 {
        return Err(ModelError::InsufficientWindows { needed: 2, got: windows.len() });
    }
    let mut ds = Dataset { channels: ch, seq_len, rows, labels, windows };

    let mut rng = ChaCha8Rng::seed_from_u64(tc.seed);
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for class in 0..2 {
        let mut group: Vec<usize> = (0..ds.windows.len()).filter(|&w| ds.majority(w) == class).collect();
        group.shuffle(&mut rng);
        let n_val = (group.len() as f64 * tc.val_fraction).round() as usize;
        val_idx.extend_from_slice(&group[..n_val]);
        train_idx.extend_from_slice(&group[n_val..]);
    }
    if val_idx.is_empty() {
        val_idx.push(train_idx.pop().expect("at least two windows"));
    }
    if train_idx.is_empty() {
        train_idx.push(val_idx.pop().expect("at least two windows"));
    }
    train_idx.sort_unstable();
    val_idx.sort_unstable();

    let stats = {
        let blocks: Vec<&[f64]> = train_idx
            .iter()
            .map(|&w| {
                let (s, start, valid) = ds.windows[w];
                &ds.rows[s][start * ch..(start + valid) * ch]
            })
            .collect();
        NormStats::fit(blocks, ch)
    };
    for r in &mut ds.rows {
        stats.apply(r);
    }

    let weights = if tc.class_weights {
        let mut counts = [0usize; 2];
        for &w in &train_idx {
            let (s, start, valid) = ds.windows[w];
            for &c in &ds.labels[s][start..start + valid] {
                counts[c] += 1;
            }
        }
        let total = (counts[0] + counts[1]) as f64;
        counts.map(|c| if c == 0 { 1.0 } else { total / (2.0 * c as f64) }).to_vec()
    } else {
        vec![1.0, 1.0]
    };

    let mut net = model.net.clone();
    let mut adam = Adam::new(&net, tc);
    let mut history = Vec::with_capacity(tc.epochs);
    let mut best: Option<(f64, usize, Vec<Vec<f32>>)> = None;
    let micro = tc.micro_batch.max(1);
    let mut order = train_idx.clone();
    for epoch in 1..=tc.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut weight_sum = 0.0;
        for batch in order.chunks(tc.batch_size) {
            net.zero_grad();
            let parts: Vec<(Seq<f32>, Vec<Option<usize>>)> = batch.chunks(micro).map(|p| ds.batch(p)).collect();
            let batch_weight: f64 = parts.iter().flat_map(|(_, t)| t.iter().flatten()).map(|&c| weights[c]).sum();
            if batch_weight <= 0.0 {
                continue;
            }
            for (x, targets) in &parts {
                let w: f64 = targets.iter().flatten().map(|&c| weights[c]).sum();
                if w <= 0.0 {
                    continue;
                }
                let logits = net.logits(x, true)?;
                let (loss, mut grad) = cross_entropy(&logits, targets, &weights);
                let scale = (w / batch_weight) as f32;
                grad.data.iter_mut().for_each(|g| *g *= scale);
                net.backward(&grad);
                loss_sum += loss * w;
                weight_sum += w;
            }
            adam.update(&mut net);
        }
        let train_loss = if weight_sum > 0.0 { loss_sum / weight_sum } else { 0.0 };
        let (val_loss, counts) = evaluate_windows(&mut net, &ds, &val_idx, micro, &weights)?;
        let val_f1 = precision_recall_f1(&counts).f1;
        log::info!("epoch {epoch}: train_loss {train_loss:.5} val_loss {val_loss:.5} val_f1 {val_f1:.4}");
        history.push(EpochRecord { epoch, train_loss, val_loss, val_f1 });
        if best.as_ref().is_none_or(|b| val_loss < b.0) {
            best = Some((val_loss, epoch, net.state()));
        }
        let best_epoch = best.as_ref().map_or(epoch, |b| b.1);
        if tc.patience.is_some_and(|p| epoch - best_epoch >= p) {
            log::info!("early stop after epoch {epoch}; best epoch {best_epoch}");
            break;
        }
    }
    let (_, best_epoch, state) = best.expect("at least one epoch");
    net.load_state(state)?;
    Ok(TrainOutcome {
        model: TrainedModel { net, norm_stats: stats, feature_set: tc.feature_set, ..model },
        history,
        best_epoch,
        train_windows: train_idx.len(),
        val_windows: val_idx.len(),
    })
}

pub fn write_history_csv<W: Write>(mut w: W, history: &[EpochRecord]) -> std::io::Result<()> {
    use crate::ingest::format_float as f;
    writeln!(w, "{HISTORY_HEADER}")?;
    for r in history {
        writeln!(w, "{},{},{},{}", r.epoch, f(r.train_loss), f(r.val_loss), f(r.val_f1))?;
    }
    Ok(())
}
