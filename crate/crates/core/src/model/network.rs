use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::ModelConfig;
use super::layers::{max_pool, max_pool_backward, upsample, upsample_backward, BiLstm, ConvBlock, Conv1d, Lstm};
use super::scalar::Real;
use super::tensor::{Param, Seq};
use super::ModelError;

/// U-shaped convolutional encoder-decoder followed by recurrent layers and a per-step classifier.
#[derive(Debug, Clone)]
pub struct Network<T> {
    pub config: ModelConfig,
    encoder: Vec<ConvBlock<T>>,
    decoder: Vec<ConvBlock<T>>,
    bilstms: Vec<BiLstm<T>>,
    lstm: Lstm<T>,
    head_hidden: Conv1d<T>,
    head_out: Conv1d<T>,
    trace: Option<Trace<T>>,
}

/// Values from the last training forward pass that backward needs.
#[derive(Debug, Clone)]
struct Trace<T> {
    pool_args: Vec<Vec<u32>>,
    pre_pool_len: Vec<usize>,
    hidden_act: Seq<T>,
}

impl<T: Real> Network<T> {
    /// Weights drawn deterministically from `seed`. Checks structure only.
    pub fn new(config: &ModelConfig, seed: u64) -> Result<Self, ModelError> {
        config.validate_structure()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let cfg = config;
        let k = cfg.kernel;
        let enc_ch = &cfg.encoder_channels;
        let stages = enc_ch.len();

        let mut encoder = Vec::with_capacity(stages);
        let mut prev = cfg.in_channels;
        for &c in enc_ch {
            encoder.push(ConvBlock::new(prev, c, k, &mut rng));
            prev = c;
        }
        let mut decoder = Vec::with_capacity(stages - 1);
        for j in 0..stages - 1 {
            let input = if j == 0 { enc_ch[stages - 1] } else { enc_ch[stages - 1 - j] * 2 };
            decoder.push(ConvBlock::new(input, enc_ch[stages - 2 - j], k, &mut rng));
        }
        let mut width = enc_ch[0] * 2;
        let mut bilstms = Vec::with_capacity(cfg.bilstm_units.len());
        for &u in &cfg.bilstm_units {
            bilstms.push(BiLstm::new(width, u, &mut rng));
            width = 2 * u;
        }
        let lstm = Lstm::new(width, cfg.lstm_units, false, &mut rng);
        let head_hidden = Conv1d::glorot(cfg.lstm_units, cfg.head_hidden_channels, 1, &mut rng);
        let head_out = Conv1d::glorot(cfg.head_hidden_channels, cfg.classes, 1, &mut rng);
        Ok(Network {
            config: cfg.clone(),
            encoder,
            decoder,
            bilstms,
            lstm,
            head_hidden,
            head_out,
            trace: None,
        })
    }

    /// Pre-softmax class scores `[n, len, classes]`.
    pub fn logits(&mut self, x: &Seq<T>, train: bool) -> Result<Seq<T>, ModelError> {
        if x.ch != self.config.in_channels {
            return Err(ModelError::ShapeMismatch(format!(
                "input has {} channels, model expects {}",
                x.ch, self.config.in_channels
            )));
        }
        if x.len == 0 || x.len % super::config::TOTAL_POOL != 0 {
            return Err(ModelError::ShapeMismatch(format!(
                "sequence length {} is not a positive multiple of {}",
                x.len,
                super::config::TOTAL_POOL
            )));
        }
        let stages = self.encoder.len();
        let mut skips: Vec<Seq<T>> = Vec::with_capacity(stages);
        let mut pool_args = Vec::with_capacity(stages);
        let mut pre_pool_len = Vec::with_capacity(stages);
        let mut h = x.clone();
        for (i, block) in self.encoder.iter_mut().enumerate() {
            let a = block.forward(&h, train);
            pre_pool_len.push(a.len);
            let (p, arg) = max_pool(&a, self.config.pool_factors[i]);
            if train {
                pool_args.push(arg);
            }
            skips.push(p.clone());
            h = p;
        }
        for (j, block) in self.decoder.iter_mut().enumerate() {
            let joined = if j == 0 { h } else { Seq::concat(&h, &skips[stages - 1 - j]) };
            h = block.forward(&upsample(&joined, self.config.up_factors[j]), train);
        }
        h = Seq::concat(&h, &skips[0]);
        for bl in &mut self.bilstms {
            h = bl.forward(&h, train);
        }
        h = self.lstm.forward(&h, train);
        let mut act = self.head_hidden.forward(&h, train);
        act.data.iter_mut().for_each(|v| *v = v.tanh());
        let logits = self.head_out.forward(&act, train);
        self.trace = train.then_some(Trace { pool_args, pre_pool_len, hidden_act: act });
        Ok(logits)
    }

    /// Per-step class probabilities in inference mode.
    pub fn predict(&mut self, x: &Seq<T>) -> Result<Seq<T>, ModelError> {
        let mut l = self.logits(x, false)?;
        softmax_rows(&mut l);
        Ok(l)
    }

    /// Backpropagates a logit gradient from the last training forward pass into the parameter gradients.
    pub fn backward(&mut self, dlogits: &Seq<T>) {
        let trace = self.trace.take().expect("backward without a training forward pass");
        let mut d = self.head_out.backward(dlogits, true).expect("dx");
        for (g, a) in d.data.iter_mut().zip(&trace.hidden_act.data) {
            *g *= T::one() - *a * *a;
        }
        let d = self.head_hidden.backward(&d, true).expect("dx");
        let mut dh = Seq::zeros(d.n, d.len, self.lstm.input);
        self.lstm.backward(&d, &mut dh);
        for bl in self.bilstms.iter_mut().rev() {
            dh = bl.backward(&dh);
        }
        let stages = self.encoder.len();
        let enc_ch = self.config.encoder_channels.clone();
        let (mut dh, d_skip0) = dh.split(enc_ch[0]);
        // Gradients arriving at each pooled encoder output through skip connections.
        let mut skip_grads: Vec<Option<Seq<T>>> = vec![None; stages];
        skip_grads[0] = Some(d_skip0);
        for j in (0..self.decoder.len()).rev() {
            let d = self.decoder[j].backward(&dh, true).expect("dx");
            let d = upsample_backward(&d, self.config.up_factors[j]);
            if j == 0 {
                dh = d;
            } else {
                let (a, b) = d.split(enc_ch[stages - 1 - j]);
                skip_grads[stages - 1 - j] = Some(b);
                dh = a;
            }
        }
        for i in (0..stages).rev() {
            if let Some(s) = skip_grads[i].take() {
                dh.add_assign(&s);
            }
            let d = max_pool_backward(&dh, &trace.pool_args[i], trace.pre_pool_len[i]);
            match self.encoder[i].backward(&d, i > 0) {
                Some(dx) => dh = dx,
                None => break,
            }
        }
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut p = Vec::new();
        for b in self.encoder.iter().chain(&self.decoder) {
            p.extend(b.params());
        }
        for bl in &self.bilstms {
            p.extend(bl.params());
        }
        p.extend(self.lstm.params());
        p.extend(self.head_hidden.params());
        p.extend(self.head_out.params());
        p
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = Vec::new();
        for b in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            p.extend(b.params_mut());
        }
        for bl in &mut self.bilstms {
            p.extend(bl.params_mut());
        }
        p.extend(self.lstm.params_mut());
        p.extend(self.head_hidden.params_mut());
        p.extend(self.head_out.params_mut());
        p
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(|p| p.zero_grad());
    }

    /// Learned tensors followed by batch-norm running statistics, in a fixed order.
    pub fn state(&self) -> Vec<Vec<T>> {
        let mut s: Vec<Vec<T>> = self.params().into_iter().map(|p| p.value.clone()).collect();
        for b in self.encoder.iter().chain(&self.decoder) {
            s.push(b.bn.running_mean.clone());
            s.push(b.bn.running_var.clone());
        }
        s
    }

    /// Shapes matching [`Network::state`].
    pub fn state_shapes(&self) -> Vec<Vec<usize>> {
        let mut s: Vec<Vec<usize>> = self.params().into_iter().map(|p| p.shape.clone()).collect();
        for b in self.encoder.iter().chain(&self.decoder) {
            s.push(vec![b.bn.channels()]);
            s.push(vec![b.bn.channels()]);
        }
        s
    }

    pub fn load_state(&mut self, state: Vec<Vec<T>>) -> Result<(), ModelError> {
        let shapes = self.state_shapes();
        if state.len() != shapes.len() {
            return Err(ModelError::Artifact(format!("expected {} tensors, got {}", shapes.len(), state.len())));
        }
        for (i, (t, shape)) in state.iter().zip(&shapes).enumerate() {
            if t.len() != shape.iter().product::<usize>() {
                return Err(ModelError::Artifact(format!("tensor {i} has {} values, shape {shape:?}", t.len())));
            }
        }
        let mut it = state.into_iter();
        for p in self.params_mut() {
            p.value = it.next().expect("checked length");
        }
        for b in self.encoder.iter_mut().chain(self.decoder.iter_mut()) {
            b.bn.running_mean = it.next().expect("checked length");
            b.bn.running_var = it.next().expect("checked length");
        }
        Ok(())
    }
}

/// In-place softmax over the channel axis of every row.
pub fn softmax_rows<T: Real>(x: &mut Seq<T>) {
    for row in x.data.chunks_exact_mut(x.ch) {
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        row.iter_mut().for_each(|v| *v = *v / s);
    }
}

/// Weighted mean cross-entropy over unmasked steps, and its logit gradient.
///
/// `targets[r]` is the class index of row `r`, `None` for masked rows.
pub fn cross_entropy<T: Real>(logits: &Seq<T>, targets: &[Option<usize>], weights: &[f64]) -> (f64, Seq<T>) {
    assert_eq!(targets.len(), logits.rows(), "one target per row");
    let mut probs = logits.clone();
    softmax_rows(&mut probs);
    let total: f64 = targets.iter().flatten().map(|&c| weights[c]).sum();
    let mut grad = Seq::zeros(logits.n, logits.len, logits.ch);
    if total <= 0.0 {
        return (0.0, grad);
    }
    let mut loss = 0.0;
    for (r, target) in targets.iter().enumerate() {
        let Some(c) = *target else { continue };
        let w = weights[c] / total;
        let p = probs.row(r);
        loss -= w * p[c].as_f64().max(1e-12).ln();
        let g = &mut grad.data[r * logits.ch..(r + 1) * logits.ch];
        for (k, gk) in g.iter_mut().enumerate() {
            let y = if k == c { 1.0 } else { 0.0 };
            *gk = T::of(w * (p[k].as_f64() - y));
        }
    }
    (loss, grad)
}

/// One sampled parameter in a finite-difference check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckEntry {
    pub tensor: usize,
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

impl GradCheckEntry {
    pub fn relative_error(&self) -> f64 {
        let scale = self.analytic.abs().max(self.numeric.abs());
        if scale == 0.0 {
            0.0
        } else {
            (self.analytic - self.numeric).abs() / scale
        }
    }
}

/// Compares backpropagated gradients of the training-mode cross-entropy with
/// central differences on `count` randomly chosen parameters, in `f64`.
pub fn gradient_check(cfg: &ModelConfig, batch: usize, count: usize, seed: u64) -> Result<Vec<GradCheckEntry>, ModelError> {
    use rand::Rng;
    let mut net = Network::<f64>::new(cfg, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9);
    let (len, ch) = (cfg.seq_len, cfg.in_channels);
    let x = Seq::from_vec(batch, len, ch, (0..batch * len * ch).map(|_| rng.random_range(-1.0..1.0)).collect());
    let targets: Vec<Option<usize>> = (0..batch * len).map(|_| Some(rng.random_range(0..cfg.classes))).collect();
    let weights = vec![1.0; cfg.classes];

    let logits = net.logits(&x, true)?;
    let (_, grad) = cross_entropy(&logits, &targets, &weights);
    net.zero_grad();
    net.backward(&grad);

    let sizes: Vec<usize> = net.params().iter().map(|p| p.len()).collect();
    let total: usize = sizes.iter().sum();
    let mut picks = Vec::with_capacity(count);
    while picks.len() < count.min(total) {
        let mut flat = rng.random_range(0..total);
        let mut tensor = 0;
        while flat >= sizes[tensor] {
            flat -= sizes[tensor];
            tensor += 1;
        }
        if !picks.contains(&(tensor, flat)) {
            picks.push((tensor, flat));
        }
    }
    let analytic: Vec<f64> = picks.iter().map(|&(t, i)| net.params()[t].grad[i]).collect();
    let h = 1e-5;
    let mut out = Vec::with_capacity(picks.len());
    for (&(t, i), a) in picks.iter().zip(analytic) {
        let loss_at = |delta: f64| -> Result<f64, ModelError> {
            let mut probe = net.clone();
            probe.params_mut()[t].value[i] += delta;
            let l = probe.logits(&x, true)?;
            Ok(cross_entropy(&l, &targets, &weights).0)
        };
        let numeric = (loss_at(h)? - loss_at(-h)?) / (2.0 * h);
        out.push(GradCheckEntry { tensor: t, index: i, analytic: a, numeric });
    }
    Ok(out)
}
