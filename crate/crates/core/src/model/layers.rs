use rand::Rng;
use rand_distr::{Distribution, StandardNormal, Uniform};

use super::scalar::{gemm, Real, View, ViewMut};
use super::tensor::{Param, Seq};

fn uniform<T: Real, R: Rng>(rng: &mut R, limit: f64, n: usize) -> Vec<T> {
    let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
    (0..n).map(|_| T::of(dist.sample(rng))).collect()
}

/// Length-preserving 1-D convolution with an odd kernel.
#[derive(Debug, Clone)]
pub struct Conv1d<T> {
    pub in_ch: usize,
    pub out_ch: usize,
    pub kernel: usize,
    /// `[kernel * in_ch, out_ch]`, row `k * in_ch + c`.
    pub weight: Param<T>,
    pub bias: Param<T>,
    cache: Option<ConvCache<T>>,
}

#[derive(Debug, Clone)]
struct ConvCache<T> {
    padded: Vec<T>,
    n: usize,
    len: usize,
}

impl<T: Real> Conv1d<T> {
    /// He-uniform weights, zero bias.
    pub fn he<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let fan_in = (kernel * in_ch) as f64;
        let w = uniform(rng, (6.0 / fan_in).sqrt(), kernel * in_ch * out_ch);
        Self::from_weights(in_ch, out_ch, kernel, w)
    }

    /// Glorot-uniform weights, zero bias.
    pub fn glorot<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        let fans = (kernel * (in_ch + out_ch)) as f64;
        let w = uniform(rng, (6.0 / fans).sqrt(), kernel * in_ch * out_ch);
        Self::from_weights(in_ch, out_ch, kernel, w)
    }

    fn from_weights(in_ch: usize, out_ch: usize, kernel: usize, w: Vec<T>) -> Self {
        assert!(kernel % 2 == 1, "kernel must be odd");
        Conv1d {
            in_ch,
            out_ch,
            kernel,
            weight: Param::new(w, vec![kernel * in_ch, out_ch]),
            bias: Param::filled(T::zero(), vec![out_ch]),
            cache: None,
        }
    }

    fn pad(x: &[T], n: usize, len: usize, ch: usize, kernel: usize) -> Vec<T> {
        let half = kernel / 2;
        let plen = len + kernel - 1;
        let mut out = vec![T::zero(); n * plen * ch];
        for b in 0..n {
            let dst = (b * plen + half) * ch;
            out[dst..dst + len * ch].copy_from_slice(&x[b * len * ch..(b + 1) * len * ch]);
        }
        out
    }

    pub fn forward(&mut self, x: &Seq<T>, train: bool) -> Seq<T> {
        assert_eq!(x.ch, self.in_ch, "conv input channels");
        let (n, len, k) = (x.n, x.len, self.kernel);
        let padded = Self::pad(&x.data, n, len, self.in_ch, k);
        let plen = len + k - 1;
        let mut y = Seq::zeros(n, len, self.out_ch);
        for row in y.data.chunks_exact_mut(self.out_ch) {
            row.copy_from_slice(&self.bias.value);
        }
        for b in 0..n {
            // Row t of the strided view is the receptive field of output t.
            gemm(
                len,
                k * self.in_ch,
                self.out_ch,
                T::one(),
                View::rows(&padded, b * plen * self.in_ch, self.in_ch),
                View::rows(&self.weight.value, 0, self.out_ch),
                T::one(),
                ViewMut::rows(&mut y.data, b * len * self.out_ch, self.out_ch),
            );
        }
        self.cache = train.then_some(ConvCache { padded, n, len });
        y
    }

    /// Accumulates parameter gradients; returns the input gradient when `need_dx`.
    pub fn backward(&mut self, dy: &Seq<T>, need_dx: bool) -> Option<Seq<T>> {
        let cache = self.cache.take().expect("conv backward without a training forward pass");
        let (n, len, k, ci, co) = (cache.n, cache.len, self.kernel, self.in_ch, self.out_ch);
        let plen = len + k - 1;
        for b in 0..n {
            gemm(
                k * ci,
                len,
                co,
                T::one(),
                View::rows_t(&cache.padded, b * plen * ci, ci),
                View::rows(&dy.data, b * len * co, co),
                T::one(),
                ViewMut::rows(&mut self.weight.grad, 0, co),
            );
        }
        for row in dy.data.chunks_exact(co) {
            for (g, v) in self.bias.grad.iter_mut().zip(row) {
                *g += *v;
            }
        }
        if !need_dx {
            return None;
        }
        // Correlating the padded output gradient with the kernel flipped in time
        // and transposed in channels gives the input gradient.
        let mut flipped = vec![T::zero(); k * co * ci];
        for kk in 0..k {
            for c in 0..ci {
                for o in 0..co {
                    flipped[((k - 1 - kk) * co + o) * ci + c] = self.weight.value[(kk * ci + c) * co + o];
                }
            }
        }
        let dpad = Self::pad(&dy.data, n, len, co, k);
        let mut dx = Seq::zeros(n, len, ci);
        for b in 0..n {
            gemm(
                len,
                k * co,
                ci,
                T::one(),
                View::rows(&dpad, b * plen * co, co),
                View::rows(&flipped, 0, ci),
                T::zero(),
                ViewMut::rows(&mut dx.data, b * len * ci, ci),
            );
        }
        Some(dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.weight, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.weight, &self.bias]
    }
}

/// Per-channel batch normalization over batch and time.
#[derive(Debug, Clone)]
pub struct BatchNorm<T> {
    pub gamma: Param<T>,
    pub beta: Param<T>,
    pub running_mean: Vec<T>,
    pub running_var: Vec<T>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BnCache<T>>,
}

#[derive(Debug, Clone)]
struct BnCache<T> {
    xhat: Vec<T>,
    inv_std: Vec<T>,
}

impl<T: Real> BatchNorm<T> {
    pub fn new(ch: usize) -> Self {
        BatchNorm {
            gamma: Param::filled(T::one(), vec![ch]),
            beta: Param::filled(T::zero(), vec![ch]),
            running_mean: vec![T::zero(); ch],
            running_var: vec![T::one(); ch],
            momentum: 0.1,
            eps: 1e-3,
            cache: None,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn forward(&mut self, x: &Seq<T>, train: bool) -> Seq<T> {
        let ch = self.channels();
        assert_eq!(x.ch, ch, "batch-norm channels");
        let mut y = x.clone();
        if !train {
            let scale: Vec<T> = (0..ch)
                .map(|c| self.gamma.value[c] / (self.running_var[c] + T::of(self.eps)).sqrt())
                .collect();
            for row in y.data.chunks_exact_mut(ch) {
                for c in 0..ch {
                    row[c] = (row[c] - self.running_mean[c]) * scale[c] + self.beta.value[c];
                }
            }
            self.cache = None;
            return y;
        }
        let rows = x.rows().max(1) as f64;
        let mut mean = vec![0.0f64; ch];
        let mut var = vec![0.0f64; ch];
        for row in x.data.chunks_exact(ch) {
            for c in 0..ch {
                mean[c] += row[c].as_f64();
            }
        }
        mean.iter_mut().for_each(|m| *m /= rows);
        for row in x.data.chunks_exact(ch) {
            for c in 0..ch {
                var[c] += (row[c].as_f64() - mean[c]).powi(2);
            }
        }
        var.iter_mut().for_each(|v| *v /= rows);
        let inv_std: Vec<T> = var.iter().map(|v| T::of(1.0 / (v + self.eps).sqrt())).collect();
        let mut xhat = x.data.clone();
        for (xr, yr) in xhat.chunks_exact_mut(ch).zip(y.data.chunks_exact_mut(ch)) {
            for c in 0..ch {
                xr[c] = (xr[c] - T::of(mean[c])) * inv_std[c];
                yr[c] = xr[c] * self.gamma.value[c] + self.beta.value[c];
            }
        }
        let m = self.momentum;
        let unbiased = if rows > 1.0 { rows / (rows - 1.0) } else { 1.0 };
        for c in 0..ch {
            self.running_mean[c] = T::of((1.0 - m) * self.running_mean[c].as_f64() + m * mean[c]);
            self.running_var[c] = T::of((1.0 - m) * self.running_var[c].as_f64() + m * var[c] * unbiased);
        }
        self.cache = Some(BnCache { xhat, inv_std });
        y
    }

    pub fn backward(&mut self, dy: &Seq<T>) -> Seq<T> {
        let cache = self.cache.take().expect("batch-norm backward without a training forward pass");
        let ch = self.channels();
        let rows = T::of(dy.rows() as f64);
        let mut sum_dxhat = vec![T::zero(); ch];
        let mut sum_dxhat_xhat = vec![T::zero(); ch];
        for (d, xh) in dy.data.chunks_exact(ch).zip(cache.xhat.chunks_exact(ch)) {
            for c in 0..ch {
                self.gamma.grad[c] += d[c] * xh[c];
                self.beta.grad[c] += d[c];
                let dxhat = d[c] * self.gamma.value[c];
                sum_dxhat[c] += dxhat;
                sum_dxhat_xhat[c] += dxhat * xh[c];
            }
        }
        let mut dx = dy.clone();
        for (d, xh) in dx.data.chunks_exact_mut(ch).zip(cache.xhat.chunks_exact(ch)) {
            for c in 0..ch {
                let dxhat = d[c] * self.gamma.value[c];
                d[c] = cache.inv_std[c] / rows * (rows * dxhat - sum_dxhat[c] - xh[c] * sum_dxhat_xhat[c]);
            }
        }
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.gamma, &mut self.beta]
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.gamma, &self.beta]
    }
}

/// Convolution, batch normalization and ReLU.
#[derive(Debug, Clone)]
pub struct ConvBlock<T> {
    pub conv: Conv1d<T>,
    pub bn: BatchNorm<T>,
    out: Option<Seq<T>>,
}

impl<T: Real> ConvBlock<T> {
    pub fn new<R: Rng>(in_ch: usize, out_ch: usize, kernel: usize, rng: &mut R) -> Self {
        ConvBlock { conv: Conv1d::he(in_ch, out_ch, kernel, rng), bn: BatchNorm::new(out_ch), out: None }
    }

    pub fn forward(&mut self, x: &Seq<T>, train: bool) -> Seq<T> {
        let h = self.conv.forward(x, train);
        let mut y = self.bn.forward(&h, train);
        y.data.iter_mut().for_each(|v| *v = v.max(T::zero()));
        self.out = train.then(|| y.clone());
        y
    }

    pub fn backward(&mut self, dy: &Seq<T>, need_dx: bool) -> Option<Seq<T>> {
        let out = self.out.take().expect("block backward without a training forward pass");
        let mut d = dy.clone();
        for (g, y) in d.data.iter_mut().zip(&out.data) {
            if *y <= T::zero() {
                *g = T::zero();
            }
        }
        let d = self.bn.backward(&d);
        self.conv.backward(&d, need_dx)
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.conv.params_mut();
        p.extend(self.bn.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.conv.params();
        p.extend(self.bn.params());
        p
    }
}

/// Max over non-overlapping windows of `factor` steps; returns the winning time index per output.
pub fn max_pool<T: Real>(x: &Seq<T>, factor: usize) -> (Seq<T>, Vec<u32>) {
    assert!(factor >= 1 && x.len % factor == 0, "pool factor must divide the length");
    if factor == 1 {
        let idx = (0..x.data.len()).map(|i| ((i / x.ch) % x.len) as u32).collect();
        return (x.clone(), idx);
    }
    let out_len = x.len / factor;
    let mut y = Seq::zeros(x.n, out_len, x.ch);
    let mut arg = vec![0u32; y.data.len()];
    for b in 0..x.n {
        for t in 0..out_len {
            for c in 0..x.ch {
                let mut best = t * factor;
                let mut v = x.data[(b * x.len + best) * x.ch + c];
                for s in t * factor + 1..(t + 1) * factor {
                    let u = x.data[(b * x.len + s) * x.ch + c];
                    if u > v {
                        v = u;
                        best = s;
                    }
                }
                let o = (b * out_len + t) * x.ch + c;
                y.data[o] = v;
                arg[o] = best as u32;
            }
        }
    }
    (y, arg)
}

pub fn max_pool_backward<T: Real>(dy: &Seq<T>, arg: &[u32], in_len: usize) -> Seq<T> {
    let mut dx = Seq::zeros(dy.n, in_len, dy.ch);
    for b in 0..dy.n {
        for t in 0..dy.len {
            for c in 0..dy.ch {
                let o = (b * dy.len + t) * dy.ch + c;
                dx.data[(b * in_len + arg[o] as usize) * dy.ch + c] += dy.data[o];
            }
        }
    }
    dx
}

/// Nearest-neighbour repetition of every step `factor` times.
pub fn upsample<T: Real>(x: &Seq<T>, factor: usize) -> Seq<T> {
    let len = x.len * factor;
    let mut data = Vec::with_capacity(x.n * len * x.ch);
    for r in 0..x.rows() {
        for _ in 0..factor {
            data.extend_from_slice(x.row(r));
        }
    }
    Seq::from_vec(x.n, len, x.ch, data)
}

pub fn upsample_backward<T: Real>(dy: &Seq<T>, factor: usize) -> Seq<T> {
    let mut dx = Seq::zeros(dy.n, dy.len / factor, dy.ch);
    for r in 0..dy.rows() {
        let dst = (r / factor) * dy.ch;
        for c in 0..dy.ch {
            dx.data[dst + c] += dy.data[r * dy.ch + c];
        }
    }
    dx
}

fn sigmoid<T: Real>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// Single-direction LSTM with gate order input, forget, cell, output.
#[derive(Debug, Clone)]
pub struct Lstm<T> {
    pub input: usize,
    pub hidden: usize,
    pub reverse: bool,
    /// `[input, 4 * hidden]`.
    pub w_in: Param<T>,
    /// `[hidden, 4 * hidden]`.
    pub w_rec: Param<T>,
    pub bias: Param<T>,
    cache: Option<LstmCache<T>>,
}

#[derive(Debug, Clone)]
struct LstmCache<T> {
    x: Seq<T>,
    gates: Vec<T>,
    cells: Vec<T>,
    hs: Vec<T>,
}

impl<T: Real> Lstm<T> {
    /// Glorot-uniform input weights, orthogonal recurrent weights, forget bias 1.
    pub fn new<R: Rng>(input: usize, hidden: usize, reverse: bool, rng: &mut R) -> Self {
        let g = 4 * hidden;
        let w_in = uniform(rng, (6.0 / (input + g) as f64).sqrt(), input * g);
        let w_rec = orthogonal_rows(hidden, g, rng);
        let mut bias = vec![T::zero(); g];
        bias[hidden..2 * hidden].iter_mut().for_each(|b| *b = T::one());
        Lstm {
            input,
            hidden,
            reverse,
            w_in: Param::new(w_in, vec![input, g]),
            w_rec: Param::new(w_rec, vec![hidden, g]),
            bias: Param::new(bias, vec![g]),
            cache: None,
        }
    }

    fn step_order(&self, len: usize) -> impl Iterator<Item = (usize, Option<usize>)> + '_ {
        let rev = self.reverse;
        (0..len).map(move |s| {
            let t = if rev { len - 1 - s } else { s };
            let prev = if s == 0 {
                None
            } else if rev {
                Some(t + 1)
            } else {
                Some(t - 1)
            };
            (t, prev)
        })
    }

    pub fn forward(&mut self, x: &Seq<T>, train: bool) -> Seq<T> {
        assert_eq!(x.ch, self.input, "lstm input channels");
        let (n, len, h) = (x.n, x.len, self.hidden);
        let g4 = 4 * h;
        let mut gates = vec![T::zero(); n * len * g4];
        for row in gates.chunks_exact_mut(g4) {
            row.copy_from_slice(&self.bias.value);
        }
        gemm(
            n * len,
            self.input,
            g4,
            T::one(),
            View::rows(&x.data, 0, self.input),
            View::rows(&self.w_in.value, 0, g4),
            T::one(),
            ViewMut::rows(&mut gates, 0, g4),
        );
        let mut cells = vec![T::zero(); n * len * h];
        let mut hs = vec![T::zero(); n * len * h];
        let order: Vec<_> = self.step_order(len).collect();
        for (t, prev) in order {
            if let Some(p) = prev {
                // All batch rows of step t at once: rows are `len` apart.
                gemm(
                    n,
                    h,
                    g4,
                    T::one(),
                    View::new(&hs, p * h, len * h, 1),
                    View::rows(&self.w_rec.value, 0, g4),
                    T::one(),
                    ViewMut::new(&mut gates, t * g4, len * g4, 1),
                );
            }
            for b in 0..n {
                let r = b * len + t;
                let g = &mut gates[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let i_g = sigmoid(g[j]);
                    let f_g = sigmoid(g[h + j]);
                    let c_g = g[2 * h + j].tanh();
                    let o_g = sigmoid(g[3 * h + j]);
                    g[j] = i_g;
                    g[h + j] = f_g;
                    g[2 * h + j] = c_g;
                    g[3 * h + j] = o_g;
                    let c_prev = prev.map_or(T::zero(), |p| cells[(b * len + p) * h + j]);
                    let c = f_g * c_prev + i_g * c_g;
                    cells[r * h + j] = c;
                    hs[r * h + j] = o_g * c.tanh();
                }
            }
        }
        let out = Seq::from_vec(n, len, h, hs);
        if train {
            self.cache = Some(LstmCache { x: x.clone(), gates, cells, hs: out.data.clone() });
        }
        out
    }

    /// Backpropagation through time; adds the input gradient into `dx`.
    pub fn backward(&mut self, dh_out: &Seq<T>, dx: &mut Seq<T>) {
        let cache = self.cache.take().expect("lstm backward without a training forward pass");
        let (n, len, h) = (dh_out.n, dh_out.len, self.hidden);
        let g4 = 4 * h;
        let mut dgates = vec![T::zero(); n * len * g4];
        let mut dh_rec = vec![T::zero(); n * h];
        let mut dc_next = vec![T::zero(); n * h];
        let order: Vec<_> = self.step_order(len).collect();
        for &(t, prev) in order.iter().rev() {
            for b in 0..n {
                let r = b * len + t;
                let g = &cache.gates[r * g4..(r + 1) * g4];
                let dg = &mut dgates[r * g4..(r + 1) * g4];
                for j in 0..h {
                    let (i_g, f_g, c_g, o_g) = (g[j], g[h + j], g[2 * h + j], g[3 * h + j]);
                    let c = cache.cells[r * h + j];
                    let tc = c.tanh();
                    let dh = dh_out.data[r * h + j] + dh_rec[b * h + j];
                    let dc = dh * o_g * (T::one() - tc * tc) + dc_next[b * h + j];
                    let c_prev = prev.map_or(T::zero(), |p| cache.cells[(b * len + p) * h + j]);
                    dc_next[b * h + j] = dc * f_g;
                    dg[j] = dc * c_g * i_g * (T::one() - i_g);
                    dg[h + j] = dc * c_prev * f_g * (T::one() - f_g);
                    dg[2 * h + j] = dc * i_g * (T::one() - c_g * c_g);
                    dg[3 * h + j] = dh * tc * o_g * (T::one() - o_g);
                }
            }
            if prev.is_some() {
                gemm(
                    n,
                    g4,
                    h,
                    T::one(),
                    View::new(&dgates, t * g4, len * g4, 1),
                    View::rows_t(&self.w_rec.value, 0, g4),
                    T::zero(),
                    ViewMut::rows(&mut dh_rec, 0, h),
                );
            }
        }
        // Hidden state feeding each step, zero at the first step.
        let mut h_prev = vec![T::zero(); n * len * h];
        for b in 0..n {
            for &(t, prev) in &order {
                if let Some(p) = prev {
                    let (dst, src) = ((b * len + t) * h, (b * len + p) * h);
                    h_prev[dst..dst + h].copy_from_slice(&cache.hs[src..src + h]);
                }
            }
        }
        let rows = n * len;
        gemm(
            h,
            rows,
            g4,
            T::one(),
            View::rows_t(&h_prev, 0, h),
            View::rows(&dgates, 0, g4),
            T::one(),
            ViewMut::rows(&mut self.w_rec.grad, 0, g4),
        );
        gemm(
            self.input,
            rows,
            g4,
            T::one(),
            View::rows_t(&cache.x.data, 0, self.input),
            View::rows(&dgates, 0, g4),
            T::one(),
            ViewMut::rows(&mut self.w_in.grad, 0, g4),
        );
        for row in dgates.chunks_exact(g4) {
            for (b, d) in self.bias.grad.iter_mut().zip(row) {
                *b += *d;
            }
        }
        gemm(
            rows,
            g4,
            self.input,
            T::one(),
            View::rows(&dgates, 0, g4),
            View::rows_t(&self.w_in.value, 0, g4),
            T::one(),
            ViewMut::rows(&mut dx.data, 0, self.input),
        );
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        vec![&mut self.w_in, &mut self.w_rec, &mut self.bias]
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        vec![&self.w_in, &self.w_rec, &self.bias]
    }
}

/// `rows × cols` matrix with orthonormal rows (`rows <= cols`), by Gram-Schmidt on Gaussian draws.
fn orthogonal_rows<T: Real, R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Vec<T> {
    assert!(rows <= cols);
    let mut m: Vec<Vec<f64>> = Vec::with_capacity(rows);
    while m.len() < rows {
        let mut v: Vec<f64> = (0..cols).map(|_| StandardNormal.sample(rng)).collect();
        for u in &m {
            let d: f64 = v.iter().zip(u).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= d * b);
        }
        let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            m.push(v);
        }
    }
    m.into_iter().flatten().map(T::of).collect()
}

/// Forward and backward LSTMs over the same input, outputs concatenated `[forward | backward]`.
#[derive(Debug, Clone)]
pub struct BiLstm<T> {
    pub fwd: Lstm<T>,
    pub bwd: Lstm<T>,
}

impl<T: Real> BiLstm<T> {
    pub fn new<R: Rng>(input: usize, hidden: usize, rng: &mut R) -> Self {
        BiLstm { fwd: Lstm::new(input, hidden, false, rng), bwd: Lstm::new(input, hidden, true, rng) }
    }

    pub fn forward(&mut self, x: &Seq<T>, train: bool) -> Seq<T> {
        let a = self.fwd.forward(x, train);
        let b = self.bwd.forward(x, train);
        Seq::concat(&a, &b)
    }

    pub fn backward(&mut self, dy: &Seq<T>) -> Seq<T> {
        let (da, db) = dy.split(self.fwd.hidden);
        let mut dx = Seq::zeros(dy.n, dy.len, self.fwd.input);
        self.fwd.backward(&da, &mut dx);
        self.bwd.backward(&db, &mut dx);
        dx
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param<T>> {
        let mut p = self.fwd.params_mut();
        p.extend(self.bwd.params_mut());
        p
    }

    pub fn params(&self) -> Vec<&Param<T>> {
        let mut p = self.fwd.params();
        p.extend(self.bwd.params());
        p
    }
}
