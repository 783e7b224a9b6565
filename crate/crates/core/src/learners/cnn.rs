//! A compact convolutional network: conv/ReLU/max-pool blocks, dense
//! layers, softmax. Trained with mini-batch Adam on cross-entropy, with
//! early stopping on validation macro AUC.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ModelBody, Preprocess, TrainedModel};
use crate::error::{Error, Result};
use crate::metrics::{argmax, macro_ovr_auc};
use crate::raster::{Image, SeededRng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ConvBlock {
    pub filters: usize,
    pub kernel: usize,
    pub pool: usize,
}

impl Default for ConvBlock {
    fn default() -> Self {
        Self::new(16)
    }
}

impl ConvBlock {
    pub fn new(filters: usize) -> Self {
        Self {
            filters,
            kernel: 3,
            pool: 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CnnConfig {
    pub input_size: usize,
    pub grayscale: bool,
    pub blocks: Vec<ConvBlock>,
    /// Width of the hidden dense layer; 0 connects the features straight to the output.
    pub fc_neurons: usize,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
}

impl Default for CnnConfig {
    fn default() -> Self {
        Self {
            input_size: 64,
            grayscale: false,
            blocks: vec![ConvBlock::new(16), ConvBlock::new(32), ConvBlock::new(64)],
            fc_neurons: 256,
            batch_size: 32,
            max_epochs: 100,
            patience: 35,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
        }
    }
}

impl CnnConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::validation(format!("convnet config: {m}")));
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1");
        }
        if self.max_epochs == 0 || self.patience == 0 || self.patience > self.max_epochs {
            return bad("need 1 <= patience <= max_epochs");
        }
        if self
            .blocks
            .iter()
            .any(|b| b.filters == 0 || b.kernel % 2 == 0 || b.pool == 0)
        {
            return bad("blocks need filters >= 1, odd kernels and pool >= 1");
        }
        if !(self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        let mut side = self.input_size;
        for b in &self.blocks {
            side /= b.pool;
        }
        if side == 0 {
            return bad("input_size too small for the pooling stack");
        }
        Ok(())
    }
}

/// Weights plus the shapes needed to interpret them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvNet {
    /// (channels, height, width)
    pub input: [usize; 3],
    pub blocks: Vec<ConvBlock>,
    pub hidden: Vec<usize>,
    pub n_out: usize,
    pub params: Vec<f64>,
}

struct ConvShape {
    c: usize,
    h: usize,
    w: usize,
    f: usize,
    k: usize,
    pool: usize,
    w_off: usize,
    b_off: usize,
}

impl ConvShape {
    fn out_hw(&self) -> (usize, usize) {
        (self.h / self.pool, self.w / self.pool)
    }
}

struct DenseShape {
    n_in: usize,
    n_out: usize,
    w_off: usize,
    b_off: usize,
}

struct Layout {
    convs: Vec<ConvShape>,
    dense: Vec<DenseShape>,
    n_params: usize,
}

fn layout(input: [usize; 3], blocks: &[ConvBlock], hidden: &[usize], n_out: usize) -> Layout {
    let [mut c, mut h, mut w] = input;
    let mut off = 0;
    let mut convs = Vec::new();
    for b in blocks {
        let w_off = off;
        off += b.filters * c * b.kernel * b.kernel;
        let b_off = off;
        off += b.filters;
        convs.push(ConvShape {
            c,
            h,
            w,
            f: b.filters,
            k: b.kernel,
            pool: b.pool,
            w_off,
            b_off,
        });
        c = b.filters;
        h /= b.pool;
        w /= b.pool;
    }
    let mut n_in = c * h * w;
    let mut dense = Vec::new();
    for &n in hidden.iter().chain(std::iter::once(&n_out)) {
        let w_off = off;
        off += n * n_in;
        let b_off = off;
        off += n;
        dense.push(DenseShape {
            n_in,
            n_out: n,
            w_off,
            b_off,
        });
        n_in = n;
    }
    Layout {
        convs,
        dense,
        n_params: off,
    }
}

/// C = op(A)·op(B) + beta·C with row-major storage; op transposes when the flag is set.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], at: bool, b: &[f64], bt: bool, c: &mut [f64], beta: f64) {
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    let (rsa, csa) = if at { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if bt { (1, k as isize) } else { (n as isize, 1) };
    // SAFETY: the strides above address exactly the m×k, k×n and m×n
    // row-major (or transposed) blocks whose lengths are asserted.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

fn im2col(x: &[f64], s: &ConvShape, col: &mut [f64]) {
    let (h, w, k) = (s.h, s.w, s.k);
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..s.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let dst = &mut col[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - pad;
                        dst[y * w + xx] = if sy < 0 || sx < 0 || sy >= h as isize || sx >= w as isize {
                            0.0
                        } else {
                            x[(ci * h + sy as usize) * w + sx as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im(col: &[f64], s: &ConvShape, dx: &mut [f64]) {
    let (h, w, k) = (s.h, s.w, s.k);
    let pad = (k / 2) as isize;
    let hw = h * w;
    for ci in 0..s.c {
        for ky in 0..k {
            for kx in 0..k {
                let row = (ci * k + ky) * k + kx;
                let src = &col[row * hw..(row + 1) * hw];
                for y in 0..h {
                    let sy = y as isize + ky as isize - pad;
                    if sy < 0 || sy >= h as isize {
                        continue;
                    }
                    for xx in 0..w {
                        let sx = xx as isize + kx as isize - pad;
                        if sx >= 0 && sx < w as isize {
                            dx[(ci * h + sy as usize) * w + sx as usize] += src[y * w + xx];
                        }
                    }
                }
            }
        }
    }
}

struct ConvCache {
    col: Vec<f64>,
    act: Vec<f64>,
    argmax: Vec<usize>,
}

struct Cache {
    convs: Vec<ConvCache>,
    /// Inputs of each dense layer.
    dense_in: Vec<Vec<f64>>,
}

pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exp: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let total: f64 = exp.iter().sum();
    exp.into_iter().map(|e| e / total).collect()
}

impl ConvNet {
    /// He-initialised weights, zero biases.
    pub fn init(input: [usize; 3], blocks: &[ConvBlock], hidden: &[usize], n_out: usize, seed: u64) -> Self {
        let lay = layout(input, blocks, hidden, n_out);
        let mut params = vec![0.0; lay.n_params];
        let mut rng = SeededRng::new(seed).derive(0x1417).rng();
        for s in &lay.convs {
            let fan_in = (s.c * s.k * s.k) as f64;
            let normal = Normal::new(0.0, (2.0 / fan_in).sqrt()).expect("positive std");
            for p in &mut params[s.w_off..s.b_off] {
                *p = normal.sample(&mut rng);
            }
        }
        for d in &lay.dense {
            let normal = Normal::new(0.0, (2.0 / d.n_in as f64).sqrt()).expect("positive std");
            for p in &mut params[d.w_off..d.b_off] {
                *p = normal.sample(&mut rng);
            }
        }
        Self {
            input,
            blocks: blocks.to_vec(),
            hidden: hidden.to_vec(),
            n_out,
            params,
        }
    }

    fn layout(&self) -> Layout {
        layout(self.input, &self.blocks, &self.hidden, self.n_out)
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn forward(&self, params: &[f64], lay: &Layout, x: &[f64]) -> (Vec<f64>, Cache) {
        let mut cur = x.to_vec();
        let mut convs = Vec::with_capacity(lay.convs.len());
        for s in &lay.convs {
            let hw = s.h * s.w;
            let ckk = s.c * s.k * s.k;
            let mut col = vec![0.0; ckk * hw];
            im2col(&cur, s, &mut col);
            let mut act = vec![0.0; s.f * hw];
            for (f, row) in act.chunks_mut(hw).enumerate() {
                row.fill(params[s.b_off + f]);
            }
            gemm(
                s.f,
                ckk,
                hw,
                &params[s.w_off..s.b_off],
                false,
                &col,
                false,
                &mut act,
                1.0,
            );
            act.iter_mut().for_each(|v| *v = v.max(0.0));
            let (oh, ow) = s.out_hw();
            let (pooled, argmax) = if s.pool == 1 {
                (act.clone(), (0..act.len()).collect())
            } else {
                let mut pooled = vec![0.0; s.f * oh * ow];
                let mut arg = vec![0; s.f * oh * ow];
                for f in 0..s.f {
                    for y in 0..oh {
                        for xx in 0..ow {
                            let mut best = f64::NEG_INFINITY;
                            let mut bi = 0;
                            for dy in 0..s.pool {
                                for dx in 0..s.pool {
                                    let i = f * hw + (y * s.pool + dy) * s.w + xx * s.pool + dx;
                                    if act[i] > best {
                                        best = act[i];
                                        bi = i;
                                    }
                                }
                            }
                            let o = (f * oh + y) * ow + xx;
                            pooled[o] = best;
                            arg[o] = bi;
                        }
                    }
                }
                (pooled, arg)
            };
            convs.push(ConvCache { col, act, argmax });
            cur = pooled;
        }
        let mut dense_in = Vec::with_capacity(lay.dense.len());
        let last = lay.dense.len() - 1;
        for (l, d) in lay.dense.iter().enumerate() {
            let mut out = params[d.b_off..d.b_off + d.n_out].to_vec();
            gemm(
                d.n_out,
                d.n_in,
                1,
                &params[d.w_off..d.b_off],
                false,
                &cur,
                false,
                &mut out,
                1.0,
            );
            if l != last {
                out.iter_mut().for_each(|v| *v = v.max(0.0));
            }
            dense_in.push(std::mem::replace(&mut cur, out));
        }
        (cur, Cache { convs, dense_in })
    }

    /// Accumulates parameter gradients of one sample given dL/dlogits.
    fn backward(&self, params: &[f64], lay: &Layout, cache: &Cache, dlogits: Vec<f64>, grad: &mut [f64]) {
        let mut delta = dlogits;
        for (l, d) in lay.dense.iter().enumerate().rev() {
            let input = &cache.dense_in[l];
            for (o, &g) in delta.iter().enumerate() {
                grad[d.b_off + o] += g;
                let row = &mut grad[d.w_off + o * d.n_in..d.w_off + (o + 1) * d.n_in];
                row.iter_mut().zip(input).for_each(|(gw, &x)| *gw += g * x);
            }
            let mut dx = vec![0.0; d.n_in];
            gemm(
                1,
                d.n_out,
                d.n_in,
                &delta,
                false,
                &params[d.w_off..d.b_off],
                false,
                &mut dx,
                0.0,
            );
            if l > 0 {
                // input of layer l is the ReLU output of layer l-1
                dx.iter_mut().zip(input).for_each(|(g, &a)| {
                    if a <= 0.0 {
                        *g = 0.0
                    }
                });
            }
            delta = dx;
        }
        for (l, s) in lay.convs.iter().enumerate().rev() {
            let c = &cache.convs[l];
            let hw = s.h * s.w;
            let ckk = s.c * s.k * s.k;
            let mut dact = vec![0.0; s.f * hw];
            for (o, &g) in delta.iter().enumerate() {
                dact[c.argmax[o]] += g;
            }
            dact.iter_mut().zip(&c.act).for_each(|(g, &a)| {
                if a <= 0.0 {
                    *g = 0.0
                }
            });
            for f in 0..s.f {
                grad[s.b_off + f] += dact[f * hw..(f + 1) * hw].iter().sum::<f64>();
            }
            gemm(
                s.f,
                hw,
                ckk,
                &dact,
                false,
                &c.col,
                true,
                &mut grad[s.w_off..s.b_off],
                1.0,
            );
            if l > 0 {
                let mut dcol = vec![0.0; ckk * hw];
                gemm(
                    ckk,
                    s.f,
                    hw,
                    &params[s.w_off..s.b_off],
                    true,
                    &dact,
                    false,
                    &mut dcol,
                    0.0,
                );
                let mut dx = vec![0.0; s.c * hw];
                col2im(&dcol, s, &mut dx);
                delta = dx;
            }
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        let want = self.input.iter().product::<usize>();
        if x.len() != want {
            return Err(Error::invalid(format!(
                "convnet expects {:?} (CHW) = {want} values, got {}",
                self.input,
                x.len()
            )));
        }
        Ok(())
    }

    pub fn forward_scores(&self, x_chw: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x_chw)?;
        let (logits, _) = self.forward(&self.params, &self.layout(), x_chw);
        Ok(softmax(&logits))
    }

    /// Scores an image already at the network's input size.
    pub fn predict_scores(&self, img: &Image) -> Result<Vec<f64>> {
        let [c, h, w] = self.input;
        if img.channels() != c || img.height() != h || img.width() != w {
            return Err(Error::invalid(format!(
                "convnet expects {h}x{w}x{c}, got {}x{}x{}",
                img.height(),
                img.width(),
                img.channels()
            )));
        }
        self.forward_scores(&img.to_chw())
    }

    /// Cross-entropy of one sample.
    pub fn loss(&self, x_chw: &[f64], label: usize) -> Result<f64> {
        let p = self.forward_scores(x_chw)?;
        Ok(-p[label].max(f64::MIN_POSITIVE).ln())
    }

    /// Summed loss and summed gradient over a batch. Samples are processed
    /// in fixed chunks whose partial gradients are added in chunk order, so
    /// the result does not depend on the thread count.
    fn batch_gradient(&self, lay: &Layout, xs: &[&[f64]], ys: &[usize]) -> (f64, Vec<f64>) {
        const CHUNK: usize = 8;
        let parts: Vec<(f64, Vec<f64>)> = xs
            .par_chunks(CHUNK)
            .zip(ys.par_chunks(CHUNK))
            .map(|(cx, cy)| {
                let mut grad = vec![0.0; self.params.len()];
                let mut loss = 0.0;
                for (x, &y) in cx.iter().zip(cy) {
                    let (logits, cache) = self.forward(&self.params, lay, x);
                    let mut p = softmax(&logits);
                    loss -= p[y].max(f64::MIN_POSITIVE).ln();
                    p[y] -= 1.0;
                    self.backward(&self.params, lay, &cache, p, &mut grad);
                }
                (loss, grad)
            })
            .collect();
        let mut iter = parts.into_iter();
        let (mut loss, mut grad) = iter.next().expect("non-empty batch");
        for (l, g) in iter {
            loss += l;
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        (loss, grad)
    }

    /// Analytic gradient of one sample's loss.
    pub fn gradient(&self, x_chw: &[f64], label: usize) -> Result<Vec<f64>> {
        self.check_input(x_chw)?;
        Ok(self.batch_gradient(&self.layout(), &[x_chw], &[label]).1)
    }
}

/// Largest relative error between analytic and central-difference
/// gradients over every parameter: |a−n| / max(|a|+|n|, 1e-8).
pub fn gradient_check(net: &ConvNet, x_chw: &[f64], label: usize, h: f64) -> Result<f64> {
    let analytic = net.gradient(x_chw, label)?;
    let mut probe = net.clone();
    let mut worst: f64 = 0.0;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = probe.params[i];
        probe.params[i] = orig + h;
        let up = probe.loss(x_chw, label)?;
        probe.params[i] = orig - h;
        let down = probe.loss(x_chw, label)?;
        probe.params[i] = orig;
        let numeric = (up - down) / (2.0 * h);
        let rel = (a - numeric).abs() / (a.abs() + numeric.abs()).max(1e-8);
        worst = worst.max(rel);
    }
    Ok(worst)
}

pub(crate) struct Adam {
    lr: f64,
    b1: f64,
    b2: f64,
    eps: f64,
    t: i32,
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    pub(crate) fn new(n: usize, cfg: &CnnConfig) -> Self {
        Self {
            lr: cfg.learning_rate,
            b1: cfg.beta1,
            b2: cfg.beta2,
            eps: cfg.epsilon,
            t: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub(crate) fn step(&mut self, params: &mut [f64], grad: &[f64]) {
        self.t += 1;
        let c1 = 1.0 - self.b1.powi(self.t);
        let c2 = 1.0 - self.b2.powi(self.t);
        for i in 0..params.len() {
            let g = grad[i];
            self.m[i] = self.b1 * self.m[i] + (1.0 - self.b1) * g;
            self.v[i] = self.b2 * self.v[i] + (1.0 - self.b2) * g * g;
            params[i] -= self.lr * (self.m[i] / c1) / ((self.v[i] / c2).sqrt() + self.eps);
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auc: f64,
    pub val_accuracy: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
}

impl TrainingLog {
    pub fn stopped_epoch(&self) -> usize {
        self.epochs.last().map_or(0, |e| e.epoch)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_auc,val_accuracy\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{:.6},{:.6},{:.4}",
                e.epoch, e.train_loss, e.val_auc, e.val_accuracy
            );
        }
        out
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::metrics::write_text(path.as_ref(), &self.to_csv())
    }
}

fn prepare(images: &[&Image], pre: &Preprocess) -> Result<Vec<Vec<f64>>> {
    images.par_iter().map(|img| Ok(pre.apply(img)?.to_chw())).collect()
}

/// Trains on `train`, selects the epoch with the best validation AUC
/// (accuracy breaks ties) and stops after `patience` epochs without improvement.
pub fn cnn_fit(
    train: (&[&Image], &[usize]),
    val: (&[&Image], &[usize]),
    classes: Vec<String>,
    cfg: &CnnConfig,
) -> Result<(TrainedModel, TrainingLog)> {
    cfg.validate()?;
    let (tx, ty) = train;
    let (vx, vy) = val;
    let k = classes.len();
    if tx.is_empty() || tx.len() != ty.len() {
        return Err(Error::invalid(
            "training set must be non-empty with one label per image",
        ));
    }
    if vx.is_empty() || vx.len() != vy.len() {
        return Err(Error::invalid(
            "validation set must be non-empty with one label per image",
        ));
    }
    if let Some(&bad) = ty.iter().chain(vy).find(|&&y| y >= k) {
        return Err(Error::invalid(format!("label index {bad} outside {k} classes")));
    }
    let pre = Preprocess {
        size: cfg.input_size,
        grayscale: cfg.grayscale,
    };
    let train_x = prepare(tx, &pre)?;
    let val_x = prepare(vx, &pre)?;
    let hidden: Vec<usize> = if cfg.fc_neurons > 0 {
        vec![cfg.fc_neurons]
    } else {
        vec![]
    };
    let mut net = ConvNet::init([3, cfg.input_size, cfg.input_size], &cfg.blocks, &hidden, k, cfg.seed);
    let lay = net.layout();
    let mut adam = Adam::new(net.params.len(), cfg);
    let mut log = TrainingLog::default();
    let mut best: Option<(f64, f64, Vec<f64>)> = None;
    let master = SeededRng::new(cfg.seed).derive(0xe90c);
    for epoch in 1..=cfg.max_epochs {
        let mut order: Vec<usize> = (0..train_x.len()).collect();
        order.shuffle(&mut master.derive(epoch as u64).rng());
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let xs: Vec<&[f64]> = batch.iter().map(|&i| train_x[i].as_slice()).collect();
            let ys: Vec<usize> = batch.iter().map(|&i| ty[i]).collect();
            let (loss, mut grad) = net.batch_gradient(&lay, &xs, &ys);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::TrainingFailure { epoch, loss });
            }
            total += loss;
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            adam.step(&mut net.params, &grad);
        }
        let scores: Vec<Vec<f64>> = val_x
            .par_iter()
            .map(|x| softmax(&net.forward(&net.params, &lay, x).0))
            .collect();
        let auc = macro_ovr_auc(&scores, vy)?;
        let correct = scores.iter().zip(vy).filter(|(s, &y)| argmax(s) == y).count();
        let acc = correct as f64 / vy.len() as f64 * 100.0;
        log.epochs.push(EpochLog {
            epoch,
            train_loss: total / train_x.len() as f64,
            val_auc: auc,
            val_accuracy: acc,
        });
        log::info!(
            "epoch {epoch}: loss {:.4} val auc {auc:.4} val acc {acc:.2}%",
            total / train_x.len() as f64
        );
        let improved = match &best {
            None => true,
            Some((ba, bacc, _)) => auc > *ba || (auc == *ba && acc > *bacc),
        };
        if improved {
            best = Some((auc, acc, net.params.clone()));
            log.best_epoch = epoch;
        }
        if epoch - log.best_epoch >= cfg.patience {
            break;
        }
    }
    if let Some((_, _, params)) = best {
        net.params = params;
    }
    let model = TrainedModel::new(classes, pre, ModelBody::ConvNet(net));
    Ok((model, log))
}
