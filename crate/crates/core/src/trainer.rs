//! Reference classifier, AdamW, and the checkpoint file format.
//!
//! The model is either a linear softmax classifier or a one-hidden-layer
//! `tanh` network. All parameters live in one flat `f64` buffer laid out in
//! declared shape order (weights row-major by input index, then biases), which
//! is also the order of the optimizer moments and of the checkpoint payload.
//! Every reduction runs in a fixed order so training is bit-reproducible.
//!
//! Checkpoint file layout (little-endian):
//!
//! ```text
//! "CURRCKPT"  u16 version  u32 header_len  header (JSON)
//! payload: params[n] m[n] v[n] as f64
//! u32 CRC-32 of the payload
//! ```

use std::fs;
use std::ops::ControlFlow;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset_model::{ClassId, NUM_CLASSES};
use crate::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CURRCKPT";
pub const CHECKPOINT_VERSION: u16 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Architecture {
    Linear,
    OneHidden { width: usize },
}

/// Named tensor inside the flat parameter buffer.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorShape {
    pub name: String,
    pub dims: Vec<usize>,
}

impl TensorShape {
    fn new(name: &str, dims: &[usize]) -> Self {
        Self {
            name: name.to_string(),
            dims: dims.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub architecture: Architecture,
    pub input_dim: usize,
    pub n_classes: usize,
    pub values: Vec<f64>,
}

impl ModelParams {
    pub fn shapes(architecture: Architecture, d: usize, c: usize) -> Vec<TensorShape> {
        match architecture {
            Architecture::Linear => vec![TensorShape::new("w", &[d, c]), TensorShape::new("b", &[c])],
            Architecture::OneHidden { width: h } => vec![
                TensorShape::new("w1", &[d, h]),
                TensorShape::new("b1", &[h]),
                TensorShape::new("w2", &[h, c]),
                TensorShape::new("b2", &[c]),
            ],
        }
    }

    pub fn param_count(architecture: Architecture, d: usize, c: usize) -> usize {
        Self::shapes(architecture, d, c).iter().map(TensorShape::len).sum()
    }

    pub fn zeros(architecture: Architecture, input_dim: usize, n_classes: usize) -> Self {
        Self {
            architecture,
            input_dim,
            n_classes,
            values: vec![0.0; Self::param_count(architecture, input_dim, n_classes)],
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn random(architecture: Architecture, input_dim: usize, n_classes: usize, rng: &mut impl Rng) -> Self {
        let mut p = Self::zeros(architecture, input_dim, n_classes);
        let mut offset = 0;
        for shape in Self::shapes(architecture, input_dim, n_classes) {
            let len = shape.len();
            if shape.dims.len() == 2 {
                let bound = 1.0 / (shape.dims[0] as f64).sqrt();
                for v in &mut p.values[offset..offset + len] {
                    *v = rng.random_range(-bound..=bound);
                }
            }
            offset += len;
        }
        p
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        Ok(())
    }

    /// Hidden activations (if any) and logits for one input.
    fn logits(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (d, c) = (self.input_dim, self.n_classes);
        match self.architecture {
            Architecture::Linear => {
                let (w, b) = self.values.split_at(d * c);
                (Vec::new(), affine(x, w, b, c))
            }
            Architecture::OneHidden { width: h } => {
                let (w1, rest) = self.values.split_at(d * h);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(h * c);
                let hidden: Vec<f64> = affine(x, w1, b1, h).into_iter().map(f64::tanh).collect();
                let logits = affine(&hidden, w2, b2, c);
                (hidden, logits)
            }
        }
    }
}

/// `b + xᵀW` with `W` row-major `len(x) × out`.
fn affine(x: &[f64], w: &[f64], b: &[f64], out: usize) -> Vec<f64> {
    let mut y = b.to_vec();
    for (i, &xi) in x.iter().enumerate() {
        let row = &w[i * out..(i + 1) * out];
        for (yk, &wk) in y.iter_mut().zip(row) {
            *yk += xi * wk;
        }
    }
    y
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Index of the largest value; ties go to the smaller index.
pub fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate().skip(1) {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

/// Class probabilities for one input.
pub fn forward(params: &ModelParams, x: &[f64]) -> Result<Vec<f64>> {
    params.check_input(x)?;
    let (_, logits) = params.logits(x);
    Ok(softmax(&logits))
}

/// One labelled input.
#[derive(Clone, Copy, Debug)]
pub struct Example<'a> {
    pub x: &'a [f64],
    pub y: ClassId,
}

/// Mean cross-entropy over `batch` and its gradient in parameter layout.
pub fn loss_and_grad(params: &ModelParams, batch: &[Example<'_>]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Trainer("empty batch".into()));
    }
    let (d, c) = (params.input_dim, params.n_classes);
    let scale = 1.0 / batch.len() as f64;
    let mut grad = vec![0.0; params.len()];
    let mut loss = 0.0;
    for ex in batch {
        params.check_input(ex.x)?;
        if ex.y >= c {
            return Err(Error::Dimension {
                expected: c,
                got: ex.y + 1,
            });
        }
        let (hidden, logits) = params.logits(ex.x);
        let p = softmax(&logits);
        loss -= p[ex.y].ln();
        // dL/dlogits = p - onehot(y), averaged over the batch
        let mut dl = p;
        dl[ex.y] -= 1.0;
        for v in &mut dl {
            *v *= scale;
        }
        match params.architecture {
            Architecture::Linear => {
                let (gw, gb) = grad.split_at_mut(d * c);
                outer_acc(gw, ex.x, &dl);
                add_acc(gb, &dl);
            }
            Architecture::OneHidden { width: h } => {
                let w2 = &params.values[d * h + h..d * h + h + h * c];
                let (gw1, rest) = grad.split_at_mut(d * h);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(h * c);
                outer_acc(gw2, &hidden, &dl);
                add_acc(gb2, &dl);
                let dz: Vec<f64> = (0..h)
                    .map(|j| {
                        let row = &w2[j * c..(j + 1) * c];
                        let dh: f64 = row.iter().zip(&dl).map(|(w, g)| w * g).sum();
                        dh * (1.0 - hidden[j] * hidden[j])
                    })
                    .collect();
                outer_acc(gw1, ex.x, &dz);
                add_acc(gb1, &dz);
            }
        }
    }
    Ok((loss * scale, grad))
}

fn outer_acc(g: &mut [f64], a: &[f64], b: &[f64]) {
    let n = b.len();
    for (i, &ai) in a.iter().enumerate() {
        for (gk, &bk) in g[i * n..(i + 1) * n].iter_mut().zip(b) {
            *gk += ai * bk;
        }
    }
}

fn add_acc(g: &mut [f64], b: &[f64]) {
    for (gk, &bk) in g.iter_mut().zip(b) {
        *gk += bk;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamWConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub config: AdamWConfig,
}

impl OptimizerState {
    pub fn new(n: usize, config: AdamWConfig) -> Self {
        Self {
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
            config,
        }
    }

    pub fn reset(&mut self) {
        self.step = 0;
        self.m.iter_mut().for_each(|x| *x = 0.0);
        self.v.iter_mut().for_each(|x| *x = 0.0);
    }
}

/// Serialized ChaCha8 generator position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    /// Hex-encoded 32-byte key.
    pub seed: String,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().iter().map(|b| format!("{b:02x}")).collect(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        if self.seed.len() != 64 {
            return Err(Error::Format(format!("rng seed must be 64 hex chars, got {}", self.seed.len())));
        }
        let mut key = [0u8; 32];
        for (i, b) in key.iter_mut().enumerate() {
            *b = u8::from_str_radix(&self.seed[2 * i..2 * i + 2], 16)
                .map_err(|e| Error::Format(format!("bad rng seed: {e}")))?;
        }
        let mut rng = ChaCha8Rng::from_seed(key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        Ok(rng)
    }
}

/// One training stage in a checkpoint's history.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LineageStage {
    pub strategy: String,
    pub round: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ModelCheckpoint {
    pub params: ModelParams,
    pub opt: OptimizerState,
    pub rng: ChaCha8Rng,
    pub lineage: Vec<LineageStage>,
}

/// Fresh model with the default optimizer settings and the 12-class head.
pub fn init_model(architecture: Architecture, d: usize, seed: u64) -> ModelCheckpoint {
    init_model_with(architecture, d, NUM_CLASSES, AdamWConfig::default(), seed)
}

pub fn init_model_with(
    architecture: Architecture,
    d: usize,
    n_classes: usize,
    config: AdamWConfig,
    seed: u64,
) -> ModelCheckpoint {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::random(architecture, d, n_classes, &mut rng);
    let opt = OptimizerState::new(params.len(), config);
    ModelCheckpoint {
        params,
        opt,
        rng,
        lineage: Vec::new(),
    }
}

/// One decoupled-weight-decay Adam update.
///
/// The checkpoint is left untouched if the update would produce a non-finite value.
pub fn adamw_step(ckpt: &mut ModelCheckpoint, grad: &[f64], lr: f64) -> Result<()> {
    let n = ckpt.params.len();
    if grad.len() != n {
        return Err(Error::Dimension {
            expected: n,
            got: grad.len(),
        });
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::NonFinite(format!("gradient component {i} is {}", grad[i])));
    }
    let AdamWConfig {
        beta1,
        beta2,
        eps,
        weight_decay,
    } = ckpt.opt.config;
    let t = ckpt.opt.step + 1;
    let t_exp = i32::try_from(t).unwrap_or(i32::MAX);
    let bc1 = 1.0 - beta1.powi(t_exp);
    let bc2 = 1.0 - beta2.powi(t_exp);

    let mut m = Vec::with_capacity(n);
    let mut v = Vec::with_capacity(n);
    let mut theta = Vec::with_capacity(n);
    for i in 0..n {
        let g = grad[i];
        let mi = beta1 * ckpt.opt.m[i] + (1.0 - beta1) * g;
        let vi = beta2 * ckpt.opt.v[i] + (1.0 - beta2) * g * g;
        let m_hat = mi / bc1;
        let v_hat = vi / bc2;
        let p = ckpt.params.values[i];
        let next = p - lr * (m_hat / (v_hat.sqrt() + eps) + weight_decay * p);
        if !(next.is_finite() && mi.is_finite() && vi.is_finite()) {
            return Err(Error::NonFinite(format!("update of parameter {i} is not finite")));
        }
        m.push(mi);
        v.push(vi);
        theta.push(next);
    }
    ckpt.opt.step = t;
    ckpt.opt.m = m;
    ckpt.opt.v = v;
    ckpt.params.values = theta;
    Ok(())
}

/// Per-step callback payload.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    /// Steps taken so far in this call, including this one.
    pub iteration: usize,
    pub epoch: usize,
    pub loss: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainOutcome {
    pub iterations: usize,
    pub epochs_completed: usize,
    pub losses: Vec<f64>,
}

/// Number of minibatches in one epoch, counting a short final batch.
pub fn batches_per_epoch(n: usize, batch_size: usize) -> usize {
    n.div_ceil(batch_size)
}

impl ModelCheckpoint {
    pub fn reseed(&mut self, seed: u64) {
        self.rng = ChaCha8Rng::seed_from_u64(seed);
    }

    pub fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    /// Runs up to `epochs` epochs from the current generator position.
    ///
    /// Each epoch shuffles with the checkpoint's generator and walks the
    /// permutation in minibatches; the last batch may be short. `on_step` can
    /// stop training after any step.
    pub fn run_epochs(
        &mut self,
        data: &[Example<'_>],
        batch_size: usize,
        lr: f64,
        epochs: usize,
        on_step: &mut dyn FnMut(&ModelCheckpoint, StepInfo) -> ControlFlow<()>,
    ) -> Result<TrainOutcome> {
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        let mut out = TrainOutcome::default();
        if epochs == 0 {
            return Ok(out);
        }
        if data.is_empty() {
            return Err(Error::Trainer("training pool is empty".into()));
        }
        let mut order: Vec<usize> = (0..data.len()).collect();
        let mut batch = Vec::with_capacity(batch_size);
        for epoch in 0..epochs {
            order.sort_unstable();
            order.shuffle(&mut self.rng);
            let n_batches = data.len().div_ceil(batch_size);
            for (b, chunk) in order.chunks(batch_size).enumerate() {
                batch.clear();
                batch.extend(chunk.iter().map(|&i| data[i]));
                let (loss, grad) = loss_and_grad(&self.params, &batch)?;
                adamw_step(self, &grad, lr)?;
                out.iterations += 1;
                out.losses.push(loss);
                let info = StepInfo {
                    iteration: out.iterations,
                    epoch,
                    loss,
                };
                if on_step(self, info).is_break() {
                    // a stop on the last batch still completes the epoch
                    if b + 1 == n_batches {
                        out.epochs_completed += 1;
                    }
                    return Ok(out);
                }
            }
            out.epochs_completed += 1;
        }
        Ok(out)
    }

    /// Reseeds the shuffle generator with `seed`, then trains `epochs` epochs.
    pub fn train_epochs(
        &mut self,
        data: &[Example<'_>],
        batch_size: usize,
        lr: f64,
        epochs: usize,
        seed: u64,
    ) -> Result<TrainOutcome> {
        self.reseed(seed);
        self.run_epochs(data, batch_size, lr, epochs, &mut |_, _| ControlFlow::Continue(()))
    }

    pub fn predict(&self, x: &[f64]) -> Result<ClassId> {
        Ok(argmax(&forward(&self.params, x)?))
    }

    fn header(&self) -> CheckpointHeader {
        CheckpointHeader {
            architecture: self.params.architecture,
            input_dim: self.params.input_dim,
            n_classes: self.params.n_classes,
            shapes: ModelParams::shapes(self.params.architecture, self.params.input_dim, self.params.n_classes),
            param_count: self.params.len(),
            adamw: self.opt.config,
            step: self.opt.step,
            lineage: self.lineage.clone(),
            rng_state: RngState::capture(&self.rng),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&self.header()).expect("checkpoint header serializes");
        let n = self.params.len();
        let mut out = Vec::with_capacity(8 + 2 + 4 + header.len() + 24 * n + 4);
        out.extend_from_slice(CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        let payload_start = out.len();
        for buf in [&self.params.values, &self.opt.m, &self.opt.v] {
            for x in buf.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        let crc = crc32fast::hash(&out[payload_start..]);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 14 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(Error::Format("missing CURRCKPT magic".into()));
        }
        let version = u16::from_le_bytes([bytes[8], bytes[9]]);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!("unsupported checkpoint version {version}")));
        }
        let header_len = u32::from_le_bytes(bytes[10..14].try_into().expect("4 bytes")) as usize;
        let header_end = 14usize
            .checked_add(header_len)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| Error::Integrity("header length exceeds file size".into()))?;
        let header: CheckpointHeader = serde_json::from_slice(&bytes[14..header_end])
            .map_err(|e| Error::Format(format!("bad checkpoint header: {e}")))?;
        let expected_n = ModelParams::param_count(header.architecture, header.input_dim, header.n_classes);
        if header.param_count != expected_n {
            return Err(Error::Format(format!(
                "header declares {} parameters but shapes need {expected_n}",
                header.param_count
            )));
        }
        let payload_len = 3 * 8 * expected_n;
        if bytes.len() != header_end + payload_len + 4 {
            return Err(Error::Integrity(format!(
                "payload length mismatch: file has {} bytes after header, expected {}",
                bytes.len() - header_end,
                payload_len + 4
            )));
        }
        let payload = &bytes[header_end..header_end + payload_len];
        let stored = u32::from_le_bytes(bytes[header_end + payload_len..].try_into().expect("4 bytes"));
        let actual = crc32fast::hash(payload);
        if stored != actual {
            return Err(Error::Integrity(format!(
                "checksum mismatch: stored {stored:08x}, computed {actual:08x}"
            )));
        }
        let mut floats = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |n: usize| -> Vec<f64> { floats.by_ref().take(n).collect() };
        let values = take(expected_n);
        let m = take(expected_n);
        let v = take(expected_n);
        if values.iter().chain(&m).any(|x| !x.is_finite()) || v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
            return Err(Error::Integrity("payload holds non-finite or negative second-moment values".into()));
        }
        Ok(Self {
            params: ModelParams {
                architecture: header.architecture,
                input_dim: header.input_dim,
                n_classes: header.n_classes,
                values,
            },
            opt: OptimizerState {
                step: header.step,
                m,
                v,
                config: header.adamw,
            },
            rng: header.rng_state.restore()?,
            lineage: header.lineage,
        })
    }

    /// Short content id: CRC-32 of the serialized checkpoint, in hex.
    pub fn content_id(&self) -> String {
        format!("{:08x}", crc32fast::hash(&self.to_bytes()))
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    architecture: Architecture,
    input_dim: usize,
    n_classes: usize,
    shapes: Vec<TensorShape>,
    param_count: usize,
    adamw: AdamWConfig,
    step: u64,
    lineage: Vec<LineageStage>,
    rng_state: RngState,
}

pub fn save_checkpoint(ckpt: &ModelCheckpoint, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, ckpt.to_bytes())?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<ModelCheckpoint> {
    ModelCheckpoint::from_bytes(&fs::read(path)?)
}

/// Anything that maps a feature vector to class probabilities.
pub trait Classifier {
    fn input_dim(&self) -> usize;
    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>>;
}

impl Classifier for ModelCheckpoint {
    fn input_dim(&self) -> usize {
        self.params.input_dim
    }

    fn probabilities(&self, x: &[f64]) -> Result<Vec<f64>> {
        forward(&self.params, x)
    }
}

/// The surface curriculum execution depends on.
pub trait Trainer: Classifier {
    /// Restarts the shuffle generator.
    fn reseed(&mut self, seed: u64);
    /// Zeroes the optimizer moments and step count.
    fn reset_optimizer(&mut self);
    fn run_epochs(
        &mut self,
        data: &[Example<'_>],
        batch_size: usize,
        lr: f64,
        epochs: usize,
        on_step: &mut dyn FnMut(&dyn Classifier, StepInfo) -> ControlFlow<()>,
    ) -> Result<TrainOutcome>;
    fn push_lineage(&mut self, stage: LineageStage);
    fn save(&self) -> Vec<u8>;
    fn load(&mut self, bytes: &[u8]) -> Result<()>;
}

impl Trainer for ModelCheckpoint {
    fn reseed(&mut self, seed: u64) {
        ModelCheckpoint::reseed(self, seed);
    }

    fn reset_optimizer(&mut self) {
        self.opt.reset();
    }

    fn run_epochs(
        &mut self,
        data: &[Example<'_>],
        batch_size: usize,
        lr: f64,
        epochs: usize,
        on_step: &mut dyn FnMut(&dyn Classifier, StepInfo) -> ControlFlow<()>,
    ) -> Result<TrainOutcome> {
        ModelCheckpoint::run_epochs(self, data, batch_size, lr, epochs, &mut |c, s| on_step(c, s))
    }

    fn push_lineage(&mut self, stage: LineageStage) {
        self.lineage.push(stage);
    }

    fn save(&self) -> Vec<u8> {
        self.to_bytes()
    }

    fn load(&mut self, bytes: &[u8]) -> Result<()> {
        *self = ModelCheckpoint::from_bytes(bytes)?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ex(x: &[f64], y: ClassId) -> Example<'_> {
        Example { x, y }
    }

    #[test]
    fn init_is_deterministic_and_bounded() {
        let a = init_model(Architecture::Linear, 4, 3);
        let b = init_model(Architecture::Linear, 4, 3);
        assert_eq!(a.to_bytes(), b.to_bytes());
        assert_eq!(a.params.len(), 4 * 12 + 12);
        assert!(a.params.values[..48].iter().all(|w| w.abs() <= 0.5));
        assert!(a.params.values[48..].iter().all(|&w| w == 0.0));
        assert!(a.lineage.is_empty() && a.opt.step == 0);
    }

    #[test]
    fn one_hidden_param_count() {
        let c = init_model(Architecture::OneHidden { width: 8 }, 16, 0);
        assert_eq!(c.params.len(), 244);
    }

    #[test]
    fn zero_model_is_uniform() {
        let p = ModelParams::zeros(Architecture::Linear, 3, 12);
        let probs = forward(&p, &[1.0, -2.0, 0.5]).unwrap();
        assert!(probs.iter().all(|&q| (q - 1.0 / 12.0).abs() < 1e-15));
        let (loss, _) = loss_and_grad(&p, &[ex(&[1.0, -2.0, 0.5], 4)]).unwrap();
        assert!((loss - 12f64.ln()).abs() < 1e-12);
        assert!((loss - 2.4849).abs() < 1e-4);
    }

    #[test]
    fn softmax_shift_invariance() {
        let a = softmax(&[0.1, 2.0, -1.0]);
        let b = softmax(&[100.1, 102.0, 99.0]);
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn dimension_errors() {
        let p = ModelParams::zeros(Architecture::Linear, 3, 12);
        assert!(matches!(forward(&p, &[1.0]), Err(Error::Dimension { expected: 3, got: 1 })));
        assert!(loss_and_grad(&p, &[]).is_err());
        let mut c = init_model(Architecture::Linear, 3, 0);
        assert!(matches!(adamw_step(&mut c, &[0.0; 3], 0.1), Err(Error::Dimension { .. })));
    }

    #[test]
    fn linear_gradient_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = ModelParams::random(Architecture::Linear, 3, 12, &mut rng);
        let x = [0.3, -1.2, 2.0];
        let (_, g) = loss_and_grad(&p, &[ex(&x, 7)]).unwrap();
        let mut dl = forward(&p, &x).unwrap();
        dl[7] -= 1.0;
        for i in 0..3 {
            for k in 0..12 {
                assert!((g[i * 12 + k] - x[i] * dl[k]).abs() < 1e-15);
            }
        }
        for k in 0..12 {
            assert!((g[36 + k] - dl[k]).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_gradient_only_decays() {
        let mut c = init_model(Architecture::Linear, 2, 1);
        let before = c.params.values.clone();
        let zero = vec![0.0; c.params.len()];
        adamw_step(&mut c, &zero, 0.1).unwrap();
        for (a, b) in before.iter().zip(&c.params.values) {
            assert_eq!(*b, a * (1.0 - 0.1 * 0.01));
        }
    }

    #[test]
    fn non_finite_update_leaves_state() {
        let mut c = init_model(Architecture::Linear, 2, 1);
        let snapshot = c.to_bytes();
        let mut g = vec![0.0; c.params.len()];
        g[0] = f64::NAN;
        assert!(matches!(adamw_step(&mut c, &g, 0.1), Err(Error::NonFinite(_))));
        assert_eq!(c.to_bytes(), snapshot);
        assert!(matches!(adamw_step(&mut c, &vec![1.0; 36], f64::INFINITY), Err(Error::NonFinite(_))));
        assert_eq!(c.to_bytes(), snapshot);
    }

    #[test]
    fn zero_epochs_is_noop() {
        let mut c = init_model(Architecture::Linear, 1, 1);
        let before = c.clone();
        let x = [1.0];
        let out = c.run_epochs(&[ex(&x, 0)], 4, 0.1, 0, &mut |_, _| ControlFlow::Continue(())).unwrap();
        assert_eq!(out.iterations, 0);
        assert_eq!(c, before);
    }

    #[test]
    fn stop_counts_only_finished_epochs() {
        let xs = [[1.0], [2.0], [3.0]];
        let data: Vec<Example> = xs.iter().map(|x| ex(x, 0)).collect();
        // batch 2 over 3 examples: two steps per epoch
        for (stop_at, epochs) in [(1, 0), (2, 1), (3, 1), (4, 2)] {
            let mut c = init_model(Architecture::Linear, 1, 1);
            let out = c
                .run_epochs(&data, 2, 0.1, 5, &mut |_, s| {
                    if s.iteration == stop_at {
                        ControlFlow::Break(())
                    } else {
                        ControlFlow::Continue(())
                    }
                })
                .unwrap();
            assert_eq!((out.iterations, out.epochs_completed), (stop_at, epochs));
        }
    }

    #[test]
    fn checkpoint_round_trip_and_corruption() {
        let mut c = init_model(Architecture::OneHidden { width: 3 }, 4, 9);
        c.lineage.push(LineageStage {
            strategy: "progressive".into(),
            round: 1,
        });
        let xs = [[0.1, 0.2, 0.3, 0.4], [1.0, -1.0, 0.0, 2.0]];
        let data = [ex(&xs[0], 1), ex(&xs[1], 5)];
        c.train_epochs(&data, 1, 0.01, 2, 4).unwrap();
        let bytes = c.to_bytes();
        let back = ModelCheckpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_bytes(), bytes);

        let mut bad = bytes.clone();
        let n = bad.len();
        bad[n - 20] ^= 0x40;
        assert!(matches!(ModelCheckpoint::from_bytes(&bad), Err(Error::Integrity(_))));
        assert!(matches!(ModelCheckpoint::from_bytes(&bytes[..n - 1]), Err(Error::Integrity(_))));
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(matches!(ModelCheckpoint::from_bytes(&magic), Err(Error::Format(_))));
        let mut version = bytes;
        version[8] = 9;
        assert!(matches!(ModelCheckpoint::from_bytes(&version), Err(Error::Format(_))));
    }
}
