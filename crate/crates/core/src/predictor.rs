//! Classifiers scored inside the value function.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::data::NodeData;
use crate::error::{Error, Result};
use crate::graph::Pdag;
use crate::regress::{fit_softmax, softmax_probs};

/// Raw scores for a batch of encoded inputs laid out row-major.
pub trait Scorer: Send + Sync {
    fn dim(&self) -> usize;
    fn score_batch(&self, inputs: &[f64]) -> Result<Vec<f64>>;
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputMode {
    Probability,
    /// `1` if the score is at least the threshold, else `0`.
    Thresholded(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PredictorKind {
    Logistic,
    Mlp,
    External,
    Custom,
}

#[derive(Clone)]
pub struct Predictor {
    scorer: Arc<dyn Scorer>,
    kind: PredictorKind,
    output: OutputMode,
}

impl std::fmt::Debug for Predictor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Predictor")
            .field("kind", &self.kind)
            .field("output", &self.output)
            .field("dim", &self.scorer.dim())
            .finish()
    }
}

impl Predictor {
    pub fn new(scorer: Arc<dyn Scorer>, kind: PredictorKind, output: OutputMode) -> Self {
        Predictor {
            scorer,
            kind,
            output,
        }
    }

    pub fn kind(&self) -> PredictorKind {
        self.kind
    }

    pub fn output(&self) -> OutputMode {
        self.output
    }

    pub fn with_output(mut self, output: OutputMode) -> Self {
        self.output = output;
        self
    }

    pub fn dim(&self) -> usize {
        self.scorer.dim()
    }

    pub fn scorer(&self) -> &Arc<dyn Scorer> {
        &self.scorer
    }

    pub fn predict_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        if dim == 0 || !inputs.len().is_multiple_of(dim) {
            return Err(Error::Dimension {
                expected: dim,
                got: inputs.len(),
            });
        }
        let mut scores = self.scorer.score_batch(inputs)?;
        if let OutputMode::Thresholded(t) = self.output {
            for s in &mut scores {
                *s = if *s >= t { 1.0 } else { 0.0 };
            }
        }
        Ok(scores)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::Dimension {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok(self.predict_batch(x)?[0])
    }
}

/// Encoded predictor inputs for every row, row-major, and the row width.
pub fn prediction_inputs(graph: &Pdag, data: &NodeData) -> (Vec<f64>, usize) {
    let nodes = graph.prediction_inputs();
    let width: usize = nodes.iter().map(|&v| data.width(v)).sum();
    let mut out = Vec::with_capacity(width * data.rows());
    for r in 0..data.rows() {
        for &v in &nodes {
            data.encode_value(v, data.value(v, r), &mut out);
        }
    }
    (out, width)
}

/// Per-column centering and scaling fitted on training inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit(inputs: &[f64], dim: usize) -> Self {
        let n = (inputs.len() / dim) as f64;
        let mut mean = vec![0.0; dim];
        for row in inputs.chunks(dim) {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= n;
        }
        let mut var = vec![0.0; dim];
        for row in inputs.chunks(dim) {
            for j in 0..dim {
                var[j] += (row[j] - mean[j]).powi(2);
            }
        }
        let scale = var
            .iter()
            .map(|v| {
                let sd = (v / n).sqrt();
                if sd > 1e-12 {
                    sd
                } else {
                    1.0
                }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, x: &[f64], out: &mut Vec<f64>) {
        out.clear();
        out.extend(
            x.iter()
                .zip(&self.mean)
                .zip(&self.scale)
                .map(|((v, m), s)| (v - m) / s),
        );
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `log(1 + exp(z)) - y z`, stable for large `|z|`.
fn logistic_loss(z: f64, y: f64) -> f64 {
    let softplus = if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    };
    softplus - y * z
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub standardizer: Standardizer,
    /// Intercept first.
    pub coef: Vec<f64>,
}

impl Scorer for LogisticModel {
    fn dim(&self) -> usize {
        self.standardizer.mean.len()
    }

    fn score_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut z = Vec::with_capacity(dim);
        Ok(inputs
            .chunks(dim)
            .map(|x| {
                self.standardizer.apply(x, &mut z);
                let s = self.coef[0]
                    + z.iter()
                        .zip(&self.coef[1..])
                        .map(|(a, b)| a * b)
                        .sum::<f64>();
                sigmoid(s)
            })
            .collect())
    }
}

/// One hidden `tanh` layer and a sigmoid output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub standardizer: Standardizer,
    pub hidden: usize,
    /// `hidden x dim`, row-major.
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: f64,
}

impl Mlp {
    fn new(standardizer: Standardizer, hidden: usize, rng: &mut ChaCha8Rng) -> Self {
        let dim = standardizer.mean.len();
        let s1 = (1.0 / dim as f64).sqrt();
        let s2 = (1.0 / hidden as f64).sqrt();
        Mlp {
            standardizer,
            hidden,
            w1: (0..hidden * dim)
                .map(|_| s1 * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            b1: vec![0.0; hidden],
            w2: (0..hidden)
                .map(|_| s2 * rng.sample::<f64, _>(StandardNormal))
                .collect(),
            b2: 0.0,
        }
    }

    fn dim_in(&self) -> usize {
        self.standardizer.mean.len()
    }

    fn logit(&self, z: &[f64], h: &mut [f64]) -> f64 {
        let d = z.len();
        let mut out = self.b2;
        for j in 0..self.hidden {
            let w = &self.w1[j * d..(j + 1) * d];
            let a = self.b1[j] + w.iter().zip(z).map(|(p, q)| p * q).sum::<f64>();
            h[j] = a.tanh();
            out += self.w2[j] * h[j];
        }
        out
    }

    pub fn params(&self) -> Vec<f64> {
        let mut p = self.w1.clone();
        p.extend_from_slice(&self.b1);
        p.extend_from_slice(&self.w2);
        p.push(self.b2);
        p
    }

    pub fn set_params(&mut self, p: &[f64]) {
        let (n1, h) = (self.w1.len(), self.hidden);
        self.w1.copy_from_slice(&p[..n1]);
        self.b1.copy_from_slice(&p[n1..n1 + h]);
        self.w2.copy_from_slice(&p[n1 + h..n1 + 2 * h]);
        self.b2 = p[n1 + 2 * h];
    }

    /// Mean penalized loss and its gradient over standardized inputs `z`.
    pub fn loss_and_gradient(&self, z: &[f64], y: &[f64], l2: f64) -> (f64, Vec<f64>) {
        let d = self.dim_in();
        let hsz = self.hidden;
        let n = y.len() as f64;
        let mut grad = vec![0.0; self.w1.len() + 2 * hsz + 1];
        let (g_w1, rest) = grad.split_at_mut(self.w1.len());
        let (g_b1, rest) = rest.split_at_mut(hsz);
        let (g_w2, g_b2) = rest.split_at_mut(hsz);
        let mut h = vec![0.0; hsz];
        let mut loss = 0.0;
        for (x, &t) in z.chunks(d).zip(y) {
            let logit = self.logit(x, &mut h);
            loss += logistic_loss(logit, t);
            let delta = (sigmoid(logit) - t) / n;
            g_b2[0] += delta;
            for j in 0..hsz {
                g_w2[j] += delta * h[j];
                let back = delta * self.w2[j] * (1.0 - h[j] * h[j]);
                g_b1[j] += back;
                let row = &mut g_w1[j * d..(j + 1) * d];
                for (g, xv) in row.iter_mut().zip(x) {
                    *g += back * xv;
                }
            }
        }
        loss /= n;
        let mut penalty = 0.0;
        for (g, w) in g_w1.iter_mut().zip(&self.w1) {
            *g += l2 * w;
            penalty += w * w;
        }
        for (g, w) in g_w2.iter_mut().zip(&self.w2) {
            *g += l2 * w;
            penalty += w * w;
        }
        (loss + 0.5 * l2 * penalty, grad)
    }
}

impl Scorer for Mlp {
    fn dim(&self) -> usize {
        self.dim_in()
    }

    fn score_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let dim = self.dim();
        let mut z = Vec::with_capacity(dim);
        let mut h = vec![0.0; self.hidden];
        Ok(inputs
            .chunks(dim)
            .map(|x| {
                self.standardizer.apply(x, &mut z);
                sigmoid(self.logit(&z, &mut h))
            })
            .collect())
    }
}

/// `alpha * f + beta * g` over the raw scores of two predictors.
pub struct Blend {
    pub first: Predictor,
    pub second: Predictor,
    pub alpha: f64,
    pub beta: f64,
}

impl Scorer for Blend {
    fn dim(&self) -> usize {
        self.first.dim()
    }

    fn score_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        let f = self.first.predict_batch(inputs)?;
        let g = self.second.predict_batch(inputs)?;
        Ok(f.iter()
            .zip(&g)
            .map(|(a, b)| self.alpha * a + self.beta * b)
            .collect())
    }
}

/// A scorer backed by a closure over one input row.
pub struct FnScorer<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> FnScorer<F> {
    pub fn new(dim: usize, f: F) -> Self {
        FnScorer { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64 + Send + Sync> Scorer for FnScorer<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn score_batch(&self, inputs: &[f64]) -> Result<Vec<f64>> {
        Ok(inputs.chunks(self.dim).map(&self.f).collect())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Logistic,
    Mlp,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub kind: ModelKind,
    pub hidden: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub l2: f64,
    pub checkpoint_every: usize,
    pub seed: u64,
    pub output: OutputMode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            kind: ModelKind::Mlp,
            hidden: 32,
            epochs: 300,
            learning_rate: 0.01,
            l2: 1e-4,
            checkpoint_every: 25,
            seed: 0,
            output: OutputMode::Probability,
        }
    }
}

/// Losses recorded during training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub checkpoints: Vec<(usize, f64)>,
}

/// Train a built-in classifier on row-major inputs and binary labels.
pub fn train_predictor(
    inputs: &[f64],
    labels: &[f64],
    dim: usize,
    config: &TrainConfig,
) -> Result<(Predictor, TrainingTrace)> {
    if dim == 0 || inputs.len() != dim * labels.len() {
        return Err(Error::Dimension {
            expected: dim * labels.len(),
            got: inputs.len(),
        });
    }
    if labels.iter().any(|&y| y != 0.0 && y != 1.0) {
        return Err(Error::Data("labels must be 0 or 1".into()));
    }
    let first = labels[0];
    if labels.iter().all(|&y| y == first) {
        return Err(Error::SingleClassOutcome(first));
    }
    let standardizer = Standardizer::fit(inputs, dim);
    let mut z = Vec::with_capacity(inputs.len());
    let mut buf = Vec::with_capacity(dim);
    for x in inputs.chunks(dim) {
        standardizer.apply(x, &mut buf);
        z.extend_from_slice(&buf);
    }
    match config.kind {
        ModelKind::Logistic => {
            let mut design = Vec::with_capacity(labels.len() * (dim + 1));
            for x in z.chunks(dim) {
                design.push(1.0);
                design.extend_from_slice(x);
            }
            let x = DMatrix::from_row_slice(labels.len(), dim + 1, &design);
            let y: Vec<usize> = labels.iter().map(|&v| v as usize).collect();
            let coef = fit_softmax(&x, &y, 2, config.l2 * labels.len() as f64)
                .ok_or_else(|| Error::Training("logistic Newton system is singular".into()))?;
            let loss = (0..labels.len())
                .map(|i| {
                    let p = softmax_probs(&coef, &design[i * (dim + 1)..(i + 1) * (dim + 1)]);
                    -p[y[i]].max(1e-300).ln()
                })
                .sum::<f64>()
                / labels.len() as f64;
            if !loss.is_finite() {
                return Err(Error::Training("non-finite loss".into()));
            }
            let model = LogisticModel {
                standardizer,
                coef: coef.row(0).iter().copied().collect(),
            };
            Ok((
                Predictor::new(Arc::new(model), PredictorKind::Logistic, config.output),
                TrainingTrace {
                    checkpoints: vec![(0, loss)],
                },
            ))
        }
        ModelKind::Mlp => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            let mut mlp = Mlp::new(standardizer, config.hidden.max(1), &mut rng);
            let mut params = mlp.params();
            let mut m = vec![0.0; params.len()];
            let mut v = vec![0.0; params.len()];
            let (b1, b2, eps) = (0.9, 0.999, 1e-8);
            let mut trace = TrainingTrace::default();
            let every = config.checkpoint_every.max(1);
            for epoch in 0..=config.epochs {
                let (loss, grad) = mlp.loss_and_gradient(&z, labels, config.l2);
                if !loss.is_finite() {
                    return Err(Error::Training(format!("non-finite loss at epoch {epoch}")));
                }
                if epoch % every == 0 || epoch == config.epochs {
                    if let Some(&(at, prev)) = trace.checkpoints.last() {
                        if loss > prev {
                            return Err(Error::Training(format!(
                                "loss rose from {prev:.6} at epoch {at} to {loss:.6} at epoch {epoch}"
                            )));
                        }
                    }
                    trace.checkpoints.push((epoch, loss));
                }
                if epoch == config.epochs {
                    break;
                }
                let t = (epoch + 1) as i32;
                for i in 0..params.len() {
                    m[i] = b1 * m[i] + (1.0 - b1) * grad[i];
                    v[i] = b2 * v[i] + (1.0 - b2) * grad[i] * grad[i];
                    let mh = m[i] / (1.0 - b1.powi(t));
                    let vh = v[i] / (1.0 - b2.powi(t));
                    params[i] -= config.learning_rate * mh / (vh.sqrt() + eps);
                }
                mlp.set_params(&params);
            }
            Ok((
                Predictor::new(Arc::new(mlp), PredictorKind::Mlp, config.output),
                trace,
            ))
        }
    }
}
