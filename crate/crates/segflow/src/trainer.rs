//! A small from-scratch MLP velocity field and its flow-matching trainer.
//!
//! The network maps the concatenation (x, t, c) through tanh hidden layers
//! to a d-dimensional velocity. Forward and backward passes are written by
//! hand (the network is tiny) and checked against central finite
//! differences in the tests.
//!
//! # Checkpoint format
//!
//! Little-endian binary, stable across versions:
//!
//! ```text
//! bytes 0..8   magic "SEGFLOW1"
//! u32          d  (sample dimension)
//! u32          m  (condition dimension)
//! u32          n  (number of layer widths, input through output)
//! u32 × n      layer widths; widths[0] = d + 1 + m, widths[n−1] = d
//! per layer:   weights (rows × cols f64, row-major), then biases (rows f64)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::core::vec;
use crate::core::{Condition, State};
use crate::error::{Error, Result};
use crate::fields::{GaussianMixtureTarget, VelocityField, DEFAULT_T_MIN};

const CHECKPOINT_MAGIC: &[u8; 8] = b"SEGFLOW1";

/// One dense layer, row-major weights (rows × cols) plus a bias per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub rows: usize,
    pub cols: usize,
    pub weights: Vec<f64>,
    pub biases: Vec<f64>,
}

impl Layer {
    fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            weights: std::vec![0.0; rows * cols],
            biases: std::vec![0.0; rows],
        }
    }

    fn apply(&self, input: &[f64], out: &mut Vec<f64>) {
        out.clear();
        for r in 0..self.rows {
            let row = &self.weights[r * self.cols..(r + 1) * self.cols];
            out.push(self.biases[r] + vec::dot(row, input));
        }
    }
}

/// MLP velocity field: evaluate(x, t, c) = forward on concat(x, t, c).
#[derive(Debug, Clone, PartialEq)]
pub struct MlpField {
    dim: usize,
    cond_dim: usize,
    layers: Vec<Layer>,
}

impl MlpField {
    /// Fresh network with the given hidden widths, seeded init.
    pub fn new(dim: usize, cond_dim: usize, hidden: &[usize], seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Self::init_with_rng(dim, cond_dim, hidden, &mut rng)
    }

    pub fn init_with_rng<R: Rng + ?Sized>(
        dim: usize,
        cond_dim: usize,
        hidden: &[usize],
        rng: &mut R,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("network needs output dimension >= 1".into()));
        }
        if hidden.contains(&0) {
            return Err(Error::Config("hidden widths must be >= 1".into()));
        }
        let mut widths = Vec::with_capacity(hidden.len() + 2);
        widths.push(dim + 1 + cond_dim);
        widths.extend_from_slice(hidden);
        widths.push(dim);

        let mut layers = Vec::with_capacity(widths.len() - 1);
        for w in widths.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let bound = 1.0 / (cols as f64).sqrt();
            layers.push(Layer {
                rows,
                cols,
                weights: (0..rows * cols)
                    .map(|_| (rng.random::<f64>() * 2.0 - 1.0) * bound)
                    .collect(),
                biases: std::vec![0.0; rows],
            });
        }
        Ok(Self {
            dim,
            cond_dim,
            layers,
        })
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub(crate) fn layers_mut(&mut self) -> &mut [Layer] {
        &mut self.layers
    }

    pub fn widths(&self) -> Vec<usize> {
        let mut w: Vec<usize> = self.layers.iter().map(|l| l.cols).collect();
        w.push(self.dim);
        w
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.weights.len() + l.biases.len())
            .sum()
    }

    fn input_vector(&self, x: &[f64], t: f64, c: &[f64]) -> Vec<f64> {
        let mut input = Vec::with_capacity(self.dim + 1 + self.cond_dim);
        input.extend_from_slice(x);
        input.push(t);
        input.extend_from_slice(c);
        input
    }

    /// Forward pass; tanh on every layer except the last.
    pub fn forward(&self, x: &[f64], t: f64, c: &[f64]) -> Vec<f64> {
        let mut act = self.input_vector(x, t, c);
        let mut pre = Vec::new();
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(&act, &mut pre);
            if l < last {
                act = pre.iter().map(|a| a.tanh()).collect();
            } else {
                act = pre.clone();
            }
        }
        act
    }

    /// Forward keeping all post-activation values for backprop.
    /// activations[0] is the input; activations[i+1] the output of layer i.
    fn forward_cached(&self, input: Vec<f64>) -> Vec<Vec<f64>> {
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        activations.push(input);
        let last = self.layers.len() - 1;
        let mut pre = Vec::new();
        for (l, layer) in self.layers.iter().enumerate() {
            layer.apply(activations.last().unwrap(), &mut pre);
            if l < last {
                activations.push(pre.iter().map(|a| a.tanh()).collect());
            } else {
                activations.push(pre.clone());
            }
        }
        activations
    }

    fn zero_gradients(&self) -> Vec<Layer> {
        self.layers
            .iter()
            .map(|l| Layer::zeros(l.rows, l.cols))
            .collect()
    }

    pub fn save_checkpoint(&self, path: &Path) -> Result<()> {
        let mut buf: Vec<u8> = Vec::new();
        buf.extend_from_slice(CHECKPOINT_MAGIC);
        let widths = self.widths();
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.cond_dim as u32).to_le_bytes());
        buf.extend_from_slice(&(widths.len() as u32).to_le_bytes());
        for w in &widths {
            buf.extend_from_slice(&(*w as u32).to_le_bytes());
        }
        for layer in &self.layers {
            for v in layer.weights.iter().chain(&layer.biases) {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        let mut f = std::fs::File::create(path)?;
        f.write_all(&buf)?;
        Ok(())
    }

    pub fn load_checkpoint(path: &Path) -> Result<Self> {
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .map_err(|e| Error::Config(format!("cannot open checkpoint {}: {e}", path.display())))?
            .read_to_end(&mut bytes)?;
        let fail = |msg: &str| Error::Config(format!("corrupted checkpoint {}: {msg}", path.display()));
        if bytes.len() < 8 || &bytes[..8] != CHECKPOINT_MAGIC {
            return Err(fail("bad magic"));
        }
        let mut at = 8usize;
        let mut read_u32 = |bytes: &[u8]| -> Result<u32> {
            let end = at + 4;
            if end > bytes.len() {
                return Err(fail("truncated header"));
            }
            let v = u32::from_le_bytes(bytes[at..end].try_into().unwrap());
            at = end;
            Ok(v)
        };
        let dim = read_u32(&bytes)? as usize;
        let cond_dim = read_u32(&bytes)? as usize;
        let n_widths = read_u32(&bytes)? as usize;
        if !(2..=64).contains(&n_widths) {
            return Err(fail("implausible layer count"));
        }
        let mut widths = Vec::with_capacity(n_widths);
        for _ in 0..n_widths {
            widths.push(read_u32(&bytes)? as usize);
        }
        if widths[0] != dim + 1 + cond_dim || *widths.last().unwrap() != dim {
            return Err(fail("inconsistent layer widths"));
        }
        let mut layers = Vec::with_capacity(n_widths - 1);
        for w in widths.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let n_vals = rows * cols + rows;
            let end = at + n_vals * 8;
            if end > bytes.len() {
                return Err(fail("truncated parameters"));
            }
            let vals: Vec<f64> = bytes[at..end]
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            at = end;
            if !vec::all_finite(&vals) {
                return Err(fail("non-finite parameters"));
            }
            layers.push(Layer {
                rows,
                cols,
                weights: vals[..rows * cols].to_vec(),
                biases: vals[rows * cols..].to_vec(),
            });
        }
        if at != bytes.len() {
            return Err(fail("trailing bytes"));
        }
        Ok(Self {
            dim,
            cond_dim,
            layers,
        })
    }
}

impl VelocityField for MlpField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn cond_dim(&self) -> usize {
        self.cond_dim
    }

    fn evaluate(&self, x: &State, t: f64, c: &Condition) -> Result<Vec<f64>> {
        if x.dim() != self.dim || c.dim() != self.cond_dim {
            return Err(Error::Config(format!(
                "field expects dims ({}, {}), got ({}, {})",
                self.dim,
                self.cond_dim,
                x.dim(),
                c.dim()
            )));
        }
        if !(0.0..=1.0).contains(&t) {
            return Err(Error::Domain(format!("evaluation time {t} outside [0, 1]")));
        }
        let out = self.forward(x.values(), t, c.values());
        if !vec::all_finite(&out) {
            return Err(Error::NonFinite {
                context: "network output".into(),
                step: None,
            });
        }
        Ok(out)
    }
}

/// One regression sample of the flow-matching objective.
#[derive(Debug, Clone)]
pub struct FlowSample {
    pub x0: Vec<f64>,
    pub eps: Vec<f64>,
    pub t: f64,
    pub c: Condition,
}

impl FlowSample {
    /// The noised input x_t = (1−t)·x₀ + t·ε.
    pub fn x_t(&self) -> Vec<f64> {
        self.x0
            .iter()
            .zip(&self.eps)
            .map(|(x0, e)| (1.0 - self.t) * x0 + self.t * e)
            .collect()
    }

    /// The regression target ε − x₀.
    pub fn target(&self) -> Vec<f64> {
        vec::sub(&self.eps, &self.x0)
    }
}

/// Mean over the batch of ‖(ε − x₀) − v_net(x_t, t, c)‖².
pub fn fm_loss(field: &MlpField, batch: &[FlowSample]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Config("flow-matching batch is empty".into()));
    }
    let mut total = 0.0;
    for s in batch {
        let out = field.forward(&s.x_t(), s.t, s.c.values());
        let target = s.target();
        total += out
            .iter()
            .zip(&target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();
    }
    let loss = total / batch.len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "flow-matching loss".into(),
            step: None,
        });
    }
    Ok(loss)
}

/// Exact analytic gradients of [`fm_loss`] via backpropagation.
/// Returns (loss, per-layer gradients).
pub fn grad(field: &MlpField, batch: &[FlowSample]) -> Result<(f64, Vec<Layer>)> {
    if batch.is_empty() {
        return Err(Error::Config("flow-matching batch is empty".into()));
    }
    let mut grads = field.zero_gradients();
    let mut total = 0.0;
    let inv_b = 1.0 / batch.len() as f64;
    let last = field.layers.len() - 1;

    for s in batch {
        let input = field.input_vector(&s.x_t(), s.t, s.c.values());
        let activations = field.forward_cached(input);
        let out = &activations[last + 1];
        let target = s.target();

        // d(mean ‖out − target‖²)/d(out) = 2(out − target)/B
        let mut delta: Vec<f64> = out
            .iter()
            .zip(&target)
            .map(|(o, t)| 2.0 * (o - t) * inv_b)
            .collect();
        total += out
            .iter()
            .zip(&target)
            .map(|(o, t)| (o - t) * (o - t))
            .sum::<f64>();

        for l in (0..field.layers.len()).rev() {
            let layer = &field.layers[l];
            let z_in = &activations[l];
            let g = &mut grads[l];
            for r in 0..layer.rows {
                g.biases[r] += delta[r];
                let grow = &mut g.weights[r * layer.cols..(r + 1) * layer.cols];
                for (gw, zi) in grow.iter_mut().zip(z_in) {
                    *gw += delta[r] * zi;
                }
            }
            if l > 0 {
                // δ_in = Wᵀ δ_out ⊙ tanh'(pre) with tanh' = 1 − z².
                let mut prev = std::vec![0.0; layer.cols];
                for r in 0..layer.rows {
                    let row = &layer.weights[r * layer.cols..(r + 1) * layer.cols];
                    for (p, wv) in prev.iter_mut().zip(row) {
                        *p += wv * delta[r];
                    }
                }
                for (p, z) in prev.iter_mut().zip(z_in) {
                    *p *= 1.0 - z * z;
                }
                delta = prev;
            }
        }
    }
    let loss = total * inv_b;
    if !loss.is_finite() {
        return Err(Error::NonFinite {
            context: "flow-matching loss".into(),
            step: None,
        });
    }
    Ok((loss, grads))
}

/// How conditions are drawn while training.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ConditionSampling {
    /// Uniform choice from a fixed list.
    Fixed(Vec<Condition>),
    /// c(α) = (1−α)·a + α·b with α uniform; covers the whole transition.
    InterpolatedPair { a: Condition, b: Condition },
}

impl ConditionSampling {
    pub fn unconditional() -> Self {
        ConditionSampling::Fixed(vec![Condition::zeros(0)])
    }

    pub fn cond_dim(&self) -> usize {
        match self {
            ConditionSampling::Fixed(list) => list.first().map_or(0, |c| c.dim()),
            ConditionSampling::InterpolatedPair { a, .. } => a.dim(),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Condition {
        match self {
            ConditionSampling::Fixed(list) => list[rng.random_range(0..list.len())].clone(),
            ConditionSampling::InterpolatedPair { a, b } => {
                Condition::lerp(a, b, rng.random::<f64>())
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    /// Plain gradient descent.
    Sgd,
    /// Adaptive-moment estimation (β₁ = 0.9, β₂ = 0.999, ε = 1e-8).
    Adam,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub steps: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub hidden: Vec<usize>,
    pub conditions: ConditionSampling,
    pub t_min: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            steps: 1000,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            seed: 0,
            hidden: vec![64, 64],
            conditions: ConditionSampling::unconditional(),
            t_min: DEFAULT_T_MIN,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        if self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return Err(Error::Config("learning rate must be > 0".into()));
        }
        if !(0.0..1.0).contains(&self.t_min) {
            return Err(Error::Config("t_min must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

struct AdamState {
    m: Vec<Layer>,
    v: Vec<Layer>,
    step: usize,
}

/// Train a fresh MLP on target(c) with the flow-matching objective.
/// Returns the field and the per-step losses; fully determined by the
/// config seed. Divergence (non-finite loss or parameters) reports the
/// step at which it happened.
pub fn train(
    target: &GaussianMixtureTarget,
    cfg: &TrainConfig,
) -> Result<(MlpField, Vec<f64>)> {
    cfg.validate()?;
    if cfg.conditions.cond_dim() != target.cond_dim() {
        return Err(Error::Config(format!(
            "condition sampling has dim {}, target expects {}",
            cfg.conditions.cond_dim(),
            target.cond_dim()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut field = MlpField::init_with_rng(target.dim(), target.cond_dim(), &cfg.hidden, &mut rng)?;

    let mut adam = AdamState {
        m: field.zero_gradients(),
        v: field.zero_gradients(),
        step: 0,
    };
    let mut losses = Vec::with_capacity(cfg.steps);

    for step in 0..cfg.steps {
        let mut batch = Vec::with_capacity(cfg.batch_size);
        for _ in 0..cfg.batch_size {
            let c = cfg.conditions.sample(&mut rng);
            let x0 = target.sample_x0(&c, &mut rng)?;
            let eps: Vec<f64> = (0..target.dim())
                .map(|_| StandardNormal.sample(&mut rng))
                .collect();
            let t = cfg.t_min + (1.0 - cfg.t_min) * rng.random::<f64>();
            batch.push(FlowSample { x0, eps, t, c });
        }
        let (loss, grads) = grad(&field, &batch).map_err(|e| match e {
            Error::NonFinite { context, .. } => Error::NonFinite {
                context,
                step: Some(step),
            },
            other => other,
        })?;
        losses.push(loss);

        match cfg.optimizer {
            OptimizerKind::Sgd => {
                for (layer, g) in field.layers.iter_mut().zip(&grads) {
                    for (p, gv) in layer
                        .weights
                        .iter_mut()
                        .chain(layer.biases.iter_mut())
                        .zip(g.weights.iter().chain(&g.biases))
                    {
                        *p -= cfg.learning_rate * gv;
                    }
                }
            }
            OptimizerKind::Adam => {
                adam.step += 1;
                let (b1, b2, eps_hat) = (0.9f64, 0.999f64, 1e-8);
                let bc1 = 1.0 - b1.powi(adam.step as i32);
                let bc2 = 1.0 - b2.powi(adam.step as i32);
                for (((layer, g), m), v) in field
                    .layers
                    .iter_mut()
                    .zip(&grads)
                    .zip(&mut adam.m)
                    .zip(&mut adam.v)
                {
                    for (((p, gv), mv), vv) in layer
                        .weights
                        .iter_mut()
                        .chain(layer.biases.iter_mut())
                        .zip(g.weights.iter().chain(&g.biases))
                        .zip(m.weights.iter_mut().chain(m.biases.iter_mut()))
                        .zip(v.weights.iter_mut().chain(v.biases.iter_mut()))
                    {
                        *mv = b1 * *mv + (1.0 - b1) * gv;
                        *vv = b2 * *vv + (1.0 - b2) * gv * gv;
                        let m_hat = *mv / bc1;
                        let v_hat = *vv / bc2;
                        *p -= cfg.learning_rate * m_hat / (v_hat.sqrt() + eps_hat);
                    }
                }
            }
        }
        for layer in &field.layers {
            if !vec::all_finite(&layer.weights) || !vec::all_finite(&layer.biases) {
                return Err(Error::NonFinite {
                    context: "network parameters after update".into(),
                    step: Some(step),
                });
            }
        }
    }
    Ok((field, losses))
}

/// Monte-Carlo estimate of the irreducible flow-matching loss
/// E‖(ε − x₀) − E[ε − x₀ | x_t]‖² attained by the exact marginal field.
pub fn conditional_variance_floor(
    target: &GaussianMixtureTarget,
    conditions: &ConditionSampling,
    t_min: f64,
    n: usize,
    seed: u64,
) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut total = 0.0;
    for _ in 0..n {
        let c = conditions.sample(&mut rng);
        let x0 = target.sample_x0(&c, &mut rng)?;
        let eps: Vec<f64> = (0..target.dim())
            .map(|_| StandardNormal.sample(&mut rng))
            .collect();
        let t = t_min + (1.0 - t_min) * rng.random::<f64>();
        let xt: Vec<f64> = x0
            .iter()
            .zip(&eps)
            .map(|(x0, e)| (1.0 - t) * x0 + t * e)
            .collect();
        let v = target.velocity(&State::new(xt)?, t, &c, t_min)?;
        total += v
            .iter()
            .zip(eps.iter().zip(&x0))
            .map(|(vi, (e, x))| {
                let r = (e - x) - vi;
                r * r
            })
            .sum::<f64>();
    }
    Ok(total / n as f64)
}
