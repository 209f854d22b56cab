//! Bias-free fully connected networks `σ_L(A_L σ_{L−1}(… σ_1(A_1 x)))` with
//! frozen reference matrices, activation traces, manual reverse-mode
//! gradients of the contrastive objective, and a small training loop.

use std::io::{Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{ContrastiveTuple, TupleDataset};
use crate::error::{invalid, Error, Result};
use crate::linalg::{dot, DenseMatrix};
use crate::loss::LossKind;
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Activation {
    Relu,
    LeakyRelu { slope: f64 },
    Identity,
    Tanh,
}

impl Activation {
    /// ℓ2 Lipschitz constant of the pointwise map.
    pub fn lipschitz(&self) -> f64 {
        match *self {
            Self::Relu | Self::Identity | Self::Tanh => 1.0,
            Self::LeakyRelu { slope } => slope.abs().max(1.0),
        }
    }

    pub fn apply(&self, z: f64) -> f64 {
        match *self {
            Self::Relu => z.max(0.0),
            Self::LeakyRelu { slope } => {
                if z > 0.0 {
                    z
                } else {
                    slope * z
                }
            }
            Self::Identity => z,
            Self::Tanh => z.tanh(),
        }
    }

    /// Derivative at pre-activation `z`; 0 (or the slope) at the relu kink.
    pub fn derivative(&self, z: f64) -> f64 {
        match *self {
            Self::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Self::LeakyRelu { slope } => {
                if z > 0.0 {
                    1.0
                } else {
                    slope
                }
            }
            Self::Identity => 1.0,
            Self::Tanh => 1.0 - z.tanh().powi(2),
        }
    }

    fn tag(&self) -> u8 {
        match self {
            Self::Relu => 0,
            Self::LeakyRelu { .. } => 1,
            Self::Identity => 2,
            Self::Tanh => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    weight: DenseMatrix,
    reference: DenseMatrix,
    activation: Activation,
}

impl Layer {
    pub fn new(weight: DenseMatrix, reference: DenseMatrix, activation: Activation) -> Result<Self> {
        if weight.shape() != reference.shape() {
            return invalid("reference matrix shape differs from weight");
        }
        if let Activation::LeakyRelu { slope } = activation {
            if !slope.is_finite() {
                return invalid("leaky relu slope must be finite");
            }
        }
        Ok(Self {
            weight,
            reference,
            activation,
        })
    }

    pub fn weight(&self) -> &DenseMatrix {
        &self.weight
    }

    pub fn reference(&self) -> &DenseMatrix {
        &self.reference
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkParams {
    layers: Vec<Layer>,
}

/// Per-level outputs `F^{1→l}(x)` for `l = 0..=L`, level 0 being the input.
#[derive(Debug, Clone, PartialEq)]
pub struct ActivationTrace {
    levels: Vec<Vec<f64>>,
}

impl ActivationTrace {
    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn output(&self) -> &[f64] {
        self.levels.last().expect("trace has the input level")
    }

    pub fn level_norms(&self) -> Vec<f64> {
        self.levels.iter().map(|h| dot(h, h).sqrt()).collect()
    }
}

/// Pre-activations and outputs of every layer, for backprop.
struct ForwardCache {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl NetworkParams {
    pub fn new(layers: Vec<Layer>) -> Result<Self> {
        if layers.is_empty() {
            return invalid("network needs at least one layer");
        }
        for (l, pair) in layers.windows(2).enumerate() {
            if pair[1].weight.cols() != pair[0].weight.rows() {
                return invalid(format!(
                    "layer {} has {} inputs but layer {} has {} outputs",
                    l + 2,
                    pair[1].weight.cols(),
                    l + 1,
                    pair[0].weight.rows()
                ));
            }
        }
        Ok(Self { layers })
    }

    /// Layers with the given weights and all-zero references.
    pub fn from_weights(weights: Vec<DenseMatrix>, activation: Activation) -> Result<Self> {
        let layers = weights
            .into_iter()
            .map(|w| {
                let r = DenseMatrix::zeros(w.rows(), w.cols());
                Layer::new(w, r, activation)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(layers)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("nonempty").weight.rows()
    }

    /// `d_0, d_1, …, d_L`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(|l| l.weight.rows()))
            .collect()
    }

    pub fn lipschitz_constants(&self) -> Vec<f64> {
        self.layers.iter().map(|l| l.activation.lipschitz()).collect()
    }

    pub fn set_weight(&mut self, layer: usize, weight: DenseMatrix) -> Result<()> {
        let slot = self
            .layers
            .get_mut(layer)
            .ok_or_else(|| Error::InvalidInput(format!("no layer {layer}")))?;
        if slot.weight.shape() != weight.shape() {
            return invalid("replacement weight has a different shape");
        }
        slot.weight = weight;
        Ok(())
    }

    /// Copy with every weight multiplied by `c`; references untouched.
    pub fn scaled(&self, c: f64) -> Self {
        Self {
            layers: self
                .layers
                .iter()
                .map(|l| Layer {
                    weight: l.weight.scaled(c),
                    reference: l.reference.clone(),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return invalid(format!("input has dimension {}, network expects {}", x.len(), self.input_dim()));
        }
        Ok(())
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_input(x)?;
        let mut h = x.to_vec();
        for layer in &self.layers {
            h = layer.weight.matvec(&h);
            h.iter_mut().for_each(|z| *z = layer.activation.apply(*z));
        }
        Ok(h)
    }

    pub fn forward_with_trace(&self, x: &[f64]) -> Result<ActivationTrace> {
        Ok(ActivationTrace {
            levels: self.forward_cached(x)?.post,
        })
    }

    /// Output plus, when `capture` is set, the full activation trace.
    pub fn forward_capture(&self, x: &[f64], capture: bool) -> Result<(Vec<f64>, Option<ActivationTrace>)> {
        if capture {
            let trace = self.forward_with_trace(x)?;
            Ok((trace.output().to_vec(), Some(trace)))
        } else {
            Ok((self.forward(x)?, None))
        }
    }

    fn forward_cached(&self, x: &[f64]) -> Result<ForwardCache> {
        self.check_input(x)?;
        let mut pre = Vec::with_capacity(self.depth());
        let mut post = Vec::with_capacity(self.depth() + 1);
        post.push(x.to_vec());
        for layer in &self.layers {
            let z = layer.weight.matvec(post.last().expect("input level"));
            post.push(z.iter().map(|v| layer.activation.apply(*v)).collect());
            pre.push(z);
        }
        Ok(ForwardCache { pre, post })
    }

    /// Accumulates `scale · ∂out/∂A` into `grads`, given `∂/∂F(x) = upstream`.
    fn backprop(&self, cache: &ForwardCache, upstream: &[f64], scale: f64, grads: &mut [DenseMatrix]) {
        let mut delta: Vec<f64> = upstream.to_vec();
        for l in (0..self.depth()).rev() {
            let act = self.layers[l].activation;
            delta.iter_mut().zip(&cache.pre[l]).for_each(|(d, z)| *d *= act.derivative(*z));
            grads[l].add_outer(scale, &delta, &cache.post[l]);
            if l > 0 {
                delta = self.layers[l].weight.matvec_transpose(&delta);
            }
        }
    }

    fn zero_grads(&self) -> Vec<DenseMatrix> {
        self.layers
            .iter()
            .map(|l| DenseMatrix::zeros(l.weight.rows(), l.weight.cols()))
            .collect()
    }

    /// Loss on `tuple`, accumulating `scale · ∇_A loss` into `grads`.
    fn accumulate_tuple(
        &self,
        tuple: &ContrastiveTuple,
        loss: &LossKind,
        scale: f64,
        grads: &mut [DenseMatrix],
    ) -> Result<f64> {
        let anchor = self.forward_cached(&tuple.anchor)?;
        let positive = self.forward_cached(&tuple.positive)?;
        let negatives = tuple
            .negatives
            .iter()
            .map(|x| self.forward_cached(x))
            .collect::<Result<Vec<_>>>()?;
        let f = anchor.post.last().expect("output");
        let fp = positive.post.last().expect("output");
        let base = dot(f, fp);
        let v: Vec<f64> = negatives
            .iter()
            .map(|c| base - dot(f, c.post.last().expect("output")))
            .collect();
        let value = loss.value(&v)?;
        let g = loss.gradient(&v)?;
        let gsum: f64 = g.iter().sum();
        if g.iter().all(|gi| *gi == 0.0) {
            return Ok(value);
        }

        // v_i = fᵀ(f⁺ − f_i⁻): ∂/∂f = Σ g_i (f⁺ − f_i⁻), ∂/∂f⁺ = (Σ g_i) f, ∂/∂f_i⁻ = −g_i f.
        let mut d_anchor: Vec<f64> = fp.iter().map(|p| gsum * p).collect();
        for (gi, c) in g.iter().zip(&negatives) {
            if *gi == 0.0 {
                continue;
            }
            for (d, n) in d_anchor.iter_mut().zip(c.post.last().expect("output")) {
                *d -= gi * n;
            }
        }
        self.backprop(&anchor, &d_anchor, scale, grads);
        if gsum != 0.0 {
            let d_pos: Vec<f64> = f.iter().map(|a| gsum * a).collect();
            self.backprop(&positive, &d_pos, scale, grads);
        }
        for (gi, c) in g.iter().zip(&negatives) {
            if *gi != 0.0 {
                let d_neg: Vec<f64> = f.iter().map(|a| -gi * a).collect();
                self.backprop(c, &d_neg, scale, grads);
            }
        }
        Ok(value)
    }

    /// Gradient of the tuple loss with respect to every weight matrix.
    pub fn grad_tuple(&self, tuple: &ContrastiveTuple, loss: &LossKind) -> Result<Vec<DenseMatrix>> {
        let mut grads = self.zero_grads();
        self.accumulate_tuple(tuple, loss, 1.0, &mut grads)?;
        Ok(grads)
    }

    /// Mean loss and mean gradient over `tuples`.
    pub fn batch_gradient(&self, tuples: &[ContrastiveTuple], loss: &LossKind) -> Result<(f64, Vec<DenseMatrix>)> {
        if tuples.is_empty() {
            return invalid("empty batch");
        }
        let scale = 1.0 / tuples.len() as f64;
        let partials = par::map_chunks(tuples, |chunk| -> Result<(Vec<f64>, Vec<DenseMatrix>)> {
            let mut grads = self.zero_grads();
            let values = chunk
                .iter()
                .map(|t| self.accumulate_tuple(t, loss, scale, &mut grads))
                .collect::<Result<Vec<_>>>()?;
            Ok((values, grads))
        });
        let mut grads = self.zero_grads();
        let mut values = Vec::with_capacity(tuples.len());
        for p in partials {
            let (v, g) = p?;
            values.extend(v);
            for (acc, gi) in grads.iter_mut().zip(&g) {
                acc.add_scaled(1.0, gi);
            }
        }
        Ok((par::pairwise_sum(&values) * scale, grads))
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&FORMAT_VERSION.to_le_bytes())?;
        w.write_all(&(self.depth() as u32).to_le_bytes())?;
        for layer in &self.layers {
            w.write_all(&(layer.weight.rows() as u32).to_le_bytes())?;
            w.write_all(&(layer.weight.cols() as u32).to_le_bytes())?;
            w.write_all(&[layer.activation.tag()])?;
            w.write_all(&layer.activation.lipschitz().to_le_bytes())?;
            if let Activation::LeakyRelu { slope } = layer.activation {
                w.write_all(&slope.to_le_bytes())?;
            }
            for v in layer.weight.as_slice().iter().chain(layer.reference.as_slice()) {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<Self> {
        let mut rd = ByteReader { inner: r, offset: 0 };
        let mut magic = [0u8; 4];
        rd.fill(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad magic, expected CRLN".into(),
            });
        }
        let version = rd.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Format {
                offset: 4,
                message: format!("unsupported version {version}"),
            });
        }
        let count = rd.u32()? as usize;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let rows = rd.u32()? as usize;
            let cols = rd.u32()? as usize;
            let tag_offset = rd.offset;
            let tag = rd.u8()?;
            let rho = rd.f64()?;
            let activation = match tag {
                0 => Activation::Relu,
                1 => Activation::LeakyRelu { slope: rd.f64()? },
                2 => Activation::Identity,
                3 => Activation::Tanh,
                t => {
                    return Err(Error::Format {
                        offset: tag_offset,
                        message: format!("unknown activation tag {t}"),
                    })
                }
            };
            if rho != activation.lipschitz() {
                return Err(Error::Format {
                    offset: tag_offset + 1,
                    message: format!("stored Lipschitz constant {rho} does not match activation"),
                });
            }
            let weight = DenseMatrix::new(rows, cols, rd.f64s(rows * cols)?)?;
            let reference = DenseMatrix::new(rows, cols, rd.f64s(rows * cols)?)?;
            layers.push(Layer::new(weight, reference, activation)?);
        }
        Self::new(layers)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::fs::File::create(path)?;
        let mut w = std::io::BufWriter::new(f);
        self.write_to(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::read_from(std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

const MAGIC: &[u8; 4] = b"CRLN";
const FORMAT_VERSION: u32 = 1;

struct ByteReader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> ByteReader<R> {
    fn fill(&mut self, buf: &mut [u8]) -> Result<()> {
        self.inner.read_exact(buf).map_err(|e| Error::Format {
            offset: self.offset,
            message: format!("truncated model file: {e}"),
        })?;
        self.offset += buf.len();
        Ok(())
    }

    fn u8(&mut self) -> Result<u8> {
        let mut b = [0u8; 1];
        self.fill(&mut b)?;
        Ok(b[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let mut b = [0u8; 4];
        self.fill(&mut b)?;
        Ok(u32::from_le_bytes(b))
    }

    fn f64(&mut self) -> Result<f64> {
        let mut b = [0u8; 8];
        self.fill(&mut b)?;
        Ok(f64::from_le_bytes(b))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        (0..n).map(|_| self.f64()).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitScheme {
    UniformScaled,
    Zeros,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceMode {
    /// References are a frozen copy of the initial weights.
    #[default]
    Initialization,
    Zero,
}

/// Builds a network with widths `d_0..d_L` and the same activation on every layer.
///
/// `UniformScaled` draws entries from `U(−c, c)` with `c = sqrt(6 / fan_in)`
/// for (leaky) relu and `sqrt(3 / fan_in)` otherwise.
pub fn init(
    widths: &[usize],
    activation: Activation,
    scheme: InitScheme,
    reference: ReferenceMode,
    seed: u64,
) -> Result<NetworkParams> {
    if widths.len() < 2 {
        return invalid("widths must list at least an input and an output dimension");
    }
    if widths.contains(&0) {
        return invalid("widths must be positive");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gain = match activation {
        Activation::Relu | Activation::LeakyRelu { .. } => 6.0,
        _ => 3.0,
    };
    let layers = widths
        .windows(2)
        .map(|w| {
            let (fan_in, fan_out) = (w[0], w[1]);
            let weight = match scheme {
                InitScheme::UniformScaled => {
                    DenseMatrix::random_uniform(fan_out, fan_in, (gain / fan_in as f64).sqrt(), &mut rng)
                }
                InitScheme::Zeros => DenseMatrix::zeros(fan_out, fan_in),
            };
            let reference = match reference {
                ReferenceMode::Initialization => weight.clone(),
                ReferenceMode::Zero => DenseMatrix::zeros(fan_out, fan_in),
            };
            Layer::new(weight, reference, activation)
        })
        .collect::<Result<Vec<_>>>()?;
    NetworkParams::new(layers)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd { lr: f64 },
    Momentum { lr: f64, beta: f64 },
}

impl Optimizer {
    fn validate(&self) -> Result<()> {
        match *self {
            Self::Sgd { lr } if lr >= 0.0 && lr.is_finite() => Ok(()),
            Self::Momentum { lr, beta } if lr >= 0.0 && lr.is_finite() && (0.0..1.0).contains(&beta) => Ok(()),
            _ => invalid(format!("bad optimizer settings {self:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub loss: LossKind,
    pub optimizer: Optimizer,
    pub max_iters: usize,
    pub target_risk: f64,
    /// `None` for full-batch descent.
    pub batch_size: Option<usize>,
    /// Full-risk evaluation period in mini-batch mode.
    pub eval_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            loss: LossKind::Hinge,
            optimizer: Optimizer::Sgd { lr: 0.1 },
            max_iters: 1000,
            target_risk: 1e-4,
            batch_size: None,
            eval_every: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    /// Risk of the (mini-)batch at each iteration, before that iteration's step.
    pub risks: Vec<f64>,
    pub steps: usize,
    /// Full-dataset empirical risk of the returned parameters.
    pub final_risk: f64,
    pub reached_target: bool,
}

/// Gradient descent on the empirical risk. Stops at `max_iters` steps or once
/// the full empirical risk is at most `target_risk`. On divergence the
/// parameters are restored to the last finite state.
pub fn train(params: &mut NetworkParams, ds: &TupleDataset, cfg: &TrainConfig) -> Result<TrainLog> {
    if cfg.max_iters == 0 {
        return invalid("max_iters must be at least 1");
    }
    if ds.is_empty() {
        return invalid("cannot train on an empty dataset");
    }
    cfg.loss.validate()?;
    if !cfg.loss.is_score_based() {
        return invalid("training needs a loss that is a function of the score vector");
    }
    cfg.optimizer.validate()?;
    let batch = cfg.batch_size.filter(|b| *b < ds.n());
    if batch == Some(0) {
        return invalid("batch size must be positive");
    }
    let eval_every = cfg.eval_every.max(1);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..ds.n()).collect();
    let mut cursor = ds.n();
    let mut velocity: Vec<DenseMatrix> = params.zero_grads();
    let mut log = TrainLog {
        risks: Vec::new(),
        steps: 0,
        final_risk: f64::NAN,
        reached_target: false,
    };
    let mut last_finite = f64::NAN;

    for iter in 0..cfg.max_iters {
        let (risk, grads) = match batch {
            None => params.batch_gradient(ds.tuples(), &cfg.loss)?,
            Some(b) => {
                if iter % eval_every == 0 {
                    let full = crate::loss::empirical_risk(params, ds, &cfg.loss)?;
                    if full <= cfg.target_risk {
                        log.final_risk = full;
                        log.reached_target = true;
                        return Ok(log);
                    }
                }
                if cursor + b > order.len() {
                    order.shuffle(&mut rng);
                    cursor = 0;
                }
                let picked: Vec<ContrastiveTuple> =
                    order[cursor..cursor + b].iter().map(|i| ds.tuples()[*i].clone()).collect();
                cursor += b;
                params.batch_gradient(&picked, &cfg.loss)?
            }
        };
        if !risk.is_finite() {
            return Err(Error::TrainingDiverged {
                iteration: iter,
                last_finite_risk: last_finite,
            });
        }
        last_finite = risk;
        log.risks.push(risk);
        if batch.is_none() && risk <= cfg.target_risk {
            log.final_risk = risk;
            log.reached_target = true;
            return Ok(log);
        }

        let snapshot = params.clone();
        let (lr, beta) = match cfg.optimizer {
            Optimizer::Sgd { lr } => (lr, 0.0),
            Optimizer::Momentum { lr, beta } => (lr, beta),
        };
        for ((layer, g), vel) in params.layers.iter_mut().zip(&grads).zip(velocity.iter_mut()) {
            if beta > 0.0 {
                *vel = vel.scaled(beta);
                vel.add_scaled(1.0, g);
                layer.weight.add_scaled(-lr, vel);
            } else {
                layer.weight.add_scaled(-lr, g);
            }
        }
        if params.layers.iter().any(|l| !l.weight.is_finite()) {
            *params = snapshot;
            return Err(Error::TrainingDiverged {
                iteration: iter,
                last_finite_risk: last_finite,
            });
        }
        log.steps += 1;
    }

    log.final_risk = crate::loss::empirical_risk(params, ds, &cfg.loss)?;
    log.reached_target = log.final_risk <= cfg.target_risk;
    Ok(log)
}
