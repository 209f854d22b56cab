//! Experiment configuration: one JSON document, optionally patched by flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crl_core::bounds::{BoundMode, RbarMode, ThresholdPolicy};
use crl_core::data::{self, BlobSpec, LatentClassModel};
use crl_core::loss::LossKind;
use crl_core::net::{Activation, InitScheme, Optimizer, ReferenceMode, TrainConfig};

use crate::CliError;

/// Directory that relative MNIST paths are resolved against.
pub const DATA_DIR_ENV: &str = "CRL_DATA_DIR";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub classes: usize,
    pub dim: usize,
    pub per_class: usize,
    pub sigma: f64,
    pub scale: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let b = BlobSpec::default();
        Self {
            classes: b.classes,
            dim: b.dim,
            per_class: b.per_class,
            sigma: b.sigma,
            scale: b.scale,
            seed: 11,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistPaths {
    pub images: PathBuf,
    pub labels: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic(SyntheticSpec),
    Mnist(MnistPaths),
}

impl Default for DataSource {
    fn default() -> Self {
        Self::Synthetic(SyntheticSpec::default())
    }
}

/// Re-reads the body of a tagged `data` object to name the offending inner field.
fn data_field_error(doc: &Value) -> Option<CliError> {
    let mut body = doc.get("data")?.as_object()?.clone();
    let source = body.remove("source")?;
    let body = Value::Object(body);
    let err = match source.as_str()? {
        "synthetic" => serde_path_to_error::deserialize::<_, SyntheticSpec>(body).err()?,
        "mnist" => serde_path_to_error::deserialize::<_, MnistPaths>(body).err()?,
        _ => return None,
    };
    let path = err.path().to_string();
    let field = if path == "." { "data".to_string() } else { format!("data.{path}") };
    Some(field_error(&field, err.inner()))
}

/// Which samples define the empirical input and output norm maxima.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProfileSamples {
    #[default]
    Train,
    TrainTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataSource,
    /// Train fraction of each class pool.
    pub split: f64,
    pub split_seed: u64,
    pub n: usize,
    pub k: usize,
    /// Hidden and output width.
    pub width: usize,
    /// Number of weight layers.
    pub depth: usize,
    pub activation: Activation,
    pub init: InitScheme,
    pub reference: ReferenceMode,
    pub loss: LossKind,
    /// Defaults to full-batch sgd for synthetic data, momentum for MNIST.
    pub optimizer: Option<Optimizer>,
    pub batch_size: Option<usize>,
    pub eval_every: usize,
    pub max_iters: usize,
    pub target_risk: f64,
    pub delta: f64,
    pub seeds: Vec<u64>,
    pub modes: Vec<BoundMode>,
    pub thresholds: ThresholdPolicy,
    pub profile_samples: ProfileSamples,
    pub chain: RbarMode,
    pub distinct_positive: bool,
    pub spectral_tol: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            data: DataSource::default(),
            split: 0.75,
            split_seed: 12,
            n: 200,
            k: 10,
            width: 64,
            depth: 2,
            activation: Activation::Relu,
            init: InitScheme::UniformScaled,
            reference: ReferenceMode::Initialization,
            loss: LossKind::Hinge,
            optimizer: None,
            batch_size: None,
            eval_every: 10,
            max_iters: 1000,
            target_risk: 1e-4,
            delta: 0.1,
            seeds: vec![1, 2, 3],
            modes: vec![BoundMode::Truncated, BoundMode::Full],
            thresholds: ThresholdPolicy::EmpiricalMax,
            profile_samples: ProfileSamples::Train,
            chain: RbarMode::PopulationChain,
            distinct_positive: false,
            spectral_tol: 1e-10,
        }
    }
}

fn field_error(field: &str, msg: impl std::fmt::Display) -> CliError {
    CliError::Usage(format!("config field `{field}`: {msg}"))
}

/// Sets `path` (dotted) inside a JSON object, creating objects on the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> Result<(), CliError> {
    let mut cur = root;
    let parts: Vec<&str> = path.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        if part.is_empty() {
            return Err(CliError::Usage(format!("bad override path `{path}`")));
        }
        let obj = match cur {
            Value::Object(map) => map,
            _ => return Err(CliError::Usage(format!("override `{path}`: `{}` is not an object", parts[..i].join(".")))),
        };
        if i + 1 == parts.len() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| Value::Object(Default::default()));
    }
    unreachable!("split yields at least one part")
}

/// Parses `key=value`; the value is read as JSON, or as a string if that fails.
pub fn parse_override(s: &str) -> Result<(String, Value), CliError> {
    let (key, raw) = s
        .split_once('=')
        .ok_or_else(|| CliError::Usage(format!("override `{s}` is not of the form key=value")))?;
    let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
    Ok((key.trim().to_string(), value))
}

impl ExperimentConfig {
    /// Reads the JSON file (or starts from defaults), applies the overrides in
    /// order, then deserializes and validates.
    pub fn load(path: Option<&Path>, overrides: &[(String, Value)]) -> Result<Self, CliError> {
        let mut doc = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p)
                    .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", p.display())))?;
                serde_json::from_str::<Value>(&text)
                    .map_err(|e| CliError::Usage(format!("config {} is not valid JSON: {e}", p.display())))?
            }
            None => Value::Object(Default::default()),
        };
        if !doc.is_object() {
            return Err(CliError::Usage("config must be a JSON object".into()));
        }
        for (k, v) in overrides {
            set_path(&mut doc, k, v.clone())?;
        }
        Self::from_value(doc)
    }

    pub fn from_value(doc: Value) -> Result<Self, CliError> {
        let cfg: Self = match serde_path_to_error::deserialize(&doc) {
            Ok(c) => c,
            Err(e) => {
                let path = e.path().to_string();
                if path == "data" {
                    if let Some(precise) = data_field_error(&doc) {
                        return Err(precise);
                    }
                }
                return Err(field_error(if path == "." { "<root>" } else { &path }, e.inner()));
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if let DataSource::Synthetic(SyntheticSpec {
            classes,
            dim,
            per_class,
            sigma,
            scale,
            ..
        }) = self.data
        {
            if classes < 2 {
                return Err(field_error("data.classes", "contrastive sampling needs at least 2 classes"));
            }
            if dim < classes {
                return Err(field_error("data.dim", format!("must be at least data.classes ({classes})")));
            }
            if per_class < 2 {
                return Err(field_error("data.per_class", "must be at least 2 so both split sides are populated"));
            }
            if !(sigma >= 0.0 && sigma.is_finite()) {
                return Err(field_error("data.sigma", "must be finite and nonnegative"));
            }
            if !(scale > 0.0 && scale.is_finite()) {
                return Err(field_error("data.scale", "must be positive"));
            }
        }
        if !(self.split > 0.0 && self.split < 1.0) {
            return Err(field_error("split", format!("must lie in (0, 1), got {}", self.split)));
        }
        for (name, v) in [("n", self.n), ("k", self.k), ("width", self.width), ("depth", self.depth), ("max_iters", self.max_iters)] {
            if v == 0 {
                return Err(field_error(name, "must be at least 1"));
            }
        }
        if self.batch_size == Some(0) {
            return Err(field_error("batch_size", "must be at least 1"));
        }
        self.loss.validate().map_err(|e| field_error("loss", e))?;
        if !self.loss.is_score_based() {
            return Err(field_error("loss", "training needs a loss of the score vector (no cosine similarities)"));
        }
        if let Activation::LeakyRelu { slope } = self.activation {
            if !(0.0..=1.0).contains(&slope) {
                return Err(field_error("activation.slope", "must lie in [0, 1]"));
            }
        }
        match self.optimizer {
            Some(Optimizer::Sgd { lr }) | Some(Optimizer::Momentum { lr, .. }) if !(lr > 0.0 && lr.is_finite()) => {
                return Err(field_error("optimizer.lr", "must be positive"));
            }
            Some(Optimizer::Momentum { beta, .. }) if !(0.0..1.0).contains(&beta) => {
                return Err(field_error("optimizer.beta", "must lie in [0, 1)"));
            }
            _ => {}
        }
        if !(self.target_risk >= 0.0 && self.target_risk.is_finite()) {
            return Err(field_error("target_risk", "must be finite and nonnegative"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(field_error("delta", format!("must lie in (0, 1), got {}", self.delta)));
        }
        if self.seeds.is_empty() {
            return Err(field_error("seeds", "must list at least one seed"));
        }
        if self.modes.is_empty() {
            return Err(field_error("modes", "must list at least one mode"));
        }
        if let ThresholdPolicy::Fixed { r, b } = &self.thresholds {
            if !(*r >= 1.0 && r.is_finite()) {
                return Err(field_error("thresholds.r", "must be at least 1"));
            }
            if b.len() != self.depth + 1 {
                return Err(field_error("thresholds.b", format!("needs depth + 1 = {} values", self.depth + 1)));
            }
            if b.iter().any(|x| !(*x >= 1.0 && x.is_finite())) {
                return Err(field_error("thresholds.b", "every value must be at least 1"));
            }
        }
        if !(self.spectral_tol > 0.0 && self.spectral_tol < 1.0) {
            return Err(field_error("spectral_tol", "must lie in (0, 1)"));
        }
        Ok(())
    }

    pub fn optimizer(&self) -> Optimizer {
        self.optimizer.unwrap_or(match self.data {
            DataSource::Synthetic(_) => Optimizer::Sgd { lr: 0.01 },
            DataSource::Mnist(_) => Optimizer::Momentum { lr: 0.01, beta: 0.9 },
        })
    }

    pub fn batch_size(&self) -> Option<usize> {
        match (self.batch_size, &self.data) {
            (Some(b), _) => Some(b),
            (None, DataSource::Mnist(_)) => Some(128),
            (None, DataSource::Synthetic(_)) => None,
        }
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            loss: self.loss,
            optimizer: self.optimizer(),
            max_iters: self.max_iters,
            target_risk: self.target_risk,
            batch_size: self.batch_size(),
            eval_every: self.eval_every,
            seed: stream_seed(seed, 4),
        }
    }

    /// `d_0, width × depth`.
    pub fn widths(&self, input_dim: usize) -> Vec<usize> {
        let mut w = vec![input_dim];
        w.extend(std::iter::repeat(self.width).take(self.depth));
        w
    }

    pub fn sampling(&self) -> data::SamplingOptions {
        data::SamplingOptions {
            distinct_positive: self.distinct_positive,
        }
    }

    /// The full latent-class model before splitting.
    pub fn load_model(&self) -> Result<LatentClassModel, CliError> {
        match &self.data {
            DataSource::Synthetic(s) => {
                let spec = BlobSpec {
                    classes: s.classes,
                    dim: s.dim,
                    per_class: s.per_class,
                    sigma: s.sigma,
                    scale: s.scale,
                };
                Ok(data::gaussian_blobs(&spec, s.seed)?)
            }
            DataSource::Mnist(MnistPaths { images, labels }) => {
                let base = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from);
                let resolve = |p: &Path| match &base {
                    Some(dir) if p.is_relative() => dir.join(p),
                    _ => p.to_path_buf(),
                };
                Ok(data::load_idx(&resolve(images), &resolve(labels))?)
            }
        }
    }
}

/// Derives an independent per-purpose seed from a run seed.
pub fn stream_seed(seed: u64, purpose: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ purpose.wrapping_mul(0xD1B5_4A32_D192_ED03)
}
