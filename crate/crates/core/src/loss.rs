//! Contrastive losses over the score vector `v_i = f(x)ᵀ(f(x⁺) − f(x_i⁻))`,
//! the cross-entropy style similarity family, soft indicators, the max-form
//! loss augmentation with its violation counters, and the empirical risk.

use serde::{Deserialize, Serialize};

use crate::data::{ContrastiveTuple, TupleDataset};
use crate::error::{domain, invalid, Result};
use crate::linalg::{dot, l2_norm};
use crate::net::NetworkParams;
use crate::par;

/// Similarity measures for the cross-entropy style contrastive loss.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Similarity {
    /// `f(x₁)ᵀf(x₂)`; the resulting loss is the logistic loss.
    NPair,
    /// `τ⁻¹ f(x₁)ᵀf(x₂)`.
    #[serde(rename = "infonce")]
    InfoNce { tau: f64 },
    /// `s·cos(m + cos∠(f(x₁), f(x₂)))`.
    #[serde(rename = "arcface")]
    ArcFace { scale: f64, margin: f64 },
    /// `τ⁻¹ cos∠(f(x₁), f(x₂))`.
    #[serde(rename = "simclr")]
    SimClr { tau: f64 },
}

impl Similarity {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::NPair => Ok(()),
            Self::InfoNce { tau } | Self::SimClr { tau } if tau > 0.0 && tau.is_finite() => Ok(()),
            Self::ArcFace { scale, margin } if scale > 0.0 && margin >= 0.0 && margin.is_finite() => Ok(()),
            _ => invalid(format!("similarity parameters must be positive: {self:?}")),
        }
    }

    pub fn eval(&self, a: &[f64], b: &[f64]) -> Result<f64> {
        match *self {
            Self::NPair => Ok(dot(a, b)),
            Self::InfoNce { tau } => Ok(dot(a, b) / tau),
            Self::ArcFace { scale, margin } => Ok(scale * (margin + cosine(a, b)?).cos()),
            Self::SimClr { tau } => Ok(cosine(a, b)? / tau),
        }
    }

    /// True when the similarity depends on representations only through
    /// inner products, so the loss is a function of the score vector.
    pub fn is_inner_product(&self) -> bool {
        matches!(self, Self::NPair | Self::InfoNce { .. })
    }
}

fn cosine(a: &[f64], b: &[f64]) -> Result<f64> {
    let (na, nb) = (l2_norm(a), l2_norm(b));
    if na == 0.0 || nb == 0.0 {
        return domain("cosine similarity of a zero vector");
    }
    Ok(dot(a, b) / (na * nb))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case")]
pub enum LossKind {
    Hinge,
    Logistic,
    Ramp { gamma: f64 },
    #[serde(rename = "infonce")]
    InfoNce { tau: f64 },
    CrlCe { similarity: Similarity },
}

impl LossKind {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Hinge => "hinge",
            Self::Logistic => "logistic",
            Self::Ramp { .. } => "ramp",
            Self::InfoNce { .. } => "infonce",
            Self::CrlCe { .. } => "crl_ce",
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Ramp { gamma } if !(gamma > 0.0 && gamma.is_finite()) => invalid("ramp gamma must be positive"),
            Self::InfoNce { tau } if !(tau > 0.0 && tau.is_finite()) => invalid("infonce tau must be positive"),
            Self::CrlCe { similarity } => similarity.validate(),
            _ => Ok(()),
        }
    }

    /// ℓ∞-Lipschitz constant. For the cosine-based similarities this is with
    /// respect to the vector of similarity gaps `φ(x,x⁺) − φ(x,x_i⁻)` measured
    /// in cosine units.
    pub fn eta(&self) -> f64 {
        match *self {
            Self::Hinge | Self::Logistic => 1.0,
            Self::Ramp { gamma } => 1.0 / gamma,
            Self::InfoNce { tau } => 1.0 / tau,
            Self::CrlCe { similarity } => match similarity {
                Similarity::NPair => 1.0,
                Similarity::InfoNce { tau } | Similarity::SimClr { tau } => 1.0 / tau,
                Similarity::ArcFace { scale, .. } => scale,
            },
        }
    }

    /// A finite supremum of the loss, when one exists independent of the network.
    pub fn sup_bound(&self) -> Option<f64> {
        match self {
            Self::Ramp { .. } => Some(1.0),
            _ => None,
        }
    }

    /// Loss at the all-zero score vector (all similarities equal).
    pub fn value_at_zero(&self, k: usize) -> f64 {
        match self {
            Self::Hinge | Self::Ramp { .. } => 1.0,
            _ => (1.0 + k as f64).ln(),
        }
    }

    pub fn is_score_based(&self) -> bool {
        match self {
            Self::CrlCe { similarity } => similarity.is_inner_product(),
            _ => true,
        }
    }

    /// Loss of a score vector. Errors for cosine-based similarities, whose
    /// value is not a function of the scores.
    pub fn value(&self, v: &[f64]) -> Result<f64> {
        match *self {
            Self::Hinge => Ok(hinge(v)),
            Self::Logistic | Self::CrlCe { similarity: Similarity::NPair } => Ok(logistic(v)),
            Self::Ramp { gamma } => ramp(v, gamma),
            Self::InfoNce { tau } | Self::CrlCe { similarity: Similarity::InfoNce { tau } } => Ok(infonce(v, tau)),
            Self::CrlCe { .. } => invalid("cosine-based crl_ce is not a function of the score vector"),
        }
    }

    /// (Sub)gradient with respect to the score vector.
    pub fn gradient(&self, v: &[f64]) -> Result<Vec<f64>> {
        match *self {
            Self::Hinge => Ok(hinge_grad(v)),
            Self::Logistic | Self::CrlCe { similarity: Similarity::NPair } => Ok(logistic_grad(v)),
            Self::Ramp { gamma } => {
                let mut g = vec![0.0; v.len()];
                let (i, r) = worst_margin(v);
                if r > -gamma && r < 0.0 {
                    g[i] = -1.0 / gamma;
                }
                Ok(g)
            }
            Self::InfoNce { tau } | Self::CrlCe { similarity: Similarity::InfoNce { tau } } => {
                let scaled: Vec<f64> = v.iter().map(|x| x / tau).collect();
                Ok(logistic_grad(&scaled).into_iter().map(|g| g / tau).collect())
            }
            Self::CrlCe { .. } => invalid("cosine-based crl_ce has no score-space gradient"),
        }
    }

    /// Loss on one tuple under `params`.
    pub fn tuple_loss(&self, params: &NetworkParams, tuple: &ContrastiveTuple) -> Result<f64> {
        match *self {
            Self::CrlCe { similarity } if !similarity.is_inner_product() => {
                let f = params.forward(&tuple.anchor)?;
                let fp = params.forward(&tuple.positive)?;
                let pos = similarity.eval(&f, &fp)?;
                let negs = tuple
                    .negatives
                    .iter()
                    .map(|x| similarity.eval(&f, &params.forward(x)?))
                    .collect::<Result<Vec<_>>>()?;
                Ok(crl_ce(pos, &negs))
            }
            _ => self.value(&scores(params, tuple)?),
        }
    }
}

/// `v_i = f(x)ᵀ(f(x⁺) − f(x_i⁻))` for `i = 1..k`.
pub fn scores(params: &NetworkParams, tuple: &ContrastiveTuple) -> Result<Vec<f64>> {
    let f = params.forward(&tuple.anchor)?;
    let fp = params.forward(&tuple.positive)?;
    let base = dot(&f, &fp);
    tuple
        .negatives
        .iter()
        .map(|x| Ok(base - dot(&f, &params.forward(x)?)))
        .collect()
}

/// Index and value of `max_i(−v_i)`; first index on ties.
fn worst_margin(v: &[f64]) -> (usize, f64) {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, x) in v.iter().enumerate() {
        if -x > best.1 {
            best = (i, -x);
        }
    }
    best
}

pub fn hinge(v: &[f64]) -> f64 {
    (1.0 + worst_margin(v).1).max(0.0)
}

fn hinge_grad(v: &[f64]) -> Vec<f64> {
    let mut g = vec![0.0; v.len()];
    let (i, r) = worst_margin(v);
    if 1.0 + r > 0.0 {
        g[i] = -1.0;
    }
    g
}

/// `log(1 + Σ exp(−v_i))` via a shifted log-sum-exp.
pub fn logistic(v: &[f64]) -> f64 {
    let m = v.iter().fold(0.0_f64, |m, x| m.max(-x));
    let s = (-m).exp() + v.iter().map(|x| (-x - m).exp()).sum::<f64>();
    m + s.ln()
}

fn logistic_grad(v: &[f64]) -> Vec<f64> {
    let m = v.iter().fold(0.0_f64, |m, x| m.max(-x));
    let terms: Vec<f64> = v.iter().map(|x| (-x - m).exp()).collect();
    let denom = (-m).exp() + terms.iter().sum::<f64>();
    terms.into_iter().map(|t| -t / denom).collect()
}

/// Ramp loss: the soft indicator with margin `γ` applied to the hinge's inner
/// margin `max_i(−v_i)`. Equals 1 when some score is negative and 0 when every
/// score exceeds `γ`.
pub fn ramp(v: &[f64], gamma: f64) -> Result<f64> {
    soft_indicator(worst_margin(v).1, gamma)
}

/// `logistic(v / τ)`.
pub fn infonce(v: &[f64], tau: f64) -> f64 {
    let scaled: Vec<f64> = v.iter().map(|x| x / tau).collect();
    logistic(&scaled)
}

/// `log(1 + Σ exp(φ⁻_i − φ⁺))`.
pub fn crl_ce(positive: f64, negatives: &[f64]) -> f64 {
    let gaps: Vec<f64> = negatives.iter().map(|n| positive - n).collect();
    logistic(&gaps)
}

/// `λ_γ(r)`: 0 below `−γ`, linear on `[−γ, 0]`, 1 above 0.
pub fn soft_indicator(r: f64, gamma: f64) -> Result<f64> {
    if !(gamma > 0.0) {
        return invalid("soft indicator margin must be positive");
    }
    Ok(if r < -gamma {
        0.0
    } else if r > 0.0 {
        1.0
    } else {
        1.0 + r / gamma
    })
}

/// Norm filter with threshold `t`: 0 up to `t`, `(norm − t)/t` on `[t, 2t]`,
/// 1 beyond `2t`. This is `λ_t(norm − 2t)`.
pub fn norm_filter(norm: f64, threshold: f64) -> Result<f64> {
    soft_indicator(norm - 2.0 * threshold, threshold)
}

/// Product-form augmentation `1 + (ℓ − 1)∏λ_l`. Kept as a reference formula;
/// bounds use the max form.
pub fn product_augmented(base: f64, indicators: &[f64]) -> f64 {
    1.0 + (base - 1.0) * indicators.iter().product::<f64>()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum AugmentationSpec {
    None,
    LastLayer { r: f64 },
    AllLayers { b: Vec<f64> },
}

impl AugmentationSpec {
    pub fn validate(&self, depth: usize) -> Result<()> {
        match self {
            Self::None => Ok(()),
            Self::LastLayer { r } => check_threshold(*r),
            Self::AllLayers { b } => check_thresholds(b, depth),
        }
    }
}

fn check_threshold(t: f64) -> Result<()> {
    if t >= 1.0 && t.is_finite() {
        Ok(())
    } else {
        invalid(format!("augmentation threshold {t} must be >= 1"))
    }
}

fn check_thresholds(b: &[f64], depth: usize) -> Result<()> {
    if b.len() != depth + 1 {
        return invalid(format!("expected {} thresholds b_0..b_L, got {}", depth + 1, b.len()));
    }
    b.iter().try_for_each(|t| check_threshold(*t))
}

fn check_base(base: f64) -> Result<()> {
    if base.is_finite() && base >= 0.0 {
        Ok(())
    } else {
        invalid(format!("base loss {base} must be finite and nonnegative"))
    }
}

/// `max(base, max_x̃ filter_R(‖F(x̃)‖))` with `base` already divided by `M`.
pub fn augmented_last(base: f64, params: &NetworkParams, tuple: &ContrastiveTuple, r: f64) -> Result<f64> {
    check_base(base)?;
    check_threshold(r)?;
    let mut out = base;
    for x in tuple.inputs() {
        out = out.max(norm_filter(l2_norm(&params.forward(x)?), r)?);
    }
    Ok(out)
}

/// `max(base, max_{l≥1} max_x̃ filter_{b_l}(‖F^{1→l}(x̃)‖))`; `b` holds `b_0..b_L`.
pub fn augmented_all(base: f64, params: &NetworkParams, tuple: &ContrastiveTuple, b: &[f64]) -> Result<f64> {
    check_base(base)?;
    check_thresholds(b, params.depth())?;
    let mut out = base;
    for x in tuple.inputs() {
        let trace = params.forward_with_trace(x)?;
        for (l, level) in trace.levels().iter().enumerate().skip(1) {
            out = out.max(norm_filter(l2_norm(level), b[l])?);
        }
    }
    Ok(out)
}

/// Number of tuples with some input whose output norm exceeds `r`.
pub fn violations_r(params: &NetworkParams, ds: &TupleDataset, r: f64) -> Result<usize> {
    let flags = par::map_items(ds.tuples(), |t| -> Result<bool> {
        for x in t.inputs() {
            if l2_norm(&params.forward(x)?) > r {
                return Ok(true);
            }
        }
        Ok(false)
    });
    flags.into_iter().try_fold(0, |acc, f| Ok(acc + usize::from(f?)))
}

/// Number of tuples with some input and some layer `l ≥ 1` where
/// `‖F^{1→l}(x̃)‖ > b_l`.
pub fn violations_b(params: &NetworkParams, ds: &TupleDataset, b: &[f64]) -> Result<usize> {
    if b.len() != params.depth() + 1 {
        return invalid("threshold vector must have L+1 entries");
    }
    let flags = par::map_items(ds.tuples(), |t| -> Result<bool> {
        for x in t.inputs() {
            let trace = params.forward_with_trace(x)?;
            if trace.levels().iter().enumerate().skip(1).any(|(l, h)| l2_norm(h) > b[l]) {
                return Ok(true);
            }
        }
        Ok(false)
    });
    flags.into_iter().try_fold(0, |acc, f| Ok(acc + usize::from(f?)))
}

/// Mean loss over the tuples.
pub fn empirical_risk(params: &NetworkParams, ds: &TupleDataset, loss: &LossKind) -> Result<f64> {
    let values = per_tuple_losses(params, ds, loss)?;
    Ok(par::pairwise_sum(&values) / ds.n() as f64)
}

pub fn per_tuple_losses(params: &NetworkParams, ds: &TupleDataset, loss: &LossKind) -> Result<Vec<f64>> {
    if ds.is_empty() {
        return invalid("empirical risk of an empty dataset");
    }
    loss.validate()?;
    par::map_items(ds.tuples(), |t| loss.tuple_loss(params, t))
        .into_iter()
        .collect()
}

/// Mean of the augmented loss, with the base loss normalized by `m`.
pub fn augmented_empirical_risk(
    params: &NetworkParams,
    ds: &TupleDataset,
    loss: &LossKind,
    m: f64,
    spec: &AugmentationSpec,
) -> Result<f64> {
    if !(m > 0.0) {
        return invalid("loss bound M must be positive");
    }
    spec.validate(params.depth())?;
    let base = per_tuple_losses(params, ds, loss)?;
    let values = par::map_items(&ds.tuples().iter().zip(&base).collect::<Vec<_>>(), |(t, l)| {
        let b = *l / m;
        match spec {
            AugmentationSpec::None => Ok(b),
            AugmentationSpec::LastLayer { r } => augmented_last(b, params, t, *r),
            AugmentationSpec::AllLayers { b: th } => augmented_all(b, params, t, th),
        }
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(par::pairwise_sum(&values) / ds.n() as f64)
}
