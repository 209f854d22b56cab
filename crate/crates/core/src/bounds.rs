//! Norm and activation profiling of a network and evaluation of the
//! generalization bounds: four norm/parameter-counting bounds in full-constant
//! and truncated form, the two peeling baselines, and post-hoc shortcuts.

use serde::{Deserialize, Serialize};

use crate::capacity::{dudley, CoverBoundFn};
use crate::data::TupleDataset;
use crate::error::{invalid, Result};
use crate::linalg::{frobenius_norm, norm21_of_transpose, spectral_norm};
use crate::loss::{empirical_risk, LossKind};
use crate::net::NetworkParams;
use crate::par;

const SPECTRAL_MAX_ITER: usize = 100_000;

/// Weight statistics per layer `l = 1..L`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormProfile {
    /// `s_l`, spectral norms (or caps).
    pub spectral: Vec<f64>,
    /// `a_l = ‖(A_l − M_l)ᵀ‖_{2,1}`.
    pub displacement: Vec<f64>,
    pub frobenius: Vec<f64>,
    /// `ρ_l`.
    pub lipschitz: Vec<f64>,
    /// `d_0..d_L`.
    pub widths: Vec<usize>,
    /// `B_x`, bound on input norms.
    pub input_bound: f64,
}

impl NormProfile {
    pub fn depth(&self) -> usize {
        self.spectral.len()
    }

    /// `W = max_{l≥1} d_l`.
    pub fn max_width(&self) -> usize {
        self.widths[1..].iter().copied().max().unwrap_or(0)
    }

    /// `𝒲 = Σ_{l≥1} d_l`.
    pub fn total_width(&self) -> usize {
        self.widths[1..].iter().sum()
    }

    /// `∏ ρ_l s_l`.
    pub fn lipschitz_product(&self) -> f64 {
        self.lipschitz.iter().zip(&self.spectral).map(|(r, s)| r * s).product()
    }

    /// `[Σ (a_l / s_l)^{2/3}]^{3/2}`.
    pub fn displacement_ratio(&self) -> f64 {
        three_halves_sum(self.displacement.iter().zip(&self.spectral).map(|(a, s)| ratio(*a, *s)))
    }

    /// `B_x ∏_{m<l} ρ_m s_m` for `l = 0..=L`.
    pub fn chain_bounds(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.depth() + 1);
        let mut acc = self.input_bound;
        out.push(acc);
        for (r, s) in self.lipschitz.iter().zip(&self.spectral) {
            acc *= r * s;
            out.push(acc);
        }
        out
    }

    /// Elementwise maximum over profiles of same-shaped networks, giving one
    /// profile whose caps cover all of them.
    pub fn envelope(profiles: &[NormProfile]) -> Result<NormProfile> {
        let first = profiles.first().ok_or_else(|| crate::Error::InvalidInput("no profiles".into()))?;
        let mut out = first.clone();
        for p in &profiles[1..] {
            if p.widths != out.widths {
                return invalid("profiles come from networks of different shapes");
            }
            let up = |acc: &mut Vec<f64>, v: &[f64]| acc.iter_mut().zip(v).for_each(|(a, b)| *a = a.max(*b));
            up(&mut out.spectral, &p.spectral);
            up(&mut out.displacement, &p.displacement);
            up(&mut out.frobenius, &p.frobenius);
            up(&mut out.lipschitz, &p.lipschitz);
            out.input_bound = out.input_bound.max(p.input_bound);
        }
        Ok(out)
    }

    fn validate(&self) -> Result<()> {
        let l = self.depth();
        if l == 0
            || self.displacement.len() != l
            || self.frobenius.len() != l
            || self.lipschitz.len() != l
            || self.widths.len() != l + 1
        {
            return invalid("norm profile vectors have inconsistent lengths");
        }
        let finite = |v: &[f64]| v.iter().all(|x| x.is_finite() && *x >= 0.0);
        if !finite(&self.spectral) || !finite(&self.displacement) || !finite(&self.frobenius) || !finite(&self.lipschitz) {
            return invalid("norm profile entries must be finite and nonnegative");
        }
        if !(self.input_bound.is_finite() && self.input_bound >= 0.0) {
            return invalid("input bound must be finite and nonnegative");
        }
        Ok(())
    }
}

/// `b_l = max_x̃ ‖F^{1→l}(x̃)‖₂` for `l = 0..=L` over a sample set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationProfile {
    pub level_max: Vec<f64>,
}

impl ActivationProfile {
    /// `B̂_x = b_0`.
    pub fn input_max(&self) -> f64 {
        self.level_max[0]
    }

    /// `B̂_A = b_L`.
    pub fn output_max(&self) -> f64 {
        *self.level_max.last().expect("nonempty profile")
    }

    /// Elementwise maximum of two profiles of the same network.
    pub fn merge(&self, other: &Self) -> Result<Self> {
        if self.level_max.len() != other.level_max.len() {
            return invalid("profiles have different depths");
        }
        Ok(Self {
            level_max: self.level_max.iter().zip(&other.level_max).map(|(a, b)| a.max(*b)).collect(),
        })
    }
}

/// Weight norms of `params` and level-wise maximal norms over `samples`.
/// `B_x` is set to `b_0`.
pub fn profile(params: &NetworkParams, samples: &[&[f64]], tol: f64) -> Result<(NormProfile, ActivationProfile)> {
    if samples.is_empty() {
        return invalid("profiling needs at least one sample");
    }
    let ap = activation_profile(params, samples)?;
    let np = norm_profile(params, ap.input_max(), tol)?;
    Ok((np, ap))
}

pub fn norm_profile(params: &NetworkParams, input_bound: f64, tol: f64) -> Result<NormProfile> {
    let layers = params.layers();
    let spectral = par::map_items(layers, |l| spectral_norm(l.weight(), tol, SPECTRAL_MAX_ITER))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let displacement = layers
        .iter()
        .map(|l| Ok(norm21_of_transpose(&l.weight().sub(l.reference())?)))
        .collect::<Result<Vec<_>>>()?;
    Ok(NormProfile {
        spectral,
        displacement,
        frobenius: layers.iter().map(|l| frobenius_norm(l.weight())).collect(),
        lipschitz: params.lipschitz_constants(),
        widths: params.widths(),
        input_bound,
    })
}

pub fn activation_profile(params: &NetworkParams, samples: &[&[f64]]) -> Result<ActivationProfile> {
    if samples.is_empty() {
        return invalid("profiling needs at least one sample");
    }
    let depth = params.depth();
    let partial = par::map_chunks(samples, |chunk| -> Result<Vec<f64>> {
        let mut acc = vec![0.0f64; depth + 1];
        for x in chunk {
            let trace = params.forward_with_trace(x)?;
            for (a, n) in acc.iter_mut().zip(trace.level_norms()) {
                *a = a.max(n);
            }
        }
        Ok(acc)
    });
    let mut level_max = vec![0.0f64; depth + 1];
    for p in partial {
        for (a, n) in level_max.iter_mut().zip(p?) {
            *a = a.max(n);
        }
    }
    Ok(ActivationProfile { level_max })
}

/// How `B_{l−1}` is obtained in `R̄`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RbarMode {
    /// `B_{l−1} = B_x ∏_{m<l} ρ_m s_m`.
    #[default]
    PopulationChain,
    /// `B_{l−1} = b_{l−1}`.
    Empirical,
}

fn ratio(num: f64, den: f64) -> f64 {
    if num == 0.0 {
        0.0
    } else {
        num / den
    }
}

fn three_halves_sum(terms: impl Iterator<Item = f64>) -> f64 {
    terms.map(|t| t.powf(2.0 / 3.0)).sum::<f64>().powf(1.5)
}

/// Level bounds `B_0..B_L` under the chosen mode.
fn level_bounds(np: &NormProfile, ap: &ActivationProfile, mode: RbarMode) -> Result<Vec<f64>> {
    match mode {
        RbarMode::PopulationChain => Ok(np.chain_bounds()),
        RbarMode::Empirical => {
            if ap.level_max.len() != np.depth() + 1 {
                return invalid("activation profile depth differs from norm profile");
            }
            Ok(ap.level_max.clone())
        }
    }
}

/// `R̄ = [Σ_l (a_l B_{l−1} ρ_l ∏_{m>l} ρ_m s_m)^{2/3}]^{3/2}`.
pub fn rbar(np: &NormProfile, ap: &ActivationProfile, mode: RbarMode) -> Result<f64> {
    np.validate()?;
    let b = level_bounds(np, ap, mode)?;
    let l = np.depth();
    let mut tail = 1.0;
    let mut terms = vec![0.0; l];
    for i in (0..l).rev() {
        let rho_plus = np.lipschitz[i] * tail;
        terms[i] = if np.displacement[i] == 0.0 {
            0.0
        } else {
            np.displacement[i] * b[i] * rho_plus
        };
        tail *= np.lipschitz[i] * np.spectral[i];
    }
    Ok(three_halves_sum(terms.into_iter()))
}

/// `ρ̂_l = ρ_l · max_{u≥l} (∏_{m=l+1}^u s_m ρ_m) / b_u` for `l = 1..L`.
pub fn rho_hat(np: &NormProfile, b: &[f64]) -> Result<Vec<f64>> {
    let l = np.depth();
    if b.len() != l + 1 {
        return invalid(format!("expected {} level thresholds, got {}", l + 1, b.len()));
    }
    Ok((1..=l)
        .map(|layer| {
            let mut best: f64 = 0.0;
            let mut prod = 1.0;
            for u in layer..=l {
                if u > layer {
                    prod *= np.spectral[u - 1] * np.lipschitz[u - 1];
                }
                best = best.max(ratio(prod, b[u]));
            }
            np.lipschitz[layer - 1] * best
        })
        .collect())
}

/// `R̂ = [Σ_l (a_l b_{l−1} ρ̂_l)^{2/3}]^{3/2}`.
pub fn rhat(np: &NormProfile, b: &[f64]) -> Result<f64> {
    np.validate()?;
    let rh = rho_hat(np, b)?;
    Ok(three_halves_sum(
        (0..np.depth()).map(|i| if np.displacement[i] == 0.0 { 0.0 } else { np.displacement[i] * b[i] * rh[i] }),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundMode {
    /// Leading factor only: no confidence or `1/n` terms, no logs, `η = M = 1`.
    Truncated,
    /// All constants and log factors.
    Full,
}

impl BoundMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Truncated => "truncated",
            Self::Full => "full",
        }
    }
}

/// Sample size, tuple size and loss constants shared by the full-mode bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundSettings {
    pub n: usize,
    pub k: usize,
    pub eta: f64,
    /// Upper bound `M` on the loss.
    pub loss_bound: f64,
    pub delta: f64,
    pub chain: RbarMode,
}

impl BoundSettings {
    fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return invalid("n must be at least 1");
        }
        if self.k == 0 {
            return invalid("k must be at least 1");
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return invalid(format!("delta must lie in (0, 1), got {}", self.delta));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return invalid("eta must be positive");
        }
        if !(self.loss_bound > 0.0 && self.loss_bound.is_finite()) {
            return invalid("loss bound M must be positive");
        }
        Ok(())
    }

    fn nf(&self) -> f64 {
        self.n as f64
    }

    /// `3M sqrt(log(2/δ) / 2n)`.
    fn confidence(&self) -> f64 {
        3.0 * self.loss_bound * ((2.0 / self.delta).ln() / (2.0 * self.nf())).sqrt()
    }

    /// `n (k+2) W`.
    fn cover_count(&self, np: &NormProfile) -> f64 {
        self.nf() * (self.k + 2) as f64 * np.max_width() as f64
    }
}

fn clamp_log(x: f64) -> f64 {
    x.ln().max(0.0)
}

/// Basic bound. Truncated: `(B_x²/√n) ∏ρ²s² [Σ(a/s)^{2/3}]^{3/2}`.
pub fn bound_thm1(np: &NormProfile, ap: &ActivationProfile, s: &BoundSettings, mode: BoundMode) -> Result<f64> {
    np.validate()?;
    s.validate()?;
    let sqrt_n = s.nf().sqrt();
    match mode {
        BoundMode::Truncated => {
            let p = np.lipschitz_product();
            Ok(np.input_bound.powi(2) / sqrt_n * p * p * np.displacement_ratio())
        }
        BoundMode::Full => {
            let bl = *level_bounds(np, ap, s.chain)?.last().expect("levels");
            let r = rbar(np, ap, s.chain)?;
            let c = s.eta * bl * r;
            Ok(8.0 / s.nf()
                + 768.0 * c / sqrt_n
                    * ((44.0 * c * s.nf() + 7.0) * s.cover_count(np)).ln().sqrt()
                    * clamp_log(4.0 * s.nf() * s.eta * bl * bl)
                + s.confidence())
        }
    }
}

/// Last-layer augmented bound with threshold `R` and `I_R` violating tuples.
/// Truncated: `(R B_x/√n) ∏ρs [Σ(a/s)^{2/3}]^{3/2}`.
pub fn bound_thm2(
    np: &NormProfile,
    ap: &ActivationProfile,
    s: &BoundSettings,
    r: f64,
    violations: usize,
    mode: BoundMode,
) -> Result<f64> {
    np.validate()?;
    s.validate()?;
    if !(r >= 1.0 && r.is_finite()) {
        return invalid(format!("threshold R must be >= 1, got {r}"));
    }
    let sqrt_n = s.nf().sqrt();
    match mode {
        BoundMode::Truncated => Ok(r * np.input_bound / sqrt_n * np.lipschitz_product() * np.displacement_ratio()),
        BoundMode::Full => {
            let m = s.loss_bound;
            let c = s.eta * r * rbar(np, ap, s.chain)?;
            Ok(m * violations as f64 / s.nf()
                + s.confidence()
                + 8.0 * m / s.nf()
                + m * 1920.0 * c / sqrt_n
                    * ((110.0 * s.nf() * c + 7.0) * s.cover_count(np)).ln().sqrt()
                    * s.nf().ln())
        }
    }
}

/// All-layer augmented bound with thresholds `b_0..b_L` and `I_B` violating
/// tuples. Truncated: `(b_L²/√n) R̂`.
pub fn bound_thm3(np: &NormProfile, b: &[f64], s: &BoundSettings, violations: usize, mode: BoundMode) -> Result<f64> {
    np.validate()?;
    s.validate()?;
    let rh = rhat(np, b)?;
    let bl = *b.last().expect("checked by rhat");
    let sqrt_n = s.nf().sqrt();
    match mode {
        BoundMode::Truncated => Ok(bl * bl / sqrt_n * rh),
        BoundMode::Full => {
            let m = s.loss_bound;
            let c = s.eta * bl * bl * rh;
            Ok(m * violations as f64 / s.nf()
                + s.confidence()
                + m * (8.0 / s.nf()
                    + 1920.0 * 3f64.sqrt() * c / sqrt_n
                        * ((330.0 * c * s.nf() + 7.0) * s.cover_count(np)).ln().sqrt()
                        * s.nf().ln()))
        }
    }
}

/// Parameter-counting bound. Truncated: `sqrt(𝒲/n) log(1 + L n B_x² ∏ρ²s²)`.
pub fn bound_thm4(np: &NormProfile, s: &BoundSettings, mode: BoundMode) -> Result<f64> {
    np.validate()?;
    s.validate()?;
    let p = np.lipschitz_product();
    let size = (np.total_width() as f64 / s.nf()).sqrt();
    let inner = np.depth() as f64 * s.nf() * np.input_bound.powi(2) * p * p;
    match mode {
        BoundMode::Truncated => Ok(size * inner.ln_1p()),
        BoundMode::Full => Ok(s.confidence()
            + 8.0 / s.nf()
            + 24.0 * s.loss_bound * size * (24.0 * s.eta * inner).ln_1p().sqrt()),
    }
}

fn peeling_core(np: &NormProfile, n: usize) -> Result<f64> {
    np.validate()?;
    if n == 0 {
        return invalid("n must be at least 1");
    }
    let prod: f64 = np
        .lipschitz
        .iter()
        .zip(&np.spectral)
        .zip(&np.frobenius)
        .map(|((r, s), f)| r * s * f)
        .product();
    Ok(np.input_bound.powi(2) * (np.depth() as f64).sqrt() / (n as f64).sqrt() * prod)
}

/// `(B_x² sqrt(k d L)/√n) ∏ ρ_l s_l ‖A_l‖_F`; truncated only.
pub fn bound_arora(np: &NormProfile, n: usize, k: usize, d: usize) -> Result<f64> {
    Ok(peeling_core(np, n)? * ((k * d) as f64).sqrt())
}

/// `(B_x² sqrt(d L)/√n) ∏ ρ_l s_l ‖A_l‖_F`; truncated only.
pub fn bound_lei(np: &NormProfile, n: usize, d: usize) -> Result<f64> {
    Ok(peeling_core(np, n)? * (d as f64).sqrt())
}

/// Post-hoc summary statistics of a trained network.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosthocShortcuts {
    /// `∏ ‖A_l‖_σ`.
    pub spectral_product: f64,
    /// `∏ ‖A_l‖_F`.
    pub frobenius_product: f64,
    /// `[Σ (a_l / ‖A_l‖_σ)^{2/3}]^{3/2}`.
    pub displacement_ratio: f64,
    /// `R̂` with unit Lipschitz constants and empirical level maxima.
    pub layerwise: f64,
}

impl PosthocShortcuts {
    pub fn from_profiles(np: &NormProfile, ap: &ActivationProfile) -> Result<Self> {
        let unit = NormProfile {
            lipschitz: vec![1.0; np.depth()],
            ..np.clone()
        };
        Ok(Self {
            spectral_product: np.spectral.iter().product(),
            frobenius_product: np.frobenius.iter().product(),
            displacement_ratio: np.displacement_ratio(),
            layerwise: rhat(&unit, &ap.level_max)?,
        })
    }
}

pub fn posthoc_shortcuts(params: &NetworkParams, samples: &[&[f64]], tol: f64) -> Result<PosthocShortcuts> {
    let (np, ap) = profile(params, samples, tol)?;
    PosthocShortcuts::from_profiles(&np, &ap)
}

/// `risk(test) − risk(train)`.
pub fn gap_estimate(params: &NetworkParams, train: &TupleDataset, test: &TupleDataset, loss: &LossKind) -> Result<f64> {
    Ok(empirical_risk(params, test, loss)? - empirical_risk(params, train, loss)?)
}

/// Upper bound `M` on the loss over networks whose outputs have norm at most
/// `output_max`: the loss's own supremum when it has one, otherwise
/// `ℓ(0) + 4η·output_max²` (scores satisfy `|v_i| ≤ 2·output_max²`). For the
/// cosine-based similarities the similarity gaps are at most 2.
pub fn loss_bound_estimate(loss: &LossKind, k: usize, output_max: f64) -> f64 {
    if let Some(m) = loss.sup_bound() {
        return m;
    }
    let spread = if loss.is_score_based() { 4.0 * output_max * output_max } else { 2.0 };
    loss.value_at_zero(k) + loss.eta() * spread
}

/// Rademacher bound of the basic loss class through Dudley's integral with
/// `α = 1/n` and upper limit `4ηB_L²`, following the basic bound's proof.
pub fn thm1_dudley_rademacher(np: &NormProfile, ap: &ActivationProfile, s: &BoundSettings, quad_tol: f64) -> Result<f64> {
    np.validate()?;
    s.validate()?;
    let bl = *level_bounds(np, ap, s.chain)?.last().expect("levels");
    let r = rbar(np, ap, s.chain)?;
    let cover = CoverBoundFn::basic_loss_class(s.eta, bl, r, s.n, s.k, np.max_width());
    let alpha = 1.0 / s.nf();
    let upper = 4.0 * s.eta * bl * bl;
    if upper <= alpha {
        return Ok(4.0 * alpha);
    }
    dudley(alpha, upper, s.n, &cover, quad_tol)
}

/// One named bound value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundEntry {
    pub bound: String,
    pub mode: BoundMode,
    pub value: f64,
    pub params: EntryParams,
}

/// Constants a bound value was computed with.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EntryParams {
    pub eta: f64,
    #[serde(rename = "M")]
    pub loss_bound: f64,
    pub delta: f64,
    pub n: usize,
    pub k: usize,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub r: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub b: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub violations: Option<usize>,
}

impl EntryParams {
    fn from_settings(s: &BoundSettings) -> Self {
        Self {
            eta: s.eta,
            loss_bound: s.loss_bound,
            delta: s.delta,
            n: s.n,
            k: s.k,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub entries: Vec<BoundEntry>,
    pub gap_estimate: Option<f64>,
    pub posthoc: PosthocShortcuts,
}

impl BoundReport {
    pub fn get(&self, bound: &str, mode: BoundMode) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.bound == bound && e.mode == mode)
            .map(|e| e.value)
    }
}

/// Augmentation thresholds: empirical maxima, floored at 1, or fixed values.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum ThresholdPolicy {
    #[default]
    EmpiricalMax,
    Fixed { r: f64, b: Vec<f64> },
}

/// Everything needed to evaluate all bounds for one network.
#[derive(Debug, Clone)]
pub struct ReportInputs<'a> {
    pub params: &'a NetworkParams,
    pub train: &'a TupleDataset,
    /// Extra samples whose norms enter `B_x` and `B̂_A` (e.g. test tuples).
    pub extra: Option<&'a TupleDataset>,
    pub loss: LossKind,
    pub delta: f64,
    pub chain: RbarMode,
    pub thresholds: ThresholdPolicy,
    pub spectral_tol: f64,
}

/// Evaluates every bound in both modes (baselines truncated only).
pub fn bound_report(inp: &ReportInputs<'_>) -> Result<BoundReport> {
    let params = inp.params;
    let ds = inp.train;
    if ds.is_empty() {
        return invalid("bounds need a nonempty training set");
    }
    let train_samples = crate::data::auxiliary_s2(ds);
    let mut ap = activation_profile(params, &train_samples)?;
    if let Some(extra) = inp.extra {
        if !extra.is_empty() {
            ap = ap.merge(&activation_profile(params, &crate::data::auxiliary_s2(extra))?)?;
        }
    }
    let np = norm_profile(params, ap.input_max(), inp.spectral_tol)?;
    let train_ap = activation_profile(params, &train_samples)?;

    let (r, b) = match &inp.thresholds {
        ThresholdPolicy::EmpiricalMax => (
            train_ap.output_max().max(1.0),
            train_ap.level_max.iter().map(|x| x.max(1.0)).collect::<Vec<_>>(),
        ),
        ThresholdPolicy::Fixed { r, b } => (*r, b.clone()),
    };
    let i_r = crate::loss::violations_r(params, ds, r)?;
    let i_b = crate::loss::violations_b(params, ds, &b)?;

    let (n, k) = (ds.n(), ds.k());
    let full = BoundSettings {
        n,
        k,
        eta: inp.loss.eta(),
        loss_bound: loss_bound_estimate(&inp.loss, k, ap.output_max()),
        delta: inp.delta,
        chain: inp.chain,
    };
    let trunc = BoundSettings {
        eta: 1.0,
        loss_bound: 1.0,
        ..full
    };
    let d = np.widths[np.depth()];

    let mut entries = Vec::new();
    let mut push = |bound: &str, mode: BoundMode, value: f64, params: EntryParams| {
        entries.push(BoundEntry {
            bound: bound.to_string(),
            mode,
            value,
            params,
        });
    };
    for (mode, s) in [(BoundMode::Truncated, &trunc), (BoundMode::Full, &full)] {
        let plain = EntryParams::from_settings(s);
        let with_r = EntryParams {
            r: Some(r),
            violations: Some(i_r),
            ..plain.clone()
        };
        let with_b = EntryParams {
            b: Some(b.clone()),
            violations: Some(i_b),
            ..plain.clone()
        };
        push("thm1", mode, bound_thm1(&np, &ap, s, mode)?, plain.clone());
        push("thm2", mode, bound_thm2(&np, &ap, s, r, i_r, mode)?, with_r);
        push("thm3", mode, bound_thm3(&np, &b, s, i_b, mode)?, with_b);
        push("thm4", mode, bound_thm4(&np, s, mode)?, plain);
    }
    push("arora", BoundMode::Truncated, bound_arora(&np, n, k, d)?, EntryParams::from_settings(&trunc));
    push("lei", BoundMode::Truncated, bound_lei(&np, n, d)?, EntryParams::from_settings(&trunc));

    let gap = match inp.extra {
        Some(test) if !test.is_empty() => Some(gap_estimate(params, ds, test, &inp.loss)?),
        _ => None,
    };
    Ok(BoundReport {
        entries,
        gap_estimate: gap,
        posthoc: PosthocShortcuts::from_profiles(&np, &ap)?,
    })
}
