//! Log-covering-number formulas, Maurey sparsification, Dudley's entropy
//! integral and a Monte-Carlo Rademacher estimate for finite function sets.

use std::fmt;
use std::sync::Arc;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng;

use crate::error::{domain, invalid, Error, Result};

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        domain(format!("{name} must be positive and finite, got {x}"))
    }
}

/// `36(p−1)a²b²/ε² · log((8ab/ε + 7) n)`, linear classes with `ℓ_p` inputs.
pub fn zhang_cover_log(a: f64, b: f64, p: f64, eps: f64, n: usize) -> Result<f64> {
    positive("a", a)?;
    positive("b", b)?;
    positive("eps", eps)?;
    if !(p >= 2.0 && p.is_finite()) {
        return domain(format!("p must be at least 2, got {p}"));
    }
    if n == 0 {
        return domain("n must be at least 1");
    }
    let ab = a * b;
    Ok(36.0 * (p - 1.0) * ab * ab / (eps * eps) * ((8.0 * ab / eps + 7.0) * n as f64).ln())
}

/// `64a²b²/ε² · log((11ab/ε + 7) n m)`, vector-valued linear maps under `L_{∞,2}`.
pub fn l21_cover_log(a: f64, b: f64, eps: f64, n: usize, m: usize) -> Result<f64> {
    positive("a", a)?;
    positive("b", b)?;
    positive("eps", eps)?;
    if n == 0 {
        return domain("n must be at least 1");
    }
    if m < 2 {
        return domain(format!("output dimension m must be at least 2, got {m}"));
    }
    let ab = a * b;
    Ok(64.0 * ab * ab / (eps * eps) * ((11.0 * ab / eps + 7.0) * n as f64 * m as f64).ln())
}

/// `⌈β²/ε²⌉ log(2d)`, the Maurey cover of an `ℓ1` ball.
pub fn l1ball_cover_log(beta: f64, eps: f64, d: usize) -> Result<f64> {
    positive("beta", beta)?;
    positive("eps", eps)?;
    if d == 0 {
        return domain("d must be at least 1");
    }
    Ok((beta * beta / (eps * eps)).ceil() * (2.0 * d as f64).ln())
}

/// `d · log(1 + 3κ/ε)`, a `d`-dimensional ball of radius `κ`.
pub fn ball_cover_log(kappa: f64, eps: f64, d: usize) -> Result<f64> {
    if !(kappa >= 0.0 && kappa.is_finite()) {
        return domain(format!("kappa must be nonnegative, got {kappa}"));
    }
    positive("eps", eps)?;
    Ok(d as f64 * (1.0 + 3.0 * kappa / eps).ln())
}

/// A log-covering-number bound as a function of the scale `ε`.
#[derive(Clone)]
pub struct CoverBoundFn {
    f: Arc<dyn Fn(f64) -> f64 + Send + Sync>,
    pub valid_from: f64,
    pub valid_to: f64,
    pub source: String,
}

impl fmt::Debug for CoverBoundFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CoverBoundFn")
            .field("source", &self.source)
            .field("valid_from", &self.valid_from)
            .field("valid_to", &self.valid_to)
            .finish()
    }
}

impl CoverBoundFn {
    pub fn new(source: impl Into<String>, f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            f: Arc::new(f),
            valid_from: 0.0,
            valid_to: f64::INFINITY,
            source: source.into(),
        }
    }

    pub fn eval(&self, eps: f64) -> f64 {
        (self.f)(eps)
    }

    pub fn zero() -> Self {
        Self::new("zero", |_| 0.0)
    }

    /// `C / ε²`.
    pub fn inverse_square(c: f64) -> Self {
        Self::new("inverse_square", move |eps| c / (eps * eps))
    }

    /// `c²/ε² · log((c·r/ε + 7) · count)` with `c` the Lipschitz-type
    /// scale; the shared shape of the loss-class covers below.
    fn network_shape(source: &str, sq_coef: f64, lin_coef: f64, count: f64) -> Self {
        Self::new(source, move |eps| {
            let inner = (lin_coef / eps + 7.0) * count;
            (sq_coef / (eps * eps) * inner.ln()).max(0.0)
        })
    }

    /// Loss class of the basic bound:
    /// `1024η²B_L²R̄²/ε² · log((44ηB_L R̄/ε + 7) n(k+2)W)`.
    pub fn basic_loss_class(eta: f64, output_bound: f64, rbar: f64, n: usize, k: usize, max_width: usize) -> Self {
        let s = eta * output_bound * rbar;
        Self::network_shape("basic_loss_class", 1024.0 * s * s, 44.0 * s, (n * (k + 2) * max_width) as f64)
    }

    /// Last-layer augmented class: `6400η²R²R̄²/ε² · log((110ηR R̄/ε + 7) n(k+2)W)`.
    pub fn last_layer_augmented(eta: f64, r: f64, rbar: f64, n: usize, k: usize, max_width: usize) -> Self {
        let s = eta * r * rbar;
        Self::network_shape("last_layer_augmented", 6400.0 * s * s, 110.0 * s, (n * (k + 2) * max_width) as f64)
    }

    /// All-layer augmented class: `19200η²b_L⁴R̂²/ε² · log((330ηb_L²R̂/ε + 7) n(k+2)W)`.
    pub fn all_layer_augmented(eta: f64, b_last: f64, rhat: f64, n: usize, k: usize, max_width: usize) -> Self {
        let s = eta * b_last * b_last * rhat;
        Self::network_shape("all_layer_augmented", 19200.0 * s * s, 330.0 * s, (n * (k + 2) * max_width) as f64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MaureyResult {
    pub approx: Vec<f64>,
    /// Signed atom counts: `approx_i = β · counts_i / k`.
    pub counts: Vec<i64>,
    /// `‖a − ā‖₂²`.
    pub certificate: f64,
    pub tries: usize,
}

/// Empirical mean of `k` atoms drawn from `{±β e_i, 0}` with probabilities
/// `|a_i|/β` and leftover mass on 0, redrawn until `‖a − ā‖₂² ≤ β²/k`.
pub fn maurey_sparsify<R: Rng + ?Sized>(
    a: &[f64],
    beta: f64,
    k: usize,
    rng: &mut R,
    max_tries: usize,
) -> Result<MaureyResult> {
    if k == 0 {
        return invalid("k must be at least 1");
    }
    if max_tries == 0 {
        return invalid("max_tries must be at least 1");
    }
    if !(beta >= 0.0 && beta.is_finite()) || a.iter().any(|x| !x.is_finite()) {
        return invalid("beta and the vector must be finite, beta nonnegative");
    }
    let l1: f64 = a.iter().map(|x| x.abs()).sum();
    if l1 > beta * (1.0 + 1e-12) {
        return invalid(format!("‖a‖₁ = {l1} exceeds the radius {beta}"));
    }
    let d = a.len();
    if beta == 0.0 || l1 == 0.0 {
        return Ok(MaureyResult {
            approx: vec![0.0; d],
            counts: vec![0; d],
            certificate: 0.0,
            tries: 1,
        });
    }

    // Atoms 0..d are +e_i, d..2d are −e_i, 2d is the origin.
    let mut weights: Vec<f64> = a.iter().map(|x| x.max(0.0)).collect();
    weights.extend(a.iter().map(|x| (-x).max(0.0)));
    weights.push((beta - l1).max(0.0));
    let sampler = WeightedIndex::new(&weights).map_err(|e| Error::InvalidInput(e.to_string()))?;
    let target = beta * beta / k as f64;

    for tries in 1..=max_tries {
        let mut counts = vec![0i64; d];
        for _ in 0..k {
            let atom = sampler.sample(rng);
            if atom < d {
                counts[atom] += 1;
            } else if atom < 2 * d {
                counts[atom - d] -= 1;
            }
        }
        let approx: Vec<f64> = counts.iter().map(|c| beta * *c as f64 / k as f64).collect();
        let certificate: f64 = a.iter().zip(&approx).map(|(x, y)| (x - y) * (x - y)).sum();
        if certificate <= target {
            return Ok(MaureyResult {
                approx,
                counts,
                certificate,
                tries,
            });
        }
    }
    Err(Error::RetryExhausted { tries: max_tries })
}

/// `4α + (12/√n) ∫_α^B sqrt(cover(ε)) dε`.
///
/// The integral is taken over `t = ln ε`, where the typical `ε⁻²` covers
/// give a smooth, slowly varying integrand.
pub fn dudley(alpha: f64, b_sup: f64, n: usize, cover: &CoverBoundFn, quad_tol: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < b_sup && b_sup.is_finite()) {
        return domain(format!("need 0 < alpha < b_sup, got alpha={alpha}, b_sup={b_sup}"));
    }
    if n == 0 {
        return domain("n must be at least 1");
    }
    if !(quad_tol > 0.0) {
        return domain("quadrature tolerance must be positive");
    }
    let integrand = |t: f64| -> Result<f64> {
        let eps = t.exp();
        let c = cover.eval(eps);
        if !c.is_finite() || c < 0.0 {
            return domain(format!("cover bound is {c} at eps = {eps}"));
        }
        Ok(c.sqrt() * eps)
    };
    let integral = adaptive_simpson(integrand, alpha.ln(), b_sup.ln(), quad_tol)?;
    Ok(4.0 * alpha + 12.0 / (n as f64).sqrt() * integral)
}

/// Adaptive Simpson on `[a, b]` to absolute tolerance `tol`.
pub fn adaptive_simpson<F>(f: F, a: f64, b: f64, tol: f64) -> Result<f64>
where
    F: Fn(f64) -> Result<f64>,
{
    const MAX_DEPTH: u32 = 48;

    struct Panel {
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
    }

    fn simpson(p: &Panel) -> f64 {
        (p.b - p.a) / 6.0 * (p.fa + 4.0 * p.fm + p.fb)
    }

    fn recurse<F: Fn(f64) -> Result<f64>>(f: &F, p: Panel, tol: f64, depth: u32) -> Result<f64> {
        let m = 0.5 * (p.a + p.b);
        let left = Panel {
            a: p.a,
            b: m,
            fa: p.fa,
            fm: f(0.5 * (p.a + m))?,
            fb: p.fm,
            whole: 0.0,
        };
        let right = Panel {
            a: m,
            b: p.b,
            fa: p.fm,
            fm: f(0.5 * (m + p.b))?,
            fb: p.fb,
            whole: 0.0,
        };
        let (sl, sr) = (simpson(&left), simpson(&right));
        let delta = sl + sr - p.whole;
        if depth >= MAX_DEPTH || delta.abs() <= 15.0 * tol {
            return Ok(sl + sr + delta / 15.0);
        }
        let left = Panel { whole: sl, ..left };
        let right = Panel { whole: sr, ..right };
        Ok(recurse(f, left, 0.5 * tol, depth + 1)? + recurse(f, right, 0.5 * tol, depth + 1)?)
    }

    if a == b {
        return Ok(0.0);
    }
    let mut root = Panel {
        a,
        b,
        fa: f(a)?,
        fm: f(0.5 * (a + b))?,
        fb: f(b)?,
        whole: 0.0,
    };
    root.whole = simpson(&root);
    recurse(&f, root, tol, 0)
}

/// Monte-Carlo estimate of `E_σ max_f (1/n) Σ_j σ_j g_f(z_j)` for a finite
/// set of functions, given as rows of evaluations. Returns the estimate and
/// its standard error.
pub fn rademacher_mc<R: Rng + ?Sized>(values: &[Vec<f64>], draws: usize, rng: &mut R) -> Result<(f64, f64)> {
    if values.is_empty() {
        return invalid("need at least one function");
    }
    let n = values[0].len();
    if n == 0 || values.iter().any(|row| row.len() != n) {
        return invalid("every function needs the same, nonzero number of evaluations");
    }
    if draws < 2 {
        return invalid("need at least two draws for a standard error");
    }
    let mut samples = Vec::with_capacity(draws);
    let mut sigma = vec![0.0; n];
    for _ in 0..draws {
        for s in sigma.iter_mut() {
            *s = if rng.gen::<bool>() { 1.0 } else { -1.0 };
        }
        let best = values
            .iter()
            .map(|row| crate::linalg::dot(row, &sigma) / n as f64)
            .fold(f64::NEG_INFINITY, f64::max);
        samples.push(best);
    }
    let mean = crate::pairwise_sum(&samples) / draws as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64;
    Ok((mean, (var / draws as f64).sqrt()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn formula_examples() {
        assert!((zhang_cover_log(1.0, 1.0, 2.0, 1.0, 1).unwrap() - 36.0 * 15f64.ln()).abs() < 1e-12);
        assert!(zhang_cover_log(1.0, 1.0, 2.0, 1e9, 1).unwrap() < 1e-12);
        assert!(zhang_cover_log(1.0, 1.0, 1.5, 1.0, 1).is_err());
        assert!((l21_cover_log(1.0, 1.0, 1.0, 1, 2).unwrap() - 64.0 * 36f64.ln()).abs() < 1e-12);
        assert!(l21_cover_log(1.0, 1.0, 1.0, 1, 1).is_err());
        assert!((l1ball_cover_log(2.0, 2.0, 5).unwrap() - 10f64.ln()).abs() < 1e-15);
        assert!((l1ball_cover_log(1.0, 0.5, 4).unwrap() - 4.0 * 8f64.ln()).abs() < 1e-12);
        assert_eq!(ball_cover_log(0.0, 1.0, 3).unwrap(), 0.0);
        assert!((ball_cover_log(0.5, 0.5, 2).unwrap() - 2.0 * 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn maurey_vertex_is_exact() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let r = maurey_sparsify(&[2.0, 0.0, 0.0], 2.0, 5, &mut rng, 10).unwrap();
        assert_eq!(r.approx, vec![2.0, 0.0, 0.0]);
        assert_eq!(r.certificate, 0.0);
        let r = maurey_sparsify(&[0.0, -1.0], 1.0, 3, &mut rng, 10).unwrap();
        assert_eq!(r.counts, vec![0, -3]);
    }

    #[test]
    fn maurey_rejects_outside_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(maurey_sparsify(&[0.8, 0.8], 1.0, 4, &mut rng, 10).is_err());
        assert!(maurey_sparsify(&[0.1], 1.0, 0, &mut rng, 10).is_err());
    }

    #[test]
    fn dudley_zero_cover() {
        let v = dudley(0.1, 1.0, 10, &CoverBoundFn::zero(), 1e-10).unwrap();
        assert!((v - 0.4).abs() < 1e-15);
        assert!(dudley(1.0, 0.5, 10, &CoverBoundFn::zero(), 1e-10).is_err());
    }

    #[test]
    fn dudley_reports_bad_integrand() {
        let bad = CoverBoundFn::new("nan", |_| f64::NAN);
        assert!(matches!(dudley(0.1, 1.0, 10, &bad, 1e-8), Err(Error::Domain(_))));
    }

    #[test]
    fn simpson_polynomial() {
        let v = adaptive_simpson(|x| Ok(x * x * x), 0.0, 2.0, 1e-12).unwrap();
        assert!((v - 4.0).abs() < 1e-12);
    }

    #[test]
    fn rademacher_symmetric_pair_enumeration() {
        // {g, −g} with g ≡ 1: max is |mean σ|; exact value by enumeration at n = 4.
        let n = 4;
        let exact: f64 = (0..1u32 << n)
            .map(|m| (2.0 * m.count_ones() as f64 - n as f64).abs() / n as f64)
            .sum::<f64>()
            / (1u32 << n) as f64;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let (est, se) = rademacher_mc(&[vec![1.0; n], vec![-1.0; n]], 20_000, &mut rng).unwrap();
        assert!((est - exact).abs() <= 4.0 * se, "est {est} exact {exact} se {se}");
    }
}
