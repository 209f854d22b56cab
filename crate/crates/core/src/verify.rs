//! Self-check suites run by `crl verify`: gradients against finite
//! differences, ℓ∞-Lipschitz certificates of the losses, Maurey certificates,
//! Dudley's integral against its closed form, and matrix-norm inequalities.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::capacity::{dudley, maurey_sparsify, CoverBoundFn};
use crate::data::ContrastiveTuple;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_norm, norm21, spectral_norm, DenseMatrix, DenseVector};
use crate::loss::{hinge, infonce, logistic, ramp, LossKind};
use crate::net::{init, Activation, InitScheme, NetworkParams, ReferenceMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    Gradcheck,
    Lipschitz,
    Maurey,
    Dudley,
    Norms,
}

impl Suite {
    pub const ALL: [Suite; 5] = [Suite::Gradcheck, Suite::Lipschitz, Suite::Maurey, Suite::Dudley, Suite::Norms];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Gradcheck => "gradcheck",
            Self::Lipschitz => "lipschitz",
            Self::Maurey => "maurey",
            Self::Dudley => "dudley",
            Self::Norms => "norms",
        }
    }

    pub fn run(&self, seed: u64) -> SuiteReport {
        match self {
            Self::Gradcheck => gradcheck_suite(20, seed),
            Self::Lipschitz => lipschitz_suite_with(&standard_lipschitz_cases(), 10_000, seed),
            Self::Maurey => maurey_suite(100, seed),
            Self::Dudley => dudley_suite(),
            Self::Norms => norms_suite(200, seed),
        }
    }
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidInput(format!("unknown suite {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: String,
    pub checks: usize,
    pub failures: Vec<String>,
    pub summary: String,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    fn new(suite: &str, checks: usize, failures: Vec<String>, summary: String) -> Self {
        Self {
            suite: suite.to_string(),
            checks,
            failures,
            summary,
        }
    }
}

impl fmt::Display for SuiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let status = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{status} {}: {} checks, {}", self.suite, self.checks, self.summary)?;
        for msg in self.failures.iter().take(5) {
            write!(f, "\n  - {msg}")?;
        }
        if self.failures.len() > 5 {
            write!(f, "\n  ... {} more", self.failures.len() - 5)?;
        }
        Ok(())
    }
}

pub mod oracle {
    //! Slow reference computations used by the suites.

    use super::*;

    /// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, descending.
    pub fn jacobi_eigenvalues(sym: &DenseMatrix) -> Vec<f64> {
        let n = sym.rows();
        let mut a: Vec<Vec<f64>> = (0..n).map(|i| sym.row(i).to_vec()).collect();
        let scale: f64 = a.iter().flatten().map(|x| x * x).sum::<f64>().sqrt();
        for _sweep in 0..100 {
            let off: f64 = (0..n)
                .flat_map(|i| (0..n).filter(move |j| *j != i).map(move |j| (i, j)))
                .map(|(i, j)| a[i][j] * a[i][j])
                .sum::<f64>()
                .sqrt();
            if off <= 1e-15 * scale || scale == 0.0 {
                break;
            }
            for p in 0..n {
                for q in p + 1..n {
                    if a[p][q].abs() < 1e-300 {
                        continue;
                    }
                    let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let t = if theta == 0.0 { 1.0 } else { t };
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for row in a.iter_mut() {
                        let (x, y) = (row[p], row[q]);
                        row[p] = c * x - s * y;
                        row[q] = s * x + c * y;
                    }
                    for k in 0..n {
                        let (x, y) = (a[p][k], a[q][k]);
                        a[p][k] = c * x - s * y;
                        a[q][k] = s * x + c * y;
                    }
                }
            }
        }
        let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
        eig.sort_by(|x, y| y.total_cmp(x));
        eig
    }

    /// `‖M‖_σ` from the top eigenvalue of `MᵀM`.
    pub fn spectral_norm(m: &DenseMatrix) -> f64 {
        let gram = m.transpose().matmul(m).expect("shapes chain");
        jacobi_eigenvalues(&gram).first().copied().unwrap_or(0.0).max(0.0).sqrt()
    }

    /// Number of `MᵀM` eigenvalues above `1e-10 · max`.
    pub fn rank(m: &DenseMatrix) -> usize {
        let gram = m.transpose().matmul(m).expect("shapes chain");
        let eig = jacobi_eigenvalues(&gram);
        let top = eig.first().copied().unwrap_or(0.0);
        eig.iter().filter(|e| **e > 1e-10 * top).count()
    }

    /// Central differences of the tuple loss over every weight entry.
    pub fn finite_difference_grad(
        params: &NetworkParams,
        tuple: &ContrastiveTuple,
        loss: &LossKind,
        step: f64,
    ) -> Result<Vec<DenseMatrix>> {
        let mut out = Vec::with_capacity(params.depth());
        for (l, layer) in params.layers().iter().enumerate() {
            let mut g = DenseMatrix::zeros(layer.weight().rows(), layer.weight().cols());
            for idx in 0..layer.weight().as_slice().len() {
                let eval = |delta: f64| -> Result<f64> {
                    let mut p = params.clone();
                    let mut w = layer.weight().clone();
                    w.as_mut_slice()[idx] += delta;
                    p.set_weight(l, w)?;
                    loss.tuple_loss(&p, tuple)
                };
                g.as_mut_slice()[idx] = (eval(step)? - eval(-step)?) / (2.0 * step);
            }
            out.push(g);
        }
        Ok(out)
    }

    /// Smallest `‖a − (β/k) c‖₂²` over integer `c` with `Σ|c_i| ≤ k`.
    pub fn maurey_best(a: &[f64], beta: f64, k: usize) -> f64 {
        fn rec(a: &[f64], beta: f64, k: usize, left: i64, acc: &mut Vec<i64>, best: &mut f64) {
            if acc.len() == a.len() {
                let err: f64 = a
                    .iter()
                    .zip(acc.iter())
                    .map(|(x, c)| (x - beta * *c as f64 / k as f64).powi(2))
                    .sum();
                *best = best.min(err);
                return;
            }
            for c in -left..=left {
                acc.push(c);
                rec(a, beta, k, left - c.abs(), acc, best);
                acc.pop();
            }
        }
        let mut best = f64::INFINITY;
        rec(a, beta, k, k as i64, &mut Vec::new(), &mut best);
        best
    }
}

fn random_tuple<R: Rng>(rng: &mut R, dim: usize, k: usize) -> ContrastiveTuple {
    let mut v = || DenseVector::from((0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<f64>>());
    let anchor = v();
    let positive = v();
    let negatives = (0..k).map(|_| v()).collect();
    ContrastiveTuple::new(anchor, positive, negatives).expect("consistent shapes")
}

/// Max over entries of `|g − fd|`, relative to the larger of the two gradients' max entries.
pub fn gradient_relative_error(analytic: &[DenseMatrix], numeric: &[DenseMatrix]) -> f64 {
    let flat = |g: &[DenseMatrix]| g.iter().flat_map(|m| m.as_slice().to_vec()).collect::<Vec<f64>>();
    let (a, n) = (flat(analytic), flat(numeric));
    let scale = a
        .iter()
        .chain(&n)
        .fold(0.0f64, |m, x| m.max(x.abs()))
        .max(1e-12);
    a.iter().zip(&n).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Random 3-layer smooth networks (widths ≤ 16, k = 5) against central differences.
pub fn gradcheck_suite(nets: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let losses = [LossKind::Logistic, LossKind::InfoNce { tau: 0.5 }, LossKind::Hinge];
    let acts = [Activation::Tanh, Activation::Identity];
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..nets {
        let widths: Vec<usize> = (0..4).map(|_| rng.gen_range(2..=16)).collect();
        let act = acts[i % acts.len()];
        let loss = losses[i % losses.len()];
        let result = init(&widths, act, InitScheme::UniformScaled, ReferenceMode::Initialization, rng.gen())
            .and_then(|net| {
                let tuple = random_tuple(&mut rng, widths[0], 5);
                let g = net.grad_tuple(&tuple, &loss)?;
                let fd = oracle::finite_difference_grad(&net, &tuple, &loss, 1e-5)?;
                Ok(gradient_relative_error(&g, &fd))
            });
        match result {
            Ok(err) => {
                worst = worst.max(err);
                if !(err <= 1e-4) {
                    failures.push(format!("net {i} ({widths:?}, {}): relative error {err:.3e}", loss.name()));
                }
            }
            Err(e) => failures.push(format!("net {i}: {e}")),
        }
    }
    SuiteReport::new("gradcheck", nets, failures, format!("max relative error {worst:.3e}"))
}

/// A loss on score vectors with a claimed ℓ∞-Lipschitz constant.
pub struct LipschitzCase {
    pub name: String,
    pub eta: f64,
    pub loss: Box<dyn Fn(&[f64]) -> f64 + Send + Sync>,
}

pub fn standard_lipschitz_cases() -> Vec<LipschitzCase> {
    let mut cases = vec![
        LipschitzCase {
            name: "hinge".into(),
            eta: 1.0,
            loss: Box::new(hinge),
        },
        LipschitzCase {
            name: "logistic".into(),
            eta: 1.0,
            loss: Box::new(logistic),
        },
    ];
    for gamma in [0.1, 0.5, 1.0] {
        cases.push(LipschitzCase {
            name: format!("ramp({gamma})"),
            eta: 1.0 / gamma,
            loss: Box::new(move |v| ramp(v, gamma).expect("positive gamma")),
        });
    }
    for tau in [0.1, 0.5, 2.0] {
        cases.push(LipschitzCase {
            name: format!("infonce({tau})"),
            eta: 1.0 / tau,
            loss: Box::new(move |v| infonce(v, tau)),
        });
    }
    cases
}

/// Checks `|ℓ(v) − ℓ(v̄)| ≤ η‖v − v̄‖_∞ + 1e-9` on `pairs` random pairs per case.
pub fn lipschitz_suite_with(cases: &[LipschitzCase], pairs: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst_ratio = 0.0f64;
    for case in cases {
        let mut violations = 0usize;
        for _ in 0..pairs {
            let k = rng.gen_range(1..=10);
            let v: Vec<f64> = (0..k).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let scale = 10f64.powf(rng.gen_range(-4.0..1.0));
            let w: Vec<f64> = v.iter().map(|x| x + scale * rng.gen_range(-1.0..1.0)).collect();
            let dist = v.iter().zip(&w).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let diff = ((case.loss)(&v) - (case.loss)(&w)).abs();
            if dist > 0.0 {
                worst_ratio = worst_ratio.max(diff / (case.eta * dist));
            }
            if !(diff <= case.eta * dist + 1e-9) {
                violations += 1;
            }
        }
        if violations > 0 {
            failures.push(format!("{}: {violations} of {pairs} pairs exceed eta = {}", case.name, case.eta));
        }
    }
    SuiteReport::new(
        "lipschitz",
        cases.len() * pairs,
        failures,
        format!("max |dl|/(eta |dv|) = {worst_ratio:.6}"),
    )
}

/// Random vectors in ℓ1 balls (d ≤ 10, k ∈ {4, 16, 64}) plus an exhaustive
/// check at d = 2, k = 4.
pub fn maurey_suite(vectors: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut checks = 0;
    let mut max_tries = 0;
    for i in 0..vectors {
        let d = rng.gen_range(1..=10);
        let a: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let l1: f64 = a.iter().map(|x| x.abs()).sum();
        let beta = l1 * rng.gen_range(1.0..2.0);
        for k in [4, 16, 64] {
            checks += 1;
            match maurey_sparsify(&a, beta, k, &mut rng, 1000) {
                Ok(r) => {
                    max_tries = max_tries.max(r.tries);
                    if !(r.certificate <= beta * beta / k as f64) {
                        failures.push(format!("vector {i}, k = {k}: certificate {} > β²/k", r.certificate));
                    }
                }
                Err(e) => failures.push(format!("vector {i}, k = {k}: {e}")),
            }
        }
    }
    let a = [0.5, 0.5];
    let best = oracle::maurey_best(&a, 1.0, 4);
    checks += 1;
    if !(best <= 0.25) {
        failures.push(format!("enumeration found no feasible point for d = 2, k = 4 (best {best})"));
    }
    match maurey_sparsify(&a, 1.0, 4, &mut rng, 100) {
        Ok(r) if r.certificate <= 0.25 => {}
        Ok(r) => failures.push(format!("d = 2 sampler returned certificate {}", r.certificate)),
        Err(e) => failures.push(format!("d = 2 sampler: {e}")),
    }
    SuiteReport::new("maurey", checks, failures, format!("max tries {max_tries}"))
}

/// `C/ε²` covers against `4α + (12√C/√n) ln(B/α)` over a 3×3×3 grid.
pub fn dudley_suite() -> SuiteReport {
    let n = 100;
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    let mut checks = 0;
    for c in [0.1f64, 1.0, 100.0] {
        for alpha in [1e-3f64, 1e-2, 0.1] {
            for b in [1.0, 5.0, 20.0] {
                checks += 1;
                let exact = 4.0 * alpha + 12.0 * c.sqrt() / (n as f64).sqrt() * (b / alpha).ln();
                match dudley(alpha, b, n, &CoverBoundFn::inverse_square(c), 1e-10) {
                    Ok(v) => {
                        let rel = (v - exact).abs() / exact;
                        worst = worst.max(rel);
                        if !(rel <= 1e-6) {
                            failures.push(format!("C={c}, alpha={alpha}, B={b}: relative error {rel:.3e}"));
                        }
                    }
                    Err(e) => failures.push(format!("C={c}, alpha={alpha}, B={b}: {e}")),
                }
            }
        }
    }
    SuiteReport::new("dudley", checks, failures, format!("max relative error {worst:.3e}"))
}

/// Spectral/Frobenius/(2,1) inequalities and power iteration against Jacobi,
/// on random and rank-deficient matrices.
pub fn norms_suite(matrices: usize, seed: u64) -> SuiteReport {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for i in 0..matrices {
        let rows = rng.gen_range(1..=8);
        let cols = rng.gen_range(1..=8);
        let m = if i % 2 == 0 {
            DenseMatrix::random_uniform(rows, cols, 1.0, &mut rng)
        } else {
            let inner = rng.gen_range(1..=3);
            let a = DenseMatrix::random_uniform(rows, inner, 1.0, &mut rng);
            let b = DenseMatrix::random_uniform(inner, cols, 1.0, &mut rng);
            a.matmul(&b).expect("shapes chain")
        };
        let sigma = match spectral_norm(&m, 1e-12, 1_000_000) {
            Ok(s) => s,
            Err(e) => {
                failures.push(format!("matrix {i}: {e}"));
                continue;
            }
        };
        let reference = oracle::spectral_norm(&m);
        let rel = (sigma - reference).abs() / reference.max(1e-300);
        worst = worst.max(rel);
        if !(rel <= 1e-9) {
            failures.push(format!("matrix {i}: power iteration {sigma} vs Jacobi {reference}"));
        }
        let r = oracle::rank(&m) as f64;
        let fro = frobenius_norm(&m);
        let n21 = norm21(&m);
        let slack = [
            fro - sigma,
            r.sqrt() * sigma - fro,
            (r * cols as f64).sqrt() * sigma - n21,
        ];
        if slack.iter().any(|s| *s < -1e-9) {
            failures.push(format!("matrix {i}: inequality slack {slack:?}"));
        }
    }
    SuiteReport::new("norms", matrices, failures, format!("max spectral relative error {worst:.3e}"))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jacobi_diag() {
        let e = oracle::jacobi_eigenvalues(&DenseMatrix::from_diag(&[1.0, 5.0, 3.0]));
        assert_eq!(e, vec![5.0, 3.0, 1.0]);
        let m = DenseMatrix::from_rows(&[vec![2.0, 1.0], vec![1.0, 2.0]]).unwrap();
        let e = oracle::jacobi_eigenvalues(&m);
        assert!((e[0] - 3.0).abs() < 1e-14 && (e[1] - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rank_of_outer_product() {
        let u = DenseMatrix::from_rows(&[vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let v = DenseMatrix::from_rows(&[vec![1.0, -1.0, 0.5]]).unwrap();
        assert_eq!(oracle::rank(&u.matmul(&v).unwrap()), 1);
    }

    #[test]
    fn maurey_enumeration_small() {
        assert!(oracle::maurey_best(&[0.5, 0.5], 1.0, 4) < 1e-15);
        assert!((oracle::maurey_best(&[0.3], 1.0, 1) - 0.09).abs() < 1e-15);
    }

    #[test]
    fn perturbed_hinge_fails_lipschitz() {
        let cases = vec![LipschitzCase {
            name: "hinge*1.5".into(),
            eta: 1.0,
            loss: Box::new(|v| 1.5 * hinge(v)),
        }];
        let report = lipschitz_suite_with(&cases, 2000, 1);
        assert!(!report.passed());
    }

    #[test]
    fn suite_names_parse() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
        }
        assert!("bogus".parse::<Suite>().is_err());
    }
}
