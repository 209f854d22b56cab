//! Reference implementations kept separate from the library code paths.
#![allow(dead_code)]

use crl_core::data::ContrastiveTuple;
use crl_core::linalg::DenseMatrix;
use crl_core::loss::LossKind;
use crl_core::net::NetworkParams;

/// Eigenvalues of a symmetric matrix, classical Jacobi (largest pivot first).
pub fn eigenvalues_sym(m: &DenseMatrix) -> Vec<f64> {
    let n = m.rows();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            a[i][j] = 0.5 * (m[(i, j)] + m[(j, i)]);
        }
    }
    for _ in 0..(200 * n * n).max(1) {
        let (mut p, mut q, mut big) = (0, 0, 0.0f64);
        for i in 0..n {
            for j in i + 1..n {
                if a[i][j].abs() > big {
                    big = a[i][j].abs();
                    p = i;
                    q = j;
                }
            }
        }
        let diag = (0..n).map(|i| a[i][i].abs()).fold(0.0, f64::max);
        if big <= 1e-17 * diag.max(1e-300) {
            break;
        }
        let phi = 0.5 * (2.0 * a[p][q]).atan2(a[q][q] - a[p][p]);
        let (s, c) = phi.sin_cos();
        let mut b = a.clone();
        for k in 0..n {
            b[k][p] = c * a[k][p] - s * a[k][q];
            b[k][q] = s * a[k][p] + c * a[k][q];
        }
        let mut d = b.clone();
        for k in 0..n {
            d[p][k] = c * b[p][k] - s * b[q][k];
            d[q][k] = s * b[p][k] + c * b[q][k];
        }
        a = d;
    }
    let mut e: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    e.sort_by(|x, y| y.partial_cmp(x).unwrap());
    e
}

fn gram(m: &DenseMatrix) -> DenseMatrix {
    let (r, c) = m.shape();
    let mut g = DenseMatrix::zeros(c, c);
    for i in 0..c {
        for j in 0..c {
            let mut s = 0.0;
            for k in 0..r {
                s += m[(k, i)] * m[(k, j)];
            }
            g.set(i, j, s);
        }
    }
    g
}

pub fn spectral_oracle(m: &DenseMatrix) -> f64 {
    eigenvalues_sym(&gram(m))[0].max(0.0).sqrt()
}

pub fn rank_oracle(m: &DenseMatrix) -> usize {
    let e = eigenvalues_sym(&gram(m));
    let top = e[0];
    e.iter().filter(|x| **x > 1e-10 * top).count()
}

pub fn frobenius_oracle(m: &DenseMatrix) -> f64 {
    let mut s = 0.0;
    for i in 0..m.rows() {
        for j in 0..m.cols() {
            s += m[(i, j)] * m[(i, j)];
        }
    }
    s.sqrt()
}

pub fn norm21_oracle(m: &DenseMatrix) -> f64 {
    (0..m.cols())
        .map(|j| (0..m.rows()).map(|i| m[(i, j)] * m[(i, j)]).sum::<f64>().sqrt())
        .sum()
}

/// Plain nested-loop forward pass.
pub fn forward_oracle(params: &NetworkParams, x: &[f64]) -> Vec<f64> {
    let mut h = x.to_vec();
    for layer in params.layers() {
        let w = layer.weight();
        let mut z = vec![0.0; w.rows()];
        for i in 0..w.rows() {
            for j in 0..w.cols() {
                z[i] += w[(i, j)] * h[j];
            }
        }
        h = z.into_iter().map(|v| layer.activation().apply(v)).collect();
    }
    h
}

pub fn scores_oracle(params: &NetworkParams, t: &ContrastiveTuple) -> Vec<f64> {
    let f = forward_oracle(params, &t.anchor);
    let fp = forward_oracle(params, &t.positive);
    t.negatives
        .iter()
        .map(|n| {
            let fn_ = forward_oracle(params, n);
            f.iter().zip(fp.iter().zip(&fn_)).map(|(a, (p, q))| a * (p - q)).sum()
        })
        .collect()
}

/// Central differences of `loss(scores)` through the loop oracle.
pub fn fd_gradient(params: &NetworkParams, t: &ContrastiveTuple, loss: &LossKind, h: f64) -> Vec<Vec<f64>> {
    let mut out = Vec::new();
    for l in 0..params.depth() {
        let base = params.layers()[l].weight().clone();
        let mut g = vec![0.0; base.as_slice().len()];
        for (idx, gi) in g.iter_mut().enumerate() {
            let at = |delta: f64| {
                let mut w = base.clone();
                w.as_mut_slice()[idx] += delta;
                let mut p = params.clone();
                p.set_weight(l, w).unwrap();
                loss.value(&scores_oracle(&p, t)).unwrap()
            };
            *gi = (at(h) - at(-h)) / (2.0 * h);
        }
        out.push(g);
    }
    out
}

/// Best squared error over all `(β/k)·c` with integer `c`, `Σ|c_i| ≤ k`.
pub fn maurey_enumerate(a: &[f64], beta: f64, k: i64) -> f64 {
    let d = a.len();
    let mut best = f64::INFINITY;
    let mut c = vec![-k; d];
    loop {
        if c.iter().map(|x| x.abs()).sum::<i64>() <= k {
            let e: f64 = a
                .iter()
                .zip(&c)
                .map(|(x, ci)| (x - beta * *ci as f64 / k as f64).powi(2))
                .sum();
            best = best.min(e);
        }
        let mut i = 0;
        while i < d {
            c[i] += 1;
            if c[i] <= k {
                break;
            }
            c[i] = -k;
            i += 1;
        }
        if i == d {
            return best;
        }
    }
}
