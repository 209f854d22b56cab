//! Browser bindings for three small demos. Each export is a thin wrapper over a
//! plain function that the native tests exercise directly.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use wasm_bindgen::prelude::*;

use crl_core::bounds::{
    bound_arora, bound_lei, bound_thm1, bound_thm2, bound_thm3, bound_thm4, norm_profile, ActivationProfile,
    BoundMode, BoundSettings, RbarMode,
};
use crl_core::capacity::maurey_sparsify;
use crl_core::loss::{self, LossKind};
use crl_core::net::{init, Activation, InitScheme, ReferenceMode};

/// Values per sample point in [`loss_curves`].
pub const CURVE_STRIDE: usize = 6;

/// Samples `points` margins `v` evenly on `[lo, hi]` for a single negative and
/// returns, per point, `v, hinge, logistic, ramp(gamma), infonce(tau), λ_gamma(v)`.
pub fn loss_curves(lo: f64, hi: f64, points: usize, gamma: f64, tau: f64) -> crl_core::Result<Vec<f64>> {
    LossKind::Ramp { gamma }.validate()?;
    LossKind::InfoNce { tau }.validate()?;
    if points < 2 || !(lo < hi) {
        return Err(crl_core::Error::InvalidInput("need at least 2 points on a nonempty interval".into()));
    }
    let mut out = Vec::with_capacity(points * CURVE_STRIDE);
    for i in 0..points {
        let v = lo + (hi - lo) * i as f64 / (points - 1) as f64;
        out.extend([
            v,
            loss::hinge(&[v]),
            loss::logistic(&[v]),
            loss::ramp(&[v], gamma)?,
            loss::infonce(&[v], tau),
            loss::soft_indicator(v, gamma)?,
        ]);
    }
    Ok(out)
}

/// Sparsifies `(x, y)` in the l1 ball of radius `beta`.
/// Returns `[approx_x, approx_y, certificate, beta²/k, tries]`.
pub fn maurey_point(x: f64, y: f64, beta: f64, k: usize, seed: u64) -> crl_core::Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = maurey_sparsify(&[x, y], beta, k, &mut rng, 10_000)?;
    Ok(vec![r.approx[0], r.approx[1], r.certificate, beta * beta / k as f64, r.tries as f64])
}

/// Bound names in the column order of [`bound_growth`].
pub const GROWTH_BOUNDS: [&str; 6] = ["thm1", "thm2", "thm3", "thm4", "arora", "lei"];

/// Truncated bounds of freshly initialized relu networks (zero reference,
/// unit input bound) as depth or width varies. Six values per setting.
pub fn bound_growth(vary_depth: bool, values: &[usize], fixed: usize, n: usize, k: usize, seed: u64) -> crl_core::Result<Vec<f64>> {
    let s = BoundSettings {
        n,
        k,
        eta: 1.0,
        loss_bound: 1.0,
        delta: 0.1,
        chain: RbarMode::PopulationChain,
    };
    let mode = BoundMode::Truncated;
    let mut out = Vec::with_capacity(values.len() * GROWTH_BOUNDS.len());
    for &v in values {
        let (depth, width) = if vary_depth { (v, fixed) } else { (fixed, v) };
        let widths = vec![width; depth + 1];
        let params = init(&widths, Activation::Relu, InitScheme::UniformScaled, ReferenceMode::Zero, seed)?;
        let np = norm_profile(&params, 1.0, 1e-8)?;
        let chain = np.chain_bounds();
        let ap = ActivationProfile { level_max: chain.clone() };
        let b: Vec<f64> = chain.iter().map(|x| x.max(1.0)).collect();
        let r = b[depth];
        out.extend([
            bound_thm1(&np, &ap, &s, mode)?,
            bound_thm2(&np, &ap, &s, r, 0, mode)?,
            bound_thm3(&np, &b, &s, 0, mode)?,
            bound_thm4(&np, &s, mode)?,
            bound_arora(&np, n, k, width)?,
            bound_lei(&np, n, width)?,
        ]);
    }
    Ok(out)
}

fn js(e: crl_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen(js_name = lossCurves)]
pub fn loss_curves_js(lo: f64, hi: f64, points: usize, gamma: f64, tau: f64) -> Result<Vec<f64>, JsError> {
    loss_curves(lo, hi, points, gamma, tau).map_err(js)
}

#[wasm_bindgen(js_name = maureyPoint)]
pub fn maurey_point_js(x: f64, y: f64, beta: f64, k: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    maurey_point(x, y, beta, k, u64::from(seed)).map_err(js)
}

#[wasm_bindgen(js_name = boundGrowth)]
pub fn bound_growth_js(vary_depth: bool, values: Vec<u32>, fixed: usize, n: usize, k: usize, seed: u32) -> Result<Vec<f64>, JsError> {
    let values: Vec<usize> = values.into_iter().map(|v| v as usize).collect();
    bound_growth(vary_depth, &values, fixed, n, k, u64::from(seed)).map_err(js)
}

#[wasm_bindgen(js_name = growthBounds)]
pub fn growth_bounds() -> Vec<String> {
    GROWTH_BOUNDS.iter().map(|s| s.to_string()).collect()
}
