//! Browser bindings for the loss-landscape demo page in `www/`.
//!
//! Each export returns a flat `Float64Array`; the layouts are documented on
//! the functions.

use lgwalk_core::basin::{analyse_walk, window_profile, StagnationParams};
use lgwalk_core::datasets::{xor_dataset, Problem};
use lgwalk_core::nn::{CurvatureClass, LossKind};
use lgwalk_core::rng::WalkRng;
use lgwalk_core::sampler::{run_walk, run_walk_batch, WalkConfig};
use wasm_bindgen::prelude::*;

/// Curvature codes used in the flat arrays; `-1` means not computed.
pub fn curvature_code(c: Option<CurvatureClass>) -> f64 {
    match c {
        Some(CurvatureClass::Convex) => 0.0,
        Some(CurvatureClass::Concave) => 1.0,
        Some(CurvatureClass::Saddle) => 2.0,
        Some(CurvatureClass::Singular) => 3.0,
        None => -1.0,
    }
}

fn walk_config(
    loss: &str,
    granularity: &str,
    init_range: f64,
    seed: u64,
) -> lgwalk_core::Result<WalkConfig> {
    WalkConfig::new(
        init_range,
        granularity.parse()?,
        loss.parse::<LossKind>()?,
        seed,
    )
}

/// `[e_t, grad_mag, curvature_code]` per sampled point, walk by walk.
pub fn cloud(
    loss: &str,
    granularity: &str,
    init_range: f64,
    seed: u64,
    walks: usize,
    hessian: bool,
) -> lgwalk_core::Result<Vec<f64>> {
    let base = walk_config(loss, granularity, init_range, seed)?;
    let data = xor_dataset();
    let outcomes = run_walk_batch(&Problem::Xor.spec(), &data, &base, walks, hessian)?;
    let mut out = Vec::new();
    for o in outcomes {
        for r in o.result?.records {
            out.extend([r.train_loss, r.grad_mag, curvature_code(r.curvature)]);
        }
    }
    Ok(out)
}

/// Training-loss series of one XOR walk.
pub fn walk_series(
    loss: &str,
    granularity: &str,
    init_range: f64,
    seed: u64,
) -> lgwalk_core::Result<Vec<f64>> {
    let config = walk_config(loss, granularity, init_range, seed)?;
    let trace = run_walk(&Problem::Xor.spec(), &xor_dataset(), &config, false)?;
    Ok(trace.train_series())
}

/// Three noisy plateaus (1, 0.5, 0) joined by ramps; `plateau` points each.
pub fn plateau_series(plateau: usize, ramp: usize, noise: f64, seed: u64) -> Vec<f64> {
    let mut rng = WalkRng::new(seed);
    let levels = [1.0, 0.5, 0.0];
    let mut s = Vec::new();
    for (k, &level) in levels.iter().enumerate() {
        s.extend((0..plateau).map(|_| level + rng.uniform(-noise, noise)));
        if let Some(&next) = levels.get(k + 1) {
            s.extend((1..=ramp).map(|j| level + (next - level) * j as f64 / (ramp + 1) as f64));
        }
    }
    s
}

/// `[w, n_stag, l_stag]` for each window candidate, followed by the chosen
/// `[w, n_stag, l_stag]`.
pub fn sweep(series: &[f64]) -> lgwalk_core::Result<Vec<f64>> {
    let params = StagnationParams::default();
    let mut out = Vec::new();
    for (w, regions) in window_profile(series, &params)? {
        let l = if regions.is_empty() {
            0.0
        } else {
            regions.iter().sum::<usize>() as f64 / regions.len() as f64
        };
        out.extend([w as f64, regions.len() as f64, l]);
    }
    let best = analyse_walk(series, &params)?;
    out.extend([best.window as f64, best.n as f64, best.l]);
    Ok(out)
}

fn js(e: lgwalk_core::Error) -> JsError {
    JsError::new(&e.to_string())
}

#[wasm_bindgen]
pub fn xor_cloud(
    loss: &str,
    granularity: &str,
    init_range: f64,
    seed: u32,
    walks: usize,
    hessian: bool,
) -> Result<Vec<f64>, JsError> {
    cloud(loss, granularity, init_range, seed as u64, walks, hessian).map_err(js)
}

#[wasm_bindgen]
pub fn xor_walk(
    loss: &str,
    granularity: &str,
    init_range: f64,
    seed: u32,
) -> Result<Vec<f64>, JsError> {
    walk_series(loss, granularity, init_range, seed as u64).map_err(js)
}

#[wasm_bindgen]
pub fn three_plateaus(plateau: usize, ramp: usize, noise: f64, seed: u32) -> Vec<f64> {
    plateau_series(plateau, ramp, noise, seed as u64)
}

#[wasm_bindgen]
pub fn window_sweep(series: &[f64]) -> Result<Vec<f64>, JsError> {
    sweep(series).map_err(js)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cloud_layout() {
        let c = cloud("sse", "macro", 1.0, 1, 3, true).unwrap();
        assert_eq!(c.len(), 3 * 100 * 3);
        assert!(c.chunks(3).all(|p| (0.0..=3.0).contains(&p[2])));
        assert!(cloud("sse", "tiny", 1.0, 1, 3, true).is_err());
    }

    #[test]
    fn walk_and_sweep() {
        let s = walk_series("ce", "micro", 1.0, 2).unwrap();
        assert_eq!(s.len(), 1000);
        let sw = sweep(&s).unwrap();
        assert_eq!(sw.len(), 3 * 9);
        let p = plateau_series(100, 10, 0.01, 1);
        assert_eq!(p.len(), 320);
        assert!(sweep(&p[..10]).is_err());
    }
}
