//! Basin-of-attraction estimates from a scalar trajectory.
//!
//! A walk's loss sequence is normalised to `[0, 1]`, smoothed with an
//! exponentially weighted moving average, and scanned with a sliding
//! standard deviation. Runs of windows whose deviation falls below the
//! deviation of the whole smoothed sequence are stagnant regions. The window
//! width is chosen per walk to maximise the mean region length; the number of
//! regions (`n_stag`) and their mean length (`l_stag`) at that width are the
//! walk's estimates.

use std::path::Path;

use crate::error::{Error, Result};

pub const DEFAULT_WINDOWS: [usize; 8] = [6, 8, 10, 12, 14, 16, 18, 20];

/// Window candidates; the smoothing factor for width `w` is `2 / (w + 1)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StagnationParams {
    windows: Vec<usize>,
}

impl StagnationParams {
    pub fn new(windows: Vec<usize>) -> Result<Self> {
        if windows.is_empty() {
            return Err(Error::usage("at least one window candidate is required"));
        }
        if windows.iter().any(|&w| w < 2 || w % 2 != 0) {
            return Err(Error::usage(
                "window candidates must be even and at least 2",
            ));
        }
        if windows.windows(2).any(|p| p[0] >= p[1]) {
            return Err(Error::usage("window candidates must be strictly ascending"));
        }
        Ok(StagnationParams { windows })
    }

    pub fn windows(&self) -> &[usize] {
        &self.windows
    }

    pub fn max_window(&self) -> usize {
        *self.windows.last().expect("nonempty by construction")
    }

    pub fn alpha(w: usize) -> f64 {
        2.0 / (w as f64 + 1.0)
    }
}

impl Default for StagnationParams {
    fn default() -> Self {
        StagnationParams {
            windows: DEFAULT_WINDOWS.to_vec(),
        }
    }
}

/// Result of the window search on one walk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WalkBasins {
    pub n: usize,
    pub l: f64,
    pub window: usize,
}

/// Mean and population standard deviation of per-walk estimates.
#[derive(Debug, Clone, PartialEq)]
pub struct BasinEstimate {
    pub n_stag: f64,
    pub n_stag_std: f64,
    pub l_stag: f64,
    pub l_stag_std: f64,
    pub per_walk: Vec<WalkBasins>,
}

fn check_series(series: &[f64]) -> Result<()> {
    if series.is_empty() {
        return Err(Error::usage("series is empty"));
    }
    if let Some(i) = series.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!("series value {i} is not finite")));
    }
    Ok(())
}

/// `T'₁ = T₁`, `T'ᵢ = α·Tᵢ + (1 − α)·T'ᵢ₋₁`.
pub fn ewma(series: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::usage(format!("alpha {alpha} outside [0, 1]")));
    }
    check_series(series)?;
    let mut out = Vec::with_capacity(series.len());
    let mut prev = series[0];
    out.push(prev);
    for &t in &series[1..] {
        prev = alpha * t + (1.0 - alpha) * prev;
        out.push(prev);
    }
    Ok(out)
}

/// Affine map onto `[0, 1]`; a constant series maps to zeros.
pub fn normalise_series(series: &[f64]) -> Vec<f64> {
    let (lo, hi) = series
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
            (lo.min(v), hi.max(v))
        });
    let range = hi - lo;
    if !(range > 0.0) {
        return vec![0.0; series.len()];
    }
    series.iter().map(|v| (v - lo) / range).collect()
}

/// Population standard deviation.
pub fn population_stdev(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Population standard deviation of every width-`w` window, stride 1.
pub fn moving_stdev(series: &[f64], w: usize) -> Result<Vec<f64>> {
    if w < 2 {
        return Err(Error::usage(format!("window {w} must be at least 2")));
    }
    if series.len() < w {
        return Err(Error::usage(format!(
            "series of length {} is shorter than window {w}",
            series.len()
        )));
    }
    Ok(series.windows(w).map(population_stdev).collect())
}

/// Lengths of maximal runs with `s < epsilon`, in order of appearance.
pub fn detect_stagnant_regions(stdev_series: &[f64], epsilon: f64) -> Vec<usize> {
    let mut regions = Vec::new();
    let mut stuck = false;
    let mut len = 0usize;
    for &s in stdev_series {
        if stuck {
            if s < epsilon {
                len += 1;
            } else {
                stuck = false;
                regions.push(len);
                len = 0;
            }
        } else if s < epsilon {
            len += 1;
            stuck = true;
        }
    }
    if len > 0 {
        regions.push(len);
    }
    regions
}

fn mean_length(regions: &[usize]) -> f64 {
    if regions.is_empty() {
        0.0
    } else {
        regions.iter().sum::<usize>() as f64 / regions.len() as f64
    }
}

/// Regions found with window `w` on an already-normalised series.
pub fn regions_for_window(normalised: &[f64], w: usize) -> Result<Vec<usize>> {
    let smoothed = ewma(normalised, StagnationParams::alpha(w))?;
    let epsilon = population_stdev(&smoothed);
    let stdev = moving_stdev(&smoothed, w)?;
    Ok(detect_stagnant_regions(&stdev, epsilon))
}

/// `(w, regions)` for every window candidate, in candidate order.
pub fn window_profile(
    series: &[f64],
    params: &StagnationParams,
) -> Result<Vec<(usize, Vec<usize>)>> {
    check_series(series)?;
    if series.len() < params.max_window() {
        return Err(Error::usage(format!(
            "series of length {} is shorter than the largest window {}",
            series.len(),
            params.max_window()
        )));
    }
    let normalised = normalise_series(series);
    params
        .windows()
        .iter()
        .map(|&w| Ok((w, regions_for_window(&normalised, w)?)))
        .collect()
}

/// Picks the window with the largest mean region length (earliest on ties).
pub fn analyse_walk(series: &[f64], params: &StagnationParams) -> Result<WalkBasins> {
    let profile = window_profile(series, params)?;
    let mut best = WalkBasins {
        n: 0,
        l: 0.0,
        window: params.windows()[0],
    };
    for (w, regions) in &profile {
        let l = mean_length(regions);
        if l > best.l {
            best = WalkBasins {
                n: regions.len(),
                l,
                window: *w,
            };
        }
    }
    Ok(best)
}

pub fn aggregate(per_walk: &[WalkBasins]) -> Result<BasinEstimate> {
    if per_walk.is_empty() {
        return Err(Error::usage("cannot aggregate zero walks"));
    }
    let ns: Vec<f64> = per_walk.iter().map(|b| b.n as f64).collect();
    let ls: Vec<f64> = per_walk.iter().map(|b| b.l).collect();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(BasinEstimate {
        n_stag: mean(&ns),
        n_stag_std: population_stdev(&ns),
        l_stag: mean(&ls),
        l_stag_std: population_stdev(&ls),
        per_walk: per_walk.to_vec(),
    })
}

/// Reads a one-value-per-line numeric file; blank lines and `#` comments are skipped.
pub fn read_series_file(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut values = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Ingestion {
            path: path.to_path_buf(),
            row: Some(i + 1),
            message: format!("'{line}' is not a number"),
        })?;
        values.push(v);
    }
    if values.is_empty() {
        return Err(Error::Ingestion {
            path: path.to_path_buf(),
            row: None,
            message: "no values".into(),
        });
    }
    Ok(values)
}
