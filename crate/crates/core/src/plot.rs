//! Self-contained SVG scatter plots of loss-gradient clouds.
//!
//! Each sampled point is one `<circle class="marker">`, placed at
//! (E_t, gradient magnitude). Points are coloured either by curvature class
//! or by E_g on a linear or logarithmic ramp.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::experiment::LGCloudRecord;
use crate::nn::CurvatureClass;

const WIDTH: f64 = 720.0;
const HEIGHT: f64 = 520.0;
const LEFT: f64 = 80.0;
const RIGHT: f64 = 170.0;
const TOP: f64 = 30.0;
const BOTTOM: f64 = 60.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ColourBy {
    Curvature,
    TestLoss,
}

impl std::str::FromStr for ColourBy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "curvature" => Ok(ColourBy::Curvature),
            "e_g" | "eg" | "test-loss" => Ok(ColourBy::TestLoss),
            _ => Err(Error::usage(format!(
                "colour-by must be curvature or e_g, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlotOptions {
    pub colour_by: ColourBy,
    /// Keep only points with `E_t < max_loss`.
    pub max_loss: Option<f64>,
    pub log_colour: bool,
}

impl Default for PlotOptions {
    fn default() -> Self {
        PlotOptions {
            colour_by: ColourBy::Curvature,
            max_loss: None,
            log_colour: false,
        }
    }
}

pub fn curvature_colour(class: Option<CurvatureClass>) -> &'static str {
    match class {
        Some(CurvatureClass::Convex) => "#1b9e77",
        Some(CurvatureClass::Concave) => "#d95f02",
        Some(CurvatureClass::Saddle) => "#7570b3",
        Some(CurvatureClass::Singular) => "#e7298a",
        None => "#666666",
    }
}

// viridis, sampled at five points
const RAMP: [(f64, [f64; 3]); 5] = [
    (0.00, [68.0, 1.0, 84.0]),
    (0.25, [59.0, 82.0, 139.0]),
    (0.50, [33.0, 145.0, 140.0]),
    (0.75, [94.0, 201.0, 98.0]),
    (1.00, [253.0, 231.0, 37.0]),
];

/// Maps values onto `[0, 1]` linearly or logarithmically.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ColourScale {
    lo: f64,
    hi: f64,
    log: bool,
}

impl ColourScale {
    /// Log scales need strictly positive values; non-positive minima are
    /// lifted to the smallest positive value seen.
    pub fn fit(values: &[f64], log: bool) -> Result<Self> {
        let usable: Vec<f64> = values
            .iter()
            .copied()
            .filter(|v| v.is_finite() && (!log || *v > 0.0))
            .collect();
        if usable.is_empty() {
            return Err(Error::usage("no values usable for colouring"));
        }
        let lo = usable.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = usable.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(ColourScale { lo, hi, log })
    }

    pub fn position(&self, v: f64) -> f64 {
        let f = |x: f64| if self.log { x.max(self.lo).ln() } else { x };
        let (a, b) = (f(self.lo), f(self.hi));
        if b <= a {
            return 0.0;
        }
        ((f(v) - a) / (b - a)).clamp(0.0, 1.0)
    }

    pub fn colour(&self, v: f64) -> [u8; 3] {
        ramp(self.position(v))
    }

    pub fn range(&self) -> (f64, f64) {
        (self.lo, self.hi)
    }
}

pub fn ramp(t: f64) -> [u8; 3] {
    let t = t.clamp(0.0, 1.0);
    let k = RAMP
        .windows(2)
        .position(|w| t <= w[1].0)
        .unwrap_or(RAMP.len() - 2);
    let (t0, c0) = RAMP[k];
    let (t1, c1) = RAMP[k + 1];
    let u = (t - t0) / (t1 - t0);
    let mut out = [0u8; 3];
    for i in 0..3 {
        out[i] = (c0[i] + u * (c1[i] - c0[i])).round() as u8;
    }
    out
}

fn hex(c: [u8; 3]) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values.fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), v| {
        (l.min(v), h.max(v))
    });
    if hi > lo {
        let pad = 0.03 * (hi - lo);
        (lo - pad, hi + pad)
    } else {
        let pad = if lo == 0.0 { 1.0 } else { 0.05 * lo.abs() };
        (lo - pad, hi + pad)
    }
}

fn tick_label(v: f64) -> String {
    if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e4) {
        format!("{v:.1e}")
    } else {
        format!("{v:.3}")
    }
}

/// Renders the scatter plot as an SVG document.
pub fn render_scatter_svg(records: &[LGCloudRecord], options: &PlotOptions) -> Result<String> {
    let kept: Vec<&LGCloudRecord> = records
        .iter()
        .filter(|r| options.max_loss.is_none_or(|m| r.e_t < m))
        .collect();
    if kept.is_empty() {
        return Err(Error::usage(match options.max_loss {
            Some(m) => format!("no points left after the loss filter E_t < {m}"),
            None => "no points to plot".to_string(),
        }));
    }
    let scale = match options.colour_by {
        ColourBy::TestLoss => {
            let eg: Vec<f64> = kept.iter().filter_map(|r| r.e_g).collect();
            if eg.len() != kept.len() {
                return Err(Error::usage(
                    "colouring by E_g needs a test loss on every point",
                ));
            }
            Some(ColourScale::fit(&eg, options.log_colour)?)
        }
        ColourBy::Curvature => None,
    };

    let (x0, x1) = axis_range(kept.iter().map(|r| r.e_t));
    let (y0, y1) = axis_range(kept.iter().map(|r| r.grad_mag));
    let pw = WIDTH - LEFT - RIGHT;
    let ph = HEIGHT - TOP - BOTTOM;
    let sx = |x: f64| LEFT + (x - x0) / (x1 - x0) * pw;
    let sy = |y: f64| TOP + ph - (y - y0) / (y1 - y0) * ph;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>"#
    );
    let _ = writeln!(
        s,
        r#"<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>"#
    );
    for i in 0..=4 {
        let f = i as f64 / 4.0;
        let xv = x0 + f * (x1 - x0);
        let yv = y0 + f * (y1 - y0);
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">{}</text>"#,
            sx(xv),
            TOP + ph + 18.0,
            tick_label(xv)
        );
        let _ = writeln!(
            s,
            r#"<text x="{:.2}" y="{:.2}" text-anchor="end">{}</text>"#,
            LEFT - 6.0,
            sy(yv) + 4.0,
            tick_label(yv)
        );
    }
    let _ = writeln!(
        s,
        r#"<text x="{:.2}" y="{:.2}" text-anchor="middle">loss (E_t)</text>"#,
        LEFT + pw / 2.0,
        HEIGHT - 15.0
    );
    let _ = writeln!(
        s,
        r#"<text x="18" y="{:.2}" text-anchor="middle" transform="rotate(-90 18 {:.2})">gradient magnitude</text>"#,
        TOP + ph / 2.0,
        TOP + ph / 2.0
    );

    let _ = writeln!(s, r#"<g class="markers">"#);
    for r in &kept {
        let fill = match &scale {
            Some(sc) => hex(sc.colour(r.e_g.unwrap_or(0.0))),
            None => curvature_colour(r.curvature).to_string(),
        };
        let _ = writeln!(
            s,
            r#"<circle class="marker" cx="{:.2}" cy="{:.2}" r="2" fill="{fill}" fill-opacity="0.6"/>"#,
            sx(r.e_t),
            sy(r.grad_mag)
        );
    }
    let _ = writeln!(s, "</g>");

    let lx = WIDTH - RIGHT + 20.0;
    let _ = writeln!(s, r#"<g class="legend">"#);
    match &scale {
        None => {
            let mut classes: Vec<Option<CurvatureClass>> = Vec::new();
            for c in CurvatureClass::ALL.map(Some).into_iter().chain([None]) {
                if kept.iter().any(|r| r.curvature == c) {
                    classes.push(c);
                }
            }
            for (i, c) in classes.iter().enumerate() {
                let y = TOP + 10.0 + 20.0 * i as f64;
                let _ = writeln!(
                    s,
                    r#"<g class="legend-entry"><rect x="{lx}" y="{:.2}" width="10" height="10" fill="{}"/><text x="{:.2}" y="{:.2}">{}</text></g>"#,
                    y,
                    curvature_colour(*c),
                    lx + 16.0,
                    y + 9.0,
                    c.map_or("none", |c| c.as_str())
                );
            }
        }
        Some(sc) => {
            let (lo, hi) = sc.range();
            let _ = writeln!(
                s,
                r#"<text x="{lx}" y="{:.2}">E_g ({})</text>"#,
                TOP + 8.0,
                if sc.log { "log" } else { "linear" }
            );
            let bar_h = 200.0;
            let n = 50;
            for i in 0..n {
                let t = 1.0 - i as f64 / n as f64;
                let _ = writeln!(
                    s,
                    r#"<rect class="colourbar" x="{lx}" y="{:.2}" width="14" height="{:.2}" fill="{}"/>"#,
                    TOP + 16.0 + bar_h * i as f64 / n as f64,
                    bar_h / n as f64 + 0.5,
                    hex(ramp(t))
                );
            }
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 20.0,
                TOP + 26.0,
                tick_label(hi)
            );
            let _ = writeln!(
                s,
                r#"<text x="{:.2}" y="{:.2}">{}</text>"#,
                lx + 20.0,
                TOP + 16.0 + bar_h,
                tick_label(lo)
            );
        }
    }
    let _ = writeln!(s, "</g>");
    s.push_str("</svg>\n");
    Ok(s)
}

pub fn emit_scatter_plot(
    records: &[LGCloudRecord],
    options: &PlotOptions,
    path: &Path,
) -> Result<()> {
    let svg = render_scatter_svg(records, options)?;
    std::fs::write(path, svg).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(e_t: f64, e_g: Option<f64>, curvature: Option<CurvatureClass>) -> LGCloudRecord {
        LGCloudRecord {
            walk: 0,
            step: 0,
            e_t,
            e_g,
            grad_mag: e_t * 0.5,
            curvature,
        }
    }

    #[test]
    fn one_record_one_marker() {
        let svg = render_scatter_svg(&[rec(0.3, None, None)], &PlotOptions::default()).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn four_classes_four_legend_entries() {
        let recs: Vec<_> = CurvatureClass::ALL
            .iter()
            .enumerate()
            .map(|(i, c)| rec(i as f64, None, Some(*c)))
            .collect();
        let svg = render_scatter_svg(&recs, &PlotOptions::default()).unwrap();
        assert_eq!(svg.matches(r#"class="legend-entry""#).count(), 4);
        assert_eq!(svg.matches("<circle").count(), 4);
    }

    #[test]
    fn filter_that_removes_everything_is_an_error() {
        let opts = PlotOptions {
            max_loss: Some(0.1),
            ..PlotOptions::default()
        };
        let err = render_scatter_svg(&[rec(0.3, None, None)], &opts).unwrap_err();
        assert!(err.to_string().contains("E_t < 0.1"));
    }

    #[test]
    fn filter_drops_high_loss_points() {
        let opts = PlotOptions {
            max_loss: Some(1.0),
            ..PlotOptions::default()
        };
        let svg = render_scatter_svg(&[rec(0.3, None, None), rec(2.0, None, None)], &opts).unwrap();
        assert_eq!(svg.matches("<circle").count(), 1);
    }

    #[test]
    fn log_colour_is_monotone() {
        let values: Vec<f64> = (0..40)
            .map(|i| 10f64.powf(-3.0 + 3.0 * i as f64 / 39.0))
            .collect();
        let sc = ColourScale::fit(&values, true).unwrap();
        let pos: Vec<f64> = values.iter().map(|&v| sc.position(v)).collect();
        assert!(pos.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(pos[0], 0.0);
        assert_eq!(pos[39], 1.0);
        // the ramp brightens monotonically (sum of channels) from end to end
        let lum: Vec<u32> = values
            .iter()
            .map(|&v| sc.colour(v).iter().map(|&c| c as u32).sum())
            .collect();
        assert!(lum[39] > lum[0]);
    }

    #[test]
    fn test_loss_colouring_requires_e_g() {
        let opts = PlotOptions {
            colour_by: ColourBy::TestLoss,
            ..PlotOptions::default()
        };
        assert!(render_scatter_svg(&[rec(0.3, None, None)], &opts).is_err());
        let svg = render_scatter_svg(
            &[rec(0.3, Some(0.2), None), rec(0.4, Some(0.9), None)],
            &opts,
        )
        .unwrap();
        assert!(svg.contains("colourbar"));
    }

    #[test]
    fn deterministic_output() {
        let recs = vec![
            rec(0.3, Some(0.1), Some(CurvatureClass::Saddle)),
            rec(0.5, Some(0.2), None),
        ];
        let a = render_scatter_svg(&recs, &PlotOptions::default()).unwrap();
        let b = render_scatter_svg(&recs, &PlotOptions::default()).unwrap();
        assert_eq!(a, b);
    }
}
