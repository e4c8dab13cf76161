//! Single-hidden-layer sigmoid network: forward pass, losses, backpropagated
//! gradients, finite-difference Hessians and curvature classification.
//!
//! Parameters are stored flat in a fixed order so traces stay comparable
//! across runs:
//!
//! ```text
//! [ hidden weights (hidden × inputs, row-major) | hidden biases (hidden)
//! | output weights (outputs × hidden, row-major) | output biases (outputs) ]
//! ```

use std::fmt;
use std::str::FromStr;

use crate::eigen::symmetric_eigenvalues;
use crate::error::{Error, Result};

/// Lower/upper clamp applied to outputs before taking logarithms in the CE loss.
pub const CE_EPSILON: f64 = 1e-12;

/// Default largest parameter dimensionality for which a Hessian is built.
pub const DEFAULT_HESSIAN_CAP: usize = 1000;

/// Default relative zero tolerance for eigenvalues.
pub const DEFAULT_ZERO_TOL_REL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub inputs: usize,
    pub hidden: usize,
    pub outputs: usize,
}

impl NetworkSpec {
    pub fn new(inputs: usize, hidden: usize, outputs: usize) -> Result<Self> {
        if inputs == 0 || hidden == 0 || outputs == 0 {
            return Err(Error::usage(format!(
                "layer sizes must be positive, got ({inputs}, {hidden}, {outputs})"
            )));
        }
        Ok(NetworkSpec {
            inputs,
            hidden,
            outputs,
        })
    }

    /// Number of weights and biases.
    pub fn param_dim(&self) -> usize {
        (self.inputs + 1) * self.hidden + (self.hidden + 1) * self.outputs
    }

    fn hidden_bias_offset(&self) -> usize {
        self.hidden * self.inputs
    }

    fn output_weight_offset(&self) -> usize {
        self.hidden_bias_offset() + self.hidden
    }

    fn output_bias_offset(&self) -> usize {
        self.output_weight_offset() + self.outputs * self.hidden
    }
}

impl fmt::Display for NetworkSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}-{}-{}", self.inputs, self.hidden, self.outputs)
    }
}

/// A point in weight space.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterVector(Vec<f64>);

impl ParameterVector {
    pub fn new(spec: &NetworkSpec, values: Vec<f64>) -> Result<Self> {
        check_len("parameter vector", spec.param_dim(), values.len())?;
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::numeric(format!("parameter {i} is not finite")));
        }
        Ok(ParameterVector(values))
    }

    pub fn zeros(spec: &NetworkSpec) -> Self {
        ParameterVector(vec![0.0; spec.param_dim()])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Pattern {
    pub inputs: Vec<f64>,
    pub targets: Vec<f64>,
}

impl Pattern {
    pub fn new(inputs: Vec<f64>, targets: Vec<f64>) -> Self {
        Pattern { inputs, targets }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Squared error, averaged over patterns.
    Sse,
    /// Binary cross-entropy per output, averaged over patterns.
    Ce,
}

impl LossKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LossKind::Sse => "sse",
            LossKind::Ce => "ce",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sse" | "mse" => Ok(LossKind::Sse),
            "ce" => Ok(LossKind::Ce),
            _ => Err(Error::usage(format!(
                "unknown loss '{s}' (expected sse or ce)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CurvatureClass {
    /// All eigenvalues positive: a minimum.
    Convex,
    /// All eigenvalues negative: a maximum.
    Concave,
    Saddle,
    /// At least one eigenvalue indistinguishable from zero.
    Singular,
}

impl CurvatureClass {
    pub const ALL: [CurvatureClass; 4] = [
        CurvatureClass::Convex,
        CurvatureClass::Concave,
        CurvatureClass::Saddle,
        CurvatureClass::Singular,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            CurvatureClass::Convex => "convex",
            CurvatureClass::Concave => "concave",
            CurvatureClass::Saddle => "saddle",
            CurvatureClass::Singular => "singular",
        }
    }
}

impl fmt::Display for CurvatureClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CurvatureClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        CurvatureClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s)
            .ok_or_else(|| Error::usage(format!("unknown curvature class '{s}'")))
    }
}

fn check_len(what: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected != actual {
        return Err(Error::Dimension {
            what,
            expected,
            actual,
        });
    }
    Ok(())
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Writes hidden and output activations for one input vector.
fn activate(spec: &NetworkSpec, w: &[f64], x: &[f64], hidden: &mut [f64], out: &mut [f64]) {
    let (ni, nh) = (spec.inputs, spec.hidden);
    let hb = spec.hidden_bias_offset();
    let ow = spec.output_weight_offset();
    let ob = spec.output_bias_offset();
    for (j, h) in hidden.iter_mut().enumerate() {
        let row = &w[j * ni..(j + 1) * ni];
        let net: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() + w[hb + j];
        *h = sigmoid(net);
    }
    for (k, o) in out.iter_mut().enumerate() {
        let row = &w[ow + k * nh..ow + (k + 1) * nh];
        let net: f64 = row
            .iter()
            .zip(hidden.iter())
            .map(|(a, b)| a * b)
            .sum::<f64>()
            + w[ob + k];
        *o = sigmoid(net);
    }
}

pub fn forward(spec: &NetworkSpec, params: &ParameterVector, inputs: &[f64]) -> Result<Vec<f64>> {
    check_len("parameter vector", spec.param_dim(), params.len())?;
    check_len("input vector", spec.inputs, inputs.len())?;
    let mut hidden = vec![0.0; spec.hidden];
    let mut out = vec![0.0; spec.outputs];
    activate(spec, params.as_slice(), inputs, &mut hidden, &mut out);
    Ok(out)
}

fn check_patterns(spec: &NetworkSpec, params: &[f64], patterns: &[Pattern]) -> Result<()> {
    check_len("parameter vector", spec.param_dim(), params.len())?;
    if patterns.is_empty() {
        return Err(Error::usage("loss needs at least one pattern"));
    }
    for p in patterns {
        check_len("pattern inputs", spec.inputs, p.inputs.len())?;
        check_len("pattern targets", spec.outputs, p.targets.len())?;
    }
    Ok(())
}

/// Per-output loss contribution and its derivative with respect to the output.
#[inline]
fn output_loss(kind: LossKind, t: f64, o: f64) -> (f64, f64) {
    match kind {
        LossKind::Sse => {
            let e = t - o;
            (e * e, -2.0 * e)
        }
        LossKind::Ce => {
            let oc = o.clamp(CE_EPSILON, 1.0 - CE_EPSILON);
            let l = -(t * oc.ln() + (1.0 - t) * (1.0 - oc).ln());
            // the clamp is flat outside [ε, 1-ε]
            let d = if o == oc {
                (1.0 - t) / (1.0 - o) - t / o
            } else {
                0.0
            };
            (l, d)
        }
    }
}

/// Loss and (optionally) its gradient in one pass over the patterns.
fn evaluate(
    kind: LossKind,
    spec: &NetworkSpec,
    w: &[f64],
    patterns: &[Pattern],
    mut grad: Option<&mut [f64]>,
) -> f64 {
    let (ni, nh, no) = (spec.inputs, spec.hidden, spec.outputs);
    let hb = spec.hidden_bias_offset();
    let ow = spec.output_weight_offset();
    let ob = spec.output_bias_offset();
    let mut hidden = vec![0.0; nh];
    let mut out = vec![0.0; no];
    let mut delta_out = vec![0.0; no];
    let mut total = 0.0;
    if let Some(g) = grad.as_deref_mut() {
        g.fill(0.0);
    }
    for p in patterns {
        activate(spec, w, &p.inputs, &mut hidden, &mut out);
        for k in 0..no {
            let (l, d) = output_loss(kind, p.targets[k], out[k]);
            total += l;
            delta_out[k] = d * out[k] * (1.0 - out[k]);
        }
        let Some(g) = grad.as_deref_mut() else {
            continue;
        };
        for k in 0..no {
            let dk = delta_out[k];
            g[ob + k] += dk;
            for j in 0..nh {
                g[ow + k * nh + j] += dk * hidden[j];
            }
        }
        for j in 0..nh {
            let back: f64 = (0..no).map(|k| delta_out[k] * w[ow + k * nh + j]).sum();
            let dj = back * hidden[j] * (1.0 - hidden[j]);
            g[hb + j] += dj;
            for i in 0..ni {
                g[j * ni + i] += dj * p.inputs[i];
            }
        }
    }
    let scale = 1.0 / patterns.len() as f64;
    if let Some(g) = grad {
        g.iter_mut().for_each(|v| *v *= scale);
    }
    total * scale
}

/// Mean-over-patterns loss.
pub fn loss(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParameterVector,
    patterns: &[Pattern],
) -> Result<f64> {
    check_patterns(spec, params.as_slice(), patterns)?;
    let value = evaluate(kind, spec, params.as_slice(), patterns, None);
    if !value.is_finite() {
        return Err(Error::numeric("loss is not finite"));
    }
    Ok(value)
}

/// Analytic gradient of [`loss`] by backpropagation.
pub fn gradient(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParameterVector,
    patterns: &[Pattern],
) -> Result<Vec<f64>> {
    loss_and_gradient(kind, spec, params, patterns).map(|(_, g)| g)
}

pub fn loss_and_gradient(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParameterVector,
    patterns: &[Pattern],
) -> Result<(f64, Vec<f64>)> {
    check_patterns(spec, params.as_slice(), patterns)?;
    let mut g = vec![0.0; spec.param_dim()];
    let value = evaluate(kind, spec, params.as_slice(), patterns, Some(&mut g));
    if !value.is_finite() {
        return Err(Error::numeric("loss is not finite"));
    }
    if let Some(i) = g.iter().position(|v| !v.is_finite()) {
        return Err(Error::numeric(format!(
            "gradient component {i} is not finite"
        )));
    }
    Ok((value, g))
}

/// Euclidean norm.
pub fn gradient_magnitude(g: &[f64]) -> f64 {
    g.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Dense symmetric matrix stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct SymmetricMatrix {
    n: usize,
    data: Vec<f64>,
}

impl SymmetricMatrix {
    /// Symmetrises an arbitrary square row-major matrix as `(A + Aᵀ) / 2`.
    pub fn symmetrised(n: usize, mut data: Vec<f64>) -> Self {
        assert_eq!(data.len(), n * n);
        for i in 0..n {
            for j in i + 1..n {
                let m = 0.5 * (data[i * n + j] + data[j * n + i]);
                data[i * n + j] = m;
                data[j * n + i] = m;
            }
        }
        SymmetricMatrix { n, data }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        symmetric_eigenvalues(self.n, &self.data)
    }
}

/// Hessian by central differences of a gradient function, symmetrised.
///
/// Row `i` holds `(g(w + h·eᵢ) − g(w − h·eᵢ)) / 2h` with `h = 1e-5·max(1, |wᵢ|)`.
pub fn finite_difference_hessian<F>(point: &[f64], mut grad: F) -> Result<SymmetricMatrix>
where
    F: FnMut(&[f64]) -> Result<Vec<f64>>,
{
    let n = point.len();
    let mut data = vec![0.0; n * n];
    let mut probe = point.to_vec();
    for i in 0..n {
        let h = 1e-5 * point[i].abs().max(1.0);
        probe[i] = point[i] + h;
        let plus = grad(&probe)?;
        probe[i] = point[i] - h;
        let minus = grad(&probe)?;
        probe[i] = point[i];
        check_len("gradient", n, plus.len())?;
        for j in 0..n {
            data[i * n + j] = (plus[j] - minus[j]) / (2.0 * h);
        }
    }
    if data.iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("Hessian has non-finite entries"));
    }
    Ok(SymmetricMatrix::symmetrised(n, data))
}

/// Loss Hessian; refuses networks with more than `cap` parameters.
pub fn hessian(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParameterVector,
    patterns: &[Pattern],
    cap: usize,
) -> Result<SymmetricMatrix> {
    let d = spec.param_dim();
    if d > cap {
        return Err(Error::Capability(format!(
            "Hessian of dimension {d} exceeds the cap of {cap}"
        )));
    }
    check_patterns(spec, params.as_slice(), patterns)?;
    let mut g = vec![0.0; d];
    finite_difference_hessian(params.as_slice(), |w| {
        evaluate(kind, spec, w, patterns, Some(&mut g));
        Ok(g.clone())
    })
}

/// Classifies a point by the signs of its Hessian eigenvalues.
///
/// Eigenvalues with `|λ| ≤ zero_tol_rel · max|λ|` count as zero (the bare
/// `zero_tol_rel` is used when every eigenvalue is exactly zero).
pub fn classify_curvature(eigenvalues: &[f64], zero_tol_rel: f64) -> Result<CurvatureClass> {
    if eigenvalues.is_empty() {
        return Err(Error::usage("cannot classify an empty eigenvalue set"));
    }
    let largest = eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tau = if largest == 0.0 {
        zero_tol_rel
    } else {
        zero_tol_rel * largest
    };
    Ok(if eigenvalues.iter().any(|v| v.abs() <= tau) {
        CurvatureClass::Singular
    } else if eigenvalues.iter().all(|&v| v > 0.0) {
        CurvatureClass::Convex
    } else if eigenvalues.iter().all(|&v| v < 0.0) {
        CurvatureClass::Concave
    } else {
        CurvatureClass::Saddle
    })
}

/// Hessian followed by eigenvalue classification.
pub fn curvature_at(
    kind: LossKind,
    spec: &NetworkSpec,
    params: &ParameterVector,
    patterns: &[Pattern],
    cap: usize,
    zero_tol_rel: f64,
) -> Result<CurvatureClass> {
    let h = hessian(kind, spec, params, patterns, cap)?;
    classify_curvature(&h.eigenvalues(), zero_tol_rel)
}
