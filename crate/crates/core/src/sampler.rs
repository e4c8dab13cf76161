//! Progressive gradient walks.
//!
//! A walk starts at a uniformly random point and repeatedly moves every
//! coordinate against the sign of its loss gradient by an independent
//! uniform amount in `[0, max_step]`. Walks are unbounded; the
//! initialisation interval only seeds the start.

use std::fmt;
use std::str::FromStr;

use crate::datasets::{BatchSampler, DatasetSplit};
use crate::error::{Error, Result};
use crate::nn::{
    curvature_at, gradient_magnitude, loss, loss_and_gradient, CurvatureClass, LossKind,
    NetworkSpec, ParameterVector, Pattern, DEFAULT_HESSIAN_CAP, DEFAULT_ZERO_TOL_REL,
};
use crate::rng::{derive_seed, WalkRng};

// Seed streams for per-walk batch samplers, kept apart from the step stream.
const TRAIN_BATCH_STREAM: u64 = 0x7472_6169_6e;
const TEST_BATCH_STREAM: u64 = 0x7465_7374;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Micro,
    Macro,
}

impl Granularity {
    pub fn steps(&self) -> usize {
        match self {
            Granularity::Micro => 1000,
            Granularity::Macro => 100,
        }
    }

    /// Maximum step as a fraction of the initialisation interval width.
    pub fn step_fraction(&self) -> f64 {
        match self {
            Granularity::Micro => 0.01,
            Granularity::Macro => 0.10,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            Granularity::Micro => "micro",
            Granularity::Macro => "macro",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Granularity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "micro" => Ok(Granularity::Micro),
            "macro" => Ok(Granularity::Macro),
            _ => Err(Error::usage(format!(
                "unknown granularity '{s}' (expected micro or macro)"
            ))),
        }
    }
}

/// How losses are evaluated on problems too large for full-set evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BatchPolicy {
    pub size: usize,
    /// Draw a new batch every step instead of one batch per walk.
    pub per_step: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkConfig {
    /// Half-width `r` of the initialisation interval `[-r, r]`.
    pub init_range: f64,
    pub granularity: Granularity,
    pub steps: usize,
    pub max_step: f64,
    pub seed: u64,
    pub loss_kind: LossKind,
    pub batch: Option<BatchPolicy>,
    pub hessian_cap: usize,
    pub zero_tol_rel: f64,
}

impl WalkConfig {
    /// Standard settings: `steps` and `max_step` follow from the granularity.
    pub fn new(
        init_range: f64,
        granularity: Granularity,
        loss_kind: LossKind,
        seed: u64,
    ) -> Result<Self> {
        if !(init_range.is_finite() && init_range > 0.0) {
            return Err(Error::usage(format!(
                "initialisation range {init_range} must be positive"
            )));
        }
        Ok(WalkConfig {
            init_range,
            granularity,
            steps: granularity.steps(),
            max_step: granularity.step_fraction() * 2.0 * init_range,
            seed,
            loss_kind,
            batch: None,
            hessian_cap: DEFAULT_HESSIAN_CAP,
            zero_tol_rel: DEFAULT_ZERO_TOL_REL,
        })
    }

    pub fn with_steps(mut self, steps: usize) -> Self {
        self.steps = steps;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_batch(mut self, batch: Option<BatchPolicy>) -> Self {
        self.batch = batch;
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepRecord {
    pub step: usize,
    pub train_loss: f64,
    pub test_loss: Option<f64>,
    pub grad_mag: f64,
    pub curvature: Option<CurvatureClass>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WalkTrace {
    pub config: WalkConfig,
    pub records: Vec<StepRecord>,
    /// The last recorded point.
    pub final_params: ParameterVector,
}

impl WalkTrace {
    pub fn train_series(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.train_loss).collect()
    }

    pub fn test_series(&self) -> Option<Vec<f64>> {
        self.records.iter().map(|r| r.test_loss).collect()
    }
}

/// Every coordinate i.i.d. uniform on `[-r, r]`.
pub fn init_point(spec: &NetworkSpec, init_range: f64, rng: &mut WalkRng) -> ParameterVector {
    let values = (0..spec.param_dim())
        .map(|_| rng.uniform(-init_range, init_range))
        .collect();
    ParameterVector::new(spec, values).expect("finite draws of the right length")
}

/// One step: `w'ᵢ = wᵢ − sign(gᵢ)·uᵢ`, `uᵢ ~ U[0, max_step]`, zero where `gᵢ = 0`.
///
/// A uniform is drawn for every coordinate, including those with a zero
/// gradient, so the random stream does not depend on the gradient.
pub fn walk_step(
    params: &ParameterVector,
    grad: &[f64],
    max_step: f64,
    rng: &mut WalkRng,
) -> Result<ParameterVector> {
    if grad.len() != params.len() {
        return Err(Error::Dimension {
            what: "gradient",
            expected: params.len(),
            actual: grad.len(),
        });
    }
    if !(max_step > 0.0 && max_step.is_finite()) {
        return Err(Error::usage(format!(
            "maximum step {max_step} must be positive"
        )));
    }
    if let Some(i) = grad.iter().position(|g| !g.is_finite()) {
        return Err(Error::numeric(format!(
            "gradient component {i} is not finite"
        )));
    }
    let mut next = params.clone();
    for (w, &g) in next.as_mut_slice().iter_mut().zip(grad) {
        let u = rng.uniform(0.0, max_step);
        if g > 0.0 {
            *w -= u;
        } else if g < 0.0 {
            *w += u;
        }
    }
    if next.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::numeric("walk left the finite range"));
    }
    Ok(next)
}

fn at_step(err: Error, step: usize) -> Error {
    match err {
        Error::Numeric { message, seed, .. } => Error::Numeric {
            message,
            seed,
            step: Some(step),
        },
        other => other,
    }
}

/// Runs one walk and records `config.steps` points, the first being the start.
pub fn run_walk(
    spec: &NetworkSpec,
    data: &DatasetSplit,
    config: &WalkConfig,
    hessian_enabled: bool,
) -> Result<WalkTrace> {
    if config.steps == 0 {
        return Err(Error::usage("a walk needs at least one step"));
    }
    if data.train.is_empty() {
        return Err(Error::usage("no training patterns"));
    }
    let seed = config.seed;
    let samplers = match config.batch {
        Some(policy) => {
            let train = BatchSampler::new(
                &data.train,
                policy.size,
                derive_seed(seed, TRAIN_BATCH_STREAM),
            )?;
            let test = if data.has_test() {
                let size = policy.size.min(data.test.len());
                Some(BatchSampler::new(
                    &data.test,
                    size,
                    derive_seed(seed, TEST_BATCH_STREAM),
                )?)
            } else {
                None
            };
            Some((policy.per_step, train, test))
        }
        None => None,
    };

    let mut rng = WalkRng::new(seed);
    let mut params = init_point(spec, config.init_range, &mut rng);
    let mut records = Vec::with_capacity(config.steps);
    let mut batch: Option<(Vec<Pattern>, Vec<Pattern>)> = None;

    for step in 0..config.steps {
        if let Some((per_step, train, test)) = &samplers {
            if batch.is_none() || *per_step {
                let index = if *per_step { step as u64 } else { 0 };
                batch = Some((
                    train.next_batch(index),
                    test.as_ref()
                        .map(|t| t.next_batch(index))
                        .unwrap_or_default(),
                ));
            }
        }
        let (train, test): (&[Pattern], &[Pattern]) = match &batch {
            Some((tr, te)) => (tr, te),
            None => (&data.train, &data.test),
        };

        let fail = |e: Error| at_step(e, step).with_seed(seed);
        let (train_loss, grad) =
            loss_and_gradient(config.loss_kind, spec, &params, train).map_err(fail)?;
        let test_loss = if test.is_empty() {
            None
        } else {
            Some(loss(config.loss_kind, spec, &params, test).map_err(fail)?)
        };
        let curvature = if hessian_enabled {
            Some(
                curvature_at(
                    config.loss_kind,
                    spec,
                    &params,
                    train,
                    config.hessian_cap,
                    config.zero_tol_rel,
                )
                .map_err(fail)?,
            )
        } else {
            None
        };
        records.push(StepRecord {
            step,
            train_loss,
            test_loss,
            grad_mag: gradient_magnitude(&grad),
            curvature,
        });
        if step + 1 < config.steps {
            params = walk_step(&params, &grad, config.max_step, &mut rng).map_err(fail)?;
        }
    }

    Ok(WalkTrace {
        config: config.clone(),
        records,
        final_params: params,
    })
}

/// `10 × d` walks.
pub fn default_walk_count(spec: &NetworkSpec) -> usize {
    10 * spec.param_dim()
}

/// Seed of walk `index` under a master seed.
pub fn walk_seed(master: u64, index: usize) -> u64 {
    derive_seed(master, index as u64)
}

#[derive(Debug)]
pub struct WalkOutcome {
    pub index: usize,
    pub seed: u64,
    pub result: Result<WalkTrace>,
}

/// Runs `n_walks` independent walks; `base.seed` is the master seed.
///
/// Seeds are assigned before any walk starts and outcomes are returned in
/// walk order, so results do not depend on scheduling. A failed walk is
/// reported in its outcome and does not stop the others.
pub fn run_walk_batch(
    spec: &NetworkSpec,
    data: &DatasetSplit,
    base: &WalkConfig,
    n_walks: usize,
    hessian_enabled: bool,
) -> Result<Vec<WalkOutcome>> {
    if n_walks == 0 {
        return Err(Error::usage("at least one walk is required"));
    }
    let one = |index: usize| {
        let seed = walk_seed(base.seed, index);
        let config = base.clone().with_seed(seed);
        WalkOutcome {
            index,
            seed,
            result: run_walk(spec, data, &config, hessian_enabled),
        }
    };
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        Ok((0..n_walks).into_par_iter().map(one).collect())
    }
    #[cfg(not(feature = "parallel"))]
    {
        Ok((0..n_walks).map(one).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datasets::xor_dataset;

    fn xor() -> (NetworkSpec, DatasetSplit) {
        (NetworkSpec::new(2, 2, 1).unwrap(), xor_dataset())
    }

    #[test]
    fn granularity_settings() {
        let micro = WalkConfig::new(1.0, Granularity::Micro, LossKind::Sse, 0).unwrap();
        assert_eq!((micro.steps, micro.max_step), (1000, 0.02));
        let macro_ = WalkConfig::new(10.0, Granularity::Macro, LossKind::Ce, 0).unwrap();
        assert_eq!((macro_.steps, macro_.max_step), (100, 2.0));
        assert!(WalkConfig::new(0.0, Granularity::Micro, LossKind::Sse, 0).is_err());
    }

    #[test]
    fn init_point_in_range() {
        let spec = NetworkSpec::new(4, 4, 3).unwrap();
        let mut rng = WalkRng::new(1);
        let w = init_point(&spec, 1.0, &mut rng);
        assert!(w.as_slice().iter().all(|v| (-1.0..=1.0).contains(v)));
        let again = init_point(&spec, 1.0, &mut WalkRng::new(1));
        assert_eq!(w, again);
    }

    #[test]
    fn zero_gradient_leaves_point() {
        let spec = NetworkSpec::new(2, 2, 1).unwrap();
        let w = init_point(&spec, 1.0, &mut WalkRng::new(4));
        let next = walk_step(&w, &[0.0; 9], 0.1, &mut WalkRng::new(5)).unwrap();
        assert_eq!(w, next);
    }

    #[test]
    fn walk_step_rejects_bad_input() {
        let spec = NetworkSpec::new(1, 1, 1).unwrap();
        let w = ParameterVector::zeros(&spec);
        let mut rng = WalkRng::new(0);
        assert!(matches!(
            walk_step(&w, &[0.0, f64::NAN, 0.0, 0.0], 0.1, &mut rng),
            Err(Error::Numeric { .. })
        ));
        assert!(walk_step(&w, &[0.0; 4], 0.0, &mut rng).is_err());
        assert!(walk_step(&w, &[0.0; 3], 0.1, &mut rng).is_err());
    }

    #[test]
    fn trace_length_and_determinism() {
        let (spec, data) = xor();
        let cfg = WalkConfig::new(1.0, Granularity::Micro, LossKind::Sse, 11).unwrap();
        let a = run_walk(&spec, &data, &cfg, false).unwrap();
        assert_eq!(a.records.len(), 1000);
        assert!(a
            .records
            .iter()
            .all(|r| r.train_loss.is_finite() && r.test_loss.is_none()));
        let b = run_walk(&spec, &data, &cfg, false).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn first_record_is_the_start() {
        let (spec, data) = xor();
        let cfg = WalkConfig::new(1.0, Granularity::Macro, LossKind::Ce, 3).unwrap();
        let trace = run_walk(&spec, &data, &cfg.clone().with_steps(1), false).unwrap();
        let start = init_point(&spec, 1.0, &mut WalkRng::new(3));
        assert_eq!(trace.final_params, start);
        let l = loss(LossKind::Ce, &spec, &start, &data.train).unwrap();
        assert_eq!(trace.records[0].train_loss, l);
    }

    #[test]
    fn single_walk_batch_matches_run_walk() {
        let (spec, data) = xor();
        let cfg = WalkConfig::new(1.0, Granularity::Macro, LossKind::Sse, 99).unwrap();
        let batch = run_walk_batch(&spec, &data, &cfg, 1, true).unwrap();
        assert_eq!(batch.len(), 1);
        let direct =
            run_walk(&spec, &data, &cfg.clone().with_seed(walk_seed(99, 0)), true).unwrap();
        assert_eq!(batch[0].result.as_ref().unwrap(), &direct);
        assert!(run_walk_batch(&spec, &data, &cfg, 0, false).is_err());
    }

    #[test]
    fn default_counts() {
        assert_eq!(default_walk_count(&NetworkSpec::new(2, 2, 1).unwrap()), 90);
        assert_eq!(default_walk_count(&NetworkSpec::new(4, 4, 3).unwrap()), 350);
    }
}
