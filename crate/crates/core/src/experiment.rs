//! Experiment orchestration: configuration, run directories, loss-gradient
//! clouds, classification accuracy and summary tables.
//!
//! A run directory contains
//!
//! | file | content |
//! |------|---------|
//! | `config.txt` | the resolved configuration as `key = value` lines |
//! | `walks.csv` | one row per walk: seed, status, final train/test accuracy, error |
//! | `traces/walk_NNNNN.csv` | per-walk step records |
//! | `final_params.csv` | last recorded point of every successful walk |
//! | `lg_cloud.csv` | every step of every successful walk |
//! | `basins.csv` | per-walk `n_stag`, `l_stag` and window for the E_t and E_g series |
//! | `summary.txt` | the printed tables |
//!
//! Accuracies are fractions correct. Multi-output problems predict the
//! argmax output; single-output problems predict class 1 when the output
//! exceeds 0.5, so an output of exactly 0.5 counts as class 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::basin::{aggregate, analyse_walk, BasinEstimate, StagnationParams, WalkBasins};
use crate::datasets::{
    load_csv, load_csv_from_reader, load_mnist_dir, prepare, xor_dataset, CsvSchema, DatasetSplit,
    LabelColumn, Problem, RawDataset, MNIST_BATCH,
};
use crate::error::{Error, Result};
use crate::nn::{
    forward, CurvatureClass, LossKind, NetworkSpec, ParameterVector, Pattern, DEFAULT_HESSIAN_CAP,
};
use crate::rng::derive_seed;
use crate::sampler::{
    default_walk_count, run_walk_batch, BatchPolicy, Granularity, WalkConfig, WalkOutcome,
    WalkTrace,
};

pub const CONFIG_FILE: &str = "config.txt";
pub const WALKS_FILE: &str = "walks.csv";
pub const CLOUD_FILE: &str = "lg_cloud.csv";
pub const BASINS_FILE: &str = "basins.csv";
pub const SUMMARY_FILE: &str = "summary.txt";
pub const PARAMS_FILE: &str = "final_params.csv";
pub const TRACES_DIR: &str = "traces";

const SPLIT_STREAM: u64 = 0x73_706c_6974;

/// Bundled copy of Fisher's Iris data, used when no data path is given.
pub const IRIS_CSV: &str = include_str!("../data/iris.csv");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    On,
    Off,
    /// On whenever the parameter count is within the Hessian cap.
    Auto,
}

impl HessianMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            HessianMode::On => "on",
            HessianMode::Off => "off",
            HessianMode::Auto => "auto",
        }
    }
}

impl FromStr for HessianMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "on" => Ok(HessianMode::On),
            "off" => Ok(HessianMode::Off),
            "auto" => Ok(HessianMode::Auto),
            _ => Err(Error::usage(format!(
                "hessian must be on, off or auto, got '{s}'"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub problem: Problem,
    pub loss: LossKind,
    pub granularity: Granularity,
    pub init_range: f64,
    pub walks: Option<usize>,
    pub steps: Option<usize>,
    pub seed: u64,
    pub hessian: HessianMode,
    pub out: PathBuf,
    pub data: Option<PathBuf>,
    pub threads: Option<usize>,
    pub schema: CsvSchema,
    pub batch_size: usize,
    pub batch_per_step: bool,
}

impl ExperimentConfig {
    pub fn new(
        problem: Problem,
        loss: LossKind,
        granularity: Granularity,
        init_range: f64,
    ) -> Self {
        ExperimentConfig {
            problem,
            loss,
            granularity,
            init_range,
            walks: None,
            steps: None,
            seed: 0,
            hessian: HessianMode::Auto,
            out: PathBuf::from("run"),
            data: None,
            threads: None,
            schema: CsvSchema::default(),
            batch_size: MNIST_BATCH,
            batch_per_step: false,
        }
    }

    /// Builds a configuration from `key = value` pairs (config file keys and
    /// long flag names are the same).
    pub fn from_pairs(pairs: &BTreeMap<String, String>) -> Result<Self> {
        let get = |k: &str| pairs.get(k).map(String::as_str);
        let required = |k: &str| get(k).ok_or_else(|| Error::usage(format!("missing '{k}'")));
        let number = |k: &str, v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::usage(format!("{k}: '{v}' is not a number")))
        };
        let count = |k: &str, v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::usage(format!("{k}: '{v}' is not a count")))
        };
        let flag = |k: &str, v: &str| -> Result<bool> {
            match v {
                "true" | "yes" | "on" | "1" => Ok(true),
                "false" | "no" | "off" | "0" => Ok(false),
                _ => Err(Error::usage(format!("{k}: '{v}' is not a boolean"))),
            }
        };

        let known = [
            "problem",
            "loss",
            "granularity",
            "init-range",
            "walks",
            "steps",
            "seed",
            "hessian",
            "out",
            "data",
            "threads",
            "delimiter",
            "header",
            "label-column",
            "ignore-columns",
            "labels",
            "batch-size",
            "batch-per-step",
        ];
        if let Some(k) = pairs.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::usage(format!("unknown configuration key '{k}'")));
        }

        let problem: Problem = required("problem")?.parse()?;
        let loss: LossKind = required("loss")?.parse()?;
        let granularity: Granularity = required("granularity")?.parse()?;
        let init_range = number("init-range", get("init-range").unwrap_or("1"))?;
        if init_range != 1.0 && init_range != 10.0 {
            return Err(Error::usage(format!(
                "init-range must be 1 or 10, got {init_range}"
            )));
        }
        let mut cfg = ExperimentConfig::new(problem, loss, granularity, init_range);
        if let Some(v) = get("walks") {
            let n = count("walks", v)?;
            if n == 0 {
                return Err(Error::usage("walks must be at least 1"));
            }
            cfg.walks = Some(n);
        }
        if let Some(v) = get("steps") {
            let n = count("steps", v)?;
            if n == 0 {
                return Err(Error::usage("steps must be at least 1"));
            }
            cfg.steps = Some(n);
        }
        if let Some(v) = get("seed") {
            cfg.seed = v
                .parse()
                .map_err(|_| Error::usage(format!("seed: '{v}' is not a u64")))?;
        }
        if let Some(v) = get("hessian") {
            cfg.hessian = v.parse()?;
        }
        if let Some(v) = get("out") {
            cfg.out = PathBuf::from(v);
        }
        cfg.data = get("data").map(PathBuf::from);
        if let Some(v) = get("threads") {
            cfg.threads = Some(count("threads", v)?);
        }
        if let Some(v) = get("delimiter") {
            cfg.schema.delimiter = match v {
                "tab" | "\\t" => b'\t',
                "space" => b' ',
                s if s.len() == 1 => s.as_bytes()[0],
                _ => {
                    return Err(Error::usage(format!(
                        "delimiter must be one character, got '{v}'"
                    )))
                }
            };
        }
        if let Some(v) = get("header") {
            cfg.schema.has_header = flag("header", v)?;
        }
        if let Some(v) = get("label-column") {
            cfg.schema.label_column = match v {
                "last" => LabelColumn::Last,
                _ => LabelColumn::Index(count("label-column", v)?),
            };
        }
        if let Some(v) = get("ignore-columns") {
            cfg.schema.ignore_columns = v
                .split(',')
                .filter(|s| !s.trim().is_empty())
                .map(|s| count("ignore-columns", s.trim()))
                .collect::<Result<_>>()?;
        }
        if let Some(v) = get("labels") {
            cfg.schema.labels = Some(v.split(',').map(|s| s.trim().to_string()).collect());
        }
        if let Some(v) = get("batch-size") {
            cfg.batch_size = count("batch-size", v)?;
        }
        if let Some(v) = get("batch-per-step") {
            cfg.batch_per_step = flag("batch-per-step", v)?;
        }
        Ok(cfg)
    }

    pub fn to_pairs(&self) -> BTreeMap<String, String> {
        let mut m = BTreeMap::new();
        let mut put = |k: &str, v: String| {
            m.insert(k.to_string(), v);
        };
        put("problem", self.problem.name().into());
        put("loss", self.loss.as_str().into());
        put("granularity", self.granularity.as_str().into());
        put("init-range", format!("{}", self.init_range));
        if let Some(w) = self.walks {
            put("walks", w.to_string());
        }
        if let Some(s) = self.steps {
            put("steps", s.to_string());
        }
        put("seed", self.seed.to_string());
        put("hessian", self.hessian.as_str().into());
        put("out", self.out.display().to_string());
        if let Some(d) = &self.data {
            put("data", d.display().to_string());
        }
        if let Some(t) = self.threads {
            put("threads", t.to_string());
        }
        put(
            "delimiter",
            match self.schema.delimiter {
                b'\t' => "tab".into(),
                b' ' => "space".into(),
                c => (c as char).to_string(),
            },
        );
        put("header", self.schema.has_header.to_string());
        put(
            "label-column",
            match self.schema.label_column {
                LabelColumn::Last => "last".into(),
                LabelColumn::Index(i) => i.to_string(),
            },
        );
        if !self.schema.ignore_columns.is_empty() {
            put(
                "ignore-columns",
                self.schema
                    .ignore_columns
                    .iter()
                    .map(|c| c.to_string())
                    .collect::<Vec<_>>()
                    .join(","),
            );
        }
        if let Some(l) = &self.schema.labels {
            put("labels", l.join(","));
        }
        put("batch-size", self.batch_size.to_string());
        put("batch-per-step", self.batch_per_step.to_string());
        m
    }

    pub fn spec(&self) -> NetworkSpec {
        self.problem.spec()
    }

    pub fn n_walks(&self) -> usize {
        self.walks
            .unwrap_or_else(|| default_walk_count(&self.spec()))
    }

    pub fn hessian_enabled(&self) -> bool {
        match self.hessian {
            HessianMode::On => true,
            HessianMode::Off => false,
            HessianMode::Auto => self.spec().param_dim() <= DEFAULT_HESSIAN_CAP,
        }
    }

    pub fn walk_config(&self) -> Result<WalkConfig> {
        let mut wc = WalkConfig::new(self.init_range, self.granularity, self.loss, self.seed)?;
        if let Some(s) = self.steps {
            wc = wc.with_steps(s);
        }
        if self.problem.uses_batches() {
            wc = wc.with_batch(Some(BatchPolicy {
                size: self.batch_size,
                per_step: self.batch_per_step,
            }));
        }
        Ok(wc)
    }
}

/// Parses `key = value` lines; `#` starts a comment.
pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>> {
    let mut m = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::usage(format!("config line {}: expected key = value", i + 1)))?;
        m.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(m)
}

pub fn render_config_text(pairs: &BTreeMap<String, String>) -> String {
    pairs.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

fn check_shape(raw: &RawDataset, problem: Problem) -> Result<()> {
    let spec = problem.spec();
    if raw.n_features() != spec.inputs {
        return Err(Error::Ingestion {
            path: PathBuf::from(&raw.name),
            row: None,
            message: format!(
                "{problem} expects {} features, the data has {}",
                spec.inputs,
                raw.n_features()
            ),
        });
    }
    if raw.n_classes != problem.n_classes() {
        return Err(Error::Ingestion {
            path: PathBuf::from(&raw.name),
            row: None,
            message: format!(
                "{problem} expects {} classes, the data has {}",
                problem.n_classes(),
                raw.n_classes
            ),
        });
    }
    Ok(())
}

/// Loads, standardises and splits the configured problem.
pub fn load_problem(config: &ExperimentConfig) -> Result<DatasetSplit> {
    let problem = config.problem;
    let raw = match (problem, &config.data) {
        (Problem::Xor, _) => return Ok(xor_dataset()),
        (Problem::Iris, None) => load_csv_from_reader(IRIS_CSV.as_bytes(), "iris", &config.schema)?,
        (Problem::Mnist, Some(dir)) => load_mnist_dir(dir)?,
        (_, Some(path)) => load_csv(path, &config.schema)?,
        (_, None) => {
            return Err(Error::usage(format!(
                "{problem} needs a data path (--data)"
            )));
        }
    };
    check_shape(&raw, problem)?;
    prepare(&raw, derive_seed(config.seed, SPLIT_STREAM))
}

/// Fraction of patterns classified correctly.
pub fn classification_accuracy(
    spec: &NetworkSpec,
    params: &ParameterVector,
    patterns: &[Pattern],
) -> Result<f64> {
    if patterns.is_empty() {
        return Err(Error::usage("accuracy needs at least one pattern"));
    }
    let mut correct = 0usize;
    for p in patterns {
        let out = forward(spec, params, &p.inputs)?;
        if predicted_class(&out) == predicted_class_of_target(&p.targets) {
            correct += 1;
        }
    }
    Ok(correct as f64 / patterns.len() as f64)
}

/// Argmax (first maximum wins), or a 0.5 threshold for a single output.
pub fn predicted_class(outputs: &[f64]) -> usize {
    if outputs.len() == 1 {
        usize::from(outputs[0] > 0.5)
    } else {
        argmax(outputs)
    }
}

fn predicted_class_of_target(targets: &[f64]) -> usize {
    predicted_class(targets)
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct LGCloudRecord {
    pub walk: usize,
    pub step: usize,
    pub e_t: f64,
    pub e_g: Option<f64>,
    pub grad_mag: f64,
    pub curvature: Option<CurvatureClass>,
}

pub fn cloud_records(index: usize, trace: &WalkTrace) -> impl Iterator<Item = LGCloudRecord> + '_ {
    trace.records.iter().map(move |r| LGCloudRecord {
        walk: index,
        step: r.step,
        e_t: r.train_loss,
        e_g: r.test_loss,
        grad_mag: r.grad_mag,
        curvature: r.curvature,
    })
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub const CLOUD_HEADER: &str = "walk,step,e_t,e_g,grad_mag,curvature";

/// Cloud rows in the given order; values use shortest round-trip formatting,
/// a missing E_g is an empty field and a missing class is `none`.
pub fn render_lg_cloud(records: &[LGCloudRecord]) -> String {
    let mut s = String::with_capacity(64 * (records.len() + 1));
    s.push_str(CLOUD_HEADER);
    s.push('\n');
    for r in records {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.walk,
            r.step,
            r.e_t,
            opt(r.e_g),
            r.grad_mag,
            r.curvature.map_or("none", |c| c.as_str())
        );
    }
    s
}

pub fn emit_lg_cloud(records: &[LGCloudRecord], path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::usage("no cloud records to write"));
    }
    write_file(path, &render_lg_cloud(records))
}

pub fn read_lg_cloud(path: &Path) -> Result<Vec<LGCloudRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |row: usize, message: String| Error::Format {
        path: path.to_path_buf(),
        message: format!("line {row}: {message}"),
    };
    let mut lines = text.lines();
    if lines.next() != Some(CLOUD_HEADER) {
        return Err(bad(1, format!("expected header '{CLOUD_HEADER}'")));
    }
    let mut out = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 6 {
            return Err(bad(row, format!("expected 6 fields, found {}", f.len())));
        }
        let num = |s: &str| {
            s.parse::<f64>()
                .map_err(|_| bad(row, format!("'{s}' is not a number")))
        };
        let idx = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| bad(row, format!("'{s}' is not an index")))
        };
        out.push(LGCloudRecord {
            walk: idx(f[0])?,
            step: idx(f[1])?,
            e_t: num(f[2])?,
            e_g: if f[3].is_empty() {
                None
            } else {
                Some(num(f[3])?)
            },
            grad_mag: num(f[4])?,
            curvature: match f[5] {
                "none" => None,
                c => Some(
                    c.parse()
                        .map_err(|_| bad(row, format!("unknown curvature '{c}'")))?,
                ),
            },
        });
    }
    Ok(out)
}

/// Per-walk accuracy at the last step.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkRow {
    pub walk: usize,
    pub seed: u64,
    pub ok: bool,
    pub train_accuracy: Option<f64>,
    pub test_accuracy: Option<f64>,
    pub error: Option<String>,
}

const WALKS_HEADER: &str = "walk,seed,status,train_accuracy,test_accuracy,error";

fn render_walks(rows: &[WalkRow]) -> String {
    let mut s = format!("{WALKS_HEADER}\n");
    for r in rows {
        let error = r.error.as_deref().unwrap_or("").replace([',', '\n'], ";");
        let _ = writeln!(
            s,
            "{},{},{},{},{},{}",
            r.walk,
            r.seed,
            if r.ok { "ok" } else { "failed" },
            opt(r.train_accuracy),
            opt(r.test_accuracy),
            error
        );
    }
    s
}

fn read_walks(path: &Path) -> Result<Vec<WalkRow>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let bad = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let mut lines = text.lines();
    if lines.next() != Some(WALKS_HEADER) {
        return Err(bad("unexpected header".into()));
    }
    lines
        .map(|line| {
            let f: Vec<&str> = line.splitn(6, ',').collect();
            if f.len() != 6 {
                return Err(bad(format!("malformed row '{line}'")));
            }
            let num = |s: &str| -> Result<Option<f64>> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse()
                        .map(Some)
                        .map_err(|_| bad(format!("'{s}' is not a number")))
                }
            };
            Ok(WalkRow {
                walk: f[0]
                    .parse()
                    .map_err(|_| bad(format!("bad walk index '{}'", f[0])))?,
                seed: f[1]
                    .parse()
                    .map_err(|_| bad(format!("bad seed '{}'", f[1])))?,
                ok: f[2] == "ok",
                train_accuracy: num(f[3])?,
                test_accuracy: num(f[4])?,
                error: (!f[5].is_empty()).then(|| f[5].to_string()),
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationSummary {
    pub train_mean: f64,
    pub train_std: f64,
    pub test: Option<(f64, f64)>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    (
        mean,
        (v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n).sqrt(),
    )
}

pub fn summarise_accuracy(rows: &[WalkRow]) -> Result<ClassificationSummary> {
    let train: Vec<f64> = rows
        .iter()
        .filter(|r| r.ok)
        .filter_map(|r| r.train_accuracy)
        .collect();
    if train.is_empty() {
        return Err(Error::usage("no successful walks to summarise"));
    }
    let test: Vec<f64> = rows
        .iter()
        .filter(|r| r.ok)
        .filter_map(|r| r.test_accuracy)
        .collect();
    let (train_mean, train_std) = mean_std(&train);
    Ok(ClassificationSummary {
        train_mean,
        train_std,
        test: (!test.is_empty()).then(|| mean_std(&test)),
    })
}

/// Everything reported for one run directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub problem: Problem,
    pub loss: LossKind,
    pub granularity: Granularity,
    pub init_range: f64,
    pub walks: usize,
    pub failed: usize,
    pub train_basins: BasinEstimate,
    pub test_basins: Option<BasinEstimate>,
    pub accuracy: ClassificationSummary,
}

/// Groups cloud records into per-walk E_t and E_g series, in walk order.
fn series_by_walk(records: &[LGCloudRecord]) -> BTreeMap<usize, (Vec<f64>, Option<Vec<f64>>)> {
    let mut grouped: BTreeMap<usize, Vec<&LGCloudRecord>> = BTreeMap::new();
    for r in records {
        grouped.entry(r.walk).or_default().push(r);
    }
    grouped
        .into_iter()
        .map(|(w, mut rs)| {
            rs.sort_by_key(|r| r.step);
            let e_t = rs.iter().map(|r| r.e_t).collect();
            let e_g = rs.iter().map(|r| r.e_g).collect::<Option<Vec<f64>>>();
            (w, (e_t, e_g))
        })
        .collect()
}

/// Per-walk basin estimates for E_t and (when present) E_g.
pub fn basin_rows(
    records: &[LGCloudRecord],
) -> Result<Vec<(usize, WalkBasins, Option<WalkBasins>)>> {
    let params = StagnationParams::default();
    series_by_walk(records)
        .into_iter()
        .map(|(w, (e_t, e_g))| {
            let t = analyse_walk(&e_t, &params)?;
            let g = e_g.map(|s| analyse_walk(&s, &params)).transpose()?;
            Ok((w, t, g))
        })
        .collect()
}

fn render_basins(rows: &[(usize, WalkBasins, Option<WalkBasins>)]) -> String {
    let mut s = String::from("walk,series,n_stag,l_stag,window\n");
    for (w, t, g) in rows {
        let _ = writeln!(s, "{w},e_t,{},{},{}", t.n, t.l, t.window);
        if let Some(g) = g {
            let _ = writeln!(s, "{w},e_g,{},{},{}", g.n, g.l, g.window);
        }
    }
    s
}

fn summarise_parts(
    config: &ExperimentConfig,
    records: &[LGCloudRecord],
    walks: &[WalkRow],
) -> Result<RunSummary> {
    let rows = basin_rows(records)?;
    if rows.is_empty() {
        return Err(Error::usage("run has no successful walks"));
    }
    let t: Vec<WalkBasins> = rows.iter().map(|r| r.1).collect();
    let g: Option<Vec<WalkBasins>> = rows.iter().map(|r| r.2).collect();
    Ok(RunSummary {
        problem: config.problem,
        loss: config.loss,
        granularity: config.granularity,
        init_range: config.init_range,
        walks: walks.len(),
        failed: walks.iter().filter(|r| !r.ok).count(),
        train_basins: aggregate(&t)?,
        test_basins: g
            .filter(|v| !v.is_empty())
            .map(|v| aggregate(&v))
            .transpose()?,
        accuracy: summarise_accuracy(walks)?,
    })
}

/// Reads a run directory back and recomputes its summary.
pub fn load_run_summary(dir: &Path) -> Result<RunSummary> {
    let missing: Vec<String> = [CONFIG_FILE, WALKS_FILE, CLOUD_FILE]
        .iter()
        .filter(|f| !dir.join(f).is_file())
        .map(|f| f.to_string())
        .collect();
    if !missing.is_empty() {
        return Err(Error::IncompleteRun {
            dir: dir.to_path_buf(),
            missing,
        });
    }
    let cfg_path = dir.join(CONFIG_FILE);
    let text = fs::read_to_string(&cfg_path).map_err(|e| Error::io(&cfg_path, e))?;
    let config = ExperimentConfig::from_pairs(&parse_config_text(&text)?)?;
    let walks = read_walks(&dir.join(WALKS_FILE))?;
    if walks.is_empty() {
        return Err(Error::usage(format!("{} lists no walks", dir.display())));
    }
    let records = read_lg_cloud(&dir.join(CLOUD_FILE))?;
    summarise_parts(&config, &records, &walks)
}

/// Five decimal places.
pub fn fmt5(x: f64) -> String {
    format!("{x:.5}")
}

fn setting_label(init_range: f64, granularity: Granularity) -> String {
    format!("[-{init_range},{init_range}], {granularity}")
}

/// Paper-style tables: rows are (init range, granularity), columns are losses.
pub fn render_tables(summaries: &[RunSummary]) -> Result<String> {
    if summaries.is_empty() {
        return Err(Error::usage("nothing to summarise"));
    }
    let mut out = String::new();
    let problems: BTreeSet<&str> = summaries.iter().map(|s| s.problem.name()).collect();
    for problem in problems {
        let runs: Vec<&RunSummary> = summaries
            .iter()
            .filter(|s| s.problem.name() == problem)
            .collect();
        let mut losses: Vec<LossKind> = Vec::new();
        for l in [LossKind::Sse, LossKind::Ce] {
            if runs.iter().any(|r| r.loss == l) {
                losses.push(l);
            }
        }
        let mut settings: Vec<(f64, Granularity)> = Vec::new();
        for r in &runs {
            if !settings.contains(&(r.init_range, r.granularity)) {
                settings.push((r.init_range, r.granularity));
            }
        }
        settings.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then((a.1 == Granularity::Macro).cmp(&(b.1 == Granularity::Macro)))
        });
        let find = |s: &(f64, Granularity), l: LossKind| {
            runs.iter()
                .find(|r| r.init_range == s.0 && r.granularity == s.1 && r.loss == l)
        };

        let _ = writeln!(out, "Problem: {problem}");
        let width = 22;
        let header = |out: &mut String, first: &str, cols: &[&str]| {
            let _ = write!(out, "{first:<20}");
            for l in &losses {
                for c in cols {
                    let _ = write!(
                        out,
                        "{:<width$}",
                        format!("{} {c}", l.as_str().to_uppercase())
                    );
                }
            }
            out.push('\n');
        };

        for (label, pick) in [
            (
                "E_t",
                (|r: &RunSummary| Some(r.train_basins.clone()))
                    as fn(&RunSummary) -> Option<BasinEstimate>,
            ),
            ("E_g", |r: &RunSummary| r.test_basins.clone()),
        ] {
            if !runs.iter().any(|r| pick(r).is_some()) {
                continue;
            }
            let _ = writeln!(
                out,
                "\nBasin of attraction estimates, {label} (standard deviation in parentheses)"
            );
            header(&mut out, "", &["n_stag", "l_stag"]);
            for s in &settings {
                let mut mean_line = format!("{:<20}", setting_label(s.0, s.1));
                let mut std_line = format!("{:<20}", "");
                for &l in &losses {
                    match find(s, l).and_then(|r| pick(r)) {
                        Some(b) => {
                            let _ = write!(
                                mean_line,
                                "{:<width$}{:<width$}",
                                fmt5(b.n_stag),
                                fmt5(b.l_stag)
                            );
                            let _ = write!(
                                std_line,
                                "{:<width$}{:<width$}",
                                format!("({})", fmt5(b.n_stag_std)),
                                format!("({})", fmt5(b.l_stag_std))
                            );
                        }
                        None => {
                            let _ = write!(mean_line, "{:<width$}{:<width$}", "-", "-");
                            let _ = write!(std_line, "{:<width$}{:<width$}", "", "");
                        }
                    }
                }
                let _ = writeln!(out, "{}", mean_line.trim_end());
                let _ = writeln!(out, "{}", std_line.trim_end());
            }
        }

        let _ = writeln!(
            out,
            "\nClassification accuracy at the last step (standard deviation in parentheses)"
        );
        header(&mut out, "", &["C_t", "C_g"]);
        for s in &settings {
            let mut mean_line = format!("{:<20}", setting_label(s.0, s.1));
            let mut std_line = format!("{:<20}", "");
            for &l in &losses {
                match find(s, l) {
                    Some(r) => {
                        let a = &r.accuracy;
                        let (gm, gs) = a
                            .test
                            .map(|(m, sd)| (fmt5(m), format!("({})", fmt5(sd))))
                            .unwrap_or_else(|| ("-".into(), String::new()));
                        let _ = write!(mean_line, "{:<width$}{gm:<width$}", fmt5(a.train_mean));
                        let _ = write!(
                            std_line,
                            "{:<width$}{gs:<width$}",
                            format!("({})", fmt5(a.train_std))
                        );
                    }
                    None => {
                        let _ = write!(mean_line, "{:<width$}{:<width$}", "-", "-");
                        let _ = write!(std_line, "{:<width$}{:<width$}", "", "");
                    }
                }
            }
            let _ = writeln!(out, "{}", mean_line.trim_end());
            let _ = writeln!(out, "{}", std_line.trim_end());
        }

        let failed: usize = runs.iter().map(|r| r.failed).sum();
        if failed > 0 {
            let _ = writeln!(out, "\n{failed} walk(s) failed and are excluded");
        }
        out.push('\n');
    }
    Ok(out)
}

/// Summarises one or more run directories.
pub fn summarise_run(dirs: &[PathBuf]) -> Result<String> {
    let summaries = dirs
        .iter()
        .map(|d| load_run_summary(d))
        .collect::<Result<Vec<_>>>()?;
    render_tables(&summaries)
}

#[derive(Debug)]
pub struct RunReport {
    pub dir: PathBuf,
    pub walks: usize,
    pub failed: Vec<(usize, String)>,
    pub cloud_records: usize,
    pub summary: Option<RunSummary>,
    pub tables: String,
}

fn run_batch(config: &ExperimentConfig, data: &DatasetSplit) -> Result<Vec<WalkOutcome>> {
    let spec = config.spec();
    let base = config.walk_config()?;
    let go = || {
        run_walk_batch(
            &spec,
            data,
            &base,
            config.n_walks(),
            config.hessian_enabled(),
        )
    };
    #[cfg(feature = "parallel")]
    if let Some(threads) = config.threads {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .map_err(|e| Error::usage(format!("cannot start {threads} worker threads: {e}")))?;
        return pool.install(go);
    }
    go()
}

/// Runs the configured walks and writes the run directory.
///
/// Data problems abort before any walk starts. Walks that fail numerically
/// are listed in `walks.csv`; if every walk fails the directory is still
/// written and a numeric error is returned.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunReport> {
    let data = load_problem(config)?;
    let spec = config.spec();
    let outcomes = run_batch(config, &data)?;

    let dir = config.out.clone();
    let traces_dir = dir.join(TRACES_DIR);
    fs::create_dir_all(&traces_dir).map_err(|e| Error::io(&traces_dir, e))?;

    let mut rows = Vec::with_capacity(outcomes.len());
    let mut records = Vec::new();
    let mut params_text = String::from("walk,params\n");
    let mut failed = Vec::new();
    for o in &outcomes {
        match &o.result {
            Ok(trace) => {
                let train_accuracy =
                    classification_accuracy(&spec, &trace.final_params, &data.train)?;
                let test_accuracy = if data.has_test() {
                    Some(classification_accuracy(
                        &spec,
                        &trace.final_params,
                        &data.test,
                    )?)
                } else {
                    None
                };
                rows.push(WalkRow {
                    walk: o.index,
                    seed: o.seed,
                    ok: true,
                    train_accuracy: Some(train_accuracy),
                    test_accuracy,
                    error: None,
                });
                let walk_records: Vec<LGCloudRecord> = cloud_records(o.index, trace).collect();
                let trace_path = traces_dir.join(format!("walk_{:05}.csv", o.index));
                write_file(&trace_path, &render_lg_cloud(&walk_records))?;
                records.extend(walk_records);
                let values: Vec<String> = trace
                    .final_params
                    .as_slice()
                    .iter()
                    .map(|v| v.to_string())
                    .collect();
                let _ = writeln!(params_text, "{},{}", o.index, values.join(" "));
            }
            Err(e) => {
                failed.push((o.index, e.to_string()));
                rows.push(WalkRow {
                    walk: o.index,
                    seed: o.seed,
                    ok: false,
                    train_accuracy: None,
                    test_accuracy: None,
                    error: Some(e.to_string()),
                });
            }
        }
    }

    write_file(
        &dir.join(CONFIG_FILE),
        &render_config_text(&config.to_pairs()),
    )?;
    write_file(&dir.join(WALKS_FILE), &render_walks(&rows))?;
    write_file(&dir.join(CLOUD_FILE), &render_lg_cloud(&records))?;
    write_file(&dir.join(PARAMS_FILE), &params_text)?;

    if records.is_empty() {
        return Err(Error::Numeric {
            message: format!("all {} walks failed", outcomes.len()),
            seed: None,
            step: None,
        });
    }

    let basins = basin_rows(&records)?;
    write_file(&dir.join(BASINS_FILE), &render_basins(&basins))?;
    let summary = summarise_parts(config, &records, &rows)?;
    let tables = render_tables(std::slice::from_ref(&summary))?;
    write_file(&dir.join(SUMMARY_FILE), &tables)?;

    Ok(RunReport {
        dir,
        walks: outcomes.len(),
        failed,
        cloud_records: records.len(),
        summary: Some(summary),
        tables,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pairs(kv: &[(&str, &str)]) -> BTreeMap<String, String> {
        kv.iter()
            .map(|(k, v)| (k.to_string(), v.to_string()))
            .collect()
    }

    #[test]
    fn config_round_trip() {
        let cfg = ExperimentConfig::from_pairs(&pairs(&[
            ("problem", "glass"),
            ("loss", "ce"),
            ("granularity", "macro"),
            ("init-range", "10"),
            ("walks", "7"),
            ("seed", "12"),
            ("hessian", "off"),
            ("delimiter", "tab"),
            ("label-column", "0"),
            ("ignore-columns", "1,2"),
        ]))
        .unwrap();
        assert_eq!(cfg.schema.delimiter, b'\t');
        assert_eq!(cfg.schema.ignore_columns, vec![1, 2]);
        let again = ExperimentConfig::from_pairs(
            &parse_config_text(&render_config_text(&cfg.to_pairs())).unwrap(),
        )
        .unwrap();
        assert_eq!(cfg, again);
    }

    #[test]
    fn config_errors() {
        let base = [
            ("problem", "xor"),
            ("loss", "sse"),
            ("granularity", "micro"),
        ];
        assert!(ExperimentConfig::from_pairs(&pairs(&base)).is_ok());
        let mut bad = pairs(&base);
        bad.insert("init-range".into(), "5".into());
        assert!(ExperimentConfig::from_pairs(&bad).is_err());
        let mut bad = pairs(&base);
        bad.insert("colour".into(), "red".into());
        assert!(ExperimentConfig::from_pairs(&bad).is_err());
        assert!(ExperimentConfig::from_pairs(&pairs(&base[..2])).is_err());
        assert!(parse_config_text("problem xor").is_err());
    }

    #[test]
    fn hessian_auto_respects_cap() {
        let xor = ExperimentConfig::new(Problem::Xor, LossKind::Sse, Granularity::Micro, 1.0);
        assert!(xor.hessian_enabled());
        let mnist = ExperimentConfig::new(Problem::Mnist, LossKind::Sse, Granularity::Micro, 1.0);
        assert!(!mnist.hessian_enabled());
    }

    #[test]
    fn accuracy_rules() {
        let spec = NetworkSpec::new(1, 1, 1).unwrap();
        let zero = ParameterVector::zeros(&spec);
        // all outputs are 0.5, which counts as class 0
        let pats = vec![
            Pattern::new(vec![0.0], vec![0.0]),
            Pattern::new(vec![1.0], vec![1.0]),
            Pattern::new(vec![2.0], vec![0.0]),
        ];
        assert!((classification_accuracy(&spec, &zero, &pats).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(classification_accuracy(&spec, &zero, &[]).is_err());
        assert_eq!(predicted_class(&[0.1, 0.7, 0.7]), 1);
        assert_eq!(predicted_class(&[0.51]), 1);
    }

    #[test]
    fn rounding() {
        assert_eq!(fmt5(1.8888888), "1.88889");
        assert_eq!(fmt5(0.0), "0.00000");
    }

    #[test]
    fn cloud_rows() {
        let recs: Vec<LGCloudRecord> = (0..2)
            .flat_map(|w| {
                (0..3).map(move |s| LGCloudRecord {
                    walk: w,
                    step: s,
                    e_t: 0.1 * s as f64 + 1.0 / 3.0,
                    e_g: (w == 1).then_some(2.0 / 7.0),
                    grad_mag: 1e-7 * (s + 1) as f64,
                    curvature: (s == 1).then_some(CurvatureClass::Saddle),
                })
            })
            .collect();
        let text = render_lg_cloud(&recs);
        assert_eq!(text.lines().count(), 7);
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        emit_lg_cloud(&recs, &p).unwrap();
        assert_eq!(read_lg_cloud(&p).unwrap(), recs);
        assert!(emit_lg_cloud(&[], &p).is_err());
    }

    #[test]
    fn incomplete_run_lists_missing_files() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(CONFIG_FILE), "problem = xor\n").unwrap();
        match load_run_summary(dir.path()) {
            Err(Error::IncompleteRun { missing, .. }) => {
                assert_eq!(
                    missing,
                    vec![WALKS_FILE.to_string(), CLOUD_FILE.to_string()]
                );
            }
            other => panic!("unexpected {other:?}"),
        }
    }
}
