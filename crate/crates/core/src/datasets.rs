//! Benchmark problems: built-in XOR, delimited-file and MNIST IDX ingestion,
//! standardisation, target encoding, train/test splitting and batching.

use std::collections::{BTreeSet, HashMap, HashSet};
use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::nn::{NetworkSpec, Pattern};
use crate::rng::{derive_seed, WalkRng};

pub const TRAIN_FRACTION: f64 = 0.8;
pub const MNIST_BATCH: usize = 100;

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

/// The seven benchmark problems and their network shapes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Problem {
    Xor,
    Iris,
    Diabetes,
    Glass,
    Cancer,
    Heart,
    Mnist,
}

impl Problem {
    pub const ALL: [Problem; 7] = [
        Problem::Xor,
        Problem::Iris,
        Problem::Diabetes,
        Problem::Glass,
        Problem::Cancer,
        Problem::Heart,
        Problem::Mnist,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            Problem::Xor => "xor",
            Problem::Iris => "iris",
            Problem::Diabetes => "diabetes",
            Problem::Glass => "glass",
            Problem::Cancer => "cancer",
            Problem::Heart => "heart",
            Problem::Mnist => "mnist",
        }
    }

    /// `(inputs, hidden, outputs)`.
    pub fn layers(&self) -> (usize, usize, usize) {
        match self {
            Problem::Xor => (2, 2, 1),
            Problem::Iris => (4, 4, 3),
            Problem::Diabetes => (8, 8, 1),
            Problem::Glass => (9, 9, 6),
            Problem::Cancer => (30, 10, 1),
            Problem::Heart => (32, 10, 1),
            Problem::Mnist => (784, 10, 10),
        }
    }

    pub fn spec(&self) -> NetworkSpec {
        let (i, h, o) = self.layers();
        NetworkSpec::new(i, h, o).expect("registry sizes are positive")
    }

    /// Class count implied by the output layer.
    pub fn n_classes(&self) -> usize {
        match self.layers().2 {
            1 => 2,
            k => k,
        }
    }

    /// Whether losses and gradients are computed on random batches.
    pub fn uses_batches(&self) -> bool {
        matches!(self, Problem::Mnist)
    }
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Problem {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Problem::ALL
            .into_iter()
            .find(|p| p.name() == lower)
            .ok_or_else(|| Error::usage(format!("unknown problem '{s}'")))
    }
}

/// Labelled feature vectors before target encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDataset {
    pub name: String,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub class_names: Vec<String>,
}

impl RawDataset {
    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }
}

/// Fitted per-feature transform `x ↦ (x − mean) / stdev` (stdev 0 leaves the value centred).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureScaling {
    pub mean: f64,
    pub stdev: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetSplit {
    pub train: Vec<Pattern>,
    pub test: Vec<Pattern>,
    /// Indices into the source dataset, in the order the patterns appear.
    pub train_indices: Vec<usize>,
    pub test_indices: Vec<usize>,
    pub standardisation: Vec<FeatureScaling>,
}

impl DatasetSplit {
    pub fn has_test(&self) -> bool {
        !self.test.is_empty()
    }
}

/// The four XOR patterns, unstandardised, all in the training set.
pub fn xor_dataset() -> DatasetSplit {
    let train = [
        (0.0, 0.0, 0.0),
        (0.0, 1.0, 1.0),
        (1.0, 0.0, 1.0),
        (1.0, 1.0, 0.0),
    ]
    .iter()
    .map(|&(a, b, t)| Pattern::new(vec![a, b], vec![t]))
    .collect();
    DatasetSplit {
        train,
        test: Vec::new(),
        train_indices: (0..4).collect(),
        test_indices: Vec::new(),
        standardisation: Vec::new(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Last,
}

/// Column roles for delimited files.
///
/// Every column that is neither the label nor listed in `ignore_columns` is a
/// numeric feature. Without `labels`, class indices follow the sorted set of
/// distinct label strings (numerically sorted when all parse as numbers).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    pub delimiter: u8,
    pub has_header: bool,
    pub label_column: LabelColumn,
    pub ignore_columns: Vec<usize>,
    pub labels: Option<Vec<String>>,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            delimiter: b',',
            has_header: true,
            label_column: LabelColumn::Last,
            ignore_columns: Vec::new(),
            labels: None,
        }
    }
}

fn ingestion(path: &Path, row: Option<usize>, message: impl Into<String>) -> Error {
    Error::Ingestion {
        path: path.to_path_buf(),
        row,
        message: message.into(),
    }
}

pub fn load_csv(path: &Path, schema: &CsvSchema) -> Result<RawDataset> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    read_delimited(file, path, name, schema)
}

/// Like [`load_csv`] for in-memory data; `name` labels the dataset and its errors.
pub fn load_csv_from_reader<R: Read>(
    reader: R,
    name: &str,
    schema: &CsvSchema,
) -> Result<RawDataset> {
    read_delimited(reader, Path::new(name), name.to_string(), schema)
}

fn read_delimited<R: Read>(
    file: R,
    path: &Path,
    name: String,
    schema: &CsvSchema,
) -> Result<RawDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .has_headers(schema.has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(file);

    let mut features = Vec::new();
    let mut raw_labels = Vec::new();
    let mut width = None;
    for (i, record) in reader.records().enumerate() {
        let row = i + 1 + usize::from(schema.has_header);
        let record = record.map_err(|e| ingestion(path, Some(row), e.to_string()))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        match width {
            None => width = Some(record.len()),
            Some(w) if w != record.len() => {
                return Err(ingestion(
                    path,
                    Some(row),
                    format!("expected {w} fields, found {}", record.len()),
                ))
            }
            _ => {}
        }
        let label_idx = match schema.label_column {
            LabelColumn::Index(c) => c,
            LabelColumn::Last => record.len() - 1,
        };
        if label_idx >= record.len() {
            return Err(ingestion(
                path,
                Some(row),
                format!("no label column {label_idx}"),
            ));
        }
        let mut x = Vec::with_capacity(record.len());
        for (c, field) in record.iter().enumerate() {
            if c == label_idx || schema.ignore_columns.contains(&c) {
                continue;
            }
            let v: f64 = field.parse().map_err(|_| {
                ingestion(
                    path,
                    Some(row),
                    format!("column {c}: '{field}' is not a number"),
                )
            })?;
            if !v.is_finite() {
                return Err(ingestion(
                    path,
                    Some(row),
                    format!("column {c} is not finite"),
                ));
            }
            x.push(v);
        }
        features.push(x);
        raw_labels.push((row, record[label_idx].to_string()));
    }
    if features.is_empty() {
        return Err(ingestion(path, None, "no data rows"));
    }

    let class_names: Vec<String> = match &schema.labels {
        Some(declared) => declared.clone(),
        None => {
            let distinct: BTreeSet<&str> = raw_labels.iter().map(|(_, l)| l.as_str()).collect();
            let mut names: Vec<String> = distinct.into_iter().map(String::from).collect();
            if names.iter().all(|n| n.parse::<f64>().is_ok()) {
                names.sort_by(|a, b| a.parse::<f64>().unwrap().total_cmp(&b.parse().unwrap()));
            }
            names
        }
    };
    let index: HashMap<&str, usize> = class_names
        .iter()
        .enumerate()
        .map(|(i, n)| (n.as_str(), i))
        .collect();
    let labels = raw_labels
        .iter()
        .map(|(row, l)| {
            index
                .get(l.as_str())
                .copied()
                .ok_or_else(|| ingestion(path, Some(*row), format!("unknown label '{l}'")))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(RawDataset {
        name,
        features,
        labels,
        n_classes: class_names.len(),
        class_names,
    })
}

/// Centres every feature and scales it to unit population variance.
pub fn standardise(raw: &RawDataset) -> Result<(RawDataset, Vec<FeatureScaling>)> {
    if raw.len() < 2 {
        return Err(Error::usage("standardisation needs at least two patterns"));
    }
    let n = raw.len() as f64;
    let scaling: Vec<FeatureScaling> = (0..raw.n_features())
        .map(|c| {
            let mean = raw.features.iter().map(|x| x[c]).sum::<f64>() / n;
            let var = raw
                .features
                .iter()
                .map(|x| (x[c] - mean).powi(2))
                .sum::<f64>()
                / n;
            FeatureScaling {
                mean,
                stdev: var.sqrt(),
            }
        })
        .collect();
    let features = raw
        .features
        .iter()
        .map(|x| {
            x.iter()
                .zip(&scaling)
                .map(|(v, s)| {
                    let centred = v - s.mean;
                    if s.stdev > 0.0 {
                        centred / s.stdev
                    } else {
                        centred
                    }
                })
                .collect()
        })
        .collect();
    Ok((
        RawDataset {
            features,
            ..raw.clone()
        },
        scaling,
    ))
}

/// Binary classes use one output; more classes use one-hot vectors.
pub fn encode_target(label: usize, n_classes: usize) -> Vec<f64> {
    if n_classes <= 2 {
        vec![if label == 1 { 1.0 } else { 0.0 }]
    } else {
        let mut t = vec![0.0; n_classes];
        t[label] = 1.0;
        t
    }
}

pub fn encode_targets(raw: &RawDataset) -> Result<Vec<Pattern>> {
    if raw.n_classes < 2 {
        return Err(Error::usage(format!(
            "{} has {} class(es); at least two are needed",
            raw.name, raw.n_classes
        )));
    }
    Ok(raw
        .features
        .iter()
        .zip(&raw.labels)
        .map(|(x, &l)| Pattern::new(x.clone(), encode_target(l, raw.n_classes)))
        .collect())
}

/// Shuffled split with `⌊fraction·P⌋` training patterns.
pub fn split(raw: &RawDataset, fraction: f64, seed: u64) -> Result<DatasetSplit> {
    if raw.len() < 5 {
        return Err(Error::usage("splitting needs at least five patterns"));
    }
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::usage(format!(
            "split fraction {fraction} outside [0, 1]"
        )));
    }
    let patterns = encode_targets(raw)?;
    let mut order: Vec<usize> = (0..raw.len()).collect();
    WalkRng::new(seed).shuffle(&mut order);
    let n_train = (fraction * raw.len() as f64).floor() as usize;
    let (train_idx, test_idx) = order.split_at(n_train);
    Ok(DatasetSplit {
        train: train_idx.iter().map(|&i| patterns[i].clone()).collect(),
        test: test_idx.iter().map(|&i| patterns[i].clone()).collect(),
        train_indices: train_idx.to_vec(),
        test_indices: test_idx.to_vec(),
        standardisation: Vec::new(),
    })
}

/// Standardise on the full dataset, then split 80/20.
pub fn prepare(raw: &RawDataset, seed: u64) -> Result<DatasetSplit> {
    let (scaled, scaling) = standardise(raw)?;
    let mut s = split(&scaled, TRAIN_FRACTION, seed)?;
    s.standardisation = scaling;
    Ok(s)
}

fn read_idx(path: &Path, magic: u32, n_dims: usize) -> Result<(Vec<usize>, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let format = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let header = 4 + 4 * n_dims;
    if bytes.len() < header {
        return Err(format(format!(
            "file too short for an IDX header ({} bytes)",
            bytes.len()
        )));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != magic {
        return Err(format(format!(
            "bad magic number 0x{:08x}, expected 0x{magic:08x}",
            word(0)
        )));
    }
    let dims: Vec<usize> = (1..=n_dims).map(|i| word(i) as usize).collect();
    let expected: usize = dims.iter().product();
    let body = &bytes[header..];
    if body.len() != expected {
        return Err(format(format!(
            "header declares {expected} data bytes but {} are present",
            body.len()
        )));
    }
    Ok((dims, body.to_vec()))
}

/// Reads an uncompressed IDX image/label file pair; pixels are scaled to `[0, 1]`.
pub fn load_mnist_idx(images_path: &Path, labels_path: &Path) -> Result<RawDataset> {
    let (img_dims, pixels) = read_idx(images_path, IDX_IMAGES_MAGIC, 3)?;
    let (lbl_dims, labels) = read_idx(labels_path, IDX_LABELS_MAGIC, 1)?;
    if img_dims[0] != lbl_dims[0] {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            message: format!("{} labels for {} images", lbl_dims[0], img_dims[0]),
        });
    }
    if let Some(&bad) = labels.iter().find(|&&l| l > 9) {
        return Err(Error::Format {
            path: labels_path.to_path_buf(),
            message: format!("label {bad} outside 0-9"),
        });
    }
    let size = img_dims[1] * img_dims[2];
    let features = pixels
        .chunks_exact(size.max(1))
        .take(img_dims[0])
        .map(|img| img.iter().map(|&p| p as f64 / 255.0).collect())
        .collect();
    Ok(RawDataset {
        name: "mnist".into(),
        features,
        labels: labels.into_iter().map(usize::from).collect(),
        n_classes: 10,
        class_names: (0..10).map(|d| d.to_string()).collect(),
    })
}

/// Standard MNIST file names; the `t10k` pair is optional.
pub fn load_mnist_dir(dir: &Path) -> Result<RawDataset> {
    let mut data = load_mnist_idx(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
    )?;
    let test_images: PathBuf = dir.join("t10k-images-idx3-ubyte");
    if test_images.exists() {
        let extra = load_mnist_idx(&test_images, &dir.join("t10k-labels-idx1-ubyte"))?;
        data.features.extend(extra.features);
        data.labels.extend(extra.labels);
    }
    Ok(data)
}

/// Draws fixed-size batches without replacement.
///
/// Batch `k` is a pure function of `(seed, k)`, so batches can be replayed
/// in any order.
#[derive(Debug, Clone)]
pub struct BatchSampler<'a> {
    source: &'a [Pattern],
    batch_size: usize,
    seed: u64,
}

impl<'a> BatchSampler<'a> {
    pub fn new(source: &'a [Pattern], batch_size: usize, seed: u64) -> Result<Self> {
        if batch_size == 0 || source.len() < batch_size {
            return Err(Error::usage(format!(
                "cannot draw batches of {batch_size} from {} patterns",
                source.len()
            )));
        }
        Ok(BatchSampler {
            source,
            batch_size,
            seed,
        })
    }

    /// Distinct source indices of batch `call_index` (Floyd's sampling).
    pub fn batch_indices(&self, call_index: u64) -> Vec<usize> {
        let n = self.source.len();
        let mut rng = WalkRng::new(derive_seed(self.seed, call_index));
        let mut chosen = HashSet::with_capacity(self.batch_size);
        let mut order = Vec::with_capacity(self.batch_size);
        for j in n - self.batch_size..n {
            let t = rng.below(j + 1);
            let pick = if chosen.contains(&t) { j } else { t };
            chosen.insert(pick);
            order.push(pick);
        }
        order
    }

    pub fn next_batch(&self, call_index: u64) -> Vec<Pattern> {
        self.batch_indices(call_index)
            .into_iter()
            .map(|i| self.source[i].clone())
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(features: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> RawDataset {
        RawDataset {
            name: "t".into(),
            features,
            labels,
            n_classes,
            class_names: (0..n_classes).map(|c| c.to_string()).collect(),
        }
    }

    #[test]
    fn registry_dimensions() {
        let dims: Vec<usize> = Problem::ALL.iter().map(|p| p.spec().param_dim()).collect();
        assert_eq!(dims, vec![9, 35, 81, 150, 321, 341, 7960]);
        assert_eq!("Iris".parse::<Problem>().unwrap(), Problem::Iris);
        assert!("wine".parse::<Problem>().is_err());
    }

    #[test]
    fn xor_truth_table() {
        let d = xor_dataset();
        assert_eq!(d.train.len(), 4);
        assert!(d.test.is_empty());
        assert_eq!(d.train.iter().map(|p| p.targets[0]).sum::<f64>(), 2.0);
        for p in &d.train {
            assert!(p.inputs.iter().all(|&v| v == 0.0 || v == 1.0));
            let xor = (p.inputs[0] != p.inputs[1]) as u8 as f64;
            assert_eq!(p.targets[0], xor);
        }
    }

    #[test]
    fn standardise_examples() {
        let (s, sc) =
            standardise(&raw(vec![vec![1.0, 5.0], vec![3.0, 5.0]], vec![0, 1], 2)).unwrap();
        assert_eq!(s.features, vec![vec![-1.0, 0.0], vec![1.0, 0.0]]);
        assert_eq!(
            sc[0],
            FeatureScaling {
                mean: 2.0,
                stdev: 1.0
            }
        );
        assert_eq!(sc[1].stdev, 0.0);
        assert!(standardise(&raw(vec![vec![1.0]], vec![0], 2)).is_err());
    }

    #[test]
    fn target_encoding() {
        assert_eq!(encode_target(1, 2), vec![1.0]);
        assert_eq!(encode_target(0, 2), vec![0.0]);
        assert_eq!(encode_target(2, 3), vec![0.0, 0.0, 1.0]);
        assert!(encode_targets(&raw(vec![vec![0.0]], vec![0], 1)).is_err());
    }

    #[test]
    fn split_sizes() {
        let make = |p: usize| {
            raw(
                (0..p).map(|i| vec![i as f64]).collect(),
                (0..p).map(|i| i % 2).collect(),
                2,
            )
        };
        let s = split(&make(150), 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (120, 30));
        let s = split(&make(768), 0.8, 1).unwrap();
        assert_eq!((s.train.len(), s.test.len()), (614, 154));
        assert_eq!(
            split(&make(768), 0.8, 9).unwrap(),
            split(&make(768), 0.8, 9).unwrap()
        );
        assert!(split(&make(4), 0.8, 1).is_err());
    }

    #[test]
    fn batch_sampler_contract() {
        let pats: Vec<Pattern> = (0..500)
            .map(|i| Pattern::new(vec![i as f64], vec![0.0]))
            .collect();
        let b = BatchSampler::new(&pats, 100, 5).unwrap();
        let idx = b.batch_indices(0);
        assert_eq!(idx.len(), 100);
        assert_eq!(idx.iter().collect::<HashSet<_>>().len(), 100);
        assert_eq!(idx, b.batch_indices(0));
        assert_ne!(idx, b.batch_indices(1));
        assert!(BatchSampler::new(&pats[..50], 100, 5).is_err());
    }
}
