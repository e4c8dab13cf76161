use std::fs;
use std::path::Path;

use lgwalk_core::datasets::{
    encode_target, load_csv, load_csv_from_reader, load_mnist_dir, load_mnist_idx, prepare, split,
    standardise, BatchSampler, CsvSchema, LabelColumn, Problem,
};
use lgwalk_core::experiment::IRIS_CSV;
use lgwalk_core::Error;

fn iris_raw() -> lgwalk_core::datasets::RawDataset {
    load_csv_from_reader(IRIS_CSV.as_bytes(), "iris", &CsvSchema::default()).unwrap()
}

#[test]
fn iris_shape() {
    let raw = iris_raw();
    assert_eq!(raw.len(), 150);
    assert_eq!(raw.n_features(), 4);
    assert_eq!(raw.n_classes, 3);
    assert_eq!(raw.class_names, ["setosa", "versicolor", "virginica"]);
    for c in 0..3 {
        assert_eq!(raw.labels.iter().filter(|&&l| l == c).count(), 50);
    }
    assert_eq!(Problem::Iris.layers().0, raw.n_features());
}

#[test]
fn standardisation_moments_and_idempotence() {
    let raw = iris_raw();
    let (scaled, scaling) = standardise(&raw).unwrap();
    assert_eq!(scaling.len(), 4);
    for c in 0..4 {
        let col: Vec<f64> = scaled.features.iter().map(|x| x[c]).collect();
        let mean = col.iter().sum::<f64>() / 150.0;
        let sd = (col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 150.0).sqrt();
        assert!(
            mean.abs() < 1e-9 && (sd - 1.0).abs() < 1e-9,
            "column {c}: {mean} {sd}"
        );
    }
    let (twice, _) = standardise(&scaled).unwrap();
    for (a, b) in twice
        .features
        .iter()
        .flatten()
        .zip(scaled.features.iter().flatten())
    {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn zero_variance_columns_are_centred() {
    let text = "a,b,y\n1,5,x\n2,5,y\n3,5,x\n";
    let raw = load_csv_from_reader(text.as_bytes(), "t", &CsvSchema::default()).unwrap();
    let (scaled, scaling) = standardise(&raw).unwrap();
    assert_eq!(scaling[1].stdev, 0.0);
    assert!(scaled.features.iter().all(|x| x[1] == 0.0));
}

#[test]
fn split_partitions_the_patterns() {
    let raw = iris_raw();
    let s = prepare(&raw, 42).unwrap();
    assert_eq!(s.train.len(), 120);
    assert_eq!(s.test.len(), 30);
    let mut all: Vec<usize> = s
        .train_indices
        .iter()
        .chain(&s.test_indices)
        .copied()
        .collect();
    all.sort();
    assert_eq!(all, (0..150).collect::<Vec<_>>());
    assert_eq!(prepare(&raw, 42).unwrap(), s);
    assert_ne!(prepare(&raw, 43).unwrap().train_indices, s.train_indices);
    let odd = split(&raw, 0.5, 1).unwrap();
    assert_eq!(odd.train.len(), 75);
}

#[test]
fn target_encoding_round_trips() {
    assert_eq!(encode_target(0, 2), vec![0.0]);
    assert_eq!(encode_target(1, 2), vec![1.0]);
    for k in 3..12 {
        for l in 0..k {
            let t = encode_target(l, k);
            assert_eq!(t.iter().sum::<f64>(), 1.0);
            assert_eq!(t.iter().position(|&v| v == 1.0), Some(l));
        }
    }
}

#[test]
fn schema_roles() {
    let text = "7;0.5;1.5;b\n8;0.25;2.5;a\n9;0.75;3.5;b\n";
    let schema = CsvSchema {
        delimiter: b';',
        has_header: false,
        label_column: LabelColumn::Index(3),
        ignore_columns: vec![0],
        labels: Some(vec!["b".into(), "a".into()]),
    };
    let raw = load_csv_from_reader(text.as_bytes(), "t", &schema).unwrap();
    assert_eq!(
        raw.features,
        vec![vec![0.5, 1.5], vec![0.25, 2.5], vec![0.75, 3.5]]
    );
    assert_eq!(raw.labels, vec![0, 1, 0]);
}

#[test]
fn numeric_labels_sort_numerically() {
    let text = "x,y\n1,10\n2,9\n3,10\n4,2\n";
    let raw = load_csv_from_reader(text.as_bytes(), "t", &CsvSchema::default()).unwrap();
    assert_eq!(raw.class_names, ["2", "9", "10"]);
}

#[test]
fn malformed_csv_is_an_ingestion_error() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("empty.csv", "a,b,y\n"),
        ("ragged.csv", "a,b,y\n1,2,x\n3,y\n"),
        ("text.csv", "a,b,y\n1,2,x\n3,oops,y\n"),
    ];
    for (name, body) in cases {
        let path = dir.path().join(name);
        fs::write(&path, body).unwrap();
        let err = load_csv(&path, &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, Error::Ingestion { .. }), "{name}: {err}");
        assert_eq!(err.exit_code(), 2);
    }
    let unknown = CsvSchema {
        labels: Some(vec!["x".into()]),
        ..CsvSchema::default()
    };
    let path = dir.path().join("labels.csv");
    fs::write(&path, "a,y\n1,x\n2,z\n").unwrap();
    let err = load_csv(&path, &unknown).unwrap_err();
    assert!(
        matches!(err, Error::Ingestion { row: Some(_), .. }),
        "{err}"
    );
    assert!(load_csv(&dir.path().join("missing.csv"), &CsvSchema::default()).is_err());
}

fn idx(magic: u32, dims: &[u32], body: &[u8]) -> Vec<u8> {
    let mut b = magic.to_be_bytes().to_vec();
    for d in dims {
        b.extend(d.to_be_bytes());
    }
    b.extend_from_slice(body);
    b
}

fn write_mnist(dir: &Path, prefix: &str, n: u32, seed: u8) -> (Vec<u8>, Vec<u8>) {
    let pixels: Vec<u8> = (0..n * 784)
        .map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed))
        .collect();
    let labels: Vec<u8> = (0..n).map(|i| ((i as u8) + seed) % 10).collect();
    fs::write(
        dir.join(format!("{prefix}-images-idx3-ubyte")),
        idx(0x803, &[n, 28, 28], &pixels),
    )
    .unwrap();
    fs::write(
        dir.join(format!("{prefix}-labels-idx1-ubyte")),
        idx(0x801, &[n], &labels),
    )
    .unwrap();
    (pixels, labels)
}

#[test]
fn mnist_bytes_decode_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let (pixels, labels) = write_mnist(dir.path(), "train", 10, 0);
    let raw = load_mnist_idx(
        &dir.path().join("train-images-idx3-ubyte"),
        &dir.path().join("train-labels-idx1-ubyte"),
    )
    .unwrap();
    assert_eq!(raw.len(), 10);
    assert_eq!(raw.n_features(), 784);
    assert_eq!(raw.n_classes, 10);
    for i in 0..10 {
        assert_eq!(raw.labels[i], labels[i] as usize);
        for j in 0..784 {
            assert_eq!(raw.features[i][j], pixels[i * 784 + j] as f64 / 255.0);
        }
    }
    write_mnist(dir.path(), "t10k", 4, 3);
    let both = load_mnist_dir(dir.path()).unwrap();
    assert_eq!(both.len(), 14);
    assert_eq!(both.labels[10], 3);
}

#[test]
fn corrupt_idx_files_are_format_errors() {
    let dir = tempfile::tempdir().unwrap();
    write_mnist(dir.path(), "train", 3, 0);
    let images = dir.path().join("train-images-idx3-ubyte");
    let labels = dir.path().join("train-labels-idx1-ubyte");

    let bad_magic = dir.path().join("bad");
    fs::write(&bad_magic, idx(0x802, &[3, 28, 28], &[0; 3 * 784])).unwrap();
    assert!(matches!(
        load_mnist_idx(&bad_magic, &labels),
        Err(Error::Format { .. })
    ));

    let truncated = dir.path().join("short");
    fs::write(&truncated, idx(0x803, &[3, 28, 28], &[0; 3 * 784 - 1])).unwrap();
    assert!(matches!(
        load_mnist_idx(&truncated, &labels),
        Err(Error::Format { .. })
    ));

    let few = dir.path().join("few");
    fs::write(&few, idx(0x801, &[2], &[0, 1])).unwrap();
    assert!(load_mnist_idx(&images, &few).is_err());
    assert!(load_mnist_dir(&dir.path().join("nowhere")).is_err());
}

#[test]
fn batches_are_replayable_and_distinct() {
    let raw = iris_raw();
    let s = prepare(&raw, 1).unwrap();
    let sampler = BatchSampler::new(&s.train, 100, 9).unwrap();
    let a = sampler.batch_indices(3);
    assert_eq!(a.len(), 100);
    let mut u = a.clone();
    u.sort();
    u.dedup();
    assert_eq!(u.len(), 100);
    assert!(a.iter().all(|&i| i < s.train.len()));
    assert_eq!(sampler.batch_indices(3), a);
    assert_ne!(sampler.batch_indices(4), a);
    assert!(BatchSampler::new(&s.train, 121, 9).is_err());
}
