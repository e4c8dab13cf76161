use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lgwalk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lgwalk"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn run_xor(dir: &Path, seed: &str) -> Output {
    lgwalk(&[
        "run",
        "--problem",
        "xor",
        "--loss",
        "sse",
        "--granularity",
        "macro",
        "--init-range",
        "1",
        "--walks",
        "12",
        "--seed",
        seed,
        "--out",
        dir.to_str().unwrap(),
    ])
}

#[test]
fn run_summarise_plot() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("xor");
    let out = run_xor(&dir, "4");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout(&out).contains("n_stag"), "{}", stdout(&out));

    let summary = lgwalk(&["summarise", dir.to_str().unwrap()]);
    assert!(summary.status.success());
    assert_eq!(stdout(&summary), stdout(&out));

    let svg = tmp.path().join("cloud.svg");
    let plot = lgwalk(&[
        "plot",
        dir.to_str().unwrap(),
        "--out",
        svg.to_str().unwrap(),
        "--max-loss",
        "10",
    ]);
    assert!(
        plot.status.success(),
        "{}",
        String::from_utf8_lossy(&plot.stderr)
    );
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("class=\"marker\"").count(), 1200);

    let empty = lgwalk(&["plot", dir.to_str().unwrap(), "--max-loss", "0"]);
    assert_eq!(empty.status.code(), Some(1));
}

#[test]
fn config_file_and_flag_override() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.cfg");
    let dir = tmp.path().join("out");
    fs::write(
        &cfg,
        format!(
            "# small run\nproblem = xor\nloss = ce\ngranularity = macro\nwalks = 3\nseed = 1\nout = {}\n",
            dir.display()
        ),
    )
    .unwrap();
    let out = lgwalk(&["run", "--config", cfg.to_str().unwrap(), "--walks", "2"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let walks = fs::read_to_string(dir.join("walks.csv")).unwrap();
    assert_eq!(walks.lines().count(), 3);
    let written = fs::read_to_string(dir.join("config.txt")).unwrap();
    assert!(written.contains("walks = 2") && written.contains("loss = ce"));
}

#[test]
fn same_seed_same_bytes() {
    let tmp = tempfile::tempdir().unwrap();
    let (a, b, c) = (
        tmp.path().join("a"),
        tmp.path().join("b"),
        tmp.path().join("c"),
    );
    run_xor(&a, "9");
    run_xor(&b, "9");
    run_xor(&c, "10");
    let cloud = |d: &Path| fs::read(d.join("lg_cloud.csv")).unwrap();
    assert_eq!(cloud(&a), cloud(&b));
    assert_ne!(cloud(&a), cloud(&c));
}

#[test]
fn basins_command() {
    let tmp = tempfile::tempdir().unwrap();
    let series = tmp.path().join("series.txt");
    let values: Vec<String> = (0..200)
        .map(|i| format!("{}", 1.0 / (1.0 + i as f64)))
        .collect();
    fs::write(&series, values.join("\n")).unwrap();
    let out = lgwalk(&["basins", series.to_str().unwrap(), "--profile"]);
    assert!(out.status.success());
    let text = stdout(&out);
    assert!(text.starts_with("window,n_stag,l_stag\n6,"), "{text}");
    assert!(text.lines().any(|l| l.starts_with("20,")), "{text}");
    assert!(text.contains("window = 6"), "{text}");
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    // usage
    assert_eq!(
        lgwalk(&["run", "--problem", "xor", "--loss", "sse"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        lgwalk(&[
            "run",
            "--problem",
            "xor",
            "--loss",
            "sse",
            "--granularity",
            "micro",
            "--init-range",
            "5"
        ])
        .status
        .code(),
        Some(1)
    );
    assert_eq!(lgwalk(&["frobnicate"]).status.code(), Some(1));
    // missing data / incomplete run directory
    let missing = tmp.path().join("none.csv");
    let out = lgwalk(&[
        "run",
        "--problem",
        "diabetes",
        "--loss",
        "sse",
        "--granularity",
        "macro",
        "--data",
        missing.to_str().unwrap(),
        "--out",
        tmp.path().join("d").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(
        lgwalk(&["summarise", tmp.path().to_str().unwrap()])
            .status
            .code(),
        Some(2)
    );
    let nan = tmp.path().join("nan.txt");
    fs::write(&nan, "1\nNaN\n".repeat(20)).unwrap();
    assert_eq!(
        lgwalk(&["basins", nan.to_str().unwrap()]).status.code(),
        Some(3)
    );
}
