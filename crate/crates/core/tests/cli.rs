mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::write_dataset;

fn bispot(args: &[&str], data: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bispot"))
        .args(args)
        .env("BISPOT_DATA_DIR", data)
        .env("RUST_LOG", "warn")
        .output()
        .expect("run bispot")
}

const SMALL: &[&str] = &[
    "--per-class", "6", "--angular-bins", "8", "--radial-bins", "5", "--epsilon", "0.1", "--normalize-cost",
];

#[test]
fn pipeline_exits_zero_and_prints_the_summary() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), 16, 1);
    let out = tmp.path().join("run");
    let mut args = vec!["pipeline", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    let run = bispot(&args, tmp.path());
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.starts_with("representation,metric,epsilon,direction,accuracy"));
    assert_eq!(stdout.lines().count(), 3);
    assert_eq!(std::fs::read_to_string(out.join("summary.csv")).unwrap(), stdout);

    // flags land in the snapshot, so rerunning the same command resumes
    let snapshot = std::fs::read_to_string(out.join("config.toml")).unwrap();
    assert!(snapshot.contains("per_class = 6"));
    assert!(snapshot.contains("normalize_cost = true"));
    assert_eq!(bispot(&args, tmp.path()).status.code(), Some(0));
}

#[test]
fn config_file_with_flag_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), 16, 1);
    let out = tmp.path().join("run");
    let cfg = tmp.path().join("experiment.toml");
    std::fs::write(
        &cfg,
        "[split]\nper_class = 6\nbaseline = true\n[embedding]\nangular_bins = 8\nradial_bins = 5\nrepresentations = [\"raw\"]\n\
         [transport]\nepsilons = [0.2]\nnormalize_cost = true\nmetrics = [\"l2\"]\n",
    )
    .unwrap();
    let run = bispot(
        &["pipeline", "--config", cfg.to_str().unwrap(), "--metric", "cosine", "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    let stdout = String::from_utf8(run.stdout).unwrap();
    assert!(stdout.contains("raw,cosine,0.2,unrotated->unrotated,"), "{stdout}");
    assert!(!stdout.contains("bispectral"));
}

#[test]
fn input_errors_exit_one() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("run");
    // no dataset under the data directory
    let run = bispot(&["pipeline", "--out", out.to_str().unwrap()], tmp.path());
    assert_eq!(run.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&run.stderr).contains("train-images-idx3-ubyte"));

    let missing = tmp.path().join("nope.bin");
    let run = bispot(
        &["transport", "--features-a", missing.to_str().unwrap(), "--features-b", missing.to_str().unwrap(), "--out", out.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(run.status.code(), Some(1));

    let run = bispot(&["pipeline", "--solver", "exact"], tmp.path());
    assert_eq!(run.status.code(), Some(1));
}

#[test]
fn non_convergence_exits_two() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), 16, 1);
    let out = tmp.path().join("run");
    let mut args = vec!["pipeline", "--out", out.to_str().unwrap(), "--max-iter", "1", "--tol", "1e-15"];
    args.extend_from_slice(SMALL);
    let run = bispot(&args, tmp.path());
    assert_eq!(run.status.code(), Some(2), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8(run.stdout).unwrap().contains(",false,"));
}

#[test]
fn transport_and_evaluate_subcommands() {
    let tmp = tempfile::tempdir().unwrap();
    write_dataset(tmp.path(), 16, 1);
    let out = tmp.path().join("run");
    let mut args = vec!["embed", "--out", out.to_str().unwrap()];
    args.extend_from_slice(SMALL);
    assert_eq!(bispot(&args, tmp.path()).status.code(), Some(0));

    let plan = tmp.path().join("plan.bin");
    let f = |name: &str| out.join("features").join(name).to_str().unwrap().to_string();
    let (fa, fb) = (f("bispectral_a.bin"), f("bispectral_b.bin"));
    let run = bispot(
        &["transport", "--features-a", &fa, "--features-b", &fb, "--out", plan.to_str().unwrap(), "--epsilon", "0.1", "--normalize-cost", "--solver", "greenkhorn"],
        tmp.path(),
    );
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(tmp.path().join("plan.json").is_file());

    let labels = |h: &str| out.join("split").join(format!("labels_{h}.csv")).to_str().unwrap().to_string();
    let eval = tmp.path().join("eval");
    let run = bispot(
        &["evaluate", "--plan", plan.to_str().unwrap(), "--source-labels", &labels("a"), "--target-labels", &labels("b"), "--out", eval.to_str().unwrap()],
        tmp.path(),
    );
    assert_eq!(run.status.code(), Some(0), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8(run.stdout).unwrap().starts_with("accuracy "));
    assert!(eval.join("accuracy.json").is_file());
}
