use std::path::{Path, PathBuf};

use gofkit::cli::run;
use gofkit::io::read_sample;
use gofkit::sample::Domain;

struct Outcome {
    code: i32,
    out: String,
    err: String,
}

fn gofkit(args: &[&str]) -> Outcome {
    let argv = std::iter::once("gofkit").chain(args.iter().copied());
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let code = run(argv, &mut out, &mut err);
    Outcome { code, out: String::from_utf8(out).unwrap(), err: String::from_utf8(err).unwrap() }
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn field<'a>(text: &'a str, key: &str) -> &'a str {
    text.lines()
        .find_map(|l| l.strip_prefix(key).and_then(|r| r.strip_prefix(": ")))
        .unwrap_or_else(|| panic!("no `{key}` in\n{text}"))
}

/// Writes a cosine spectrum and a 150-point sample from a spectral alternative.
fn setup(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = dir.join("cos.spec");
    let data = dir.join("x.csv");
    let cache = dir.join("cache");
    let r = gofkit(&["decompose", "--kernel", "cosine", "--trunc", "300", "--out", s(&spec), "--cache-dir", s(&cache), "--quiet"]);
    assert_eq!(r.code, 0, "{}", r.err);
    let r = gofkit(&["sample", "--alt", "spectral:basis=cosine,a=0.3", "--n", "150", "--out", s(&data), "--seed", "2"]);
    assert_eq!(r.code, 0, "{}", r.err);
    (spec, data)
}

#[test]
fn m3d_test_happy_path() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, data) = setup(dir.path());
    let r = gofkit(&["test", "--kind", "m3d", "--rho", "0.063", "--spectrum", s(&spec), "--data", s(&data), "--seed", "7"]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert!(r.out.contains("json: {"));
    let stat: f64 = field(&r.out, "statistic").parse().unwrap();
    assert!(stat.is_finite());
    let again = gofkit(&["test", "--kind", "m3d", "--rho", "0.063", "--spectrum", s(&spec), "--data", s(&data), "--seed", "7"]);
    assert_eq!(again.out, r.out);
}

#[test]
fn missing_seed_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let r = gofkit(&["sample", "--alt", "uniform-cube:d=1", "--n", "5", "--out", s(&dir.path().join("u.csv"))]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("--seed"), "{}", r.err);
}

#[test]
fn m3d_without_rho_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, data) = setup(dir.path());
    let r = gofkit(&["test", "--kind", "m3d", "--spectrum", s(&spec), "--data", s(&data), "--seed", "1"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("--rho"), "{}", r.err);
}

#[test]
fn unknown_subcommand_and_flag_fail() {
    assert_eq!(gofkit(&["frobnicate"]).code, 1);
    assert_eq!(gofkit(&["sample", "--bogus", "1"]).code, 1);
}

#[test]
fn help_lists_subcommands_and_defaults() {
    let r = gofkit(&["--help"]);
    assert_eq!(r.code, 0);
    for sub in ["decompose", "test", "calibrate", "power", "reproduce", "sample"] {
        assert!(r.out.contains(sub), "missing {sub}");
    }
    let r = gofkit(&["test", "--help"]);
    assert_eq!(r.code, 0);
    assert!(r.out.contains("[default: 0.05]"));
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("gofkit.toml");
    std::fs::write(&cfg, "seed = 4\n\n[sample]\nalt = \"uniform-cube:d=2\"\nn = 6\n").unwrap();
    let out = dir.path().join("a.csv");
    let r = gofkit(&["--config", s(&cfg), "sample", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(read_sample(&out, Domain::Cube(2)).unwrap().len(), 6);

    let r = gofkit(&["--config", s(&cfg), "sample", "--n", "3", "--seed", "5", "--out", s(&out)]);
    assert_eq!(r.code, 0, "{}", r.err);
    assert_eq!(read_sample(&out, Domain::Cube(2)).unwrap().len(), 3);

    std::fs::write(&cfg, "[sample]\ncolour = 1\n").unwrap();
    assert_eq!(gofkit(&["--config", s(&cfg), "sample"]).code, 1);
}

#[test]
fn decompose_uses_the_cache() {
    let dir = tempfile::tempdir().unwrap();
    let cache = dir.path().join("c");
    let out = dir.path().join("g.spec");
    let args = ["decompose", "--kernel", "gaussian:bw=0.3", "--trunc", "10", "--out", s(&out), "--cache-dir", s(&cache)];
    let first = gofkit(&args);
    assert_eq!(first.code, 0, "{}", first.err);
    assert!(first.err.contains("computed"));
    assert_eq!(field(&first.out, "degenerate"), "true");
    let bytes = std::fs::read(&out).unwrap();
    let second = gofkit(&args);
    assert!(second.err.contains("loaded from cache"));
    assert_eq!(std::fs::read(&out).unwrap(), bytes);
}

#[test]
fn stored_calibration_drives_a_test() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, data) = setup(dir.path());
    let cal = dir.path().join("cal.toml");
    let r = gofkit(&[
        "calibrate", "--kind", "mmd", "--spectrum", s(&spec), "--n", "150", "--method", "chisq", "--reps", "2000", "--out", s(&cal), "--seed", "3",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let q = field(&r.out, "quantile").to_string();
    let t = gofkit(&["test", "--kind", "mmd", "--spectrum", s(&spec), "--data", s(&data), "--calibration", s(&cal)]);
    assert_eq!(t.code, 0, "{}", t.err);
    let threshold: f64 = field(&t.out, "threshold").parse().unwrap();
    assert_eq!(threshold, q.parse::<f64>().unwrap());

    let emp = dir.path().join("emp.toml");
    let r = gofkit(&[
        "calibrate", "--kind", "mmd", "--spectrum", s(&spec), "--n", "150", "--method", "empirical", "--reps", "100", "--out", s(&emp), "--seed", "3",
    ]);
    assert_eq!(r.code, 0, "{}", r.err);
    let small = dir.path().join("y.csv");
    gofkit(&["sample", "--alt", "uniform-cube:d=1", "--n", "40", "--out", s(&small), "--seed", "1"]);
    let t = gofkit(&["test", "--kind", "mmd", "--spectrum", s(&spec), "--data", s(&small), "--calibration", s(&emp)]);
    assert_eq!(t.code, 1);
    assert!(t.err.contains("n = 150"), "{}", t.err);
}

#[test]
fn stale_spectrum_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (spec, data) = setup(dir.path());
    let text = std::fs::read_to_string(&spec).unwrap();
    let first = text.lines().next().unwrap().to_string();
    std::fs::write(&spec, text.replacen(&first, "GOFKIT-SPEC v0", 1)).unwrap();
    let r = gofkit(&["test", "--kind", "mmd", "--spectrum", s(&spec), "--data", s(&data), "--seed", "1", "--calibrate", "chisq:500"]);
    assert_eq!(r.code, 1);
    assert!(r.err.contains("error"), "{}", r.err);
}
