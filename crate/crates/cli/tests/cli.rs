use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = r#"{"repetitions": 1, "crop": 24, "training": {"synthetic": 6, "tune_images": 2, "pool_size": 2000}}"#;

fn cobra(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cobra"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cobra")
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (24usize, 20usize);
    let mut bytes = format!("P5\n{w} {h}\n255\n").into_bytes();
    bytes.extend((0..w * h).map(|i| ((i % w) * 9 + (i / w) * 4) as u8));
    fs::create_dir(dir.path().join("clean")).unwrap();
    fs::write(dir.path().join("clean/ramp.pgm"), &bytes).unwrap();
    fs::write(dir.path().join("small.json"), SMALL).unwrap();
    dir
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = setup();
    assert_eq!(cobra(dir.path(), &["--no-such-flag"]).status.code(), Some(1));
    assert_eq!(cobra(dir.path(), &["denoise"]).status.code(), Some(1));
    assert_eq!(cobra(dir.path(), &["--help"]).status.code(), Some(0));
}

#[test]
fn runtime_errors_exit_two() {
    let dir = setup();
    let missing = cobra(dir.path(), &["noise", "absent.pgm", "--out", "n.png"]);
    assert_eq!(missing.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("absent.pgm"));
    let bad = cobra(dir.path(), &["denoise", "--filter", "nope", "clean/ramp.pgm", "--out", "d.png"]);
    assert_eq!(bad.status.code(), Some(2));
    fs::write(dir.path().join("bad.json"), r#"{"repetitions": 0}"#).unwrap();
    let cfg = cobra(dir.path(), &["--config", "bad.json", "bench", "--out", "b"]);
    assert_eq!(cfg.status.code(), Some(2));
}

#[test]
fn noise_is_reproducible_under_a_seed() {
    let dir = setup();
    for out in ["a.png", "b.png"] {
        let o = cobra(dir.path(), &["--seed", "7", "noise", "--kind", "salt_pepper", "--amount", "0.3", "clean/ramp.pgm", "--out", out]);
        assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    }
    let c = cobra(dir.path(), &["--seed", "8", "noise", "--kind", "salt_pepper", "--amount", "0.3", "clean/ramp.pgm", "--out", "c.png"]);
    assert!(c.status.success());
    let read = |f: &str| fs::read(dir.path().join(f)).unwrap();
    assert_eq!(read("a.png"), read("b.png"));
    assert_ne!(read("a.png"), read("c.png"));
}

#[test]
fn denoise_and_aggregate_write_images() {
    let dir = setup();
    let d = cobra(dir.path(), &["denoise", "--filter", "median", "--params", r#"{"size": 3}"#, "clean/ramp.pgm", "--out", "d.png"]);
    assert!(d.status.success(), "{}", String::from_utf8_lossy(&d.stderr));
    let a = cobra(dir.path(), &["--config", "small.json", "aggregate", "clean/ramp.pgm", "--out", "a.pgm"]);
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    let img = cobra_core::load_image(dir.path().join("a.pgm")).unwrap();
    assert_eq!((img.width(), img.height()), (24, 20));
}

#[test]
fn bench_writes_reports() {
    let dir = setup();
    let o = cobra(dir.path(), &["--config", "small.json", "bench", "--out", "b", "clean/ramp.pgm"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["report.csv", "report.md", "params.json", "grid.csv", "ramp_cobra.png", "ramp_noisy.png", "ramp_diff.png"] {
        assert!(dir.path().join("b").join(f).exists(), "{f}");
    }
    assert!(String::from_utf8_lossy(&o.stdout).contains("cobra"));
}

#[test]
fn dataset_then_tune_on_manifest() {
    let dir = setup();
    let d = cobra(dir.path(), &["--config", "small.json", "dataset", "clean", "--out", "ds"]);
    assert!(d.status.success(), "{}", String::from_utf8_lossy(&d.stderr));
    assert!(dir.path().join("ds/manifest.json").exists());
    let t = cobra(dir.path(), &["--config", "small.json", "tune", "--manifest", "ds/manifest.json", "--out", "t"]);
    assert!(t.status.success(), "{}", String::from_utf8_lossy(&t.stderr));
    let eval = fs::read_to_string(dir.path().join("t/eval.csv")).unwrap();
    assert_eq!(eval.lines().count(), 2);
    let params: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("t/params.json")).unwrap()).unwrap();
    assert!(params["epsilon"].as_f64().unwrap() > 0.0);
    assert!(fs::read_to_string(dir.path().join("t/grid.csv")).unwrap().starts_with("epsilon,alpha,rmse"));
}
