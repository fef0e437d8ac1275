use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use surrogate::report::parse_metrics_csv;
use surrogate_core::train::MetricsRow;

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_surrogate"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn synth(out: &Path, seed: &str) -> Output {
    cli(&[
        "synth", "--scenes", "10", "--size", "16", "--seed", seed, "--degrade", "bicubic4", "--real", "pseudo_real",
        "--unpaired", "6", "--out", s(out),
    ])
}

const SMALL: &str = r#"{
  "train": {
    "master_seed": 5,
    "stage1": {"iterations": 12, "batch": 4, "log_every": 4},
    "stage2": {"iterations": 4, "batch": 4, "log_every": 2}
  }
}"#;

/// A synthesized dataset with a small training config next to its manifest.
fn dataset(dir: &Path) -> PathBuf {
    let data = dir.join("data");
    assert_eq!(code(&synth(&data, "3")), 0);
    let config = data.join("config.json");
    fs::write(&config, SMALL).unwrap();
    config
}

fn read(p: &Path) -> Vec<u8> {
    fs::read(p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn synth_is_deterministic() {
    let t = tempfile::tempdir().unwrap();
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert_eq!(code(&synth(&a, "9")), 0);
    assert_eq!(code(&synth(&b, "9")), 0);
    for sub in ["manifest.tsv", "images/clean/scene_00003.ppm", "images/real/scene_00009.ppm", "images/unpaired/scene_00015.ppm"] {
        assert_eq!(read(&a.join(sub)), read(&b.join(sub)), "{sub}");
    }
    let manifest = fs::read_to_string(a.join("manifest.tsv")).unwrap();
    assert!(manifest.starts_with("#seed=9\n"));
    assert_eq!(manifest.lines().filter(|l| l.starts_with("real\t")).count(), 10);
}

#[test]
fn usage_errors_exit_with_one() {
    let t = tempfile::tempdir().unwrap();
    let o = cli(&["synth", "--scenes", "2", "--degrade", "jpeg90", "--out", s(t.path())]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("jpeg90"));

    let config = dataset(t.path());
    let o = cli(&["train", "--config", s(&config), "--stage", "2"]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("--g0"));

    assert_eq!(code(&cli(&["train", "--config", s(&config)])), 1);
    assert_eq!(code(&cli(&["gradcheck", "--layer", "conv3d"])), 1);

    fs::write(&config, r#"{"train": {"stage1": {"learning_rate": 1}}}"#).unwrap();
    assert_eq!(code(&cli(&["train", "--config", s(&config), "--stage", "1"])), 1);
}

#[test]
fn two_invocations_match_one_multistage_run() {
    let t = tempfile::tempdir().unwrap();
    let config = dataset(t.path());
    let (a, b) = (t.path().join("a"), t.path().join("b"));
    assert_eq!(code(&cli(&["train", "--config", s(&config), "--stage", "1", "--out", s(&a)])), 0);
    let g0 = a.join("checkpoints/stage1.sgt");
    let o = cli(&["train", "--config", s(&config), "--stage", "2", "--g0", s(&g0), "--out", s(&a)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(code(&cli(&["train", "--config", s(&config), "--multistage", "2", "--out", s(&b)])), 0);

    for f in ["checkpoints/stage1.sgt", "checkpoints/stage2.sgt", "checkpoints/stage2-disc.sgt", "metrics/stage1.csv", "metrics/stage2.csv"] {
        assert_eq!(read(&a.join(f)), read(&b.join(f)), "{f}");
    }
    let text = fs::read_to_string(a.join("metrics/stage2.csv")).unwrap();
    assert!(text.starts_with(&format!("{}\n", MetricsRow::HEADER)));
    let rows = parse_metrics_csv(&text).unwrap();
    assert_eq!(rows.iter().map(|r| r.iter).collect::<Vec<_>>(), [2, 4]);
    assert!(a.join("images/surrogates/stage2/scene_00000.pfm").exists());
    assert!(a.join("config-echo.json").exists());
}

#[test]
fn restore_and_evaluate() {
    let t = tempfile::tempdir().unwrap();
    let config = dataset(t.path());
    let data = config.parent().unwrap();
    let run = t.path().join("run");
    assert_eq!(code(&cli(&["train", "--config", s(&config), "--stage", "1", "--out", s(&run)])), 0);

    let model = run.join("checkpoints/stage1.sgt");
    let restored = t.path().join("restored");
    let real = data.join("images/real");
    let o = cli(&["restore", "--model", s(&model), "--in", s(&real), "--out", s(&restored)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_dir(&restored).unwrap().count(), 10);

    let clean = data.join("images/clean");
    let report = t.path().join("eval/same.csv");
    assert_eq!(code(&cli(&["eval", "--pairs", s(&clean), s(&clean), "--report", s(&report)])), 0);
    let text = fs::read_to_string(&report).unwrap();
    assert!(text.contains("<mean>,inf"), "{text}");

    let report = t.path().join("eval/model.csv");
    let o = cli(&["eval", "--pairs", s(&real), s(&clean), "--model", s(&model), "--report", s(&report)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert_eq!(fs::read_to_string(&report).unwrap().lines().count(), 1 + 10 + 2);

    let unpaired = data.join("images/unpaired");
    let o = cli(&["eval", "--pairs", s(&clean), s(&unpaired), "--report", s(&report)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("scene_00000.ppm"));
}

#[test]
fn gradcheck_reports_and_fails_on_corrupted_gradients() {
    let o = cli(&["gradcheck", "--all", "--seeds", "5"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8_lossy(&o.stdout);
    assert_eq!(out.lines().filter(|l| l.ends_with("PASS")).count(), 12);

    let o = cli(&["gradcheck", "--layer", "conv2d", "--seeds", "3", "--corrupt", "1.01"]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL"));
}

#[test]
fn unreadable_inputs_are_reported() {
    let t = tempfile::tempdir().unwrap();
    let bad = t.path().join("bad.sgt");
    fs::write(&bad, b"SGT1\x01\x00").unwrap();
    let input = t.path().join("in");
    fs::create_dir(&input).unwrap();
    let o = cli(&["restore", "--model", s(&bad), "--in", s(&input), "--out", s(&t.path().join("o"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("bad.sgt"));

    let (a, b) = (t.path().join("a"), t.path().join("b"));
    fs::create_dir(&a).unwrap();
    fs::create_dir(&b).unwrap();
    fs::write(a.join("x.ppm"), b"P6\n2 2\n255\n\x00\x01").unwrap();
    fs::write(b.join("x.ppm"), b"P6\n1 1\n255\n\x00\x01\x02").unwrap();
    let o = cli(&["eval", "--pairs", s(&a), s(&b), "--report", s(&t.path().join("r.csv"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("x.ppm"));
}
