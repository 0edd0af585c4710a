//! End-to-end tests of the `evseg` binary: every subcommand, the exit-code
//! contract, config precedence, and output determinism.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const SCENE: &str = r#"
name = "pair"
width = 120
height = 90
duration = 0.4
noise_level = 0.1
seed = 7

[[objects]]
x0 = 20.0
y0 = 30.0
vx = 40.0
vy = 5.0

[objects.shape]
kind = "rect"
w = 20.0
h = 14.0
intensity = 1.0

[[objects]]
x0 = 80.0
y0 = 50.0
vx = -35.0
vy = -10.0

[objects.shape]
kind = "rect"
w = 16.0
h = 16.0
intensity = 1.0
"#;

/// Optimizer budget sized for the tiny test scene.
const FAST_CONFIG: &str = "v_max = 100.0
grid_points = 11
grid_range = 100.0
em_alternations = 3
max_ascent_iters = 40
ascent_tol = 1e-4
iterations = 3
";

fn evseg(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_evseg"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn assert_exit(output: &Output, code: i32) {
    assert_eq!(
        output.status.code(),
        Some(code),
        "stdout:\n{}\nstderr:\n{}",
        String::from_utf8_lossy(&output.stdout),
        String::from_utf8_lossy(&output.stderr)
    );
}

/// Generates the two-object test scene into `dir/synth` and returns the
/// event file and label sidecar paths.
fn synth_scene(dir: &Path) -> (PathBuf, PathBuf) {
    let spec = dir.join("scene.toml");
    fs::write(&spec, SCENE).unwrap();
    let out = dir.join("synth");
    let output = evseg(&["synth", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_exit(&output, 0);
    (out.join("pair.csv"), out.join("pair.labels.csv"))
}

fn write_fast_config(dir: &Path) -> PathBuf {
    let path = dir.join("fast.toml");
    fs::write(&path, FAST_CONFIG).unwrap();
    path
}

fn segment_fast(events: &Path, out: &Path, extra: &[&str]) -> Output {
    let config = write_fast_config(out.parent().unwrap());
    let mut args = vec![
        "segment",
        events.to_str().unwrap(),
        "--clusters",
        "2",
        "--config",
    ];
    let config = config.to_str().unwrap().to_string();
    args.push(&config);
    args.push("--out");
    args.push(out.to_str().unwrap());
    args.extend_from_slice(extra);
    evseg(&args)
}

#[test]
fn synth_same_seed_is_byte_identical() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("scene.toml");
    fs::write(&spec, SCENE).unwrap();
    for run in ["a", "b"] {
        let out = dir.path().join(run);
        assert_exit(
            &evseg(&["synth", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]),
            0,
        );
    }
    for name in ["pair.csv", "pair.labels.csv"] {
        let a = fs::read(dir.path().join("a").join(name)).unwrap();
        let b = fs::read(dir.path().join("b").join(name)).unwrap();
        assert_eq!(a, b, "{name} differs between identical runs");
    }
}

#[test]
fn synth_zero_noise_writes_no_noise_labels() {
    let dir = TempDir::new().unwrap();
    let spec = dir.path().join("clean.toml");
    fs::write(&spec, SCENE.replace("noise_level = 0.1", "noise_level = 0.0")).unwrap();
    let out = dir.path().join("out");
    assert_exit(
        &evseg(&["synth", spec.to_str().unwrap(), "--out", out.to_str().unwrap()]),
        0,
    );
    let labels = fs::read_to_string(out.join("pair.labels.csv")).unwrap();
    assert!(!labels.is_empty());
    assert!(
        labels.lines().all(|l| l.trim() != "-1"),
        "zero-noise scene produced noise labels"
    );
}

#[test]
fn synth_suite_writes_twenty_sequences_with_sidecars() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("suite");
    assert_exit(&evseg(&["synth", "--suite", "--out", out.to_str().unwrap()]), 0);
    let mut events = 0;
    let mut sidecars = 0;
    for entry in fs::read_dir(&out).unwrap() {
        let name = entry.unwrap().file_name().into_string().unwrap();
        if name.ends_with(".labels.csv") {
            sidecars += 1;
        } else if name.ends_with(".csv") {
            events += 1;
        }
    }
    assert_eq!((events, sidecars), (20, 20));
}

#[test]
fn segment_outputs_are_complete_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let (events, _) = synth_scene(dir.path());
    let out_a = dir.path().join("seg_a");
    let out_b = dir.path().join("seg_b");
    assert_exit(&segment_fast(&events, &out_a, &[]), 0);
    assert_exit(&segment_fast(&events, &out_b, &[]), 0);

    for name in [
        "labels.csv",
        "confidence.csv",
        "trace.csv",
        "composite.ppm",
        "wiwe_cluster1.pgm",
        "wiwe_cluster2.pgm",
        "manifest.toml",
    ] {
        assert!(out_a.join(name).exists(), "missing {name}");
    }
    assert_eq!(
        fs::read(out_a.join("labels.csv")).unwrap(),
        fs::read(out_b.join("labels.csv")).unwrap(),
        "label sidecar differs between identical runs"
    );

    let ppm = fs::read(out_a.join("composite.ppm")).unwrap();
    assert!(
        ppm.starts_with(b"P6\n120 90\n255\n"),
        "composite dimensions should match the sensor"
    );
}

#[test]
fn segment_zero_iterations_trace_is_header_only() {
    let dir = TempDir::new().unwrap();
    let (events, _) = synth_scene(dir.path());
    let out = dir.path().join("seg");
    assert_exit(&segment_fast(&events, &out, &["--iterations", "0"]), 0);
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert_eq!(trace.lines().count(), 1, "trace: {trace}");
    assert!(trace.starts_with("iter,"));
}

#[test]
fn segment_degenerate_correlation_exits_4_but_writes_outputs() {
    let dir = TempDir::new().unwrap();
    let events = dir.path().join("cancel.csv");
    fs::write(
        &events,
        "t,x,y,p\n0.1,5,5,1\n0.1,5,5,-1\n0.2,9,9,1\n0.2,9,9,-1\n",
    )
    .unwrap();
    let out = dir.path().join("seg");
    let output = evseg(&[
        "segment",
        events.to_str().unwrap(),
        "--clusters",
        "1",
        "--width",
        "16",
        "--height",
        "16",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 4);
    for name in ["labels.csv", "composite.ppm", "trace.csv"] {
        assert!(out.join(name).exists(), "missing {name} after degenerate run");
    }
    let labels = fs::read_to_string(out.join("labels.csv")).unwrap();
    assert_eq!(labels.lines().count(), 4);
}

#[test]
fn eval_perfect_prediction_reports_miou_100() {
    let dir = TempDir::new().unwrap();
    let (_, labels) = synth_scene(dir.path());
    let out = dir.path().join("eval");
    let output = evseg(&[
        "eval",
        labels.to_str().unwrap(),
        labels.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("MIoU 100.00"), "summary: {summary}");
    assert!(out.join("iou.csv").exists());
    assert!(out.join("roc.csv").exists());
}

#[test]
fn eval_all_noise_prediction_reports_miou_0() {
    let dir = TempDir::new().unwrap();
    let (_, labels) = synth_scene(dir.path());
    let n = fs::read_to_string(&labels).unwrap().lines().count();
    let pred = dir.path().join("pred.labels.csv");
    fs::write(&pred, "-1\n".repeat(n)).unwrap();
    let out = dir.path().join("eval");
    let output = evseg(&[
        "eval",
        pred.to_str().unwrap(),
        labels.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let summary = fs::read_to_string(out.join("summary.txt")).unwrap();
    assert!(summary.contains("MIoU 0.00"), "summary: {summary}");
}

#[test]
fn eval_misaligned_sidecars_exit_2() {
    let dir = TempDir::new().unwrap();
    let pred = dir.path().join("pred.csv");
    let gt = dir.path().join("gt.csv");
    fs::write(&pred, "1\n1\n").unwrap();
    fs::write(&gt, "1\n1\n-1\n").unwrap();
    let out = dir.path().join("eval");
    let output = evseg(&[
        "eval",
        pred.to_str().unwrap(),
        gt.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
}

#[test]
fn render_grays_exactly_the_all_noise_pixels() {
    let dir = TempDir::new().unwrap();
    let events = dir.path().join("events.csv");
    let labels = dir.path().join("events.labels.csv");
    fs::write(
        &events,
        "# width=8 height=8\nt,x,y,p\n0.0,2,2,1\n0.0,5,5,-1\n0.1,2,2,1\n",
    )
    .unwrap();
    fs::write(&labels, "-1\n-1\n1\n").unwrap();
    let out = dir.path().join("render");
    let output = evseg(&[
        "render",
        events.to_str().unwrap(),
        labels.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    let ppm = fs::read(out.join("composite.ppm")).unwrap();
    let header = b"P6\n8 8\n255\n";
    assert!(ppm.starts_with(header));
    let pixels = &ppm[header.len()..];
    let pixel = |x: usize, y: usize| {
        let i = 3 * (y * 8 + x);
        [pixels[i], pixels[i + 1], pixels[i + 2]]
    };
    assert_eq!(pixel(5, 5), [128, 128, 128], "all-noise pixel should be gray");
    assert_eq!(pixel(0, 0), [0, 0, 0], "untouched pixel should be black");
    let mixed = pixel(2, 2);
    assert_ne!(mixed, [128, 128, 128], "cluster vote must beat noise");
    assert_ne!(mixed, [0, 0, 0]);
}

#[test]
fn flags_override_config_file_and_manifest_records_it() {
    let dir = TempDir::new().unwrap();
    let (events, _) = synth_scene(dir.path());
    let config = dir.path().join("cfg.toml");
    fs::write(
        &config,
        format!("{FAST_CONFIG}seed = 3\n").replace("iterations = 3", "iterations = 2"),
    )
    .unwrap();
    let out = dir.path().join("seg");
    let output = evseg(&[
        "segment",
        events.to_str().unwrap(),
        "--clusters",
        "2",
        "--config",
        config.to_str().unwrap(),
        "--iterations",
        "0",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);
    let manifest: toml::Table =
        toml::from_str(&fs::read_to_string(out.join("manifest.toml")).unwrap()).unwrap();
    assert_eq!(
        manifest["settings"]["loop"]["iterations"].as_integer(),
        Some(0),
        "flag must beat the config file"
    );
    assert_eq!(manifest["seed"].as_integer(), Some(3));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = TempDir::new().unwrap();
    let (events, _) = synth_scene(dir.path());
    let config = dir.path().join("cfg.toml");
    fs::write(&config, "iteratons = 3\n").unwrap();
    let output = evseg(&[
        "segment",
        events.to_str().unwrap(),
        "--clusters",
        "2",
        "--config",
        config.to_str().unwrap(),
        "--out",
        dir.path().join("seg").to_str().unwrap(),
    ]);
    assert_exit(&output, 2);
}

#[test]
fn missing_input_exits_3() {
    let dir = TempDir::new().unwrap();
    let output = evseg(&[
        "segment",
        dir.path().join("absent.csv").to_str().unwrap(),
        "--clusters",
        "2",
        "--out",
        dir.path().join("seg").to_str().unwrap(),
    ]);
    assert_exit(&output, 3);
}

#[test]
fn sweep_over_a_directory_writes_the_method_table() {
    let dir = TempDir::new().unwrap();
    let (events, labels) = synth_scene(dir.path());
    let suite = dir.path().join("suite");
    fs::create_dir(&suite).unwrap();
    fs::copy(&events, suite.join("pair.csv")).unwrap();
    fs::copy(&labels, suite.join("pair.labels.csv")).unwrap();
    let out = dir.path().join("sweep");
    let output = evseg(&[
        "sweep",
        suite.to_str().unwrap(),
        "--jobs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_exit(&output, 0);

    let table = fs::read_to_string(out.join("table.csv")).unwrap();
    let mut lines = table.lines();
    assert_eq!(lines.next(), Some("method,n=0.10"));
    let methods: Vec<&str> = lines
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert_eq!(methods, ["progressive", "me_only", "filter_then_me"]);
    for name in ["records.csv", "table.txt", "iou_detail.csv", "manifest.toml"] {
        assert!(out.join(name).exists(), "missing {name}");
    }
}
