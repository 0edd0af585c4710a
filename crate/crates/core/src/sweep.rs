//! Comparison harness: runs competing segmentation methods over labeled
//! sequences and aggregates MIoU (and box-level success) per noise level.
//!
//! Three methods are compared: the full progressive loop, the motion-only
//! baseline (zero denoising iterations), and a classic spatiotemporal
//! filter followed by motion-only segmentation. Every run is recorded
//! individually, failures included, so partial sweeps still produce a
//! table.

use std::fmt;
use std::io::Write as _;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::denoise::{baseline_st_filter, EdConfig};
use crate::events::{EventPacket, Label, LabeledEvents};
use crate::metrics::{iou_report, oss_rate, BoundingBox, IoUReport};
use crate::motion::{MeConfig, MotionError};
use crate::progressive::{run, LoopConfig};
use crate::synth::{generate_sequence, standard_suite_specs, ObjectSpec, STANDARD_NOISE_LEVELS};
use crate::warp::{warp_position, WarpParams};

/// Segmentation strategy under comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Full loop: motion estimation and denoising alternated.
    Progressive,
    /// Motion estimation only, confidences stay at one.
    MeOnly,
    /// Spatiotemporal neighbor filter, then motion-only segmentation of
    /// the surviving events; dropped events are labeled noise.
    FilterThenMe,
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Method::Progressive => "progressive",
            Method::MeOnly => "me_only",
            Method::FilterThenMe => "filter_then_me",
        })
    }
}

pub const STANDARD_METHODS: [Method; 3] =
    [Method::Progressive, Method::MeOnly, Method::FilterThenMe];

/// Everything a sweep needs to run one method on one packet.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepConfig {
    pub me: MeConfig,
    pub ed: EdConfig,
    pub loop_cfg: LoopConfig,
    /// Chebyshev radius of the baseline filter, pixels.
    pub filter_radius: u16,
    /// Time window of the baseline filter, seconds.
    pub filter_dt: f64,
    pub seed: u64,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            me: MeConfig::default(),
            ed: EdConfig::default(),
            loop_cfg: LoopConfig::default(),
            filter_radius: 1,
            filter_dt: 0.01,
            seed: 0,
        }
    }
}

impl SweepConfig {
    /// Configuration matched to the standard suite: the velocity grid covers
    /// the scenes' ±100 px/s range, the optimizer budget is trimmed for
    /// 20-sequence runs, and the noise threshold is set where the suite's
    /// real-event confidences separate from injected noise.
    pub fn standard_suite() -> Self {
        Self {
            me: MeConfig {
                v_max: 100.0,
                grid_points: 11,
                grid_range: Some(100.0),
                em_alternations: 4,
                max_ascent_iters: 60,
                ascent_tol: 1e-5,
                ..MeConfig::default()
            },
            loop_cfg: LoopConfig {
                noise_threshold: 0.4,
                ..LoopConfig::default()
            },
            ..Self::default()
        }
    }
}

/// Labels and per-cluster velocities from one method run.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodRun {
    pub labels: Vec<Label>,
    pub thetas: Vec<WarpParams>,
}

/// Runs one method on one packet.
pub fn run_method(
    packet: &EventPacket,
    n_clusters: usize,
    method: Method,
    cfg: &SweepConfig,
) -> Result<MethodRun, MotionError> {
    match method {
        Method::Progressive => {
            let result = run(packet, n_clusters, &cfg.me, &cfg.ed, &cfg.loop_cfg, cfg.seed)?;
            Ok(MethodRun {
                labels: result.labels,
                thetas: result.state.thetas,
            })
        }
        Method::MeOnly => {
            let me_only = LoopConfig {
                iterations: 0,
                ..cfg.loop_cfg
            };
            let result = run(packet, n_clusters, &cfg.me, &cfg.ed, &me_only, cfg.seed)?;
            Ok(MethodRun {
                labels: result.labels,
                thetas: result.state.thetas,
            })
        }
        Method::FilterThenMe => {
            let keep = baseline_st_filter(packet, cfg.filter_radius, cfg.filter_dt);
            let survivors: Vec<_> = packet
                .events()
                .iter()
                .zip(&keep)
                .filter(|(_, k)| **k)
                .map(|(e, _)| *e)
                .collect();
            if survivors.is_empty() {
                return Ok(MethodRun {
                    labels: vec![Label::Noise; packet.len()],
                    thetas: Vec::new(),
                });
            }
            let filtered = EventPacket::new(
                survivors,
                packet.width(),
                packet.height(),
                packet.t0(),
                packet.t1(),
            )
            .expect("surviving events satisfy the original packet's bounds");
            let inner = run_method(&filtered, n_clusters, Method::MeOnly, cfg)?;
            let mut labels = vec![Label::Noise; packet.len()];
            let mut inner_labels = inner.labels.into_iter();
            for (label, kept) in labels.iter_mut().zip(&keep) {
                if *kept {
                    *label = inner_labels.next().expect("one label per survivor");
                }
            }
            Ok(MethodRun {
                labels,
                thetas: inner.thetas,
            })
        }
    }
}

/// Trimmed bounding box of the warped positions of one cluster's events at
/// the snapshot time. The 2% tails are dropped so a handful of mislabeled
/// events cannot blow the box up.
fn cluster_box_at(
    packet: &EventPacket,
    labels: &[Label],
    cluster: u32,
    theta: WarpParams,
    t_snap: f64,
) -> Option<BoundingBox> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (e, label) in packet.events().iter().zip(labels) {
        if *label == Label::Object(cluster) {
            let (x, y) = warp_position(e, theta, t_snap);
            xs.push(x);
            ys.push(y);
        }
    }
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.partial_cmp(b).expect("finite positions"));
    ys.sort_by(|a, b| a.partial_cmp(b).expect("finite positions"));
    let lo = xs.len() / 50;
    let hi = xs.len() - 1 - lo;
    Some(BoundingBox {
        x_min: xs[lo],
        y_min: ys[lo],
        x_max: xs[hi],
        y_max: ys[hi],
    })
}

/// Box-level success rate over interior snapshots: per snapshot and
/// ground-truth object, the matched cluster's warped-event box must
/// overlap the object's true extent with IoU ≥ 0.5.
pub fn oss_for_run(
    packet: &EventPacket,
    objects: &[ObjectSpec],
    run: &MethodRun,
    report: &IoUReport,
) -> f64 {
    const SNAPSHOTS: usize = 5;
    let span = packet.t1() - packet.t0();
    let mut pairs: Vec<(Option<BoundingBox>, BoundingBox)> = Vec::new();
    for s in 1..=SNAPSHOTS {
        let t = packet.t0() + span * s as f64 / (SNAPSHOTS + 1) as f64;
        for (i, object) in objects.iter().enumerate() {
            let (x0, y0, x1, y1) = object.extent_at(t);
            let gt = BoundingBox {
                x_min: x0.max(0.0),
                y_min: y0.max(0.0),
                x_max: x1.min(f64::from(packet.width())),
                y_max: y1.min(f64::from(packet.height())),
            };
            if gt.area() == 0.0 {
                continue;
            }
            let object_id = i as u32 + 1;
            let matched = report
                .matching
                .iter()
                .find(|(id, _)| *id == object_id)
                .and_then(|(_, c)| *c);
            let pred = matched.and_then(|cluster| {
                let theta = run.thetas.get(cluster as usize - 1)?;
                cluster_box_at(packet, &run.labels, cluster, *theta, t)
            });
            pairs.push((pred, gt));
        }
    }
    oss_rate(&pairs)
}

/// One (sequence, method) cell of the sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub sequence: String,
    pub noise_level: f64,
    pub method: Method,
    pub elapsed_secs: f64,
    /// Mean IoU in [0, 1]; `None` when the run failed.
    pub miou: Option<f64>,
    /// Box-level success percentage; `None` without scene geometry.
    pub oss: Option<f64>,
    pub report: Option<IoUReport>,
    pub error: Option<String>,
}

/// Runs the requested methods on one labeled sequence. Scene geometry, if
/// given, enables the box-level metric.
pub fn run_sequence(
    name: &str,
    noise_level: f64,
    labeled: &LabeledEvents,
    n_clusters: usize,
    objects: Option<&[ObjectSpec]>,
    methods: &[Method],
    cfg: &SweepConfig,
) -> Vec<RunRecord> {
    methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let outcome = run_method(&labeled.packet, n_clusters, method, cfg);
            let elapsed_secs = start.elapsed().as_secs_f64();
            match outcome {
                Ok(run) => {
                    let report = iou_report(&run.labels, &labeled.labels)
                        .expect("method output has one label per event");
                    let oss =
                        objects.map(|objs| oss_for_run(&labeled.packet, objs, &run, &report));
                    RunRecord {
                        sequence: name.to_string(),
                        noise_level,
                        method,
                        elapsed_secs,
                        miou: Some(report.miou),
                        oss,
                        report: Some(report),
                        error: None,
                    }
                }
                Err(err) => {
                    log::error!("{name} with {method}: {err}");
                    RunRecord {
                        sequence: name.to_string(),
                        noise_level,
                        method,
                        elapsed_secs,
                        miou: None,
                        oss: None,
                        report: None,
                        error: Some(err.to_string()),
                    }
                }
            }
        })
        .collect()
}

/// Generates the 20-sequence standard suite and sweeps the methods over
/// it. Sequences run in order; per-sequence failures are recorded, not
/// fatal.
pub fn run_standard_suite(methods: &[Method], cfg: &SweepConfig) -> Vec<RunRecord> {
    let mut records = Vec::new();
    for spec in standard_suite_specs(cfg.seed) {
        match generate_sequence(&spec) {
            Ok(labeled) => {
                records.extend(run_sequence(
                    &spec.name,
                    spec.noise_level,
                    &labeled,
                    spec.objects.len(),
                    Some(&spec.objects),
                    methods,
                    cfg,
                ));
            }
            Err(err) => {
                log::error!("generating {}: {err}", spec.name);
                for &method in methods {
                    records.push(RunRecord {
                        sequence: spec.name.clone(),
                        noise_level: spec.noise_level,
                        method,
                        elapsed_secs: 0.0,
                        miou: None,
                        oss: None,
                        report: None,
                        error: Some(err.to_string()),
                    });
                }
            }
        }
    }
    records
}

/// Noise-to-signal ratio measured from ground-truth labels.
pub fn estimate_noise_level(labels: &[Label]) -> f64 {
    let noise = labels.iter().filter(|l| **l == Label::Noise).count();
    let signal = labels.len() - noise;
    if signal == 0 {
        0.0
    } else {
        noise as f64 / signal as f64
    }
}

/// Snaps a measured ratio onto the standard grid when it is close enough
/// to one of its levels (or to zero); otherwise keeps the raw value.
pub fn snap_noise_level(ratio: f64) -> f64 {
    for level in STANDARD_NOISE_LEVELS.iter().copied().chain([0.0]) {
        if (ratio - level).abs() <= 0.02 {
            return level;
        }
    }
    ratio
}

/// Mean MIoU per (method, noise level).
#[derive(Debug, Clone, PartialEq)]
pub struct SweepTable {
    pub noise_levels: Vec<f64>,
    pub methods: Vec<Method>,
    /// cells[m][n]: mean MIoU of successful runs, `None` when all failed.
    pub cells: Vec<Vec<Option<f64>>>,
}

impl SweepTable {
    pub fn from_records(records: &[RunRecord]) -> Self {
        let mut noise_levels: Vec<f64> = records.iter().map(|r| r.noise_level).collect();
        noise_levels.sort_by(|a, b| a.partial_cmp(b).expect("finite noise levels"));
        noise_levels.dedup();
        let mut methods = Vec::new();
        for r in records {
            if !methods.contains(&r.method) {
                methods.push(r.method);
            }
        }
        let cells = methods
            .iter()
            .map(|&method| {
                noise_levels
                    .iter()
                    .map(|&level| {
                        let values: Vec<f64> = records
                            .iter()
                            .filter(|r| {
                                r.method == method && r.noise_level == level && r.miou.is_some()
                            })
                            .map(|r| r.miou.unwrap())
                            .collect();
                        if values.is_empty() {
                            None
                        } else {
                            Some(values.iter().sum::<f64>() / values.len() as f64)
                        }
                    })
                    .collect()
            })
            .collect();
        Self {
            noise_levels,
            methods,
            cells,
        }
    }

    pub fn cell(&self, method: Method, noise_level: f64) -> Option<f64> {
        let m = self.methods.iter().position(|x| *x == method)?;
        let n = self
            .noise_levels
            .iter()
            .position(|x| (*x - noise_level).abs() < 1e-12)?;
        self.cells[m][n]
    }

    /// Aligned text table, MIoU as percentages.
    pub fn to_text(&self) -> String {
        let mut out = String::from("method          ");
        for level in &self.noise_levels {
            out.push_str(&format!("  n={level:<5.2}"));
        }
        out.push('\n');
        for (m, method) in self.methods.iter().enumerate() {
            out.push_str(&format!("{:<16}", method.to_string()));
            for cell in &self.cells[m] {
                match cell {
                    Some(v) => out.push_str(&format!("  {:>7.2}", v * 100.0)),
                    None => out.push_str("        -"),
                }
            }
            out.push('\n');
        }
        out
    }
}

/// Per-run CSV: one row per (sequence, method).
pub fn write_records_csv<P: AsRef<Path>>(path: P, records: &[RunRecord]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "sequence,method,noise,miou,oss,elapsed_secs,error")?;
    for r in records {
        writeln!(
            file,
            "{},{},{:.2},{},{},{:.3},{}",
            r.sequence,
            r.method,
            r.noise_level,
            r.miou.map_or(String::new(), |v| format!("{:.4}", v * 100.0)),
            r.oss.map_or(String::new(), |v| format!("{v:.2}")),
            r.elapsed_secs,
            r.error.as_deref().unwrap_or(""),
        )?;
    }
    Ok(())
}

/// Summary CSV mirroring the text table: methods × noise levels.
pub fn write_table_csv<P: AsRef<Path>>(path: P, table: &SweepTable) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    write!(file, "method")?;
    for level in &table.noise_levels {
        write!(file, ",n={level:.2}")?;
    }
    writeln!(file)?;
    for (m, method) in table.methods.iter().enumerate() {
        write!(file, "{method}")?;
        for cell in &table.cells[m] {
            match cell {
                Some(v) => write!(file, ",{:.2}", v * 100.0)?,
                None => write!(file, ",")?,
            }
        }
        writeln!(file)?;
    }
    Ok(())
}

/// Per-object CSV: `sequence,object,IoU,MIoU`.
pub fn write_iou_detail_csv<P: AsRef<Path>>(
    path: P,
    rows: &[(String, IoUReport)],
) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "sequence,object,IoU,MIoU")?;
    for (sequence, report) in rows {
        for (object, iou) in &report.per_object {
            writeln!(
                file,
                "{sequence},{object},{:.4},{:.4}",
                iou * 100.0,
                report.miou * 100.0
            )?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{generate_scene, inject_noise, SceneSpec, Shape};

    fn quick_cfg() -> SweepConfig {
        SweepConfig {
            me: MeConfig {
                v_max: 100.0,
                grid_points: 11,
                grid_range: Some(50.0),
                ..MeConfig::default()
            },
            loop_cfg: LoopConfig {
                iterations: 2,
                ..LoopConfig::default()
            },
            ..SweepConfig::default()
        }
    }

    fn single_object_scene() -> SceneSpec {
        SceneSpec {
            name: "single".into(),
            width: 96,
            height: 64,
            duration: 0.3,
            contrast: 0.5,
            time_step: 1e-3,
            background: 0.0,
            noise_level: 0.0,
            threshold_jitter: false,
            seed: 0,
            objects: vec![ObjectSpec {
                shape: Shape::Rect {
                    w: 12.0,
                    h: 14.0,
                    intensity: 1.0,
                },
                x0: 18.0,
                y0: 20.0,
                vx: 40.0,
                vy: 0.0,
            }],
        }
    }

    #[test]
    fn motion_only_never_emits_noise_labels() {
        let labeled = generate_scene(&single_object_scene()).unwrap();
        let run = run_method(&labeled.packet, 1, Method::MeOnly, &quick_cfg()).unwrap();
        assert_eq!(run.labels.len(), labeled.packet.len());
        assert!(run.labels.iter().all(|l| *l != Label::Noise));
        assert_eq!(run.thetas.len(), 1);
    }

    #[test]
    fn filtering_marks_dropped_events_as_noise_in_place() {
        let clean = generate_scene(&single_object_scene()).unwrap();
        let labeled = inject_noise(&clean, 0.3, 7).unwrap();
        let cfg = quick_cfg();
        let run = run_method(&labeled.packet, 1, Method::FilterThenMe, &cfg).unwrap();
        assert_eq!(run.labels.len(), labeled.packet.len());

        let keep = baseline_st_filter(&labeled.packet, cfg.filter_radius, cfg.filter_dt);
        for (label, kept) in run.labels.iter().zip(&keep) {
            if !kept {
                assert_eq!(*label, Label::Noise);
            } else {
                assert_ne!(*label, Label::Noise);
            }
        }
        assert!(keep.iter().any(|k| !k), "the filter should drop something");
    }

    #[test]
    fn ground_truth_run_gets_a_perfect_box_score() {
        let scene = single_object_scene();
        let labeled = generate_scene(&scene).unwrap();
        let run = MethodRun {
            labels: labeled.labels.clone(),
            thetas: vec![WarpParams::new(40.0, 0.0)],
        };
        let report = iou_report(&run.labels, &labeled.labels).unwrap();
        let oss = oss_for_run(&labeled.packet, &scene.objects, &run, &report);
        assert_eq!(oss, 100.0, "true labels plus true velocity must succeed");
    }

    #[test]
    fn missing_cluster_match_counts_as_box_failure() {
        let scene = single_object_scene();
        let labeled = generate_scene(&scene).unwrap();
        let run = MethodRun {
            labels: vec![Label::Noise; labeled.packet.len()],
            thetas: Vec::new(),
        };
        let report = iou_report(&run.labels, &labeled.labels).unwrap();
        let oss = oss_for_run(&labeled.packet, &scene.objects, &run, &report);
        assert_eq!(oss, 0.0);
    }

    #[test]
    fn sequence_records_carry_scores_and_errors() {
        let labeled = generate_scene(&single_object_scene()).unwrap();
        let cfg = quick_cfg();
        let records = run_sequence(
            "single_n00",
            0.0,
            &labeled,
            1,
            None,
            &[Method::MeOnly, Method::FilterThenMe],
            &cfg,
        );
        assert_eq!(records.len(), 2);
        for r in &records {
            assert!(r.error.is_none(), "{:?}", r.error);
            let miou = r.miou.unwrap();
            assert!((0.0..=1.0).contains(&miou));
            assert!(r.oss.is_none(), "no geometry was supplied");
        }

        let failed = run_sequence(
            "broken",
            0.0,
            &labeled,
            0,
            None,
            &[Method::MeOnly],
            &cfg,
        );
        assert_eq!(failed[0].miou, None);
        assert!(failed[0].error.is_some());
    }

    #[test]
    fn the_table_groups_by_method_and_noise() {
        let records = vec![
            RunRecord {
                sequence: "a_n05".into(),
                noise_level: 0.05,
                method: Method::Progressive,
                elapsed_secs: 1.0,
                miou: Some(0.9),
                oss: None,
                report: None,
                error: None,
            },
            RunRecord {
                sequence: "b_n05".into(),
                noise_level: 0.05,
                method: Method::Progressive,
                elapsed_secs: 1.0,
                miou: Some(0.7),
                oss: None,
                report: None,
                error: None,
            },
            RunRecord {
                sequence: "a_n25".into(),
                noise_level: 0.25,
                method: Method::Progressive,
                elapsed_secs: 1.0,
                miou: None,
                oss: None,
                report: None,
                error: Some("boom".into()),
            },
            RunRecord {
                sequence: "a_n05".into(),
                noise_level: 0.05,
                method: Method::MeOnly,
                elapsed_secs: 1.0,
                miou: Some(0.5),
                oss: None,
                report: None,
                error: None,
            },
        ];
        let table = SweepTable::from_records(&records);
        assert_eq!(table.noise_levels, vec![0.05, 0.25]);
        assert_eq!(table.methods, vec![Method::Progressive, Method::MeOnly]);
        assert_eq!(table.cell(Method::Progressive, 0.05), Some(0.8));
        assert_eq!(table.cell(Method::Progressive, 0.25), None);
        assert_eq!(table.cell(Method::MeOnly, 0.05), Some(0.5));

        let text = table.to_text();
        assert!(text.contains("progressive"), "{text}");
        assert!(text.contains("80.00"), "{text}");
        assert!(text.contains('-'), "{text}");
    }

    #[test]
    fn csv_writers_emit_the_documented_headers() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![RunRecord {
            sequence: "a_n05".into(),
            noise_level: 0.05,
            method: Method::Progressive,
            elapsed_secs: 1.25,
            miou: Some(0.875),
            oss: Some(80.0),
            report: None,
            error: None,
        }];
        let runs_path = dir.path().join("runs.csv");
        write_records_csv(&runs_path, &records).unwrap();
        let text = std::fs::read_to_string(&runs_path).unwrap();
        assert!(text.starts_with("sequence,method,noise,miou,oss,elapsed_secs,error\n"));
        assert!(text.contains("a_n05,progressive,0.05,87.5000,80.00,1.250,"));

        let table_path = dir.path().join("table.csv");
        write_table_csv(&table_path, &SweepTable::from_records(&records)).unwrap();
        let text = std::fs::read_to_string(&table_path).unwrap();
        assert_eq!(text, "method,n=0.05\nprogressive,87.50\n");

        let detail_path = dir.path().join("detail.csv");
        let report = IoUReport {
            per_object: vec![(1, 0.9), (2, 0.8)],
            miou: 0.85,
            matching: vec![(1, Some(1)), (2, Some(2))],
        };
        write_iou_detail_csv(&detail_path, &[("a_n05".into(), report)]).unwrap();
        let text = std::fs::read_to_string(&detail_path).unwrap();
        assert_eq!(
            text,
            "sequence,object,IoU,MIoU\na_n05,1,90.0000,85.0000\na_n05,2,80.0000,85.0000\n"
        );
    }

    #[test]
    fn noise_estimation_and_snapping_work_on_sidecar_labels() {
        let labels = vec![
            Label::Object(1),
            Label::Object(1),
            Label::Object(2),
            Label::Object(2),
            Label::Noise,
        ];
        assert_eq!(estimate_noise_level(&labels), 0.25);
        assert_eq!(snap_noise_level(0.251), 0.25);
        assert_eq!(snap_noise_level(0.061), 0.05);
        assert_eq!(snap_noise_level(0.009), 0.0);
        assert_eq!(snap_noise_level(0.5), 0.5);
        assert_eq!(estimate_noise_level(&[Label::Noise]), 0.0);
    }
}
