//! The outer loop: alternate motion estimation and denoising until the
//! confidence map stabilizes, then emit hard labels.
//!
//! Iteration 0 is the motion-only baseline (no denoising pass at all).
//! Each full iteration runs the motion stage under the current confidences
//! and then rebuilds the confidences from the new velocities; the loop
//! stops early once the largest entrywise confidence change falls below
//! the stability tolerance. Events whose best confidence stays below the
//! noise threshold are labeled noise; everything else gets its most
//! probable cluster.

use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::denoise::{run_ed, EdConfig};
use crate::events::{EventPacket, Label};
use crate::mat::Mat;
use crate::motion::{initialize, run_me, MeConfig, MotionError, SegmentationState};

/// Outer-loop parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LoopConfig {
    /// Full motion + denoising iterations; 0 means motion only.
    pub iterations: usize,
    /// Stability cutoff on the largest entrywise confidence change.
    pub stability_tol: f64,
    /// Confidence below which an event is labeled noise.
    pub noise_threshold: f64,
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self {
            iterations: 7,
            stability_tol: 1e-3,
            noise_threshold: 0.5,
        }
    }
}

/// One executed iteration of the loop.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    /// 1-based iteration number.
    pub iter: usize,
    /// Total objective after the iteration's motion phase.
    pub total_sharpness: f64,
    /// Mean confidence after the iteration's denoising phase.
    pub mean_confidence: f64,
    /// Largest entrywise confidence change in this iteration.
    pub max_dc: f64,
}

/// Final state, hard labels, and the per-iteration trace.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationResult {
    pub state: SegmentationState,
    pub labels: Vec<Label>,
    pub trace: Vec<TraceEntry>,
    /// True when denoising found no correlation signal and the labels are the
    /// motion-only fallback (plain argmax, nothing marked as noise).
    pub degenerate: bool,
}

/// Per-event decision: noise if no cluster is confident enough, otherwise
/// the most probable cluster, ties toward the lower index.
pub fn hard_labels(state: &SegmentationState, noise_threshold: f64) -> Vec<Label> {
    assert!((0.0..=1.0).contains(&noise_threshold));
    state
        .hard_assignments()
        .iter()
        .enumerate()
        .map(|(k, &j)| {
            let best_c = state
                .c
                .row(k)
                .iter()
                .cloned()
                .fold(f64::NEG_INFINITY, f64::max);
            if best_c < noise_threshold {
                Label::Noise
            } else {
                Label::Object(j as u32 + 1)
            }
        })
        .collect()
}

fn mean(mat: &Mat) -> f64 {
    if mat.data().is_empty() {
        return 0.0;
    }
    mat.data().iter().sum::<f64>() / mat.data().len() as f64
}

/// Runs the whole pipeline on one packet. The seed only affects
/// initialization tie-breaking; the loop itself is deterministic.
pub fn run(
    packet: &EventPacket,
    n_clusters: usize,
    me_cfg: &MeConfig,
    ed_cfg: &EdConfig,
    loop_cfg: &LoopConfig,
    seed: u64,
) -> Result<SegmentationResult, MotionError> {
    let (mut state, report) = initialize(packet, n_clusters, seed, me_cfg)?;
    let mut me_cfg = me_cfg.clone();
    if let Some(w) = report.selected_window {
        me_cfg.sharpness.window = w;
    }

    let mut trace = Vec::new();
    for iter in 1..=loop_cfg.iterations {
        state = run_me(packet, &state, &me_cfg);
        let total_sharpness = state.total_sharpness();

        let ed = run_ed(packet, &state, ed_cfg);
        if ed.degenerate {
            // No correlation signal anywhere: fall back to the motion-only
            // labeling (plain argmax, nothing marked as noise).
            let labels = state
                .hard_assignments()
                .iter()
                .map(|&j| Label::Object(j as u32 + 1))
                .collect();
            trace.push(TraceEntry {
                iter,
                total_sharpness,
                mean_confidence: 0.0,
                max_dc: state.c.max_abs_diff(&ed.state.c),
            });
            log::warn!("iteration {iter}: degenerate correlation, stopping with motion-only labels");
            return Ok(SegmentationResult {
                state,
                labels,
                trace,
                degenerate: true,
            });
        }

        let max_dc = state.c.max_abs_diff(&ed.state.c);
        state = ed.state;
        trace.push(TraceEntry {
            iter,
            total_sharpness,
            mean_confidence: mean(&state.c),
            max_dc,
        });
        log::debug!(
            "iteration {iter}: sharpness {total_sharpness:.6}, mean confidence {:.4}, max dC {max_dc:.6}",
            mean(&state.c)
        );
        if max_dc < loop_cfg.stability_tol {
            break;
        }
    }
    if loop_cfg.iterations == 0 {
        state = run_me(packet, &state, &me_cfg);
    }

    let labels = hard_labels(&state, loop_cfg.noise_threshold);
    Ok(SegmentationResult {
        state,
        labels,
        trace,
        degenerate: false,
    })
}

/// Writes the iteration trace as CSV.
pub fn save_trace<P: AsRef<Path>>(path: P, trace: &[TraceEntry]) -> std::io::Result<()> {
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    writeln!(file, "iter,total_sharpness,mean_confidence,max_dC")?;
    for entry in trace {
        writeln!(
            file,
            "{},{:.9},{:.9},{:.9}",
            entry.iter, entry.total_sharpness, entry.mean_confidence, entry.max_dc
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::events::Event;
    use crate::motion::{initialize, run_me};
    use crate::synth::{generate_scene, inject_noise, ObjectSpec, SceneSpec, Shape};
    use crate::warp::WarpParams;

    fn me_cfg() -> MeConfig {
        MeConfig {
            v_max: 100.0,
            grid_points: 11,
            grid_range: Some(50.0),
            ..MeConfig::default()
        }
    }

    fn two_object_scene() -> SceneSpec {
        SceneSpec {
            name: "pair".into(),
            width: 96,
            height: 64,
            duration: 0.3,
            contrast: 0.5,
            time_step: 1e-3,
            background: 0.0,
            noise_level: 0.0,
            threshold_jitter: false,
            seed: 0,
            objects: vec![
                ObjectSpec {
                    shape: Shape::Rect {
                        w: 10.0,
                        h: 12.0,
                        intensity: 1.0,
                    },
                    x0: 15.0,
                    y0: 14.0,
                    vx: 30.0,
                    vy: 0.0,
                },
                ObjectSpec {
                    shape: Shape::Rect {
                        w: 10.0,
                        h: 12.0,
                        intensity: 1.0,
                    },
                    x0: 70.0,
                    y0: 38.0,
                    vx: -30.0,
                    vy: 0.0,
                },
            ],
        }
    }

    #[test]
    fn zero_iterations_match_a_bare_motion_pass() {
        let labeled = generate_scene(&two_object_scene()).unwrap();
        let cfg = me_cfg();
        let result = run(
            &labeled.packet,
            2,
            &cfg,
            &EdConfig::default(),
            &LoopConfig {
                iterations: 0,
                ..LoopConfig::default()
            },
            3,
        )
        .unwrap();
        assert!(result.trace.is_empty());
        assert!(result.labels.iter().all(|l| *l != Label::Noise));

        let (init, _) = initialize(&labeled.packet, 2, 3, &cfg).unwrap();
        let bare = run_me(&labeled.packet, &init, &cfg);
        let bare_labels: Vec<Label> = bare
            .hard_assignments()
            .iter()
            .map(|&j| Label::Object(j as u32 + 1))
            .collect();
        assert_eq!(result.labels, bare_labels);
    }

    #[test]
    fn noiseless_scene_stops_early_and_is_stable_across_budgets() {
        let labeled = generate_scene(&two_object_scene()).unwrap();
        let cfg = me_cfg();
        let short = run(
            &labeled.packet,
            2,
            &cfg,
            &EdConfig::default(),
            &LoopConfig {
                iterations: 1,
                ..LoopConfig::default()
            },
            0,
        )
        .unwrap();
        let long = run(
            &labeled.packet,
            2,
            &cfg,
            &EdConfig::default(),
            &LoopConfig::default(),
            0,
        )
        .unwrap();
        assert!(
            long.trace.len() < 7,
            "noiseless run should stop early, trace {:?}",
            long.trace
        );
        let last = long.trace.last().unwrap();
        assert!(last.max_dc < LoopConfig::default().stability_tol);
        assert_eq!(short.labels, long.labels);
        for (a, b) in short.state.thetas.iter().zip(&long.state.thetas) {
            assert!((a.vx - b.vx).abs() < 1.0 && (a.vy - b.vy).abs() < 1.0);
        }
    }

    #[test]
    fn trace_never_exceeds_the_iteration_budget() {
        let labeled = generate_scene(&two_object_scene()).unwrap();
        let noisy = inject_noise(&labeled, 0.25, 11).unwrap();
        let result = run(
            &noisy.packet,
            2,
            &me_cfg(),
            &EdConfig::default(),
            &LoopConfig {
                iterations: 3,
                ..LoopConfig::default()
            },
            0,
        )
        .unwrap();
        assert!(result.trace.len() <= 3);
        for (i, entry) in result.trace.iter().enumerate() {
            assert_eq!(entry.iter, i + 1);
            assert!((0.0..=1.0).contains(&entry.mean_confidence));
        }
    }

    #[test]
    fn runs_are_deterministic_for_a_fixed_seed() {
        let labeled = generate_scene(&two_object_scene()).unwrap();
        let noisy = inject_noise(&labeled, 0.15, 4).unwrap();
        let cfg = me_cfg();
        let loop_cfg = LoopConfig {
            iterations: 2,
            ..LoopConfig::default()
        };
        let a = run(&noisy.packet, 2, &cfg, &EdConfig::default(), &loop_cfg, 9).unwrap();
        let b = run(&noisy.packet, 2, &cfg, &EdConfig::default(), &loop_cfg, 9).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.state.thetas, b.state.thetas);
    }

    #[test]
    fn most_injected_noise_ends_up_labeled_noise() {
        let labeled = generate_scene(&two_object_scene()).unwrap();
        let noisy = inject_noise(&labeled, 0.25, 21).unwrap();
        let result = run(
            &noisy.packet,
            2,
            &me_cfg(),
            &EdConfig::default(),
            &LoopConfig::default(),
            0,
        )
        .unwrap();
        let mut noise_caught = 0usize;
        let mut noise_total = 0usize;
        let mut signal_kept = 0usize;
        let mut signal_total = 0usize;
        for (pred, truth) in result.labels.iter().zip(&noisy.labels) {
            if *truth == Label::Noise {
                noise_total += 1;
                if *pred == Label::Noise {
                    noise_caught += 1;
                }
            } else {
                signal_total += 1;
                if *pred != Label::Noise {
                    signal_kept += 1;
                }
            }
        }
        let catch_rate = noise_caught as f64 / noise_total as f64;
        let keep_rate = signal_kept as f64 / signal_total as f64;
        assert!(catch_rate > 0.5, "noise catch rate {catch_rate}");
        assert!(keep_rate > 0.8, "signal keep rate {keep_rate}");
    }

    #[test]
    fn degenerate_correlation_falls_back_to_motion_labels() {
        // Every pixel's positive and negative events cancel under any warp,
        // so the denoising stage has no signal at all.
        let packet = EventPacket::new(
            vec![
                Event::new(0.1, 16, 16, 1),
                Event::new(0.1, 16, 16, -1),
                Event::new(0.2, 8, 8, 1),
                Event::new(0.2, 8, 8, -1),
            ],
            32,
            32,
            0.0,
            0.4,
        )
        .unwrap();
        let result = run(
            &packet,
            1,
            &me_cfg(),
            &EdConfig::default(),
            &LoopConfig::default(),
            0,
        )
        .unwrap();
        assert_eq!(result.trace.len(), 1);
        assert!(result.degenerate);
        assert!(result.labels.iter().all(|l| *l == Label::Object(1)));
    }

    #[test]
    fn hard_labels_apply_the_threshold_and_break_ties_low() {
        let state = SegmentationState {
            thetas: vec![WarpParams::zero(); 2],
            p: Mat::from_rows(&[
                vec![0.9, 0.1],
                vec![0.5, 0.5],
                vec![0.2, 0.8],
            ]),
            c: Mat::from_rows(&[
                vec![1.0, 1.0],
                vec![0.6, 0.2],
                vec![0.4, 0.49],
            ]),
            t_ref: 0.0,
            sharpness_per_cluster: vec![0.0; 2],
        };
        let labels = hard_labels(&state, 0.5);
        assert_eq!(
            labels,
            vec![Label::Object(1), Label::Object(1), Label::Noise]
        );
        let lenient = hard_labels(&state, 0.0);
        assert!(lenient.iter().all(|l| *l != Label::Noise));
    }

    #[test]
    fn relabeling_clusters_permutes_hard_labels() {
        let state = SegmentationState {
            thetas: vec![WarpParams::new(1.0, 0.0), WarpParams::new(-1.0, 0.0)],
            p: Mat::from_rows(&[vec![0.7, 0.3], vec![0.3, 0.7]]),
            c: Mat::filled(2, 2, 1.0),
            t_ref: 0.0,
            sharpness_per_cluster: vec![0.0; 2],
        };
        let mut swapped = state.clone();
        swapped.thetas.swap(0, 1);
        swapped.p = Mat::from_rows(&[vec![0.3, 0.7], vec![0.7, 0.3]]);

        let base = hard_labels(&state, 0.5);
        let perm = hard_labels(&swapped, 0.5);
        assert_eq!(base, vec![Label::Object(1), Label::Object(2)]);
        assert_eq!(perm, vec![Label::Object(2), Label::Object(1)]);
    }

    #[test]
    fn trace_csv_round_trips_through_the_expected_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trace.csv");
        let trace = vec![
            TraceEntry {
                iter: 1,
                total_sharpness: 12.5,
                mean_confidence: 0.75,
                max_dc: 0.2,
            },
            TraceEntry {
                iter: 2,
                total_sharpness: 13.0,
                mean_confidence: 0.78,
                max_dc: 0.0005,
            },
        ];
        save_trace(&path, &trace).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("iter,total_sharpness,mean_confidence,max_dC"));
        assert_eq!(lines.next(), Some("1,12.500000000,0.750000000,0.200000000"));
        assert_eq!(lines.next(), Some("2,13.000000000,0.780000000,0.000500000"));
        assert_eq!(lines.next(), None);
    }
}
