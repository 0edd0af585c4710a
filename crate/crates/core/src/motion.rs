//! Per-cluster motion estimation and event-to-cluster association.
//!
//! Each cluster carries a velocity hypothesis θ. The module alternates two
//! steps: maximizing the sharpness objective over θ for every cluster
//! (finite-difference gradient ascent with a backtracking step), and
//! re-deriving the association probabilities by sampling every cluster's
//! weighted event image at each event's warped position and normalizing
//! across clusters.
//!
//! Initialization is a coarse velocity-grid search: the objective is
//! evaluated with unit weights on a regular grid, and the highest peaks
//! surviving non-maximum suppression seed the clusters. Confidences are not
//! touched here; they belong to the denoising stage and enter only as fixed
//! per-event weights.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventPacket;
use crate::mat::Mat;
use crate::sharpness::{
    self, gradient_magnitude_mean, hessian_magnitude_mean, image_variance, Sharpness,
    SharpnessConfig,
};
use crate::warp::{accumulate_iec, accumulate_wiwe, warp_position, WarpParams};

/// Objective maximized over candidate velocities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObjectiveKind {
    /// Local variance of the weighted event image, averaged under the
    /// absolute count image. The default and the only objective that uses
    /// the count image.
    IecWeightedVariance,
    /// Plain variance of the weighted event image.
    ImageVariance,
    /// Mean squared gradient magnitude of the weighted event image.
    GradientMagnitude,
    /// Mean squared Hessian magnitude of the weighted event image.
    HessianMagnitude,
}

/// Motion-estimation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MeConfig {
    /// Finite-difference step for the objective gradient, px/s.
    pub fd_step: f64,
    /// Initial ascent step, px/s; backtracking halves it on failure.
    pub ascent_step: f64,
    /// Hard cap on accepted ascent iterations per optimization.
    pub max_ascent_iters: usize,
    /// Relative objective gain below which the ascent stops.
    pub ascent_tol: f64,
    /// Alternations of per-cluster ascent and probability update.
    pub em_alternations: usize,
    /// Velocity bound, px/s per component; also the default grid range.
    pub v_max: f64,
    /// Initialization grid resolution per axis.
    pub grid_points: usize,
    /// Half-range of the initialization grid, px/s; `None` uses `v_max`.
    pub grid_range: Option<f64>,
    pub objective: ObjectiveKind,
    pub sharpness: SharpnessConfig,
}

impl Default for MeConfig {
    fn default() -> Self {
        Self {
            fd_step: 0.5,
            ascent_step: 10.0,
            max_ascent_iters: 100,
            ascent_tol: 1e-6,
            em_alternations: 5,
            v_max: 1000.0,
            grid_points: 11,
            grid_range: None,
            objective: ObjectiveKind::IecWeightedVariance,
            sharpness: SharpnessConfig::default(),
        }
    }
}

/// Joint segmentation state: one velocity per cluster, plus per-event
/// association probabilities and denoising confidences.
#[derive(Debug, Clone, PartialEq)]
pub struct SegmentationState {
    pub thetas: Vec<WarpParams>,
    /// N_e x N_l association probabilities; rows sum to one.
    pub p: Mat,
    /// N_e x N_l confidences in [0, 1], owned by the denoising stage.
    pub c: Mat,
    /// Warp reference time, seconds.
    pub t_ref: f64,
    /// Objective value of each cluster under its own weight column.
    pub sharpness_per_cluster: Vec<f64>,
}

impl SegmentationState {
    pub fn n_clusters(&self) -> usize {
        self.thetas.len()
    }

    pub fn n_events(&self) -> usize {
        self.p.rows()
    }

    pub fn total_sharpness(&self) -> f64 {
        self.sharpness_per_cluster.iter().sum()
    }

    /// Per-event weight of cluster `j`: probability times confidence.
    pub fn weight_column(&self, j: usize) -> Vec<f64> {
        (0..self.p.rows())
            .map(|k| self.p.get(k, j) * self.c.get(k, j))
            .collect()
    }

    /// Most probable cluster per event, ties toward the lower index.
    pub fn hard_assignments(&self) -> Vec<usize> {
        (0..self.p.rows())
            .map(|k| {
                let row = self.p.row(k);
                let mut best = 0;
                for (j, v) in row.iter().enumerate().skip(1) {
                    if *v > row[best] {
                        best = j;
                    }
                }
                best
            })
            .collect()
    }

    /// Checks the structural invariants; used by tests and debug builds.
    pub fn validate(&self) -> Result<(), String> {
        if self.thetas.is_empty() {
            return Err("no clusters".into());
        }
        if self.p.cols() != self.thetas.len() || self.c.cols() != self.thetas.len() {
            return Err("matrix width does not match cluster count".into());
        }
        if self.p.rows() != self.c.rows() {
            return Err("P and C row counts differ".into());
        }
        if self.sharpness_per_cluster.len() != self.thetas.len() {
            return Err("sharpness vector length mismatch".into());
        }
        for k in 0..self.p.rows() {
            let row = self.p.row(k);
            if row.iter().any(|v| *v < 0.0) {
                return Err(format!("negative probability in row {k}"));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(format!("row {k} sums to {sum}"));
            }
        }
        if self.c.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err("confidence outside [0, 1]".into());
        }
        Ok(())
    }
}

/// Initialization diagnostics.
#[derive(Debug, Clone, PartialEq)]
pub struct InitReport {
    /// Grid peaks surviving non-maximum suppression.
    pub peaks_found: usize,
    /// Clusters that had to be seeded from random grid cells.
    pub random_fill: usize,
    /// Variance window chosen by the aggregate-variance search, when the
    /// config asked for it. The caller is expected to adopt it.
    pub selected_window: Option<usize>,
}

#[derive(Debug, Error)]
pub enum MotionError {
    #[error("cannot initialize on an empty packet")]
    EmptyPacket,
    #[error("cluster count must be at least 1")]
    InvalidClusterCount,
}

/// Objective value for one velocity hypothesis under per-event weights.
pub fn evaluate_objective(
    packet: &EventPacket,
    theta: WarpParams,
    t_ref: f64,
    weights: &[f64],
    cfg: &MeConfig,
) -> Sharpness {
    let wiwe = accumulate_wiwe(packet, theta, t_ref, weights);
    match cfg.objective {
        ObjectiveKind::IecWeightedVariance => {
            let iec = accumulate_iec(packet, theta, t_ref);
            sharpness::sharpness(&wiwe, &iec, cfg.sharpness.window)
        }
        ObjectiveKind::ImageVariance => Sharpness {
            value: image_variance(&wiwe),
            degenerate: false,
        },
        ObjectiveKind::GradientMagnitude => Sharpness {
            value: gradient_magnitude_mean(&wiwe),
            degenerate: false,
        },
        ObjectiveKind::HessianMagnitude => Sharpness {
            value: hessian_magnitude_mean(&wiwe),
            degenerate: false,
        },
    }
}

/// Central finite-difference gradient of the objective at `theta` with
/// step `h` px/s per component.
pub fn fd_gradient(
    packet: &EventPacket,
    theta: WarpParams,
    t_ref: f64,
    weights: &[f64],
    cfg: &MeConfig,
    h: f64,
) -> (f64, f64) {
    let f = |vx: f64, vy: f64| {
        evaluate_objective(packet, WarpParams::new(vx, vy), t_ref, weights, cfg).value
    };
    let gx = (f(theta.vx + h, theta.vy) - f(theta.vx - h, theta.vy)) / (2.0 * h);
    let gy = (f(theta.vx, theta.vy + h) - f(theta.vx, theta.vy - h)) / (2.0 * h);
    (gx, gy)
}

fn grid_velocities(cfg: &MeConfig) -> Vec<f64> {
    let range = cfg.grid_range.unwrap_or(cfg.v_max).abs();
    let points = cfg.grid_points.max(1);
    if points == 1 || range == 0.0 {
        return vec![0.0];
    }
    (0..points)
        .map(|i| -range + 2.0 * range * i as f64 / (points - 1) as f64)
        .collect()
}

/// Seeds `n_clusters` velocity hypotheses from a coarse grid search with
/// unit weights, keeping the highest objective peaks after non-maximum
/// suppression at one grid-cell radius. Probabilities start uniform and
/// confidences start at one. The seed only breaks score ties and fills in
/// when the landscape offers fewer peaks than clusters.
pub fn initialize(
    packet: &EventPacket,
    n_clusters: usize,
    seed: u64,
    cfg: &MeConfig,
) -> Result<(SegmentationState, InitReport), MotionError> {
    if packet.is_empty() {
        return Err(MotionError::EmptyPacket);
    }
    if n_clusters == 0 {
        return Err(MotionError::InvalidClusterCount);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ones = vec![1.0; packet.len()];

    let selected_window = if cfg.sharpness.auto_window {
        let flat = accumulate_wiwe(packet, WarpParams::zero(), packet.t0(), &ones);
        Some(sharpness::select_window(&flat, &cfg.sharpness.candidates))
    } else {
        None
    };
    let mut eval_cfg = cfg.clone();
    if let Some(w) = selected_window {
        eval_cfg.sharpness.window = w;
    }

    let axis = grid_velocities(&eval_cfg);
    let n_axis = axis.len();
    let mut cells: Vec<(usize, usize, f64, u64)> = Vec::with_capacity(n_axis * n_axis);
    for (iy, &vy) in axis.iter().enumerate() {
        for (ix, &vx) in axis.iter().enumerate() {
            let s = evaluate_objective(
                packet,
                WarpParams::new(vx, vy),
                packet.t0(),
                &ones,
                &eval_cfg,
            );
            cells.push((ix, iy, s.value, rng.random()));
        }
    }
    cells.sort_by(|a, b| {
        b.2.partial_cmp(&a.2)
            .expect("finite objective")
            .then(a.3.cmp(&b.3))
    });

    let mut peaks: Vec<(usize, usize)> = Vec::new();
    for &(ix, iy, score, _) in &cells {
        if peaks.len() == n_clusters || score <= 0.0 {
            break;
        }
        let suppressed = peaks
            .iter()
            .any(|&(px, py)| ix.abs_diff(px) <= 1 && iy.abs_diff(py) <= 1);
        if !suppressed {
            peaks.push((ix, iy));
        }
    }

    let peaks_found = peaks.len();
    let random_fill = n_clusters - peaks_found;
    if random_fill > 0 {
        log::warn!(
            "grid search found {peaks_found} peaks for {n_clusters} clusters; \
             seeding {random_fill} from random grid cells"
        );
        let mut all: Vec<(usize, usize)> = (0..n_axis)
            .flat_map(|iy| (0..n_axis).map(move |ix| (ix, iy)))
            .collect();
        all.shuffle(&mut rng);
        peaks.extend(all.into_iter().take(random_fill));
    }

    let clamp = |v: f64| v.clamp(-cfg.v_max, cfg.v_max);
    let thetas: Vec<WarpParams> = peaks
        .iter()
        .map(|&(ix, iy)| WarpParams::new(clamp(axis[ix]), clamp(axis[iy])))
        .collect();

    let n_events = packet.len();
    let p = Mat::filled(n_events, n_clusters, 1.0 / n_clusters as f64);
    let c = Mat::filled(n_events, n_clusters, 1.0);
    let mut state = SegmentationState {
        thetas,
        p,
        c,
        t_ref: packet.t0(),
        sharpness_per_cluster: vec![0.0; n_clusters],
    };
    refresh_sharpness(packet, &mut state, &eval_cfg);
    debug_assert_eq!(state.validate(), Ok(()));
    Ok((
        state,
        InitReport {
            peaks_found,
            random_fill,
            selected_window,
        },
    ))
}

fn refresh_sharpness(packet: &EventPacket, state: &mut SegmentationState, cfg: &MeConfig) {
    state.sharpness_per_cluster = (0..state.n_clusters())
        .map(|j| {
            evaluate_objective(packet, state.thetas[j], state.t_ref, &state.weight_column(j), cfg)
                .value
        })
        .collect();
}

/// Outcome of one per-cluster ascent.
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaOpt {
    pub theta: WarpParams,
    pub sharpness: f64,
    /// Objective after each accepted iterate, starting at the input θ.
    pub accepted: Vec<f64>,
}

/// Gradient ascent on cluster `j`'s objective, weights fixed to the
/// cluster's probability-confidence column. Backtracking halves the step
/// until a strict improvement is found, so the returned objective never
/// falls below the input's. A cluster with an all-zero weight column is
/// returned unchanged.
pub fn optimize_theta(
    packet: &EventPacket,
    state: &SegmentationState,
    j: usize,
    cfg: &MeConfig,
) -> ThetaOpt {
    let weights = state.weight_column(j);
    let mut theta = state.thetas[j];
    if weights.iter().all(|w| *w == 0.0) {
        return ThetaOpt {
            theta,
            sharpness: 0.0,
            accepted: vec![0.0],
        };
    }

    let eval = |t: WarpParams| evaluate_objective(packet, t, state.t_ref, &weights, cfg).value;
    let clamp = |t: WarpParams| {
        WarpParams::new(
            t.vx.clamp(-cfg.v_max, cfg.v_max),
            t.vy.clamp(-cfg.v_max, cfg.v_max),
        )
    };

    let mut value = eval(theta);
    let mut accepted = vec![value];
    let min_step = 1e-3;
    // Backtracking line search along one direction; returns the relative
    // gain of the first strictly improving candidate.
    let backtrack = |theta: &mut WarpParams, value: &mut f64, dx: f64, dy: f64| -> Option<f64> {
        let mut step = cfg.ascent_step;
        while step >= min_step {
            let candidate = clamp(WarpParams::new(theta.vx + step * dx, theta.vy + step * dy));
            let cand_value = eval(candidate);
            if cand_value > *value {
                let gain = (cand_value - *value) / value.abs().max(1e-12);
                *theta = candidate;
                *value = cand_value;
                return Some(gain);
            }
            step /= 2.0;
        }
        None
    };
    for _ in 0..cfg.max_ascent_iters {
        let (gx, gy) = fd_gradient(packet, theta, state.t_ref, &weights, cfg, cfg.fd_step);
        let norm = gx.hypot(gy);
        // The gradient ray first; near ridges the finite-difference
        // estimate can point off-crest, so fall back to axis moves before
        // declaring convergence.
        let mut directions: Vec<(f64, f64)> = Vec::with_capacity(5);
        if norm > 0.0 {
            directions.push((gx / norm, gy / norm));
        }
        let sx = if gx < 0.0 { -1.0 } else { 1.0 };
        let sy = if gy < 0.0 { -1.0 } else { 1.0 };
        directions.extend([(sx, 0.0), (0.0, sy), (-sx, 0.0), (0.0, -sy)]);

        let mut gain = None;
        for (dx, dy) in directions {
            gain = backtrack(&mut theta, &mut value, dx, dy);
            if gain.is_some() {
                accepted.push(value);
                break;
            }
        }
        match gain {
            Some(g) if g >= cfg.ascent_tol => {}
            _ => break,
        }
    }
    ThetaOpt {
        theta,
        sharpness: value,
        accepted,
    }
}

/// Association update: every cluster's weighted event image is sampled at
/// each event's warped position and the samples are normalized across
/// clusters. Rows whose samples all vanish fall back to uniform.
pub fn update_probabilities(packet: &EventPacket, state: &SegmentationState) -> Mat {
    let n_clusters = state.n_clusters();
    let images: Vec<_> = (0..n_clusters)
        .into_par_iter()
        .map(|j| {
            accumulate_wiwe(packet, state.thetas[j], state.t_ref, &state.weight_column(j))
        })
        .collect();

    let mut p = Mat::zeros(packet.len(), n_clusters);
    for (k, e) in packet.events().iter().enumerate() {
        let row = p.row_mut(k);
        let mut denom = 0.0;
        for (j, image) in images.iter().enumerate() {
            let (x, y) = warp_position(e, state.thetas[j], state.t_ref);
            let w = image.sample_bilinear(x, y).max(0.0);
            row[j] = w;
            denom += w;
        }
        if denom < 1e-12 {
            row.fill(1.0 / n_clusters as f64);
        } else {
            for v in row.iter_mut() {
                *v /= denom;
            }
        }
    }
    p
}

/// Alternates per-cluster ascent and the association update for up to
/// `cfg.em_alternations` rounds, holding confidences fixed. Returns the
/// best state seen, so the output's total objective never falls below the
/// input's.
pub fn run_me(packet: &EventPacket, state: &SegmentationState, cfg: &MeConfig) -> SegmentationState {
    let mut current = state.clone();
    refresh_sharpness(packet, &mut current, cfg);
    let mut best = current.clone();
    let mut prev_total = current.total_sharpness();

    for alternation in 0..cfg.em_alternations {
        let opts: Vec<ThetaOpt> = (0..current.n_clusters())
            .into_par_iter()
            .map(|j| optimize_theta(packet, &current, j, cfg))
            .collect();
        current.thetas = opts.iter().map(|o| o.theta).collect();
        current.sharpness_per_cluster = opts.iter().map(|o| o.sharpness).collect();
        let total_after_ascent = current.total_sharpness();
        if total_after_ascent > best.total_sharpness() {
            best = current.clone();
        }

        current.p = update_probabilities(packet, &current);
        refresh_sharpness(packet, &mut current, cfg);
        if current.total_sharpness() > best.total_sharpness() {
            best = current.clone();
        }
        log::debug!(
            "me alternation={alternation} ascent_total={total_after_ascent:.6} \
             post_update_total={:.6}",
            current.total_sharpness()
        );

        let gain = total_after_ascent - prev_total;
        if gain <= cfg.ascent_tol * prev_total.abs().max(1e-12) {
            break;
        }
        prev_total = total_after_ascent;
    }
    debug_assert_eq!(best.validate(), Ok(()));
    best
}
