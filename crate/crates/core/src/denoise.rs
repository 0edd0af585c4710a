//! Per-event denoising confidence from temporal correlation.
//!
//! Events caused by real scene activity pile up along the warped trajectory
//! of their cluster, so the per-pixel count image (module `warp`) is large
//! in magnitude where they land and near zero where isolated noise lands.
//! Each event's correlation is the absolute count image value sampled at
//! its warped position; a normalized mapping turns correlations into
//! confidences in [0, 1]. The count image is built from the whole packet
//! without probability or confidence weights, so the confidence map depends
//! only on the velocities and the raw events: re-running the stage at fixed
//! velocities is the identity.
//!
//! A classic spatiotemporal neighbor filter is included as a baseline for
//! the comparison harness.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::events::EventPacket;
use crate::mat::Mat;
use crate::motion::SegmentationState;
use crate::warp::{accumulate_iec, warp_position};

/// Correlation-to-confidence mapping. Every kind maps [0, ∞) into [0, 1],
/// is non-decreasing, and sends 0 to 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MappingFunction {
    #[default]
    Tanh,
    /// λ·EC clamped to 1.
    LinearClamp,
    /// 1 − exp(−λ·EC).
    ExpSaturate,
    /// 0 below λ·EC = 1, 1 at or above.
    HardStep,
}

impl MappingFunction {
    /// Maps one normalized correlation value.
    pub fn apply(self, x: f64) -> f64 {
        debug_assert!(x >= 0.0);
        match self {
            MappingFunction::Tanh => x.tanh(),
            MappingFunction::LinearClamp => x.min(1.0),
            MappingFunction::ExpSaturate => 1.0 - (-x).exp(),
            MappingFunction::HardStep => {
                if x >= 1.0 {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Denoising parameters.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct EdConfig {
    pub mapping: MappingFunction,
    /// Fixed normalization instead of the reciprocal-mean rule. Must be
    /// positive when set.
    pub lambda_override: Option<f64>,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EdError {
    #[error("all event correlations are zero; no scale for confidences")]
    DegenerateCorrelation,
}

/// Per-event, per-cluster correlation: the absolute count image of cluster
/// `j`, sampled at event `i`'s position warped by cluster `j`'s velocity.
/// The count images are built from every event of the packet, unweighted.
pub fn event_correlation(packet: &EventPacket, state: &SegmentationState) -> Mat {
    let mut ec = Mat::zeros(packet.len(), state.n_clusters());
    for (j, &theta) in state.thetas.iter().enumerate() {
        let iec = accumulate_iec(packet, theta, state.t_ref);
        for (i, e) in packet.events().iter().enumerate() {
            let (x, y) = warp_position(e, theta, state.t_ref);
            ec.set(i, j, iec.sample_bilinear(x, y).abs());
        }
    }
    ec
}

/// Reciprocal of the mean over all correlation entries.
pub fn compute_lambda(ec: &Mat) -> Result<f64, EdError> {
    let n = ec.data().len();
    if n == 0 {
        return Err(EdError::DegenerateCorrelation);
    }
    let mean = ec.data().iter().sum::<f64>() / n as f64;
    if mean == 0.0 {
        return Err(EdError::DegenerateCorrelation);
    }
    Ok(1.0 / mean)
}

/// Elementwise confidence mapping of normalized correlations.
pub fn map_confidence(ec: &Mat, lambda: f64, mapping: MappingFunction) -> Mat {
    assert!(lambda > 0.0, "normalization must be positive");
    let mut c = Mat::zeros(ec.rows(), ec.cols());
    for (dst, src) in c.data_mut().iter_mut().zip(ec.data()) {
        *dst = mapping.apply(lambda * src);
    }
    c
}

/// Denoising result. On a degenerate packet (every correlation zero) the
/// confidences are all zero and the flag is set; callers that alternate
/// stages treat that as a stop signal.
#[derive(Debug, Clone, PartialEq)]
pub struct EdOutcome {
    pub state: SegmentationState,
    pub degenerate: bool,
}

/// Replaces the state's confidence matrix from the correlation map;
/// velocities and probabilities pass through untouched.
pub fn run_ed(packet: &EventPacket, state: &SegmentationState, cfg: &EdConfig) -> EdOutcome {
    if let Some(l) = cfg.lambda_override {
        assert!(l > 0.0, "lambda override must be positive");
    }
    let ec = event_correlation(packet, state);
    let lambda = match cfg.lambda_override {
        Some(l) => Ok(l),
        None => compute_lambda(&ec),
    };
    let mut out = state.clone();
    match lambda {
        Ok(lambda) => {
            out.c = map_confidence(&ec, lambda, cfg.mapping);
            EdOutcome {
                state: out,
                degenerate: false,
            }
        }
        Err(EdError::DegenerateCorrelation) => {
            log::warn!("degenerate correlation: every event correlation is zero");
            out.c = Mat::zeros(ec.rows(), ec.cols());
            EdOutcome {
                state: out,
                degenerate: true,
            }
        }
    }
}

/// Classic spatiotemporal filter: an event is kept iff at least one other
/// event lies within `radius` pixels (Chebyshev) and `dt` seconds. One
/// forward and one backward pass over a per-pixel last-timestamp grid.
pub fn baseline_st_filter(packet: &EventPacket, radius: u16, dt: f64) -> Vec<bool> {
    assert!(radius >= 1, "radius must be at least one pixel");
    assert!(dt > 0.0, "time window must be positive");
    let w = usize::from(packet.width());
    let h = usize::from(packet.height());
    let mut keep = vec![false; packet.len()];
    let r = i64::from(radius);

    let mut scan = |indices: &mut dyn Iterator<Item = usize>, init: f64, hit: &dyn Fn(f64, f64) -> bool| {
        let mut last = vec![init; w * h];
        for i in indices {
            let e = &packet.events()[i];
            let (ex, ey) = (i64::from(e.x), i64::from(e.y));
            'window: for ny in (ey - r).max(0)..=(ey + r).min(h as i64 - 1) {
                for nx in (ex - r).max(0)..=(ex + r).min(w as i64 - 1) {
                    if hit(last[ny as usize * w + nx as usize], e.t) {
                        keep[i] = true;
                        break 'window;
                    }
                }
            }
            last[ey as usize * w + ex as usize] = e.t;
        }
    };

    scan(
        &mut (0..packet.len()),
        f64::NEG_INFINITY,
        &|prev, t| prev >= t - dt,
    );
    scan(
        &mut (0..packet.len()).rev(),
        f64::INFINITY,
        &|next, t| next <= t + dt,
    );
    keep
}
