//! Motion compensation: event warping and accumulated event images.
//!
//! An event at pixel `x` and time `t` is warped along a candidate velocity
//! `v` to `x' = x - (t - t_ref) * v`. Warped events land at continuous
//! coordinates and are accumulated onto the pixel grid by bilinear splatting,
//! the continuous counterpart of the Dirac delta in the image formation
//! model. Two images are built this way:
//!
//! * the weighted event image: each event contributes its association weight
//!   (confidence times cluster probability) at its warped position;
//! * the event-count image: each event contributes its polarity, and the
//!   accumulated image is normalized by the packet time span.
//!
//! Events warped off the sensor lose the mass that would land outside; this
//! is intentional, since an objective that rewarded pushing events off the
//! border would be trivially gameable.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::events::{Event, EventPacket};

/// Candidate per-cluster velocity in pixels per second.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpParams {
    pub vx: f64,
    pub vy: f64,
}

impl WarpParams {
    pub fn new(vx: f64, vy: f64) -> Self {
        Self { vx, vy }
    }

    pub fn zero() -> Self {
        Self { vx: 0.0, vy: 0.0 }
    }

    pub fn norm(self) -> f64 {
        self.vx.hypot(self.vy)
    }
}

/// Warped continuous position of one event relative to `t_ref`.
#[inline]
pub fn warp_position(e: &Event, params: WarpParams, t_ref: f64) -> (f64, f64) {
    let dt = e.t - t_ref;
    (
        f64::from(e.x) - dt * params.vx,
        f64::from(e.y) - dt * params.vy,
    )
}

/// Dense f64 image with pixel centers at integer coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarImage {
    width: u16,
    height: u16,
    data: Vec<f64>,
}

impl ScalarImage {
    pub fn zeros(width: u16, height: u16) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; usize::from(width) * usize::from(height)],
        }
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * usize::from(self.width) + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * usize::from(self.width) + x] = value;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Adds `weight` at a continuous position, distributed over the four
    /// surrounding pixels by bilinear weights. Corners off the sensor are
    /// skipped, so splats near the border deposit less than `weight`.
    pub fn splat(&mut self, x: f64, y: f64, weight: f64) {
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as i64;
        let y0 = y0 as i64;
        let corners = [
            (x0, y0, (1.0 - fx) * (1.0 - fy)),
            (x0 + 1, y0, fx * (1.0 - fy)),
            (x0, y0 + 1, (1.0 - fx) * fy),
            (x0 + 1, y0 + 1, fx * fy),
        ];
        let (w, h) = (i64::from(self.width), i64::from(self.height));
        for (cx, cy, cw) in corners {
            if cx >= 0 && cx < w && cy >= 0 && cy < h {
                self.data[cy as usize * usize::from(self.width) + cx as usize] += weight * cw;
            }
        }
    }

    /// Bilinear interpolation at a continuous position. Positions outside
    /// the pixel-center domain `[0, W-1] x [0, H-1]` read as zero.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let (w, h) = (f64::from(self.width), f64::from(self.height));
        if x < 0.0 || x > w - 1.0 || y < 0.0 || y > h - 1.0 {
            return 0.0;
        }
        let x0 = x.floor();
        let y0 = y.floor();
        let fx = x - x0;
        let fy = y - y0;
        let x0 = x0 as usize;
        let y0 = y0 as usize;
        let at = |cx: usize, cy: usize| -> f64 {
            if cx < usize::from(self.width) && cy < usize::from(self.height) {
                self.get(cx, cy)
            } else {
                0.0
            }
        };
        at(x0, y0) * (1.0 - fx) * (1.0 - fy)
            + at(x0 + 1, y0) * fx * (1.0 - fy)
            + at(x0, y0 + 1) * (1.0 - fx) * fy
            + at(x0 + 1, y0 + 1) * fx * fy
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().sum()
    }

    pub fn abs_sum(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |acc, v| acc.max(v.abs()))
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.data {
            *v *= s;
        }
    }

    /// Writes the image as a 16-bit binary PGM. Values are mapped affinely
    /// from `[min, max]` onto `[0, 65535]`; the mapping is recorded in a
    /// comment line so the original range can be recovered.
    pub fn write_pgm(&self, path: &Path) -> io::Result<()> {
        let mut min = f64::INFINITY;
        let mut max = f64::NEG_INFINITY;
        for &v in &self.data {
            min = min.min(v);
            max = max.max(v);
        }
        if self.data.is_empty() {
            min = 0.0;
            max = 0.0;
        }
        let range = max - min;
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "P5")?;
        writeln!(w, "# min={min} max={max}")?;
        writeln!(w, "{} {}", self.width, self.height)?;
        writeln!(w, "65535")?;
        for &v in &self.data {
            let scaled = if range > 0.0 {
                ((v - min) / range * 65535.0).round() as u16
            } else {
                0
            };
            w.write_all(&scaled.to_be_bytes())?;
        }
        w.flush()
    }
}

/// Weighted event image: each event splats `weights[k]` at its warped
/// position. `weights` must align with `packet.events()`.
pub fn accumulate_wiwe(
    packet: &EventPacket,
    params: WarpParams,
    t_ref: f64,
    weights: &[f64],
) -> ScalarImage {
    assert_eq!(weights.len(), packet.len(), "one weight per event");
    let mut image = ScalarImage::zeros(packet.width(), packet.height());
    for (e, &w) in packet.events().iter().zip(weights) {
        if w == 0.0 {
            continue;
        }
        let (x, y) = warp_position(e, params, t_ref);
        image.splat(x, y, w);
    }
    image
}

/// Event-count image: each event splats its polarity at its warped position
/// and the result is normalized by the packet time span.
pub fn accumulate_iec(packet: &EventPacket, params: WarpParams, t_ref: f64) -> ScalarImage {
    let mut image = ScalarImage::zeros(packet.width(), packet.height());
    for e in packet.events() {
        let (x, y) = warp_position(e, params, t_ref);
        image.splat(x, y, f64::from(e.polarity));
    }
    let span = packet.time_span();
    debug_assert!(span > 0.0);
    image.scale(1.0 / span);
    image
}
