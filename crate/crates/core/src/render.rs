//! Color rendering of segmentation results.
//!
//! Produces the composite segmentation raster (one hue per cluster, noise in
//! gray, untouched pixels in black) and writes it as binary PPM. Per-cluster
//! scalar images reuse [`ScalarImage::write_pgm`](crate::warp::ScalarImage);
//! this module only deals in color.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use crate::events::{EventPacket, Label};

/// Gray used for pixels whose events are all labeled noise.
pub const NOISE_GRAY: [u8; 3] = [128, 128, 128];

/// Black used for pixels no event touches.
pub const BACKGROUND_BLACK: [u8; 3] = [0, 0, 0];

/// Evenly spaced cluster colors: hues at `360 * j / n` degrees with fixed
/// saturation and value, so any cluster count yields distinct, saturated
/// colors that collide with neither [`NOISE_GRAY`] nor
/// [`BACKGROUND_BLACK`].
pub fn cluster_palette(n: usize) -> Vec<[u8; 3]> {
    (0..n)
        .map(|j| hsv_to_rgb(360.0 * j as f64 / n as f64, 0.85, 0.95))
        .collect()
}

fn hsv_to_rgb(h: f64, s: f64, v: f64) -> [u8; 3] {
    let sector = h.rem_euclid(360.0) / 60.0;
    let f = sector - sector.floor();
    let p = v * (1.0 - s);
    let q = v * (1.0 - f * s);
    let t = v * (1.0 - (1.0 - f) * s);
    let (r, g, b) = match sector.floor() as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    };
    let byte = |c: f64| (c * 255.0).round().clamp(0.0, 255.0) as u8;
    [byte(r), byte(g), byte(b)]
}

/// Row-major 8-bit RGB raster.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbRaster {
    width: usize,
    height: usize,
    pixels: Vec<[u8; 3]>,
}

impl RgbRaster {
    /// Raster of the given size filled with one color.
    pub fn filled(width: usize, height: usize, color: [u8; 3]) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn pixel(&self, x: usize, y: usize) -> [u8; 3] {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        self.pixels[y * self.width + x]
    }

    pub fn set_pixel(&mut self, x: usize, y: usize, color: [u8; 3]) {
        assert!(x < self.width && y < self.height, "pixel out of bounds");
        self.pixels[y * self.width + x] = color;
    }

    /// Flat `R,G,B` byte sequence in row-major order, as PPM and PNG
    /// encoders expect it.
    pub fn to_bytes(&self) -> Vec<u8> {
        self.pixels.iter().flatten().copied().collect()
    }

    /// Writes the raster as binary PPM (`P6`, maxval 255).
    pub fn write_ppm(&self, path: &Path) -> io::Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        write!(out, "P6\n{} {}\n255\n", self.width, self.height)?;
        out.write_all(&self.to_bytes())?;
        out.flush()
    }
}

/// Composite segmentation image at sensor resolution.
///
/// Every event votes at its raw pixel for its label. A pixel nobody touched
/// stays black; a pixel where every vote is noise turns gray; otherwise the
/// pixel takes the color of the cluster with the most votes there, ties
/// going to the lower cluster index. Cluster `Object(id)` maps to palette
/// entry `id - 1`.
pub fn composite_image(packet: &EventPacket, labels: &[Label], n_clusters: usize) -> RgbRaster {
    assert_eq!(
        labels.len(),
        packet.len(),
        "one label per event is required"
    );
    let (width, height) = (packet.width() as usize, packet.height() as usize);
    let palette = cluster_palette(n_clusters);

    // votes[pixel * (n_clusters + 1)] counts noise; slot 1 + j counts cluster j.
    let slots = n_clusters + 1;
    let mut votes = vec![0u32; width * height * slots];
    for (event, label) in packet.events().iter().zip(labels) {
        let base = (event.y as usize * width + event.x as usize) * slots;
        match label {
            Label::Noise => votes[base] += 1,
            Label::Object(id) => {
                let j = (id - 1) as usize;
                assert!(j < n_clusters, "label {id} exceeds cluster count");
                votes[base + 1 + j] += 1;
            }
        }
    }

    let mut raster = RgbRaster::filled(width, height, BACKGROUND_BLACK);
    for y in 0..height {
        for x in 0..width {
            let base = (y * width + x) * slots;
            let cluster_votes = &votes[base + 1..base + slots];
            let best = cluster_votes
                .iter()
                .enumerate()
                .filter(|(_, &count)| count > 0)
                .max_by(|a, b| a.1.cmp(b.1).then(b.0.cmp(&a.0)));
            if let Some((j, _)) = best {
                raster.set_pixel(x, y, palette[j]);
            } else if votes[base] > 0 {
                raster.set_pixel(x, y, NOISE_GRAY);
            }
        }
    }
    raster
}
