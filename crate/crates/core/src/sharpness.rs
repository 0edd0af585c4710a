//! Sharpness objectives over accumulated event images.
//!
//! The primary objective scores a candidate velocity by how sharp the
//! weighted event image becomes after motion compensation: a local variance
//! map is computed over the weighted image, then averaged with the absolute
//! event-count image as weights. Concentrating mass onto few pixels raises
//! local variance exactly where events land, so correct velocities score
//! high while smeared ones score low.
//!
//! Local variance uses a square window of odd side `window`, zero-padded at
//! the borders, and always divides by `window^2` regardless of clipping.
//!
//! Alternative whole-image objectives (plain variance, gradient magnitude,
//! Hessian magnitude) are provided for comparison runs; they score the
//! weighted image directly without the count-image weighting.

use serde::{Deserialize, Serialize};

use crate::warp::ScalarImage;

/// Parameters of the local-variance objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SharpnessConfig {
    /// Side of the square variance window; must be odd.
    pub window: usize,
    /// Select the window once at startup by maximizing aggregate local
    /// variance over `candidates` instead of using `window` directly.
    pub auto_window: bool,
    /// Window sides tried when `auto_window` is set.
    pub candidates: Vec<usize>,
}

impl Default for SharpnessConfig {
    fn default() -> Self {
        Self {
            window: 5,
            auto_window: false,
            candidates: vec![3, 5, 7, 9],
        }
    }
}

/// Objective value plus a flag for the degenerate all-cancelled case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sharpness {
    pub value: f64,
    /// Set when the absolute count image sums to zero, leaving the
    /// objective undefined; the value is reported as zero.
    pub degenerate: bool,
}

/// Local variance map: at each pixel, the variance of the `window x window`
/// neighborhood, zero-padded beyond the borders and divided by `window^2`.
pub fn local_variance(image: &ScalarImage, window: usize) -> ScalarImage {
    assert!(
        window >= 1 && window % 2 == 1,
        "variance window must be odd, got {window}"
    );
    let w = usize::from(image.width());
    let h = usize::from(image.height());
    let stride = w + 1;

    // Integral images of values and squares, one zero row/column ahead.
    let mut sum = vec![0.0f64; stride * (h + 1)];
    let mut sum_sq = vec![0.0f64; stride * (h + 1)];
    for y in 0..h {
        for x in 0..w {
            let v = image.get(x, y);
            let i = (y + 1) * stride + (x + 1);
            sum[i] = v + sum[i - 1] + sum[i - stride] - sum[i - stride - 1];
            sum_sq[i] = v * v + sum_sq[i - 1] + sum_sq[i - stride] - sum_sq[i - stride - 1];
        }
    }

    let rect = |table: &[f64], x0: usize, x1: usize, y0: usize, y1: usize| -> f64 {
        table[y1 * stride + x1] - table[y0 * stride + x1] - table[y1 * stride + x0]
            + table[y0 * stride + x0]
    };

    let r = (window / 2) as i64;
    let area = (window * window) as f64;
    let mut out = ScalarImage::zeros(image.width(), image.height());
    for y in 0..h {
        let y0 = (y as i64 - r).max(0) as usize;
        let y1 = ((y as i64 + r + 1).min(h as i64)) as usize;
        for x in 0..w {
            let x0 = (x as i64 - r).max(0) as usize;
            let x1 = ((x as i64 + r + 1).min(w as i64)) as usize;
            let mean = rect(&sum, x0, x1, y0, y1) / area;
            let mean_sq = rect(&sum_sq, x0, x1, y0, y1) / area;
            out.set(x, y, (mean_sq - mean * mean).max(0.0));
        }
    }
    out
}

/// Mean of `var` weighted by `|iec|`. Degenerate when the weights sum to
/// zero.
pub fn iec_weighted_mean(var: &ScalarImage, iec: &ScalarImage) -> Sharpness {
    assert_eq!(var.width(), iec.width());
    assert_eq!(var.height(), iec.height());
    let mut num = 0.0;
    let mut den = 0.0;
    for (v, c) in var.data().iter().zip(iec.data()) {
        num += v * c.abs();
        den += c.abs();
    }
    if den == 0.0 {
        Sharpness {
            value: 0.0,
            degenerate: true,
        }
    } else {
        Sharpness {
            value: num / den,
            degenerate: false,
        }
    }
}

/// Full objective: local variance of the weighted image, averaged with the
/// absolute count image as weights.
pub fn sharpness(wiwe: &ScalarImage, iec: &ScalarImage, window: usize) -> Sharpness {
    iec_weighted_mean(&local_variance(wiwe, window), iec)
}

/// Window side from `candidates` that maximizes the aggregate local variance
/// of `image`. Ties keep the earliest candidate.
pub fn select_window(image: &ScalarImage, candidates: &[usize]) -> usize {
    assert!(!candidates.is_empty(), "no window candidates");
    let mut best = candidates[0];
    let mut best_score = f64::NEG_INFINITY;
    for &window in candidates {
        let score = local_variance(image, window).sum();
        if score > best_score {
            best_score = score;
            best = window;
        }
    }
    best
}

/// Plain variance of the image over all pixels.
pub fn image_variance(image: &ScalarImage) -> f64 {
    let n = image.data().len();
    if n == 0 {
        return 0.0;
    }
    let mean = image.sum() / n as f64;
    image
        .data()
        .iter()
        .map(|v| (v - mean) * (v - mean))
        .sum::<f64>()
        / n as f64
}

/// Mean squared gradient magnitude over interior pixels, using central
/// differences. Zero when the image has no interior.
pub fn gradient_magnitude_mean(image: &ScalarImage) -> f64 {
    let w = usize::from(image.width());
    let h = usize::from(image.height());
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let gx = (image.get(x + 1, y) - image.get(x - 1, y)) / 2.0;
            let gy = (image.get(x, y + 1) - image.get(x, y - 1)) / 2.0;
            total += gx * gx + gy * gy;
        }
    }
    total / ((w - 2) * (h - 2)) as f64
}

/// Mean squared Hessian magnitude (Frobenius) over interior pixels. Zero
/// when the image has no interior.
pub fn hessian_magnitude_mean(image: &ScalarImage) -> f64 {
    let w = usize::from(image.width());
    let h = usize::from(image.height());
    if w < 3 || h < 3 {
        return 0.0;
    }
    let mut total = 0.0;
    for y in 1..h - 1 {
        for x in 1..w - 1 {
            let lxx = image.get(x + 1, y) - 2.0 * image.get(x, y) + image.get(x - 1, y);
            let lyy = image.get(x, y + 1) - 2.0 * image.get(x, y) + image.get(x, y - 1);
            let lxy = (image.get(x + 1, y + 1) - image.get(x + 1, y - 1)
                - image.get(x - 1, y + 1)
                + image.get(x - 1, y - 1))
                / 4.0;
            total += lxx * lxx + lyy * lyy + 2.0 * lxy * lxy;
        }
    }
    total / ((w - 2) * (h - 2)) as f64
}
