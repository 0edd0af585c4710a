//! Segmentation and denoising evaluation.
//!
//! Segmentation quality is event-set IoU between ground-truth objects and
//! predicted clusters under the best one-to-one matching, averaged into
//! MIoU. The matching is exhaustive for small instances and solved with an
//! assignment algorithm otherwise, so relabeling clusters never changes
//! the score. Box-level success (OSS) and a denoising ROC round out the
//! comparison harness.

use thiserror::Error;

use crate::events::Label;
use crate::mat::Mat;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("prediction has {pred} labels but ground truth has {gt}")]
    LengthMismatch { pred: usize, gt: usize },
    #[error("no {class} events; rate undefined")]
    EmptyClass { class: &'static str },
}

/// Per-object IoU under the optimal object-to-cluster matching.
#[derive(Debug, Clone, PartialEq)]
pub struct IoUReport {
    /// Ground-truth object id → IoU in [0, 1], ascending by id.
    pub per_object: Vec<(u32, f64)>,
    /// Arithmetic mean of the per-object IoUs; 0 when no objects exist.
    pub miou: f64,
    /// Ground-truth object id → matched predicted cluster id, if any.
    pub matching: Vec<(u32, Option<u32>)>,
}

fn sorted_object_ids(labels: &[Label]) -> Vec<u32> {
    let mut ids: Vec<u32> = labels
        .iter()
        .filter_map(|l| match l {
            Label::Object(id) => Some(*id),
            Label::Noise => None,
        })
        .collect();
    ids.sort_unstable();
    ids.dedup();
    ids
}

/// Event-set IoU of one (object, cluster) pair: TP = events carrying both
/// labels, FP = cluster events outside the object (ground-truth noise
/// included), FN = object events outside the cluster (predicted noise
/// included).
fn pair_iou(pred: &[Label], gt: &[Label], cluster: u32, object: u32) -> f64 {
    let mut tp = 0u64;
    let mut fp = 0u64;
    let mut fngt = 0u64;
    for (p, g) in pred.iter().zip(gt) {
        let in_cluster = *p == Label::Object(cluster);
        let in_object = *g == Label::Object(object);
        match (in_cluster, in_object) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fngt += 1,
            (false, false) => {}
        }
    }
    let denom = tp + fp + fngt;
    if denom == 0 {
        0.0
    } else {
        tp as f64 / denom as f64
    }
}

/// Best injective row→column assignment by exhaustive recursion; `None`
/// only when columns run out. Returns (assignment, total score).
fn exhaustive_match(score: &Mat) -> (Vec<Option<usize>>, f64) {
    fn recurse(
        score: &Mat,
        row: usize,
        used: &mut Vec<bool>,
        current: &mut Vec<Option<usize>>,
        best: &mut (Vec<Option<usize>>, f64),
        running: f64,
    ) {
        if row == score.rows() {
            if running > best.1 {
                *best = (current.clone(), running);
            }
            return;
        }
        for col in 0..score.cols() {
            if !used[col] {
                used[col] = true;
                current.push(Some(col));
                recurse(score, row + 1, used, current, best, running + score.get(row, col));
                current.pop();
                used[col] = false;
            }
        }
        // Leaving the row unmatched can free its column for a later row.
        current.push(None);
        recurse(score, row + 1, used, current, best, running);
        current.pop();
    }
    let mut best = (vec![None; score.rows()], f64::NEG_INFINITY);
    let mut used = vec![false; score.cols()];
    recurse(score, 0, &mut used, &mut Vec::new(), &mut best, 0.0);
    best
}

/// Kuhn-Munkres with potentials on a square cost matrix; O(n³).
/// Returns the minimizing row→column assignment.
fn hungarian_min(cost: &Mat) -> Vec<usize> {
    let n = cost.rows();
    assert_eq!(n, cost.cols());
    // One-based arrays; index 0 is the virtual start column.
    let mut u = vec![0.0f64; n + 1];
    let mut v = vec![0.0f64; n + 1];
    let mut p = vec![0usize; n + 1];
    let mut way = vec![0usize; n + 1];
    for i in 1..=n {
        p[0] = i;
        let mut j0 = 0usize;
        let mut minv = vec![f64::INFINITY; n + 1];
        let mut used = vec![false; n + 1];
        loop {
            used[j0] = true;
            let i0 = p[j0];
            let mut delta = f64::INFINITY;
            let mut j1 = 0usize;
            for j in 1..=n {
                if !used[j] {
                    let cur = cost.get(i0 - 1, j - 1) - u[i0] - v[j];
                    if cur < minv[j] {
                        minv[j] = cur;
                        way[j] = j0;
                    }
                    if minv[j] < delta {
                        delta = minv[j];
                        j1 = j;
                    }
                }
            }
            for j in 0..=n {
                if used[j] {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
            if p[j0] == 0 {
                break;
            }
        }
        loop {
            let j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
            if j0 == 0 {
                break;
            }
        }
    }
    let mut assignment = vec![0usize; n];
    for j in 1..=n {
        if p[j] != 0 {
            assignment[p[j] - 1] = j - 1;
        }
    }
    assignment
}

/// Maximizing wrapper: pads the score matrix square, flips sign, and maps
/// padded columns back to `None`.
fn hungarian_match(score: &Mat) -> (Vec<Option<usize>>, f64) {
    let n = score.rows().max(score.cols());
    let mut cost = Mat::zeros(n, n);
    for r in 0..n {
        for c in 0..n {
            let s = if r < score.rows() && c < score.cols() {
                score.get(r, c)
            } else {
                0.0
            };
            cost.set(r, c, -s);
        }
    }
    let raw = hungarian_min(&cost);
    let mut total = 0.0;
    let assignment: Vec<Option<usize>> = (0..score.rows())
        .map(|r| {
            let c = raw[r];
            if c < score.cols() && score.get(r, c) > 0.0 {
                total += score.get(r, c);
                Some(c)
            } else {
                None
            }
        })
        .collect();
    (assignment, total)
}

const EXHAUSTIVE_LIMIT: usize = 6;

/// Event-set IoU per ground-truth object under the best one-to-one
/// object-to-cluster matching, and their mean.
pub fn iou_report(pred: &[Label], gt: &[Label]) -> Result<IoUReport, MetricsError> {
    if pred.len() != gt.len() {
        return Err(MetricsError::LengthMismatch {
            pred: pred.len(),
            gt: gt.len(),
        });
    }
    let objects = sorted_object_ids(gt);
    let clusters = sorted_object_ids(pred);
    if objects.is_empty() {
        return Ok(IoUReport {
            per_object: Vec::new(),
            miou: 0.0,
            matching: Vec::new(),
        });
    }

    let mut score = Mat::zeros(objects.len(), clusters.len().max(1));
    for (r, &object) in objects.iter().enumerate() {
        for (c, &cluster) in clusters.iter().enumerate() {
            score.set(r, c, pair_iou(pred, gt, cluster, object));
        }
    }
    let (assignment, _) = if objects.len() <= EXHAUSTIVE_LIMIT {
        exhaustive_match(&score)
    } else {
        hungarian_match(&score)
    };

    let mut per_object = Vec::with_capacity(objects.len());
    let mut matching = Vec::with_capacity(objects.len());
    for (r, &object) in objects.iter().enumerate() {
        match assignment[r] {
            Some(c) if c < clusters.len() => {
                per_object.push((object, score.get(r, c)));
                matching.push((object, Some(clusters[c])));
            }
            _ => {
                per_object.push((object, 0.0));
                matching.push((object, None));
            }
        }
    }
    let miou = per_object.iter().map(|(_, iou)| iou).sum::<f64>() / per_object.len() as f64;
    Ok(IoUReport {
        per_object,
        miou,
        matching,
    })
}

/// Axis-aligned box in pixel coordinates, inclusive extents.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn area(&self) -> f64 {
        (self.x_max - self.x_min).max(0.0) * (self.y_max - self.y_min).max(0.0)
    }

    /// Tightest box around a set of points; `None` when empty.
    pub fn around(points: impl IntoIterator<Item = (f64, f64)>) -> Option<Self> {
        let mut iter = points.into_iter();
        let (x, y) = iter.next()?;
        let mut bb = BoundingBox {
            x_min: x,
            y_min: y,
            x_max: x,
            y_max: y,
        };
        for (x, y) in iter {
            bb.x_min = bb.x_min.min(x);
            bb.y_min = bb.y_min.min(y);
            bb.x_max = bb.x_max.max(x);
            bb.y_max = bb.y_max.max(y);
        }
        Some(bb)
    }
}

/// Area IoU of two boxes.
pub fn box_iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    let ix = (a.x_max.min(b.x_max) - a.x_min.max(b.x_min)).max(0.0);
    let iy = (a.y_max.min(b.y_max) - a.y_min.max(b.y_min)).max(0.0);
    let inter = ix * iy;
    let union = a.area() + b.area() - inter;
    if union == 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Fraction of (predicted, ground-truth) box pairs whose IoU reaches 0.5,
/// as a percentage. A missing prediction counts as a failed attempt.
pub fn oss_rate(pairs: &[(Option<BoundingBox>, BoundingBox)]) -> f64 {
    if pairs.is_empty() {
        return 0.0;
    }
    let successes = pairs
        .iter()
        .filter(|(pred, gt)| matches!(pred, Some(p) if box_iou(p, gt) >= 0.5))
        .count();
    100.0 * successes as f64 / pairs.len() as f64
}

/// One operating point of the denoising ROC.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    /// Noise events scored at or above the threshold, over all noise.
    pub fpr: f64,
    /// Real events scored at or above the threshold, over all real.
    pub tpr: f64,
}

/// ROC of "score ≥ τ means real" over the given thresholds.
pub fn denoise_roc(
    scores: &[f64],
    is_noise: &[bool],
    thresholds: &[f64],
) -> Result<Vec<RocPoint>, MetricsError> {
    if scores.len() != is_noise.len() {
        return Err(MetricsError::LengthMismatch {
            pred: scores.len(),
            gt: is_noise.len(),
        });
    }
    let n_noise = is_noise.iter().filter(|n| **n).count();
    let n_real = is_noise.len() - n_noise;
    if n_real == 0 {
        return Err(MetricsError::EmptyClass { class: "real" });
    }
    if n_noise == 0 {
        return Err(MetricsError::EmptyClass { class: "noise" });
    }
    Ok(thresholds
        .iter()
        .map(|&threshold| {
            let mut tp = 0usize;
            let mut fp = 0usize;
            for (score, noise) in scores.iter().zip(is_noise) {
                if *score >= threshold {
                    if *noise {
                        fp += 1;
                    } else {
                        tp += 1;
                    }
                }
            }
            RocPoint {
                threshold,
                fpr: fp as f64 / n_noise as f64,
                tpr: tp as f64 / n_real as f64,
            }
        })
        .collect())
}

/// Threshold-free area under the ROC: the probability that a random real
/// event outscores a random noise event (ties count half). Computed from
/// the rank sum, O(N log N).
pub fn roc_auc(scores: &[f64], is_noise: &[bool]) -> Result<f64, MetricsError> {
    if scores.len() != is_noise.len() {
        return Err(MetricsError::LengthMismatch {
            pred: scores.len(),
            gt: is_noise.len(),
        });
    }
    let n_noise = is_noise.iter().filter(|n| **n).count();
    let n_real = is_noise.len() - n_noise;
    if n_real == 0 {
        return Err(MetricsError::EmptyClass { class: "real" });
    }
    if n_noise == 0 {
        return Err(MetricsError::EmptyClass { class: "noise" });
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));

    // Midranks over tied runs, then the Mann-Whitney statistic from the
    // real-class rank sum.
    let mut rank_sum_real = 0.0f64;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if !is_noise[k] {
                rank_sum_real += midrank;
            }
        }
        i = j;
    }
    let n_real_f = n_real as f64;
    let u = rank_sum_real - n_real_f * (n_real_f + 1.0) / 2.0;
    Ok(u / (n_real_f * n_noise as f64))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn obj(id: u32) -> Label {
        Label::Object(id)
    }

    #[test]
    fn perfect_prediction_scores_one_everywhere() {
        let gt = vec![obj(1), obj(1), obj(2), Label::Noise, obj(2)];
        let report = iou_report(&gt, &gt).unwrap();
        assert_eq!(report.per_object, vec![(1, 1.0), (2, 1.0)]);
        assert_eq!(report.miou, 1.0);
        assert_eq!(report.matching, vec![(1, Some(1)), (2, Some(2))]);
    }

    #[test]
    fn the_ninety_five_five_case_gives_ninety_percent() {
        // 90 shared, 5 cluster-only (ground-truth noise), 5 object-only
        // (predicted noise).
        let mut pred = Vec::new();
        let mut gt = Vec::new();
        for _ in 0..90 {
            pred.push(obj(1));
            gt.push(obj(1));
        }
        for _ in 0..5 {
            pred.push(obj(1));
            gt.push(Label::Noise);
        }
        for _ in 0..5 {
            pred.push(Label::Noise);
            gt.push(obj(1));
        }
        let report = iou_report(&pred, &gt).unwrap();
        assert_relative_eq!(report.miou, 0.9, epsilon = 1e-15);
    }

    #[test]
    fn all_noise_prediction_scores_zero() {
        let gt = vec![obj(1), obj(2), obj(1)];
        let pred = vec![Label::Noise; 3];
        let report = iou_report(&pred, &gt).unwrap();
        assert_eq!(report.miou, 0.0);
        assert_eq!(report.matching, vec![(1, None), (2, None)]);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert_eq!(
            iou_report(&[obj(1)], &[obj(1), obj(2)]),
            Err(MetricsError::LengthMismatch { pred: 1, gt: 2 })
        );
    }

    #[test]
    fn swapped_cluster_ids_are_repaired_by_the_matching() {
        let gt = vec![obj(1), obj(1), obj(2), obj(2)];
        let pred = vec![obj(2), obj(2), obj(1), obj(1)];
        let report = iou_report(&pred, &gt).unwrap();
        assert_eq!(report.miou, 1.0);
        assert_eq!(report.matching, vec![(1, Some(2)), (2, Some(1))]);
    }

    #[test]
    fn extra_objects_beyond_the_clusters_score_zero() {
        let gt = vec![obj(1), obj(2), obj(3)];
        let pred = vec![obj(1), obj(1), obj(1)];
        let report = iou_report(&pred, &gt).unwrap();
        // One cluster can serve only one object; the others stay unmatched.
        let matched: Vec<_> = report.matching.iter().filter(|(_, c)| c.is_some()).collect();
        assert_eq!(matched.len(), 1);
        assert_relative_eq!(report.miou, (1.0 / 3.0) / 3.0, epsilon = 1e-12);
    }

    fn random_labels(rng: &mut impl rand::Rng, n: usize, ids: &[Option<u32>]) -> Vec<Label> {
        (0..n)
            .map(|_| match ids[rng.random_range(0..ids.len())] {
                Some(id) => Label::Object(id),
                None => Label::Noise,
            })
            .collect()
    }

    #[test]
    fn hungarian_agrees_with_exhaustive_enumeration() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(13);
        for _ in 0..200 {
            let rows = rng.random_range(1..5usize);
            let cols = rng.random_range(1..5usize);
            let mut score = Mat::zeros(rows, cols);
            for v in score.data_mut() {
                *v = rng.random_range(0.0..1.0);
            }
            let (ex_assign, ex_total) = exhaustive_match(&score);
            let (hu_assign, hu_total) = hungarian_match(&score);
            assert!(
                (ex_total - hu_total).abs() < 1e-9,
                "totals {ex_total} vs {hu_total} on {score:?} ({ex_assign:?} vs {hu_assign:?})"
            );
        }
    }

    #[test]
    fn large_instances_use_the_assignment_solver_consistently() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(29);
        let ids: Vec<Option<u32>> = (1..=8).map(Some).chain([None]).collect();
        let gt = random_labels(&mut rng, 400, &ids);
        let pred = random_labels(&mut rng, 400, &ids);
        let report = iou_report(&pred, &gt).unwrap();
        assert_eq!(report.per_object.len(), 8);
        // The matching must be injective.
        let mut clusters: Vec<u32> = report.matching.iter().filter_map(|(_, c)| *c).collect();
        let before = clusters.len();
        clusters.sort_unstable();
        clusters.dedup();
        assert_eq!(clusters.len(), before);
        assert!((0.0..=1.0).contains(&report.miou));
    }

    #[test]
    fn identical_boxes_succeed_and_disjoint_boxes_fail() {
        let a = BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 10.0,
            y_max: 10.0,
        };
        let b = BoundingBox {
            x_min: 20.0,
            y_min: 20.0,
            x_max: 30.0,
            y_max: 24.0,
        };
        assert_eq!(box_iou(&a, &a), 1.0);
        assert_eq!(box_iou(&a, &b), 0.0);
        assert_eq!(oss_rate(&[(Some(a), a), (Some(b), a), (None, a)]), 100.0 / 3.0);
        assert_eq!(oss_rate(&[]), 0.0);
    }

    #[test]
    fn half_width_shift_is_a_third_overlap_and_fails() {
        let a = BoundingBox {
            x_min: 0.0,
            y_min: 0.0,
            x_max: 8.0,
            y_max: 4.0,
        };
        let shifted = BoundingBox {
            x_min: 4.0,
            y_min: 0.0,
            x_max: 12.0,
            y_max: 4.0,
        };
        assert_relative_eq!(box_iou(&a, &shifted), 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(oss_rate(&[(Some(shifted), a)]), 0.0);
    }

    #[test]
    fn bounding_box_around_points_is_tight() {
        let bb = BoundingBox::around([(3.0, 7.0), (1.0, 9.0), (5.0, 8.0)]).unwrap();
        assert_eq!(
            bb,
            BoundingBox {
                x_min: 1.0,
                y_min: 7.0,
                x_max: 5.0,
                y_max: 9.0
            }
        );
        assert_eq!(BoundingBox::around(std::iter::empty()), None);
    }

    #[test]
    fn roc_endpoints_are_the_corners() {
        let scores = vec![0.9, 0.8, 0.2, 0.1];
        let is_noise = vec![false, false, true, true];
        let points = denoise_roc(&scores, &is_noise, &[0.0, 0.5, 1.1]).unwrap();
        assert_eq!((points[0].fpr, points[0].tpr), (1.0, 1.0));
        // Perfect separation: a threshold between the classes hits (0, 1).
        assert_eq!((points[1].fpr, points[1].tpr), (0.0, 1.0));
        assert_eq!((points[2].fpr, points[2].tpr), (0.0, 0.0));
    }

    #[test]
    fn roc_requires_both_classes() {
        assert_eq!(
            denoise_roc(&[0.5], &[true], &[0.5]),
            Err(MetricsError::EmptyClass { class: "real" })
        );
        assert_eq!(
            roc_auc(&[0.5, 0.6], &[false, false]),
            Err(MetricsError::EmptyClass { class: "noise" })
        );
    }

    /// All-pairs AUC: P(real > noise) + 0.5 P(real = noise).
    fn brute_force_auc(scores: &[f64], is_noise: &[bool]) -> f64 {
        let real: Vec<f64> = scores
            .iter()
            .zip(is_noise)
            .filter(|(_, n)| !**n)
            .map(|(s, _)| *s)
            .collect();
        let noise: Vec<f64> = scores
            .iter()
            .zip(is_noise)
            .filter(|(_, n)| **n)
            .map(|(s, _)| *s)
            .collect();
        let mut total = 0.0;
        for r in &real {
            for n in &noise {
                if r > n {
                    total += 1.0;
                } else if r == n {
                    total += 0.5;
                }
            }
        }
        total / (real.len() * noise.len()) as f64
    }

    #[test]
    fn auc_matches_the_all_pairs_definition() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(31);
        for _ in 0..20 {
            let n = rng.random_range(4..60usize);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0_f64)).collect();
            // Quantize some scores to force ties.
            let scores: Vec<f64> = scores
                .into_iter()
                .map(|s| if s < 0.5 { (s * 8.0).round() / 8.0 } else { s })
                .collect();
            let mut is_noise: Vec<bool> = (0..n).map(|_| rng.random_bool(0.4)).collect();
            is_noise[0] = false;
            is_noise[1] = true;
            let fast = roc_auc(&scores, &is_noise).unwrap();
            let slow = brute_force_auc(&scores, &is_noise);
            assert_relative_eq!(fast, slow, epsilon = 1e-12);
        }
    }

    #[test]
    fn separated_scores_have_unit_auc() {
        let scores = vec![0.9, 0.95, 0.8, 0.1, 0.2];
        let is_noise = vec![false, false, false, true, true];
        assert_eq!(roc_auc(&scores, &is_noise).unwrap(), 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn relabeling_clusters_never_changes_miou(seed in 0u64..100) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ids: Vec<Option<u32>> = vec![Some(1), Some(2), Some(3), None];
            let n = rng.random_range(10..80usize);
            let gt = random_labels(&mut rng, n, &ids);
            let pred = random_labels(&mut rng, n, &ids);
            // Permute predicted cluster ids 1→2→3→1.
            let permuted: Vec<Label> = pred
                .iter()
                .map(|l| match l {
                    Label::Object(id) => Label::Object(id % 3 + 1),
                    Label::Noise => Label::Noise,
                })
                .collect();
            let base = iou_report(&pred, &gt).unwrap();
            let perm = iou_report(&permuted, &gt).unwrap();
            prop_assert!((base.miou - perm.miou).abs() < 1e-12);
        }

        #[test]
        fn iou_is_one_exactly_when_sets_match(seed in 0u64..60) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let ids: Vec<Option<u32>> = vec![Some(1), Some(2), None];
            let n = rng.random_range(6..40usize);
            let gt = random_labels(&mut rng, n, &ids);
            let pred = random_labels(&mut rng, n, &ids);
            let report = iou_report(&pred, &gt).unwrap();
            for &(object, iou) in &report.per_object {
                prop_assert!((0.0..=1.0).contains(&iou));
                let cluster = report
                    .matching
                    .iter()
                    .find(|(o, _)| *o == object)
                    .and_then(|(_, c)| *c);
                if let Some(cluster) = cluster {
                    let identical = gt.iter().zip(&pred).all(|(g, p)| {
                        (*g == Label::Object(object)) == (*p == Label::Object(cluster))
                    });
                    prop_assert_eq!(identical, iou == 1.0);
                }
            }
        }

        #[test]
        fn roc_rates_fall_as_the_threshold_rises(seed in 0u64..60) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n = rng.random_range(4..50usize);
            let scores: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..1.0)).collect();
            let mut is_noise: Vec<bool> = (0..n).map(|_| rng.random_bool(0.5)).collect();
            is_noise[0] = false;
            is_noise[1] = true;
            let thresholds: Vec<f64> = (0..=20).map(|i| i as f64 / 20.0).collect();
            let points = denoise_roc(&scores, &is_noise, &thresholds).unwrap();
            for pair in points.windows(2) {
                prop_assert!(pair[1].fpr <= pair[0].fpr);
                prop_assert!(pair[1].tpr <= pair[0].tpr);
            }
        }
    }
}
