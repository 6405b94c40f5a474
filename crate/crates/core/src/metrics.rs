//! Set-to-set evaluation of a reconstruction against ground truth.
//!
//! The predicted point set is the mesh vertices; all metrics reduce the
//! per-point exact nearest-neighbor distances into the other set: directed
//! and symmetric average error and Hausdorff distance, the cumulative
//! delta-error curve, and the per-sensor-range error profile.

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::error::Error;
use crate::kdtree::KdTree;

/// Full evaluation of predicted (P) against ground-truth (GT) point sets.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    pub ae_p_to_gt: f64,
    pub ae_gt_to_p: f64,
    pub ae_sym: f64,
    pub hd_p_to_gt: f64,
    pub hd_gt_to_p: f64,
    pub hd_sym: f64,
    /// `(threshold, fraction of predicted points with error < threshold)`,
    /// non-decreasing in the fraction.
    pub delta_curve: Vec<(f64, f64)>,
    /// `(bin center distance to sensor, mean error)`, empty bins omitted.
    pub range_profile: Vec<(f64, f64)>,
}

/// Thresholds used for the delta-error curve: 0.01 m steps from 0 to 1 m.
pub fn default_delta_thresholds() -> Vec<f64> {
    (0..=100).map(|i| i as f64 * 0.01).collect()
}

fn require_non_empty(name: &str, set: &[Vector3<f64>]) -> Result<(), Error> {
    if set.is_empty() {
        Err(Error::InvalidInput(format!("{name} point set is empty")))
    } else {
        Ok(())
    }
}

/// Exact nearest-neighbor distance of every `src` point into `dst`.
fn nearest_distances(src: &[Vector3<f64>], dst_tree: &KdTree) -> Vec<f64> {
    src.par_iter().map(|p| dst_tree.nearest(p).0).collect()
}

/// Mean distance from each `src` point to its nearest `dst` point.
pub fn directed_average_error(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<f64, Error> {
    require_non_empty("source", src)?;
    require_non_empty("destination", dst)?;
    let tree = KdTree::build(dst);
    let dists = nearest_distances(src, &tree);
    Ok(dists.iter().sum::<f64>() / dists.len() as f64)
}

/// Largest minimum distance from `src` into `dst`.
pub fn hausdorff(src: &[Vector3<f64>], dst: &[Vector3<f64>]) -> Result<f64, Error> {
    require_non_empty("source", src)?;
    require_non_empty("destination", dst)?;
    let tree = KdTree::build(dst);
    let dists = nearest_distances(src, &tree);
    Ok(dists.iter().fold(0.0f64, |a, &d| a.max(d)))
}

/// Fraction of `src` points whose nearest-`dst` distance is strictly below
/// each threshold. `thresholds` must be sorted ascending.
pub fn delta_error_curve(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    thresholds: &[f64],
) -> Result<Vec<(f64, f64)>, Error> {
    require_non_empty("source", src)?;
    require_non_empty("destination", dst)?;
    if thresholds.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("thresholds must be sorted ascending".into()));
    }
    let tree = KdTree::build(dst);
    let mut dists = nearest_distances(src, &tree);
    dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(curve_from_sorted(&dists, thresholds))
}

fn curve_from_sorted(sorted: &[f64], thresholds: &[f64]) -> Vec<(f64, f64)> {
    let n = sorted.len() as f64;
    thresholds
        .iter()
        .map(|&t| (t, sorted.partition_point(|&d| d < t) as f64 / n))
        .collect()
}

/// Buckets `src` points by distance to the sensor and reports per-bucket mean
/// nearest-neighbor error as `(bin center, mean error)`; empty bins omitted.
pub fn range_profile(
    src: &[Vector3<f64>],
    dst: &[Vector3<f64>],
    sensor_pose: &Vector3<f64>,
    bin_width: f64,
) -> Result<Vec<(f64, f64)>, Error> {
    require_non_empty("source", src)?;
    require_non_empty("destination", dst)?;
    if !bin_width.is_finite() || bin_width <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }
    let tree = KdTree::build(dst);
    let dists = nearest_distances(src, &tree);
    Ok(profile_from_distances(src, &dists, sensor_pose, bin_width))
}

fn profile_from_distances(
    src: &[Vector3<f64>],
    errors: &[f64],
    sensor_pose: &Vector3<f64>,
    bin_width: f64,
) -> Vec<(f64, f64)> {
    use std::collections::BTreeMap;
    let mut bins: BTreeMap<u64, (f64, u64)> = BTreeMap::new();
    for (p, &err) in src.iter().zip(errors.iter()) {
        let range = (p - sensor_pose).norm();
        let bin = (range / bin_width).floor() as u64;
        let entry = bins.entry(bin).or_insert((0.0, 0));
        entry.0 += err;
        entry.1 += 1;
    }
    bins.into_iter()
        .map(|(bin, (sum, count))| ((bin as f64 + 0.5) * bin_width, sum / count as f64))
        .collect()
}

/// Computes the full report with one tree build and one distance pass per
/// direction.
pub fn evaluate(
    predicted: &[Vector3<f64>],
    ground_truth: &[Vector3<f64>],
    sensor_pose: &Vector3<f64>,
    bin_width: f64,
    thresholds: &[f64],
) -> Result<MetricsReport, Error> {
    require_non_empty("predicted", predicted)?;
    require_non_empty("ground-truth", ground_truth)?;
    if !bin_width.is_finite() || bin_width <= 0.0 {
        return Err(Error::InvalidInput(format!(
            "bin width must be positive, got {bin_width}"
        )));
    }

    let gt_tree = KdTree::build(ground_truth);
    let p_tree = KdTree::build(predicted);
    let p_to_gt = nearest_distances(predicted, &gt_tree);
    let gt_to_p = nearest_distances(ground_truth, &p_tree);

    let ae_p_to_gt = p_to_gt.iter().sum::<f64>() / p_to_gt.len() as f64;
    let ae_gt_to_p = gt_to_p.iter().sum::<f64>() / gt_to_p.len() as f64;
    let hd_p_to_gt = p_to_gt.iter().fold(0.0f64, |a, &d| a.max(d));
    let hd_gt_to_p = gt_to_p.iter().fold(0.0f64, |a, &d| a.max(d));

    let mut sorted = p_to_gt.clone();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());

    Ok(MetricsReport {
        ae_p_to_gt,
        ae_gt_to_p,
        ae_sym: 0.5 * (ae_p_to_gt + ae_gt_to_p),
        hd_p_to_gt,
        hd_gt_to_p,
        hd_sym: 0.5 * (hd_p_to_gt + hd_gt_to_p),
        delta_curve: curve_from_sorted(&sorted, thresholds),
        range_profile: profile_from_distances(predicted, &p_to_gt, sensor_pose, bin_width),
    })
}
