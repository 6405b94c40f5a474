//! Implicit moving least squares baseline.
//!
//! The signed distance at a vertex is the Gaussian-weighted average of
//! point-plane distances over the points inside a spherical neighborhood,
//! with per-point normals estimated by k-nearest-neighbor PCA and oriented
//! toward the sensor. Evaluated on the same candidate vertices and meshed by
//! the same marching cubes as the adaptive method, so comparisons isolate
//! the distance-field definition.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::eigen3_symmetric;
use crate::grid::{GridIndex, StatGrid, VoxelStats};
use crate::kdtree::KdTree;
use crate::tsdf::TsdfField;

/// Baseline hyper-parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ImlsConfig {
    /// Spherical neighborhood radius in meters.
    pub radius: f64,
    /// Neighbor count for the normal estimation.
    pub k_neighbors: usize,
    /// Gaussian bandwidth in meters.
    pub h: f64,
}

impl ImlsConfig {
    /// Defaults tied to the adaptive method: radius `alpha * k_max`,
    /// `n_min` neighbors, bandwidth a third of the radius.
    pub fn matched_to(alpha: f64, k_max: u32, n_min: u32) -> Self {
        let radius = alpha * k_max as f64;
        ImlsConfig {
            radius,
            k_neighbors: n_min as usize,
            h: radius / 3.0,
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.radius.is_finite() || self.radius <= 0.0 {
            return Err(Error::Config(format!(
                "IMLS radius must be positive, got {}",
                self.radius
            )));
        }
        if !self.h.is_finite() || self.h <= 0.0 {
            return Err(Error::Config(format!(
                "IMLS bandwidth h must be positive, got {}",
                self.h
            )));
        }
        if self.k_neighbors < 3 {
            return Err(Error::Config(format!(
                "IMLS needs at least 3 neighbors for normals, got {}",
                self.k_neighbors
            )));
        }
        Ok(())
    }
}

/// Per-point normals from k-nearest-neighbor PCA, oriented toward the sensor
/// (exact ties keep the unflipped eigenvector).
pub fn estimate_normals(
    points: &[Vector3<f64>],
    k_neighbors: usize,
    sensor_pose: &Vector3<f64>,
) -> Vec<Vector3<f64>> {
    if points.is_empty() {
        return Vec::new();
    }
    let tree = KdTree::build(points);
    points
        .par_iter()
        .map(|p| {
            let neighbors = tree.knn(p, k_neighbors);
            let stats = VoxelStats::from_points(neighbors.iter().map(|(_, i)| &points[*i]));
            let (_, eigvecs) = eigen3_symmetric(&stats.cov());
            let normal = eigvecs[2];
            if normal.dot(&(sensor_pose - p)) >= 0.0 {
                normal
            } else {
                -normal
            }
        })
        .collect()
}

/// Weighted point-plane distance at an arbitrary query position; `None` when
/// no point lies within the neighborhood radius.
pub fn imls_value(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    tree: &KdTree,
    cfg: &ImlsConfig,
    query: &Vector3<f64>,
) -> Option<f64> {
    let neighbors = tree.within_radius(query, cfg.radius);
    if neighbors.is_empty() {
        return None;
    }
    let inv_h2 = 1.0 / (cfg.h * cfg.h);
    let mut weight_sum = 0.0;
    let mut value_sum = 0.0;
    for i in neighbors {
        let offset = query - points[i];
        let weight = (-offset.norm_squared() * inv_h2).exp();
        weight_sum += weight;
        value_sum += weight * normals[i].dot(&offset);
    }
    if weight_sum > 0.0 {
        Some(value_sum / weight_sum)
    } else {
        None
    }
}

/// Evaluates the IMLS field over the grid's candidate vertices, clamped to
/// `truncation`.
pub fn imls_tsdf(
    points: &[Vector3<f64>],
    normals: &[Vector3<f64>],
    grid: &StatGrid,
    cfg: &ImlsConfig,
    truncation: f64,
) -> Result<TsdfField, Error> {
    cfg.validate()?;
    if points.len() != normals.len() {
        return Err(Error::InvalidInput(format!(
            "{} points but {} normals",
            points.len(),
            normals.len()
        )));
    }
    if !truncation.is_finite() || truncation <= 0.0 {
        return Err(Error::Config(format!(
            "truncation must be positive, got {truncation}"
        )));
    }
    let mut field = TsdfField::new(truncation, grid.origin());
    if points.is_empty() {
        return Ok(field);
    }
    let tree = KdTree::build(points);
    // same reach as the adaptive method when radius = alpha * k_max
    let reach = (cfg.radius / grid.cell_size()).ceil().max(1.0) as u32;
    let candidates = grid.candidate_vertices(reach);
    let entries: Vec<(GridIndex, f64)> = candidates
        .par_iter()
        .filter_map(|vertex| {
            let position = grid.vertex_position(vertex);
            imls_value(points, normals, &tree, cfg, &position)
                .map(|v| (*vertex, v.clamp(-truncation, truncation)))
        })
        .collect();
    for (idx, v) in entries {
        field.set(idx, v);
    }
    Ok(field)
}
