//! Truncated signed distance field over grid vertices.
//!
//! For every vertex near the scanned surface, the smallest usable
//! neighborhood level is selected (adaptive modes scan levels `1..=k_max`,
//! constant modes pin a single level), the local plane at that level is
//! fitted, and the vertex value is the signed point-plane distance clamped to
//! the truncation band. The Gaussian confidence gate additionally requires
//! the vertex projection to fall inside the planar footprint of the
//! supporting points, which keeps surfaces from growing past their borders.

use nalgebra::Vector3;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::Error;
use crate::geometry::{fit_plane, PlaneEstimate};
use crate::grid::{GridHashMap, GridIndex, StatGrid};

/// Floor applied to footprint eigenvalues so degenerate planes stay evaluable.
pub const LAMBDA_FLOOR: f64 = 1e-12;

/// Which neighborhoods qualify for a vertex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ReconstructionMode {
    /// Smallest level passing both the support and confidence tests.
    #[serde(rename = "an-gc")]
    AdaptiveGated,
    /// Smallest level passing the support test.
    #[serde(rename = "an")]
    Adaptive,
    /// Fixed level, support and confidence tests.
    #[serde(rename = "cn-gc")]
    FixedGated,
    /// Fixed level, support test only.
    #[serde(rename = "cn")]
    Fixed,
}

impl ReconstructionMode {
    pub fn is_adaptive(self) -> bool {
        matches!(self, Self::AdaptiveGated | Self::Adaptive)
    }

    pub fn is_gated(self) -> bool {
        matches!(self, Self::AdaptiveGated | Self::FixedGated)
    }
}

impl std::str::FromStr for ReconstructionMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "an-gc" => Ok(Self::AdaptiveGated),
            "an" => Ok(Self::Adaptive),
            "cn-gc" => Ok(Self::FixedGated),
            "cn" => Ok(Self::Fixed),
            other => Err(Error::Config(format!(
                "unknown mode '{other}' (expected an-gc, an, cn-gc or cn)"
            ))),
        }
    }
}

impl std::fmt::Display for ReconstructionMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::AdaptiveGated => "an-gc",
            Self::Adaptive => "an",
            Self::FixedGated => "cn-gc",
            Self::Fixed => "cn",
        };
        f.write_str(s)
    }
}

/// How the footprint confidence is normalized before the threshold test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConfidenceModel {
    /// `exp(-m^2/2)`: the density divided by its peak, always in `(0, 1]`,
    /// which makes the threshold scale-free. Default.
    #[serde(rename = "peak")]
    PeakNormalized,
    /// The raw 2D Gaussian density `exp(-m^2/2) / (2 pi sqrt(l1 l2))`.
    #[serde(rename = "raw")]
    RawDensity,
}

impl std::str::FromStr for ConfidenceModel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "peak" => Ok(Self::PeakNormalized),
            "raw" => Ok(Self::RawDensity),
            other => Err(Error::Config(format!(
                "unknown confidence model '{other}' (expected peak or raw)"
            ))),
        }
    }
}

impl std::fmt::Display for ConfidenceModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::PeakNormalized => "peak",
            Self::RawDensity => "raw",
        })
    }
}

/// Hyper-parameters of the reconstruction.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReconstructionConfig {
    /// Voxel edge length in meters.
    pub alpha: f64,
    /// Confidence threshold for gated modes.
    pub tau: f64,
    /// Minimum neighborhood support for a plane fit.
    pub n_min: u32,
    /// Largest neighborhood level.
    pub k_max: u32,
    pub mode: ReconstructionMode,
    /// Level used by the constant-neighborhood modes.
    pub fixed_k: u32,
    /// Truncation band in meters.
    pub truncation: f64,
    pub confidence: ConfidenceModel,
}

impl Default for ReconstructionConfig {
    fn default() -> Self {
        let alpha = 0.2;
        let k_max = 5;
        ReconstructionConfig {
            alpha,
            tau: 0.2,
            n_min: 10,
            k_max,
            mode: ReconstructionMode::AdaptiveGated,
            fixed_k: 1,
            truncation: alpha * k_max as f64,
            confidence: ConfidenceModel::PeakNormalized,
        }
    }
}

impl ReconstructionConfig {
    /// Default truncation band: the largest neighborhood radius, beyond which
    /// no plane has support.
    pub fn default_truncation(alpha: f64, k_max: u32) -> f64 {
        alpha * k_max as f64
    }

    pub fn validate(&self) -> Result<(), Error> {
        if !self.alpha.is_finite() || self.alpha <= 0.0 {
            return Err(Error::Config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !self.tau.is_finite() || self.tau < 0.0 {
            return Err(Error::Config(format!("tau must be >= 0, got {}", self.tau)));
        }
        if self.k_max < 1 {
            return Err(Error::Config("k_max must be >= 1".into()));
        }
        if self.fixed_k < 1 || self.fixed_k > self.k_max {
            return Err(Error::Config(format!(
                "fixed_k must lie in [1, k_max]; got fixed_k={} k_max={}",
                self.fixed_k, self.k_max
            )));
        }
        if !self.truncation.is_finite() || self.truncation <= 0.0 {
            return Err(Error::Config(format!(
                "truncation must be positive, got {}",
                self.truncation
            )));
        }
        Ok(())
    }
}

/// Signed distances at grid vertices; vertices absent from the map are
/// undefined. Every stored value lies in `[-truncation, truncation]`.
#[derive(Debug, Clone)]
pub struct TsdfField {
    values: GridHashMap<f64>,
    truncation: f64,
    origin: Vector3<f64>,
}

impl TsdfField {
    pub fn new(truncation: f64, origin: Vector3<f64>) -> Self {
        TsdfField {
            values: GridHashMap::default(),
            truncation,
            origin,
        }
    }

    pub fn truncation(&self) -> f64 {
        self.truncation
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    /// Sets the value at a vertex, clamped to the truncation band.
    pub fn set(&mut self, idx: GridIndex, value: f64) {
        self.values
            .insert(idx, value.clamp(-self.truncation, self.truncation));
    }

    pub fn value(&self, idx: &GridIndex) -> Option<f64> {
        self.values.get(idx).copied()
    }

    pub fn defined_count(&self) -> usize {
        self.values.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&GridIndex, &f64)> {
        self.values.iter()
    }

    /// World position of vertex `idx` for a grid of edge `alpha`.
    pub fn vertex_position(&self, idx: &GridIndex, alpha: f64) -> Vector3<f64> {
        self.origin + idx.as_vector() * alpha
    }
}

/// Likelihood that `vertex` belongs to the planar footprint of the points
/// supporting `plane`.
///
/// The vertex is projected onto the plane, expressed in the two dominant
/// principal directions, and scored under the 2D Gaussian with the matching
/// eigenvalues as variances.
pub fn gaussian_confidence(
    plane: &PlaneEstimate,
    vertex: &Vector3<f64>,
    model: ConfidenceModel,
) -> f64 {
    let projected = plane.project(vertex);
    let offset = projected - plane.center;
    let u1 = plane.eigvecs[0].dot(&offset);
    let u2 = plane.eigvecs[1].dot(&offset);
    let l1 = plane.eigvals[0].max(LAMBDA_FLOOR);
    let l2 = plane.eigvals[1].max(LAMBDA_FLOOR);
    let mahal_sq = u1 * u1 / l1 + u2 * u2 / l2;
    let kernel = (-0.5 * mahal_sq).exp();
    match model {
        ConfidenceModel::PeakNormalized => kernel,
        ConfidenceModel::RawDensity => kernel / (2.0 * std::f64::consts::PI * (l1 * l2).sqrt()),
    }
}

/// Selects the neighborhood level for one vertex and returns its plane, or
/// `None` when no level qualifies (no surface at this vertex).
pub fn select_level(
    grid: &StatGrid,
    vertex: &GridIndex,
    cfg: &ReconstructionConfig,
) -> Option<PlaneEstimate> {
    let vertex_pos = grid.vertex_position(vertex);
    let sensor = grid.sensor_pose();

    let qualify = |stats: &crate::grid::NeighborhoodStats| -> Option<PlaneEstimate> {
        let plane = fit_plane(stats, &sensor, cfg.n_min).ok()??;
        if cfg.mode.is_gated()
            && gaussian_confidence(&plane, &vertex_pos, cfg.confidence) < cfg.tau
        {
            return None;
        }
        Some(plane)
    };

    if cfg.mode.is_adaptive() {
        let mut scan = grid.neighborhood_scan(vertex);
        for _ in 1..=cfg.k_max {
            let stats = scan.advance();
            if let Some(plane) = qualify(&stats) {
                return Some(plane);
            }
        }
        None
    } else {
        qualify(&grid.neighborhood_stats(vertex, cfg.fixed_k))
    }
}

/// Evaluates the TSDF over all candidate vertices of the grid.
///
/// Candidates are the vertices whose deepest usable neighborhood intersects
/// occupancy; everything else is undefined by construction. Vertex
/// evaluations are independent and run in parallel.
pub fn compute_tsdf(grid: &StatGrid, cfg: &ReconstructionConfig) -> Result<TsdfField, Error> {
    cfg.validate()?;
    let reach = if cfg.mode.is_adaptive() {
        cfg.k_max
    } else {
        cfg.fixed_k
    };
    let candidates = grid.candidate_vertices(reach);
    let entries: Vec<(GridIndex, f64)> = candidates
        .par_iter()
        .filter_map(|vertex| {
            select_level(grid, vertex, cfg).map(|plane| {
                let distance = plane.signed_distance(&grid.vertex_position(vertex));
                (*vertex, distance.clamp(-cfg.truncation, cfg.truncation))
            })
        })
        .collect();

    let mut field = TsdfField::new(cfg.truncation, grid.origin());
    field.values.extend(entries);
    Ok(field)
}
