//! Synthetic lidar over analytic scenes.
//!
//! A scene is a list of primitives (infinite ground plane, axis-aligned box,
//! sphere, vertical capped cylinder). The scanner casts one ray per
//! (layer, azimuth) pair, keeps the nearest intersection within range, and
//! optionally perturbs the range with Gaussian noise. A dense noise-free
//! configuration of the same scanner doubles as ground truth, so evaluation
//! compares against what the sensor could actually see.

use std::path::Path;

use nalgebra::Vector3;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::Deserialize;

use crate::error::Error;
use crate::io::PointCloud;

const RAY_EPSILON: f64 = 1e-9;

/// Analytic scene primitive.
#[derive(Debug, Clone, PartialEq)]
pub enum Primitive {
    /// Infinite horizontal plane at height `z`.
    GroundPlane { z: f64 },
    /// Axis-aligned box spanning `min..max`.
    Cuboid {
        min: Vector3<f64>,
        max: Vector3<f64>,
    },
    Sphere {
        center: Vector3<f64>,
        radius: f64,
    },
    /// Vertical cylinder with end caps.
    Cylinder {
        center_x: f64,
        center_y: f64,
        radius: f64,
        z_min: f64,
        z_max: f64,
    },
}

impl Primitive {
    fn validate(&self) -> Result<(), Error> {
        let ok = match self {
            Primitive::GroundPlane { z } => z.is_finite(),
            Primitive::Cuboid { min, max } => {
                min.iter().chain(max.iter()).all(|c| c.is_finite())
                    && (0..3).all(|i| max[i] > min[i])
            }
            Primitive::Sphere { center, radius } => {
                center.iter().all(|c| c.is_finite()) && *radius > 0.0
            }
            Primitive::Cylinder {
                center_x,
                center_y,
                radius,
                z_min,
                z_max,
            } => {
                center_x.is_finite()
                    && center_y.is_finite()
                    && *radius > 0.0
                    && z_max > z_min
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "primitive has non-positive dimensions: {self:?}"
            )))
        }
    }

    /// Nearest positive ray parameter, if the ray hits this primitive.
    fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match self {
            Primitive::GroundPlane { z } => {
                if dir.z.abs() < 1e-15 {
                    return None;
                }
                let t = (z - origin.z) / dir.z;
                (t > RAY_EPSILON).then_some(t)
            }
            Primitive::Cuboid { min, max } => {
                let mut t_enter = f64::NEG_INFINITY;
                let mut t_exit = f64::INFINITY;
                for axis in 0..3 {
                    if dir[axis].abs() < 1e-15 {
                        if origin[axis] < min[axis] || origin[axis] > max[axis] {
                            return None;
                        }
                        continue;
                    }
                    let t0 = (min[axis] - origin[axis]) / dir[axis];
                    let t1 = (max[axis] - origin[axis]) / dir[axis];
                    t_enter = t_enter.max(t0.min(t1));
                    t_exit = t_exit.min(t0.max(t1));
                }
                if t_enter > t_exit || t_exit < RAY_EPSILON {
                    return None;
                }
                Some(if t_enter > RAY_EPSILON { t_enter } else { t_exit })
            }
            Primitive::Sphere { center, radius } => {
                let oc = origin - center;
                let b = oc.dot(dir);
                let disc = b * b - (oc.norm_squared() - radius * radius);
                if disc < 0.0 {
                    return None;
                }
                let sq = disc.sqrt();
                for t in [-b - sq, -b + sq] {
                    if t > RAY_EPSILON {
                        return Some(t);
                    }
                }
                None
            }
            Primitive::Cylinder {
                center_x,
                center_y,
                radius,
                z_min,
                z_max,
            } => {
                let mut best: Option<f64> = None;
                let mut consider = |t: f64| {
                    if t > RAY_EPSILON && best.is_none_or(|b| t < b) {
                        best = Some(t);
                    }
                };
                // lateral surface
                let (ox, oy) = (origin.x - center_x, origin.y - center_y);
                let a = dir.x * dir.x + dir.y * dir.y;
                if a > 1e-15 {
                    let b = ox * dir.x + oy * dir.y;
                    let c = ox * ox + oy * oy - radius * radius;
                    let disc = b * b - a * c;
                    if disc >= 0.0 {
                        let sq = disc.sqrt();
                        for t in [(-b - sq) / a, (-b + sq) / a] {
                            let z = origin.z + t * dir.z;
                            if z >= *z_min && z <= *z_max {
                                consider(t);
                            }
                        }
                    }
                }
                // end caps
                if dir.z.abs() > 1e-15 {
                    for plane_z in [*z_min, *z_max] {
                        let t = (plane_z - origin.z) / dir.z;
                        let x = origin.x + t * dir.x - center_x;
                        let y = origin.y + t * dir.y - center_y;
                        if x * x + y * y <= radius * radius {
                            consider(t);
                        }
                    }
                }
                best
            }
        }
    }

    /// Unsigned distance from `p` to the primitive surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        match self {
            Primitive::GroundPlane { z } => (p.z - z).abs(),
            Primitive::Cuboid { min, max } => {
                let center = (min + max) * 0.5;
                let half = (max - min) * 0.5;
                let q = (p - center).abs() - half;
                let outside = q.sup(&Vector3::zeros()).norm();
                let inside = q.iter().fold(f64::NEG_INFINITY, |a, &v| a.max(v)).min(0.0);
                (outside + inside).abs()
            }
            Primitive::Sphere { center, radius } => ((p - center).norm() - radius).abs(),
            Primitive::Cylinder {
                center_x,
                center_y,
                radius,
                z_min,
                z_max,
            } => {
                let dr = ((p.x - center_x).powi(2) + (p.y - center_y).powi(2)).sqrt() - radius;
                let dz = (z_min - p.z).max(p.z - z_max);
                let inside = dr.max(dz).min(0.0);
                let outside = (dr.max(0.0).powi(2) + dz.max(0.0).powi(2)).sqrt();
                (inside + outside).abs()
            }
        }
    }
}

/// Collection of primitives the scanner sees.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scene {
    pub primitives: Vec<Primitive>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SceneFile {
    #[serde(default)]
    plane: Vec<PlaneDef>,
    #[serde(default, rename = "box")]
    boxes: Vec<BoxDef>,
    #[serde(default)]
    sphere: Vec<SphereDef>,
    #[serde(default)]
    cylinder: Vec<CylinderDef>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct PlaneDef {
    z: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct BoxDef {
    min: [f64; 3],
    max: [f64; 3],
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SphereDef {
    center: [f64; 3],
    radius: f64,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CylinderDef {
    center: [f64; 2],
    radius: f64,
    z_min: f64,
    z_max: f64,
}

impl Scene {
    pub fn new(primitives: Vec<Primitive>) -> Result<Self, Error> {
        for p in &primitives {
            p.validate()?;
        }
        Ok(Scene { primitives })
    }

    /// Parses a scene description in TOML form, e.g.:
    ///
    /// ```toml
    /// [[plane]]
    /// z = 0.0
    ///
    /// [[box]]
    /// min = [4.0, -1.0, 0.0]
    /// max = [6.0, 1.0, 1.2]
    ///
    /// [[sphere]]
    /// center = [-5.0, 3.0, 0.8]
    /// radius = 0.8
    ///
    /// [[cylinder]]
    /// center = [2.0, -4.0]
    /// radius = 0.3
    /// z_min = 0.0
    /// z_max = 2.5
    /// ```
    pub fn from_toml_str(text: &str) -> Result<Self, Error> {
        let file: SceneFile = toml::from_str(text)
            .map_err(|e| Error::Config(format!("scene config: {e}")))?;
        let mut primitives = Vec::new();
        for p in file.plane {
            primitives.push(Primitive::GroundPlane { z: p.z });
        }
        for b in file.boxes {
            primitives.push(Primitive::Cuboid {
                min: Vector3::from(b.min),
                max: Vector3::from(b.max),
            });
        }
        for s in file.sphere {
            primitives.push(Primitive::Sphere {
                center: Vector3::from(s.center),
                radius: s.radius,
            });
        }
        for c in file.cylinder {
            primitives.push(Primitive::Cylinder {
                center_x: c.center[0],
                center_y: c.center[1],
                radius: c.radius,
                z_min: c.z_min,
                z_max: c.z_max,
            });
        }
        Scene::new(primitives)
    }

    pub fn from_path(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    /// Ground plane plus a box and a sphere; the stock evaluation scene.
    pub fn default_scene() -> Self {
        Scene {
            primitives: vec![
                Primitive::GroundPlane { z: 0.0 },
                Primitive::Cuboid {
                    min: Vector3::new(4.0, -1.0, 0.0),
                    max: Vector3::new(6.0, 1.0, 1.2),
                },
                Primitive::Sphere {
                    center: Vector3::new(-5.0, 3.0, 0.8),
                    radius: 0.8,
                },
            ],
        }
    }

    /// Nearest positive intersection over all primitives.
    pub fn intersect(&self, origin: &Vector3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        self.primitives
            .iter()
            .filter_map(|p| p.intersect(origin, dir))
            .min_by(|a, b| a.partial_cmp(b).unwrap())
    }

    /// Unsigned distance from `p` to the nearest primitive surface.
    pub fn surface_distance(&self, p: &Vector3<f64>) -> f64 {
        self.primitives
            .iter()
            .map(|prim| prim.surface_distance(p))
            .fold(f64::INFINITY, f64::min)
    }
}

/// Ray pattern and noise model of one scanner configuration.
#[derive(Debug, Clone, PartialEq)]
pub struct ScannerSpec {
    pub origin: Vector3<f64>,
    /// Number of vertical channels.
    pub layers: u32,
    /// Vertical field of view in degrees, `(lowest, highest)` elevation.
    pub vertical_fov_deg: (f64, f64),
    pub horizontal_steps: u32,
    pub range_max: f64,
    /// Standard deviation of Gaussian range noise in meters (0 = noise-free).
    pub noise_sigma: f64,
}

impl ScannerSpec {
    /// 64-layer scanner with the vertical field of view of a typical
    /// top-mounted automotive unit.
    pub fn sparse_default(origin: Vector3<f64>) -> Self {
        ScannerSpec {
            origin,
            layers: 64,
            vertical_fov_deg: (-24.8, 2.0),
            horizontal_steps: 900,
            range_max: 100.0,
            noise_sigma: 0.0,
        }
    }

    /// 316-layer noise-free scanner used as ground truth.
    pub fn dense_reference(origin: Vector3<f64>) -> Self {
        ScannerSpec {
            layers: 316,
            ..Self::sparse_default(origin)
        }
    }

    pub fn validate(&self) -> Result<(), Error> {
        if self.layers < 1 {
            return Err(Error::Config("scanner needs at least one layer".into()));
        }
        if self.horizontal_steps < 1 {
            return Err(Error::Config("scanner needs at least one azimuth step".into()));
        }
        if !self.range_max.is_finite() || self.range_max <= 0.0 {
            return Err(Error::Config(format!(
                "range_max must be positive, got {}",
                self.range_max
            )));
        }
        if !self.noise_sigma.is_finite() || self.noise_sigma < 0.0 {
            return Err(Error::Config(format!(
                "noise_sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        if !self.origin.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("scanner origin must be finite".into()));
        }
        Ok(())
    }

    fn elevation_deg(&self, layer: u32) -> f64 {
        let (lo, hi) = self.vertical_fov_deg;
        if self.layers == 1 {
            lo
        } else {
            lo + (hi - lo) * layer as f64 / (self.layers - 1) as f64
        }
    }
}

fn layer_rng(seed: u64, layer: u32) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(layer as u64 + 1);
    rng
}

/// Scans the scene: one ray per (layer, azimuth), nearest hit within range,
/// Gaussian range noise along the ray. Deterministic for a fixed seed; points
/// come out ordered by (layer, azimuth).
pub fn scan(scene: &Scene, spec: &ScannerSpec, seed: u64) -> Result<PointCloud, Error> {
    spec.validate()?;
    let noise = if spec.noise_sigma > 0.0 {
        Some(Normal::new(0.0, spec.noise_sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let per_layer: Vec<Vec<Vector3<f64>>> = (0..spec.layers)
        .into_par_iter()
        .map(|layer| {
            let mut rng = layer_rng(seed, layer);
            let elevation = spec.elevation_deg(layer).to_radians();
            let (sin_e, cos_e) = elevation.sin_cos();
            let mut points = Vec::new();
            for step in 0..spec.horizontal_steps {
                let azimuth = std::f64::consts::TAU * step as f64 / spec.horizontal_steps as f64;
                let (sin_a, cos_a) = azimuth.sin_cos();
                let dir = Vector3::new(cos_e * cos_a, cos_e * sin_a, sin_e);
                if let Some(t) = scene.intersect(&spec.origin, &dir) {
                    if t <= spec.range_max {
                        let range = match &noise {
                            Some(dist) => t + dist.sample(&mut rng),
                            None => t,
                        };
                        points.push(spec.origin + dir * range);
                    }
                }
            }
            points
        })
        .collect();
    Ok(PointCloud::new(per_layer.concat(), spec.origin))
}

/// High-resolution noise-free scan from the same viewpoint, used as the
/// ground-truth set. Rejects specs with nonzero noise.
pub fn ground_truth_cloud(scene: &Scene, spec: &ScannerSpec) -> Result<PointCloud, Error> {
    if spec.noise_sigma != 0.0 {
        return Err(Error::Config(format!(
            "ground-truth scan must be noise-free, got sigma {}",
            spec.noise_sigma
        )));
    }
    scan(scene, spec, 0)
}
