//! Python bindings: the statistics grid, the reconstruction entry point and
//! the evaluation metrics, operating on plain lists of coordinate tuples.

use nalgebra::Vector3;
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use voxsurf::error::Error;
use voxsurf::grid::{GridIndex, StatGrid};
use voxsurf::imls::ImlsConfig;
use voxsurf::io::{write_mesh, PointCloud};
use voxsurf::metrics;
use voxsurf::pipeline::{reconstruct as run_reconstruction, MethodConfig};
use voxsurf::synth::{scan, Scene, ScannerSpec};
use voxsurf::tsdf::{ConfidenceModel, ReconstructionConfig, ReconstructionMode};

fn to_py_err(err: Error) -> PyErr {
    match err {
        Error::Io { .. } => PyIOError::new_err(err.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_vectors(points: Vec<(f64, f64, f64)>) -> Vec<Vector3<f64>> {
    points
        .into_iter()
        .map(|(x, y, z)| Vector3::new(x, y, z))
        .collect()
}

fn to_tuples(points: &[Vector3<f64>]) -> Vec<(f64, f64, f64)> {
    points.iter().map(|p| (p.x, p.y, p.z)).collect()
}

/// `(count, mean, row-major covariance)` of one pooled neighborhood.
type NeighborhoodSummary = (u64, (f64, f64, f64), Vec<Vec<f64>>);

/// Triangle mesh produced by the reconstruction.
#[pyclass(name = "TriangleMesh")]
struct PyTriangleMesh {
    inner: voxsurf::mesher::TriangleMesh,
}

#[pymethods]
impl PyTriangleMesh {
    #[getter]
    fn vertices(&self) -> Vec<(f64, f64, f64)> {
        to_tuples(&self.inner.vertices)
    }

    #[getter]
    fn triangles(&self) -> Vec<(u32, u32, u32)> {
        self.inner
            .triangles
            .iter()
            .map(|t| (t[0], t[1], t[2]))
            .collect()
    }

    fn __len__(&self) -> usize {
        self.inner.triangles.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "TriangleMesh({} vertices, {} triangles)",
            self.inner.vertices.len(),
            self.inner.triangles.len()
        )
    }

    /// Writes the mesh as binary little-endian PLY.
    fn save_ply(&self, path: &str) -> PyResult<()> {
        write_mesh(&self.inner, std::path::Path::new(path)).map_err(to_py_err)
    }
}

/// Sparse voxel grid of running point statistics.
#[pyclass(name = "StatGrid")]
struct PyStatGrid {
    inner: StatGrid,
}

#[pymethods]
impl PyStatGrid {
    #[new]
    fn new(cell_size: f64, sensor: (f64, f64, f64)) -> PyResult<Self> {
        let grid = StatGrid::new(cell_size, Vector3::new(sensor.0, sensor.1, sensor.2))
            .map_err(to_py_err)?;
        Ok(PyStatGrid { inner: grid })
    }

    /// Inserts points into the running statistics.
    fn insert(&mut self, points: Vec<(f64, f64, f64)>) -> PyResult<()> {
        self.inner
            .insert_points(&to_vectors(points))
            .map_err(to_py_err)
    }

    fn point_count(&self) -> u64 {
        self.inner.total_points()
    }

    fn voxel_count(&self) -> usize {
        self.inner.occupied_count()
    }

    /// Pooled `(count, mean, covariance)` of the level-`k` neighborhood of a
    /// grid vertex; covariance comes back as a row-major 3x3 nested list.
    fn neighborhood(
        &self,
        vertex: (i32, i32, i32),
        level: u32,
    ) -> PyResult<NeighborhoodSummary> {
        if level < 1 {
            return Err(PyValueError::new_err("level must be >= 1"));
        }
        let stats = self
            .inner
            .neighborhood_stats(&GridIndex::new(vertex.0, vertex.1, vertex.2), level);
        let cov = (0..3)
            .map(|r| (0..3).map(|c| stats.cov[(r, c)]).collect())
            .collect();
        Ok((
            stats.count,
            (stats.mean.x, stats.mean.y, stats.mean.z),
            cov,
        ))
    }

    fn __repr__(&self) -> String {
        format!(
            "StatGrid(cell_size={}, voxels={}, points={})",
            self.inner.cell_size(),
            self.inner.occupied_count(),
            self.inner.total_points()
        )
    }
}

/// Reconstructs a triangle mesh from a point cloud.
#[pyfunction]
#[pyo3(signature = (
    points,
    sensor,
    alpha = 0.2,
    tau = 0.2,
    n_min = 10,
    k_max = 5,
    mode = "an-gc",
    fixed_k = 1,
    truncation = None,
    confidence = "peak",
    method = "adaptive",
))]
#[allow(clippy::too_many_arguments)]
fn reconstruct(
    points: Vec<(f64, f64, f64)>,
    sensor: (f64, f64, f64),
    alpha: f64,
    tau: f64,
    n_min: u32,
    k_max: u32,
    mode: &str,
    fixed_k: u32,
    truncation: Option<f64>,
    confidence: &str,
    method: &str,
) -> PyResult<PyTriangleMesh> {
    let mode: ReconstructionMode = mode.parse().map_err(to_py_err)?;
    let confidence: ConfidenceModel = confidence.parse().map_err(to_py_err)?;
    let cfg = ReconstructionConfig {
        alpha,
        tau,
        n_min,
        k_max,
        mode,
        fixed_k,
        truncation: truncation.unwrap_or_else(|| ReconstructionConfig::default_truncation(alpha, k_max)),
        confidence,
    };
    let method = match method {
        "adaptive" => MethodConfig::Adaptive,
        "imls" => MethodConfig::Imls(ImlsConfig::matched_to(alpha, k_max, n_min)),
        other => {
            return Err(PyValueError::new_err(format!(
                "unknown method '{other}' (expected adaptive or imls)"
            )))
        }
    };
    let cloud = PointCloud::new(
        to_vectors(points),
        Vector3::new(sensor.0, sensor.1, sensor.2),
    );
    let result = run_reconstruction(&cloud, &cfg, &method).map_err(to_py_err)?;
    Ok(PyTriangleMesh { inner: result.mesh })
}

/// Set-to-set evaluation of predicted points against ground truth.
#[pyfunction]
#[pyo3(signature = (predicted, ground_truth, sensor = (0.0, 0.0, 0.0), bin_width = 1.0))]
fn evaluate<'py>(
    py: Python<'py>,
    predicted: Vec<(f64, f64, f64)>,
    ground_truth: Vec<(f64, f64, f64)>,
    sensor: (f64, f64, f64),
    bin_width: f64,
) -> PyResult<Bound<'py, PyDict>> {
    let report = metrics::evaluate(
        &to_vectors(predicted),
        &to_vectors(ground_truth),
        &Vector3::new(sensor.0, sensor.1, sensor.2),
        bin_width,
        &metrics::default_delta_thresholds(),
    )
    .map_err(to_py_err)?;
    let out = PyDict::new(py);
    out.set_item("ae_p_to_gt", report.ae_p_to_gt)?;
    out.set_item("ae_gt_to_p", report.ae_gt_to_p)?;
    out.set_item("ae_sym", report.ae_sym)?;
    out.set_item("hd_p_to_gt", report.hd_p_to_gt)?;
    out.set_item("hd_gt_to_p", report.hd_gt_to_p)?;
    out.set_item("hd_sym", report.hd_sym)?;
    out.set_item("delta_curve", report.delta_curve)?;
    out.set_item("range_profile", report.range_profile)?;
    Ok(out)
}

/// Casts a synthetic lidar scan of a scene described in TOML (or the
/// built-in plane+box+sphere scene when `scene_toml` is None).
#[pyfunction]
#[pyo3(signature = (
    scene_toml = None,
    seed = 0,
    layers = 64,
    steps = 900,
    vfov = (-24.8, 2.0),
    range_max = 100.0,
    noise_sigma = 0.0,
    sensor = (0.0, 0.0, 1.8),
))]
#[allow(clippy::too_many_arguments)]
fn scan_scene(
    scene_toml: Option<&str>,
    seed: u64,
    layers: u32,
    steps: u32,
    vfov: (f64, f64),
    range_max: f64,
    noise_sigma: f64,
    sensor: (f64, f64, f64),
) -> PyResult<Vec<(f64, f64, f64)>> {
    let scene = match scene_toml {
        Some(text) => Scene::from_toml_str(text).map_err(to_py_err)?,
        None => Scene::default_scene(),
    };
    let spec = ScannerSpec {
        origin: Vector3::new(sensor.0, sensor.1, sensor.2),
        layers,
        vertical_fov_deg: vfov,
        horizontal_steps: steps,
        range_max,
        noise_sigma,
    };
    let cloud = scan(&scene, &spec, seed).map_err(to_py_err)?;
    Ok(to_tuples(&cloud.points))
}

#[pymodule]
fn voxsurf_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyStatGrid>()?;
    m.add_class::<PyTriangleMesh>()?;
    m.add_function(wrap_pyfunction!(reconstruct, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(scan_scene, m)?)?;
    Ok(())
}
