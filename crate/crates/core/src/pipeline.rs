//! End-to-end reconstruction driver and run manifests.
//!
//! `reconstruct` takes a cloud through grid construction, distance field
//! evaluation (adaptive or IMLS) and mesh extraction, timing each stage. A
//! `RunManifest` records the resolved configuration, input/output hashes and
//! timings, so a run can be audited and reproduced.

use std::collections::BTreeMap;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::Error;
use crate::grid::StatGrid;
use crate::imls::{estimate_normals, imls_tsdf, ImlsConfig};
use crate::io::PointCloud;
use crate::mesher::{marching_cubes, TriangleMesh};
use crate::tsdf::{compute_tsdf, ReconstructionConfig, TsdfField};

/// Which distance-field definition drives the reconstruction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MethodConfig {
    Adaptive,
    Imls(ImlsConfig),
}

/// Output of one reconstruction run.
#[derive(Debug)]
pub struct ReconstructionResult {
    pub mesh: TriangleMesh,
    pub field: TsdfField,
    pub occupied_voxels: usize,
    pub input_points: usize,
    pub timings_ms: BTreeMap<String, u128>,
}

/// Cloud in, mesh out: grid statistics, distance field, marching cubes.
pub fn reconstruct(
    cloud: &PointCloud,
    cfg: &ReconstructionConfig,
    method: &MethodConfig,
) -> Result<ReconstructionResult, Error> {
    cfg.validate()?;
    let mut timings = BTreeMap::new();

    let start = Instant::now();
    let mut grid = StatGrid::new(cfg.alpha, cloud.sensor_pose)?;
    grid.insert_points(&cloud.points)?;
    timings.insert("grid_ms".to_string(), start.elapsed().as_millis());

    let start = Instant::now();
    let field = match method {
        MethodConfig::Adaptive => compute_tsdf(&grid, cfg)?,
        MethodConfig::Imls(imls_cfg) => {
            let normals =
                estimate_normals(&cloud.points, imls_cfg.k_neighbors, &cloud.sensor_pose);
            imls_tsdf(&cloud.points, &normals, &grid, imls_cfg, cfg.truncation)?
        }
    };
    timings.insert("tsdf_ms".to_string(), start.elapsed().as_millis());

    let start = Instant::now();
    let mesh = marching_cubes(&field, cfg.alpha);
    timings.insert("mesh_ms".to_string(), start.elapsed().as_millis());

    Ok(ReconstructionResult {
        mesh,
        field,
        occupied_voxels: grid.occupied_count(),
        input_points: cloud.points.len(),
        timings_ms: timings,
    })
}

/// A file a run read or wrote, with its content hash.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ToolInfo {
    pub name: String,
    pub version: String,
}

/// Audit record emitted once per CLI run. Re-running with the inputs and
/// configuration recorded here reproduces the output artifacts bit for bit
/// (timings, of course, vary).
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: ToolInfo,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub timings_ms: BTreeMap<String, u128>,
}

impl RunManifest {
    pub fn new(
        tool_name: &str,
        tool_version: &str,
        command: &str,
        config: impl Serialize,
    ) -> Result<Self, Error> {
        Ok(RunManifest {
            tool: ToolInfo {
                name: tool_name.to_string(),
                version: tool_version.to_string(),
            },
            command: command.to_string(),
            config: serde_json::to_value(config)
                .map_err(|e| Error::Config(format!("config not serializable: {e}")))?,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timings_ms: BTreeMap::new(),
        })
    }

    pub fn record_input(&mut self, path: &Path) -> Result<(), Error> {
        self.inputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn record_output(&mut self, path: &Path) -> Result<(), Error> {
        self.outputs.push(FileRecord {
            path: path.display().to_string(),
            sha256: sha256_file(path)?,
        });
        Ok(())
    }

    pub fn write_json(&self, path: &Path) -> Result<(), Error> {
        let mut bytes = serde_json::to_vec_pretty(self)
            .map_err(|e| Error::Config(format!("manifest serialization: {e}")))?;
        bytes.push(b'\n');
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}

/// Hex SHA-256 of a file's contents.
pub fn sha256_file(path: &Path) -> Result<String, Error> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    hasher.update(&bytes);
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
