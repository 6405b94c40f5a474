//! Sparse voxel grid of incremental 3D Gaussian statistics.
//!
//! Points are binned into cubic voxels of edge `cell_size`; each occupied voxel
//! keeps a running count, mean and covariance of the points inside it. Vertex
//! neighborhoods pool those statistics over the `(2k)^3` voxels surrounding a
//! grid vertex, which is what the plane estimation consumes.
//!
//! Covariances use the population convention (divide by `n`), so merging two
//! voxel statistics is exact for the concatenated point sets.

use std::collections::{HashMap, HashSet};
use std::hash::{BuildHasherDefault, Hasher};

use nalgebra::{Matrix3, Vector3};

use crate::error::Error;

/// Integer lattice coordinates. The same lattice indexes voxels (cube cells)
/// and grid vertices (cube corners): vertex `(i,j,k)` sits at
/// `origin + cell_size * (i,j,k)` and voxel `(i,j,k)` spans the unit cube
/// with that vertex as its minimum corner.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridIndex(pub [i32; 3]);

impl GridIndex {
    pub fn new(x: i32, y: i32, z: i32) -> Self {
        GridIndex([x, y, z])
    }

    #[inline]
    pub fn offset(&self, dx: i32, dy: i32, dz: i32) -> Self {
        GridIndex([self.0[0] + dx, self.0[1] + dy, self.0[2] + dz])
    }

    #[inline]
    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.0[0] as f64, self.0[1] as f64, self.0[2] as f64)
    }
}

/// Multiply-xor hasher for `GridIndex` keys. Neighborhood scans hash millions
/// of indices; the keys are small integers that need no DoS hardening, so the
/// default SipHash is replaced by something near-free.
#[derive(Default, Clone)]
pub struct GridIndexHasher(u64);

impl Hasher for GridIndexHasher {
    #[inline]
    fn finish(&self) -> u64 {
        let mut h = self.0;
        h ^= h >> 33;
        h = h.wrapping_mul(0xff51_afd7_ed55_8ccd);
        h ^= h >> 33;
        h
    }

    #[inline]
    fn write(&mut self, bytes: &[u8]) {
        for &b in bytes {
            self.0 = (self.0 ^ b as u64).wrapping_mul(0x0000_0100_0000_01b3);
        }
    }

    #[inline]
    fn write_i32(&mut self, i: i32) {
        self.0 = (self.0 ^ i as u32 as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    }
}

pub type GridHashMap<V> = HashMap<GridIndex, V, BuildHasherDefault<GridIndexHasher>>;
pub type GridHashSet = HashSet<GridIndex, BuildHasherDefault<GridIndexHasher>>;

/// Running count, mean and population covariance of the points in one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoxelStats {
    count: u64,
    mean: Vector3<f64>,
    /// Sum of squared deviations from the mean: `count * covariance`.
    scatter: Matrix3<f64>,
}

impl Default for VoxelStats {
    fn default() -> Self {
        VoxelStats {
            count: 0,
            mean: Vector3::zeros(),
            scatter: Matrix3::zeros(),
        }
    }
}

impl VoxelStats {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds statistics equivalent to inserting every point of `points`.
    pub fn from_points<'a>(points: impl IntoIterator<Item = &'a Vector3<f64>>) -> Self {
        let mut stats = Self::new();
        for p in points {
            stats.insert(p);
        }
        stats
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn mean(&self) -> Vector3<f64> {
        self.mean
    }

    /// Population covariance (zero matrix for empty or single-point voxels).
    pub fn cov(&self) -> Matrix3<f64> {
        if self.count == 0 {
            Matrix3::zeros()
        } else {
            self.scatter / self.count as f64
        }
    }

    /// Streaming (Welford) update with one point.
    pub fn insert(&mut self, p: &Vector3<f64>) {
        self.count += 1;
        let n = self.count as f64;
        let delta = p - self.mean;
        self.mean += delta / n;
        let delta2 = p - self.mean;
        // delta2 is parallel to delta, so the symmetrized outer product only
        // irons out last-ulp asymmetry between the two evaluations.
        let outer = delta * delta2.transpose();
        self.scatter += (outer + outer.transpose()) * 0.5;
    }

    /// Pairwise (Chan) combination; exact for the concatenated point sets.
    pub fn merge(&self, other: &VoxelStats) -> VoxelStats {
        let mut out = *self;
        out.merge_in_place(other);
        out
    }

    pub fn merge_in_place(&mut self, other: &VoxelStats) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let na = self.count as f64;
        let nb = other.count as f64;
        let n = na + nb;
        let delta = other.mean - self.mean;
        self.mean += delta * (nb / n);
        self.scatter += other.scatter + (delta * delta.transpose()) * (na * nb / n);
        self.count += other.count;
    }
}

/// Pooled statistics of the `(2k)^3` voxels surrounding a grid vertex.
#[derive(Debug, Clone, Copy)]
pub struct NeighborhoodStats {
    /// Neighborhood level `k >= 1`.
    pub level: u32,
    pub count: u64,
    pub mean: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

impl NeighborhoodStats {
    fn from_stats(level: u32, stats: &VoxelStats) -> Self {
        NeighborhoodStats {
            level,
            count: stats.count(),
            mean: stats.mean(),
            cov: stats.cov(),
        }
    }
}

/// Sparse voxel grid with a known sensor pose.
///
/// The origin is pinned to the sensor pose, which puts the sensor exactly on
/// the lattice vertex `(0,0,0)`. Construction is single-writer streaming
/// insertion; afterwards the grid is read-only and queries may run from any
/// number of threads.
#[derive(Debug, Clone)]
pub struct StatGrid {
    cell_size: f64,
    origin: Vector3<f64>,
    sensor_pose: Vector3<f64>,
    cells: GridHashMap<VoxelStats>,
    total_points: u64,
}

impl StatGrid {
    pub fn new(cell_size: f64, sensor_pose: Vector3<f64>) -> Result<Self, Error> {
        if !cell_size.is_finite() || cell_size <= 0.0 {
            return Err(Error::Config(format!(
                "cell size must be positive and finite, got {cell_size}"
            )));
        }
        if !sensor_pose.iter().all(|c| c.is_finite()) {
            return Err(Error::Config("sensor pose must be finite".into()));
        }
        Ok(StatGrid {
            cell_size,
            origin: sensor_pose,
            sensor_pose,
            cells: GridHashMap::default(),
            total_points: 0,
        })
    }

    pub fn cell_size(&self) -> f64 {
        self.cell_size
    }

    pub fn origin(&self) -> Vector3<f64> {
        self.origin
    }

    pub fn sensor_pose(&self) -> Vector3<f64> {
        self.sensor_pose
    }

    /// Index of the voxel containing `p`.
    #[inline]
    pub fn voxel_of(&self, p: &Vector3<f64>) -> GridIndex {
        let rel = (p - self.origin) / self.cell_size;
        GridIndex([
            rel.x.floor() as i32,
            rel.y.floor() as i32,
            rel.z.floor() as i32,
        ])
    }

    /// World position of grid vertex `idx`.
    #[inline]
    pub fn vertex_position(&self, idx: &GridIndex) -> Vector3<f64> {
        self.origin + idx.as_vector() * self.cell_size
    }

    /// Inserts one point into its voxel's running statistics.
    pub fn insert_point(&mut self, p: &Vector3<f64>) -> Result<(), Error> {
        if !p.iter().all(|c| c.is_finite()) {
            return Err(Error::InvalidInput(format!(
                "point has non-finite coordinates: ({}, {}, {})",
                p.x, p.y, p.z
            )));
        }
        let idx = self.voxel_of(p);
        self.cells.entry(idx).or_default().insert(p);
        self.total_points += 1;
        Ok(())
    }

    pub fn insert_points(&mut self, points: &[Vector3<f64>]) -> Result<(), Error> {
        for p in points {
            self.insert_point(p)?;
        }
        Ok(())
    }

    pub fn voxel(&self, idx: &GridIndex) -> Option<&VoxelStats> {
        self.cells.get(idx)
    }

    pub fn occupied(&self) -> impl Iterator<Item = (&GridIndex, &VoxelStats)> {
        self.cells.iter()
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.len()
    }

    pub fn total_points(&self) -> u64 {
        self.total_points
    }

    /// Pooled statistics of the level-`k` neighborhood of vertex `vertex`:
    /// the `(2k)^3` voxels with indices in `[v - k, v + k - 1]` per axis.
    /// An empty neighborhood is a valid result with count 0.
    pub fn neighborhood_stats(&self, vertex: &GridIndex, level: u32) -> NeighborhoodStats {
        assert!(level >= 1, "neighborhood level must be >= 1");
        let k = level as i32;
        let mut acc = VoxelStats::new();
        for dx in -k..k {
            for dy in -k..k {
                for dz in -k..k {
                    if let Some(stats) = self.cells.get(&vertex.offset(dx, dy, dz)) {
                        acc.merge_in_place(stats);
                    }
                }
            }
        }
        NeighborhoodStats::from_stats(level, &acc)
    }

    /// Incremental neighborhood scan that grows level by level, touching each
    /// voxel once. Equivalent to calling [`neighborhood_stats`] per level.
    ///
    /// [`neighborhood_stats`]: StatGrid::neighborhood_stats
    pub fn neighborhood_scan<'a>(&'a self, vertex: &GridIndex) -> NeighborhoodScan<'a> {
        NeighborhoodScan {
            grid: self,
            vertex: *vertex,
            acc: VoxelStats::new(),
            level: 0,
        }
    }

    /// All grid vertices whose level-`reach` neighborhood contains at least
    /// one occupied voxel, sorted lexicographically.
    pub fn candidate_vertices(&self, reach: u32) -> Vec<GridIndex> {
        let r = reach as i32;
        let mut set = GridHashSet::default();
        for idx in self.cells.keys() {
            // Voxel a lies in the level-k neighborhood of vertex v iff
            // v - k <= a <= v + k - 1, i.e. a - k + 1 <= v <= a + k.
            for dx in (1 - r)..=r {
                for dy in (1 - r)..=r {
                    for dz in (1 - r)..=r {
                        set.insert(idx.offset(dx, dy, dz));
                    }
                }
            }
        }
        let mut out: Vec<GridIndex> = set.into_iter().collect();
        out.sort_unstable();
        out
    }
}

/// See [`StatGrid::neighborhood_scan`].
pub struct NeighborhoodScan<'a> {
    grid: &'a StatGrid,
    vertex: GridIndex,
    acc: VoxelStats,
    level: u32,
}

impl NeighborhoodScan<'_> {
    /// Grows the neighborhood to the next level and returns its pooled stats.
    pub fn advance(&mut self) -> NeighborhoodStats {
        self.level += 1;
        let k = self.level as i32;
        let inner = k - 1;
        for dx in -k..k {
            for dy in -k..k {
                for dz in -k..k {
                    // Skip voxels already merged at the previous level.
                    if dx >= -inner && dx < inner && dy >= -inner && dy < inner && dz >= -inner && dz < inner {
                        continue;
                    }
                    if let Some(stats) = self.grid.cells.get(&self.vertex.offset(dx, dy, dz)) {
                        self.acc.merge_in_place(stats);
                    }
                }
            }
        }
        NeighborhoodStats::from_stats(self.level, &self.acc)
    }
}
