//! Marching cubes extraction of the TSDF zero-crossing.
//!
//! Cells are cubes of eight neighboring grid vertices; any cell with an
//! undefined corner produces no geometry, so the mesh never extends past the
//! computed field. Vertices on shared cell edges are welded through a
//! canonical lattice-edge key, which makes the output connected and lets
//! watertightness be checked by edge counting.

use std::collections::HashMap;
use std::hash::BuildHasherDefault;

use nalgebra::Vector3;
use rayon::prelude::*;

use crate::grid::{GridIndex, GridIndexHasher};
use crate::tsdf::TsdfField;

mod tables;
use tables::{CORNER_OFFSETS, EDGE_CORNERS, TRI_TABLE};

/// Indexed triangle mesh in world coordinates (meters).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vector3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    pub normals: Option<Vec<Vector3<f64>>>,
}

impl TriangleMesh {
    pub fn is_empty(&self) -> bool {
        self.triangles.is_empty()
    }
}

/// Lattice edge identified by its lower vertex and axis (0=x, 1=y, 2=z).
type EdgeKey = (GridIndex, u8);

/// Canonical lattice edge of a cube edge: lower corner plus axis. Adjacent
/// cells map their shared edges to the same key.
fn canonical_edge(base: &GridIndex, edge: usize) -> (GridIndex, u8) {
    let (a, b) = EDGE_CORNERS[edge];
    let oa = CORNER_OFFSETS[a];
    let ob = CORNER_OFFSETS[b];
    let start = base.offset(oa.0.min(ob.0), oa.1.min(ob.1), oa.2.min(ob.2));
    let axis = if oa.0 != ob.0 {
        0
    } else if oa.1 != ob.1 {
        1
    } else {
        2
    };
    (start, axis)
}

struct CellGeometry {
    triangles: Vec<[(EdgeKey, Vector3<f64>); 3]>,
}

/// Extracts the zero-crossing triangle mesh from a TSDF sampled on a grid of
/// edge `alpha`.
///
/// A corner is inside the surface when its value is strictly negative (an
/// exact zero counts as positive). Triangles are wound so the geometric
/// normal points toward the positive side of the field. Cell evaluations run
/// in parallel; the weld pass merges them in lattice order, so the output is
/// deterministic for a given field.
pub fn marching_cubes(field: &TsdfField, alpha: f64) -> TriangleMesh {
    let mut bases: Vec<GridIndex> = field.iter().map(|(idx, _)| *idx).collect();
    bases.sort_unstable();

    let cells: Vec<CellGeometry> = bases
        .par_iter()
        .filter_map(|base| triangulate_cell(field, alpha, base))
        .collect();

    let mut mesh = TriangleMesh::default();
    let mut index_of: HashMap<EdgeKey, u32, BuildHasherDefault<GridIndexHasher>> =
        HashMap::default();
    for cell in cells {
        for tri in cell.triangles {
            let mut indices = [0u32; 3];
            for (slot, (key, position)) in indices.iter_mut().zip(tri.iter()) {
                *slot = *index_of.entry(*key).or_insert_with(|| {
                    mesh.vertices.push(*position);
                    (mesh.vertices.len() - 1) as u32
                });
            }
            mesh.triangles.push(indices);
        }
    }
    mesh
}

fn triangulate_cell(field: &TsdfField, alpha: f64, base: &GridIndex) -> Option<CellGeometry> {
    let mut corners = [0.0f64; 8];
    for (value, &(dx, dy, dz)) in corners.iter_mut().zip(CORNER_OFFSETS.iter()) {
        *value = field.value(&base.offset(dx, dy, dz))?;
    }
    let mut case = 0usize;
    for (i, &value) in corners.iter().enumerate() {
        if value < 0.0 {
            case |= 1 << i;
        }
    }
    if case == 0 || case == 255 {
        return None;
    }

    let row = &TRI_TABLE[case];
    let mut triangles = Vec::new();
    let mut at = 0;
    while row[at] >= 0 {
        let corner_points = [
            edge_vertex(field, alpha, base, row[at] as usize),
            edge_vertex(field, alpha, base, row[at + 1] as usize),
            edge_vertex(field, alpha, base, row[at + 2] as usize),
        ];
        // table winding faces the negative side; swap to agree with the
        // field gradient (positive side out)
        triangles.push([corner_points[0], corner_points[2], corner_points[1]]);
        at += 3;
    }
    Some(CellGeometry { triangles })
}

/// Zero-crossing position on a cube edge, keyed by its canonical lattice edge
/// so adjacent cells produce bit-identical vertices.
fn edge_vertex(
    field: &TsdfField,
    alpha: f64,
    base: &GridIndex,
    edge: usize,
) -> (EdgeKey, Vector3<f64>) {
    let (start, axis) = canonical_edge(base, edge);
    let mut end = start;
    end.0[axis as usize] += 1;

    let d_start = field.value(&start).expect("cell corner is defined");
    let d_end = field.value(&end).expect("cell corner is defined");
    let t = d_start / (d_start - d_end);
    debug_assert!(
        (0.0..=1.0).contains(&t),
        "interpolation parameter {t} out of range on edge {edge}"
    );

    let mut lattice = start.as_vector();
    lattice[axis as usize] += t;
    let position = field.origin() + lattice * alpha;
    ((start, axis), position)
}
