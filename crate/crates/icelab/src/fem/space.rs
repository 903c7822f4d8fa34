//! Scalar finite-element spaces (P1 and P2) on an extruded triangle mesh.
//!
//! Degrees of freedom live on vertices (P1) or on vertices plus edge
//! midpoints (P2). On periodic meshes the right lateral column of vertices is
//! identified with the left column before numbering, so seam edges share a
//! single midpoint degree of freedom and periodicity holds by construction
//! rather than through explicit constraints.

use std::collections::HashMap;

use crate::error::{IceLabError, Result};
use crate::geometry::mesh::{BoundaryTag, ExtrudedMesh};

/// Polynomial degree of a scalar space on triangles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementKind {
    P1,
    P2,
}

impl ElementKind {
    /// Number of local basis functions per triangle.
    pub fn dofs_per_element(self) -> usize {
        match self {
            ElementKind::P1 => 3,
            ElementKind::P2 => 6,
        }
    }
}

/// A scalar space over one extruded mesh: global numbering, element
/// connectivity, and tagged boundary degree-of-freedom sets.
#[derive(Debug, Clone)]
pub struct ScalarSpace {
    pub kind: ElementKind,
    pub n_dofs: usize,
    /// Per element: global dof ids in local order. P1 uses the first three
    /// slots (vertices); P2 appends the midpoints of edges (v0,v1), (v1,v2),
    /// (v2,v0).
    pub elem_dofs: Vec<[usize; 6]>,
    /// Representative physical coordinates per dof (first encounter wins for
    /// dofs merged across the periodic seam).
    pub dof_coords: Vec<(f64, f64)>,
    /// Dofs on the bed (vertices and, for P2, bed-edge midpoints).
    pub bed_dofs: Vec<usize>,
    /// Dofs on the free surface.
    pub surface_dofs: Vec<usize>,
    /// Dofs on the lateral boundaries (empty for periodic meshes).
    pub lateral_dofs: Vec<usize>,
    /// Surface vertex dof per column, ascending x, length `n_x + 1`. On
    /// periodic meshes the last entry repeats the first dof id.
    pub surface_vertex_dofs: Vec<usize>,
    /// Vertex dof per (column, layer) in mesh vertex order (length equals the
    /// mesh vertex count); merged vertices map to the same dof.
    pub vertex_dof: Vec<usize>,
}

fn canonical_vertex(mesh: &ExtrudedMesh, v: usize) -> usize {
    if mesh.periodic && mesh.column_of[v] == mesh.n_x {
        mesh.vertex_id(0, mesh.layer_of[v])
    } else {
        v
    }
}

/// Build a scalar space of the given kind over the mesh.
pub fn build_scalar_space(mesh: &ExtrudedMesh, kind: ElementKind) -> Result<ScalarSpace> {
    let n_vertices = mesh.vertices.len();

    // Number canonical vertices in vertex order.
    let mut vertex_dof = vec![usize::MAX; n_vertices];
    let mut n_dofs = 0usize;
    let mut dof_coords: Vec<(f64, f64)> = Vec::new();
    for v in 0..n_vertices {
        let c = canonical_vertex(mesh, v);
        if c == v {
            vertex_dof[v] = n_dofs;
            dof_coords.push(mesh.vertices[v]);
            n_dofs += 1;
        }
    }
    for v in 0..n_vertices {
        let c = canonical_vertex(mesh, v);
        if c != v {
            vertex_dof[v] = vertex_dof[c];
        }
    }

    // Edge midpoints for P2, keyed by the canonical vertex pair so the
    // periodic seam merges automatically.
    let mut edge_dof: HashMap<(usize, usize), usize> = HashMap::new();
    let mut elem_dofs: Vec<[usize; 6]> = Vec::with_capacity(mesh.triangles.len());
    for tri in &mesh.triangles {
        let mut local = [usize::MAX; 6];
        for k in 0..3 {
            local[k] = vertex_dof[tri[k]];
        }
        if kind == ElementKind::P2 {
            for (slot, (a, b)) in [(3, (0, 1)), (4, (1, 2)), (5, (2, 0))] {
                let ca = canonical_vertex(mesh, tri[a]);
                let cb = canonical_vertex(mesh, tri[b]);
                let key = (ca.min(cb), ca.max(cb));
                let dof = *edge_dof.entry(key).or_insert_with(|| {
                    let id = n_dofs;
                    n_dofs += 1;
                    let (xa, ya) = mesh.vertices[tri[a]];
                    let (xb, yb) = mesh.vertices[tri[b]];
                    dof_coords.push((0.5 * (xa + xb), 0.5 * (ya + yb)));
                    id
                });
                local[slot] = dof;
            }
        }
        elem_dofs.push(local);
    }

    // Tagged boundary dof sets: vertices from the boundary edges plus, for
    // P2, the midpoints of those edges.
    let mut bed_dofs = Vec::new();
    let mut surface_dofs = Vec::new();
    let mut lateral_dofs = Vec::new();
    let push_unique = |set: &mut Vec<usize>, dof: usize| {
        if !set.contains(&dof) {
            set.push(dof);
        }
    };
    for edge in &mesh.boundary_edges {
        let target = match edge.tag {
            BoundaryTag::Bed => &mut bed_dofs,
            BoundaryTag::Surface => &mut surface_dofs,
            BoundaryTag::LateralLeft | BoundaryTag::LateralRight => {
                if mesh.periodic {
                    continue;
                }
                &mut lateral_dofs
            }
        };
        push_unique(target, vertex_dof[edge.a]);
        push_unique(target, vertex_dof[edge.b]);
        if kind == ElementKind::P2 {
            let ca = canonical_vertex(mesh, edge.a);
            let cb = canonical_vertex(mesh, edge.b);
            let key = (ca.min(cb), ca.max(cb));
            let dof = *edge_dof.get(&key).ok_or_else(|| {
                IceLabError::Geometry(format!(
                    "boundary edge ({}, {}) has no interior element edge",
                    edge.a, edge.b
                ))
            })?;
            push_unique(target, dof);
        }
    }

    let surface_vertex_dofs: Vec<usize> = (0..=mesh.n_x)
        .map(|i| vertex_dof[mesh.vertex_id(i, mesh.n_y)])
        .collect();

    Ok(ScalarSpace {
        kind,
        n_dofs,
        elem_dofs,
        dof_coords,
        bed_dofs,
        surface_dofs,
        lateral_dofs,
        surface_vertex_dofs,
        vertex_dof,
    })
}

impl ScalarSpace {
    /// Global dof ids for the midpoint of a boundary edge (P2 only): the two
    /// endpoint dofs followed by the midpoint dof.
    pub fn edge_dofs(&self, mesh: &ExtrudedMesh, a: usize, b: usize) -> Result<Vec<usize>> {
        let da = self.vertex_dof[a];
        let db = self.vertex_dof[b];
        match self.kind {
            ElementKind::P1 => Ok(vec![da, db]),
            ElementKind::P2 => {
                let ca = canonical_vertex(mesh, a);
                let cb = canonical_vertex(mesh, b);
                let key = (ca.min(cb), ca.max(cb));
                // Linear scan replacement is avoided by rebuilding the lookup
                // lazily; boundary edges are few, so search the element table.
                for (e, tri) in mesh.triangles.iter().enumerate() {
                    for (slot, (i, j)) in [(3, (0, 1)), (4, (1, 2)), (5, (2, 0))] {
                        let ta = canonical_vertex(mesh, tri[i]);
                        let tb = canonical_vertex(mesh, tri[j]);
                        if (ta.min(tb), ta.max(tb)) == key {
                            return Ok(vec![da, db, self.elem_dofs[e][slot]]);
                        }
                    }
                }
                Err(IceLabError::Geometry(format!(
                    "edge ({a}, {b}) not found in any element"
                )))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::mesh::extrude_mesh;
    use crate::geometry::{build_icecap_profile, build_slab_profile};

    #[test]
    fn p1_counts_on_periodic_slab() {
        let profile = build_slab_profile(80_000.0, 1000.0, 0.75, 0.0, 5e-8).unwrap();
        let mesh = extrude_mesh(&profile, 8, 3).unwrap();
        let space = build_scalar_space(&mesh, ElementKind::P1).unwrap();
        // 9 columns merge to 8, times 4 layers.
        assert_eq!(space.n_dofs, 8 * 4);
        assert!(space.lateral_dofs.is_empty());
        assert_eq!(space.surface_vertex_dofs.len(), 9);
        assert_eq!(space.surface_vertex_dofs[0], space.surface_vertex_dofs[8]);
        // Every element references only valid dofs.
        for local in &space.elem_dofs {
            for &d in &local[..3] {
                assert!(d < space.n_dofs);
            }
        }
    }

    #[test]
    fn p2_counts_match_euler_formula() {
        // Non-periodic: dofs = vertices + unique edges.
        let profile = build_icecap_profile(750_000.0, 3575.0).unwrap();
        let (n_x, n_y) = (6, 2);
        let mesh = extrude_mesh(&profile, n_x, n_y).unwrap();
        let space = build_scalar_space(&mesh, ElementKind::P2).unwrap();
        let vertices = (n_x + 1) * (n_y + 1);
        // Structured triangulated quad grid: horizontal + vertical + diagonal.
        let edges = n_x * (n_y + 1) + (n_x + 1) * n_y + n_x * n_y;
        assert_eq!(space.n_dofs, vertices + edges);
        // Lateral set: 2 columns of (n_y+1) vertices + n_y midpoints each.
        assert_eq!(space.lateral_dofs.len(), 2 * (n_y + 1 + n_y));
        // Surface set: n_x+1 vertices + n_x midpoints.
        assert_eq!(space.surface_dofs.len(), n_x + 1 + n_x);
    }

    #[test]
    fn p2_periodic_merges_seam_edges() {
        let profile = build_slab_profile(80_000.0, 1000.0, 0.75, 200.0, 5e-8).unwrap();
        let (n_x, n_y) = (8, 3);
        let mesh = extrude_mesh(&profile, n_x, n_y).unwrap();
        let space = build_scalar_space(&mesh, ElementKind::P2).unwrap();
        let vertices = n_x * (n_y + 1);
        // After the seam merge the edge graph is that of a cylinder:
        // horizontal n_x per layer row, vertical n_x columns of n_y, diagonal
        // n_x * n_y.
        let edges = n_x * (n_y + 1) + n_x * n_y + n_x * n_y;
        assert_eq!(space.n_dofs, vertices + edges);

        // The last column's elements must reuse the first column's vertical
        // seam dofs: collect dofs of column 0 elements and column n_x-1
        // elements and check a nonempty intersection.
        let per_col = 2 * n_y;
        let first: Vec<usize> = space.elem_dofs[..per_col]
            .iter()
            .flat_map(|d| d.iter().copied())
            .collect();
        let last: Vec<usize> = space.elem_dofs[(n_x - 1) * per_col..n_x * per_col]
            .iter()
            .flat_map(|d| d.iter().copied())
            .collect();
        assert!(last.iter().any(|d| first.contains(d)));
    }

    #[test]
    fn edge_dof_lookup_matches_element_table() {
        let profile = build_icecap_profile(750_000.0, 3575.0).unwrap();
        let mesh = extrude_mesh(&profile, 5, 2).unwrap();
        let space = build_scalar_space(&mesh, ElementKind::P2).unwrap();
        for edge in &mesh.boundary_edges {
            let dofs = space.edge_dofs(&mesh, edge.a, edge.b).unwrap();
            assert_eq!(dofs.len(), 3);
            assert!(dofs.iter().all(|&d| d < space.n_dofs));
            // The midpoint coordinate must be the average of the endpoints.
            let (xa, ya) = mesh.vertices[edge.a];
            let (xb, yb) = mesh.vertices[edge.b];
            let (xm, ym) = space.dof_coords[dofs[2]];
            assert!((xm - 0.5 * (xa + xb)).abs() < 1e-9);
            assert!((ym - 0.5 * (ya + yb)).abs() < 1e-9);
        }
    }
}
