//! Extruded triangular meshes: uniform vertical columns from bed to surface,
//! each quad split along the lower-left to upper-right diagonal.

use crate::error::{IceLabError, Result};
use crate::geometry::{DomainProfile, LateralBc};

/// Tag identifying which part of the domain boundary an edge belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryTag {
    Bed,
    Surface,
    LateralLeft,
    LateralRight,
}

/// A boundary edge between two vertex indices; for bed/surface edges `a` is
/// the lower-x endpoint, for lateral edges the lower-y endpoint.
#[derive(Debug, Clone, Copy)]
pub struct BoundaryEdge {
    pub a: usize,
    pub b: usize,
    pub tag: BoundaryTag,
}

/// Structured extruded mesh over a domain profile. Vertices are indexed
/// column-major: vertex (i, j) = i·(n_y+1) + j with j=0 on the bed.
#[derive(Debug, Clone)]
pub struct ExtrudedMesh {
    pub n_x: usize,
    pub n_y: usize,
    pub x_min: f64,
    pub dx: f64,
    pub vertices: Vec<(f64, f64)>,
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Relative height ŷ ∈ [0,1] of each vertex within its column.
    pub reference_fraction: Vec<f64>,
    pub column_of: Vec<usize>,
    pub layer_of: Vec<usize>,
    /// Bed elevation per column (static).
    pub bed_y: Vec<f64>,
    /// Current surface elevation per column.
    pub surface_y: Vec<f64>,
    pub periodic: bool,
    pub min_thickness: f64,
}

impl ExtrudedMesh {
    #[inline]
    pub fn vertex_id(&self, col: usize, layer: usize) -> usize {
        col * (self.n_y + 1) + layer
    }

    pub fn n_vertices(&self) -> usize {
        (self.n_x + 1) * (self.n_y + 1)
    }

    pub fn column_x(&self, col: usize) -> f64 {
        self.x_min + self.dx * col as f64
    }

    pub fn triangle_area(&self, t: &[usize; 3]) -> f64 {
        let (x1, y1) = self.vertices[t[0]];
        let (x2, y2) = self.vertices[t[1]];
        let (x3, y3) = self.vertices[t[2]];
        0.5 * ((x2 - x1) * (y3 - y1) - (x3 - x1) * (y2 - y1))
    }

    /// Check structural invariants: counts, extrusion consistency, positive
    /// areas, vertical column alignment, and boundary tagging.
    pub fn validate(&self) -> Result<()> {
        if self.vertices.len() != self.n_vertices() {
            return Err(IceLabError::Geometry(format!(
                "vertex count {} != (n_x+1)(n_y+1) = {}",
                self.vertices.len(),
                self.n_vertices()
            )));
        }
        if self.triangles.len() != 2 * self.n_x * self.n_y {
            return Err(IceLabError::Geometry(format!(
                "triangle count {} != 2 n_x n_y = {}",
                self.triangles.len(),
                2 * self.n_x * self.n_y
            )));
        }
        for (k, t) in self.triangles.iter().enumerate() {
            let area = self.triangle_area(t);
            if !(area > 0.0) {
                return Err(IceLabError::Geometry(format!(
                    "triangle {k} has non-positive area {area}"
                )));
            }
        }
        for i in 0..=self.n_x {
            let x = self.column_x(i);
            for j in 0..=self.n_y {
                let v = self.vertex_id(i, j);
                if (self.vertices[v].0 - x).abs() > 1e-12 * x.abs().max(1.0) {
                    return Err(IceLabError::Geometry(format!(
                        "vertex ({i},{j}) is off its column abscissa"
                    )));
                }
                let expect =
                    self.bed_y[i] + self.reference_fraction[v] * (self.surface_y[i] - self.bed_y[i]);
                if (self.vertices[v].1 - expect).abs() > 1e-9 {
                    return Err(IceLabError::Geometry(format!(
                        "vertex ({i},{j}) violates the extrusion relation"
                    )));
                }
            }
        }
        let expected_edges = 2 * self.n_x + 2 * self.n_y;
        if self.boundary_edges.len() != expected_edges {
            return Err(IceLabError::Geometry(format!(
                "boundary edge count {} != {}",
                self.boundary_edges.len(),
                expected_edges
            )));
        }
        Ok(())
    }

    /// Surface vertex ids in ascending x.
    pub fn surface_vertices(&self) -> Vec<usize> {
        (0..=self.n_x).map(|i| self.vertex_id(i, self.n_y)).collect()
    }

    /// Plain-text export: vertex lines `x y`, triangle lines `i j k`,
    /// boundary lines `i j tag`.
    pub fn export_text(&self, mut w: impl std::io::Write) -> std::io::Result<()> {
        writeln!(w, "# vertices {}", self.vertices.len())?;
        for &(x, y) in &self.vertices {
            writeln!(w, "{:.17e} {:.17e}", x, y)?;
        }
        writeln!(w, "# triangles {}", self.triangles.len())?;
        for t in &self.triangles {
            writeln!(w, "{} {} {}", t[0], t[1], t[2])?;
        }
        writeln!(w, "# boundary_edges {}", self.boundary_edges.len())?;
        for e in &self.boundary_edges {
            let tag = match e.tag {
                BoundaryTag::Bed => "bed",
                BoundaryTag::Surface => "surface",
                BoundaryTag::LateralLeft => "lateral_left",
                BoundaryTag::LateralRight => "lateral_right",
            };
            writeln!(w, "{} {} {}", e.a, e.b, tag)?;
        }
        Ok(())
    }
}

/// Build the extruded mesh of a profile with `n_x` uniform columns and `n_y`
/// uniform layers per column.
pub fn extrude_mesh(profile: &DomainProfile, n_x: usize, n_y: usize) -> Result<ExtrudedMesh> {
    if n_x < 2 || n_y < 1 {
        return Err(IceLabError::InvalidParameter(format!(
            "extrusion needs n_x >= 2 and n_y >= 1, got n_x={n_x}, n_y={n_y}"
        )));
    }
    let dx = (profile.x_max - profile.x_min) / n_x as f64;
    let mut bed_y = Vec::with_capacity(n_x + 1);
    let mut surface_y = Vec::with_capacity(n_x + 1);
    for i in 0..=n_x {
        let x = profile.x_min + dx * i as f64;
        let b = profile.bed_at(x);
        let s = profile.surface0_at(x);
        if !(s - b >= profile.min_thickness - 1e-9) {
            return Err(IceLabError::Geometry(format!(
                "column {i} at x={x} has thickness {} below the minimum {}",
                s - b,
                profile.min_thickness
            )));
        }
        bed_y.push(b);
        surface_y.push(s);
    }
    build_mesh(
        profile.x_min,
        dx,
        n_x,
        n_y,
        bed_y,
        surface_y,
        profile.lateral_bc == LateralBc::Periodic,
        profile.min_thickness,
    )
}

#[allow(clippy::too_many_arguments)]
fn build_mesh(
    x_min: f64,
    dx: f64,
    n_x: usize,
    n_y: usize,
    bed_y: Vec<f64>,
    surface_y: Vec<f64>,
    periodic: bool,
    min_thickness: f64,
) -> Result<ExtrudedMesh> {
    let n_vert = (n_x + 1) * (n_y + 1);
    let mut vertices = Vec::with_capacity(n_vert);
    let mut reference_fraction = Vec::with_capacity(n_vert);
    let mut column_of = Vec::with_capacity(n_vert);
    let mut layer_of = Vec::with_capacity(n_vert);
    for i in 0..=n_x {
        let x = x_min + dx * i as f64;
        for j in 0..=n_y {
            let frac = j as f64 / n_y as f64;
            vertices.push((x, bed_y[i] + frac * (surface_y[i] - bed_y[i])));
            reference_fraction.push(frac);
            column_of.push(i);
            layer_of.push(j);
        }
    }
    let vid = |i: usize, j: usize| i * (n_y + 1) + j;
    let mut triangles = Vec::with_capacity(2 * n_x * n_y);
    for i in 0..n_x {
        for j in 0..n_y {
            triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
            triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
        }
    }
    let mut boundary_edges = Vec::with_capacity(2 * n_x + 2 * n_y);
    for i in 0..n_x {
        boundary_edges.push(BoundaryEdge {
            a: vid(i, 0),
            b: vid(i + 1, 0),
            tag: BoundaryTag::Bed,
        });
    }
    for i in 0..n_x {
        boundary_edges.push(BoundaryEdge {
            a: vid(i, n_y),
            b: vid(i + 1, n_y),
            tag: BoundaryTag::Surface,
        });
    }
    for j in 0..n_y {
        boundary_edges.push(BoundaryEdge {
            a: vid(0, j),
            b: vid(0, j + 1),
            tag: BoundaryTag::LateralLeft,
        });
    }
    for j in 0..n_y {
        boundary_edges.push(BoundaryEdge {
            a: vid(n_x, j),
            b: vid(n_x, j + 1),
            tag: BoundaryTag::LateralRight,
        });
    }
    let mesh = ExtrudedMesh {
        n_x,
        n_y,
        x_min,
        dx,
        vertices,
        triangles,
        boundary_edges,
        reference_fraction,
        column_of,
        layer_of,
        bed_y,
        surface_y,
        periodic,
        min_thickness,
    };
    mesh.validate()?;
    Ok(mesh)
}

/// Recompute vertex heights for new column surface elevations `h_cols`
/// (length n_x+1); connectivity, tags and reference fractions are unchanged.
pub fn deform_mesh_to_surface(mesh: &ExtrudedMesh, h_cols: &[f64]) -> Result<ExtrudedMesh> {
    if h_cols.len() != mesh.n_x + 1 {
        return Err(IceLabError::Geometry(format!(
            "surface has {} columns, mesh expects {}",
            h_cols.len(),
            mesh.n_x + 1
        )));
    }
    for (i, &h) in h_cols.iter().enumerate() {
        if !(h - mesh.bed_y[i] >= mesh.min_thickness - 1e-9) || !h.is_finite() {
            return Err(IceLabError::Geometry(format!(
                "column {i} thickness {} is below the minimum {}",
                h - mesh.bed_y[i],
                mesh.min_thickness
            )));
        }
    }
    let mut out = mesh.clone();
    for i in 0..=mesh.n_x {
        let b = mesh.bed_y[i];
        for j in 0..=mesh.n_y {
            let v = mesh.vertex_id(i, j);
            let frac = mesh.reference_fraction[v];
            out.vertices[v].1 = b + frac * (h_cols[i] - b);
        }
        out.surface_y[i] = h_cols[i];
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_icecap_profile, build_slab_profile};
    use approx::assert_abs_diff_eq;

    #[test]
    fn tiny_mesh_counts() {
        let p = build_slab_profile(1000.0, 100.0, 0.0, 0.0, 0.0).unwrap();
        let m = extrude_mesh(&p, 2, 1).unwrap();
        assert_eq!(m.vertices.len(), 6);
        assert_eq!(m.triangles.len(), 4);
        let count = |tag: BoundaryTag| m.boundary_edges.iter().filter(|e| e.tag == tag).count();
        assert_eq!(count(BoundaryTag::Bed), 2);
        assert_eq!(count(BoundaryTag::Surface), 2);
        assert_eq!(count(BoundaryTag::LateralLeft), 1);
        assert_eq!(count(BoundaryTag::LateralRight), 1);
    }

    #[test]
    fn slab_triangle_areas_are_uniform() {
        let p = build_slab_profile(80e3, 1e3, 0.75, 0.0, 0.0).unwrap();
        let m = extrude_mesh(&p, 16, 4).unwrap();
        let expect = m.dx * (1e3 / 4.0) / 2.0;
        for t in &m.triangles {
            assert_abs_diff_eq!(m.triangle_area(t), expect, epsilon = 1e-6);
        }
    }

    #[test]
    fn slab_dx_matches_resolution_table() {
        let p = build_slab_profile(80e3, 1e3, 0.75, 1.0, 5e-8).unwrap();
        let m = extrude_mesh(&p, 320, 11).unwrap();
        assert_abs_diff_eq!(m.dx, 250.0, epsilon = 1e-12);
    }

    #[test]
    fn deform_identity_is_bitwise() {
        let p = build_slab_profile(80e3, 1e3, 0.75, 1.0, 5e-8).unwrap();
        let m = extrude_mesh(&p, 20, 5).unwrap();
        let d = deform_mesh_to_surface(&m, &m.surface_y.clone()).unwrap();
        for (a, b) in m.vertices.iter().zip(d.vertices.iter()) {
            assert!(a.0 == b.0 && a.1 == b.1);
        }
    }

    #[test]
    fn deform_uniform_raise_moves_surface_only() {
        let p = build_slab_profile(80e3, 1e3, 0.75, 1.0, 5e-8).unwrap();
        let m = extrude_mesh(&p, 20, 5).unwrap();
        let raised: Vec<f64> = m.surface_y.iter().map(|h| h + 7.0).collect();
        let d = deform_mesh_to_surface(&m, &raised).unwrap();
        for i in 0..=20 {
            let top = m.vertex_id(i, 5);
            let bot = m.vertex_id(i, 0);
            assert_abs_diff_eq!(d.vertices[top].1 - m.vertices[top].1, 7.0, epsilon = 1e-12);
            assert_abs_diff_eq!(d.vertices[bot].1, m.vertices[bot].1, epsilon = 1e-15);
        }
    }

    #[test]
    fn deform_matches_fresh_extrusion() {
        let p = build_icecap_profile(750e3, 3000.0).unwrap();
        let m = extrude_mesh(&p, 24, 6).unwrap();
        // perturb the surface, deform, and compare against re-extruding a
        // profile that evaluates to the same columns
        let mut h2: Vec<f64> = m.surface_y.clone();
        for (i, h) in h2.iter_mut().enumerate() {
            *h += 5.0 * (i as f64 * 0.7).sin().abs() + 1.0;
        }
        let d = deform_mesh_to_surface(&m, &h2).unwrap();
        d.validate().unwrap();
        for i in 0..=24 {
            for j in 0..=6 {
                let v = m.vertex_id(i, j);
                let expect = m.bed_y[i] + (j as f64 / 6.0) * (h2[i] - m.bed_y[i]);
                assert_abs_diff_eq!(d.vertices[v].1, expect, epsilon = 1e-14 * expect.abs().max(1.0));
            }
        }
        // idempotence: deforming again with the same surface changes nothing
        let d2 = deform_mesh_to_surface(&d, &h2).unwrap();
        for (a, b) in d.vertices.iter().zip(d2.vertices.iter()) {
            assert!(a.1 == b.1);
        }
    }

    #[test]
    fn deform_rejects_thin_columns() {
        let p = build_slab_profile(80e3, 1e3, 0.75, 1.0, 5e-8).unwrap();
        let m = extrude_mesh(&p, 20, 5).unwrap();
        let mut h2 = m.surface_y.clone();
        h2[3] = m.bed_y[3] + 0.1;
        match deform_mesh_to_surface(&m, &h2) {
            Err(IceLabError::Geometry(msg)) => assert!(msg.contains("column 3")),
            other => panic!("expected geometry error, got {other:?}"),
        }
    }

    #[test]
    fn extrude_rejects_degenerate_parameters() {
        let p = build_slab_profile(80e3, 1e3, 0.75, 1.0, 5e-8).unwrap();
        assert!(extrude_mesh(&p, 1, 4).is_err());
        assert!(extrude_mesh(&p, 4, 0).is_err());
    }

    #[test]
    fn export_round_trip_counts() {
        let p = build_slab_profile(80e3, 1e3, 0.75, 1.0, 5e-8).unwrap();
        let m = extrude_mesh(&p, 4, 2).unwrap();
        let mut buf = Vec::new();
        m.export_text(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(
            text.lines().count(),
            3 + m.vertices.len() + m.triangles.len() + m.boundary_edges.len()
        );
        assert!(text.contains("lateral_right"));
    }
}
