//! Momentum-system assembly.
//!
//! Two weak forms share the element loop:
//!
//! * gradient form (`w-sia`, P1/P1): vertical shear in the horizontal
//!   momentum row, hydrostatic balance in the vertical one, pressure
//!   gradients kept on the trial side (no integration by parts), so the
//!   pressure needs explicit values on the surface — and on the lateral
//!   walls of non-periodic meshes, where the reduced system is otherwise
//!   singular by exactly one pressure mode;
//! * divergence form (`w-siastokes`, `w-stokes`, P2/P1): the full symmetric
//!   Stokes operator with the pressure integrated by parts, leaving the free
//!   surface stress-free as a natural condition.
//!
//! Dirichlet constraints are eliminated symmetrically during the scatter:
//! constrained rows are skipped, constrained columns fold into the right-hand
//! side, and each constrained dof keeps an identity row carrying its value.

use std::collections::HashMap;

use crate::constants::PhysicalConstants;
use crate::error::{IceLabError, Result};
use crate::fem::quadrature::{EDGE_POINTS, TRI_POINTS};
use crate::fem::space::{build_scalar_space, ElementKind, ScalarSpace};
use crate::fem::{Formulation, FormulationConfig};
use crate::geometry::mesh::{BoundaryTag, ExtrudedMesh};
use crate::sia::{sia_viscosity_at, SurfaceFields};
use crate::sparse::CooMatrix;

/// Block layout of the coupled system: `[u1 | u2 | p]`.
#[derive(Debug, Clone)]
pub struct DofMap {
    pub velocity: ScalarSpace,
    pub pressure: ScalarSpace,
}

impl DofMap {
    pub fn u1(&self, dof: usize) -> usize {
        dof
    }
    pub fn u2(&self, dof: usize) -> usize {
        self.velocity.n_dofs + dof
    }
    pub fn p(&self, dof: usize) -> usize {
        2 * self.velocity.n_dofs + dof
    }
    pub fn n_total(&self) -> usize {
        2 * self.velocity.n_dofs + self.pressure.n_dofs
    }
}

/// Assembled coupled system with its constraint record.
#[derive(Debug, Clone)]
pub struct LinearSystem {
    pub matrix: CooMatrix,
    pub rhs: Vec<f64>,
    pub dofs: DofMap,
    /// Per global dof: `Some(value)` if held by a Dirichlet condition.
    pub constraints: Vec<Option<f64>>,
}

impl LinearSystem {
    /// Write the (compressed) matrix as `row col value` lines.
    pub fn dump_matrix(&self, w: impl std::io::Write) -> std::io::Result<()> {
        self.matrix.dump_coordinate_text(w)
    }
}

/// How the viscosity at a quadrature point is produced.
pub enum ViscosityModel<'a> {
    /// Vertical-shear closure evaluated from projected surface fields.
    SiaFields(&'a SurfaceFields),
    /// Fixed constant (manufactured solutions, frozen Picard iterates).
    Constant(f64),
    /// Glen-law effective viscosity from a previous velocity iterate given
    /// in the velocity-space dof layout.
    PowerLaw { u1: &'a [f64], u2: &'a [f64] },
}

/// Hooks for manufactured-solution runs. All default to "physical": gravity
/// load, homogeneous velocity walls, hydrostatic pressure completion.
pub struct AssemblyOverrides<'a> {
    /// Replaces the gravity body force with `f(x, y) -> (f1, f2)`.
    pub body_force: Option<&'a (dyn Fn(f64, f64) -> (f64, f64) + Sync)>,
    /// Values for velocity Dirichlet dofs (default zero).
    pub velocity_values: Option<&'a (dyn Fn(f64, f64) -> (f64, f64) + Sync)>,
    /// Values for pressure Dirichlet dofs (default: zero on the surface,
    /// hydrostatic on non-periodic lateral walls).
    pub pressure_values: Option<&'a (dyn Fn(f64, f64) -> f64 + Sync)>,
    /// Also constrain the velocity on the free surface (full-Dirichlet
    /// manufactured problems).
    pub constrain_surface_velocity: bool,
    /// Pin the first pressure dof (needed when every boundary is a velocity
    /// Dirichlet wall and the pressure is otherwise defined up to a
    /// constant).
    pub pin_pressure_dof: bool,
}

impl Default for AssemblyOverrides<'_> {
    fn default() -> Self {
        AssemblyOverrides {
            body_force: None,
            velocity_values: None,
            pressure_values: None,
            constrain_surface_velocity: false,
            pin_pressure_dof: false,
        }
    }
}

/// Straight-edge triangle geometry: constant P1 gradients and area.
pub(crate) struct TriGeometry {
    pub v: [(f64, f64); 3],
    pub grads: [[f64; 2]; 3],
    pub area: f64,
}

pub(crate) fn tri_geometry(v: [(f64, f64); 3]) -> TriGeometry {
    let det = (v[1].0 - v[0].0) * (v[2].1 - v[0].1) - (v[2].0 - v[0].0) * (v[1].1 - v[0].1);
    let grads = [
        [(v[1].1 - v[2].1) / det, (v[2].0 - v[1].0) / det],
        [(v[2].1 - v[0].1) / det, (v[0].0 - v[2].0) / det],
        [(v[0].1 - v[1].1) / det, (v[1].0 - v[0].0) / det],
    ];
    TriGeometry {
        v,
        grads,
        area: 0.5 * det,
    }
}

/// Basis values and physical gradients at reference point (ξ, η). Returns
/// the active count (3 for P1, 6 for P2); unused slots are zero.
pub(crate) fn basis_at(
    kind: ElementKind,
    xi: f64,
    eta: f64,
    geom: &TriGeometry,
) -> ([f64; 6], [[f64; 2]; 6], usize) {
    let lam = [1.0 - xi - eta, xi, eta];
    let g = &geom.grads;
    let mut vals = [0.0; 6];
    let mut grads = [[0.0; 2]; 6];
    match kind {
        ElementKind::P1 => {
            for k in 0..3 {
                vals[k] = lam[k];
                grads[k] = g[k];
            }
            (vals, grads, 3)
        }
        ElementKind::P2 => {
            for k in 0..3 {
                vals[k] = lam[k] * (2.0 * lam[k] - 1.0);
                let s = 4.0 * lam[k] - 1.0;
                grads[k] = [s * g[k][0], s * g[k][1]];
            }
            let pairs = [(0usize, 1usize), (1, 2), (2, 0)];
            for (slot, (i, j)) in pairs.into_iter().enumerate() {
                vals[3 + slot] = 4.0 * lam[i] * lam[j];
                grads[3 + slot] = [
                    4.0 * (lam[i] * g[j][0] + lam[j] * g[i][0]),
                    4.0 * (lam[i] * g[j][1] + lam[j] * g[i][1]),
                ];
            }
            (vals, grads, 6)
        }
    }
}

/// 1D trace shapes on an edge parameterized by t ∈ [0, 1] from endpoint a to
/// endpoint b; order (a, b[, midpoint]).
pub(crate) fn edge_shapes(kind: ElementKind, t: f64) -> ([f64; 3], usize) {
    match kind {
        ElementKind::P1 => ([1.0 - t, t, 0.0], 2),
        ElementKind::P2 => (
            [
                (1.0 - t) * (1.0 - 2.0 * t),
                t * (2.0 * t - 1.0),
                4.0 * t * (1.0 - t),
            ],
            3,
        ),
    }
}

fn scatter(
    matrix: &mut CooMatrix,
    rhs: &mut [f64],
    constraints: &[Option<f64>],
    row: usize,
    col: usize,
    val: f64,
) {
    if val == 0.0 || constraints[row].is_some() {
        return;
    }
    match constraints[col] {
        Some(g) => {
            if g != 0.0 {
                rhs[row] -= val * g;
            }
        }
        None => matrix.push(row, col, val),
    }
}

fn add_load(rhs: &mut [f64], constraints: &[Option<f64>], row: usize, val: f64) {
    if constraints[row].is_none() {
        rhs[row] += val;
    }
}

fn build_constraints(
    mesh: &ExtrudedMesh,
    config: &FormulationConfig,
    consts: &PhysicalConstants,
    dofs: &DofMap,
    overrides: &AssemblyOverrides,
) -> Vec<Option<f64>> {
    let mut constraints: Vec<Option<f64>> = vec![None; dofs.n_total()];
    let velocity_value = |dof: usize| -> (f64, f64) {
        match overrides.velocity_values {
            Some(f) => {
                let (x, y) = dofs.velocity.dof_coords[dof];
                f(x, y)
            }
            None => (0.0, 0.0),
        }
    };

    let clamp_velocity_set = |set: &[usize], constraints: &mut Vec<Option<f64>>| {
        for &d in set {
            let (g1, g2) = velocity_value(d);
            constraints[dofs.u1(d)] = Some(g1);
            constraints[dofs.u2(d)] = Some(g2);
        }
    };
    clamp_velocity_set(&dofs.velocity.bed_dofs, &mut constraints);
    clamp_velocity_set(&dofs.velocity.lateral_dofs, &mut constraints);
    if overrides.constrain_surface_velocity {
        clamp_velocity_set(&dofs.velocity.surface_dofs, &mut constraints);
    }

    if config.formulation == Formulation::WSia {
        // The pressure appears undifferenced against its own tests, so it
        // needs explicit surface values...
        for &d in &dofs.pressure.surface_dofs {
            let (x, y) = dofs.pressure.dof_coords[d];
            let val = match overrides.pressure_values {
                Some(f) => f(x, y),
                None => 0.0,
            };
            constraints[dofs.p(d)] = Some(val);
        }
        // ...and, on walled meshes, lateral values: without them the coupled
        // system carries exactly one spurious pressure mode on a lateral
        // column (the vertical-momentum tests there are claimed by the
        // velocity constraints). The hydrostatic column profile is the
        // consistent completion.
        if !mesh.periodic {
            for col in [0usize, mesh.n_x] {
                let y_surf = mesh.vertices[mesh.vertex_id(col, mesh.n_y)].1;
                for layer in 0..mesh.n_y {
                    let v = mesh.vertex_id(col, layer);
                    let d = dofs.pressure.vertex_dof[v];
                    let (x, y) = mesh.vertices[v];
                    let val = match overrides.pressure_values {
                        Some(f) => f(x, y),
                        None => consts.rho_g * (y_surf - y),
                    };
                    constraints[dofs.p(d)] = Some(val);
                }
            }
        }
    }

    if overrides.pin_pressure_dof {
        let row = dofs.p(0);
        if constraints[row].is_none() {
            let (x, y) = dofs.pressure.dof_coords[0];
            let val = match overrides.pressure_values {
                Some(f) => f(x, y),
                None => 0.0,
            };
            constraints[row] = Some(val);
        }
    }
    constraints
}

/// Assemble the coupled momentum system with an explicit viscosity model and
/// manufactured-solution overrides.
pub fn assemble_momentum_with(
    mesh: &ExtrudedMesh,
    config: &FormulationConfig,
    consts: &PhysicalConstants,
    viscosity: &ViscosityModel,
    overrides: &AssemblyOverrides,
) -> Result<LinearSystem> {
    consts.validate()?;
    let (vkind, _) = config.resolved_elements()?;
    let vspace = build_scalar_space(mesh, vkind)?;
    let pspace = build_scalar_space(mesh, ElementKind::P1)?;

    match viscosity {
        ViscosityModel::PowerLaw { u1, u2 } => {
            if u1.len() != vspace.n_dofs || u2.len() != vspace.n_dofs {
                return Err(IceLabError::InvalidParameter(format!(
                    "viscosity iterate has {} velocity dofs, space has {}",
                    u1.len().min(u2.len()),
                    vspace.n_dofs
                )));
            }
        }
        ViscosityModel::SiaFields(fields) => {
            let expected = if mesh.periodic {
                mesh.n_x
            } else {
                mesh.n_x + 1
            };
            if fields.len() != expected {
                return Err(IceLabError::InvalidParameter(format!(
                    "surface fields have {} nodes, mesh needs {expected}",
                    fields.len()
                )));
            }
        }
        ViscosityModel::Constant(mu) => {
            if !mu.is_finite() || *mu <= 0.0 {
                return Err(IceLabError::InvalidParameter(format!(
                    "constant viscosity must be positive, got {mu}"
                )));
            }
        }
    }

    let dofs = DofMap {
        velocity: vspace,
        pressure: pspace,
    };
    let n = dofs.n_total();
    let constraints = build_constraints(mesh, config, consts, &dofs, overrides);

    // Column surface data for the vertical-shear viscosity: physical surface
    // heights straight from the mesh, slopes from the projected fields (with
    // the periodic wrap applied).
    let (h_col, hx_col) = match viscosity {
        ViscosityModel::SiaFields(fields) => {
            let mut hx = Vec::with_capacity(mesh.n_x + 1);
            for i in 0..=mesh.n_x {
                let k = if mesh.periodic && i == mesh.n_x { 0 } else { i };
                hx.push(fields.dhdx[k]);
            }
            (mesh.surface_y.clone(), hx)
        }
        _ => (Vec::new(), Vec::new()),
    };

    let gmag = (consts.g_vec.0 * consts.g_vec.0 + consts.g_vec.1 * consts.g_vec.1).sqrt();
    let body_default = (
        consts.rho_g * consts.g_vec.0 / gmag,
        consts.rho_g * consts.g_vec.1 / gmag,
    );
    let gradient_form = config.formulation == Formulation::WSia;
    let inv_cbrt_a0 = consts.a0.powf(-1.0 / 3.0);
    let eps2 = consts.epsilon_shear * consts.epsilon_shear;

    let mut matrix = CooMatrix::with_capacity(n, n, mesh.triangles.len() * TRI_POINTS.len() * 8);
    let mut rhs = vec![0.0; n];
    let per_col = 2 * mesh.n_y;

    for e in 0..mesh.triangles.len() {
        let col = e / per_col;
        let tri = mesh.triangles[e];
        let geom = tri_geometry([
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ]);
        let vd = dofs.velocity.elem_dofs[e];
        let pd = dofs.pressure.elem_dofs[e];

        for &(xi, eta, wq) in &TRI_POINTS {
            let lam = [1.0 - xi - eta, xi, eta];
            let (vvals, vgrads, nvl) = basis_at(dofs.velocity.kind, xi, eta, &geom);
            let w = wq * geom.area;
            let x = lam[0] * geom.v[0].0 + lam[1] * geom.v[1].0 + lam[2] * geom.v[2].0;
            let y = lam[0] * geom.v[0].1 + lam[1] * geom.v[1].1 + lam[2] * geom.v[2].1;

            let mu = match viscosity {
                ViscosityModel::Constant(c) => *c,
                ViscosityModel::SiaFields(_) => {
                    let s = ((x - (mesh.x_min + col as f64 * mesh.dx)) / mesh.dx).clamp(0.0, 1.0);
                    let h_q = (1.0 - s) * h_col[col] + s * h_col[col + 1];
                    let hx_q = (1.0 - s) * hx_col[col] + s * hx_col[col + 1];
                    sia_viscosity_at(y - h_q, hx_q, consts)
                }
                ViscosityModel::PowerLaw { u1, u2 } => {
                    let (mut d11, mut d22, mut dyx, mut dxy) = (0.0, 0.0, 0.0, 0.0);
                    for k in 0..nvl {
                        d11 += u1[vd[k]] * vgrads[k][0];
                        dyx += u1[vd[k]] * vgrads[k][1];
                        dxy += u2[vd[k]] * vgrads[k][0];
                        d22 += u2[vd[k]] * vgrads[k][1];
                    }
                    let d12 = 0.5 * (dyx + dxy);
                    // The strain-rate invariant counts the shear component
                    // once; this is the convention under which the Glen-law
                    // slab solution reduces exactly to the closed-form
                    // vertical-shear profile (gamma = 2 A tau^3).
                    let norm2 = d11 * d11 + d22 * d22 + d12 * d12;
                    0.5 * inv_cbrt_a0 * (norm2 + eps2).powf(-1.0 / 3.0)
                }
            };
            let f = match overrides.body_force {
                Some(bf) => bf(x, y),
                None => body_default,
            };

            if gradient_form {
                for a in 0..3 {
                    let ru1 = dofs.u1(vd[a]);
                    let ru2 = dofs.u2(vd[a]);
                    for c in 0..3 {
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru1,
                            dofs.u1(vd[c]),
                            mu * geom.grads[a][1] * geom.grads[c][1] * w,
                        );
                    }
                    for j in 0..3 {
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru1,
                            dofs.p(pd[j]),
                            geom.grads[j][0] * lam[a] * w,
                        );
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru2,
                            dofs.p(pd[j]),
                            geom.grads[j][1] * lam[a] * w,
                        );
                    }
                    add_load(&mut rhs, &constraints, ru1, f.0 * lam[a] * w);
                    add_load(&mut rhs, &constraints, ru2, f.1 * lam[a] * w);
                }
                for j in 0..3 {
                    let rp = dofs.p(pd[j]);
                    for c in 0..3 {
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            rp,
                            dofs.u1(vd[c]),
                            lam[j] * geom.grads[c][0] * w,
                        );
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            rp,
                            dofs.u2(vd[c]),
                            lam[j] * geom.grads[c][1] * w,
                        );
                    }
                }
            } else {
                for a in 0..nvl {
                    let ru1 = dofs.u1(vd[a]);
                    let ru2 = dofs.u2(vd[a]);
                    let (gax, gay) = (vgrads[a][0], vgrads[a][1]);
                    for c in 0..nvl {
                        let (gcx, gcy) = (vgrads[c][0], vgrads[c][1]);
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru1,
                            dofs.u1(vd[c]),
                            mu * (2.0 * gax * gcx + gay * gcy) * w,
                        );
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru1,
                            dofs.u2(vd[c]),
                            mu * gay * gcx * w,
                        );
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru2,
                            dofs.u1(vd[c]),
                            mu * gax * gcy * w,
                        );
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru2,
                            dofs.u2(vd[c]),
                            mu * (gax * gcx + 2.0 * gay * gcy) * w,
                        );
                    }
                    for j in 0..3 {
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru1,
                            dofs.p(pd[j]),
                            -lam[j] * gax * w,
                        );
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            ru2,
                            dofs.p(pd[j]),
                            -lam[j] * gay * w,
                        );
                    }
                    add_load(&mut rhs, &constraints, ru1, f.0 * vvals[a] * w);
                    add_load(&mut rhs, &constraints, ru2, f.1 * vvals[a] * w);
                }
                for j in 0..3 {
                    let rp = dofs.p(pd[j]);
                    for c in 0..nvl {
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            rp,
                            dofs.u1(vd[c]),
                            lam[j] * vgrads[c][0] * w,
                        );
                        scatter(
                            &mut matrix,
                            &mut rhs,
                            &constraints,
                            rp,
                            dofs.u2(vd[c]),
                            lam[j] * vgrads[c][1] * w,
                        );
                    }
                }
            }
        }
    }

    if config.fssa_theta != 0.0 && config.fssa_dt != 0.0 {
        let fssa = assemble_fssa_term(mesh, &dofs, config.fssa_theta, config.fssa_dt, consts)?;
        for &(r, c, v) in &fssa.entries {
            scatter(&mut matrix, &mut rhs, &constraints, r, c, v);
        }
    }

    for (d, g) in constraints.iter().enumerate() {
        if let Some(val) = *g {
            matrix.push(d, d, 1.0);
            rhs[d] = val;
        }
    }

    Ok(LinearSystem {
        matrix,
        rhs,
        dofs,
        constraints,
    })
}

/// Assemble the physical momentum system (gravity load, frozen vertical-shear
/// viscosity). For the nonlinear formulation this is the initial Picard
/// operator; the closed-form formulation assembles nothing.
pub fn assemble_momentum(
    mesh: &ExtrudedMesh,
    config: &FormulationConfig,
    fields: &SurfaceFields,
    consts: &PhysicalConstants,
) -> Result<LinearSystem> {
    if config.formulation == Formulation::Sia {
        return Err(IceLabError::Config(
            "the closed-form formulation has no finite-element system".into(),
        ));
    }
    assemble_momentum_with(
        mesh,
        config,
        consts,
        &ViscosityModel::SiaFields(fields),
        &AssemblyOverrides::default(),
    )
}

/// Assemble the free-surface stabilization term: for every surface edge,
/// `theta * dt * rho_g * ∫ (u · n) v2 ds` added to the vertical-momentum
/// rows. Zero weight or timestep yields an empty matrix.
pub fn assemble_fssa_term(
    mesh: &ExtrudedMesh,
    dofs: &DofMap,
    theta: f64,
    dt: f64,
    consts: &PhysicalConstants,
) -> Result<CooMatrix> {
    if !theta.is_finite() || theta < 0.0 {
        return Err(IceLabError::InvalidParameter(format!(
            "stabilization weight must be finite and non-negative, got {theta}"
        )));
    }
    if !dt.is_finite() || dt < 0.0 {
        return Err(IceLabError::InvalidParameter(format!(
            "stabilization timestep must be finite and non-negative, got {dt}"
        )));
    }
    let n = dofs.n_total();
    let mut matrix = CooMatrix::new(n, n);
    if theta == 0.0 || dt == 0.0 {
        return Ok(matrix);
    }
    let factor = theta * dt * consts.rho_g;
    let vspace = &dofs.velocity;

    // Midpoint lookup keyed by endpoint dof pairs (dof ids are canonical, so
    // the periodic seam resolves automatically).
    let midpoints: Option<HashMap<(usize, usize), usize>> = match vspace.kind {
        ElementKind::P1 => None,
        ElementKind::P2 => {
            let mut map = HashMap::new();
            for local in &vspace.elem_dofs {
                for (slot, (i, j)) in [(3usize, (0usize, 1usize)), (4, (1, 2)), (5, (2, 0))] {
                    let key = (local[i].min(local[j]), local[i].max(local[j]));
                    map.insert(key, local[slot]);
                }
            }
            Some(map)
        }
    };

    for edge in &mesh.boundary_edges {
        if edge.tag != BoundaryTag::Surface {
            continue;
        }
        let (xa, ya) = mesh.vertices[edge.a];
        let (xb, yb) = mesh.vertices[edge.b];
        let (ex, ey) = (xb - xa, yb - ya);
        let len = ex.hypot(ey);
        let normal = (-ey / len, ex / len);

        let da = vspace.vertex_dof[edge.a];
        let db = vspace.vertex_dof[edge.b];
        let mut ed = [da, db, usize::MAX];
        let ned = match &midpoints {
            None => 2,
            Some(map) => {
                let key = (da.min(db), da.max(db));
                ed[2] = *map.get(&key).ok_or_else(|| {
                    IceLabError::Geometry(format!(
                        "surface edge ({}, {}) missing a midpoint dof",
                        edge.a, edge.b
                    ))
                })?;
                3
            }
        };

        for &(t, wq) in &EDGE_POINTS {
            let (shapes, _) = edge_shapes(vspace.kind, t);
            let w = wq * len;
            for a in 0..ned {
                for c in 0..ned {
                    let mass = shapes[a] * shapes[c] * w;
                    matrix.push(dofs.u2(ed[a]), dofs.u1(ed[c]), factor * normal.0 * mass);
                    matrix.push(dofs.u2(ed[a]), dofs.u2(ed[c]), factor * normal.1 * mass);
                }
            }
        }
    }
    Ok(matrix)
}

/// L2 norm of the velocity divergence over the mesh; `u1`/`u2` are in the
/// dof layout of `space`.
pub fn divergence_l2(
    mesh: &ExtrudedMesh,
    space: &ScalarSpace,
    u1: &[f64],
    u2: &[f64],
) -> Result<f64> {
    if u1.len() != space.n_dofs || u2.len() != space.n_dofs {
        return Err(IceLabError::InvalidParameter(format!(
            "velocity arrays have {}/{} entries, space has {} dofs",
            u1.len(),
            u2.len(),
            space.n_dofs
        )));
    }
    let mut acc = 0.0;
    for (e, tri) in mesh.triangles.iter().enumerate() {
        let geom = tri_geometry([
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ]);
        let vd = space.elem_dofs[e];
        for &(xi, eta, wq) in &TRI_POINTS {
            let (_, grads, nvl) = basis_at(space.kind, xi, eta, &geom);
            let mut div = 0.0;
            for k in 0..nvl {
                div += u1[vd[k]] * grads[k][0] + u2[vd[k]] * grads[k][1];
            }
            acc += div * div * wq * geom.area;
        }
    }
    Ok(acc.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{
        picard_solve_wstokes, solve_momentum_system, FormulationConfig, PicardViscosity,
    };
    use crate::geometry::mesh::extrude_mesh;
    use crate::geometry::{
        build_icecap_profile, build_slab_profile, DomainProfile, LateralBc,
        SurfaceBc as GeoSurfaceBc,
    };
    use crate::sia::{build_surface_fields, sia_surface_velocity};
    use crate::surface::SurfaceState;
    use approx::assert_relative_eq;
    use std::sync::Arc;

    fn reference_triangle() -> TriGeometry {
        tri_geometry([(0.0, 0.0), (2.0, 0.0), (0.0, 3.0)])
    }

    #[test]
    fn p2_viscous_block_matches_reference() {
        // ∫ 2μ ∂x(Na) ∂x(Nc) + μ ∂y(Na) ∂y(Nc) on the (0,0)-(2,0)-(0,3)
        // triangle with μ = 1.7.
        let geom = reference_triangle();
        let mu = 1.7;
        let mut a = [[0.0f64; 6]; 6];
        for &(xi, eta, wq) in &TRI_POINTS {
            let (_, g, _) = basis_at(ElementKind::P2, xi, eta, &geom);
            let w = wq * geom.area;
            for i in 0..6 {
                for j in 0..6 {
                    a[i][j] += mu * (2.0 * g[i][0] * g[j][0] + g[i][1] * g[j][1]) * w;
                }
            }
        }
        let row0 = [
            3.1166666666666667,
            0.85,
            0.18888888888888888,
            -3.4,
            0.0,
            -0.7555555555555555,
        ];
        let row3 = [-3.4, -3.4, 0.0, 8.311111111111112, -1.511111111111111, 0.0];
        let row5 = [
            -0.7555555555555555,
            0.0,
            -0.7555555555555555,
            0.0,
            -6.8,
            8.311111111111112,
        ];
        for j in 0..6 {
            assert_relative_eq!(a[0][j], row0[j], epsilon = 1e-12, max_relative = 1e-12);
            assert_relative_eq!(a[3][j], row3[j], epsilon = 1e-12, max_relative = 1e-12);
            assert_relative_eq!(a[5][j], row5[j], epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn p1_shear_block_matches_reference() {
        // ∫ μ ∂y(Na) ∂y(Nc) with P1 elements on the same triangle.
        let geom = reference_triangle();
        let mu = 1.7;
        let mut a = [[0.0f64; 3]; 3];
        for &(xi, eta, wq) in &TRI_POINTS {
            let (_, g, _) = basis_at(ElementKind::P1, xi, eta, &geom);
            let w = wq * geom.area;
            for i in 0..3 {
                for j in 0..3 {
                    a[i][j] += mu * g[i][1] * g[j][1] * w;
                }
            }
        }
        let expected = [
            [0.5666666666666667, 0.0, -0.5666666666666667],
            [0.0, 0.0, 0.0],
            [-0.5666666666666667, 0.0, 0.5666666666666667],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(a[i][j], expected[i][j], epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn p2p1_divergence_blocks_match_reference() {
        // ∫ ∂x(Na) ψj and ∫ ∂y(Na) ψj, P2 trial against P1 pressure tests.
        let geom = reference_triangle();
        let mut dx = [[0.0f64; 3]; 6];
        let mut dy = [[0.0f64; 3]; 6];
        for &(xi, eta, wq) in &TRI_POINTS {
            let lam = [1.0 - xi - eta, xi, eta];
            let (_, g, _) = basis_at(ElementKind::P2, xi, eta, &geom);
            let w = wq * geom.area;
            for a in 0..6 {
                for j in 0..3 {
                    dx[a][j] += g[a][0] * lam[j] * w;
                    dy[a][j] += g[a][1] * lam[j] * w;
                }
            }
        }
        let third = 1.0 / 3.0;
        let exp_dx = [
            [-0.5, 0.0, 0.0],
            [0.0, 0.5, 0.0],
            [0.0, 0.0, 0.0],
            [0.5, -0.5, 0.0],
            [0.5, 0.5, 1.0],
            [-0.5, -0.5, -1.0],
        ];
        let exp_dy = [
            [-third, 0.0, 0.0],
            [0.0, 0.0, 0.0],
            [0.0, 0.0, third],
            [-third, -2.0 * third, -third],
            [third, 2.0 * third, third],
            [third, 0.0, -third],
        ];
        for a in 0..6 {
            for j in 0..3 {
                assert_relative_eq!(dx[a][j], exp_dx[a][j], epsilon = 1e-13);
                assert_relative_eq!(dy[a][j], exp_dy[a][j], epsilon = 1e-13);
            }
        }
    }

    /// A two-cell strip whose leftmost surface edge runs (0,0) -> (2,1).
    fn tilted_cell_mesh() -> ExtrudedMesh {
        let profile = DomainProfile {
            x_min: 0.0,
            x_max: 4.0,
            bed: Arc::new(|x: f64| 0.5 * x - 1.0),
            surface0: Arc::new(|x: f64| 0.5 * x),
            lateral_bc: LateralBc::NoSlip,
            surface_bc: GeoSurfaceBc::DirichletFixed,
            min_thickness: 0.5,
        };
        extrude_mesh(&profile, 2, 1).unwrap()
    }

    #[test]
    fn fssa_edge_blocks_match_reference() {
        let mesh = tilted_cell_mesh();
        let dofs = DofMap {
            velocity: build_scalar_space(&mesh, ElementKind::P2).unwrap(),
            pressure: build_scalar_space(&mesh, ElementKind::P1).unwrap(),
        };
        let consts = PhysicalConstants::default();
        let fssa = assemble_fssa_term(&mesh, &dofs, 0.3, 2.5, &consts).unwrap();

        // Reconstruct the dense blocks keyed by the surface edge dofs in the
        // order (end a, end b, midpoint).
        let edge = mesh
            .boundary_edges
            .iter()
            .find(|e| e.tag == BoundaryTag::Surface && mesh.vertices[e.a].0 == 0.0)
            .unwrap();
        let ed = dofs.velocity.edge_dofs(&mesh, edge.a, edge.b).unwrap();
        // Rows for the left endpoint and the midpoint receive contributions
        // from this edge alone, so they can be checked against the frozen
        // block; entries belonging to the neighbouring edge are skipped.
        let mut u1_block = [[0.0f64; 3]; 3];
        let mut u2_block = [[0.0f64; 3]; 3];
        for &(r, c, v) in &fssa.entries {
            let Some(a) = ed.iter().position(|&d| dofs.u2(d) == r) else {
                continue;
            };
            if let Some(cu1) = ed.iter().position(|&d| dofs.u1(d) == c) {
                u1_block[a][cu1] += v;
            } else if let Some(cu2) = ed.iter().position(|&d| dofs.u2(d) == c) {
                u2_block[a][cu2] += v;
            }
        }

        let u1_row0 = [-0.00089271, 0.0002231775, -0.000446355];
        let u1_row2 = [-0.000446355, -0.000446355, -0.00357084];
        let u2_row0 = [0.00178542, -0.000446355, 0.00089271];
        let u2_row2 = [0.00089271, 0.00089271, 0.00714168];
        for j in 0..3 {
            assert_relative_eq!(u1_block[0][j], u1_row0[j], max_relative = 1e-10);
            assert_relative_eq!(u1_block[2][j], u1_row2[j], max_relative = 1e-10);
            assert_relative_eq!(u2_block[0][j], u2_row0[j], max_relative = 1e-10);
            assert_relative_eq!(u2_block[2][j], u2_row2[j], max_relative = 1e-10);
        }
    }

    #[test]
    fn fssa_scales_linearly_and_stays_on_surface_rows() {
        let profile = build_slab_profile(80_000.0, 1000.0, 0.75, 200.0, 5e-8).unwrap();
        let mesh = extrude_mesh(&profile, 8, 3).unwrap();
        let dofs = DofMap {
            velocity: build_scalar_space(&mesh, ElementKind::P2).unwrap(),
            pressure: build_scalar_space(&mesh, ElementKind::P1).unwrap(),
        };
        let consts = PhysicalConstants::default();

        let zero = assemble_fssa_term(&mesh, &dofs, 0.0, 1.0, &consts).unwrap();
        assert!(zero.entries.is_empty());

        let one = assemble_fssa_term(&mesh, &dofs, 0.5, 0.25, &consts).unwrap();
        let two = assemble_fssa_term(&mesh, &dofs, 1.0, 0.25, &consts).unwrap();
        assert_eq!(one.entries.len(), two.entries.len());
        for (&(r1, c1, v1), &(r2, c2, v2)) in one.entries.iter().zip(&two.entries) {
            assert_eq!((r1, c1), (r2, c2));
            assert_relative_eq!(2.0 * v1, v2, max_relative = 1e-14);
        }

        // Every row must be the vertical-momentum row of a surface dof.
        let surface: Vec<usize> = dofs.velocity.surface_dofs.iter().map(|&d| dofs.u2(d)).collect();
        for &(r, _, _) in &one.entries {
            assert!(surface.contains(&r));
        }
    }

    #[test]
    fn fssa_p1_flat_surface_block_is_scaled_mass() {
        // Flat surface: normal (0,1), so the u1 coupling vanishes and the u2
        // block is theta*dt*rho_g times the P1 edge mass matrix.
        let profile = DomainProfile {
            x_min: 0.0,
            x_max: 2.0,
            bed: Arc::new(|_| 0.0),
            surface0: Arc::new(|_| 1.0),
            lateral_bc: LateralBc::NoSlip,
            surface_bc: GeoSurfaceBc::DirichletFixed,
            min_thickness: 0.5,
        };
        let mesh = extrude_mesh(&profile, 2, 1).unwrap();
        let dofs = DofMap {
            velocity: build_scalar_space(&mesh, ElementKind::P1).unwrap(),
            pressure: build_scalar_space(&mesh, ElementKind::P1).unwrap(),
        };
        let consts = PhysicalConstants::default();
        let (theta, dt) = (0.8, 0.1);
        let fssa = assemble_fssa_term(&mesh, &dofs, theta, dt, &consts).unwrap();
        let factor = theta * dt * consts.rho_g;
        let len = 2.0;
        let mut sum_u2 = 0.0;
        for &(r, c, v) in &fssa.entries {
            assert!(r >= dofs.velocity.n_dofs, "row {r} is not a u2 row");
            if c >= dofs.velocity.n_dofs {
                sum_u2 += v;
            } else {
                assert_relative_eq!(v, 0.0, epsilon = 1e-15);
            }
        }
        // Partition of unity: total mass equals the edge length.
        assert_relative_eq!(sum_u2, factor * len, max_relative = 1e-12);
    }

    fn slab_setup(
        n_x: usize,
        n_y: usize,
    ) -> (
        ExtrudedMesh,
        crate::sia::SurfaceFields,
        PhysicalConstants,
        Vec<f64>,
        Vec<f64>,
        f64,
    ) {
        let profile = build_slab_profile(80_000.0, 1000.0, 0.75, 0.0, 5e-8).unwrap();
        let consts = PhysicalConstants::default();
        let state = SurfaceState::from_profile(&profile, n_x).unwrap();
        let mesh = extrude_mesh(&profile, n_x, n_y).unwrap();
        let fields = build_surface_fields(&state).unwrap();
        let (u1s_cf, u2s_cf) = sia_surface_velocity(&fields, &consts);
        let slope = profile.bed_trend_slope();
        (mesh, fields, consts, u1s_cf, u2s_cf, slope)
    }

    #[test]
    fn wsia_periodic_slab_recovers_closed_form_structure() {
        let (mesh, fields, consts, u1s_cf, _, slope) = slab_setup(8, 10);
        let config = FormulationConfig::new(Formulation::WSia);
        let system = assemble_momentum(&mesh, &config, &fields, &consts).unwrap();
        let sol = solve_momentum_system(&mesh, &system).unwrap();

        // Shift invariance: every column sees the same surface speed.
        let u_ref = sol.surface_u1s[0];
        for &u in &sol.surface_u1s {
            assert_relative_eq!(u, u_ref, max_relative = 1e-8);
        }
        // Pressure is exactly hydrostatic (it lies in the discrete space and
        // satisfies every test row, so it is the unique discrete pressure).
        let pdofs = &system.dofs.pressure;
        for v in 0..mesh.vertices.len() {
            let (_, y) = mesh.vertices[v];
            let h = mesh.surface_y[mesh.column_of[v]];
            let expected = consts.rho_g * (h - y);
            assert_relative_eq!(sol.p[pdofs.vertex_dof[v]], expected, epsilon = 1e-7);
        }
        // The vertical velocity is exactly slope * u1 (the pair satisfies the
        // incompressibility rows pointwise on this mesh).
        for (w, u) in sol.surface_u2s.iter().zip(&sol.surface_u1s) {
            assert_relative_eq!(*w, slope * *u, max_relative = 1e-8);
        }
        // And the speed itself approximates the closed form (the vertical
        // P1 resolution limits the match).
        assert_relative_eq!(u_ref, u1s_cf[0], max_relative = 0.03);
    }

    #[test]
    fn wsiastokes_periodic_slab_matches_closed_form() {
        // On the uniform slab the exact solution is vertical shear with
        // u2 = slope * u1; the discrete vertical velocity converges to it as
        // the vertical resolution grows (divergence is only enforced against
        // the pressure tests).
        let mut defects = Vec::new();
        for n_y in [6usize, 12] {
            let (mesh, fields, consts, u1s_cf, _, slope) = slab_setup(8, n_y);
            let config = FormulationConfig::new(Formulation::WSiaStokes);
            let system = assemble_momentum(&mesh, &config, &fields, &consts).unwrap();
            let sol = solve_momentum_system(&mesh, &system).unwrap();

            assert_relative_eq!(sol.surface_u1s[0], u1s_cf[0], max_relative = 0.03);
            let defect = (sol.surface_u2s[0] - slope * sol.surface_u1s[0]).abs()
                / (slope * sol.surface_u1s[0]).abs();
            assert!(defect < 0.10, "u2s defect {defect} too large at n_y={n_y}");
            defects.push(defect);

            // Hydrostatic pressure up to deviatoric corrections ~ slope².
            let pdofs = &system.dofs.pressure;
            let v_mid = mesh.vertex_id(4, 0);
            let (_, y) = mesh.vertices[v_mid];
            let h = mesh.surface_y[4];
            let expected = consts.rho_g * (h - y);
            assert_relative_eq!(sol.p[pdofs.vertex_dof[v_mid]], expected, max_relative = 0.01);
            assert!(sol.divergence_l2.is_finite());
        }
        assert!(
            defects[1] < 0.75 * defects[0],
            "u2s defect did not shrink under refinement: {defects:?}"
        );
    }

    #[test]
    fn wstokes_slab_converges_to_closed_form() {
        let (mesh, fields, consts, u1s_cf, _, _) = slab_setup(6, 6);
        let mut config = FormulationConfig::new(Formulation::WStokes);
        config.picard_max_iter = 80;
        let sol =
            picard_solve_wstokes(&mesh, &config, &fields, &consts, None, PicardViscosity::GlenPowerLaw)
                .unwrap();
        assert!(sol.picard_iterations >= 1);
        assert!(sol.picard_iterations <= 80);
        assert_relative_eq!(sol.surface_u1s[0], u1s_cf[0], max_relative = 0.03);
    }

    #[test]
    fn picard_frozen_viscosity_converges_immediately() {
        let (mesh, fields, consts, _, _, _) = slab_setup(4, 3);
        let config = FormulationConfig::new(Formulation::WStokes);
        let sol = picard_solve_wstokes(
            &mesh,
            &config,
            &fields,
            &consts,
            None,
            PicardViscosity::FrozenConstant(5.0),
        )
        .unwrap();
        // The initial solve already uses the frozen viscosity, so the first
        // loop iteration reproduces it exactly.
        assert_eq!(sol.picard_iterations, 1);

        // Warm start from the converged state: again a single iteration.
        let again = picard_solve_wstokes(
            &mesh,
            &config,
            &fields,
            &consts,
            Some(&sol),
            PicardViscosity::FrozenConstant(5.0),
        )
        .unwrap();
        assert_eq!(again.picard_iterations, 1);
        for (a, b) in again.u1.iter().zip(&sol.u1) {
            assert_relative_eq!(a, b, epsilon = 1e-12, max_relative = 1e-12);
        }
    }

    #[test]
    fn wsia_walled_dome_solves_and_is_antisymmetric() {
        // The walled reduced system needs the lateral pressure completion;
        // this exercises it end to end on a symmetric dome, whose horizontal
        // surface velocity must be antisymmetric about the divide.
        let profile = build_icecap_profile(750_000.0, 3575.0).unwrap();
        let mesh = extrude_mesh(&profile, 16, 6).unwrap();
        let state = SurfaceState::from_profile(&profile, 16).unwrap();
        let fields = build_surface_fields(&state).unwrap();
        let consts = PhysicalConstants::default();
        let config = FormulationConfig::new(Formulation::WSia);
        let system = assemble_momentum(&mesh, &config, &fields, &consts).unwrap();
        let sol = solve_momentum_system(&mesh, &system).unwrap();

        let n = sol.surface_u1s.len();
        let max = sol
            .surface_u1s
            .iter()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(max > 1e-3, "dome surface speeds unexpectedly small: {max}");
        // The triangulation diagonal breaks exact mirror symmetry, so the
        // antisymmetry only holds to discretization accuracy.
        for i in 0..n {
            let a = sol.surface_u1s[i];
            let b = sol.surface_u1s[n - 1 - i];
            assert!(
                (a + b).abs() <= 0.05 * max,
                "u1s not antisymmetric: {a} vs {b} (max {max})"
            );
        }
    }

    #[test]
    fn dirichlet_rows_are_identity_and_viscous_block_symmetric() {
        let (mesh, fields, consts, _, _, _) = slab_setup(4, 3);
        let config = FormulationConfig::new(Formulation::WSiaStokes);
        let system = assemble_momentum(&mesh, &config, &fields, &consts).unwrap();
        let entries = system.matrix.compressed_entries();
        let nv = system.dofs.velocity.n_dofs;

        let mut lookup = HashMap::new();
        for &(r, c, v) in &entries {
            lookup.insert((r, c), v);
        }
        for (d, g) in system.constraints.iter().enumerate() {
            if g.is_some() {
                for &(r, c, v) in &entries {
                    if r == d {
                        assert_eq!(c, d, "constrained row {d} has off-diagonal {c}");
                        assert_relative_eq!(v, 1.0, epsilon = 1e-15);
                    }
                }
            }
        }
        // Velocity-velocity block symmetry.
        for &(r, c, v) in &entries {
            if r < 2 * nv && c < 2 * nv && r != c {
                let vt = lookup.get(&(c, r)).copied().unwrap_or(0.0);
                assert!(
                    (v - vt).abs() <= 1e-10 * v.abs().max(vt.abs()).max(1.0),
                    "asymmetry at ({r},{c}): {v} vs {vt}"
                );
            }
        }
    }

    #[test]
    fn p2p1_reproduces_polynomial_solution_exactly() {
        // u1 = y², u2 = x² (divergence-free), p = x + 2y - 2, constant μ:
        // body force f = (-2μ + 1, -2μ + 2). All boundaries Dirichlet, one
        // pressure dof pinned. P2/P1 with a degree-4 rule represents this
        // exactly, so the discrete solution matches to solver precision.
        let profile = DomainProfile {
            x_min: 0.0,
            x_max: 1.0,
            bed: Arc::new(|_| 0.0),
            surface0: Arc::new(|_| 1.0),
            lateral_bc: LateralBc::NoSlip,
            surface_bc: GeoSurfaceBc::DirichletFixed,
            min_thickness: 0.25,
        };
        let mesh = extrude_mesh(&profile, 4, 4).unwrap();
        let config = FormulationConfig::new(Formulation::WSiaStokes);
        let consts = PhysicalConstants::default();
        let mu = 3.0;
        let velocity = |x: f64, y: f64| (y * y, x * x);
        let pressure = |x: f64, y: f64| x + 2.0 * y - 2.0;
        let force = move |_x: f64, _y: f64| (-2.0 * mu + 1.0, -2.0 * mu + 2.0);
        let overrides = AssemblyOverrides {
            body_force: Some(&force),
            velocity_values: Some(&velocity),
            pressure_values: Some(&pressure),
            constrain_surface_velocity: true,
            pin_pressure_dof: true,
        };
        let system = assemble_momentum_with(
            &mesh,
            &config,
            &consts,
            &ViscosityModel::Constant(mu),
            &overrides,
        )
        .unwrap();
        let sol = solve_momentum_system(&mesh, &system).unwrap();

        let vspace = &system.dofs.velocity;
        for d in 0..vspace.n_dofs {
            let (x, y) = vspace.dof_coords[d];
            assert_relative_eq!(sol.u1[d], y * y, epsilon = 1e-9);
            assert_relative_eq!(sol.u2[d], x * x, epsilon = 1e-9);
        }
        let pspace = &system.dofs.pressure;
        for d in 0..pspace.n_dofs {
            let (x, y) = pspace.dof_coords[d];
            assert_relative_eq!(sol.p[d], pressure(x, y), epsilon = 1e-8);
        }
        assert!(sol.divergence_l2 < 1e-9);
    }

    #[test]
    fn assemble_momentum_rejects_closed_form() {
        let (mesh, fields, consts, _, _, _) = slab_setup(4, 2);
        let config = FormulationConfig::new(Formulation::Sia);
        assert!(assemble_momentum(&mesh, &config, &fields, &consts).is_err());
    }
}
