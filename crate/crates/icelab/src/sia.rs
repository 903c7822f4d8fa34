//! Closed-form shallow-ice viscosity and velocities.
//!
//! Sign conventions: gravity points in −y, pressure is hydrostatic
//! p = ρg·(h−y) ≥ 0 below the surface, and on a downhill slope (∂x h < 0)
//! the horizontal velocity is positive. With S12 = ρg·∂x h·(y−h) the bulk
//! fields are
//!   u1 = ½·A0·(ρg)³·(∂x h)³·[(y−h)⁴ − (b−h)⁴]
//!   u2 = −∫_b^y ∂x u1 dy  (incompressibility, no-slip at the bed)
//! and the surface specializations follow by setting y = h. All expressions
//! are evaluated in thickness-relative variables (ŷ, H) so that periodic
//! domains with a linear bed trend are handled exactly at the seam.

use crate::constants::PhysicalConstants;
use crate::error::{IceLabError, Result};
use crate::fem::{ElementKind, MomentumSolution};
use crate::geometry::ExtrudedMesh;
use crate::sparse::{solve_sparse, CooMatrix};
use crate::surface::{SurfaceBc, SurfaceState};

/// Nodal surface quantities feeding the closed forms: surface and bed
/// heights plus their continuous (L2-projected) derivatives.
#[derive(Debug, Clone)]
pub struct SurfaceFields {
    pub h: Vec<f64>,
    pub dhdx: Vec<f64>,
    pub d2hdx2: Vec<f64>,
    pub b: Vec<f64>,
    pub dbdx: Vec<f64>,
}

impl SurfaceFields {
    pub fn len(&self) -> usize {
        self.h.len()
    }

    pub fn is_empty(&self) -> bool {
        self.h.is_empty()
    }

    pub fn thickness(&self, i: usize) -> f64 {
        self.h[i] - self.b[i]
    }
}

/// L2-project the piecewise-constant P1 element gradient of nodal values
/// back onto the nodes by solving the 1D mass-matrix system. Periodic grids
/// wrap circulantly; Dirichlet grids use one-sided lumped end rows.
pub fn surface_gradient_projection(values: &[f64], dx: f64, bc: SurfaceBc) -> Result<Vec<f64>> {
    let n = values.len();
    if n < 3 {
        return Err(IceLabError::InvalidParameter(format!(
            "gradient projection needs >= 3 nodes, got {n}"
        )));
    }
    if !(dx > 0.0) {
        return Err(IceLabError::InvalidParameter(format!(
            "node spacing must be positive, got {dx}"
        )));
    }
    let mut mass = CooMatrix::with_capacity(n, n, 3 * n);
    let mut rhs = vec![0.0; n];
    match bc {
        SurfaceBc::Periodic => {
            for i in 0..n {
                mass.push(i, (i + n - 1) % n, dx / 6.0);
                mass.push(i, i, 4.0 * dx / 6.0);
                mass.push(i, (i + 1) % n, dx / 6.0);
                rhs[i] = (values[(i + 1) % n] - values[(i + n - 1) % n]) / 2.0;
            }
        }
        SurfaceBc::DirichletFixed => {
            mass.push(0, 0, dx / 2.0);
            rhs[0] = (values[1] - values[0]) / 2.0;
            mass.push(n - 1, n - 1, dx / 2.0);
            rhs[n - 1] = (values[n - 1] - values[n - 2]) / 2.0;
            for i in 1..n - 1 {
                mass.push(i, i - 1, dx / 6.0);
                mass.push(i, i, 4.0 * dx / 6.0);
                mass.push(i, i + 1, dx / 6.0);
                rhs[i] = (values[i + 1] - values[i - 1]) / 2.0;
            }
        }
    }
    let solved = solve_sparse(&mass, &rhs)
        .map_err(|e| IceLabError::Solver(format!("gradient projection mass solve failed: {e}")))?;
    Ok(solved.x)
}

/// Build the complete nodal field set of a surface state. The second
/// derivative is the projected gradient of the projected gradient; periodic
/// grids project the thickness (the periodic part) and add back the linear
/// bed trend analytically.
pub fn build_surface_fields(state: &SurfaceState) -> Result<SurfaceFields> {
    let n = state.n_nodes();
    match state.bc {
        SurfaceBc::Periodic => {
            let eta: Vec<f64> = (0..n).map(|i| state.h[i] - state.bed[i]).collect();
            let mut dhdx = surface_gradient_projection(&eta, state.dx, SurfaceBc::Periodic)?;
            for v in dhdx.iter_mut() {
                *v += state.bed_trend_slope;
            }
            let d2hdx2 = surface_gradient_projection(&dhdx, state.dx, SurfaceBc::Periodic)?;
            let bp: Vec<f64> = (0..n)
                .map(|i| state.bed[i] - state.bed_trend_slope * (state.dx * i as f64))
                .collect();
            let mut dbdx = surface_gradient_projection(&bp, state.dx, SurfaceBc::Periodic)?;
            for v in dbdx.iter_mut() {
                *v += state.bed_trend_slope;
            }
            Ok(SurfaceFields {
                h: state.h.clone(),
                dhdx,
                d2hdx2,
                b: state.bed.clone(),
                dbdx,
            })
        }
        SurfaceBc::DirichletFixed => {
            let dhdx = surface_gradient_projection(&state.h, state.dx, SurfaceBc::DirichletFixed)?;
            let d2hdx2 = surface_gradient_projection(&dhdx, state.dx, SurfaceBc::DirichletFixed)?;
            let dbdx = surface_gradient_projection(&state.bed, state.dx, SurfaceBc::DirichletFixed)?;
            Ok(SurfaceFields {
                h: state.h.clone(),
                dhdx,
                d2hdx2,
                b: state.bed.clone(),
                dbdx,
            })
        }
    }
}

/// Shallow-ice viscosity μ = ½·(A0·(ρg)²·(y−h)²·|∂x h|² + ε)⁻¹ from the
/// depth below the surface and the surface slope.
#[inline]
pub fn sia_viscosity_at(y_minus_h: f64, dhdx: f64, consts: &PhysicalConstants) -> f64 {
    0.5 / (consts.a0 * consts.rho_g * consts.rho_g * y_minus_h * y_minus_h * dhdx * dhdx
        + consts.epsilon_visc)
}

/// Shallow-ice viscosity at height y in column `col` of the field set.
pub fn sia_viscosity(y: f64, col: usize, fields: &SurfaceFields, consts: &PhysicalConstants) -> f64 {
    sia_viscosity_at(y - fields.h[col], fields.dhdx[col], consts)
}

#[inline]
fn velocity_prefactor(consts: &PhysicalConstants) -> f64 {
    0.5 * consts.a0 * consts.rho_g * consts.rho_g * consts.rho_g
}

/// Closed-form bulk velocities at relative height ŷ in a column of
/// thickness t with slopes (hx, hxx, bx). Evaluating in (ŷ, H) keeps the
/// expressions exact across periodic seams with a linear bed trend.
#[inline]
pub fn sia_bulk_velocity_at(
    yhat: f64,
    thickness: f64,
    hx: f64,
    hxx: f64,
    bx: f64,
    consts: &PhysicalConstants,
) -> (f64, f64) {
    let c = velocity_prefactor(consts);
    let t = thickness;
    let t3 = t * t * t;
    let t4 = t3 * t;
    let t5 = t4 * t;
    let ym1 = yhat - 1.0; // (y-h)/H
    let ym1_4 = ym1 * ym1 * ym1 * ym1;
    let ym1_5 = ym1_4 * ym1;
    // u1 = c hx^3 [(y-h)^4 - (b-h)^4]
    let u1 = c * hx * hx * hx * (ym1_4 - 1.0) * t4;
    // u2 = -c { 3 hx^2 hxx [((y-h)^5-(b-h)^5)/5 - (b-h)^4 (y-b)]
    //           - hx^4 [(y-h)^4-(b-h)^4]
    //           - 4 (bx-hx) hx^3 (b-h)^3 (y-b) }
    let term1 = 3.0 * hx * hx * hxx * ((ym1_5 + 1.0) / 5.0 - yhat) * t5;
    let term2 = -hx * hx * hx * hx * (ym1_4 - 1.0) * t4;
    let term3 = 4.0 * (bx - hx) * hx * hx * hx * yhat * t4;
    let u2 = -c * (term1 + term2 + term3);
    (u1, u2)
}

/// Surface specializations of the closed forms:
///   u1s = −½A0(ρg)³·hx³·H⁴
///   u2s = ½A0(ρg)³·[ (12/5)·hx²·hxx·H⁵ + 3·hx⁴·H⁴ − 4·bx·hx³·H⁴ ]
#[inline]
pub fn sia_surface_velocity_at(
    thickness: f64,
    hx: f64,
    hxx: f64,
    bx: f64,
    consts: &PhysicalConstants,
) -> (f64, f64) {
    let c = velocity_prefactor(consts);
    let t = thickness;
    let t4 = t * t * t * t;
    let t5 = t4 * t;
    let hx3 = hx * hx * hx;
    let u1s = -c * hx3 * t4;
    let u2s = c * (2.4 * hx * hx * hxx * t5 + 3.0 * hx * hx3 * t4 - 4.0 * bx * hx3 * t4);
    (u1s, u2s)
}

/// Surface velocities at every node of the field set.
pub fn sia_surface_velocity(
    fields: &SurfaceFields,
    consts: &PhysicalConstants,
) -> (Vec<f64>, Vec<f64>) {
    let n = fields.len();
    let mut u1s = Vec::with_capacity(n);
    let mut u2s = Vec::with_capacity(n);
    for i in 0..n {
        let (a, b) = sia_surface_velocity_at(
            fields.thickness(i),
            fields.dhdx[i],
            fields.d2hdx2[i],
            fields.dbdx[i],
            consts,
        );
        u1s.push(a);
        u2s.push(b);
    }
    (u1s, u2s)
}

/// Map a mesh column index to the field-array index (periodic meshes wrap
/// the last column onto the first).
#[inline]
pub fn field_column(mesh: &ExtrudedMesh, col: usize) -> usize {
    if mesh.periodic && col == mesh.n_x {
        0
    } else {
        col
    }
}

/// Evaluate the closed-form velocity and hydrostatic pressure at every mesh
/// vertex. The returned solution uses the P1 vertex layout.
pub fn sia_velocity_field(
    mesh: &ExtrudedMesh,
    fields: &SurfaceFields,
    consts: &PhysicalConstants,
) -> Result<MomentumSolution> {
    let expected = if mesh.periodic { mesh.n_x } else { mesh.n_x + 1 };
    if fields.len() != expected {
        return Err(IceLabError::InvalidParameter(format!(
            "field arrays have {} entries, mesh needs {expected}",
            fields.len()
        )));
    }
    let nv = mesh.vertices.len();
    let mut u1 = vec![0.0; nv];
    let mut u2 = vec![0.0; nv];
    let mut p = vec![0.0; nv];
    for v in 0..nv {
        let col = field_column(mesh, mesh.column_of[v]);
        let yhat = mesh.reference_fraction[v];
        let t = fields.thickness(col);
        let (a, b) = sia_bulk_velocity_at(
            yhat,
            t,
            fields.dhdx[col],
            fields.d2hdx2[col],
            fields.dbdx[col],
            consts,
        );
        u1[v] = a;
        u2[v] = b;
        p[v] = consts.rho_g * t * (1.0 - yhat);
    }
    let mut surface_u1s = Vec::with_capacity(mesh.n_x + 1);
    let mut surface_u2s = Vec::with_capacity(mesh.n_x + 1);
    for i in 0..=mesh.n_x {
        let v = mesh.vertex_id(i, mesh.n_y);
        surface_u1s.push(u1[v]);
        surface_u2s.push(u2[v]);
    }
    Ok(MomentumSolution {
        element_kind: ElementKind::P1,
        u1,
        u2,
        p,
        surface_u1s,
        surface_u2s,
        divergence_l2: 0.0,
        picard_iterations: 0,
        residual: 0.0,
    })
}
