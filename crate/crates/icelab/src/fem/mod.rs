//! Finite-element momentum solvers on extruded triangle meshes.
//!
//! Four momentum balances share one assembly core:
//!
//! * `Sia` — closed-form vertical-shear solution, no linear solve (handled in
//!   [`crate::sia`]; requesting an element pair for it is an error).
//! * `WSia` — reduced weak form on equal-order P1/P1: vertical shear only in
//!   the horizontal test equation, hydrostatic balance in the vertical one,
//!   with the pressure made explicit on the surface (and, on non-periodic
//!   meshes, along the lateral walls, where the discrete reduced system is
//!   otherwise rank-deficient by one pressure mode).
//! * `WSiaStokes` — full linear Stokes operator on Taylor–Hood P2/P1 with the
//!   viscosity frozen from the vertical-shear closure.
//! * `WStokes` — nonlinear Glen-law Stokes on P2/P1, solved by Picard
//!   iteration on the effective viscosity.
//!
//! Assembly runs sequentially per system; concurrency belongs to the callers
//! that run independent systems in parallel.

pub mod assemble;
pub mod quadrature;
pub mod space;

pub use assemble::{
    assemble_fssa_term, assemble_momentum, assemble_momentum_with, divergence_l2,
    AssemblyOverrides, DofMap, LinearSystem, ViscosityModel,
};
pub use space::{build_scalar_space, ElementKind, ScalarSpace};

use crate::constants::PhysicalConstants;
use crate::error::{IceLabError, Result};
use crate::geometry::ExtrudedMesh;
use crate::sia::{sia_velocity_field, SurfaceFields};
use crate::sparse::solve_sparse;

/// Momentum-balance formulations ordered from cheapest to most complete.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Formulation {
    /// Closed-form shallow-ice velocities (no linear algebra).
    Sia,
    /// Weak shallow-ice system on P1/P1.
    WSia,
    /// Linear Stokes with shallow-ice viscosity on P2/P1.
    WSiaStokes,
    /// Nonlinear Glen-law Stokes on P2/P1.
    WStokes,
}

impl Formulation {
    /// Canonical lowercase name used by the CLI and output files.
    pub fn name(self) -> &'static str {
        match self {
            Formulation::Sia => "sia",
            Formulation::WSia => "w-sia",
            Formulation::WSiaStokes => "w-siastokes",
            Formulation::WStokes => "w-stokes",
        }
    }

    /// Parse a formulation name (canonical names plus undecorated aliases).
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().replace('_', "-").as_str() {
            "sia" => Ok(Formulation::Sia),
            "w-sia" | "wsia" => Ok(Formulation::WSia),
            "w-siastokes" | "wsiastokes" | "w-sia-stokes" => Ok(Formulation::WSiaStokes),
            "w-stokes" | "wstokes" => Ok(Formulation::WStokes),
            other => Err(IceLabError::Config(format!(
                "unknown formulation {other:?}; expected sia, w-sia, w-siastokes, or w-stokes"
            ))),
        }
    }

    /// The (velocity, pressure) element pair each weak formulation is defined
    /// on. `None` for the closed-form solver, which assembles nothing.
    pub fn element_pair(self) -> Option<(ElementKind, ElementKind)> {
        match self {
            Formulation::Sia => None,
            Formulation::WSia => Some((ElementKind::P1, ElementKind::P1)),
            Formulation::WSiaStokes | Formulation::WStokes => {
                Some((ElementKind::P2, ElementKind::P1))
            }
        }
    }
}

/// Everything a momentum solve needs besides geometry and surface fields.
#[derive(Debug, Clone)]
pub struct FormulationConfig {
    pub formulation: Formulation,
    /// Velocity/pressure pair. `None` selects the pair forced by the
    /// formulation; an explicit mismatching pair is rejected.
    pub element_pair: Option<(ElementKind, ElementKind)>,
    /// Free-surface stabilization weight (0 disables the term).
    pub fssa_theta: f64,
    /// Timestep the stabilization term is scaled with; must be positive
    /// whenever `fssa_theta > 0`.
    pub fssa_dt: f64,
    /// Relative velocity-increment tolerance for the Picard loop.
    pub picard_tol: f64,
    /// Iteration cap for the Picard loop.
    pub picard_max_iter: usize,
}

impl FormulationConfig {
    pub fn new(formulation: Formulation) -> Self {
        FormulationConfig {
            formulation,
            element_pair: None,
            fssa_theta: 0.0,
            fssa_dt: 0.0,
            picard_tol: 1e-6,
            picard_max_iter: 50,
        }
    }

    /// Enable the free-surface stabilization term with weight `theta` and
    /// timestep `dt`.
    pub fn with_fssa(mut self, theta: f64, dt: f64) -> Self {
        self.fssa_theta = theta;
        self.fssa_dt = dt;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !self.fssa_theta.is_finite() || self.fssa_theta < 0.0 {
            return Err(IceLabError::InvalidParameter(format!(
                "fssa_theta must be finite and non-negative, got {}",
                self.fssa_theta
            )));
        }
        if self.fssa_theta > 0.0 && !(self.fssa_dt > 0.0) {
            return Err(IceLabError::InvalidParameter(format!(
                "fssa_dt must be positive when fssa_theta > 0, got {}",
                self.fssa_dt
            )));
        }
        if !(self.picard_tol > 0.0) {
            return Err(IceLabError::InvalidParameter(format!(
                "picard_tol must be positive, got {}",
                self.picard_tol
            )));
        }
        if self.picard_max_iter == 0 {
            return Err(IceLabError::InvalidParameter(
                "picard_max_iter must be at least 1".into(),
            ));
        }
        match (self.formulation.element_pair(), self.element_pair) {
            (_, None) => Ok(()),
            (None, Some(_)) => Err(IceLabError::Config(format!(
                "formulation {} does not assemble elements",
                self.formulation.name()
            ))),
            (Some(forced), Some(requested)) if forced == requested => Ok(()),
            (Some(forced), Some(requested)) => Err(IceLabError::Config(format!(
                "formulation {} requires the {:?}/{:?} pair, got {:?}/{:?}",
                self.formulation.name(),
                forced.0,
                forced.1,
                requested.0,
                requested.1
            ))),
        }
    }

    /// The element pair actually used for assembly.
    pub fn resolved_elements(&self) -> Result<(ElementKind, ElementKind)> {
        self.validate()?;
        self.formulation.element_pair().ok_or_else(|| {
            IceLabError::Config(format!(
                "formulation {} has no finite-element system",
                self.formulation.name()
            ))
        })
    }
}

/// A velocity/pressure field over one mesh, plus solve diagnostics.
#[derive(Debug, Clone)]
pub struct MomentumSolution {
    /// Layout of the velocity vectors (P1: vertex dofs; P2: vertices plus
    /// edge midpoints).
    pub element_kind: ElementKind,
    pub u1: Vec<f64>,
    pub u2: Vec<f64>,
    /// Pressure in the P1 vertex layout.
    pub p: Vec<f64>,
    /// Horizontal velocity at the surface vertices, ascending x, one entry
    /// per mesh column (length `n_x + 1`).
    pub surface_u1s: Vec<f64>,
    /// Vertical velocity at the surface vertices.
    pub surface_u2s: Vec<f64>,
    /// L2 norm of the velocity divergence over the mesh.
    pub divergence_l2: f64,
    /// Picard iterations performed (0 for linear and closed-form solves).
    pub picard_iterations: usize,
    /// Relative residual of the last linear solve.
    pub residual: f64,
}

/// Read the surface-vertex traces out of full velocity dof vectors.
pub fn extract_surface_velocities(
    u1: &[f64],
    u2: &[f64],
    space: &ScalarSpace,
) -> (Vec<f64>, Vec<f64>) {
    let u1s = space.surface_vertex_dofs.iter().map(|&d| u1[d]).collect();
    let u2s = space.surface_vertex_dofs.iter().map(|&d| u2[d]).collect();
    (u1s, u2s)
}

/// Solve an assembled momentum system and package the solution.
pub fn solve_momentum_system(
    mesh: &ExtrudedMesh,
    system: &LinearSystem,
) -> Result<MomentumSolution> {
    let solve = solve_sparse(&system.matrix, &system.rhs)?;
    let nv = system.dofs.velocity.n_dofs;
    let np = system.dofs.pressure.n_dofs;
    let u1 = solve.x[..nv].to_vec();
    let u2 = solve.x[nv..2 * nv].to_vec();
    let p = solve.x[2 * nv..2 * nv + np].to_vec();
    for (name, field) in [("u1", &u1), ("u2", &u2), ("p", &p)] {
        if field.iter().any(|v| !v.is_finite()) {
            return Err(IceLabError::Solver(format!(
                "momentum solve produced non-finite {name}"
            )));
        }
    }
    let (surface_u1s, surface_u2s) = extract_surface_velocities(&u1, &u2, &system.dofs.velocity);
    let div = divergence_l2(mesh, &system.dofs.velocity, &u1, &u2)?;
    Ok(MomentumSolution {
        element_kind: system.dofs.velocity.kind,
        u1,
        u2,
        p,
        surface_u1s,
        surface_u2s,
        divergence_l2: div,
        picard_iterations: 0,
        residual: solve.residual,
    })
}

/// Viscosity iterate used inside the Picard loop.
#[derive(Debug, Clone, Copy)]
pub enum PicardViscosity {
    /// Glen-law effective viscosity from the previous velocity iterate.
    GlenPowerLaw,
    /// Frozen constant viscosity (the loop becomes linear; used by tests).
    FrozenConstant(f64),
}

/// Solve the nonlinear Stokes system by Picard iteration on the viscosity.
///
/// Without a warm start the initial iterate is the linear Stokes solve with
/// the vertical-shear viscosity (for the frozen-constant variant, with that
/// constant, which makes the loop converge in exactly one iteration). Returns
/// `NonConvergence` with the last relative increment if the cap is reached.
pub fn picard_solve_wstokes(
    mesh: &ExtrudedMesh,
    config: &FormulationConfig,
    fields: &SurfaceFields,
    consts: &PhysicalConstants,
    warm_start: Option<&MomentumSolution>,
    viscosity: PicardViscosity,
) -> Result<MomentumSolution> {
    config.validate()?;
    if config.formulation != Formulation::WStokes {
        return Err(IceLabError::Config(format!(
            "picard solve expects the w-stokes formulation, got {}",
            config.formulation.name()
        )));
    }
    let overrides = AssemblyOverrides::default();

    let mut current = match warm_start {
        Some(sol) => {
            if sol.element_kind != ElementKind::P2 {
                return Err(IceLabError::InvalidParameter(
                    "warm start for the nonlinear solve must use the P2 layout".into(),
                ));
            }
            sol.clone()
        }
        None => {
            let model = match viscosity {
                PicardViscosity::GlenPowerLaw => ViscosityModel::SiaFields(fields),
                PicardViscosity::FrozenConstant(mu) => ViscosityModel::Constant(mu),
            };
            let system = assemble_momentum_with(mesh, config, consts, &model, &overrides)?;
            solve_momentum_system(mesh, &system)?
        }
    };

    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut last_increment = f64::INFINITY;
    for iter in 1..=config.picard_max_iter {
        let model = match viscosity {
            PicardViscosity::GlenPowerLaw => ViscosityModel::PowerLaw {
                u1: &current.u1,
                u2: &current.u2,
            },
            PicardViscosity::FrozenConstant(mu) => ViscosityModel::Constant(mu),
        };
        let system = assemble_momentum_with(mesh, config, consts, &model, &overrides)?;
        let mut next = solve_momentum_system(mesh, &system)?;

        let mut diff2 = 0.0;
        for k in 0..next.u1.len() {
            let d1 = next.u1[k] - current.u1[k];
            let d2 = next.u2[k] - current.u2[k];
            diff2 += d1 * d1 + d2 * d2;
        }
        let scale = (norm(&next.u1).powi(2) + norm(&next.u2).powi(2)).sqrt();
        last_increment = if scale > 0.0 {
            diff2.sqrt() / scale
        } else {
            diff2.sqrt()
        };
        next.picard_iterations = iter;
        current = next;
        if last_increment < config.picard_tol {
            return Ok(current);
        }
    }
    Err(IceLabError::NonConvergence {
        iterations: config.picard_max_iter,
        residual: last_increment,
    })
}

/// One-stop velocity computation for the coupled stepper: dispatches on the
/// formulation, reusing `warm_start` where the solver can exploit it.
pub fn compute_velocity(
    mesh: &ExtrudedMesh,
    config: &FormulationConfig,
    fields: &SurfaceFields,
    consts: &PhysicalConstants,
    warm_start: Option<&MomentumSolution>,
) -> Result<MomentumSolution> {
    config.validate()?;
    match config.formulation {
        Formulation::Sia => {
            let mut sol = sia_velocity_field(mesh, fields, consts)?;
            // The closed-form field is stored per mesh vertex; fold the
            // periodic seam into the dof layout for the divergence norm.
            let space = build_scalar_space(mesh, ElementKind::P1)?;
            let mut u1 = vec![0.0; space.n_dofs];
            let mut u2 = vec![0.0; space.n_dofs];
            for v in 0..mesh.vertices.len() {
                u1[space.vertex_dof[v]] = sol.u1[v];
                u2[space.vertex_dof[v]] = sol.u2[v];
            }
            sol.divergence_l2 = divergence_l2(mesh, &space, &u1, &u2)?;
            Ok(sol)
        }
        Formulation::WSia | Formulation::WSiaStokes => {
            let system = assemble_momentum(mesh, config, fields, consts)?;
            solve_momentum_system(mesh, &system)
        }
        Formulation::WStokes => picard_solve_wstokes(
            mesh,
            config,
            fields,
            consts,
            warm_start,
            PicardViscosity::GlenPowerLaw,
        ),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formulation_names_round_trip() {
        for f in [
            Formulation::Sia,
            Formulation::WSia,
            Formulation::WSiaStokes,
            Formulation::WStokes,
        ] {
            assert_eq!(Formulation::parse(f.name()).unwrap(), f);
        }
        assert_eq!(Formulation::parse("W_Stokes").unwrap(), Formulation::WStokes);
        assert!(Formulation::parse("stokes-ish").is_err());
    }

    #[test]
    fn element_pairs_are_forced() {
        assert_eq!(Formulation::Sia.element_pair(), None);
        assert_eq!(
            Formulation::WSia.element_pair(),
            Some((ElementKind::P1, ElementKind::P1))
        );
        assert_eq!(
            Formulation::WStokes.element_pair(),
            Some((ElementKind::P2, ElementKind::P1))
        );

        let mut config = FormulationConfig::new(Formulation::WSiaStokes);
        config.element_pair = Some((ElementKind::P2, ElementKind::P1));
        assert!(config.validate().is_ok());
        config.element_pair = Some((ElementKind::P1, ElementKind::P1));
        assert!(config.validate().is_err());

        let mut sia = FormulationConfig::new(Formulation::Sia);
        assert!(sia.validate().is_ok());
        sia.element_pair = Some((ElementKind::P1, ElementKind::P1));
        assert!(sia.validate().is_err());
    }

    #[test]
    fn fssa_requires_timestep() {
        let config = FormulationConfig::new(Formulation::WSiaStokes).with_fssa(1.0, 0.0);
        assert!(config.validate().is_err());
        let config = FormulationConfig::new(Formulation::WSiaStokes).with_fssa(1.0, 0.5);
        assert!(config.validate().is_ok());
    }
}
