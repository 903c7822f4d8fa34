//! Empirical largest-stable-timestep search and the linearized Fourier
//! predictor for the coupled velocity / free-surface stepper.
//!
//! The empirical side drives any [`Simulation`] through repeated runs,
//! bisecting on the timestep until the largest value passing the discrete
//! energy criterion is bracketed.  The analytic side evaluates the
//! linearization of the coupled system about a uniform slab, whose Fourier
//! symbol yields closed-form advective and diffusive timestep bounds.

use crate::constants::PhysicalConstants;
use crate::error::{IceLabError, Result};

/// Relative slack applied to the per-step energy comparison, scaled by the
/// initial energy.  Absorbs roundoff in otherwise energy-neutral steps.
pub const ENERGY_SLACK_REL: f64 = 1e-12;

/// A time-steppable system with a scalar energy used as the stability
/// criterion.  One instance represents one run; restarting requires a fresh
/// instance.
pub trait Simulation {
    /// Surface energy `int h^2 dx` (trapezoidal in the drivers); any
    /// consistent monotone-respecting quadrature qualifies.
    fn energy(&self) -> f64;

    /// Advance the coupled state by one step of size `dt` (years).
    fn step(&mut self, dt: f64) -> Result<()>;
}

/// Verdict of a single fixed-timestep run.
#[derive(Debug, Clone)]
pub enum RunOutcome {
    /// Every step kept the energy non-increasing (within slack).
    Stable,
    /// Energy rose at step `step` (1-based) from `before` to `after`.
    EnergyViolation { step: usize, before: f64, after: f64 },
    /// The solver failed or produced a non-finite energy at step `step`;
    /// counted as instability but reported distinctly.
    SolverFailure { step: usize, message: String },
}

impl RunOutcome {
    /// True only for the [`RunOutcome::Stable`] verdict.
    pub fn is_stable(&self) -> bool {
        matches!(self, RunOutcome::Stable)
    }

    /// First step index at which the criterion failed, if any.
    pub fn violated_step(&self) -> Option<usize> {
        match self {
            RunOutcome::Stable => None,
            RunOutcome::EnergyViolation { step, .. } => Some(*step),
            RunOutcome::SolverFailure { step, .. } => Some(*step),
        }
    }
}

/// Run `sim` for `ceil(t_final / dt)` steps of size `dt`, failing at the
/// first step whose energy exceeds the previous step's energy by more than
/// `1e-12` of the initial energy.  Solver errors and non-finite energies also
/// fail the run.
pub fn energy_stable_run<S: Simulation>(sim: &mut S, dt: f64, t_final: f64) -> RunOutcome {
    let e0 = sim.energy();
    if !e0.is_finite() {
        return RunOutcome::SolverFailure {
            step: 0,
            message: format!("initial energy is not finite: {e0}"),
        };
    }
    let slack = ENERGY_SLACK_REL * e0.abs();
    let n_steps = (t_final / dt).ceil().max(1.0) as usize;
    let mut prev = e0;
    for k in 1..=n_steps {
        if let Err(err) = sim.step(dt) {
            return RunOutcome::SolverFailure {
                step: k,
                message: err.to_string(),
            };
        }
        let e = sim.energy();
        if !e.is_finite() {
            return RunOutcome::SolverFailure {
                step: k,
                message: format!("energy is not finite: {e}"),
            };
        }
        if e > prev + slack {
            return RunOutcome::EnergyViolation {
                step: k,
                before: prev,
                after: e,
            };
        }
        prev = e;
    }
    RunOutcome::Stable
}

/// Outcome of a largest-stable-timestep search at one resolution.
#[derive(Debug, Clone)]
pub struct StabilityResult {
    /// Horizontal mesh spacing of the runs, meters.
    pub dx: f64,
    /// Largest timestep (years) found to satisfy the energy criterion.
    pub dt_star: f64,
    /// Number of bisection iterations performed after bracketing.
    pub bisection_iterations: usize,
    /// Final bracket (stable lo, unstable hi) in years; `hi` equals the cap
    /// when the search was flagged.
    pub bracket: (f64, f64),
    /// First failing step of the run at the bracket's `hi` (diagnostic).
    pub violated_step: Option<usize>,
    /// True when every tested timestep up to the cap was stable, so
    /// `dt_star` is only a lower bound ("unbounded within cap").
    pub flagged: bool,
}

/// Find the largest energy-stable timestep by doubling expansion followed by
/// bisection.
///
/// `factory` builds a fresh simulation for each trial run.  `bracket.0` must
/// be stable; `bracket.1` is doubled until an unstable timestep is found or
/// `cap` is exceeded, in which case the result is flagged with
/// `dt_star = cap`.  Bisection stops once `(hi - lo)/lo < rel_tol`, returning
/// the last stable `lo`.
pub fn find_max_timestep<S, F>(
    factory: F,
    dx: f64,
    t_final: f64,
    bracket: (f64, f64),
    rel_tol: f64,
    cap: f64,
) -> Result<StabilityResult>
where
    S: Simulation,
    F: Fn() -> Result<S>,
{
    let (lo0, hi0) = bracket;
    if !(lo0 > 0.0 && hi0 > lo0 && rel_tol > 0.0 && cap >= hi0) {
        return Err(IceLabError::InvalidParameter(format!(
            "need 0 < lo < hi <= cap and rel_tol > 0, got lo={lo0}, hi={hi0}, cap={cap}, rel_tol={rel_tol}"
        )));
    }
    let probe = |dt: f64| -> Result<RunOutcome> {
        let mut sim = factory()?;
        Ok(energy_stable_run(&mut sim, dt, t_final))
    };

    if !probe(lo0)?.is_stable() {
        return Err(IceLabError::Bracket(format!(
            "lower bracket dt = {lo0} yr is already unstable"
        )));
    }

    // Expansion: double hi until a run fails or the cap is passed.
    let mut lo = lo0;
    let mut hi = hi0;
    let mut violated_step;
    loop {
        let outcome = probe(hi)?;
        if let Some(step) = outcome.violated_step() {
            violated_step = Some(step);
            break;
        }
        lo = hi;
        if hi >= cap {
            return Ok(StabilityResult {
                dx,
                dt_star: cap,
                bisection_iterations: 0,
                bracket: (lo, cap),
                violated_step: None,
                flagged: true,
            });
        }
        hi = (hi * 2.0).min(cap);
    }

    // Bisection on (stable lo, unstable hi).
    let mut iterations = 0usize;
    while (hi - lo) / lo >= rel_tol {
        let mid = 0.5 * (lo + hi);
        let outcome = probe(mid)?;
        match outcome.violated_step() {
            None => lo = mid,
            Some(step) => {
                hi = mid;
                violated_step = Some(step);
            }
        }
        iterations += 1;
    }

    Ok(StabilityResult {
        dx,
        dt_star: lo,
        bisection_iterations: iterations,
        bracket: (lo, hi),
        violated_step,
        flagged: false,
    })
}

/// Least-squares power-law fit `dt_star = C * dx^p` in log10-log10 space.
#[derive(Debug, Clone)]
pub struct ScalingFit {
    /// The fitted `(log10 dx, log10 dt_star)` pairs.
    pub points: Vec<(f64, f64)>,
    /// Slope of the fit: the scaling exponent `p`.
    pub p: f64,
    /// Intercept of the fit: `log10 C`.
    pub intercept: f64,
    /// Euclidean norm of the fit residual.
    pub residual: f64,
}

impl ScalingFit {
    /// The multiplicative prefactor `C = 10^intercept`.
    pub fn prefactor(&self) -> f64 {
        10f64.powf(self.intercept)
    }
}

/// Ordinary least squares on `(log10 dx, log10 dt_star)` over the sweep.
/// Requires at least three results with distinct spacings.
pub fn fit_scaling_exponent(results: &[StabilityResult]) -> Result<ScalingFit> {
    let points: Vec<(f64, f64)> = results
        .iter()
        .map(|r| (r.dx.log10(), r.dt_star.log10()))
        .collect();
    if points.len() < 3 {
        return Err(IceLabError::Data(format!(
            "scaling fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    let mut dxs: Vec<f64> = results.iter().map(|r| r.dx).collect();
    dxs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if dxs.windows(2).any(|w| w[0] == w[1]) {
        return Err(IceLabError::Data(
            "scaling fit needs distinct dx values".into(),
        ));
    }
    let n = points.len() as f64;
    let mean_x = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mean_x).powi(2)).sum();
    let sxy: f64 = points
        .iter()
        .map(|p| (p.0 - mean_x) * (p.1 - mean_y))
        .sum();
    let p = sxy / sxx;
    let intercept = mean_y - p * mean_x;
    let residual = points
        .iter()
        .map(|&(x, y)| (y - (p * x + intercept)).powi(2))
        .sum::<f64>()
        .sqrt();
    Ok(ScalingFit {
        points,
        p,
        intercept,
        residual,
    })
}

/// Coefficients of the linearized surface evolution about a uniform slab:
/// `d/dt d_hat - C1 dx d_hat - C2 dx d = C3 dxx d`, where `d_hat` is the
/// implicitly handled surface perturbation and `d` the explicitly handled
/// velocity contribution.  All three are stored as magnitudes; the advection
/// coefficients act with a negative sign, which the amplification factor
/// accounts for (the moduli are sign-insensitive).
#[derive(Debug, Clone, Copy)]
pub struct VNCoefficients {
    /// Magnitude of the implicit advection coefficient, m/yr.
    pub c1: f64,
    /// Magnitude of the explicit advection coefficient, m/yr; equals `3*c1`.
    pub c2: f64,
    /// Diffusion coefficient, m^2/yr.
    pub c3: f64,
    /// Mean surface slope magnitude (dimensionless).
    pub c_alpha: f64,
    /// Mean ice thickness, meters.
    pub h_bar: f64,
}

impl VNCoefficients {
    /// Evaluate the slab linearization coefficients
    /// `C1 = (1/2) A0 (rho g)^3 C_alpha^3 H^4`, `C2 = 3 C1`,
    /// `C3 = (6/5) A0 (rho g)^3 C_alpha^2 H^5` for mean slope `c_alpha` and
    /// mean thickness `h_bar`.
    pub fn for_slab(consts: &PhysicalConstants, c_alpha: f64, h_bar: f64) -> Self {
        let ca = c_alpha.abs();
        let base = consts.a0 * consts.rho_g.powi(3);
        let c1 = 0.5 * base * ca.powi(3) * h_bar.powi(4);
        VNCoefficients {
            c1,
            c2: 3.0 * c1,
            c3: 1.2 * base * ca.powi(2) * h_bar.powi(5),
            c_alpha: ca,
            h_bar,
        }
    }
}

/// Analytic timestep bounds `(dt_advective, dt_diffusive, dt_bound)` in
/// years from the Fourier symbol of the linearized scheme.
///
/// Without the free-surface stabilization the explicit advection and
/// diffusion terms impose `dt <= 2 dx / |C2|` and `dt < 0.5 dx^2 / C3`, and
/// the binding constraint is their minimum.  With the stabilization the
/// diffusion term moves to the implicit side, leaving only the linear bound
/// `dt <= dx / |C2|`.
pub fn von_neumann_bounds(coeffs: &VNCoefficients, dx: f64, fssa: bool) -> (f64, f64, f64) {
    if fssa {
        let dt_adv = dx / coeffs.c2;
        (dt_adv, f64::INFINITY, dt_adv)
    } else {
        let dt_adv = 2.0 * dx / coeffs.c2;
        let dt_diff = 0.5 * dx * dx / coeffs.c3;
        (dt_adv, dt_diff, dt_adv.min(dt_diff))
    }
}

/// Modulus of the per-step Fourier amplification factor at wavenumber
/// `n` (rad/m, with `n*dx` in `(0, pi]`).
///
/// Without stabilization the diffusion and explicit advection sit in the
/// numerator and the implicit advection in the denominator:
/// `|1 - dt C3 s2 + i dt C2 s1| / |1 - i dt C1 s1|`.  With stabilization the
/// diffusion term joins the denominator:
/// `|1 + i dt C2 s1| / |1 + dt C3 s2 - i dt C1 s1|`.  Here
/// `s1 = sin(n dx)/dx` and `s2 = 4 sin^2(n dx / 2)/dx^2` are the centered
/// first- and second-difference symbols.
pub fn amplification_factor(
    coeffs: &VNCoefficients,
    dx: f64,
    dt: f64,
    wavenumber: f64,
    fssa: bool,
) -> f64 {
    let phi = wavenumber * dx;
    let s1 = phi.sin() / dx;
    let s2 = 4.0 * (0.5 * phi).sin().powi(2) / (dx * dx);
    if fssa {
        let num = (1.0f64).hypot(dt * coeffs.c2 * s1);
        let den = (1.0 + dt * coeffs.c3 * s2).hypot(dt * coeffs.c1 * s1);
        num / den
    } else {
        let num = (1.0 - dt * coeffs.c3 * s2).hypot(dt * coeffs.c2 * s1);
        let den = (1.0f64).hypot(dt * coeffs.c1 * s1);
        num / den
    }
}
