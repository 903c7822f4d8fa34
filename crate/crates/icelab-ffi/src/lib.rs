//! C ABI for the ice-flow laboratory.
//!
//! Conventions:
//! - Objects are created behind opaque pointers and released with the
//!   matching `*_free` function; every other function only borrows them.
//! - Fallible functions return an [`IcelabStatus`]; on any status other than
//!   `OK` a human-readable message is available from
//!   [`icelab_last_error_message`] until the next failing call on the same
//!   thread. Output pointers are written only on `OK`.
//! - Scalar getters return the value directly and use NaN / 0 to signal a
//!   null handle.
//! - All panics are caught at the boundary and reported as
//!   `ICELAB_STATUS_PANIC`; they never unwind into the caller.

use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

use icelab::cost::{cost_exponent, default_gamma, CostInputs};
use icelab::fem::Formulation;
use icelab::geometry::{
    build_icecap_profile, build_slab_profile, load_cross_section_profile, DomainProfile,
};
use icelab::harness::CoupledRun;
use icelab::stability::{find_max_timestep, von_neumann_bounds, Simulation, VNCoefficients};
use icelab::{IceLabError, PhysicalConstants};

/// Result code returned by every fallible API function.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcelabStatus {
    /// The call succeeded; output pointers hold valid results.
    Ok = 0,
    /// A required pointer argument was null.
    NullPointer = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// Arguments were well-formed but outside the accepted range.
    InvalidArgument = 3,
    /// The computation itself failed (solver breakdown, I/O, ...).
    RuntimeError = 4,
    /// An internal invariant was violated; the library state is still
    /// consistent but the call did nothing.
    Panic = 5,
}

thread_local! {
    static LAST_ERROR: std::cell::RefCell<CString> =
        std::cell::RefCell::new(CString::default());
}

fn set_error(message: &str) {
    let sanitized = message.replace('\0', " ");
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(sanitized).unwrap_or_default();
    });
}

fn fail(status: IcelabStatus, message: &str) -> IcelabStatus {
    set_error(message);
    status
}

fn fail_with(err: IceLabError) -> IcelabStatus {
    let status = match err {
        IceLabError::InvalidParameter(_) | IceLabError::Config(_) => IcelabStatus::InvalidArgument,
        _ => IcelabStatus::RuntimeError,
    };
    fail(status, &err.to_string())
}

/// Run a closure with a panic barrier; panics become `Panic` status.
fn guarded(f: impl FnOnce() -> IcelabStatus) -> IcelabStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".to_string());
            fail(IcelabStatus::Panic, &format!("internal panic: {msg}"))
        }
    }
}

/// Borrow a C string as UTF-8, reporting the appropriate status on failure.
unsafe fn borrow_str<'a>(ptr: *const c_char, what: &str) -> Result<&'a str, IcelabStatus> {
    if ptr.is_null() {
        return Err(fail(IcelabStatus::NullPointer, &format!("{what} is null")));
    }
    CStr::from_ptr(ptr)
        .to_str()
        .map_err(|_| fail(IcelabStatus::InvalidUtf8, &format!("{what} is not valid UTF-8")))
}

/// Message describing the most recent failure on this thread.
///
/// The pointer stays valid until the next failing call on the same thread.
/// Returns an empty string if no call has failed yet.
#[no_mangle]
pub extern "C" fn icelab_last_error_message() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ptr())
}

/// Opaque domain description: bed and initial surface over an interval plus
/// boundary-condition kinds.
pub struct IcelabProfile(DomainProfile);

/// Opaque coupled simulation: a momentum solver attached to a moving
/// free surface.
pub struct IcelabSim(CoupledRun);

/// Create an inclined periodic slab of mean thickness `thickness` (m) over a
/// bed of downhill slope `slope_deg` (degrees), with a Gaussian surface bump
/// of amplitude `bump_amplitude` (m) and decay rate `bump_decay` (1/m^2)
/// centered at mid-domain. `length` is the domain extent in meters.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn icelab_profile_slab(
    length: f64,
    thickness: f64,
    slope_deg: f64,
    bump_amplitude: f64,
    bump_decay: f64,
    out: *mut *mut IcelabProfile,
) -> IcelabStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IcelabStatus::NullPointer, "out is null");
        }
        match build_slab_profile(length, thickness, slope_deg, bump_amplitude, bump_decay) {
            Ok(profile) => {
                *out = Box::into_raw(Box::new(IcelabProfile(profile)));
                IcelabStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Create a symmetric ice cap on a flat bed over x in [-half_length,
/// half_length] (m) with central thickness `thickness` (m), fixed margins,
/// and no-slip lateral boundaries.
///
/// # Safety
/// `out` must point to writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn icelab_profile_icecap(
    half_length: f64,
    thickness: f64,
    out: *mut *mut IcelabProfile,
) -> IcelabStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IcelabStatus::NullPointer, "out is null");
        }
        match build_icecap_profile(half_length, thickness) {
            Ok(profile) => {
                *out = Box::into_raw(Box::new(IcelabProfile(profile)));
                IcelabStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Load a flow-line cross-section from a whitespace-separated text file with
/// columns `x bed surface` (meters; `#` comments allowed). The surface is
/// clamped to at least `min_thickness` (m) above the bed, margins are held
/// fixed, and lateral boundaries are no-slip.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must point to writable
/// storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn icelab_profile_from_file(
    path: *const c_char,
    min_thickness: f64,
    out: *mut *mut IcelabProfile,
) -> IcelabStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IcelabStatus::NullPointer, "out is null");
        }
        let path = match borrow_str(path, "path") {
            Ok(s) => s,
            Err(status) => return status,
        };
        match load_cross_section_profile(path, min_thickness) {
            Ok(profile) => {
                *out = Box::into_raw(Box::new(IcelabProfile(profile)));
                IcelabStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Release a profile. Passing null is a no-op.
///
/// # Safety
/// `profile` must be a pointer previously returned by a profile constructor,
/// not yet freed.
#[no_mangle]
pub unsafe extern "C" fn icelab_profile_free(profile: *mut IcelabProfile) {
    if !profile.is_null() {
        drop(Box::from_raw(profile));
    }
}

/// Create a coupled simulation on `n_x` x `n_y` mesh cells.
///
/// `formulation` selects the momentum balance: `"sia"` (closed-form shallow
/// ice), `"w-sia"` (weak shallow ice), `"w-siastokes"` (linear Stokes with
/// shallow-ice viscosity), or `"w-stokes"` (nonlinear Stokes). `theta` in
/// [0, 1] scales the free-surface stabilization term (0 disables it) and
/// `upwind` selects upwinded advection of the surface.
///
/// # Safety
/// `profile` must be a live profile handle; `formulation` a NUL-terminated
/// string; `out` writable storage for one pointer.
#[no_mangle]
pub unsafe extern "C" fn icelab_sim_new(
    profile: *const IcelabProfile,
    n_x: usize,
    n_y: usize,
    formulation: *const c_char,
    theta: f64,
    upwind: bool,
    out: *mut *mut IcelabSim,
) -> IcelabStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IcelabStatus::NullPointer, "out is null");
        }
        if profile.is_null() {
            return fail(IcelabStatus::NullPointer, "profile is null");
        }
        let name = match borrow_str(formulation, "formulation") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let formulation = match Formulation::parse(name) {
            Ok(f) => f,
            Err(e) => return fail_with(e),
        };
        if !(0.0..=1.0).contains(&theta) {
            return fail(
                IcelabStatus::InvalidArgument,
                &format!("theta must lie in [0, 1], got {theta}"),
            );
        }
        match CoupledRun::new(&(*profile).0, n_x, n_y, formulation, theta, upwind) {
            Ok(run) => {
                *out = Box::into_raw(Box::new(IcelabSim(run)));
                IcelabStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Advance the simulation by one step of `dt` years.
///
/// # Safety
/// `sim` must be a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn icelab_sim_step(sim: *mut IcelabSim, dt: f64) -> IcelabStatus {
    guarded(|| {
        if sim.is_null() {
            return fail(IcelabStatus::NullPointer, "sim is null");
        }
        if !(dt > 0.0) || !dt.is_finite() {
            return fail(
                IcelabStatus::InvalidArgument,
                &format!("dt must be positive and finite, got {dt}"),
            );
        }
        match (*sim).0.advance(dt) {
            Ok(()) => IcelabStatus::Ok,
            Err(e) => fail_with(e),
        }
    })
}

/// Current simulated time in years, or NaN if `sim` is null.
///
/// # Safety
/// `sim` must be null or a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn icelab_sim_time(sim: *const IcelabSim) -> f64 {
    if sim.is_null() {
        return f64::NAN;
    }
    (*sim).0.state.t
}

/// Surface energy (trend-removed integral of squared surface elevation,
/// m^3), or NaN if `sim` is null. Monotone growth of this quantity is the
/// instability signal used by the timestep search.
///
/// # Safety
/// `sim` must be null or a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn icelab_sim_energy(sim: *const IcelabSim) -> f64 {
    if sim.is_null() {
        return f64::NAN;
    }
    (*sim).0.energy()
}

/// Number of surface grid nodes, or 0 if `sim` is null.
///
/// # Safety
/// `sim` must be null or a live simulation handle.
#[no_mangle]
pub unsafe extern "C" fn icelab_sim_n_nodes(sim: *const IcelabSim) -> usize {
    if sim.is_null() {
        return 0;
    }
    (*sim).0.state.n_nodes()
}

/// Copy the surface grid into caller-provided arrays of length `len`, which
/// must be at least `icelab_sim_n_nodes(sim)`. Either destination may be
/// null to skip it: `out_x` receives node coordinates (m), `out_h` surface
/// elevations (m).
///
/// # Safety
/// `sim` must be a live simulation handle; non-null destinations must have
/// space for `len` doubles.
#[no_mangle]
pub unsafe extern "C" fn icelab_sim_surface(
    sim: *const IcelabSim,
    out_x: *mut f64,
    out_h: *mut f64,
    len: usize,
) -> IcelabStatus {
    guarded(|| {
        if sim.is_null() {
            return fail(IcelabStatus::NullPointer, "sim is null");
        }
        let state = &(*sim).0.state;
        let n = state.n_nodes();
        if len < n {
            return fail(
                IcelabStatus::InvalidArgument,
                &format!("destination length {len} is smaller than the {n} surface nodes"),
            );
        }
        if !out_x.is_null() {
            for i in 0..n {
                *out_x.add(i) = state.x0 + state.dx * i as f64;
            }
        }
        if !out_h.is_null() {
            std::ptr::copy_nonoverlapping(state.h.as_ptr(), out_h, n);
        }
        IcelabStatus::Ok
    })
}

/// Release a simulation. Passing null is a no-op.
///
/// # Safety
/// `sim` must be a pointer previously returned by `icelab_sim_new`, not yet
/// freed.
#[no_mangle]
pub unsafe extern "C" fn icelab_sim_free(sim: *mut IcelabSim) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Find the largest energy-stable timestep for fresh simulations configured
/// like `icelab_sim_new`, by doubling expansion from the bracket
/// `(bracket_lo, bracket_hi)` followed by bisection to relative tolerance
/// `rel_tol`, each trial running to `t_final` years. If every timestep up to
/// `cap` is stable, `*out_flagged` is set and `*out_dt_star = cap` is only a
/// lower bound.
///
/// # Safety
/// `profile` must be a live profile handle; `formulation` a NUL-terminated
/// string; `out_dt_star` and `out_flagged` writable or null to skip.
#[no_mangle]
pub unsafe extern "C" fn icelab_find_max_timestep(
    profile: *const IcelabProfile,
    n_x: usize,
    n_y: usize,
    formulation: *const c_char,
    theta: f64,
    upwind: bool,
    t_final: f64,
    bracket_lo: f64,
    bracket_hi: f64,
    rel_tol: f64,
    cap: f64,
    out_dt_star: *mut f64,
    out_flagged: *mut bool,
) -> IcelabStatus {
    guarded(|| {
        if profile.is_null() {
            return fail(IcelabStatus::NullPointer, "profile is null");
        }
        let name = match borrow_str(formulation, "formulation") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let formulation = match Formulation::parse(name) {
            Ok(f) => f,
            Err(e) => return fail_with(e),
        };
        let prof = &(*profile).0;
        let dx = prof.length() / n_x.max(1) as f64;
        let factory = || CoupledRun::new(prof, n_x, n_y, formulation, theta, upwind);
        match find_max_timestep(
            factory,
            dx,
            t_final,
            (bracket_lo, bracket_hi),
            rel_tol,
            cap,
        ) {
            Ok(result) => {
                if !out_dt_star.is_null() {
                    *out_dt_star = result.dt_star;
                }
                if !out_flagged.is_null() {
                    *out_flagged = result.flagged;
                }
                IcelabStatus::Ok
            }
            Err(e) => fail_with(e),
        }
    })
}

/// Analytic timestep bounds of the linearized semi-implicit surface scheme
/// on a uniform slab with mean surface slope `c_alpha` and mean thickness
/// `h_bar` (m) at grid spacing `dx` (m). Writes the advective bound, the
/// diffusive bound (infinity when `fssa` moves diffusion to the implicit
/// side), and their minimum, in years; any output may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn icelab_von_neumann_bounds(
    c_alpha: f64,
    h_bar: f64,
    dx: f64,
    fssa: bool,
    out_advective: *mut f64,
    out_diffusive: *mut f64,
    out_bound: *mut f64,
) -> IcelabStatus {
    guarded(|| {
        if !(c_alpha.is_finite() && h_bar > 0.0 && dx > 0.0) {
            return fail(
                IcelabStatus::InvalidArgument,
                &format!(
                    "need finite c_alpha, positive h_bar and dx; got c_alpha={c_alpha}, \
                     h_bar={h_bar}, dx={dx}"
                ),
            );
        }
        let coeffs = VNCoefficients::for_slab(&PhysicalConstants::default(), c_alpha, h_bar);
        let (adv, diff, bound) = von_neumann_bounds(&coeffs, dx, fssa);
        if !out_advective.is_null() {
            *out_advective = adv;
        }
        if !out_diffusive.is_null() {
            *out_diffusive = diff;
        }
        if !out_bound.is_null() {
            *out_bound = bound;
        }
        IcelabStatus::Ok
    })
}

/// Exponent of the node count in the asymptotic cost model for one
/// formulation/stabilization combination in `d` spatial dimensions (2 or 3),
/// assuming the timestep scales like `dx^gamma` with the variant's default
/// `gamma`.
///
/// # Safety
/// `formulation` must be a NUL-terminated string; `out` writable storage for
/// one double.
#[no_mangle]
pub unsafe extern "C" fn icelab_cost_exponent(
    formulation: *const c_char,
    fssa: bool,
    d: usize,
    out: *mut f64,
) -> IcelabStatus {
    guarded(|| {
        if out.is_null() {
            return fail(IcelabStatus::NullPointer, "out is null");
        }
        let name = match borrow_str(formulation, "formulation") {
            Ok(s) => s,
            Err(status) => return status,
        };
        let formulation = match Formulation::parse(name) {
            Ok(f) => f,
            Err(e) => return fail_with(e),
        };
        if d != 2 && d != 3 {
            return fail(
                IcelabStatus::InvalidArgument,
                &format!("dimension count must be 2 or 3, got {d}"),
            );
        }
        let inputs = CostInputs {
            d,
            gamma: default_gamma(formulation, fssa),
            ..CostInputs::default()
        };
        *out = cost_exponent(formulation, &inputs);
        IcelabStatus::Ok
    })
}
