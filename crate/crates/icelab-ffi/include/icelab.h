/* C interface to the icelab ice-sheet flow laboratory. */

#ifndef ICELAB_H
#define ICELAB_H

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

// Result code returned by every fallible API function.
typedef enum IcelabStatus {
  // The call succeeded; output pointers hold valid results.
  ICELAB_STATUS_OK = 0,
  // A required pointer argument was null.
  ICELAB_STATUS_NULL_POINTER = 1,
  // A string argument was not valid UTF-8.
  ICELAB_STATUS_INVALID_UTF8 = 2,
  // Arguments were well-formed but outside the accepted range.
  ICELAB_STATUS_INVALID_ARGUMENT = 3,
  // The computation itself failed (solver breakdown, I/O, ...).
  ICELAB_STATUS_RUNTIME_ERROR = 4,
  // An internal invariant was violated; the library state is still
  // consistent but the call did nothing.
  ICELAB_STATUS_PANIC = 5,
} IcelabStatus;

// Opaque domain description: bed and initial surface over an interval plus
// boundary-condition kinds.
typedef struct IcelabProfile IcelabProfile;

// Opaque coupled simulation: a momentum solver attached to a moving
// free surface.
typedef struct IcelabSim IcelabSim;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

// Message describing the most recent failure on this thread.
//
// The pointer stays valid until the next failing call on the same thread.
// Returns an empty string if no call has failed yet.
const char *icelab_last_error_message(void);

// Create an inclined periodic slab of mean thickness `thickness` (m) over a
// bed of downhill slope `slope_deg` (degrees), with a Gaussian surface bump
// of amplitude `bump_amplitude` (m) and decay rate `bump_decay` (1/m^2)
// centered at mid-domain. `length` is the domain extent in meters.
//
// # Safety
// `out` must point to writable storage for one pointer.
enum IcelabStatus icelab_profile_slab(double length,
                                      double thickness,
                                      double slope_deg,
                                      double bump_amplitude,
                                      double bump_decay,
                                      struct IcelabProfile **out);

// Create a symmetric ice cap on a flat bed over x in [-half_length,
// half_length] (m) with central thickness `thickness` (m), fixed margins,
// and no-slip lateral boundaries.
//
// # Safety
// `out` must point to writable storage for one pointer.
enum IcelabStatus icelab_profile_icecap(double half_length,
                                        double thickness,
                                        struct IcelabProfile **out);

// Load a flow-line cross-section from a whitespace-separated text file with
// columns `x bed surface` (meters; `#` comments allowed). The surface is
// clamped to at least `min_thickness` (m) above the bed, margins are held
// fixed, and lateral boundaries are no-slip.
//
// # Safety
// `path` must be a NUL-terminated string; `out` must point to writable
// storage for one pointer.
enum IcelabStatus icelab_profile_from_file(const char *path,
                                           double min_thickness,
                                           struct IcelabProfile **out);

// Release a profile. Passing null is a no-op.
//
// # Safety
// `profile` must be a pointer previously returned by a profile constructor,
// not yet freed.
void icelab_profile_free(struct IcelabProfile *profile);

// Create a coupled simulation on `n_x` x `n_y` mesh cells.
//
// `formulation` selects the momentum balance: `"sia"` (closed-form shallow
// ice), `"w-sia"` (weak shallow ice), `"w-siastokes"` (linear Stokes with
// shallow-ice viscosity), or `"w-stokes"` (nonlinear Stokes). `theta` in
// [0, 1] scales the free-surface stabilization term (0 disables it) and
// `upwind` selects upwinded advection of the surface.
//
// # Safety
// `profile` must be a live profile handle; `formulation` a NUL-terminated
// string; `out` writable storage for one pointer.
enum IcelabStatus icelab_sim_new(const struct IcelabProfile *profile,
                                 size_t n_x,
                                 size_t n_y,
                                 const char *formulation,
                                 double theta,
                                 bool upwind,
                                 struct IcelabSim **out);

// Advance the simulation by one step of `dt` years.
//
// # Safety
// `sim` must be a live simulation handle.
enum IcelabStatus icelab_sim_step(struct IcelabSim *sim, double dt);

// Current simulated time in years, or NaN if `sim` is null.
//
// # Safety
// `sim` must be null or a live simulation handle.
double icelab_sim_time(const struct IcelabSim *sim);

// Surface energy (trend-removed integral of squared surface elevation,
// m^3), or NaN if `sim` is null. Monotone growth of this quantity is the
// instability signal used by the timestep search.
//
// # Safety
// `sim` must be null or a live simulation handle.
double icelab_sim_energy(const struct IcelabSim *sim);

// Number of surface grid nodes, or 0 if `sim` is null.
//
// # Safety
// `sim` must be null or a live simulation handle.
size_t icelab_sim_n_nodes(const struct IcelabSim *sim);

// Copy the surface grid into caller-provided arrays of length `len`, which
// must be at least `icelab_sim_n_nodes(sim)`. Either destination may be
// null to skip it: `out_x` receives node coordinates (m), `out_h` surface
// elevations (m).
//
// # Safety
// `sim` must be a live simulation handle; non-null destinations must have
// space for `len` doubles.
enum IcelabStatus icelab_sim_surface(const struct IcelabSim *sim,
                                     double *out_x,
                                     double *out_h,
                                     size_t len);

// Release a simulation. Passing null is a no-op.
//
// # Safety
// `sim` must be a pointer previously returned by `icelab_sim_new`, not yet
// freed.
void icelab_sim_free(struct IcelabSim *sim);

// Find the largest energy-stable timestep for fresh simulations configured
// like `icelab_sim_new`, by doubling expansion from the bracket
// `(bracket_lo, bracket_hi)` followed by bisection to relative tolerance
// `rel_tol`, each trial running to `t_final` years. If every timestep up to
// `cap` is stable, `*out_flagged` is set and `*out_dt_star = cap` is only a
// lower bound.
//
// # Safety
// `profile` must be a live profile handle; `formulation` a NUL-terminated
// string; `out_dt_star` and `out_flagged` writable or null to skip.
enum IcelabStatus icelab_find_max_timestep(const struct IcelabProfile *profile,
                                           size_t n_x,
                                           size_t n_y,
                                           const char *formulation,
                                           double theta,
                                           bool upwind,
                                           double t_final,
                                           double bracket_lo,
                                           double bracket_hi,
                                           double rel_tol,
                                           double cap,
                                           double *out_dt_star,
                                           bool *out_flagged);

// Analytic timestep bounds of the linearized semi-implicit surface scheme
// on a uniform slab with mean surface slope `c_alpha` and mean thickness
// `h_bar` (m) at grid spacing `dx` (m). Writes the advective bound, the
// diffusive bound (infinity when `fssa` moves diffusion to the implicit
// side), and their minimum, in years; any output may be null to skip.
enum IcelabStatus icelab_von_neumann_bounds(double c_alpha,
                                            double h_bar,
                                            double dx,
                                            bool fssa,
                                            double *out_advective,
                                            double *out_diffusive,
                                            double *out_bound);

// Exponent of the node count in the asymptotic cost model for one
// formulation/stabilization combination in `d` spatial dimensions (2 or 3),
// assuming the timestep scales like `dx^gamma` with the variant's default
// `gamma`.
//
// # Safety
// `formulation` must be a NUL-terminated string; `out` writable storage for
// one double.
enum IcelabStatus icelab_cost_exponent(const char *formulation, bool fssa, size_t d, double *out);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* ICELAB_H */
