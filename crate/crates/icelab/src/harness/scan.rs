//! Largest-stable-timestep sweeps over mesh resolutions.

use rayon::prelude::*;

use crate::constants::PhysicalConstants;
use crate::error::{IceLabError, Result};
use crate::fem::Formulation;
use crate::geometry::DomainProfile;
use crate::stability::{
    find_max_timestep, fit_scaling_exponent, ScalingFit, StabilityResult, VNCoefficients,
};

use super::coupled::CoupledRun;

/// Search controls for one sweep.  Unset fields fall back to
/// per-formulation heuristics.
#[derive(Debug, Clone, Copy)]
pub struct DtScanParams {
    /// Initial stable lower bracket, years (heuristic seed when `None`).
    pub lo: Option<f64>,
    /// Relative bracket width at which bisection stops.
    pub rel_tol: f64,
    /// Largest timestep ever probed, years.
    pub cap: f64,
    /// Final time of each probe run, years (per-formulation default when
    /// `None`).
    pub t_final: Option<f64>,
    /// Smallest lower bracket tried before giving up when the seed turns
    /// out unstable.
    pub lo_floor: f64,
}

impl Default for DtScanParams {
    fn default() -> Self {
        DtScanParams {
            lo: None,
            rel_tol: 0.05,
            cap: 1e3,
            t_final: None,
            lo_floor: 1e-6,
        }
    }
}

/// Heuristic stable seed for the lower bracket at spacing `dx`, from the
/// linearized slab bounds: diffusive-scaled (quadratic in dx) for the
/// unstabilized shallow-ice variants, linear in dx for the rest.  A wrong
/// seed only costs extra probe runs; the search self-corrects.
pub fn default_scan_seed(formulation: Formulation, theta: f64, dx: f64) -> f64 {
    let consts = PhysicalConstants::default();
    let coeffs = VNCoefficients::for_slab(&consts, (0.75f64).to_radians().tan(), 1000.0);
    let bd_diff = 0.5 * dx * dx / coeffs.c3;
    let fssa = theta > 0.0;
    match (formulation, fssa) {
        (Formulation::Sia, _) => 1.3 * bd_diff / 2.0,
        (Formulation::WSia, false) => 19.0 * bd_diff / 4.0,
        (Formulation::WSia, true) => 12.0 * (dx / 250.0) / 4.0,
        (Formulation::WSiaStokes, false) | (Formulation::WStokes, _) => 1.8 * (dx / 250.0) / 4.0,
        (Formulation::WSiaStokes, true) => 6.0 * (dx / 250.0) / 4.0,
    }
}

/// Default probe horizon, years. Instability has to grow out of
/// roundoff-level seeds, so a probe near the threshold needs a few hundred
/// steps no matter the resolution; the horizon therefore tracks the seed
/// scale (which tracks dx) with the base value anchored at dx = 250 m.
pub fn default_scan_t_final(formulation: Formulation, theta: f64, dx: f64) -> f64 {
    let base = if theta > 0.0 {
        100.0
    } else {
        match formulation {
            Formulation::Sia => 5.0,
            _ => 12.0,
        }
    };
    base * default_scan_seed(formulation, theta, dx)
        / default_scan_seed(formulation, theta, 250.0)
}

/// Find the largest stable timestep for one (formulation, resolution) pair,
/// retrying with a halved lower bracket when the seed is already unstable.
pub fn measure_dt_star(
    profile: &DomainProfile,
    formulation: Formulation,
    theta: f64,
    upwind: bool,
    n_x: usize,
    n_y: usize,
    params: &DtScanParams,
) -> Result<StabilityResult> {
    let dx = profile.length() / n_x as f64;
    let t_final = params
        .t_final
        .unwrap_or_else(|| default_scan_t_final(formulation, theta, dx));
    let mut lo = params
        .lo
        .unwrap_or_else(|| default_scan_seed(formulation, theta, dx))
        .min(params.cap / 2.0);
    loop {
        let factory = || CoupledRun::new(profile, n_x, n_y, formulation, theta, upwind);
        let attempt = find_max_timestep(
            factory,
            dx,
            t_final,
            (lo, 2.0 * lo),
            params.rel_tol,
            params.cap,
        );
        match attempt {
            Err(IceLabError::Bracket(_)) if lo > params.lo_floor => {
                lo = (lo * 0.5).max(params.lo_floor);
            }
            other => return other,
        }
    }
}

/// Sweep outcome for one formulation class.
#[derive(Debug, Clone)]
pub struct DtScanOutcome {
    /// Formulation label including the stabilization suffix.
    pub label: String,
    /// Successful per-resolution searches, ascending in dx.
    pub results: Vec<StabilityResult>,
    /// Failed jobs as (dx, error message); the sweep continues past them.
    pub failures: Vec<(f64, String)>,
    /// Log-log power-law fit over the successes (needs at least three).
    pub fit: Option<ScalingFit>,
}

/// Run the per-resolution searches in parallel and fit the timestep-vs-dx
/// scaling exponent.  Individual job failures are collected, not fatal.
pub fn run_dt_scan(
    profile: &DomainProfile,
    formulation: Formulation,
    theta: f64,
    upwind: bool,
    n_x_list: &[usize],
    n_y: usize,
    params: &DtScanParams,
) -> Result<DtScanOutcome> {
    if n_x_list.is_empty() {
        return Err(IceLabError::InvalidParameter(
            "dt scan needs at least one resolution".into(),
        ));
    }
    let jobs: Vec<(f64, Result<StabilityResult>)> = n_x_list
        .par_iter()
        .map(|&n_x| {
            let dx = profile.length() / n_x as f64;
            (
                dx,
                measure_dt_star(profile, formulation, theta, upwind, n_x, n_y, params),
            )
        })
        .collect();

    let mut results = Vec::new();
    let mut failures = Vec::new();
    for (dx, job) in jobs {
        match job {
            Ok(r) => results.push(r),
            Err(e) => failures.push((dx, e.to_string())),
        }
    }
    results.sort_by(|a, b| a.dx.partial_cmp(&b.dx).unwrap());
    failures.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let fit = if results.len() >= 3 {
        Some(fit_scaling_exponent(&results)?)
    } else {
        None
    };
    Ok(DtScanOutcome {
        label: crate::cost::variant_name(formulation, theta > 0.0),
        results,
        failures,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_slab_profile;

    #[test]
    fn seeds_scale_with_dx_as_designed() {
        let quad = default_scan_seed(Formulation::Sia, 0.0, 500.0)
            / default_scan_seed(Formulation::Sia, 0.0, 250.0);
        assert!((quad - 4.0).abs() < 1e-12, "quadratic seed ratio {quad}");
        let lin = default_scan_seed(Formulation::WSiaStokes, 1.0, 500.0)
            / default_scan_seed(Formulation::WSiaStokes, 1.0, 250.0);
        assert!((lin - 2.0).abs() < 1e-12, "linear seed ratio {lin}");
    }

    #[test]
    fn horizons_lengthen_with_stabilization_and_scale_with_dx() {
        assert!((default_scan_t_final(Formulation::Sia, 0.0, 250.0) - 5.0).abs() < 1e-12);
        assert!((default_scan_t_final(Formulation::WSia, 0.0, 250.0) - 12.0).abs() < 1e-12);
        assert!((default_scan_t_final(Formulation::WSia, 1.0, 250.0) - 100.0).abs() < 1e-12);
        // Quadratic-seed class: horizon grows with dx^2; linear class: with dx.
        let quad = default_scan_t_final(Formulation::Sia, 0.0, 500.0)
            / default_scan_t_final(Formulation::Sia, 0.0, 250.0);
        assert!((quad - 4.0).abs() < 1e-12, "quadratic horizon ratio {quad}");
        let lin = default_scan_t_final(Formulation::WSia, 1.0, 500.0)
            / default_scan_t_final(Formulation::WSia, 1.0, 250.0);
        assert!((lin - 2.0).abs() < 1e-12, "linear horizon ratio {lin}");
    }

    #[test]
    #[ignore]
    fn probe_detection_latency() {
        use crate::harness::coupled::CoupledRun;
        use crate::stability::Simulation;
        let profile = build_slab_profile(80e3, 1000.0, 0.75, 1.0, 5e-8).unwrap();
        let mut jobs: Vec<(Formulation, f64, f64, usize)> = Vec::new();
        for &dt in &[0.002, 0.003, 0.004, 0.005, 0.006, 0.008] {
            jobs.push((Formulation::WSia, 0.0, dt, (4.0 / dt).ceil() as usize));
        }
        for &dt in &[1.5, 2.5, 3.5, 5.0] {
            jobs.push((Formulation::WSiaStokes, 0.0, dt, 200));
        }
        for &dt in &[20.0, 60.0, 120.0, 240.0] {
            jobs.push((Formulation::WSia, 1.0, dt, 60));
        }
        for &dt in &[4.0, 8.0, 16.0, 32.0] {
            jobs.push((Formulation::WSiaStokes, 1.0, dt, 60));
        }
        let lines: Vec<String> = jobs
            .par_iter()
            .map(|&(form, theta, dt, n_steps)| {
                let mut sim = CoupledRun::new(&profile, 320, 11, form, theta, false).unwrap();
                let mut e_prev = sim.energy();
                let e0 = e_prev.abs();
                let t0 = std::time::Instant::now();
                let mut verdict = format!("stable through {n_steps} steps");
                for k in 0..n_steps {
                    if let Err(e) = sim.step(dt) {
                        verdict = format!("crashed at step {k}: {e}");
                        break;
                    }
                    let e_now = sim.energy();
                    if e_now > e_prev + 1e-12 * e0 {
                        verdict = format!(
                            "energy rose at step {k} (rel {:.2e})",
                            (e_now - e_prev) / e0
                        );
                        break;
                    }
                    e_prev = e_now;
                }
                format!(
                    "{} theta={theta} dt={dt}: {verdict} [{:.2?} elapsed]",
                    form.name(),
                    t0.elapsed()
                )
            })
            .collect();
        for line in lines {
            println!("{line}");
        }
    }

    #[test]
    #[ignore]
    fn probe_wsia_traces() {
        use crate::harness::coupled::CoupledRun;
        use crate::stability::Simulation;
        let profile = build_slab_profile(80e3, 1000.0, 0.75, 1.0, 5e-8).unwrap();
        for (form, dt) in [
            (Formulation::WSia, 0.01),
            (Formulation::WSiaStokes, 0.01),
        ] {
            let mut sim = CoupledRun::new(&profile, 320, 11, form, 0.0, false).unwrap();
            for k in 0..40 {
                let state = &sim.state;
                let n = state.h.len();
                let eta: Vec<f64> = (0..n)
                    .map(|i| state.h[i] - state.bed_trend_slope * (state.dx * i as f64))
                    .collect();
                let mean = eta.iter().sum::<f64>() / n as f64;
                let rough: f64 = (0..n)
                    .map(|i| {
                        let m = (i + n - 1) % n;
                        let p = (i + 1) % n;
                        (eta[p] - 2.0 * eta[i] + eta[m]).abs()
                    })
                    .fold(0.0, f64::max);
                if k % 5 == 0 {
                    println!(
                        "{} step {k}: mean(eta)={mean:.9} rough={rough:.3e} energy={:.6e}",
                        form.name(),
                        sim.energy()
                    );
                }
                if sim.step(dt).is_err() {
                    println!("{} crashed at step {k}", form.name());
                    break;
                }
            }
        }
    }

    #[test]
    fn coarse_slab_scan_produces_ordered_results() {
        // A tiny two-resolution scan of the cheapest formulation: checks job
        // aggregation, ordering, and that dt* grows with dx. The default
        // horizon scales with resolution so even these very coarse meshes
        // give the unstable modes a few hundred steps to grow.
        let profile = build_slab_profile(80e3, 1000.0, 0.75, 1.0, 5e-8).unwrap();
        let outcome = run_dt_scan(
            &profile,
            Formulation::Sia,
            0.0,
            false,
            &[20, 40],
            5,
            &DtScanParams::default(),
        )
        .unwrap();
        assert!(outcome.failures.is_empty(), "failures: {:?}", outcome.failures);
        assert_eq!(outcome.results.len(), 2);
        assert!(outcome.results[0].dx < outcome.results[1].dx);
        assert!(
            outcome.results[0].dt_star < outcome.results[1].dt_star,
            "dt* not increasing with dx: {} vs {}",
            outcome.results[0].dt_star,
            outcome.results[1].dt_star
        );
        // Each dt* should sit within a broad factor of the explicit
        // diffusive limit 0.5 dx^2 / c3 for its resolution.
        let consts = crate::constants::PhysicalConstants::default();
        let coeffs = crate::stability::VNCoefficients::for_slab(
            &consts,
            (0.75f64).to_radians().tan(),
            1000.0,
        );
        for r in &outcome.results {
            assert!(!r.flagged, "dt* search hit the cap at dx={}", r.dx);
            let bd = 0.5 * r.dx * r.dx / coeffs.c3;
            assert!(
                r.dt_star > 0.3 * bd && r.dt_star < 30.0 * bd,
                "dt* {} far from diffusive limit {} at dx={}",
                r.dt_star,
                bd,
                r.dx
            );
        }
        assert!(outcome.fit.is_none(), "two points must not produce a fit");
    }
}
