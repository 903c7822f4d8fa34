//! Model error against a reference solution, versus wall-clock runtime.

use crate::error::{IceLabError, Result};
use crate::fem::Formulation;
use crate::geometry::DomainProfile;
use crate::surface::SurfaceBc;

use super::coupled::{run_coupled_simulation, ExperimentRecord};

/// Relative L2 difference of two surface samples on the same uniform grid,
/// by trapezoidal quadrature.  Periodic grids close the trapezoid with the
/// wrapped first node (surface differences are periodic even on a trending
/// bed, since both fields share the bed).
pub fn relative_l2_error(h: &[f64], h_ref: &[f64], dx: f64, bc: SurfaceBc) -> Result<f64> {
    if h.len() != h_ref.len() || h.is_empty() {
        return Err(IceLabError::Data(format!(
            "surface samples of lengths {} and {} cannot be compared",
            h.len(),
            h_ref.len()
        )));
    }
    let n = h.len();
    let quad = |f: &dyn Fn(usize) -> f64| -> f64 {
        match bc {
            SurfaceBc::Periodic => {
                let mut sum = 0.0;
                for i in 0..n {
                    sum += f(i);
                }
                dx * sum
            }
            SurfaceBc::DirichletFixed => {
                let mut sum = 0.5 * (f(0) + f(n - 1));
                for i in 1..n - 1 {
                    sum += f(i);
                }
                dx * sum
            }
        }
    };
    let diff2 = quad(&|i| (h[i] - h_ref[i]).powi(2));
    let ref2 = quad(&|i| h_ref[i] * h_ref[i]);
    if ref2 <= 0.0 {
        return Err(IceLabError::Data(
            "reference surface has zero norm".into(),
        ));
    }
    Ok((diff2 / ref2).sqrt())
}

/// One formulation's timestep ladder in an error-vs-runtime study.
#[derive(Debug, Clone)]
pub struct LadderEntry {
    pub formulation: Formulation,
    pub theta: f64,
    pub upwind: bool,
    /// Timesteps to run, years.
    pub dts: Vec<f64>,
}

/// Outcome of an error-vs-runtime study.
#[derive(Debug, Clone)]
pub struct ErrorRuntimeReport {
    /// The reference run's own record (error 0 against itself).
    pub reference: ExperimentRecord,
    /// Final-time reference surface.
    pub reference_h: Vec<f64>,
    /// One record per (ladder entry, dt), in input order.
    pub records: Vec<ExperimentRecord>,
}

/// Run the reference once, then every ladder entry at every dt on the same
/// grid, measuring the relative L2 surface error at the final time.  Flagged
/// (aborted) runs keep `error_rel = None`.
pub fn run_error_vs_runtime(
    profile: &DomainProfile,
    n_x: usize,
    n_y: usize,
    t_final: f64,
    ladders: &[LadderEntry],
    reference_formulation: Formulation,
    reference_theta: f64,
    reference_dt: f64,
) -> Result<ErrorRuntimeReport> {
    if ladders.is_empty() {
        return Err(IceLabError::InvalidParameter(
            "error-vs-runtime needs at least one ladder entry".into(),
        ));
    }
    let (ref_history, mut ref_record, ref_abort) = run_coupled_simulation(
        profile,
        n_x,
        n_y,
        reference_formulation,
        reference_theta,
        false,
        reference_dt,
        t_final,
    )?;
    if let Some(message) = ref_abort {
        return Err(IceLabError::Solver(format!(
            "reference run aborted: {message}"
        )));
    }
    let reference_h = ref_history.surfaces.last().unwrap().clone();
    ref_record.error_rel = Some(0.0);

    let bc = if profile.surface_bc == crate::geometry::SurfaceBc::Periodic {
        SurfaceBc::Periodic
    } else {
        SurfaceBc::DirichletFixed
    };
    let dx = profile.length() / n_x as f64;

    let mut records = Vec::new();
    for entry in ladders {
        for &dt in &entry.dts {
            let (history, mut record, _abort) = run_coupled_simulation(
                profile,
                n_x,
                n_y,
                entry.formulation,
                entry.theta,
                entry.upwind,
                dt,
                t_final,
            )?;
            if !record.flagged {
                let h = history.surfaces.last().unwrap();
                record.error_rel = Some(relative_l2_error(h, &reference_h, dx, bc)?);
            }
            records.push(record);
        }
    }
    Ok(ErrorRuntimeReport {
        reference: ref_record,
        reference_h,
        records,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::build_slab_profile;

    #[test]
    fn identical_samples_have_zero_error() {
        let h = vec![1.0, 2.0, 3.0, 2.0];
        let e = relative_l2_error(&h, &h, 0.5, SurfaceBc::Periodic).unwrap();
        assert_eq!(e, 0.0);
    }

    #[test]
    fn error_is_scale_invariant_relative_measure() {
        let h_ref = vec![100.0; 8];
        let h: Vec<f64> = h_ref.iter().map(|v| v + 1.0).collect();
        let e = relative_l2_error(&h, &h_ref, 0.25, SurfaceBc::DirichletFixed).unwrap();
        assert!((e - 0.01).abs() < 1e-12, "e = {e}");
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(relative_l2_error(&[1.0], &[1.0, 2.0], 1.0, SurfaceBc::Periodic).is_err());
    }

    #[test]
    fn study_reports_zero_error_for_reference_formulation_at_reference_dt() {
        // Cheap variant of the study on a coarse slab with the linear
        // solver standing in as its own reference.
        let profile = build_slab_profile(80e3, 1000.0, 0.75, 1.0, 5e-8).unwrap();
        let ladder = [LadderEntry {
            formulation: Formulation::WSia,
            theta: 0.0,
            upwind: false,
            dts: vec![0.05, 0.025],
        }];
        let report = run_error_vs_runtime(
            &profile,
            16,
            4,
            0.1,
            &ladder,
            Formulation::WSia,
            0.0,
            0.025,
        )
        .unwrap();
        assert_eq!(report.records.len(), 2);
        // The dt = 0.025 run reproduces the reference exactly (same scheme,
        // same steps); the dt = 0.05 run differs.
        let exact = &report.records[1];
        assert!(!exact.flagged);
        assert!(exact.error_rel.unwrap() < 1e-14, "err {:?}", exact.error_rel);
        let coarse = &report.records[0];
        assert!(coarse.error_rel.unwrap() > exact.error_rel.unwrap());
        assert!(report.reference.error_rel == Some(0.0));
        assert!(report.reference.runtime_wall > 0.0);
    }
}
