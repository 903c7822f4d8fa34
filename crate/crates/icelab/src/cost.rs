//! Work-unit cost model for advancing an ice surface to a fixed final time
//! with each momentum formulation, plus calibration of its constants from
//! measured runtimes.
//!
//! The model combines the per-step solver cost (a power `m^(1+alpha)` of the
//! horizontal node count, with formulation-specific prefactors) with the
//! number of steps implied by a timestep restriction `dt <= C * dx^gamma`,
//! giving a total of the form `prefactor * m^(1 + gamma/(d-1) + alpha)`.
//! The closed-form shallow-ice update needs no linear solve and scales as
//! `C_SIA * m^(1 + gamma/(d-1))`.

use crate::error::{IceLabError, Result};
use crate::fem::Formulation;

/// Parameters of the cost model. Work units are dimensionless; only ratios
/// and exponents are meaningful.
#[derive(Debug, Clone, Copy)]
pub struct CostInputs {
    /// Horizontal mesh node count.
    pub m: usize,
    /// Dimension count of the geometry (2 or 3).
    pub d: usize,
    /// Linear-solver exponent: 2 dense direct, 1 sparse direct,
    /// 0.05 algebraic multigrid, 0 no solver.
    pub alpha: f64,
    /// Timestep-restriction exponent in `dt <= C * dx^gamma`.
    pub gamma: f64,
    /// Nonlinear (fixed-point) iteration count of the full Stokes solve.
    pub n_iter: usize,
    /// Work constant of one nonlinear Stokes solve.
    pub c_s: f64,
    /// Work constant of one closed-form shallow-ice evaluation.
    pub c_sia: f64,
}

impl Default for CostInputs {
    fn default() -> Self {
        CostInputs {
            m: 2,
            d: 3,
            alpha: 1.0,
            gamma: 1.0,
            n_iter: 1,
            c_s: 1.0,
            c_sia: 1.0,
        }
    }
}

impl CostInputs {
    /// Validate ranges for pipeline use (meshes need at least two nodes).
    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return Err(IceLabError::InvalidParameter(format!(
                "cost model needs m >= 2 nodes, got {}",
                self.m
            )));
        }
        if self.d != 2 && self.d != 3 {
            return Err(IceLabError::InvalidParameter(format!(
                "cost model dimension count must be 2 or 3, got {}",
                self.d
            )));
        }
        if !(0.0..=2.0).contains(&self.alpha) {
            return Err(IceLabError::InvalidParameter(format!(
                "solver exponent alpha must lie in [0, 2], got {}",
                self.alpha
            )));
        }
        if !(self.gamma >= 0.0) {
            return Err(IceLabError::InvalidParameter(format!(
                "timestep exponent gamma must be >= 0, got {}",
                self.gamma
            )));
        }
        if self.n_iter == 0 {
            return Err(IceLabError::InvalidParameter(
                "nonlinear iteration count must be >= 1".into(),
            ));
        }
        if !(self.c_s > 0.0) || !(self.c_sia > 0.0) {
            return Err(IceLabError::InvalidParameter(format!(
                "work constants must be positive, got C_S = {}, C_SIA = {}",
                self.c_s, self.c_sia
            )));
        }
        Ok(())
    }
}

/// Default worst-case timestep exponent per formulation: quadratic for the
/// unstabilized shallow-ice variants, linear once the free-surface
/// stabilization (or the Stokes-type coupling) applies.
pub fn default_gamma(formulation: Formulation, fssa: bool) -> f64 {
    match formulation {
        Formulation::Sia => 2.0,
        Formulation::WSia => {
            if fssa {
                1.0
            } else {
                2.0
            }
        }
        Formulation::WSiaStokes | Formulation::WStokes => 1.0,
    }
}

/// Display name for a formulation/stabilization combination, e.g.
/// `"w-sia-fssa"`.
pub fn variant_name(formulation: Formulation, fssa: bool) -> String {
    if fssa {
        format!("{}-fssa", formulation.name())
    } else {
        formulation.name().to_string()
    }
}

/// Exponent of `m` in the total-cost formula: `1 + gamma/(d-1) + alpha`,
/// with `alpha = 0` for the solver-free closed-form variant.
pub fn cost_exponent(formulation: Formulation, inputs: &CostInputs) -> f64 {
    let alpha = match formulation {
        Formulation::Sia => 0.0,
        _ => inputs.alpha,
    };
    1.0 + inputs.gamma / (inputs.d as f64 - 1.0) + alpha
}

fn prefactor(formulation: Formulation, fssa: bool, inputs: &CostInputs) -> f64 {
    let n = inputs.n_iter as f64;
    let dp1 = inputs.d as f64 + 1.0;
    match formulation {
        Formulation::Sia => inputs.c_sia,
        // Without stabilization the component equations decouple and are
        // solved one by one on systems (d+1)-fold smaller.
        Formulation::WSia if !fssa => dp1 / dp1.powf(1.0 + inputs.alpha) / n * inputs.c_s,
        // Linear viscosity: a single fixed-point iteration of the full solve.
        Formulation::WSia | Formulation::WSiaStokes => inputs.c_s / n,
        Formulation::WStokes => inputs.c_s,
    }
}

/// Total work units to advance the surface to a fixed final time with the
/// given formulation, per the model
/// `prefactor(formulation) * m^(1 + gamma/(d-1) + alpha)`.
pub fn estimate_cost(formulation: Formulation, fssa: bool, inputs: &CostInputs) -> Result<f64> {
    if inputs.m == 0 {
        return Err(IceLabError::InvalidParameter(
            "cost model needs at least one node".into(),
        ));
    }
    if inputs.d != 2 && inputs.d != 3 {
        return Err(IceLabError::InvalidParameter(format!(
            "cost model dimension count must be 2 or 3, got {}",
            inputs.d
        )));
    }
    let exponent = cost_exponent(formulation, inputs);
    Ok(prefactor(formulation, fssa, inputs) * (inputs.m as f64).powf(exponent))
}

/// One row of the per-formulation cost table.
#[derive(Debug, Clone)]
pub struct CostTableRow {
    /// Formulation / stabilization combination name.
    pub model: String,
    /// Timestep exponent used for this row.
    pub gamma: f64,
    /// Human-readable evaluated formula.
    pub formula: String,
    /// Exponent of `m` in the total cost.
    pub exponent: f64,
}

/// Build the cost table over all formulation/stabilization combinations,
/// using per-row default `gamma` values and the shared `d`, `alpha`,
/// `n_iter` from `inputs` (the `gamma` field of `inputs` is ignored).
pub fn cost_table(inputs: &CostInputs) -> Vec<CostTableRow> {
    let combos = [
        (Formulation::WStokes, false),
        (Formulation::WStokes, true),
        (Formulation::WSiaStokes, false),
        (Formulation::WSiaStokes, true),
        (Formulation::WSia, false),
        (Formulation::WSia, true),
        (Formulation::Sia, false),
    ];
    combos
        .iter()
        .map(|&(f, fssa)| {
            let row_inputs = CostInputs {
                gamma: default_gamma(f, fssa),
                ..*inputs
            };
            let exponent = cost_exponent(f, &row_inputs);
            let lead = match f {
                Formulation::Sia => "C_SIA".to_string(),
                Formulation::WSia if !fssa => format!(
                    "(d+1)/(d+1)^(1+alpha) * (1/{}) * C_S",
                    row_inputs.n_iter
                ),
                Formulation::WSia | Formulation::WSiaStokes => {
                    format!("(1/{}) * C_S", row_inputs.n_iter)
                }
                Formulation::WStokes => "C_S".to_string(),
            };
            CostTableRow {
                model: variant_name(f, fssa),
                gamma: row_inputs.gamma,
                formula: format!("{lead} * m^{exponent}"),
                exponent,
            }
        })
        .collect()
}

/// One runtime measurement used for calibration.
#[derive(Debug, Clone, Copy)]
pub struct CostMeasurement {
    pub formulation: Formulation,
    pub fssa: bool,
    /// Horizontal node count of the measured run.
    pub m: usize,
    /// Measured wall time, seconds.
    pub runtime: f64,
}

/// Calibrated work constants with the log-space root-mean-square misfit.
#[derive(Debug, Clone, Copy)]
pub struct CalibratedConstants {
    pub c_s: f64,
    pub c_sia: f64,
    /// RMS of `log(runtime) - log(model)` over all measurements.
    pub residual: f64,
}

/// Fit `C_S` and `C_SIA` by least squares of `log runtime` against the
/// model's `log cost` (intercept-only fit per constant: the exponents are
/// fixed by the model).  Each constant with measurements needs at least two
/// of them; a constant with no measurements keeps the value 1.
pub fn calibrate_constants(
    measured: &[CostMeasurement],
    template: &CostInputs,
) -> Result<CalibratedConstants> {
    let mut sia_logs = Vec::new();
    let mut stokes_logs = Vec::new();
    for meas in measured {
        if !(meas.runtime > 0.0) || meas.m == 0 {
            return Err(IceLabError::Data(format!(
                "calibration needs positive runtimes and node counts, got m = {}, runtime = {}",
                meas.m, meas.runtime
            )));
        }
        let unit_inputs = CostInputs {
            m: meas.m,
            gamma: default_gamma(meas.formulation, meas.fssa),
            c_s: 1.0,
            c_sia: 1.0,
            ..*template
        };
        let base = estimate_cost(meas.formulation, meas.fssa, &unit_inputs)?;
        let log_ratio = meas.runtime.ln() - base.ln();
        match meas.formulation {
            Formulation::Sia => sia_logs.push(log_ratio),
            _ => stokes_logs.push(log_ratio),
        }
    }
    if sia_logs.is_empty() && stokes_logs.is_empty() {
        return Err(IceLabError::Data("calibration needs measurements".into()));
    }
    for (name, logs) in [("C_SIA", &sia_logs), ("C_S", &stokes_logs)] {
        if logs.len() == 1 {
            return Err(IceLabError::Data(format!(
                "calibration of {name} needs at least 2 measurements, got 1"
            )));
        }
    }
    let fit = |logs: &[f64]| -> f64 {
        if logs.is_empty() {
            0.0
        } else {
            logs.iter().sum::<f64>() / logs.len() as f64
        }
    };
    let log_cs = fit(&stokes_logs);
    let log_csia = fit(&sia_logs);
    let mut sq_sum = 0.0;
    for (logs, log_c) in [(&stokes_logs, log_cs), (&sia_logs, log_csia)] {
        for v in logs.iter() {
            sq_sum += (v - log_c).powi(2);
        }
    }
    let count = (stokes_logs.len() + sia_logs.len()) as f64;
    Ok(CalibratedConstants {
        c_s: log_cs.exp(),
        c_sia: log_csia.exp(),
        residual: (sq_sum / count).sqrt(),
    })
}
