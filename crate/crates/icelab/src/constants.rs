//! Physical constants and regularization parameters.
//!
//! The unit system is meters / years / megapascals throughout: lengths in m,
//! velocities in m/yr, stresses and pressure in MPa, viscosity in MPa yr.
//! The rate factor of isothermal ice is then A0 = 100 MPa^-3 yr^-1 and the
//! driving-stress factor rho*|g| = 8.9271e-3 MPa/m for rho = 910 kg/m^3.

use crate::error::{IceLabError, Result};

/// Material and regularization constants for the momentum balances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants {
    /// Glen's-law rate factor, MPa^-3 yr^-1.
    pub a0: f64,
    /// rho * |g| in MPa per meter of depth.
    pub rho_g: f64,
    /// Gravity direction convention; only the vertical component is used.
    pub g_vec: (f64, f64),
    /// Additive regularization keeping the shallow-ice viscosity finite at
    /// zero slope (composite units, enters the denominator of mu).
    pub epsilon_visc: f64,
    /// Critical shear rate regularizing the power-law viscosity, yr^-1.
    pub epsilon_shear: f64,
}

impl Default for PhysicalConstants {
    fn default() -> Self {
        PhysicalConstants {
            a0: 100.0,
            rho_g: 8.9271e-3,
            g_vec: (0.0, -9.81),
            epsilon_visc: 1e-10,
            epsilon_shear: 1e-5,
        }
    }
}

impl PhysicalConstants {
    /// Check positivity of every scalar constant (the gravity vector is a
    /// direction convention and may have any sign).
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a0", self.a0),
            ("rho_g", self.rho_g),
            ("epsilon_visc", self.epsilon_visc),
            ("epsilon_shear", self.epsilon_shear),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(IceLabError::InvalidParameter(format!(
                    "constant {name} must be strictly positive and finite, got {v}"
                )));
            }
        }
        Ok(())
    }
}
