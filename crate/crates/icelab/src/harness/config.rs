//! TOML experiment configuration for the command-line drivers.

use serde::{Deserialize, Serialize};

use crate::error::{IceLabError, Result};
use crate::fem::Formulation;
use crate::geometry::{
    build_icecap_profile, build_slab_profile, load_cross_section_profile, DomainProfile,
};

/// Geometry selection plus shape parameters (unused ones may be omitted).
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    /// One of `slab`, `icecap`, `greenland`.
    pub kind: String,
    /// Cross-section data file (required for `greenland`).
    #[serde(default)]
    pub path: Option<String>,
    /// Slab length or ice-cap half-length, meters.
    #[serde(default)]
    pub length: Option<f64>,
    /// Slab mean thickness or ice-cap central height, meters.
    #[serde(default)]
    pub height: Option<f64>,
    /// Slab inclination, degrees (clockwise positive).
    #[serde(default)]
    pub slope_deg: Option<f64>,
    /// Gaussian surface-bump amplitude on the slab, meters.
    #[serde(default)]
    pub bump_amplitude: Option<f64>,
    /// Gaussian bump decay rate on the slab, 1/m^2.
    #[serde(default)]
    pub bump_decay: Option<f64>,
    /// Minimum ice thickness for margin clamping, meters.
    #[serde(default)]
    pub min_thickness: Option<f64>,
}

impl GeometrySection {
    /// Construct the domain profile this section describes.
    pub fn build_profile(&self) -> Result<DomainProfile> {
        match self.kind.as_str() {
            "slab" => build_slab_profile(
                self.length.unwrap_or(80e3),
                self.height.unwrap_or(1000.0),
                self.slope_deg.unwrap_or(0.75),
                self.bump_amplitude.unwrap_or(1.0),
                self.bump_decay.unwrap_or(5e-8),
            ),
            "icecap" => {
                build_icecap_profile(self.length.unwrap_or(750e3), self.height.unwrap_or(3000.0))
            }
            "greenland" => {
                let path = self.path.as_deref().ok_or_else(|| {
                    IceLabError::Config(
                        "geometry kind 'greenland' needs a 'path' to a cross-section file".into(),
                    )
                })?;
                load_cross_section_profile(path, self.min_thickness.unwrap_or(1.0))
            }
            other => Err(IceLabError::Config(format!(
                "unknown geometry kind '{other}' (expected slab, icecap, or greenland)"
            ))),
        }
    }

    /// Default vertical element count per geometry.
    pub fn default_n_y(&self) -> usize {
        match self.kind.as_str() {
            "slab" => 11,
            _ => 12,
        }
    }
}

/// The run to perform: formulation, stabilization, discretization, horizon.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    /// Momentum formulation name (`sia`, `w-sia`, `w-siastokes`, `w-stokes`).
    pub formulation: String,
    /// Free-surface stabilization strength in [0, 1]; 0 disables the term.
    #[serde(default)]
    pub theta: f64,
    /// Add first-order (upwind) artificial viscosity to the surface update.
    #[serde(default)]
    pub upwind: bool,
    /// Horizontal element counts; sweeps use all, single runs use the first.
    pub n_x: Vec<usize>,
    /// Vertical element count (defaults per geometry when omitted).
    #[serde(default)]
    pub n_y: Option<usize>,
    /// Final simulation time, years.
    pub t_final: f64,
    /// Fixed timestep for `simulate`, years.
    #[serde(default)]
    pub dt: Option<f64>,
    /// Timesteps for `error-runtime` ladders, years.
    #[serde(default)]
    pub dt_ladder: Vec<f64>,
    /// Reserved for future stochastic elements; unused by the numerics.
    #[serde(default)]
    pub seed: u64,
}

/// Bisection parameters for `dt-scan` (all optional; per-formulation
/// heuristics fill the gaps).
#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct DtSearchSection {
    /// Initial stable lower bracket, years.
    #[serde(default)]
    pub lo: Option<f64>,
    /// Relative bracket width at which bisection stops.
    #[serde(default)]
    pub rel_tol: Option<f64>,
    /// Largest timestep ever probed, years.
    #[serde(default)]
    pub cap: Option<f64>,
    /// Final time of each probe run, years (defaults per formulation).
    #[serde(default)]
    pub t_final: Option<f64>,
}

/// Reference solution used for model-error measurements.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceSection {
    /// Reference formulation (defaults to the nonlinear Stokes solve).
    #[serde(default = "default_reference_formulation")]
    pub formulation: String,
    /// Reference timestep, years.
    pub dt: f64,
}

fn default_reference_formulation() -> String {
    "w-stokes".to_string()
}

/// Output location for CSV and plot data.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    /// Directory files are written into (created if missing).
    #[serde(default = "default_output_dir")]
    pub dir: String,
}

fn default_output_dir() -> String {
    "out".to_string()
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            dir: default_output_dir(),
        }
    }
}

/// A full experiment description, deserialized from a TOML file.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub geometry: GeometrySection,
    pub run: RunSection,
    #[serde(default)]
    pub dt_search: Option<DtSearchSection>,
    #[serde(default)]
    pub reference: Option<ReferenceSection>,
    #[serde(default)]
    pub output: OutputSection,
}

impl ExperimentConfig {
    /// Parse a TOML string.
    pub fn from_toml(text: &str) -> Result<ExperimentConfig> {
        let config = Self::from_toml_unchecked(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parse without validating, so command-line overrides can be applied
    /// before the combined result is checked.
    pub fn from_toml_unchecked(text: &str) -> Result<ExperimentConfig> {
        toml::from_str(text).map_err(|e| IceLabError::Config(format!("config parse error: {e}")))
    }

    /// Read and parse a TOML file.
    pub fn from_file(path: &str) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| IceLabError::io(path, e))?;
        Self::from_toml(&text)
    }

    /// Read and parse a TOML file without validating.
    pub fn from_file_unchecked(path: &str) -> Result<ExperimentConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| IceLabError::io(path, e))?;
        Self::from_toml_unchecked(&text)
    }

    /// Momentum formulation of the main run.
    pub fn formulation(&self) -> Result<Formulation> {
        Formulation::parse(&self.run.formulation)
    }

    /// Vertical element count, honoring the per-geometry default.
    pub fn n_y(&self) -> usize {
        self.run.n_y.unwrap_or_else(|| self.geometry.default_n_y())
    }

    /// Check ranges and referenced files.
    pub fn validate(&self) -> Result<()> {
        let formulation = self.formulation()?;
        if !(0.0..=1.0).contains(&self.run.theta) {
            return Err(IceLabError::Config(format!(
                "theta must lie in [0, 1], got {}",
                self.run.theta
            )));
        }
        if self.run.theta > 0.0 && matches!(formulation, Formulation::Sia) {
            return Err(IceLabError::Config(
                "the surface stabilization term needs a weak formulation; \
                 the closed-form solve has no assembled system to stabilize"
                    .into(),
            ));
        }
        if self.run.n_x.is_empty() {
            return Err(IceLabError::Config("n_x list must not be empty".into()));
        }
        if self.run.n_x.iter().any(|&n| n < 3) {
            return Err(IceLabError::Config(
                "every n_x must be at least 3".into(),
            ));
        }
        if self.n_y() < 1 {
            return Err(IceLabError::Config("n_y must be at least 1".into()));
        }
        if !(self.run.t_final > 0.0) {
            return Err(IceLabError::Config(format!(
                "t_final must be positive, got {}",
                self.run.t_final
            )));
        }
        if let Some(dt) = self.run.dt {
            if !(dt > 0.0) {
                return Err(IceLabError::Config(format!(
                    "dt must be positive, got {dt}"
                )));
            }
        }
        if let Some(reference) = &self.reference {
            Formulation::parse(&reference.formulation)?;
            if !(reference.dt > 0.0) {
                return Err(IceLabError::Config(format!(
                    "reference dt must be positive, got {}",
                    reference.dt
                )));
            }
        }
        if self.geometry.kind == "greenland" {
            let path = self.geometry.path.as_deref().ok_or_else(|| {
                IceLabError::Config("geometry kind 'greenland' needs a 'path'".into())
            })?;
            if !std::path::Path::new(path).exists() {
                return Err(IceLabError::Config(format!(
                    "cross-section file '{path}' does not exist"
                )));
            }
        } else {
            // Catch typos early instead of failing on first use.
            self.geometry.build_profile()?;
        }
        Ok(())
    }
}
