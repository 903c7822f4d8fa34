//! Benchmark domain profiles: inclined periodic slab, symmetric ice cap, and
//! spline-interpolated flow-line cross sections loaded from text files.

pub mod mesh;
pub mod spline;

use std::fmt;
use std::sync::Arc;

use crate::error::{IceLabError, Result};
use spline::CubicSpline;

pub use mesh::{deform_mesh_to_surface, extrude_mesh, BoundaryTag, ExtrudedMesh};

/// Lateral boundary treatment of a domain.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LateralBc {
    Periodic,
    NoSlip,
}

/// Free-surface boundary treatment at the two lateral ends.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceBc {
    Periodic,
    DirichletFixed,
}

type ProfileFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A vertical cross-section domain: bed and initial surface elevations as
/// functions of the horizontal coordinate, plus boundary-condition choices.
#[derive(Clone)]
pub struct DomainProfile {
    pub x_min: f64,
    pub x_max: f64,
    pub bed: ProfileFn,
    pub surface0: ProfileFn,
    pub lateral_bc: LateralBc,
    pub surface_bc: SurfaceBc,
    pub min_thickness: f64,
}

impl fmt::Debug for DomainProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DomainProfile")
            .field("x_min", &self.x_min)
            .field("x_max", &self.x_max)
            .field("lateral_bc", &self.lateral_bc)
            .field("surface_bc", &self.surface_bc)
            .field("min_thickness", &self.min_thickness)
            .finish()
    }
}

impl DomainProfile {
    pub fn bed_at(&self, x: f64) -> f64 {
        (self.bed)(x)
    }

    pub fn surface0_at(&self, x: f64) -> f64 {
        (self.surface0)(x)
    }

    pub fn length(&self) -> f64 {
        self.x_max - self.x_min
    }

    /// Mean bed slope over the domain; for linear beds (the periodic slab)
    /// this is the exact pointwise slope.
    pub fn bed_trend_slope(&self) -> f64 {
        (self.bed_at(self.x_max) - self.bed_at(self.x_min)) / self.length()
    }

    /// Check the profile invariants on a uniform sampling: positive extent,
    /// thickness at least `min_thickness` everywhere, and (for periodic
    /// domains) matching thickness at the two ends. The periodic check is on
    /// thickness because an inclined bed carries a linear trend that repeats
    /// only after subtracting it.
    pub fn validate(&self, n_samples: usize) -> Result<()> {
        if !(self.x_max > self.x_min) {
            return Err(IceLabError::Geometry(format!(
                "x_max={} must exceed x_min={}",
                self.x_max, self.x_min
            )));
        }
        let n = n_samples.max(2);
        for k in 0..=n {
            let x = self.x_min + (self.x_max - self.x_min) * (k as f64) / (n as f64);
            let t = self.surface0_at(x) - self.bed_at(x);
            if !(t >= self.min_thickness - 1e-9) || !t.is_finite() {
                return Err(IceLabError::Geometry(format!(
                    "thickness {t} at x={x} is below the minimum {}",
                    self.min_thickness
                )));
            }
        }
        if self.lateral_bc == LateralBc::Periodic {
            let t0 = self.surface0_at(self.x_min) - self.bed_at(self.x_min);
            let t1 = self.surface0_at(self.x_max) - self.bed_at(self.x_max);
            let rel = (t0 - t1).abs() / t0.abs().max(1e-300);
            if rel > 1e-9 {
                return Err(IceLabError::Geometry(format!(
                    "periodic profile has mismatched end thicknesses {t0} vs {t1}"
                )));
            }
        }
        Ok(())
    }
}

/// Inclined periodic slab of mean thickness `h` over a bed of slope
/// −tan(alpha), with a Gaussian surface bump of amplitude `bump_amp` and
/// decay rate `bump_decay` centered at mid-domain.
pub fn build_slab_profile(
    l: f64,
    h: f64,
    alpha_deg: f64,
    bump_amp: f64,
    bump_decay: f64,
) -> Result<DomainProfile> {
    if !(l > 0.0) || !(h > 0.0) {
        return Err(IceLabError::InvalidParameter(format!(
            "slab needs positive length and thickness, got L={l}, H={h}"
        )));
    }
    let tan_alpha = (alpha_deg.to_radians()).tan();
    let bed = Arc::new(move |x: f64| -x * tan_alpha);
    let bed2 = bed.clone();
    let surface0 = Arc::new(move |x: f64| {
        bed2(x) + h + bump_amp * (-bump_decay * (x - l / 2.0) * (x - l / 2.0)).exp()
    });
    let profile = DomainProfile {
        x_min: 0.0,
        x_max: l,
        bed,
        surface0,
        lateral_bc: LateralBc::Periodic,
        surface_bc: SurfaceBc::Periodic,
        min_thickness: 1.0,
    };
    profile.validate(256)?;
    Ok(profile)
}

/// Symmetric ice cap on a flat bed over x ∈ [−L, L] with central thickness
/// `h` and zero thickness at the margins (clamped to the minimum).
pub fn build_icecap_profile(l: f64, h: f64) -> Result<DomainProfile> {
    if !(l > 0.0) || !(h > 0.0) {
        return Err(IceLabError::InvalidParameter(format!(
            "ice cap needs positive half-length and thickness, got L={l}, H={h}"
        )));
    }
    let min_thickness = 1.0;
    let aux = move |x: f64| (3.0 - (x / l) * (x / l)).powf(0.58);
    let bed = Arc::new(|_x: f64| 0.0);
    let surface0 = Arc::new(move |x: f64| {
        let x = x.clamp(-l, l);
        let s = h * (aux(x) - aux(-l)) / aux(0.0);
        s.max(min_thickness)
    });
    let profile = DomainProfile {
        x_min: -l,
        x_max: l,
        bed,
        surface0,
        lateral_bc: LateralBc::NoSlip,
        surface_bc: SurfaceBc::DirichletFixed,
        min_thickness,
    };
    profile.validate(256)?;
    Ok(profile)
}

/// Flow-line samples (x, bed, surface) with natural cubic splines through
/// the bed and surface columns.
#[derive(Debug, Clone)]
pub struct CrossSectionData {
    pub samples: Vec<(f64, f64, f64)>,
    pub bed_spline: CubicSpline,
    pub surface_spline: CubicSpline,
}

/// Parse a cross-section text file: three whitespace-separated columns
/// x, bed, surface in meters; `#` starts a comment; blank lines ignored.
pub fn parse_cross_section(path: &str) -> Result<CrossSectionData> {
    let text = std::fs::read_to_string(path).map_err(|e| IceLabError::io(path, e))?;
    let mut samples: Vec<(f64, f64, f64)> = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = match raw.find('#') {
            Some(k) => &raw[..k],
            None => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 3 {
            return Err(IceLabError::Parse {
                path: path.to_string(),
                line: lineno + 1,
                message: format!("expected 3 columns, found {}", fields.len()),
            });
        }
        let mut vals = [0.0; 3];
        for (k, f) in fields.iter().enumerate() {
            vals[k] = f.parse::<f64>().map_err(|e| IceLabError::Parse {
                path: path.to_string(),
                line: lineno + 1,
                message: format!("column {}: {e}", k + 1),
            })?;
        }
        samples.push((vals[0], vals[1], vals[2]));
    }
    if samples.len() < 4 {
        return Err(IceLabError::Data(format!(
            "cross-section file {path} has {} samples, need at least 4",
            samples.len()
        )));
    }
    for i in 1..samples.len() {
        if !(samples[i].0 > samples[i - 1].0) {
            return Err(IceLabError::Data(format!(
                "cross-section x must be strictly increasing; sample {} has x={} after x={}",
                i,
                samples[i].0,
                samples[i - 1].0
            )));
        }
    }
    let xs: Vec<f64> = samples.iter().map(|s| s.0).collect();
    let beds: Vec<f64> = samples.iter().map(|s| s.1).collect();
    let surf: Vec<f64> = samples.iter().map(|s| s.2).collect();
    Ok(CrossSectionData {
        bed_spline: CubicSpline::natural(&xs, &beds)?,
        surface_spline: CubicSpline::natural(&xs, &surf)?,
        samples,
    })
}

/// Load a cross-section file into a no-slip, fixed-margin profile whose bed
/// and surface evaluate the natural cubic splines; the surface is clamped to
/// bed + `min_thickness`.
pub fn load_cross_section_profile(path: &str, min_thickness: f64) -> Result<DomainProfile> {
    let data = Arc::new(parse_cross_section(path)?);
    let x_min = data.samples.first().unwrap().0;
    let x_max = data.samples.last().unwrap().0;
    let d1 = data.clone();
    let bed = Arc::new(move |x: f64| d1.bed_spline.eval(x));
    let d2 = data.clone();
    let surface0 = Arc::new(move |x: f64| {
        let b = d2.bed_spline.eval(x);
        d2.surface_spline.eval(x).max(b + min_thickness)
    });
    let profile = DomainProfile {
        x_min,
        x_max,
        bed,
        surface0,
        lateral_bc: LateralBc::NoSlip,
        surface_bc: SurfaceBc::DirichletFixed,
        min_thickness,
    };
    profile.validate(512)?;
    Ok(profile)
}
