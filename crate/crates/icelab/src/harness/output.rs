//! Plain-text result writers: CSV tables for analysis and two-column `.dat`
//! files for gnuplot.
//!
//! All fields written here are numbers or dash-separated labels, so no CSV
//! quoting is needed; floats are written with enough digits to round-trip.

use std::fs;
use std::io::Write;
use std::path::Path;

use crate::error::{IceLabError, Result};
use crate::harness::coupled::{ExperimentRecord, SurfaceHistory};
use crate::harness::scan::DtScanOutcome;
use crate::stability::ScalingFit;

fn io_err(path: &Path, e: std::io::Error) -> IceLabError {
    IceLabError::io(path.display().to_string(), e)
}

fn create(path: &Path) -> Result<fs::File> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            fs::create_dir_all(parent).map_err(|e| io_err(parent, e))?;
        }
    }
    fs::File::create(path).map_err(|e| io_err(path, e))
}

fn wio<T>(path: &Path, r: std::io::Result<T>) -> Result<T> {
    r.map_err(|e| io_err(path, e))
}

fn fmt(v: f64) -> String {
    format!("{v:.17e}")
}

/// Write per-run records as CSV. The `error_rel` column is empty for runs
/// with no reference comparison.
pub fn write_records_csv(path: &Path, records: &[ExperimentRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(IceLabError::Data(format!(
            "no records to write to {}",
            path.display()
        )));
    }
    let mut f = create(path)?;
    wio(
        path,
        writeln!(f, "formulation,dx,dt,t_final,runtime_wall,error_rel,flagged"),
    )?;
    for r in records {
        let err = r.error_rel.map(fmt).unwrap_or_default();
        wio(
            path,
            writeln!(
                f,
                "{},{},{},{},{},{},{}",
                r.formulation,
                fmt(r.dx),
                fmt(r.dt),
                fmt(r.t_final),
                fmt(r.runtime_wall),
                err,
                r.flagged
            ),
        )?;
    }
    Ok(())
}

/// Read back a records CSV written by [`write_records_csv`].
pub fn read_records_csv(path: &Path) -> Result<Vec<ExperimentRecord>> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    let mut lines = text.lines().enumerate();
    let parse_err = |line: usize, message: String| IceLabError::Parse {
        path: path.display().to_string(),
        line,
        message,
    };
    let (_, header) = lines
        .next()
        .ok_or_else(|| parse_err(1, "empty file".to_string()))?;
    if header != "formulation,dx,dt,t_final,runtime_wall,error_rel,flagged" {
        return Err(parse_err(1, format!("unexpected header {header:?}")));
    }
    let mut records = Vec::new();
    for (idx, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        let n = idx + 1;
        let parts: Vec<&str> = line.split(',').collect();
        if parts.len() != 7 {
            return Err(parse_err(n, format!("expected 7 fields, got {}", parts.len())));
        }
        let num = |s: &str, what: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|e| parse_err(n, format!("bad {what} {s:?}: {e}")))
        };
        records.push(ExperimentRecord {
            formulation: parts[0].to_string(),
            dx: num(parts[1], "dx")?,
            dt: num(parts[2], "dt")?,
            t_final: num(parts[3], "t_final")?,
            runtime_wall: num(parts[4], "runtime_wall")?,
            error_rel: if parts[5].is_empty() {
                None
            } else {
                Some(num(parts[5], "error_rel")?)
            },
            flagged: parts[6]
                .parse::<bool>()
                .map_err(|e| parse_err(n, format!("bad flagged {:?}: {e}", parts[6])))?,
        });
    }
    Ok(records)
}

/// Write one stability-scan outcome as CSV (one row per mesh size).
pub fn write_dt_scan_csv(path: &Path, scan: &DtScanOutcome) -> Result<()> {
    if scan.results.is_empty() && scan.failures.is_empty() {
        return Err(IceLabError::Data(format!(
            "scan for {} holds no results",
            scan.label
        )));
    }
    let mut f = create(path)?;
    wio(
        path,
        writeln!(f, "formulation,dx,dt_star,flagged,bisection_iterations"),
    )?;
    for r in &scan.results {
        wio(
            path,
            writeln!(
                f,
                "{},{},{},{},{}",
                scan.label,
                fmt(r.dx),
                fmt(r.dt_star),
                r.flagged,
                r.bisection_iterations
            ),
        )?;
    }
    for (dx, message) in &scan.failures {
        wio(path, writeln!(f, "# failed at dx={}: {message}", fmt(*dx)))?;
    }
    Ok(())
}

/// Write the `(dx, dt_star)` pairs of a scan as a gnuplot-friendly table.
pub fn write_dt_scan_dat(path: &Path, scan: &DtScanOutcome) -> Result<()> {
    if scan.results.is_empty() {
        return Err(IceLabError::Data(format!(
            "scan for {} holds no results",
            scan.label
        )));
    }
    let mut f = create(path)?;
    wio(path, writeln!(f, "# {}: dx dt_star", scan.label))?;
    for r in &scan.results {
        wio(path, writeln!(f, "{} {}", fmt(r.dx), fmt(r.dt_star)))?;
    }
    Ok(())
}

/// Write fitted scaling laws, one row per scanned variant.
pub fn write_fit_summary(path: &Path, fits: &[(String, ScalingFit)]) -> Result<()> {
    if fits.is_empty() {
        return Err(IceLabError::Data(format!(
            "no fits to write to {}",
            path.display()
        )));
    }
    let mut f = create(path)?;
    wio(path, writeln!(f, "formulation,p,prefactor,residual"))?;
    for (label, fit) in fits {
        wio(
            path,
            writeln!(
                f,
                "{},{},{},{}",
                label,
                fmt(fit.p),
                fmt(fit.prefactor()),
                fmt(fit.residual)
            ),
        )?;
    }
    Ok(())
}

/// Write manufactured-solution convergence results, one row per refinement,
/// followed by one summary comment per case.
pub fn write_mms_csv(path: &Path, reports: &[crate::harness::mms::MmsReport]) -> Result<()> {
    if reports.is_empty() {
        return Err(IceLabError::Data(format!(
            "no convergence reports to write to {}",
            path.display()
        )));
    }
    let mut f = create(path)?;
    wio(path, writeln!(f, "case,n,h,velocity_error,pressure_error"))?;
    for r in reports {
        for (k, &n) in r.refinements.iter().enumerate() {
            wio(
                path,
                writeln!(
                    f,
                    "{},{},{},{},{}",
                    r.case_name,
                    n,
                    fmt(r.h[k]),
                    fmt(r.velocity_errors[k]),
                    fmt(r.pressure_errors[k])
                ),
            )?;
        }
    }
    for r in reports {
        wio(
            path,
            writeln!(
                f,
                "# {}: velocity_order={:.3}, {}, passed={}",
                r.case_name, r.velocity_order, r.criterion, r.passed
            ),
        )?;
    }
    Ok(())
}

/// Write the asymptotic-cost table, one row per formulation variant.
pub fn write_cost_table_csv(path: &Path, rows: &[crate::cost::CostTableRow]) -> Result<()> {
    if rows.is_empty() {
        return Err(IceLabError::Data(format!(
            "no cost rows to write to {}",
            path.display()
        )));
    }
    let mut f = create(path)?;
    wio(path, writeln!(f, "model,gamma,exponent,formula"))?;
    for r in rows {
        wio(
            path,
            writeln!(f, "{},{},{},{}", r.model, r.gamma, r.exponent, r.formula),
        )?;
    }
    Ok(())
}

/// Write a surface history in long form: one `(t, x, h)` row per node per
/// recorded time.
pub fn write_surface_history_csv(path: &Path, history: &SurfaceHistory) -> Result<()> {
    if history.times.is_empty() {
        return Err(IceLabError::Data(format!(
            "no history to write to {}",
            path.display()
        )));
    }
    let mut f = create(path)?;
    wio(path, writeln!(f, "t,x,h"))?;
    for (k, t) in history.times.iter().enumerate() {
        for (x, h) in history.x.iter().zip(&history.surfaces[k]) {
            wio(path, writeln!(f, "{},{},{}", fmt(*t), fmt(*x), fmt(*h)))?;
        }
    }
    Ok(())
}

/// Write a surface history as gnuplot blocks: one `x h` table per recorded
/// time, blocks separated by blank lines (plot with `every :::k::k`).
pub fn write_surface_history_dat(path: &Path, history: &SurfaceHistory) -> Result<()> {
    if history.times.is_empty() {
        return Err(IceLabError::Data(format!(
            "no history to write to {}",
            path.display()
        )));
    }
    let mut f = create(path)?;
    for (k, t) in history.times.iter().enumerate() {
        wio(path, writeln!(f, "# t = {}", fmt(*t)))?;
        for (x, h) in history.x.iter().zip(&history.surfaces[k]) {
            wio(path, writeln!(f, "{} {}", fmt(*x), fmt(*h)))?;
        }
        if k + 1 < history.times.len() {
            wio(path, writeln!(f))?;
        }
    }
    Ok(())
}
