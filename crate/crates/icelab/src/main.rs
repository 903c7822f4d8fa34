//! Command-line driver for the ice-flow laboratory.
//!
//! Every subcommand reads a TOML experiment configuration and accepts the
//! same set of overriding flags.  Exit codes: 0 when every requested run
//! completed unflagged, 1 when a run aborted or a search failed, 2 for
//! configuration or I/O errors.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;

use icelab::cost::{cost_table, variant_name, CostInputs};
use icelab::error::{IceLabError, Result};
use icelab::fem::Formulation;
use icelab::harness::{
    run_all_mms, run_coupled_simulation, run_dt_scan, write_cost_table_csv, write_dt_scan_csv,
    write_dt_scan_dat, write_fit_summary, write_mms_csv, write_records_csv,
    write_surface_history_csv, write_surface_history_dat, DtScanParams, ExperimentConfig,
    LadderEntry,
};

#[derive(Parser)]
#[command(
    name = "icelab",
    version,
    about = "Two-dimensional ice-sheet flow laboratory",
    long_about = "Couples shallow-ice and Stokes momentum solvers to a semi-implicit free \
                  surface and measures accuracy, runtime, and the largest stable timestep."
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one coupled simulation per resolution and write surface histories.
    Simulate(CommonArgs),
    /// Bisect the largest stable timestep per resolution and fit its scaling.
    DtScan(CommonArgs),
    /// Run a timestep ladder against a reference solve and record error vs runtime.
    ErrorRuntime(CommonArgs),
    /// Verify the finite-element solvers against manufactured solutions.
    Mms(CommonArgs),
    /// Print the asymptotic cost table for all formulation variants.
    CostTable(CommonArgs),
}

/// Flags shared by every subcommand: the configuration file plus field
/// overrides applied before validation.
#[derive(Args)]
struct CommonArgs {
    /// TOML experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override [run] formulation (sia, w-sia, w-siastokes, w-stokes).
    #[arg(long)]
    formulation: Option<String>,
    /// Override [run] theta, the free-surface stabilization weight in [0, 1].
    #[arg(long)]
    theta: Option<f64>,
    /// Override [run] n_x (repeat the flag or comma-separate for sweeps).
    #[arg(long = "nx", value_delimiter = ',')]
    nx: Vec<usize>,
    /// Override [run] dt, years.
    #[arg(long)]
    dt: Option<f64>,
    /// Override [run] t_final, years.
    #[arg(long)]
    tfinal: Option<f64>,
    /// Override [run] upwind (true/false).
    #[arg(long, value_name = "BOOL")]
    upwind: Option<bool>,
    /// Override [output] dir.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl CommonArgs {
    /// Load the configuration, apply the overriding flags, and validate the
    /// combined result.
    fn load(&self) -> Result<ExperimentConfig> {
        let path = self.config.display().to_string();
        let mut config = ExperimentConfig::from_file_unchecked(&path)?;
        if let Some(f) = &self.formulation {
            config.run.formulation = f.clone();
        }
        if let Some(theta) = self.theta {
            config.run.theta = theta;
        }
        if !self.nx.is_empty() {
            config.run.n_x = self.nx.clone();
        }
        if let Some(dt) = self.dt {
            config.run.dt = Some(dt);
        }
        if let Some(t_final) = self.tfinal {
            config.run.t_final = t_final;
        }
        if let Some(upwind) = self.upwind {
            config.run.upwind = upwind;
        }
        if let Some(out) = &self.out {
            config.output.dir = out.display().to_string();
        }
        config.validate()?;
        Ok(config)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match &cli.command {
        Command::Simulate(args) => run_simulate(args),
        Command::DtScan(args) => run_scan(args),
        Command::ErrorRuntime(args) => run_error_runtime(args),
        Command::Mms(args) => run_mms(args),
        Command::CostTable(args) => run_cost_table(args),
    };
    match outcome {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

/// One coupled run per configured resolution, executed across the worker
/// pool; histories and the record table land in the output directory.
fn run_simulate(args: &CommonArgs) -> Result<bool> {
    let config = args.load()?;
    let profile = config.geometry.build_profile()?;
    let formulation = config.formulation()?;
    let n_y = config.n_y();
    let dt = config.run.dt.ok_or_else(|| {
        IceLabError::Config("simulate needs a timestep: set [run] dt or pass --dt".into())
    })?;
    let label = variant_name(formulation, config.run.theta > 0.0);
    let out = PathBuf::from(&config.output.dir);

    let runs: Vec<Result<_>> = config
        .run
        .n_x
        .par_iter()
        .map(|&n_x| {
            run_coupled_simulation(
                &profile,
                n_x,
                n_y,
                formulation,
                config.run.theta,
                config.run.upwind,
                dt,
                config.run.t_final,
            )
        })
        .collect();

    let mut records = Vec::new();
    let mut all_clean = true;
    for (&n_x, run) in config.run.n_x.iter().zip(runs) {
        let (history, record, abort) = run?;
        let base = format!("simulate-{label}-nx{n_x}");
        write_surface_history_csv(&out.join(format!("{base}.csv")), &history)?;
        write_surface_history_dat(&out.join(format!("{base}.dat")), &history)?;
        let steps = history.times.len() - 1;
        println!(
            "{label} nx={n_x} dx={:.1} m: {steps} steps to t={} yr in {:.2} s{}",
            record.dx,
            record.t_final,
            record.runtime_wall,
            if record.flagged { " [FLAGGED]" } else { "" }
        );
        if let Some(message) = abort {
            eprintln!("{label} nx={n_x}: aborted: {message}");
        }
        all_clean &= !record.flagged;
        records.push(record);
    }
    write_records_csv(&out.join("simulate-records.csv"), &records)?;
    println!("wrote {}", out.join("simulate-records.csv").display());
    Ok(all_clean)
}

/// Largest-stable-timestep search over the configured resolutions.
fn run_scan(args: &CommonArgs) -> Result<bool> {
    let config = args.load()?;
    if config.run.n_x.len() < 3 {
        return Err(IceLabError::Config(format!(
            "dt-scan needs at least 3 resolutions to fit a scaling law, got {}",
            config.run.n_x.len()
        )));
    }
    let profile = config.geometry.build_profile()?;
    let formulation = config.formulation()?;
    let search = config.dt_search.clone().unwrap_or_default();
    let defaults = DtScanParams::default();
    let params = DtScanParams {
        lo: search.lo,
        rel_tol: search.rel_tol.unwrap_or(defaults.rel_tol),
        cap: search.cap.unwrap_or(defaults.cap),
        t_final: search.t_final,
        lo_floor: defaults.lo_floor,
    };
    let scan = run_dt_scan(
        &profile,
        formulation,
        config.run.theta,
        config.run.upwind,
        &config.run.n_x,
        config.n_y(),
        &params,
    )?;

    let out = PathBuf::from(&config.output.dir);
    for r in &scan.results {
        println!(
            "{} dx={:.1} m: dt* = {:.6} yr ({} bisection iterations{})",
            scan.label,
            r.dx,
            r.dt_star,
            r.bisection_iterations,
            if r.flagged { ", hit cap" } else { "" }
        );
    }
    for (dx, message) in &scan.failures {
        eprintln!("{} dx={dx:.1} m: search failed: {message}", scan.label);
    }
    write_dt_scan_csv(&out.join(format!("dt-scan-{}.csv", scan.label)), &scan)?;
    write_dt_scan_dat(&out.join(format!("dt-scan-{}.dat", scan.label)), &scan)?;
    if let Some(fit) = &scan.fit {
        println!(
            "{}: dt* ~ {:.3e} * dx^{:.3} (residual {:.2e})",
            scan.label,
            fit.prefactor(),
            fit.p,
            fit.residual
        );
        write_fit_summary(
            &out.join(format!("dt-scan-{}-fit.csv", scan.label)),
            &[(scan.label.clone(), fit.clone())],
        )?;
    } else {
        eprintln!(
            "{}: not enough successful searches for a scaling fit",
            scan.label
        );
    }
    Ok(scan.failures.is_empty())
}

/// Timestep ladder against a reference run on the same grid.
fn run_error_runtime(args: &CommonArgs) -> Result<bool> {
    let config = args.load()?;
    let profile = config.geometry.build_profile()?;
    let formulation = config.formulation()?;
    let reference = config.reference.clone().ok_or_else(|| {
        IceLabError::Config("error-runtime needs a [reference] section with a dt".into())
    })?;
    if config.run.dt_ladder.is_empty() {
        return Err(IceLabError::Config(
            "error-runtime needs a non-empty [run] dt_ladder".into(),
        ));
    }
    let ladder = LadderEntry {
        formulation,
        theta: config.run.theta,
        upwind: config.run.upwind,
        dts: config.run.dt_ladder.clone(),
    };
    let report = icelab::harness::run_error_vs_runtime(
        &profile,
        config.run.n_x[0],
        config.n_y(),
        config.run.t_final,
        &[ladder],
        Formulation::parse(&reference.formulation)?,
        0.0,
        reference.dt,
    )?;

    let mut records = vec![report.reference.clone()];
    records.extend(report.records.iter().cloned());
    let mut all_clean = true;
    for r in &records {
        let err = r
            .error_rel
            .map(|e| format!("{e:.3e}"))
            .unwrap_or_else(|| "-".to_string());
        println!(
            "{} dt={} yr: error={err} runtime={:.2} s{}",
            r.formulation,
            r.dt,
            r.runtime_wall,
            if r.flagged { " [FLAGGED]" } else { "" }
        );
        all_clean &= !r.flagged;
    }
    let out = PathBuf::from(&config.output.dir);
    let label = variant_name(formulation, config.run.theta > 0.0);
    let path = out.join(format!("error-runtime-{label}.csv"));
    write_records_csv(&path, &records)?;
    println!("wrote {}", path.display());
    Ok(all_clean)
}

/// Manufactured-solution convergence of the assembled saddle-point systems.
fn run_mms(args: &CommonArgs) -> Result<bool> {
    let config = args.load()?;
    let (reports, all_passed) = run_all_mms()?;
    for r in &reports {
        println!(
            "{}: velocity order {:.3} over n = {:?} ({}) -> {}",
            r.case_name,
            r.velocity_order,
            r.refinements,
            r.criterion,
            if r.passed { "pass" } else { "FAIL" }
        );
    }
    let path = PathBuf::from(&config.output.dir).join("mms.csv");
    write_mms_csv(&path, &reports)?;
    println!("wrote {}", path.display());
    Ok(all_passed)
}

/// Asymptotic cost per formulation variant, as a function of the horizontal
/// node count m.
fn run_cost_table(args: &CommonArgs) -> Result<bool> {
    let config = args.load()?;
    let inputs = CostInputs {
        m: config.run.n_x[0] + 1,
        d: 2,
        ..CostInputs::default()
    };
    let rows = cost_table(&inputs);
    println!(
        "asymptotic cost per variant (d = {}, alpha = {}, {} nonlinear iterations):",
        inputs.d, inputs.alpha, inputs.n_iter
    );
    println!("{:<18} {:>6} {:>9}  formula", "model", "gamma", "exponent");
    for r in &rows {
        println!(
            "{:<18} {:>6} {:>9.3}  {}",
            r.model, r.gamma, r.exponent, r.formula
        );
    }
    let path = PathBuf::from(&config.output.dir).join("cost-table.csv");
    write_cost_table_csv(&path, &rows)?;
    println!("wrote {}", path.display());
    Ok(true)
}
