//! Experiment drivers: TOML-configured coupled runs, maximum-timestep scans,
//! error-versus-runtime ladders, manufactured-solution convergence studies,
//! and plain-text result writers.

pub mod accuracy;
pub mod config;
pub mod coupled;
pub mod mms;
pub mod output;
pub mod scan;

pub use accuracy::{relative_l2_error, run_error_vs_runtime, ErrorRuntimeReport, LadderEntry};
pub use config::{
    DtSearchSection, ExperimentConfig, GeometrySection, OutputSection, ReferenceSection,
    RunSection,
};
pub use coupled::{run_coupled_simulation, CoupledRun, ExperimentRecord, SurfaceHistory};
pub use mms::{run_all_mms, run_mms_convergence, MmsCase, MmsReport};
pub use output::{
    read_records_csv, write_cost_table_csv, write_dt_scan_csv, write_dt_scan_dat,
    write_fit_summary, write_mms_csv, write_records_csv, write_surface_history_csv,
    write_surface_history_dat,
};
pub use scan::{
    default_scan_seed, default_scan_t_final, measure_dt_star, run_dt_scan, DtScanOutcome,
    DtScanParams,
};
