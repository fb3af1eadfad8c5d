//! Scenario runner for the `fastlight` simulator.
//!
//! A scenario names a medium (explicit lines or calibration targets), a pulse,
//! and optionally an imaging setup and a sweep. Running it writes plot-ready
//! CSV traces, a metrics report, maps, gated frame rasters and a manifest of
//! SHA-256 hashes into an output directory.

pub mod config;
pub mod error;
pub mod output;
pub mod presets;
pub mod run;
pub mod sweep;

pub use config::{Diagnostic, Scenario};
pub use error::CliError;
pub use run::{run_scenario, Report, RunOverrides, ScenarioOutcome};
pub use sweep::{run_sweep, SweepTable};

use std::path::{Path, PathBuf};

/// Loads a scenario from a preset name or a file path, returning it with the
/// directory that relative paths inside it resolve against.
pub fn load_scenario(source: &str) -> Result<(Scenario, PathBuf), CliError> {
    let path = Path::new(source);
    if path.is_file() {
        let text = std::fs::read_to_string(path)?;
        let scenario = Scenario::parse(&text).map_err(|d| CliError::Diagnostics(vec![d]))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        return Ok((scenario, base));
    }
    match presets::get(source) {
        Some(text) => {
            let scenario = Scenario::parse(text).map_err(|d| CliError::Diagnostics(vec![d]))?;
            Ok((scenario, PathBuf::from(".")))
        }
        None => Err(CliError::Config(format!(
            "{source:?} is neither a file nor a preset (presets: {})",
            presets::NAMES.join(", ")
        ))),
    }
}

/// Diagnostics for a scenario file or preset; never fails and never writes.
pub fn validate_config(source: &str) -> Vec<Diagnostic> {
    match load_scenario(source) {
        Ok((scenario, base)) => scenario.diagnostics(&base),
        Err(CliError::Diagnostics(d)) => d,
        Err(e) => vec![Diagnostic { field: "<scenario>".into(), message: e.to_string() }],
    }
}

/// Runs `f` on a rayon pool of `threads` workers.
pub fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> Result<T, CliError> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads.max(1))
        .build()
        .map_err(|e| CliError::Other(e.to_string()))?;
    Ok(pool.install(f))
}
