//! Command-line pipeline around `expecta-core`: generate datasets, train
//! classifiers, calibrate and score the detector, attribute scores, audit
//! overlap and render reports, all inside one run directory.

pub mod config;
pub mod error;
pub mod pipeline;
pub mod report;
pub mod rundir;
pub mod svg;

pub use config::{Profile, RunConfig};
pub use error::{CliError, CliResult};
pub use report::Report;
pub use rundir::RunDir;

/// Configures the global thread pool from `EXPECTA_THREADS`; `0` selects
/// the single-threaded reference mode.
pub fn init_threads() -> CliResult<usize> {
    let n = match std::env::var("EXPECTA_THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .map_err(|_| CliError::Config(format!("EXPECTA_THREADS must be a non-negative integer, got {v:?}")))?,
        Err(_) => return Ok(rayon::current_num_threads()),
    };
    let threads = n.max(1);
    // A pool that is already initialized is left as it is.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
    Ok(threads)
}

/// Runs every stage in a fresh run directory.
pub fn audit(cfg: &RunConfig) -> CliResult<(RunDir, Report)> {
    let run = RunDir::create(cfg)?;
    log::info!("run directory {}", run.root.display());
    pipeline::gen(cfg, &run)?;
    pipeline::train(cfg, &run)?;
    pipeline::calibrate(cfg, &run)?;
    pipeline::score(cfg, &run)?;
    pipeline::attribute(cfg, &run)?;
    let report = report::report(cfg, &run)?;
    Ok((run, report))
}
