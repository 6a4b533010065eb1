//! Subcommand pipelines. Each returns the list of result files it wrote
//! (relative to the output directory) for the manifest; every file is
//! written through an in-memory buffer or flushed writer so partial files
//! never masquerade as results.

mod analysis;
mod fringes;
pub(crate) mod simulate;

use std::fs;
use std::path::Path;

use kpz2d::Result;

use crate::config::{RunConfig, Subcommand};

pub fn dispatch(run: &RunConfig) -> Result<Vec<String>> {
    let out = run.output_dir.as_path();
    match &run.subcommand {
        Subcommand::SimulateKpz(job) => simulate::simulate_kpz(job, out),
        Subcommand::SimulateGpe(job) => simulate::simulate_gpe(job, out),
        Subcommand::AnalyzeCorrelations(job) => analysis::analyze(job, out),
        Subcommand::TabulateScaling(job) => analysis::tabulate(job, out),
        Subcommand::CollapseFit(job) => analysis::collapse(job, out),
        Subcommand::FiniteSize(job) => analysis::finite_size(job, out),
        Subcommand::FringeSynthesize(job) => fringes::synthesize(job, out),
        Subcommand::FringeDemodulate(job) => fringes::demodulate(job, out),
        Subcommand::FringeNoise(job) => fringes::noise(job, out, run.seed),
    }
}

/// Serializes through a memory buffer and writes the file in one call, so a
/// failed serialization leaves no file behind.
pub(crate) fn write_buffered<F>(dir: &Path, name: &str, fill: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = Vec::new();
    fill(&mut buf)?;
    fs::write(dir.join(name), buf)?;
    Ok(())
}

/// Sample mean and its standard error (realization scatter, ddof 1); a
/// single sample reports zero error.
pub(crate) fn mean_and_stderr(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    let mean = values.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}
