//! Crate-wide error type.

use thiserror::Error;

/// Failure modes across simulation, estimation, and fitting.
///
/// Variants are grouped so callers (in particular the command-line runner)
/// can map them onto a small set of exit classes: invalid configuration,
/// numerical blow-up, insufficient data, and fit failure.
#[derive(Debug, Error)]
pub enum Error {
    /// Lattice geometry is unusable: side too small or value buffer of the
    /// wrong length.
    #[error("invalid lattice: {0}")]
    InvalidLattice(String),

    /// A parameter violates its documented constraint.
    #[error("invalid parameter: {0}")]
    Parameter(String),

    /// Pump power below condensation threshold where an above-threshold
    /// steady state is required.
    #[error("pump power {p} is below the threshold {p_th}")]
    BelowThreshold { p: f64, p_th: f64 },

    /// Non-finite field values appeared during time integration.
    #[error("numerical blow-up at step {step} (t = {time}) in trajectory {stream_id}")]
    BlowUp { step: u64, time: f64, stream_id: u64 },

    /// Reservoir density was clamped at zero on too many site-steps for the
    /// run to be trusted.
    #[error("reservoir clamped on {fraction:.4e} of site-steps (budget {budget:.4e}) in trajectory {stream_id}")]
    ReservoirClamp {
        fraction: f64,
        budget: f64,
        stream_id: u64,
    },

    /// Not enough usable data to produce the requested result.
    #[error("insufficient data: {0}")]
    InsufficientData(String),

    /// A fit could not be completed or degenerated.
    #[error("fit failure: {0}")]
    FitFailure(String),

    /// Malformed input file (binary blob or CSV).
    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
