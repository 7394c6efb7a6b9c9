//! Crate-wide error type.
//!
//! Recoverable conditions (bad configuration, degenerate channel draws,
//! malformed files) surface as [`Error`] variants. Violations of internal
//! programming contracts — shape mismatches, stale forward caches, invalid
//! indices — panic via `assert!`/`debug_assert!` instead of returning errors.

use std::path::PathBuf;

/// Convenience alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Everything that can go wrong at a recoverable level.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A configuration value or combination of values is invalid.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// A relay-to-destination link is too weak to carry any signal.
    #[error("relay {relay}: destination link is degenerate (|h|^2 = {sq_mag:.3e})")]
    DegenerateLink {
        /// Zero-based relay index.
        relay: usize,
        /// Squared magnitude of the offending channel gain.
        sq_mag: f64,
    },

    /// Every relay link is degenerate, so no equilibrium exists.
    #[error("no usable relay link in the current channel state")]
    NoEquilibrium,

    /// The closed-form stationary price is numerically singular and must be
    /// dropped from the candidate set.
    #[error("stationary-price formula is numerically singular (denominator {denominator:.3e})")]
    SingularPrice {
        /// Magnitude of the vanishing denominator.
        denominator: f64,
    },

    /// Sampling was requested from a replay buffer that holds no experience.
    #[error("cannot sample from an empty replay buffer")]
    EmptyBuffer,

    /// A checkpoint file could not be parsed.
    #[error("malformed checkpoint {path}: {reason}")]
    Checkpoint {
        /// File that failed to load.
        path: PathBuf,
        /// Human-readable cause.
        reason: String,
    },

    /// A TOML scenario file could not be parsed.
    #[error("config parse error: {0}")]
    Parse(String),

    /// Underlying I/O failure.
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    /// CSV serialization failure.
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}
