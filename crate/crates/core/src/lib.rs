//! Short-term voltage stability indices computed from post-fault voltage
//! trajectories.
//!
//! The pipeline decomposes each channel into oscillatory modes and a slow
//! recovery trend ([`emd`]), estimates time-resolved Lyapunov exponents
//! ([`embed`], [`lyapunov`]), bins the resulting divergence factors and
//! scores them against a shifted-reversed Gompertz reference with the KL
//! divergence ([`distribution`]). [`indices`] assembles the oscillation and
//! recovery indices; [`oel`] derives recovery thresholds from generator
//! over-excitation limits. [`synth`] generates validation signals.

pub mod config;
pub mod distribution;
pub mod emd;
pub mod embed;
pub mod indices;
pub mod ingest;
pub mod lyapunov;
pub mod oel;
pub mod stream;
pub mod synth;

pub use distribution::{DivergenceHistogram, GompertzReference, Grid};
pub use emd::DecompositionResult;
pub use embed::EmbeddedTrajectory;
pub use indices::{AssessConfig, Classification, StabilityAssessment};
pub use ingest::{Channel, VoltageTrajectory};
pub use lyapunov::ExponentSeries;

use thiserror::Error;

/// Pipeline error tagged with the stage that produced it.
#[derive(Debug, Error)]
pub enum Error {
    #[error("ingest: {0}")]
    Ingest(#[from] ingest::IngestError),
    #[error("config: {0}")]
    Config(#[from] config::ConfigError),
    #[error("emd: {0}")]
    Emd(#[from] emd::EmdError),
    #[error("embed: {0}")]
    Embed(#[from] embed::EmbedError),
    #[error("lyapunov: {0}")]
    Lyapunov(#[from] lyapunov::LyapunovError),
    #[error("distribution: {0}")]
    Distribution(#[from] distribution::DistributionError),
    #[error("indices: {0}")]
    Indices(#[from] indices::IndicesError),
    #[error("oel: {0}")]
    Oel(#[from] oel::OelError),
    #[error("synth: {0}")]
    Synth(#[from] synth::SynthError),
}

impl Error {
    /// True for problems with the supplied data or settings, as opposed to
    /// failures inside a numerical stage.
    pub fn is_validation(&self) -> bool {
        match self {
            Error::Ingest(_) | Error::Config(_) => true,
            Error::Oel(e) => e.is_validation(),
            Error::Synth(e) => e.is_validation(),
            _ => false,
        }
    }
}
