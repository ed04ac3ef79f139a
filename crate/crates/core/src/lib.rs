//! Photon-bunching (intensity interferometry) range finding with thermal light.
//!
//! - [`quantities`]: units, physical constants, source and peak models.
//! - [`photonsim`]: simulated detector timestamp streams.
//! - [`correlator`]: coincidence histograms and normalized `g²(τ)`.
//! - [`estimator`]: bunching-peak fit, range and signal-to-noise estimates.
//! - [`tagio`]: binary and text timestamp files.
//! - [`config`]: TOML run configuration and built-in presets.
//!
//! Model and fit types are generic over the float type; the aliases below
//! fix them to `f64` or `f32`.

pub mod config;
pub mod correlator;
pub mod error;
pub mod estimator;
pub mod photonsim;
pub mod quantities;
pub mod scalar;
pub mod tagio;

pub use correlator::{
    auto_correlate, cross_correlate, cross_correlate_chunked, merge_histograms, normalize_g2, CorrelationConfig,
    CorrelationHistogram,
};
pub use error::{Error, Result};
pub use estimator::{estimate_range, fit_g2, snr_measure, snr_predict, FitOptions};
pub use photonsim::{simulate_ranging_scenario, DetectorSpec, EventStream, ScenarioConfig};
pub use quantities::{Medium, Meters, Seconds, Tick};
pub use scalar::Real;

pub type BunchingPeak64 = quantities::BunchingPeak<f64>;
pub type BunchingPeak32 = quantities::BunchingPeak<f32>;
pub type SourceSpec64 = quantities::SourceSpec<f64>;
pub type SourceSpec32 = quantities::SourceSpec<f32>;
pub type G2Series64 = correlator::G2Series<f64>;
pub type G2Series32 = correlator::G2Series<f32>;
pub type FitResult64 = estimator::FitResult<f64>;
pub type FitResult32 = estimator::FitResult<f32>;
pub type RangeEstimate64 = estimator::RangeEstimate<f64>;
pub type RangeEstimate32 = estimator::RangeEstimate<f32>;
pub type SnrReport64 = estimator::SnrReport<f64>;
pub type SnrReport32 = estimator::SnrReport<f32>;
