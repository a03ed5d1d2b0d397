//! Classical stochastic-field simulation and click-statistics analysis for
//! multiplexed photon-number-resolving detectors.
//!
//! The chain runs from a time-tagged event simulator ([`field_model`]) through
//! fixed-window aggregation ([`coincidence`]) to binomial model fitting
//! ([`click_model`], [`fitter`]), alongside the intensity-interferometer SNR
//! scaling in [`snr`]. [`io`] and [`pipeline`] provide the file formats and
//! the command-line workflow.

pub mod click_model;
pub mod coincidence;
pub mod error;
pub mod field_model;
pub mod fitter;
pub mod io;
pub mod marcum;
pub mod pipeline;
pub mod rng;
pub mod simplex;
pub mod snr;

pub use click_model::{click_distribution, pattern_distribution, poisson_reconstruction, ClickModelParams, PhotonDistribution};
pub use coincidence::{aggregate, aggregate_sweep, Aggregator, ClickHistogram, WindowSchedule};
pub use error::{Error, ErrorClass, Result};
pub use field_model::{
    calibrate_threshold, detection_probability, simulate_stream, CoherentSource, DetectorSpec, SamplingMode, SimConfig,
    SplitterNetwork, TagRecord, TimeTagStream,
};
pub use fitter::{chi_squared, fit, fit_sweep, FitConfig, FitResult};
pub use snr::{snr_db, SnrParams};
