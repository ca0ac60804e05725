//! Map-matching error-state filter with online platform-coefficient learning.
//!
//! The filter runs on top of a (possibly aided) navigator. Its 26-element state
//! is the navigator's horizontal position and velocity error, a heading error,
//! the 18 platform coefficients, a scalar field bias and a horizontal wind.
//! Position errors follow the convention `δpos = navigator − truth`, so the
//! corrected position is the navigator output moved by `−δpos`.

mod acquire;
mod ekf;
mod snapshot;

pub use acquire::{search_offset, AcquisitionResult, AcquisitionSample};
pub use ekf::{FilterState, InnovationRecord, MagObservation, NavSolution, ACQUIRING};
pub use snapshot::{write_innovation_csv, CoefficientSnapshot, StartMode, SNAPSHOT_SCHEMA_VERSION};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const N_STATES: usize = 26;

/// Indices into the state vector.
pub mod idx {
    pub const POS: usize = 0;
    pub const VEL: usize = 2;
    pub const PSI: usize = 4;
    pub const COEF: usize = 5;
    pub const BIAS: usize = 23;
    pub const WIND: usize = 24;
}

/// Largest initial position sigma (m) inside the supported envelope.
pub const POSITION_ENVELOPE_M: f64 = 4_000.0;

#[derive(Debug, Error)]
pub enum FilterError {
    #[error("filter diverged at t = {t:.1} s: {reason}")]
    Diverged { t: f64, reason: String },
    #[error("warm start rejected: {0}")]
    WarmStartRejected(String),
    #[error("coefficient model has not converged (confidence gate closed)")]
    NotConverged,
    #[error("invalid filter configuration: {0}")]
    Config(String),
    #[error("snapshot: {0}")]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// How the temporal disturbance model is used.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemporalCorrection {
    /// The bias state absorbs temporal variation.
    #[default]
    BiasState,
    /// The modelled temporal offset is subtracted from each measurement first.
    PreSubtract,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Magnetic update rate (Hz).
    pub update_rate: f64,
    /// Scalar measurement noise (nT, 1σ) before map terms.
    pub measurement_sigma: f64,
    /// Map error allowance (nT, 1σ).
    pub map_sigma: f64,
    pub vel_sigma0: f64,
    pub heading_sigma0: f64,
    pub permanent_sigma0: f64,
    pub induced_sigma0: f64,
    pub eddy_sigma0: f64,
    pub bias_sigma0: f64,
    pub wind_sigma0: f64,
    /// Process noise spectral densities (per second).
    pub q_pos: f64,
    pub q_vel: f64,
    pub q_heading: f64,
    pub q_permanent: f64,
    pub q_induced: f64,
    pub q_eddy: f64,
    pub q_bias: f64,
    pub q_wind: f64,
    /// Innovation gate in standard deviations.
    pub gate_sigma: f64,
    /// Position-covariance inflation after `inflate_after` consecutive rejections.
    pub inflation_factor: f64,
    pub inflate_after: usize,
    /// Confidence gate: minimum elapsed time (s).
    pub confidence_min_time: f64,
    /// Confidence gate: platform-model variance ratio threshold.
    pub confidence_ratio: f64,
    pub temporal_correction: TemporalCorrection,
    /// Horizontal sensor offset from the navigation reference in body x/y (m).
    pub lever_arm: [f64; 2],
    /// Use smoothed maps while the position is uncertain.
    pub multiscale: bool,
    /// Multiscale rule: the coarsest smoothing length not above this multiple of the position sigma.
    pub smoothing_fraction: f64,
    /// Profile-correlation acquisition runs when the initial position sigma
    /// exceeds this (m).
    pub acquisition_threshold: f64,
    /// Length of the buffered acquisition window (s); 0 disables acquisition.
    pub acquisition_window: f64,
    /// Position sigma installed after a successful acquisition (m).
    pub acquisition_sigma: f64,
    /// Decimal year at t = 0 for the core field.
    pub epoch: f64,
    /// Vehicle identity checked against warm-start snapshots.
    pub vehicle_id: String,
    /// Fall back to a cold start when a warm-start snapshot is rejected.
    pub warm_fallback_to_cold: bool,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            update_rate: 10.0,
            measurement_sigma: 1.0,
            map_sigma: 2.0,
            vel_sigma0: 1.0,
            heading_sigma0: 1e-3,
            permanent_sigma0: 300.0,
            induced_sigma0: 0.01,
            eddy_sigma0: 0.01,
            bias_sigma0: 100.0,
            wind_sigma0: 10.0,
            q_pos: 0.01,
            q_vel: 1e-4,
            q_heading: 1e-10,
            q_permanent: 1e-4,
            q_induced: 1e-14,
            q_eddy: 1e-12,
            q_bias: 0.25,
            q_wind: 1e-4,
            gate_sigma: 5.0,
            inflation_factor: 1.2,
            inflate_after: 10,
            confidence_min_time: 60.0,
            confidence_ratio: 0.05,
            temporal_correction: TemporalCorrection::BiasState,
            lever_arm: [0.0, 0.0],
            multiscale: true,
            smoothing_fraction: 0.5,
            acquisition_threshold: 250.0,
            acquisition_window: 60.0,
            acquisition_sigma: 100.0,
            epoch: 2024.0,
            vehicle_id: "vehicle".into(),
            warm_fallback_to_cold: false,
        }
    }
}

impl FilterConfig {
    pub fn validate(&self) -> Result<(), FilterError> {
        let positive = [
            ("update_rate", self.update_rate),
            ("gate_sigma", self.gate_sigma),
            ("inflation_factor", self.inflation_factor),
            ("confidence_ratio", self.confidence_ratio),
            ("smoothing_fraction", self.smoothing_fraction),
            ("acquisition_threshold", self.acquisition_threshold),
            ("acquisition_sigma", self.acquisition_sigma),
            ("permanent_sigma0", self.permanent_sigma0),
            ("induced_sigma0", self.induced_sigma0),
            ("eddy_sigma0", self.eddy_sigma0),
            ("bias_sigma0", self.bias_sigma0),
            ("vel_sigma0", self.vel_sigma0),
            ("heading_sigma0", self.heading_sigma0),
            ("wind_sigma0", self.wind_sigma0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(FilterError::Config(format!("{name} must be > 0")));
            }
        }
        let non_negative = [
            ("measurement_sigma", self.measurement_sigma),
            ("map_sigma", self.map_sigma),
            ("q_pos", self.q_pos),
            ("q_vel", self.q_vel),
            ("q_heading", self.q_heading),
            ("q_permanent", self.q_permanent),
            ("q_induced", self.q_induced),
            ("q_eddy", self.q_eddy),
            ("q_bias", self.q_bias),
            ("q_wind", self.q_wind),
            ("confidence_min_time", self.confidence_min_time),
            ("acquisition_window", self.acquisition_window),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(FilterError::Config(format!("{name} must be >= 0")));
            }
        }
        if self.inflate_after == 0 {
            return Err(FilterError::Config("inflate_after must be >= 1".into()));
        }
        Ok(())
    }
}
