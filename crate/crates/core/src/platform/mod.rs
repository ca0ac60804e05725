//! Platform magnetic interference (18-term Tolles-Lawson model), magnetometer
//! simulation and the batch least-squares fitter.

mod sensor;
mod tolles_lawson;

pub use sensor::{
    simulate_scalar_measurement, simulate_vector_measurement, BodyAttitude, MagSensorSpec,
};
pub use tolles_lawson::{
    exact_contaminated_magnitude, fit_tl_batch, perturbation_vector, scalar_perturbation,
    tl_regressors, Regressors, TlCoefficients, TlFit, MIN_FIELD_FOR_DIRECTION, N_TL,
    TL_SCHEMA_VERSION,
};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum PlatformError {
    #[error("field magnitude {0:.1} nT too small to define a direction")]
    DegenerateField(f64),
    #[error("batch fit needs at least {min} samples, got {got}")]
    TooFewSamples { got: usize, min: usize },
    #[error("regressor matrix is rank deficient; use a positive ridge parameter")]
    Singular,
    #[error("invalid platform parameter: {0}")]
    Invalid(String),
    #[error("coefficient file: {0}")]
    Json(#[from] serde_json::Error),
}
