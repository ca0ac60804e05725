use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{scalar_perturbation, tl_regressors, PlatformError, TlCoefficients};
use crate::geomag::FieldVector;

/// Vehicle attitude as the rotation taking local-level (NED) vectors into the
/// body frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BodyAttitude {
    pub q: UnitQuaternion<f64>,
}

impl Default for BodyAttitude {
    fn default() -> Self {
        Self {
            q: UnitQuaternion::identity(),
        }
    }
}

impl BodyAttitude {
    /// From aerospace roll, pitch and yaw (body relative to NED).
    pub fn from_euler(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            q: UnitQuaternion::from_euler_angles(roll, pitch, yaw).inverse(),
        }
    }

    /// From the body-to-NED rotation.
    pub fn from_body_to_nav(q_nb: UnitQuaternion<f64>) -> Self {
        Self { q: q_nb.inverse() }
    }

    pub fn body_to_nav(&self) -> UnitQuaternion<f64> {
        self.q.inverse()
    }

    /// `(roll, pitch, yaw)`.
    pub fn euler(&self) -> (f64, f64, f64) {
        self.q.inverse().euler_angles()
    }

    pub fn heading(&self) -> f64 {
        self.euler().2
    }

    pub fn to_body(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.q * v
    }
}

/// Magnetometer noise, bandwidth and installation errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MagSensorSpec {
    /// nT/√Hz.
    pub noise_density: f64,
    pub bandwidth: f64,
    pub sample_rate: f64,
    /// Amplitude (nT) of the `sin(2·heading)` scalar heading error.
    #[serde(default)]
    pub heading_error_amplitude: f64,
    /// Small rotation angles (rad) of the vector sensor axes.
    #[serde(default)]
    pub misalignment: [f64; 3],
    /// Installation environment noise (nT RMS) added on top of the intrinsic noise.
    #[serde(default)]
    pub extra_noise_rms: f64,
}

impl MagSensorSpec {
    /// Optically pumped scalar sensor on a tail boom: 80 fT/√Hz over 250 Hz.
    pub fn outboard() -> Self {
        Self {
            noise_density: 8e-5,
            bandwidth: 250.0,
            sample_rate: 250.0,
            heading_error_amplitude: 0.0,
            misalignment: [0.0; 3],
            extra_noise_rms: 0.3,
        }
    }

    /// Same sensor mounted in the cabin, with environment noise 13 times the
    /// outboard total.
    pub fn onboard() -> Self {
        let out = Self::outboard();
        Self {
            extra_noise_rms: 13.0 * out.total_noise_rms(),
            ..out
        }
    }

    /// Three-axis fluxgate used for the regressors.
    pub fn fluxgate() -> Self {
        Self {
            noise_density: 0.01,
            bandwidth: 100.0,
            sample_rate: 250.0,
            heading_error_amplitude: 0.0,
            misalignment: [0.0; 3],
            extra_noise_rms: 0.0,
        }
    }

    pub fn intrinsic_noise_rms(&self) -> f64 {
        self.noise_density * self.bandwidth.sqrt()
    }

    pub fn total_noise_rms(&self) -> f64 {
        self.intrinsic_noise_rms().hypot(self.extra_noise_rms)
    }

    /// Sample rates below twice the bandwidth alias the noise spectrum; the
    /// white-noise RMS is kept at `noise_density·√bandwidth` either way.
    pub fn validate(&self) -> Result<(), PlatformError> {
        let finite = [
            self.noise_density,
            self.bandwidth,
            self.sample_rate,
            self.heading_error_amplitude,
            self.extra_noise_rms,
        ]
        .iter()
        .chain(&self.misalignment)
        .all(|v| v.is_finite());
        if !finite {
            return Err(PlatformError::Invalid("non-finite sensor parameter".into()));
        }
        if self.noise_density < 0.0 || self.extra_noise_rms < 0.0 {
            return Err(PlatformError::Invalid("noise terms must be >= 0".into()));
        }
        if !(self.bandwidth > 0.0 && self.sample_rate > 0.0) {
            return Err(PlatformError::Invalid(
                "bandwidth and sample rate must be > 0".into(),
            ));
        }
        if self.misalignment.iter().any(|a| a.abs() >= 0.1) {
            return Err(PlatformError::Invalid(
                "misalignment angles must be below 0.1 rad".into(),
            ));
        }
        Ok(())
    }

    fn misalignment_rotation(&self) -> Rotation3<f64> {
        let [x, y, z] = self.misalignment;
        Rotation3::from_scaled_axis(Vector3::new(x, y, z))
    }
}

/// Scalar magnetometer reading: field magnitude, projected platform
/// interference, temporal offset, heading error and white noise.
///
/// `field_rate_body` is the body-frame field rate (nT/s) used for the eddy terms.
#[allow(clippy::too_many_arguments)]
pub fn simulate_scalar_measurement(
    truth_field: &FieldVector,
    attitude: &BodyAttitude,
    field_rate_body: &Vector3<f64>,
    c: &TlCoefficients,
    spec: &MagSensorSpec,
    temporal: f64,
    rng: &mut impl Rng,
) -> Result<f64, PlatformError> {
    let b_body = attitude.to_body(&truth_field.as_vector());
    let r = tl_regressors(&b_body, field_rate_body)?;
    let heading_term = if spec.heading_error_amplitude == 0.0 {
        0.0
    } else {
        spec.heading_error_amplitude * (2.0 * attitude.heading()).sin()
    };
    let sigma = spec.total_noise_rms();
    let noise = if sigma > 0.0 {
        sigma * rng.sample::<f64, _>(StandardNormal)
    } else {
        0.0
    };
    Ok(truth_field.magnitude() + scalar_perturbation(c, &r) + temporal + heading_term + noise)
}

/// Vector magnetometer reading in body axes with misalignment and per-axis noise.
pub fn simulate_vector_measurement(
    truth_field: &FieldVector,
    attitude: &BodyAttitude,
    spec: &MagSensorSpec,
    rng: &mut impl Rng,
) -> Vector3<f64> {
    let mut b = attitude.to_body(&truth_field.as_vector());
    if spec.misalignment != [0.0; 3] {
        b = spec.misalignment_rotation() * b;
    }
    let sigma = spec.total_noise_rms();
    if sigma > 0.0 {
        for k in 0..3 {
            b[k] += sigma * rng.sample::<f64, _>(StandardNormal);
        }
    }
    b
}
