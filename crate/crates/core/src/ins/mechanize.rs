use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::{ImuSample, InsError};
use crate::geomag::GeoPosition;
use crate::platform::BodyAttitude;
use crate::{EARTH_RADIUS, GRAVITY};

/// Earth rotation rate (rad/s).
pub const EARTH_RATE: f64 = 7.292_115e-5;

/// Norm drift beyond which the attitude quaternion is renormalized.
const NORM_TOLERANCE: f64 = 1e-6;

/// Navigation state in the local-level NED frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InsState {
    pub t: f64,
    pub position: GeoPosition,
    /// NED velocity (m/s).
    pub velocity: Vector3<f64>,
    /// Body-to-NED rotation.
    pub attitude_nb: UnitQuaternion<f64>,
}

impl InsState {
    pub fn attitude(&self) -> BodyAttitude {
        BodyAttitude::from_body_to_nav(self.attitude_nb)
    }

    pub fn heading(&self) -> f64 {
        self.attitude_nb.euler_angles().2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct MechanizationConfig {
    /// Include earth rate, transport rate and Coriolis terms (Schuler dynamics).
    #[serde(default)]
    pub earth_terms: bool,
}

/// Angular rate of the NED frame relative to inertial space, in NED.
fn nav_rate(pos: &GeoPosition, v: &Vector3<f64>) -> (Vector3<f64>, Vector3<f64>) {
    let r = EARTH_RADIUS + pos.altitude;
    let (s, c) = pos.latitude.sin_cos();
    let w_ie = Vector3::new(EARTH_RATE * c, 0.0, -EARTH_RATE * s);
    let w_en = Vector3::new(v.y / r, -v.x / r, -v.y * s / (c * r));
    (w_ie, w_en)
}

/// Trapezoidal position update shared by truth generation and the navigator.
pub fn advance_position(
    pos: &GeoPosition,
    v0: &Vector3<f64>,
    v1: &Vector3<f64>,
    dt: f64,
) -> GeoPosition {
    let mean = (v0 + v1) * (0.5 * dt);
    let mut next = pos.offset_ne(mean.x, mean.y);
    next.altitude = pos.altitude - mean.z;
    next
}

fn gravity() -> Vector3<f64> {
    Vector3::new(0.0, 0.0, GRAVITY)
}

/// Attitude increment, velocity increment and frame-rate terms for one step
/// from state `s`. Shared by the forward and inverse paths so they agree exactly.
struct StepTerms {
    frame_rotation: UnitQuaternion<f64>,
    velocity_forcing: Vector3<f64>,
}

fn step_terms(s: &InsState, config: &MechanizationConfig, dt: f64) -> StepTerms {
    if !config.earth_terms {
        return StepTerms {
            frame_rotation: UnitQuaternion::identity(),
            velocity_forcing: gravity() * dt,
        };
    }
    let (w_ie, w_en) = nav_rate(&s.position, &s.velocity);
    StepTerms {
        frame_rotation: UnitQuaternion::from_scaled_axis(-(w_ie + w_en) * dt),
        velocity_forcing: (gravity() - (2.0 * w_ie + w_en).cross(&s.velocity)) * dt,
    }
}

/// Streaming strapdown navigator.
#[derive(Debug, Clone)]
pub struct Mechanizer {
    pub state: InsState,
    pub dt: f64,
    pub config: MechanizationConfig,
    renormalizations: usize,
}

impl Mechanizer {
    pub fn new(initial: InsState, dt: f64, config: MechanizationConfig) -> Result<Self, InsError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(InsError::Invalid("time step must be > 0".into()));
        }
        Ok(Self {
            state: initial,
            dt,
            config,
            renormalizations: 0,
        })
    }

    pub fn step(&mut self, inc: &ImuSample) -> &InsState {
        let s = &self.state;
        let terms = step_terms(s, &self.config, self.dt);
        let half = s.attitude_nb * UnitQuaternion::from_scaled_axis(inc.dtheta * 0.5);
        let velocity = s.velocity + half * inc.dv + terms.velocity_forcing;
        let mut attitude =
            terms.frame_rotation * s.attitude_nb * UnitQuaternion::from_scaled_axis(inc.dtheta);
        let norm = attitude.as_ref().norm();
        if (norm - 1.0).abs() > NORM_TOLERANCE {
            log::warn!("attitude norm drifted to {norm}; renormalizing");
            attitude = UnitQuaternion::new_normalize(*attitude.as_ref());
            self.renormalizations += 1;
        }
        let position = advance_position(&s.position, &s.velocity, &velocity, self.dt);
        self.state = InsState {
            t: s.t + self.dt,
            position,
            velocity,
            attitude_nb: attitude,
        };
        &self.state
    }

    pub fn renormalizations(&self) -> usize {
        self.renormalizations
    }
}

/// Runs the navigator over a whole increment stream. The output starts with
/// `initial` and has one more entry than `increments`.
pub fn ins_mechanize(
    increments: &[ImuSample],
    initial: InsState,
    dt: f64,
    config: MechanizationConfig,
) -> Result<Vec<InsState>, InsError> {
    let mut m = Mechanizer::new(initial, dt, config)?;
    let mut out = Vec::with_capacity(increments.len() + 1);
    out.push(initial);
    for inc in increments {
        out.push(*m.step(inc));
    }
    Ok(out)
}

/// Error-free increments that carry the navigator from `from` to `to`, given
/// that `to.position` was produced by [`advance_position`].
pub fn ideal_increment(
    from: &InsState,
    to: &InsState,
    dt: f64,
    config: &MechanizationConfig,
) -> ImuSample {
    let terms = step_terms(from, config, dt);
    let dq = from.attitude_nb.inverse() * terms.frame_rotation.inverse() * to.attitude_nb;
    let dtheta = dq.scaled_axis();
    let half = from.attitude_nb * UnitQuaternion::from_scaled_axis(dtheta * 0.5);
    let dv = half.inverse() * (to.velocity - from.velocity - terms.velocity_forcing);
    ImuSample { dtheta, dv }
}
