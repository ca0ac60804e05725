use nalgebra::{SMatrix, SVector, UnitQuaternion, Vector2, Vector3};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{ImuSpec, InsError, InsState};
use crate::GRAVITY;

const N: usize = 14;
type Vec14 = SVector<f64, N>;
type Mat14 = SMatrix<f64, N, N>;

// State layout.
const DP: usize = 0;
const DV: usize = 2;
const PHI: usize = 4;
const BA: usize = 7;
const BG: usize = 9;
const WIND: usize = 12;

/// Velocity aiding source for the baseline navigator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AidingMode {
    None,
    /// True airspeed magnitude; the wind must be estimated.
    AirspeedScalar {
        /// White noise on the airspeed (m/s RMS).
        noise: f64,
        /// Mean wind north/east (m/s).
        wind_bias: [f64; 2],
        /// Random-walk intensity of the wind (m/s/√s).
        #[serde(default = "default_wind_walk")]
        wind_walk: f64,
    },
    /// Horizontal velocity from an external reference (e.g. Doppler).
    Velocity3d {
        /// RMS of the measurement error (m/s).
        noise: f64,
        /// Correlation time of the measurement error (s).
        #[serde(default = "default_noise_correlation")]
        correlation_time: f64,
    },
}

fn default_wind_walk() -> f64 {
    0.005
}

fn default_noise_correlation() -> f64 {
    300.0
}

impl AidingMode {
    pub fn validate(&self) -> Result<(), InsError> {
        let ok = match self {
            AidingMode::None => true,
            AidingMode::AirspeedScalar {
                noise,
                wind_bias,
                wind_walk,
            } => *noise >= 0.0 && *wind_walk >= 0.0 && wind_bias.iter().all(|w| w.is_finite()),
            AidingMode::Velocity3d {
                noise,
                correlation_time,
            } => *noise >= 0.0 && *correlation_time > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(InsError::Invalid(format!("invalid aiding mode {self:?}")))
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            AidingMode::None => "NA",
            AidingMode::AirspeedScalar { .. } => "airspeed",
            AidingMode::Velocity3d { .. } => "3D velocity",
        }
    }
}

/// Error-state Kalman filter that aids a free-running navigator with velocity
/// or airspeed measurements. The navigator is not reset (open loop); the
/// aided solution is the navigator output minus the estimated errors.
#[derive(Debug, Clone)]
pub struct VelocityAider {
    mode: AidingMode,
    x: Vec14,
    p: Mat14,
    q_diag: Vec14,
    update_interval: f64,
    next_update: f64,
    /// Truth wind (simulated) and the correlated velocity-measurement error.
    wind: Vector2<f64>,
    velocity_error: Vector2<f64>,
    last: Option<InsState>,
}

impl VelocityAider {
    pub fn new(mode: AidingMode, imu: &ImuSpec, rng: &mut impl Rng) -> Result<Self, InsError> {
        mode.validate()?;
        imu.validate()?;
        let deg_hr = std::f64::consts::PI / 180.0 / 3600.0;
        let mut p_diag = Vec14::zeros();
        let mut q_diag = Vec14::zeros();
        p_diag[DP] = 1.0;
        p_diag[DP + 1] = 1.0;
        p_diag[DV] = 0.05f64.powi(2);
        p_diag[DV + 1] = 0.05f64.powi(2);
        p_diag[PHI] = 0.02f64.to_radians().powi(2);
        p_diag[PHI + 1] = 0.02f64.to_radians().powi(2);
        p_diag[PHI + 2] = 0.1f64.to_radians().powi(2);
        let ba = (imu.accel_initial_bias.max(imu.accel_bias_instability) * GRAVITY).max(1e-6);
        let bg = (imu.gyro_initial_bias.max(imu.gyro_bias_instability) * deg_hr).max(1e-10);
        p_diag[BA] = ba * ba;
        p_diag[BA + 1] = ba * ba;
        for k in 0..3 {
            p_diag[BG + k] = bg * bg;
        }
        p_diag[WIND] = 100.0;
        p_diag[WIND + 1] = 100.0;

        let vrw = imu.vrw_si() * imu.vibration_noise_multiplier;
        let arw = imu.arw_si() * imu.vibration_noise_multiplier;
        q_diag[DV] = vrw * vrw;
        q_diag[DV + 1] = vrw * vrw;
        for k in 0..3 {
            q_diag[PHI + k] = arw * arw;
        }
        let tau = imu.bias_correlation_time;
        let ba_walk = (imu.accel_bias_instability * GRAVITY).powi(2) * 2.0 / tau;
        let bg_walk = (imu.gyro_bias_instability * deg_hr).powi(2) * 2.0 / tau;
        q_diag[BA] = ba_walk;
        q_diag[BA + 1] = ba_walk;
        for k in 0..3 {
            q_diag[BG + k] = bg_walk;
        }
        let mut wind = Vector2::zeros();
        let mut velocity_error = Vector2::zeros();
        match &mode {
            AidingMode::AirspeedScalar {
                wind_bias,
                wind_walk,
                ..
            } => {
                wind = Vector2::new(wind_bias[0], wind_bias[1]);
                q_diag[WIND] = wind_walk * wind_walk;
                q_diag[WIND + 1] = wind_walk * wind_walk;
            }
            AidingMode::Velocity3d { noise, .. } => {
                velocity_error = Vector2::new(
                    noise * rng.sample::<f64, _>(StandardNormal),
                    noise * rng.sample::<f64, _>(StandardNormal),
                );
            }
            AidingMode::None => {}
        }
        Ok(Self {
            mode,
            x: Vec14::zeros(),
            p: Mat14::from_diagonal(&p_diag),
            q_diag,
            update_interval: 1.0,
            next_update: 1.0,
            wind,
            velocity_error,
            last: None,
        })
    }

    pub fn mode(&self) -> &AidingMode {
        &self.mode
    }

    /// Current truth wind (n, e), m/s.
    pub fn truth_wind(&self) -> Vector2<f64> {
        self.wind
    }

    /// Estimated wind (n, e), m/s.
    pub fn wind_estimate(&self) -> Vector2<f64> {
        Vector2::new(self.x[WIND], self.x[WIND + 1])
    }

    /// Estimated horizontal position error (n, e), m, of the raw navigator.
    pub fn position_error_estimate(&self) -> Vector2<f64> {
        Vector2::new(self.x[DP], self.x[DP + 1])
    }

    /// Processes one navigator epoch with the matching truth velocity and
    /// returns the aided state.
    pub fn step(
        &mut self,
        ins: &InsState,
        truth_velocity: &Vector3<f64>,
        rng: &mut impl Rng,
    ) -> InsState {
        if matches!(self.mode, AidingMode::None) {
            return *ins;
        }
        if let Some(prev) = self.last {
            let dt = ins.t - prev.t;
            if dt > 0.0 {
                self.propagate(&prev, ins, dt, rng);
            }
        }
        self.last = Some(*ins);
        if ins.t + 1e-9 >= self.next_update {
            self.next_update += self.update_interval;
            self.update(ins, truth_velocity, rng);
        }
        self.corrected(ins)
    }

    fn corrected(&self, ins: &InsState) -> InsState {
        let mut out = *ins;
        out.position = ins.position.offset_ne(-self.x[DP], -self.x[DP + 1]);
        out.velocity.x -= self.x[DV];
        out.velocity.y -= self.x[DV + 1];
        let phi = Vector3::new(self.x[PHI], self.x[PHI + 1], self.x[PHI + 2]);
        out.attitude_nb = UnitQuaternion::from_scaled_axis(phi) * ins.attitude_nb;
        out
    }

    fn propagate(&mut self, prev: &InsState, ins: &InsState, dt: f64, rng: &mut impl Rng) {
        // Specific force in NED from the navigator's own velocity change.
        let f = (ins.velocity - prev.velocity) / dt - Vector3::new(0.0, 0.0, GRAVITY);
        let c = ins.attitude_nb.to_rotation_matrix();
        let c = c.matrix();
        let mut fm = Mat14::identity();
        for k in 0..2 {
            fm[(DP + k, DV + k)] = dt;
        }
        // δv̇ = f × φ + C b_a
        let fx = |i: usize, j: usize| -> f64 {
            // Row i of the skew matrix [f×].
            let m = [[0.0, -f.z, f.y], [f.z, 0.0, -f.x], [-f.y, f.x, 0.0]];
            m[i][j]
        };
        for i in 0..2 {
            for j in 0..3 {
                fm[(DV + i, PHI + j)] = fx(i, j) * dt;
            }
            for j in 0..2 {
                fm[(DV + i, BA + j)] = c[(i, j)] * dt;
            }
        }
        // φ̇ = −C b_g
        for i in 0..3 {
            for j in 0..3 {
                fm[(PHI + i, BG + j)] = -c[(i, j)] * dt;
            }
        }
        self.x = fm * self.x;
        self.p = fm * self.p * fm.transpose() + Mat14::from_diagonal(&(self.q_diag * dt));
        self.p = (self.p + self.p.transpose()) * 0.5;

        match &self.mode {
            AidingMode::AirspeedScalar { wind_walk, .. } => {
                let s = wind_walk * dt.sqrt();
                self.wind.x += s * rng.sample::<f64, _>(StandardNormal);
                self.wind.y += s * rng.sample::<f64, _>(StandardNormal);
            }
            AidingMode::Velocity3d {
                noise,
                correlation_time,
            } => {
                let a = (-dt / correlation_time).exp();
                let s = noise * (1.0 - a * a).sqrt();
                self.velocity_error.x =
                    a * self.velocity_error.x + s * rng.sample::<f64, _>(StandardNormal);
                self.velocity_error.y =
                    a * self.velocity_error.y + s * rng.sample::<f64, _>(StandardNormal);
            }
            AidingMode::None => {}
        }
    }

    fn scalar_update(&mut self, h: &Vec14, y: f64, r: f64) {
        let ph = self.p * h;
        let s = h.dot(&ph) + r;
        if !(s > 0.0) {
            return;
        }
        let k = ph / s;
        self.x += k * y;
        let ikh = Mat14::identity() - k * h.transpose();
        self.p = ikh * self.p * ikh.transpose() + k * k.transpose() * r;
        self.p = (self.p + self.p.transpose()) * 0.5;
    }

    fn update(&mut self, ins: &InsState, truth_velocity: &Vector3<f64>, rng: &mut impl Rng) {
        match self.mode.clone() {
            AidingMode::Velocity3d { noise, .. } => {
                let r = noise.powi(2).max(1e-8);
                for k in 0..2 {
                    let meas = truth_velocity[k] + self.velocity_error[k];
                    let mut h = Vec14::zeros();
                    h[DV + k] = 1.0;
                    let y = (ins.velocity[k] - meas) - self.x[DV + k];
                    self.scalar_update(&h, y, r);
                }
            }
            AidingMode::AirspeedScalar { noise, .. } => {
                let air_true = Vector2::new(truth_velocity.x, truth_velocity.y) - self.wind;
                let meas = air_true.norm() + noise * rng.sample::<f64, _>(StandardNormal);
                let v = Vector2::new(ins.velocity.x - self.x[DV], ins.velocity.y - self.x[DV + 1]);
                let air = v - self.wind_estimate();
                let speed = air.norm();
                if speed < 1.0 {
                    return;
                }
                let u = air / speed;
                let mut h = Vec14::zeros();
                h[DV] = -u.x;
                h[DV + 1] = -u.y;
                h[WIND] = -u.x;
                h[WIND + 1] = -u.y;
                self.scalar_update(&h, meas - speed, noise.powi(2).max(1e-6));
            }
            AidingMode::None => {}
        }
    }
}

/// Aids a navigator stream. `truth_velocity` must be time-aligned with `ins`.
pub fn aid_ins(
    ins: &[InsState],
    mode: &AidingMode,
    truth_velocity: &[Vector3<f64>],
    imu: &ImuSpec,
    rng: &mut impl Rng,
) -> Result<Vec<InsState>, InsError> {
    if ins.len() != truth_velocity.len() {
        return Err(InsError::Invalid(
            "navigator and truth streams differ in length".into(),
        ));
    }
    let mut aider = VelocityAider::new(mode.clone(), imu, rng)?;
    Ok(ins
        .iter()
        .zip(truth_velocity)
        .map(|(s, v)| aider.step(s, v, rng))
        .collect())
}
