use nalgebra::Vector3;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::InsError;
use crate::GRAVITY;

const DEG_PER_HOUR: f64 = std::f64::consts::PI / 180.0 / 3600.0;

/// Ratio of the Allan-deviation floor to the steady-state sigma of a
/// first-order Gauss-Markov process.
const GM_ALLAN_FLOOR: f64 = 0.62;

/// IMU error parameters in datasheet units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImuSpec {
    /// g.
    pub accel_bias_instability: f64,
    /// g; the realized turn-on bias is uniform within ±this value.
    pub accel_initial_bias: f64,
    /// g/√Hz. Informational; the white noise is driven by `velocity_random_walk`.
    pub accel_noise_density: f64,
    /// m/s/√hr.
    pub velocity_random_walk: f64,
    /// deg/hr.
    pub gyro_bias_instability: f64,
    /// deg/hr.
    pub gyro_initial_bias: f64,
    /// deg/hr/√Hz. Informational; the white noise is driven by `angle_random_walk`.
    #[serde(default)]
    pub gyro_noise_density: f64,
    /// deg/√hr.
    pub angle_random_walk: f64,
    pub accel_scale_error_ppm: f64,
    pub gyro_scale_error_ppm: f64,
    /// Hz.
    pub sample_rate: f64,
    /// Correlation time (s) of the bias-instability process.
    #[serde(default = "default_correlation_time")]
    pub bias_correlation_time: f64,
    /// Multiplier on the white-noise terms (vehicle vibration).
    #[serde(default = "one")]
    pub vibration_noise_multiplier: f64,
}

fn default_correlation_time() -> f64 {
    600.0
}

fn one() -> f64 {
    1.0
}

impl ImuSpec {
    /// Strategic-grade navigation IMU.
    pub fn strategic_grade() -> Self {
        Self {
            accel_bias_instability: 7e-6,
            accel_initial_bias: 100e-6,
            accel_noise_density: 30e-6,
            velocity_random_walk: 0.017,
            gyro_bias_instability: 0.001,
            gyro_initial_bias: 0.01,
            gyro_noise_density: 0.06,
            angle_random_walk: 0.001,
            accel_scale_error_ppm: 340.0,
            gyro_scale_error_ppm: 80.0,
            sample_rate: 100.0,
            bias_correlation_time: default_correlation_time(),
            vibration_noise_multiplier: 1.0,
        }
    }

    /// Error-free IMU at `sample_rate`.
    pub fn perfect(sample_rate: f64) -> Self {
        Self {
            accel_bias_instability: 0.0,
            accel_initial_bias: 0.0,
            accel_noise_density: 0.0,
            velocity_random_walk: 0.0,
            gyro_bias_instability: 0.0,
            gyro_initial_bias: 0.0,
            gyro_noise_density: 0.0,
            angle_random_walk: 0.0,
            accel_scale_error_ppm: 0.0,
            gyro_scale_error_ppm: 0.0,
            sample_rate,
            bias_correlation_time: default_correlation_time(),
            vibration_noise_multiplier: 1.0,
        }
    }

    pub fn validate(&self) -> Result<(), InsError> {
        let values = [
            self.accel_bias_instability,
            self.accel_initial_bias,
            self.accel_noise_density,
            self.velocity_random_walk,
            self.gyro_bias_instability,
            self.gyro_initial_bias,
            self.gyro_noise_density,
            self.angle_random_walk,
            self.accel_scale_error_ppm,
            self.gyro_scale_error_ppm,
            self.vibration_noise_multiplier,
        ];
        if values.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(InsError::Invalid(
                "IMU error parameters must be finite and >= 0".into(),
            ));
        }
        if !(self.sample_rate > 0.0 && self.sample_rate.is_finite()) {
            return Err(InsError::Invalid("IMU sample rate must be > 0".into()));
        }
        if !(self.bias_correlation_time > 0.0) {
            return Err(InsError::Invalid(
                "bias correlation time must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.sample_rate
    }

    /// Velocity random walk in m/s/√s.
    pub fn vrw_si(&self) -> f64 {
        self.velocity_random_walk / 60.0
    }

    /// Angle random walk in rad/√s.
    pub fn arw_si(&self) -> f64 {
        self.angle_random_walk.to_radians() / 60.0
    }
}

/// Body-frame increments over one IMU interval.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ImuSample {
    /// Angle increment (rad).
    pub dtheta: Vector3<f64>,
    /// Specific-force velocity increment (m/s).
    pub dv: Vector3<f64>,
}

/// Realized error state of one IMU.
#[derive(Debug, Clone, PartialEq)]
pub struct ImuErrors {
    /// Turn-on biases (m/s², rad/s).
    pub accel_bias: Vector3<f64>,
    pub gyro_bias: Vector3<f64>,
    /// Current bias-instability process values.
    pub accel_drift: Vector3<f64>,
    pub gyro_drift: Vector3<f64>,
    pub accel_scale: Vector3<f64>,
    pub gyro_scale: Vector3<f64>,
    accel_drift_sigma: f64,
    gyro_drift_sigma: f64,
    decay: f64,
    accel_white: f64,
    gyro_white: f64,
    dt: f64,
}

impl ImuErrors {
    /// Draws turn-on biases, scale errors and the initial drift state.
    pub fn draw(spec: &ImuSpec, rng: &mut impl Rng) -> Self {
        let mut e = Self::zero(spec);
        let mut uniform3 = |limit: f64| -> Vector3<f64> {
            if limit == 0.0 {
                Vector3::zeros()
            } else {
                Vector3::from_fn(|_, _| rng.random_range(-limit..=limit))
            }
        };
        e.accel_bias = uniform3(spec.accel_initial_bias * GRAVITY);
        e.gyro_bias = uniform3(spec.gyro_initial_bias * DEG_PER_HOUR);
        e.accel_scale = uniform3(spec.accel_scale_error_ppm * 1e-6);
        e.gyro_scale = uniform3(spec.gyro_scale_error_ppm * 1e-6);
        e.accel_drift = gaussian3(rng, e.accel_drift_sigma);
        e.gyro_drift = gaussian3(rng, e.gyro_drift_sigma);
        e
    }

    /// No turn-on errors; stochastic terms still follow `spec`.
    pub fn zero(spec: &ImuSpec) -> Self {
        let dt = spec.dt();
        let mult = spec.vibration_noise_multiplier;
        Self {
            accel_bias: Vector3::zeros(),
            gyro_bias: Vector3::zeros(),
            accel_drift: Vector3::zeros(),
            gyro_drift: Vector3::zeros(),
            accel_scale: Vector3::zeros(),
            gyro_scale: Vector3::zeros(),
            accel_drift_sigma: spec.accel_bias_instability * GRAVITY / GM_ALLAN_FLOOR,
            gyro_drift_sigma: spec.gyro_bias_instability * DEG_PER_HOUR / GM_ALLAN_FLOOR,
            decay: (-dt / spec.bias_correlation_time).exp(),
            accel_white: mult * spec.vrw_si() * dt.sqrt(),
            gyro_white: mult * spec.arw_si() * dt.sqrt(),
            dt,
        }
    }

    /// Corrupts one interval of ideal increments and advances the drift processes.
    pub fn apply(&mut self, truth: &ImuSample, rng: &mut impl Rng) -> ImuSample {
        let dv = truth.dv
            + self.accel_scale.component_mul(&truth.dv)
            + (self.accel_bias + self.accel_drift) * self.dt
            + gaussian3(rng, self.accel_white);
        let dtheta = truth.dtheta
            + self.gyro_scale.component_mul(&truth.dtheta)
            + (self.gyro_bias + self.gyro_drift) * self.dt
            + gaussian3(rng, self.gyro_white);
        let drive = (1.0 - self.decay * self.decay).sqrt();
        if self.accel_drift_sigma > 0.0 {
            self.accel_drift =
                self.accel_drift * self.decay + gaussian3(rng, self.accel_drift_sigma * drive);
        }
        if self.gyro_drift_sigma > 0.0 {
            self.gyro_drift =
                self.gyro_drift * self.decay + gaussian3(rng, self.gyro_drift_sigma * drive);
        }
        ImuSample { dtheta, dv }
    }

    pub fn total_accel_bias(&self) -> Vector3<f64> {
        self.accel_bias + self.accel_drift
    }

    pub fn total_gyro_bias(&self) -> Vector3<f64> {
        self.gyro_bias + self.gyro_drift
    }
}

fn gaussian3(rng: &mut impl Rng, sigma: f64) -> Vector3<f64> {
    if sigma == 0.0 {
        return Vector3::zeros();
    }
    Vector3::from_fn(|_, _| sigma * rng.sample::<f64, _>(StandardNormal))
}

/// Corrupts a whole increment stream with errors drawn from `spec`.
pub fn corrupt_imu(truth: &[ImuSample], spec: &ImuSpec, rng: &mut impl Rng) -> Vec<ImuSample> {
    let mut errors = ImuErrors::draw(spec, rng);
    truth.iter().map(|s| errors.apply(s, rng)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn perfect_imu_is_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let truth: Vec<ImuSample> = (0..100)
            .map(|k| ImuSample {
                dtheta: Vector3::new(1e-4 * k as f64, -2e-5, 3e-6),
                dv: Vector3::new(0.01, -0.02, -0.098_066_5),
            })
            .collect();
        assert_eq!(
            corrupt_imu(&truth, &ImuSpec::perfect(100.0), &mut rng),
            truth
        );
    }

    #[test]
    fn noise_density_consistent_with_random_walk() {
        let s = ImuSpec::strategic_grade();
        let vrw_from_density = s.accel_noise_density * GRAVITY * 60.0;
        assert!((vrw_from_density / s.velocity_random_walk - 1.0).abs() < 0.05);
        let arw_from_density = s.gyro_noise_density / 60.0;
        assert!((arw_from_density / s.angle_random_walk - 1.0).abs() < 1e-9);
    }

    #[test]
    fn turn_on_bias_within_spec() {
        let s = ImuSpec::strategic_grade();
        for seed in 0..50 {
            let e = ImuErrors::draw(&s, &mut ChaCha8Rng::seed_from_u64(seed));
            assert!(e.accel_bias.amax() <= s.accel_initial_bias * GRAVITY);
            assert!(e.gyro_bias.amax() <= s.gyro_initial_bias * DEG_PER_HOUR);
            assert!(e.accel_scale.amax() <= 340e-6);
        }
    }

    #[test]
    fn drift_process_has_steady_sigma() {
        let s = ImuSpec {
            bias_correlation_time: 1.0,
            ..ImuSpec::strategic_grade()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut e = ImuErrors::zero(&s);
        let n = 200_000;
        let mut ss = 0.0;
        for _ in 0..n {
            e.apply(&ImuSample::default(), &mut rng);
            ss += e.accel_drift.x.powi(2);
        }
        let sigma = (ss / n as f64).sqrt();
        let expect = 7e-6 * GRAVITY / GM_ALLAN_FLOOR;
        assert!((sigma / expect - 1.0).abs() < 0.05, "{sigma} vs {expect}");
    }

    #[test]
    fn validation() {
        assert!(ImuSpec::strategic_grade().validate().is_ok());
        assert!(ImuSpec {
            sample_rate: 0.0,
            ..ImuSpec::strategic_grade()
        }
        .validate()
        .is_err());
        assert!(ImuSpec {
            angle_random_walk: -1.0,
            ..ImuSpec::strategic_grade()
        }
        .validate()
        .is_err());
    }
}
