use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::trajectory::{Pattern, TrajectorySpec};
use super::HarnessError;
use crate::filter::FilterConfig;
use crate::geomag::TemporalModel;
use crate::ins::{AidingMode, ImuSpec, MechanizationConfig};
use crate::maps::StackConfig;
use crate::platform::{MagSensorSpec, TlCoefficients};

const FEET: f64 = 0.3048;

fn default_slope() -> f64 {
    3.0
}

fn default_map_seed() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MapSource {
    /// Seeded random anomaly field centred on the trajectory origin.
    Synthetic {
        /// RMS anomaly at the reference altitude (nT).
        rms: f64,
        #[serde(default = "default_slope")]
        slope: f64,
        /// Cell size (m).
        cell: f64,
        /// Cells per side.
        extent: usize,
        /// Altitude of the map surface; defaults to the flight altitude.
        #[serde(default)]
        reference_altitude: Option<f64>,
        /// Map seed, independent of the run seed so runs share a map.
        #[serde(default = "default_map_seed")]
        map_seed: u64,
        /// RMS of an independent field added to the truth only (nT).
        #[serde(default)]
        error_rms: f64,
    },
    /// Grid manifest: JSON list of `{path, priority}`.
    Files { manifest: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SensorRole {
    Onboard,
    Outboard,
}

impl SensorRole {
    pub fn label(&self) -> &'static str {
        match self {
            SensorRole::Onboard => "onboard",
            SensorRole::Outboard => "outboard",
        }
    }

    pub fn default_spec(&self) -> MagSensorSpec {
        match self {
            SensorRole::Onboard => MagSensorSpec::onboard(),
            SensorRole::Outboard => MagSensorSpec::outboard(),
        }
    }

    /// Representative platform interference for the mounting position.
    pub fn default_tl(&self) -> TlCoefficients {
        let onboard = TlCoefficients {
            permanent: [150.0, -80.0, 200.0],
            induced: [0.004, 0.0015, -0.001, -0.003, 0.0008, 0.002],
            eddy: [
                0.002, -0.0005, 0.0008, 0.0004, -0.0015, 0.0006, -0.0007, 0.0003, 0.001,
            ],
        };
        match self {
            SensorRole::Onboard => onboard,
            SensorRole::Outboard => {
                let v = onboard.to_vector() * 0.05;
                TlCoefficients::from_vector(&v).expect("18 coefficients")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum StartConfig {
    #[default]
    Cold,
    Warm {
        snapshot: String,
    },
}

fn default_min_spike() -> f64 {
    1_000.0
}

/// Impulsive interference on the scalar channel.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpikeConfig {
    /// Mean spike rate (per second).
    pub rate_hz: f64,
    /// Largest spike magnitude (nT).
    pub max_amplitude: f64,
    #[serde(default = "default_min_spike")]
    pub min_amplitude: f64,
}

fn default_epoch() -> f64 {
    2024.5
}

fn default_position_sigma() -> f64 {
    500.0
}

fn default_report_interval() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub seed: u64,
    pub trajectory: TrajectorySpec,
    pub map: MapSource,
    #[serde(default)]
    pub stack: StackConfig,
    /// Coefficient file for the core field; the built-in synthetic model when absent.
    #[serde(default)]
    pub core_model: Option<String>,
    /// Decimal year at t = 0.
    #[serde(default = "default_epoch")]
    pub epoch: f64,
    #[serde(default)]
    pub temporal: TemporalModel,
    pub sensor_role: SensorRole,
    /// Overrides the role's default scalar sensor.
    #[serde(default)]
    pub scalar_sensor: Option<MagSensorSpec>,
    #[serde(default = "MagSensorSpec::fluxgate")]
    pub vector_sensor: MagSensorSpec,
    /// Overrides the role's default platform interference.
    #[serde(default)]
    pub tl_truth: Option<TlCoefficients>,
    #[serde(default = "ImuSpec::strategic_grade")]
    pub imu: ImuSpec,
    pub aiding: AidingMode,
    #[serde(default)]
    pub mechanization: MechanizationConfig,
    #[serde(default)]
    pub filter: FilterConfig,
    #[serde(default)]
    pub start: StartConfig,
    /// Navigator start offset from truth, north/east (m).
    #[serde(default)]
    pub initial_position_error: [f64; 2],
    #[serde(default = "default_position_sigma")]
    pub initial_position_sigma: f64,
    #[serde(default)]
    pub spikes: Option<SpikeConfig>,
    /// Spacing of report epochs (s).
    #[serde(default = "default_report_interval")]
    pub report_interval: f64,
    #[serde(default)]
    pub output_dir: Option<String>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Loads a scenario file. Relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut config = Self::from_json(&text)?;
        config.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        config.validate()?;
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut String| {
            let candidate = PathBuf::from(&*p);
            if candidate.is_relative() {
                *p = base.join(candidate).to_string_lossy().into_owned();
            }
        };
        if let Some(p) = self.core_model.as_mut() {
            fix(p);
        }
        if let MapSource::Files { manifest } = &mut self.map {
            fix(manifest);
        }
        if let StartConfig::Warm { snapshot } = &mut self.start {
            fix(snapshot);
        }
    }

    pub fn scalar_spec(&self) -> MagSensorSpec {
        self.scalar_sensor
            .clone()
            .unwrap_or_else(|| self.sensor_role.default_spec())
    }

    pub fn tl_truth(&self) -> TlCoefficients {
        self.tl_truth
            .unwrap_or_else(|| self.sensor_role.default_tl())
    }

    /// IMU samples per magnetometer epoch.
    pub fn mag_decimation(&self) -> usize {
        (self.imu.sample_rate / self.filter.update_rate).round() as usize
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let cfg = |m: String| Err(HarnessError::Config(m));
        self.trajectory.validate()?;
        self.imu
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.aiding
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.filter
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.scalar_spec()
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.vector_sensor
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.temporal
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        let ratio = self.imu.sample_rate / self.filter.update_rate;
        if ratio < 1.0 || (ratio - ratio.round()).abs() > 1e-9 {
            return cfg(format!(
                "IMU rate {} Hz must be an integer multiple of the filter update rate {} Hz",
                self.imu.sample_rate, self.filter.update_rate
            ));
        }
        if !(self.report_interval > 0.0)
            || self.report_interval < 1.0 / self.filter.update_rate - 1e-12
        {
            return cfg("report interval must be at least one filter epoch".into());
        }
        if !(self.initial_position_sigma > 0.0)
            || self.initial_position_error.iter().any(|v| !v.is_finite())
        {
            return cfg("initial position sigma must be > 0 and the offset finite".into());
        }
        if let Some(s) = &self.spikes {
            if !(s.rate_hz >= 0.0 && s.min_amplitude >= 0.0 && s.max_amplitude >= s.min_amplitude) {
                return cfg("spikes need rate >= 0 and 0 <= min_amplitude <= max_amplitude".into());
            }
        }
        if let MapSource::Synthetic {
            rms,
            cell,
            extent,
            error_rms,
            ..
        } = &self.map
        {
            if !(*rms > 0.0 && *cell > 0.0 && *extent >= 8 && *error_rms >= 0.0) {
                return cfg(
                    "synthetic map needs rms > 0, cell > 0, extent >= 8 and error_rms >= 0".into(),
                );
            }
        }
        let mut files: Vec<&String> = Vec::new();
        if let Some(p) = &self.core_model {
            files.push(p);
        }
        if let MapSource::Files { manifest } = &self.map {
            files.push(manifest);
        }
        if let StartConfig::Warm { snapshot } = &self.start {
            files.push(snapshot);
        }
        for f in files {
            if !Path::new(f).is_file() {
                return cfg(format!("referenced file {f} does not exist"));
            }
        }
        Ok(())
    }

    /// Table-row labels: trajectory, altitude, scalar magnetometer, velocity aid.
    pub fn trajectory_label(&self) -> String {
        self.trajectory.pattern.label().to_string()
    }

    pub fn altitude_label(&self) -> String {
        if matches!(self.trajectory.pattern, Pattern::GroundLoop { .. }) {
            "ground".into()
        } else {
            format!("{:.0}", self.trajectory.altitude / FEET)
        }
    }
}

fn airborne(
    name: &str,
    description: &str,
    role: SensorRole,
    aiding: AidingMode,
    altitude_ft: f64,
    speed: f64,
    pattern: Pattern,
    map: MapSource,
) -> ScenarioConfig {
    let mut filter = FilterConfig {
        measurement_sigma: role.default_spec().total_noise_rms(),
        ..FilterConfig::default()
    };
    filter.q_vel = match aiding {
        AidingMode::None => 1e-3,
        AidingMode::AirspeedScalar { .. } => 3e-3,
        AidingMode::Velocity3d { .. } => 1e-5,
    };
    ScenarioConfig {
        name: name.into(),
        description: description.into(),
        seed: 42,
        trajectory: TrajectorySpec {
            pattern,
            origin: [39.5, -98.3],
            heading_deg: 30.0,
            speed,
            altitude: altitude_ft * FEET,
            duration: 3_600.0,
            design_bank_deg: 25.0,
            roll_time: 3.0,
        },
        map,
        stack: StackConfig {
            smoothing_levels: vec![0.0, 250.0, 500.0, 1_000.0],
            ..StackConfig::default()
        },
        core_model: None,
        epoch: default_epoch(),
        temporal: TemporalModel::diurnal(20.0, 0.3),
        sensor_role: role,
        scalar_sensor: None,
        vector_sensor: MagSensorSpec::fluxgate(),
        tl_truth: None,
        imu: ImuSpec::strategic_grade(),
        aiding,
        mechanization: MechanizationConfig::default(),
        filter,
        start: StartConfig::Cold,
        initial_position_error: [0.0, 0.0],
        initial_position_sigma: default_position_sigma(),
        spikes: None,
        report_interval: default_report_interval(),
        output_dir: None,
    }
}

fn airspeed() -> AidingMode {
    AidingMode::AirspeedScalar {
        noise: 0.5,
        wind_bias: [6.0, -4.0],
        wind_walk: 0.1,
    }
}

fn velocity3d() -> AidingMode {
    AidingMode::Velocity3d {
        noise: 0.2,
        correlation_time: 300.0,
    }
}

fn low_map() -> MapSource {
    MapSource::Synthetic {
        rms: 50.0,
        slope: 3.0,
        cell: 250.0,
        extent: 512,
        reference_altitude: None,
        map_seed: 1,
        error_rms: 1.0,
    }
}

fn low_racetrack() -> Pattern {
    Pattern::Racetrack {
        length: 40_000.0,
        width: 8_000.0,
        laps: None,
    }
}

/// Analogs of the representative trial rows.
pub fn presets() -> Vec<ScenarioConfig> {
    let a_air = airborne(
        "(a)-airspeed-onboard",
        "3600 ft racetrack, onboard scalar sensor, airspeed-aided navigator",
        SensorRole::Onboard,
        airspeed(),
        3_600.0,
        100.0,
        low_racetrack(),
        low_map(),
    );
    let a_3d_on = airborne(
        "(a)-3dvel-onboard",
        "3600 ft racetrack, onboard scalar sensor, 3-D velocity-aided navigator",
        SensorRole::Onboard,
        velocity3d(),
        3_600.0,
        100.0,
        low_racetrack(),
        low_map(),
    );
    let a_3d_out = airborne(
        "(a)-3dvel-outboard",
        "3600 ft racetrack, outboard scalar sensor, 3-D velocity-aided navigator",
        SensorRole::Outboard,
        velocity3d(),
        3_600.0,
        100.0,
        low_racetrack(),
        low_map(),
    );
    let mut b = airborne(
        "(b)-high-altitude",
        "17000 ft racetrack over a map continued up from 2500 m, outboard sensor, airspeed aid",
        SensorRole::Outboard,
        airspeed(),
        17_000.0,
        150.0,
        Pattern::Racetrack {
            length: 60_000.0,
            width: 15_000.0,
            laps: None,
        },
        MapSource::Synthetic {
            rms: 150.0,
            slope: 3.0,
            cell: 500.0,
            extent: 512,
            reference_altitude: Some(2_500.0),
            map_seed: 2,
            error_rms: 1.0,
        },
    );
    b.stack.smoothing_levels = vec![0.0, 500.0, 1_000.0, 2_000.0];

    let mut c = airborne(
        "(c)-ground",
        "18 km road loop, onboard sensor in a van with impulsive interference, unaided navigator",
        SensorRole::Onboard,
        AidingMode::None,
        0.0,
        11.0,
        Pattern::GroundLoop {
            points: vec![
                [-2_500.0, -2_000.0],
                [2_500.0, -2_000.0],
                [2_500.0, 2_000.0],
                [-2_500.0, 2_000.0],
            ],
            speed_profile: vec![12.0, 9.0, 13.0, 10.0],
            turn_radius: Some(60.0),
        },
        MapSource::Synthetic {
            rms: 120.0,
            slope: 3.0,
            cell: 50.0,
            extent: 320,
            reference_altitude: Some(0.0),
            map_seed: 3,
            error_rms: 3.0,
        },
    );
    c.trajectory.altitude = 2.0;
    c.trajectory.duration = 1_600.0;
    c.trajectory.heading_deg = 0.0;
    c.stack.smoothing_levels = vec![0.0, 50.0, 100.0, 200.0];
    c.scalar_sensor = Some(MagSensorSpec {
        extra_noise_rms: 20.0,
        ..MagSensorSpec::onboard()
    });
    c.filter.measurement_sigma = 20.0;
    c.filter.map_sigma = 5.0;
    c.spikes = Some(SpikeConfig {
        rate_hz: 0.2,
        max_amplitude: 30_000.0,
        min_amplitude: 1_000.0,
    });
    c.temporal = TemporalModel::diurnal(20.0, 0.3);

    vec![a_air, a_3d_on, a_3d_out, b, c]
}

pub fn preset(name: &str) -> Option<ScenarioConfig> {
    presets().into_iter().find(|p| p.name == name)
}
