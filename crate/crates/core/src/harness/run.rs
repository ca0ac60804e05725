use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::metrics::{compute_metrics, Advantage, Metrics};
use super::scenario::{MapSource, ScenarioConfig, StartConfig};
use super::synth::synth_map;
use super::trajectory::{generate_trajectory, TruthPose};
use super::HarnessError;
use crate::filter::{
    CoefficientSnapshot, FilterError, FilterState, InnovationRecord, MagObservation, StartMode,
    ACQUIRING,
};
use crate::geomag::{load_harmonic_coefficients, FieldVector, GeoPosition, SphericalHarmonicModel};
use crate::ins::{ideal_increment, ImuErrors, InsState, Mechanizer, VelocityAider};
use crate::maps::{load_manifest, MapStack, StackConfig};
use crate::platform::{
    simulate_scalar_measurement, simulate_vector_measurement, tl_regressors, BodyAttitude,
    Regressors,
};

const SECONDS_PER_YEAR: f64 = 365.25 * 86_400.0;

/// RNG stream identifiers; each consumer draws from its own stream.
mod stream {
    pub const IMU: u64 = 1;
    pub const AIDING: u64 = 2;
    pub const SCALAR: u64 = 3;
    pub const VECTOR: u64 = 4;
    pub const SPIKES: u64 = 5;
}

fn rng_stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut r = ChaCha8Rng::seed_from_u64(seed);
    r.set_stream(id);
    r
}

/// Table-row summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Summary {
    pub trajectory: String,
    pub altitude_ft: String,
    pub scalar_mag: String,
    pub velocity_aid: String,
    pub distance_km: f64,
    pub ins_error_m: f64,
    pub ins_error_pct: f64,
    pub magnav_error_m: f64,
    pub magnav_error_pct: f64,
    pub advantage_factor: Advantage,
}

/// One report epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub t: f64,
    pub truth: GeoPosition,
    pub distance: f64,
    pub ins_err: f64,
    pub magnav_err: f64,
    pub magnav_sigma: f64,
    pub gate_open: bool,
    /// Most recent innovation, if any update has run.
    pub innovation: Option<f64>,
    pub accepted: Option<bool>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InnovationStats {
    pub updates: usize,
    pub accepted: usize,
    pub rejected: usize,
    pub coverage_gaps: usize,
    /// Accepted innovations larger than the gate (should be zero).
    pub accepted_beyond_gate: usize,
    pub spikes_injected: usize,
    pub spikes_accepted: usize,
    pub accepted_rms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Divergence {
    pub t: f64,
    pub last_good_t: f64,
    pub reason: String,
}

/// Platform-model trace for comparing the online learner with a batch fit.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformSample {
    pub t: f64,
    pub regressors: Regressors,
    /// Scalar measurement minus the true field and temporal term (nT).
    pub residual: f64,
    /// Filter prediction `r·ĉ + b̂` before the update (nT).
    pub predicted: f64,
    /// Temporal disturbance contained in the measurement (nT).
    pub temporal: f64,
    pub gate_open: bool,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub seed: u64,
    pub summary: Summary,
    pub metrics: Metrics,
    pub distance_m: f64,
    pub epochs: Vec<EpochRecord>,
    pub gate_open_time: Option<f64>,
    pub innovations: InnovationStats,
    pub innovation_log: Vec<InnovationRecord>,
    pub divergence: Option<Divergence>,
    pub warnings: Vec<String>,
    /// Final coefficient block, exported regardless of the gate.
    pub snapshot: Option<CoefficientSnapshot>,
    pub platform_trace: Vec<PlatformSample>,
    pub runtime_s: f64,
}

impl RunReport {
    pub fn ins_errors(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.ins_err).collect()
    }

    pub fn magnav_errors(&self) -> Vec<f64> {
        self.epochs.iter().map(|e| e.magnav_err).collect()
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Replaces the configured start mode.
    pub start: Option<StartMode>,
    pub record_platform: bool,
}

/// Filter map and truth map for a scenario.
pub struct ScenarioMaps {
    pub filter: MapStack,
    pub truth: MapStack,
}

fn core_model(config: &ScenarioConfig) -> Result<SphericalHarmonicModel, HarnessError> {
    match &config.core_model {
        None => Ok(SphericalHarmonicModel::builtin_synthetic()),
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| HarnessError::Config(format!("{path}: {e}")))?;
            load_harmonic_coefficients(&text)
                .map_err(|e| HarnessError::Config(format!("{path}: {e}")))
        }
    }
}

pub fn build_maps(config: &ScenarioConfig) -> Result<ScenarioMaps, HarnessError> {
    let core = core_model(config)?;
    let truth_config = StackConfig {
        band_height: 0.0,
        smoothing_levels: vec![0.0],
        ..config.stack.clone()
    };
    let (filter_layers, truth_layers) = match &config.map {
        MapSource::Synthetic {
            rms,
            slope,
            cell,
            extent,
            reference_altitude,
            map_seed,
            error_rms,
        } => {
            let mut center = config.trajectory.origin_position();
            center.altitude = reference_altitude.unwrap_or(config.trajectory.altitude);
            let grid = synth_map(
                "synthetic",
                *rms,
                *slope,
                *cell,
                *extent,
                &center,
                *map_seed,
            )?;
            let mut truth = grid.clone();
            if *error_rms > 0.0 {
                let err = synth_map(
                    "error",
                    *error_rms,
                    2.0,
                    *cell,
                    *extent,
                    &center,
                    map_seed.wrapping_add(0x5eed),
                )?;
                truth
                    .values
                    .iter_mut()
                    .zip(&err.values)
                    .for_each(|(v, e)| *v += e);
            }
            (vec![grid], vec![truth])
        }
        MapSource::Files { manifest } => {
            let layers = load_manifest(std::path::Path::new(manifest))?;
            (layers.clone(), layers)
        }
    };
    Ok(ScenarioMaps {
        filter: MapStack::new(
            filter_layers,
            core.clone(),
            config.temporal.clone(),
            config.stack.clone(),
        )?,
        truth: MapStack::new(truth_layers, core, config.temporal.clone(), truth_config)?,
    })
}

/// Total field vector (core plus anomaly along the core direction) at a truth pose.
fn truth_field(
    stack: &MapStack,
    pose: &TruthPose,
    epoch: f64,
) -> Result<FieldVector, HarnessError> {
    let core = stack
        .core
        .synthesize(&pose.position, epoch)
        .map_err(crate::maps::MapError::from)?
        .as_vector();
    let (anomaly, _) = stack.anomaly(&pose.position).map_err(|_| {
        HarnessError::Config(format!(
            "trajectory leaves map coverage at t = {:.1} s",
            pose.t
        ))
    })?;
    Ok(FieldVector::from_vector(
        &(core + core.normalize() * anomaly),
    ))
}

fn start_mode(config: &ScenarioConfig, options: &RunOptions) -> Result<StartMode, HarnessError> {
    if let Some(m) = &options.start {
        return Ok(m.clone());
    }
    match &config.start {
        StartConfig::Cold => Ok(StartMode::Cold),
        StartConfig::Warm { snapshot } => CoefficientSnapshot::load(std::path::Path::new(snapshot))
            .map(StartMode::Warm)
            .map_err(|e| HarnessError::Config(format!("{snapshot}: {e}"))),
    }
}

pub fn run_scenario(config: &ScenarioConfig) -> Result<RunReport, HarnessError> {
    run_scenario_with(config, &RunOptions::default())
}

/// End-to-end run: truth → IMU errors → navigator → velocity aiding, with the
/// map-matching filter running on the aided navigator and the same sensor stream.
pub fn run_scenario_with(
    config: &ScenarioConfig,
    options: &RunOptions,
) -> Result<RunReport, HarnessError> {
    config.validate()?;
    let started = Instant::now();
    let maps = build_maps(config)?;
    let dt = config.imu.dt();
    let poses = generate_trajectory(&config.trajectory, dt)?;
    let decim = config.mag_decimation();
    let dt_mag = decim as f64 * dt;
    let report_every = ((config.report_interval / dt_mag).round() as usize).max(1);

    let mut rng_imu = rng_stream(config.seed, stream::IMU);
    let mut rng_aid = rng_stream(config.seed, stream::AIDING);
    let mut rng_scalar = rng_stream(config.seed, stream::SCALAR);
    let mut rng_vector = rng_stream(config.seed, stream::VECTOR);
    let mut rng_spike = rng_stream(config.seed, stream::SPIKES);

    let truth0 = poses[0];
    let [off_n, off_e] = config.initial_position_error;
    let ins0 = InsState {
        position: truth0.position.offset_ne(off_n, off_e),
        ..truth0.as_ins_state()
    };
    let mut mech = Mechanizer::new(ins0, dt, config.mechanization)
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let mut imu_errors = ImuErrors::draw(&config.imu, &mut rng_imu);
    let mut aider = VelocityAider::new(config.aiding.clone(), &config.imu, &mut rng_aid)
        .map_err(|e| HarnessError::Config(e.to_string()))?;

    let filter_config = crate::filter::FilterConfig {
        epoch: config.epoch,
        ..config.filter.clone()
    };
    let mut filter = FilterState::init(
        filter_config,
        ins0.position,
        config.initial_position_sigma,
        start_mode(config, options)?,
    )
    .map_err(|e| match e {
        FilterError::Diverged { .. } => HarnessError::Filter(e),
        other => HarnessError::Config(other.to_string()),
    })?;

    let c_truth = config.tl_truth();
    let scalar_spec = config.scalar_spec();
    let vector_spec = config.vector_sensor.clone();
    let spike_probability = config.spikes.map_or(0.0, |s| s.rate_hz * dt_mag);

    let mut epochs = Vec::with_capacity(poses.len() / (decim * report_every) + 2);
    let mut spike_times = Vec::new();
    let mut platform_trace = Vec::new();
    let mut divergence = None;
    let mut last_record: Option<InnovationRecord> = None;
    let mut prev_body: Option<Vector3<f64>> = None;
    let mut prev_vector: Option<Vector3<f64>> = None;
    let mut last_good_t = 0.0;

    let record = |truth: &TruthPose,
                  nav: &InsState,
                  base: &GeoPosition,
                  filter: &FilterState,
                  last: &Option<InnovationRecord>| {
        let mut pos = nav.position;
        pos.altitude = truth.position.altitude;
        let mut base = if filter.confidence_gate_open() {
            *base
        } else {
            nav.position
        };
        base.altitude = truth.position.altitude;
        let sol = filter.solution(&base);
        EpochRecord {
            t: truth.t,
            truth: truth.position,
            distance: truth.distance,
            ins_err: pos.horizontal_distance(&truth.position),
            magnav_err: sol.position.horizontal_distance(&truth.position),
            magnav_sigma: sol.sigma_horizontal(),
            gate_open: sol.gate_open,
            innovation: last.as_ref().map(|r| r.innovation),
            accepted: last.as_ref().map(|r| r.accepted),
        }
    };
    epochs.push(record(&truth0, &ins0, &ins0.position, &filter, &None));

    // Filter base position, dead-reckoned on the aided velocity.
    let mut base = ins0.position;
    let mut prev_velocity = ins0.velocity;

    for k in 0..poses.len() - 1 {
        let inc = ideal_increment(
            &poses[k].as_ins_state(),
            &poses[k + 1].as_ins_state(),
            dt,
            &config.mechanization,
        );
        let sensed = imu_errors.apply(&inc, &mut rng_imu);
        let ins = *mech.step(&sensed);
        let aided = aider.step(&ins, &poses[k + 1].velocity, &mut rng_aid);
        let v = (prev_velocity + aided.velocity) * 0.5;
        base = base.offset_ne(v.x * dt, v.y * dt);
        prev_velocity = aided.velocity;
        if (k + 1) % decim != 0 {
            continue;
        }
        let truth = &poses[k + 1];
        let t = truth.t;
        let field = truth_field(&maps.truth, truth, config.epoch + t / SECONDS_PER_YEAR)?;
        let temporal = maps.truth.temporal.offset(t);
        let attitude = BodyAttitude::from_body_to_nav(truth.attitude_nb);
        let body = attitude.to_body(&field.as_vector());
        let rate = prev_body.map_or_else(Vector3::zeros, |p| (body - p) / dt_mag);
        prev_body = Some(body);
        let mut scalar = simulate_scalar_measurement(
            &field,
            &attitude,
            &rate,
            &c_truth,
            &scalar_spec,
            temporal,
            &mut rng_scalar,
        )?;
        let spike = spike_probability > 0.0 && rng_spike.random::<f64>() < spike_probability;
        if let (true, Some(s)) = (spike, config.spikes) {
            let magnitude = rng_spike.random_range(s.min_amplitude..=s.max_amplitude);
            scalar += if rng_spike.random::<bool>() {
                magnitude
            } else {
                -magnitude
            };
            spike_times.push(t);
        }
        let vector = simulate_vector_measurement(&field, &attitude, &vector_spec, &mut rng_vector);
        let vector_rate = prev_vector.map_or_else(Vector3::zeros, |p| (vector - p) / dt_mag);
        prev_vector = Some(vector);

        let mut nav_pos = base;
        nav_pos.altitude = truth.position.altitude;
        let obs = MagObservation {
            t,
            scalar,
            vector_body: vector,
            vector_rate_body: vector_rate,
        };

        if let Err(e) = filter.predict(dt_mag) {
            divergence = Some(Divergence {
                t,
                last_good_t,
                reason: e.to_string(),
            });
            break;
        }
        let predicted = if options.record_platform {
            tl_regressors(&vector, &vector_rate).ok()
        } else {
            None
        }
        .map(|r| (filter.predicted_perturbation(&r), r));
        match filter.update_magnetic(&obs, &maps.filter, &nav_pos, aided.heading()) {
            Ok(rec) if rec.layer_used == ACQUIRING => {}
            Ok(rec) => last_record = Some(rec),
            Err(FilterError::Diverged { t: td, reason }) => {
                divergence = Some(Divergence {
                    t: td,
                    last_good_t,
                    reason,
                });
                break;
            }
            Err(e) => return Err(HarnessError::Filter(e)),
        }
        if let Some((p, r)) = predicted {
            platform_trace.push(PlatformSample {
                t,
                regressors: r,
                residual: scalar - field.magnitude() - temporal,
                predicted: p,
                temporal,
                gate_open: filter.confidence_gate_open(),
            });
        }
        last_good_t = t;
        if ((k + 1) / decim) % report_every == 0 {
            epochs.push(record(truth, &aided, &base, &filter, &last_record));
        }
    }
    let stats = innovation_stats(
        &filter.innovation_log,
        &spike_times,
        filter.config().gate_sigma,
        filter.coverage_gaps,
    );
    if divergence.is_none() {
        if let Err(e) = filter.check_covariance() {
            divergence = Some(Divergence {
                t: filter.t,
                last_good_t,
                reason: e,
            });
        }
    }

    let last = epochs.last().expect("at least the initial epoch");
    let distance = last.distance.max(f64::MIN_POSITIVE);
    let ins_errors: Vec<f64> = epochs.iter().map(|e| e.ins_err).collect();
    let magnav_errors: Vec<f64> = epochs.iter().map(|e| e.magnav_err).collect();
    let metrics = compute_metrics(&ins_errors, &magnav_errors, distance);
    let summary = Summary {
        trajectory: config.trajectory_label(),
        altitude_ft: config.altitude_label(),
        scalar_mag: config.sensor_role.label().into(),
        velocity_aid: config.aiding.label().into(),
        distance_km: distance / 1000.0,
        ins_error_m: metrics.ins_final_m,
        ins_error_pct: metrics.ins_percent,
        magnav_error_m: metrics.magnav_final_m,
        magnav_error_pct: metrics.magnav_percent,
        advantage_factor: metrics.advantage,
    };
    let snapshot = filter
        .export_snapshot(&filter.config().vehicle_id.clone(), true)
        .ok();
    Ok(RunReport {
        name: config.name.clone(),
        seed: config.seed,
        summary,
        metrics,
        distance_m: distance,
        epochs,
        gate_open_time: filter.gate_open_time(),
        innovations: stats,
        innovation_log: std::mem::take(&mut filter.innovation_log),
        divergence,
        warnings: filter.warnings.clone(),
        snapshot,
        platform_trace,
        runtime_s: started.elapsed().as_secs_f64(),
    })
}

/// Tallies the final innovation log; `spike_times` are the (sorted) epochs
/// that carried an injected spike.
fn innovation_stats(
    log: &[InnovationRecord],
    spike_times: &[f64],
    gate: f64,
    coverage_gaps: usize,
) -> InnovationStats {
    let mut s = InnovationStats {
        spikes_injected: spike_times.len(),
        coverage_gaps,
        ..Default::default()
    };
    let mut sq = 0.0;
    for r in log.iter().filter(|r| r.innovation.is_finite()) {
        s.updates += 1;
        if !r.accepted {
            s.rejected += 1;
            continue;
        }
        s.accepted += 1;
        sq += r.innovation * r.innovation;
        if r.innovation.abs() > gate * r.sigma {
            s.accepted_beyond_gate += 1;
        }
        if spike_times.binary_search_by(|x| x.total_cmp(&r.t)).is_ok() {
            s.spikes_accepted += 1;
        }
    }
    s.accepted_rms = if s.accepted > 0 {
        (sq / s.accepted as f64).sqrt()
    } else {
        0.0
    };
    s
}

/// Parses `path=v1,v2,...` (or `path=[json list]`).
pub fn parse_sweep_param(spec: &str) -> Result<(String, Vec<serde_json::Value>), HarnessError> {
    let (path, list) = spec
        .split_once('=')
        .ok_or_else(|| HarnessError::Config(format!("expected <path>=<list>, got {spec:?}")))?;
    let values = if list.trim_start().starts_with('[') {
        serde_json::from_str::<Vec<serde_json::Value>>(list)
            .map_err(|e| HarnessError::Config(e.to_string()))?
    } else {
        list.split(',')
            .map(|s| {
                serde_json::from_str(s.trim())
                    .unwrap_or_else(|_| serde_json::Value::String(s.trim().to_string()))
            })
            .collect()
    };
    if path.is_empty() || values.is_empty() {
        return Err(HarnessError::Config(
            "sweep needs a parameter path and at least one value".into(),
        ));
    }
    Ok((path.to_string(), values))
}

/// Copy of `base` with the dotted `path` set to `value`.
pub fn with_param(
    base: &ScenarioConfig,
    path: &str,
    value: &serde_json::Value,
) -> Result<ScenarioConfig, HarnessError> {
    let mut json = serde_json::to_value(base).map_err(|e| HarnessError::Config(e.to_string()))?;
    let pointer = format!("/{}", path.replace('.', "/"));
    let slot = json
        .pointer_mut(&pointer)
        .ok_or_else(|| HarnessError::Config(format!("unknown parameter {path:?}")))?;
    *slot = value.clone();
    let config: ScenarioConfig =
        serde_json::from_value(json).map_err(|e| HarnessError::Config(format!("{path}: {e}")))?;
    config.validate()?;
    Ok(config)
}

/// Runs one scenario per value, in parallel.
pub fn sweep(
    base: &ScenarioConfig,
    path: &str,
    values: &[serde_json::Value],
) -> Result<Vec<(serde_json::Value, RunReport)>, HarnessError> {
    let configs = values
        .iter()
        .map(|v| with_param(base, path, v).map(|c| (v.clone(), c)))
        .collect::<Result<Vec<_>, _>>()?;
    configs
        .into_par_iter()
        .map(|(v, c)| run_scenario(&c).map(|r| (v, r)))
        .collect()
}
