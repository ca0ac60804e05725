#![allow(dead_code)]

use magnav_core::filter::{CoefficientSnapshot, StartMode};
use magnav_core::geomag::{DisturbanceSeries, TemporalModel};
use magnav_core::harness::{
    preset, run_scenario_with, MapSource, Pattern, RunOptions, RunReport, ScenarioConfig,
};
use magnav_core::ins::{AidingMode, ImuSpec};
use magnav_core::platform::{
    fit_tl_batch, scalar_perturbation, MagSensorSpec, TlCoefficients, N_TL,
};

pub const REFERENCE: &str = "(a)-airspeed-onboard";

pub fn reference() -> ScenarioConfig {
    preset(REFERENCE).expect("reference preset")
}

pub fn rms(v: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = v
        .into_iter()
        .fold((0.0, 0usize), |(s, n), x| (s + x * x, n + 1));
    (s / n.max(1) as f64).sqrt()
}

pub fn median(v: &[f64]) -> f64 {
    let mut s = v.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len();
    if n % 2 == 1 {
        s[n / 2]
    } else {
        0.5 * (s[n / 2 - 1] + s[n / 2])
    }
}

/// Median MagNav error over the last quarter of the flight.
pub fn final_quarter_median(report: &RunReport) -> f64 {
    let e = report.magnav_errors();
    median(&e[3 * e.len() / 4..])
}

/// Mean MagNav error over epochs with the confidence gate open.
pub fn post_gate_mean(report: &RunReport) -> f64 {
    let open: Vec<f64> = report
        .epochs
        .iter()
        .filter(|e| e.gate_open)
        .map(|e| e.magnav_err)
        .collect();
    open.iter().sum::<f64>() / open.len().max(1) as f64
}

/// Maximum INS error over each tenth of the flight.
pub fn ins_envelope(report: &RunReport) -> Vec<f64> {
    let e = report.ins_errors();
    let n = e.len();
    (0..10)
        .map(|i| {
            e[i * n / 10..(i + 1) * n / 10]
                .iter()
                .copied()
                .fold(0.0, f64::max)
        })
        .collect()
}

/// Attitude-rich cloverleaf flight without calibration manoeuvres.
pub fn cloverleaf() -> ScenarioConfig {
    let mut c = preset("(a)-3dvel-onboard").expect("preset");
    c.name = "cloverleaf-onboard".into();
    c.trajectory.pattern = Pattern::Cloverleaf {
        radius: 3_000.0,
        lobes: 4,
    };
    c
}

pub struct LearnerComparison {
    /// RMS difference between the online and batch platform predictions on
    /// the held-out half (nT).
    pub rms_difference: f64,
    /// RMS of the platform perturbation itself over the held-out half (nT).
    pub perturbation_rms: f64,
    pub samples: usize,
}

/// Batch fit on the first half of the cloverleaf flight, compared with the
/// online learner's one-step predictions over the second half.
pub fn online_vs_batch() -> LearnerComparison {
    let report = run_scenario_with(
        &cloverleaf(),
        &RunOptions {
            record_platform: true,
            ..Default::default()
        },
    )
    .expect("cloverleaf run");
    let trace = &report.platform_trace;
    let half = trace.len() / 2;
    let training: Vec<_> = trace[..half]
        .iter()
        .map(|s| (s.regressors, s.residual))
        .collect();
    let fit = fit_tl_batch(&training, 1e-9).expect("batch fit");
    let held = &trace[half..];
    LearnerComparison {
        rms_difference: rms(held.iter().map(|s| {
            s.predicted - s.temporal - scalar_perturbation(&fit.coefficients, &s.regressors)
        })),
        perturbation_rms: rms(held.iter().map(|s| s.residual)),
        samples: held.len(),
    }
}

/// Reference flight with every noise source removed, no platform
/// interference and an unaided, error-free navigator.
pub fn null_scenario() -> ScenarioConfig {
    let mut c = reference();
    c.name = "null".into();
    c.imu = ImuSpec::perfect(c.imu.sample_rate);
    c.aiding = AidingMode::None;
    let quiet = MagSensorSpec {
        noise_density: 0.0,
        extra_noise_rms: 0.0,
        ..MagSensorSpec::outboard()
    };
    c.scalar_sensor = Some(quiet.clone());
    c.vector_sensor = MagSensorSpec {
        noise_density: 0.0,
        ..MagSensorSpec::fluxgate()
    };
    c.tl_truth = Some(TlCoefficients::default());
    c.temporal = TemporalModel::default();
    if let MapSource::Synthetic { error_rms, .. } = &mut c.map {
        *error_rms = 0.0;
    }
    c.stack.band_height = 0.0;
    c.filter.measurement_sigma = 0.05;
    c.filter.map_sigma = 0.05;
    c.filter.q_vel = 1e-8;
    c.filter.q_pos = 1e-6;
    c.filter.vel_sigma0 = 0.01;
    c.filter.q_bias = 1e-6;
    c
}

/// Warm start with the true (zero) platform coefficients, tightly held.
pub fn known_coefficients(c: &ScenarioConfig) -> RunOptions {
    let covariance = (0..N_TL)
        .map(|i| {
            (0..N_TL)
                .map(|j| if i == j { 1e-12 } else { 0.0 })
                .collect()
        })
        .collect();
    let snapshot = CoefficientSnapshot::new(&c.filter.vehicle_id, 0.0, vec![0.0; N_TL], covariance);
    RunOptions {
        start: Some(StartMode::Warm(snapshot)),
        ..Default::default()
    }
}

/// Adds `offset` nT to every measured total-field value.
pub fn with_field_offset(mut c: ScenarioConfig, offset: f64) -> ScenarioConfig {
    let series =
        DisturbanceSeries::new(vec![0.0, 1.0], vec![offset, offset], true).expect("series");
    c.temporal.disturbance = Some(series);
    c
}

/// Navigator started `north`, `east` metres from truth with prior sigma `sigma`.
pub fn offset_start(mut c: ScenarioConfig, north: f64, east: f64, sigma: f64) -> ScenarioConfig {
    c.initial_position_error = [north, east];
    c.initial_position_sigma = sigma;
    c
}
