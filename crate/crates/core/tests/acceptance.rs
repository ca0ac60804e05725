//! One PASS/FAIL line per acceptance criterion; exits non-zero if any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use magnav_core::filter::{FilterState, MagObservation, StartMode};
use magnav_core::geomag::{GeoPosition, SphericalHarmonicModel};
use magnav_core::harness::{
    advantage_factor, build_maps, compute_metrics, preset, presets, run_scenario,
    run_scenario_with, write_epoch_csv, Advantage, RunOptions, RunReport,
};
use magnav_core::ins::{
    ideal_increment, ImuErrors, ImuSpec, InsState, MechanizationConfig, Mechanizer,
};
use magnav_core::maps::{upward_continue, AnomalyGrid};
use magnav_core::GRAVITY;
use nalgebra::{UnitQuaternion, Vector3};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{ins_envelope, median, offset_start, online_vs_batch, reference};

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn dipole_continuation() -> Outcome {
    const N: usize = 512;
    const DEPTH: f64 = 400.0;
    let dipole =
        |rho2: f64, h: f64| 500.0 * DEPTH.powi(3) * (2.0 * h * h - rho2) / (h * h + rho2).powf(2.5);
    let c = GeoPosition::from_degrees(45.0, -75.0, 0.0).unwrap();
    let mut grid =
        AnomalyGrid::from_metric("dipole", &c, 20.0, N, N, 0.0, vec![0.0; N * N]).unwrap();
    let ne: Vec<(f64, f64)> = (0..N * N)
        .map(|k| grid.node_position(k / N, k % N).ne_from(&c))
        .collect();
    for (k, (n, e)) in ne.iter().enumerate() {
        grid.values[k] = dipole(n * n + e * e, DEPTH);
    }
    let mut worst_ratio: f64 = 0.0;
    let mut slowest: f64 = 0.0;
    for dz in [100.0, 300.0, 1000.0] {
        let start = Instant::now();
        let up = upward_continue(&grid, dz);
        slowest = slowest.max(start.elapsed().as_secs_f64());
        let peak = dipole(0.0, DEPTH + dz).abs();
        let b = N / 10;
        for i in b..N - b {
            for j in b..N - b {
                let (n, e) = ne[i * N + j];
                let err = (up.values[i * N + j] - dipole(n * n + e * e, DEPTH + dz)).abs();
                worst_ratio = worst_ratio.max(err / peak);
            }
        }
    }
    check(
        worst_ratio < 0.01 && slowest < 1.0,
        format!(
            "worst error {:.3}% of peak, slowest {slowest:.3} s",
            100.0 * worst_ratio
        ),
    )
}

fn core_field_dipole() -> Outcome {
    let m = SphericalHarmonicModel::axial_dipole(2020.0, -30_000.0);
    let eq = m
        .synthesize(&GeoPosition::from_degrees(0.0, 0.0, 0.0).unwrap(), 2020.0)
        .unwrap();
    let pole = m
        .synthesize(&GeoPosition::from_degrees(90.0, 0.0, 0.0).unwrap(), 2020.0)
        .unwrap();
    let err = [
        eq.north - 30_000.0,
        eq.east,
        eq.down,
        pole.north,
        pole.east,
        pole.down - 60_000.0,
    ]
    .iter()
    .fold(0.0f64, |a, x| a.max(x.abs()));
    check(err < 1e-6, format!("max component error {err:.2e} nT"))
}

fn parked() -> InsState {
    InsState {
        t: 0.0,
        position: GeoPosition::from_degrees(38.0, -104.0, 1_500.0).unwrap(),
        velocity: Vector3::zeros(),
        attitude_nb: UnitQuaternion::identity(),
    }
}

fn stationary_hour(spec: &ImuSpec, errors: &mut ImuErrors, seed: u64) -> InsState {
    let dt = spec.dt();
    let config = MechanizationConfig::default();
    let mut next = parked();
    next.t = dt;
    let truth = ideal_increment(&parked(), &next, dt, &config);
    let mut m = Mechanizer::new(parked(), dt, config).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..(3_600.0 / dt).round() as usize {
        m.step(&errors.apply(&truth, &mut rng));
    }
    m.state
}

fn ins_bias_drift() -> Outcome {
    let spec = ImuSpec::perfect(100.0);
    let b = 100e-6 * GRAVITY;
    let expect = 0.5 * b * 3_600.0f64.powi(2);
    let mut errors = ImuErrors::zero(&spec);
    errors.accel_bias = Vector3::new(b, 0.0, 0.0);
    let err = stationary_hour(&spec, &mut errors, 0)
        .position
        .horizontal_distance(&parked().position);
    check(
        (err / expect - 1.0).abs() < 0.02,
        format!("{err:.1} m vs {expect:.1} m"),
    )
}

fn imu_calibration() -> Outcome {
    let strategic = ImuSpec::strategic_grade();
    let (vrw, arw) = (strategic.velocity_random_walk, strategic.angle_random_walk);
    let v_spec = ImuSpec {
        velocity_random_walk: vrw,
        ..ImuSpec::perfect(100.0)
    };
    let a_spec = ImuSpec {
        angle_random_walk: arw,
        ..ImuSpec::perfect(100.0)
    };
    let (mut v, mut a) = (Vec::new(), Vec::new());
    for run in 0..200 {
        let end = stationary_hour(&v_spec, &mut ImuErrors::zero(&v_spec), 1_000 + run);
        v.extend([end.velocity.x, end.velocity.y]);
        let tilt = stationary_hour(&a_spec, &mut ImuErrors::zero(&a_spec), 5_000 + run)
            .attitude_nb
            .scaled_axis();
        a.extend([tilt.x, tilt.y, tilt.z].map(f64::to_degrees));
    }
    let (sv, sa) = (common::rms(v), common::rms(a));
    check(
        (sv / vrw - 1.0).abs() < 0.1 && (sa / arw - 1.0).abs() < 0.1,
        format!("velocity {sv:.5} m/s (rated {vrw}), attitude {sa:.6} deg (rated {arw})"),
    )
}

fn online_learner() -> Outcome {
    let c = online_vs_batch();
    check(
        c.rms_difference < 5.0,
        format!(
            "{:.2} nT RMS over {} held-out samples",
            c.rms_difference, c.samples
        ),
    )
}

fn bounded_error() -> Outcome {
    let r = run_scenario(&reference()).map_err(|e| e.to_string())?;
    let e = r.magnav_errors();
    let n = e.len();
    let worst = e[n - n / 5..].iter().copied().fold(0.0, f64::max);
    let typical = median(&e[n - n / 2..]);
    let env = ins_envelope(&r);
    let (ins, mag) = (r.metrics.ins_final_m, r.metrics.magnav_final_m);
    check(
        ins >= 10.0 * mag && worst < 3.0 * typical && env.windows(2).all(|w| w[1] >= w[0]),
        format!(
            "INS {ins:.0} m, MagNav {mag:.1} m, tail max/median {:.2}",
            worst / typical
        ),
    )
}

fn onboard_vs_outboard() -> Outcome {
    let run = |name| run_scenario(&preset(name).unwrap()).map(|r| r.metrics.magnav_final_m);
    let on = run("(a)-3dvel-onboard").map_err(|e| e.to_string())?;
    let out = run("(a)-3dvel-outboard").map_err(|e| e.to_string())?;
    let ratio = on.max(out) / on.min(out);
    check(
        ratio < 3.0,
        format!("onboard {on:.1} m, outboard {out:.1} m, ratio {ratio:.2}"),
    )
}

fn warm_vs_cold() -> Outcome {
    let mut donor = reference();
    donor.seed = 41;
    let snapshot = run_scenario(&donor)
        .map_err(|e| e.to_string())?
        .snapshot
        .ok_or("no snapshot")?;
    let cold = run_scenario(&reference()).map_err(|e| e.to_string())?;
    let warm = run_scenario_with(
        &reference(),
        &RunOptions {
            start: Some(StartMode::Warm(snapshot)),
            ..Default::default()
        },
    )
    .map_err(|e| e.to_string())?;
    let open = cold.gate_open_time.ok_or("cold gate never opened")?;
    let mean = |r: &RunReport| {
        let v: Vec<f64> = r
            .epochs
            .iter()
            .filter(|e| e.t >= open)
            .map(|e| e.magnav_err)
            .collect();
        v.iter().sum::<f64>() / v.len() as f64
    };
    let (c, w) = (mean(&cold), mean(&warm));
    let diff = (c - w).abs() / c.max(w);
    check(
        diff < 0.25 && warm.epochs[0].gate_open,
        format!(
            "cold {c:.3} m, warm {w:.3} m after t = {open:.1} s ({:.1}% apart)",
            100.0 * diff
        ),
    )
}

fn initial_offset() -> Outcome {
    let mut worst: f64 = 0.0;
    for (n, e) in [
        (2_000.0, 0.0),
        (0.0, -2_000.0),
        (-1_414.2, 1_414.2),
        (1_414.2, 1_414.2),
    ] {
        let r =
            run_scenario(&offset_start(reference(), n, e, 2_000.0)).map_err(|e| e.to_string())?;
        if let Some(d) = r.divergence {
            return Err(format!("diverged from ({n}, {e}): {}", d.reason));
        }
        worst = worst.max(common::final_quarter_median(&r));
    }
    check(
        worst < 200.0,
        format!("worst final-quarter median {worst:.1} m over four directions"),
    )
}

fn ground_spikes() -> Outcome {
    let r = run_scenario(&preset("(c)-ground").unwrap()).map_err(|e| e.to_string())?;
    let s = &r.innovations;
    let early = r
        .epochs
        .iter()
        .filter(|e| !e.gate_open)
        .any(|e| e.magnav_err != e.ins_err);
    check(
        s.spikes_injected > 0
            && s.spikes_accepted == 0
            && s.accepted_beyond_gate == 0
            && r.metrics.magnav_final_m < r.metrics.ins_final_m
            && !early,
        format!(
            "{} spikes, {} accepted, {} beyond gate; INS {:.0} m, MagNav {:.1} m; gate opened at {:.1} s",
            s.spikes_injected,
            s.spikes_accepted,
            s.accepted_beyond_gate,
            r.metrics.ins_final_m,
            r.metrics.magnav_final_m,
            r.gate_open_time.unwrap_or(f64::NAN)
        ),
    )
}

fn metrics_table() -> Outcome {
    let b = compute_metrics(&[319.0], &[22.0], 365_000.0);
    let g = compute_metrics(&[1_200.0], &[180.0], 18_000.0);
    let rows = [
        advantage_factor(19_313.0, 515.0) == Advantage::Finite(38),
        b.advantage == Advantage::Finite(15) && b.magnav_percent == 0.006,
        advantage_factor(5_125.0, 112.0) == Advantage::Finite(46),
        g.advantage == Advantage::Finite(7) && g.magnav_percent == 1.0,
    ];
    check(rows.iter().all(|&x| x), format!("rows {rows:?}"))
}

fn throughput() -> Outcome {
    let iterations = 10_000;
    let cfg = reference();
    let maps = build_maps(&cfg).map_err(|e| e.to_string())?;
    let start = GeoPosition::from_degrees(
        cfg.trajectory.origin[0],
        cfg.trajectory.origin[1],
        cfg.trajectory.altitude,
    )
    .unwrap();
    let dt = 1.0 / cfg.filter.update_rate;
    let obs: Vec<_> = (0..iterations)
        .map(|k| {
            let t = (k + 1) as f64 * dt;
            let p = start.offset_ne(0.0, (k as f64 * 10.0) % 40_000.0);
            let (scalar, _) = maps.filter.map_scalar(&p, t, cfg.epoch).unwrap();
            let vector_body = Vector3::new(18_000.0, 1_500.0, 48_000.0);
            (
                MagObservation {
                    t,
                    scalar,
                    vector_body,
                    vector_rate_body: Vector3::zeros(),
                },
                p,
            )
        })
        .collect();
    let mut filter = FilterState::init(cfg.filter.clone(), start, 50.0, StartMode::Cold)
        .map_err(|e| e.to_string())?;
    let clock = Instant::now();
    for (o, p) in &obs {
        filter.predict(dt).map_err(|e| e.to_string())?;
        filter
            .update_magnetic(o, &maps.filter, p, std::f64::consts::FRAC_PI_2)
            .map_err(|e| e.to_string())?;
    }
    let mean_ms = clock.elapsed().as_secs_f64() * 1e3 / iterations as f64;
    check(
        mean_ms < 4.0,
        format!("{mean_ms:.3} ms mean over {iterations} predict+update cycles"),
    )
}

fn determinism() -> Outcome {
    let csv = |r: &RunReport| {
        let mut out = Vec::new();
        write_epoch_csv(r, &mut out).map(|_| out)
    };
    let mut differing = Vec::new();
    let all = presets();
    for c in &all {
        let a = run_scenario(c)
            .and_then(|r| csv(&r))
            .map_err(|e| e.to_string())?;
        let b = run_scenario(c)
            .and_then(|r| csv(&r))
            .map_err(|e| e.to_string())?;
        if a != b {
            differing.push(c.name.clone());
        }
    }
    check(
        differing.is_empty(),
        format!("{} presets re-run, differing: {differing:?}", all.len()),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 13] = [
        ("dipole upward continuation", dipole_continuation),
        ("core-field axial dipole", core_field_dipole),
        ("INS accelerometer-bias drift", ins_bias_drift),
        ("IMU random-walk calibration", imu_calibration),
        ("online learner vs batch fit", online_learner),
        ("bounded MagNav error", bounded_error),
        ("onboard vs outboard noise robustness", onboard_vs_outboard),
        ("warm vs cold start", warm_vs_cold),
        ("2 km initial offset", initial_offset),
        ("ground spikes and gating", ground_spikes),
        ("trial metrics arithmetic", metrics_table),
        ("filter throughput", throughput),
        ("preset determinism", determinism),
    ];
    let mut failures = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("PASS criterion {:>2} {name}: {detail}", i + 1),
            Err(detail) => {
                failures += 1;
                println!("FAIL criterion {:>2} {name}: {detail}", i + 1);
            }
        }
    }
    println!(
        "{} of {} criteria passed",
        criteria.len() - failures,
        criteria.len()
    );
    if failures > 0 {
        std::process::exit(1);
    }
}
