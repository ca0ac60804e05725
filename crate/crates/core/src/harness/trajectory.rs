use std::f64::consts::PI;

use nalgebra::{UnitQuaternion, Vector3};
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::geomag::GeoPosition;
use crate::ins::{advance_position, InsState};
use crate::GRAVITY;

pub const MAX_BANK_DEG: f64 = 45.0;
const MIN_SPEED: f64 = 1.0;
const MAX_SPEED: f64 = 350.0;
/// Distance over which a ground vehicle changes speed between legs (m).
const SPEED_RAMP_M: f64 = 100.0;

fn default_bank_deg() -> f64 {
    25.0
}

fn default_roll_time() -> f64 {
    3.0
}

/// Horizontal path shape. Points are north/east metres relative to the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Pattern {
    /// Open polyline flown once, with filleted corners.
    Waypoints {
        points: Vec<[f64; 2]>,
        #[serde(default)]
        turn_radius: Option<f64>,
    },
    /// Two straights of `length` joined by semicircles of diameter `width`.
    Racetrack {
        length: f64,
        width: f64,
        #[serde(default)]
        laps: Option<u32>,
    },
    /// Lobes through the origin, each a straight leg and a 270° turn of `radius`.
    Cloverleaf { radius: f64, lobes: u32 },
    /// Closed polygon with filleted corners and a per-leg speed (m/s).
    GroundLoop {
        points: Vec<[f64; 2]>,
        #[serde(default)]
        speed_profile: Vec<f64>,
        #[serde(default)]
        turn_radius: Option<f64>,
    },
}

impl Pattern {
    pub fn label(&self) -> &'static str {
        match self {
            Pattern::Waypoints { .. } => "waypoints",
            Pattern::Racetrack { .. } => "racetrack",
            Pattern::Cloverleaf { .. } => "cloverleaf",
            Pattern::GroundLoop { .. } => "ground_loop",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySpec {
    pub pattern: Pattern,
    /// Pattern origin, degrees latitude/longitude.
    pub origin: [f64; 2],
    /// Rotation of the pattern (initial heading), degrees.
    #[serde(default)]
    pub heading_deg: f64,
    /// Nominal speed (m/s).
    pub speed: f64,
    /// Altitude above the reference sphere (m), held constant.
    pub altitude: f64,
    /// Duration cap (s).
    pub duration: f64,
    /// Bank angle used to size default fillet radii (degrees).
    #[serde(default = "default_bank_deg")]
    pub design_bank_deg: f64,
    /// Time over which bank is rolled in and out (s).
    #[serde(default = "default_roll_time")]
    pub roll_time: f64,
}

/// One truth sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruthPose {
    pub t: f64,
    pub position: GeoPosition,
    /// NED velocity (m/s).
    pub velocity: Vector3<f64>,
    pub attitude_nb: UnitQuaternion<f64>,
    /// Planar north/east coordinates of the pattern (m).
    pub ne: [f64; 2],
    /// Path distance travelled (m).
    pub distance: f64,
    pub bank: f64,
}

impl TruthPose {
    pub fn as_ins_state(&self) -> InsState {
        InsState {
            t: self.t,
            position: self.position,
            velocity: self.velocity,
            attitude_nb: self.attitude_nb,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Segment {
    Line {
        length: f64,
        speed: f64,
    },
    /// `angle` > 0 turns right (heading increases).
    Arc {
        radius: f64,
        angle: f64,
        speed: f64,
    },
}

impl Segment {
    fn length(&self) -> f64 {
        match *self {
            Segment::Line { length, .. } => length,
            Segment::Arc { radius, angle, .. } => radius * angle.abs(),
        }
    }

    fn speed(&self) -> f64 {
        match *self {
            Segment::Line { speed, .. } | Segment::Arc { speed, .. } => speed,
        }
    }

    fn curvature(&self) -> f64 {
        match *self {
            Segment::Line { .. } => 0.0,
            Segment::Arc { radius, angle, .. } => angle.signum() / radius,
        }
    }
}

/// Planar path: start point, start heading and segments.
#[derive(Debug, Clone)]
pub(crate) struct Path {
    segments: Vec<Segment>,
    /// Start state of each segment: (s, n, e, heading).
    starts: Vec<(f64, f64, f64, f64)>,
    closed: bool,
}

impl Path {
    fn new(start: [f64; 2], heading: f64, segments: Vec<Segment>, closed: bool) -> Self {
        let mut starts = Vec::with_capacity(segments.len());
        let (mut s, mut n, mut e, mut h) = (0.0, start[0], start[1], heading);
        for seg in &segments {
            starts.push((s, n, e, h));
            let (n1, e1, h1) = advance_segment(seg, n, e, h, seg.length());
            s += seg.length();
            n = n1;
            e = e1;
            h = h1;
        }
        Self {
            segments,
            starts,
            closed,
        }
    }

    pub(crate) fn length(&self) -> f64 {
        self.segments.iter().map(Segment::length).sum()
    }

    fn locate(&self, s: f64) -> usize {
        match self.starts.binary_search_by(|st| st.0.total_cmp(&s)) {
            Ok(i) => i,
            Err(i) => i.saturating_sub(1),
        }
    }

    /// (n, e, heading, curvature, speed) at distance `s`, with `s` wrapped for closed paths.
    fn at(&self, s: f64) -> (f64, f64, f64, f64, f64) {
        let len = self.length();
        let s = if self.closed {
            s.rem_euclid(len)
        } else {
            s.clamp(0.0, len)
        };
        let i = self.locate(s);
        let (s0, n, e, h) = self.starts[i];
        let seg = &self.segments[i];
        let (n, e, h) = advance_segment(seg, n, e, h, s - s0);
        (n, e, h, seg.curvature(), self.speed_at(i, s - s0))
    }

    /// Speed ramps linearly from the previous segment's speed over the start of each segment.
    fn speed_at(&self, i: usize, ds: f64) -> f64 {
        let v = self.segments[i].speed();
        let prev = if i > 0 {
            self.segments[i - 1].speed()
        } else if self.closed {
            self.segments[self.segments.len() - 1].speed()
        } else {
            v
        };
        if prev == v {
            return v;
        }
        let ramp = SPEED_RAMP_M.min(0.5 * self.segments[i].length());
        if ds >= ramp {
            v
        } else {
            prev + (v - prev) * ds / ramp
        }
    }
}

fn advance_segment(seg: &Segment, n: f64, e: f64, h: f64, ds: f64) -> (f64, f64, f64) {
    match *seg {
        Segment::Line { .. } => (n + ds * h.cos(), e + ds * h.sin(), h),
        Segment::Arc { radius, angle, .. } => {
            let sign = angle.signum();
            let dh = sign * ds / radius;
            // Centre lies to the right (sign > 0) or left of the heading.
            let (cn, ce) = (n - sign * radius * h.sin(), e + sign * radius * h.cos());
            let h1 = h + dh;
            (
                cn + sign * radius * h1.sin(),
                ce - sign * radius * h1.cos(),
                h1,
            )
        }
    }
}

fn rotate(p: [f64; 2], heading: f64) -> [f64; 2] {
    let (s, c) = heading.sin_cos();
    [p[0] * c - p[1] * s, p[0] * s + p[1] * c]
}

fn wrap_pi(a: f64) -> f64 {
    let x = (a + PI).rem_euclid(2.0 * PI) - PI;
    if x == -PI {
        PI
    } else {
        x
    }
}

/// Polyline with corners rounded by arcs of `radius`. Closed loops round every
/// vertex and start halfway along the first leg.
fn filleted(
    points: &[[f64; 2]],
    radius: f64,
    speeds: &[f64],
    closed: bool,
) -> Result<Path, HarnessError> {
    let n = points.len();
    if n < 2 || (closed && n < 3) {
        return Err(HarnessError::Spec(format!(
            "need at least {} points",
            if closed { 3 } else { 2 }
        )));
    }
    let legs = if closed { n } else { n - 1 };
    let leg = |i: usize| {
        let (a, b) = (points[i % n], points[(i + 1) % n]);
        let (dn, de) = (b[0] - a[0], b[1] - a[1]);
        (dn.hypot(de), de.atan2(dn))
    };
    let speed = |i: usize| speeds[i % speeds.len()];
    // Turn at the vertex ending leg i.
    let turn = |i: usize| wrap_pi(leg((i + 1) % legs).1 - leg(i).1);
    let tangent = |i: usize| radius * (0.5 * turn(i).abs()).tan();
    for i in 0..legs {
        let (len, _) = leg(i);
        if len == 0.0 {
            return Err(HarnessError::Spec(format!("leg {i} has zero length")));
        }
        let has_in = closed || i > 0;
        let has_out = closed || i + 1 < legs;
        let used = if has_in {
            tangent((i + legs - 1) % legs)
        } else {
            0.0
        } + if has_out { tangent(i) } else { 0.0 };
        if used > len {
            return Err(HarnessError::Spec(format!(
                "leg {i} ({len:.0} m) is too short for the {radius:.0} m turn radius"
            )));
        }
        if has_out && turn(i).abs() > PI - 1e-6 {
            return Err(HarnessError::Spec(format!(
                "reversal at the end of leg {i}"
            )));
        }
    }
    let mut segments = Vec::new();
    let start;
    let heading = leg(0).1;
    if closed {
        let (len0, _) = leg(0);
        let half = 0.5 * len0;
        start = [
            points[0][0] + half * heading.cos(),
            points[0][1] + half * heading.sin(),
        ];
        for i in 0..legs {
            let (len, _) = leg(i);
            let t_in = tangent((i + legs - 1) % legs);
            let t_out = tangent(i);
            let straight = if i == 0 {
                half - t_out
            } else {
                len - t_in - t_out
            };
            segments.push(Segment::Line {
                length: straight,
                speed: speed(i),
            });
            segments.push(Segment::Arc {
                radius,
                angle: turn(i),
                speed: speed((i + 1) % legs),
            });
        }
        segments.push(Segment::Line {
            length: half - tangent(legs - 1),
            speed: speed(0),
        });
    } else {
        start = points[0];
        for i in 0..legs {
            let (len, _) = leg(i);
            let t_in = if i > 0 { tangent(i - 1) } else { 0.0 };
            let t_out = if i + 1 < legs { tangent(i) } else { 0.0 };
            segments.push(Segment::Line {
                length: len - t_in - t_out,
                speed: speed(i),
            });
            if i + 1 < legs && turn(i) != 0.0 {
                segments.push(Segment::Arc {
                    radius,
                    angle: turn(i),
                    speed: speed(i + 1),
                });
            }
        }
    }
    segments.retain(|s| s.length() > 0.0);
    Ok(Path::new(start, heading, segments, closed))
}

impl TrajectorySpec {
    pub fn validate(&self) -> Result<(), HarnessError> {
        let check_speed = |v: f64| {
            if v > MIN_SPEED && v < MAX_SPEED {
                Ok(())
            } else {
                Err(HarnessError::Spec(format!(
                    "speed {v} m/s outside ({MIN_SPEED}, {MAX_SPEED})"
                )))
            }
        };
        check_speed(self.speed)?;
        if let Pattern::GroundLoop { speed_profile, .. } = &self.pattern {
            speed_profile.iter().try_for_each(|&v| check_speed(v))?;
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(HarnessError::Spec("duration must be > 0".into()));
        }
        if !(self.design_bank_deg > 0.0 && self.design_bank_deg <= MAX_BANK_DEG) {
            return Err(HarnessError::Spec(format!(
                "design bank must lie in (0, {MAX_BANK_DEG}] degrees"
            )));
        }
        if !(self.roll_time >= 0.0) {
            return Err(HarnessError::Spec("roll time must be >= 0".into()));
        }
        GeoPosition::from_degrees(self.origin[0], self.origin[1], self.altitude)
            .map_err(|e| HarnessError::Spec(e.to_string()))?;
        Ok(())
    }

    pub fn origin_position(&self) -> GeoPosition {
        GeoPosition::from_degrees(self.origin[0], self.origin[1], self.altitude)
            .expect("validated origin")
    }

    fn default_radius(&self, speed: f64) -> f64 {
        speed * speed / (GRAVITY * self.design_bank_deg.to_radians().tan())
    }

    pub(crate) fn path(&self) -> Result<Path, HarnessError> {
        let h0 = self.heading_deg.to_radians();
        let v = self.speed;
        let positive = |x: f64, what: &str| {
            if x > 0.0 && x.is_finite() {
                Ok(())
            } else {
                Err(HarnessError::Spec(format!("{what} must be > 0")))
            }
        };
        let path = match &self.pattern {
            Pattern::Racetrack { length, width, .. } => {
                positive(*length, "racetrack length")?;
                positive(*width, "racetrack width")?;
                let r = 0.5 * width;
                let start = rotate([-0.5 * length, r], h0);
                let segments = vec![
                    Segment::Line {
                        length: *length,
                        speed: v,
                    },
                    Segment::Arc {
                        radius: r,
                        angle: -PI,
                        speed: v,
                    },
                    Segment::Line {
                        length: *length,
                        speed: v,
                    },
                    Segment::Arc {
                        radius: r,
                        angle: -PI,
                        speed: v,
                    },
                ];
                Path::new(start, h0, segments, true)
            }
            Pattern::Cloverleaf { radius, lobes } => {
                positive(*radius, "cloverleaf radius")?;
                if *lobes == 0 {
                    return Err(HarnessError::Spec(
                        "cloverleaf needs at least one lobe".into(),
                    ));
                }
                let mut segments = Vec::new();
                for _ in 0..*lobes {
                    segments.push(Segment::Line {
                        length: *radius,
                        speed: v,
                    });
                    segments.push(Segment::Arc {
                        radius: *radius,
                        angle: -1.5 * PI,
                        speed: v,
                    });
                    segments.push(Segment::Line {
                        length: *radius,
                        speed: v,
                    });
                }
                // Each lobe exits 90° clockwise of its entry; close the cycle only when lobes = 4.
                Path::new([0.0, 0.0], h0, segments, *lobes % 4 == 0)
            }
            Pattern::Waypoints {
                points,
                turn_radius,
            } => {
                let r = turn_radius.unwrap_or_else(|| self.default_radius(v));
                positive(r, "turn radius")?;
                let pts: Vec<_> = points.iter().map(|p| rotate(*p, h0)).collect();
                filleted(&pts, r, &[v], false)?
            }
            Pattern::GroundLoop {
                points,
                speed_profile,
                turn_radius,
            } => {
                let speeds = if speed_profile.is_empty() {
                    vec![v]
                } else {
                    speed_profile.clone()
                };
                let vmax = speeds.iter().cloned().fold(0.0, f64::max);
                let r = turn_radius.unwrap_or_else(|| self.default_radius(vmax));
                positive(r, "turn radius")?;
                let pts: Vec<_> = points.iter().map(|p| rotate(*p, h0)).collect();
                filleted(&pts, r, &speeds, true)?
            }
        };
        for (i, seg) in path.segments.iter().enumerate() {
            let bank = (seg.speed().powi(2) * seg.curvature().abs() / GRAVITY)
                .atan()
                .to_degrees();
            if bank > MAX_BANK_DEG {
                return Err(HarnessError::Spec(format!(
                    "segment {i} ({:?}) needs {bank:.1}° of bank, above {MAX_BANK_DEG}°",
                    seg
                )));
            }
        }
        Ok(path)
    }

    /// Total distance the trajectory will cover within the duration cap (m).
    fn distance_limit(&self, path: &Path) -> f64 {
        match &self.pattern {
            Pattern::Racetrack { laps: Some(l), .. } => path.length() * *l as f64,
            Pattern::Waypoints { .. } => path.length(),
            _ if !path.closed => path.length(),
            _ => f64::INFINITY,
        }
    }
}

/// Samples the trajectory every `dt` seconds until the duration cap or the
/// end of the path, whichever comes first.
pub fn generate_trajectory(spec: &TrajectorySpec, dt: f64) -> Result<Vec<TruthPose>, HarnessError> {
    spec.validate()?;
    if !(dt > 0.0 && dt <= 1.0) {
        return Err(HarnessError::Spec(format!(
            "time step {dt} s outside (0, 1]"
        )));
    }
    let path = spec.path()?;
    let s_max = spec.distance_limit(&path);
    let n_max = (spec.duration / dt).round() as usize;

    // Distance along the path: exact for constant speed, RK4 otherwise.
    let constant = path.segments.iter().all(|s| s.speed() == spec.speed);
    let mut samples = Vec::with_capacity(n_max + 1);
    let mut s = 0.0;
    for k in 0..=n_max {
        if k > 0 {
            s = if constant {
                spec.speed * dt * k as f64
            } else {
                let f = |x: f64| path.at(x).4;
                let k1 = f(s);
                let k2 = f(s + 0.5 * dt * k1);
                let k3 = f(s + 0.5 * dt * k2);
                let k4 = f(s + dt * k3);
                s + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            };
        }
        if s > s_max + 1e-9 {
            break;
        }
        samples.push((k as f64 * dt, s, path.at(s)));
    }
    if samples.len() < 2 {
        return Err(HarnessError::Spec(
            "trajectory shorter than one time step".into(),
        ));
    }

    let target: Vec<f64> = samples
        .iter()
        .map(|(_, _, (_, _, _, kappa, v))| (v * v * kappa / GRAVITY).atan())
        .collect();
    let bank = smooth_centered(&target, (spec.roll_time / dt).round() as usize);

    let origin = spec.origin_position();
    let mut out: Vec<TruthPose> = Vec::with_capacity(samples.len());
    for (k, &(t, s, (n, e, h, _, v))) in samples.iter().enumerate() {
        let velocity = Vector3::new(v * h.cos(), v * h.sin(), 0.0);
        let position = match out.last() {
            None => origin.offset_ne(n, e),
            Some(prev) => advance_position(&prev.position, &prev.velocity, &velocity, dt),
        };
        out.push(TruthPose {
            t,
            position,
            velocity,
            attitude_nb: UnitQuaternion::from_euler_angles(bank[k], 0.0, h),
            ne: [n, e],
            distance: s,
            bank: bank[k],
        });
    }
    Ok(out)
}

/// Centered moving average over `window` samples, edges padded with end values.
fn smooth_centered(x: &[f64], window: usize) -> Vec<f64> {
    if window < 2 {
        return x.to_vec();
    }
    let half = window / 2;
    let n = x.len();
    let at = |i: isize| x[i.clamp(0, n as isize - 1) as usize];
    let mut prefix = Vec::with_capacity(n + 2 * half + 1);
    prefix.push(0.0);
    for i in -(half as isize)..(n + half) as isize {
        let last = *prefix.last().unwrap();
        prefix.push(last + at(i));
    }
    let w = 2 * half + 1;
    (0..n)
        .map(|i| (prefix[i + w] - prefix[i]) / w as f64)
        .collect()
}
