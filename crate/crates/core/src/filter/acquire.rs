//! Initial position acquisition by profile correlation.
//!
//! While the position is uncertain by more than the map correlation length the
//! linearized update has nothing to hold on to. The filter then buffers a short
//! window of measurements and searches a grid of candidate offsets for the one
//! whose map profile best matches the measured profile up to a constant (the
//! unknown platform offset and bias), using a clipped quadratic cost so that
//! spikes cannot dominate.

use nalgebra::Vector2;

use crate::geomag::GeoPosition;
use crate::maps::MapStack;

/// Most candidates evaluated in the coarse pass.
const MAX_CANDIDATES: f64 = 40_000.0;
/// Most samples used per candidate.
const MAX_SAMPLES: usize = 150;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionSample {
    /// Sensor position implied by the navigator with zero position error.
    pub position: GeoPosition,
    /// Measured scalar minus the modelled core field (nT).
    pub residual: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AcquisitionResult {
    /// Best position error `δpos = navigator − truth` (n, e), m.
    pub offset: Vector2<f64>,
    /// Mean clipped cost at the best offset (nT²).
    pub cost: f64,
    /// Median cost over the coarse grid (nT²).
    pub median_cost: f64,
    /// Spacing of the final pass (m).
    pub resolution: f64,
}

fn anomaly(stack: &MapStack, pos: &GeoPosition) -> Option<f64> {
    stack
        .layers()
        .iter()
        .enumerate()
        .find(|(_, g)| g.covers(pos))
        .and_then(|(i, _)| {
            stack
                .continued_layer(i, pos.altitude, 0)
                .grid
                .interpolate(pos)
                .ok()
        })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Cost of one candidate; `None` when any sample leaves map coverage.
fn cost(
    samples: &[AcquisitionSample],
    stack: &MapStack,
    d: &Vector2<f64>,
    clip: f64,
    buf: &mut Vec<f64>,
) -> Option<f64> {
    buf.clear();
    for s in samples {
        let a = anomaly(stack, &s.position.offset_ne(-d.x, -d.y))?;
        buf.push(s.residual - a);
    }
    let mut sorted = buf.clone();
    let m = median(&mut sorted);
    let c2 = clip * clip;
    Some(buf.iter().map(|r| (r - m).powi(2).min(c2)).sum::<f64>() / buf.len() as f64)
}

fn thin(samples: &[AcquisitionSample]) -> Vec<AcquisitionSample> {
    if samples.len() <= MAX_SAMPLES {
        return samples.to_vec();
    }
    let step = samples.len() as f64 / MAX_SAMPLES as f64;
    (0..MAX_SAMPLES)
        .map(|k| samples[(k as f64 * step) as usize])
        .collect()
}

/// Grid search over `|δn|, |δe| ≤ half_width` followed by a local refinement.
/// `spacing` is the coarse grid step; `clip` bounds each squared residual.
pub fn search_offset(
    samples: &[AcquisitionSample],
    stack: &MapStack,
    half_width: f64,
    spacing: f64,
    clip: f64,
) -> Option<AcquisitionResult> {
    if samples.len() < 3 || !(half_width > 0.0) || !(spacing > 0.0) {
        return None;
    }
    let samples = thin(samples);
    let mut spacing = spacing;
    let per_side = |s: f64| 2.0 * (half_width / s).ceil() + 1.0;
    while per_side(spacing).powi(2) > MAX_CANDIDATES {
        spacing *= 1.25;
    }
    let n = (half_width / spacing).ceil() as i64;
    let mut buf = Vec::with_capacity(samples.len());
    let mut best: Option<(f64, Vector2<f64>)> = None;
    let mut costs = Vec::new();
    for i in -n..=n {
        for j in -n..=n {
            let d = Vector2::new(i as f64 * spacing, j as f64 * spacing);
            if let Some(c) = cost(&samples, stack, &d, clip, &mut buf) {
                costs.push(c);
                if best.is_none_or(|(b, _)| c < b) {
                    best = Some((c, d));
                }
            }
        }
    }
    let (mut best_cost, mut best_d) = best?;
    let median_cost = median(&mut costs);
    let mut step = spacing;
    while step > spacing / 8.0 {
        step *= 0.5;
        let center = best_d;
        for i in -2..=2 {
            for j in -2..=2 {
                let d = center + Vector2::new(i as f64 * step, j as f64 * step);
                if let Some(c) = cost(&samples, stack, &d, clip, &mut buf) {
                    if c < best_cost {
                        best_cost = c;
                        best_d = d;
                    }
                }
            }
        }
    }
    Some(AcquisitionResult {
        offset: best_d,
        cost: best_cost,
        median_cost,
        resolution: step,
    })
}
