use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::GeomagError;

/// Timestamped scalar disturbance (seconds, nT), linearly interpolated.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct DisturbanceSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    /// Hold the end values outside the sampled span instead of returning zero.
    #[serde(default)]
    pub extrapolate: bool,
}

impl DisturbanceSeries {
    pub fn new(times: Vec<f64>, values: Vec<f64>, extrapolate: bool) -> Result<Self, GeomagError> {
        let s = Self {
            times,
            values,
            extrapolate,
        };
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<(), GeomagError> {
        if self.times.len() != self.values.len() {
            return Err(GeomagError::TemporalInvalid(
                "times and values differ in length".into(),
            ));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(GeomagError::TemporalInvalid(
                "timestamps must be strictly increasing".into(),
            ));
        }
        if self
            .times
            .iter()
            .chain(&self.values)
            .any(|v| !v.is_finite())
        {
            return Err(GeomagError::TemporalInvalid("non-finite sample".into()));
        }
        Ok(())
    }

    pub fn value_at(&self, t: f64) -> f64 {
        let (Some(&t0), Some(&t1)) = (self.times.first(), self.times.last()) else {
            return 0.0;
        };
        if t < t0 || t > t1 {
            if !self.extrapolate {
                return 0.0;
            }
            return if t < t0 {
                self.values[0]
            } else {
                *self.values.last().unwrap()
            };
        }
        let k = self.times.partition_point(|&x| x <= t);
        if k == 0 {
            return self.values[0];
        }
        if k >= self.times.len() {
            return *self.values.last().unwrap();
        }
        let (ta, tb) = (self.times[k - 1], self.times[k]);
        let (va, vb) = (self.values[k - 1], self.values[k]);
        va + (vb - va) * (t - ta) / (tb - ta)
    }
}

/// Additive disturbance of the measured total intensity: a diurnal sinusoid
/// plus an optional injected series (e.g. a storm).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemporalModel {
    #[serde(default)]
    pub diurnal_amplitude: f64,
    #[serde(default)]
    pub diurnal_phase: f64,
    #[serde(default = "default_period")]
    pub diurnal_period: f64,
    #[serde(default)]
    pub disturbance: Option<DisturbanceSeries>,
}

fn default_period() -> f64 {
    86_400.0
}

impl Default for TemporalModel {
    fn default() -> Self {
        Self {
            diurnal_amplitude: 0.0,
            diurnal_phase: 0.0,
            diurnal_period: default_period(),
            disturbance: None,
        }
    }
}

impl TemporalModel {
    pub fn diurnal(amplitude: f64, phase: f64) -> Self {
        Self {
            diurnal_amplitude: amplitude,
            diurnal_phase: phase,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GeomagError> {
        if !(self.diurnal_amplitude >= 0.0) || !self.diurnal_amplitude.is_finite() {
            return Err(GeomagError::TemporalInvalid(
                "diurnal amplitude must be >= 0".into(),
            ));
        }
        if !(self.diurnal_period > 0.0) {
            return Err(GeomagError::TemporalInvalid(
                "diurnal period must be > 0".into(),
            ));
        }
        if let Some(series) = &self.disturbance {
            series.validate()?;
        }
        Ok(())
    }

    /// Offset (nT) at `t` seconds since scenario start.
    pub fn offset(&self, t: f64) -> f64 {
        let diurnal = if self.diurnal_amplitude == 0.0 {
            0.0
        } else {
            self.diurnal_amplitude * (TAU * t / self.diurnal_period + self.diurnal_phase).sin()
        };
        diurnal + self.disturbance.as_ref().map_or(0.0, |s| s.value_at(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn diurnal_zero_and_peak() {
        let m = TemporalModel::diurnal(100.0, 0.0);
        assert_eq!(m.offset(0.0), 0.0);
        assert!((m.offset(86_400.0 / 4.0) - 100.0).abs() < 1e-9);
    }

    #[test]
    fn series_interpolates_linearly() {
        let m = TemporalModel {
            disturbance: Some(
                DisturbanceSeries::new(vec![0.0, 100.0], vec![0.0, 500.0], false).unwrap(),
            ),
            ..TemporalModel::default()
        };
        assert!((m.offset(50.0) - 250.0).abs() < 1e-12);
        assert_eq!(m.offset(150.0), 0.0);
    }

    #[test]
    fn extrapolation_holds_end_values() {
        let s = DisturbanceSeries::new(vec![10.0, 20.0], vec![3.0, 7.0], true).unwrap();
        assert_eq!(s.value_at(0.0), 3.0);
        assert_eq!(s.value_at(25.0), 7.0);
    }

    #[test]
    fn non_increasing_timestamps_rejected() {
        assert!(DisturbanceSeries::new(vec![0.0, 0.0], vec![1.0, 2.0], false).is_err());
        assert!(DisturbanceSeries::new(vec![0.0, 1.0], vec![1.0], false).is_err());
    }

    proptest! {
        #[test]
        fn diurnal_term_is_periodic(
            amp in 0.0f64..500.0,
            phase in -3.0f64..3.0,
            t in 0.0f64..200_000.0,
            a in -100.0f64..100.0,
            b in -100.0f64..100.0,
        ) {
            let series = DisturbanceSeries::new(vec![0.0, 40_000.0, 150_000.0], vec![a, b, 0.0], false).unwrap();
            let m = TemporalModel {
                diurnal_amplitude: amp,
                diurnal_phase: phase,
                diurnal_period: 86_400.0,
                disturbance: Some(series.clone()),
            };
            let lhs = m.offset(t) - m.offset(t + 86_400.0);
            let rhs = series.value_at(t) - series.value_at(t + 86_400.0);
            // Phase evaluated at t and t + period differs by 2π; the round-off of
            // sin at arguments ~10 rad bounds the residual.
            prop_assert!((lhs - rhs).abs() < 1e-9, "lhs {} rhs {}", lhs, rhs);
        }
    }
}
