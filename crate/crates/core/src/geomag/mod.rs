//! Core geomagnetic field and additive temporal disturbances.

mod coeff_file;
mod harmonic;
mod temporal;

pub use coeff_file::{load_harmonic_coefficients, write_harmonic_coefficients};
pub use harmonic::{SphericalHarmonicModel, MAX_SUPPORTED_DEGREE};
pub use temporal::{DisturbanceSeries, TemporalModel};

use std::f64::consts::PI;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::EARTH_RADIUS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomagError {
    #[error("invalid harmonic model: {0}")]
    ModelInvalid(String),
    #[error("epoch {epoch} outside model validity [{start}, {end}]")]
    EpochOutOfRange { epoch: f64, start: f64, end: f64 },
    #[error("invalid position: {0}")]
    InvalidPosition(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: duplicate entry for degree {n} order {m}")]
    DuplicateEntry { line: usize, n: usize, m: usize },
    #[error("invalid temporal model: {0}")]
    TemporalInvalid(String),
}

/// Platform position on a spherical Earth.
///
/// Latitude is in `[-π/2, π/2]`, longitude is kept in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPosition {
    pub latitude: f64,
    pub longitude: f64,
    pub altitude: f64,
}

impl GeoPosition {
    pub fn new(latitude: f64, longitude: f64, altitude: f64) -> Result<Self, GeomagError> {
        if !(latitude.is_finite() && longitude.is_finite() && altitude.is_finite()) {
            return Err(GeomagError::InvalidPosition("non-finite coordinate".into()));
        }
        if latitude.abs() > PI / 2.0 + 1e-12 {
            return Err(GeomagError::InvalidPosition(format!(
                "latitude {latitude} rad outside [-pi/2, pi/2]"
            )));
        }
        if altitude <= -10_000.0 {
            return Err(GeomagError::InvalidPosition(format!(
                "altitude {altitude} m below -10 km"
            )));
        }
        Ok(Self {
            latitude: latitude.clamp(-PI / 2.0, PI / 2.0),
            longitude: wrap_longitude(longitude),
            altitude,
        })
    }

    pub fn from_degrees(lat_deg: f64, lon_deg: f64, altitude: f64) -> Result<Self, GeomagError> {
        Self::new(lat_deg.to_radians(), lon_deg.to_radians(), altitude)
    }

    /// Moves the position by a local north/east displacement (m) using the
    /// small-area spherical approximation.
    pub fn offset_ne(&self, north: f64, east: f64) -> Self {
        let r = EARTH_RADIUS + self.altitude;
        let lat = self.latitude + north / r;
        let lon = self.longitude + east / (r * self.latitude.cos());
        Self {
            latitude: lat.clamp(-PI / 2.0, PI / 2.0),
            longitude: wrap_longitude(lon),
            altitude: self.altitude,
        }
    }

    /// Local north/east displacement (m) of `self` relative to `origin`; the
    /// inverse of [`GeoPosition::offset_ne`].
    pub fn ne_from(&self, origin: &GeoPosition) -> (f64, f64) {
        let r = EARTH_RADIUS + origin.altitude;
        let dlat = self.latitude - origin.latitude;
        let dlon = wrap_longitude(self.longitude - origin.longitude);
        (dlat * r, dlon * r * origin.latitude.cos())
    }

    /// Horizontal distance (m) between two positions, local planar approximation.
    pub fn horizontal_distance(&self, other: &GeoPosition) -> f64 {
        let (n, e) = self.ne_from(other);
        n.hypot(e)
    }
}

/// Wraps a longitude to `(-π, π]`.
pub fn wrap_longitude(lon: f64) -> f64 {
    let mut x = lon.rem_euclid(2.0 * PI);
    if x > PI {
        x -= 2.0 * PI;
    }
    x
}

/// Magnetic field in the local north/east/down frame (nT).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct FieldVector {
    pub north: f64,
    pub east: f64,
    pub down: f64,
}

impl FieldVector {
    pub fn new(north: f64, east: f64, down: f64) -> Self {
        Self { north, east, down }
    }

    pub fn magnitude(&self) -> f64 {
        self.as_vector().norm()
    }

    pub fn as_vector(&self) -> Vector3<f64> {
        Vector3::new(self.north, self.east, self.down)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self::new(v.x, v.y, v.z)
    }
}
