//! Magnetic-anomaly navigation toolkit.
//!
//! The crate is organised along the processing chain of a MagNav system:
//!
//! - [`geomag`]: core-field spherical-harmonic synthesis and temporal disturbances.
//! - [`maps`]: anomaly grids, levelling, altitude continuation and the layered map stack.
//! - [`platform`]: Tolles-Lawson style platform interference and magnetometer simulation.
//! - [`ins`]: strapdown IMU error model, mechanization and velocity aiding.
//! - [`filter`]: the map-matching error-state filter with online platform learning.
//! - [`harness`]: trajectories, synthetic maps, end-to-end scenarios, metrics and reports.
//!
//! Angles are radians and distances metres unless a name says otherwise. Magnetic
//! quantities are nanotesla.

pub mod filter;
pub mod geomag;
pub mod harness;
pub mod ins;
pub mod maps;
pub mod platform;

mod spectral;

/// Mean spherical Earth radius used for field synthesis and local-level geometry (m).
pub const EARTH_RADIUS: f64 = 6_371_200.0;

/// Standard gravity (m/s²).
pub const GRAVITY: f64 = 9.806_65;
