//! Crustal anomaly maps: grids, continuation, levelling and the layered stack.

mod ascii;
mod continuation;
mod grid;
mod stack;

pub use ascii::{
    load_grid_ascii, load_grid_file, load_manifest, write_grid_ascii, write_grid_file,
};
pub use continuation::{
    continue_to, downward_continue, gaussian_smooth, upward_continue, Continuation,
    MAX_DOWNWARD_GAIN, TAPER_FRACTION,
};
pub use grid::AnomalyGrid;
pub use stack::{
    level_layers, ContinuedLayer, MapQuery, MapSample, MapStack, StackConfig, StackManifestEntry,
};

use thiserror::Error;

use crate::geomag::{GeoPosition, GeomagError};

#[derive(Debug, Error)]
pub enum MapError {
    #[error("no map coverage at lat {lat_deg:.6}°, lon {lon_deg:.6}°, alt {altitude:.1} m")]
    Coverage {
        lat_deg: f64,
        lon_deg: f64,
        altitude: f64,
    },
    #[error("grid parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("invalid grid: {0}")]
    Invalid(String),
    #[error("invalid map stack: {0}")]
    Stack(String),
    #[error(transparent)]
    Geomag(#[from] GeomagError),
    #[error("{path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

impl MapError {
    pub fn coverage(pos: &GeoPosition) -> Self {
        MapError::Coverage {
            lat_deg: pos.latitude.to_degrees(),
            lon_deg: pos.longitude.to_degrees(),
            altitude: pos.altitude,
        }
    }
}
