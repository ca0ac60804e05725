use super::MapError;
use crate::geomag::{wrap_longitude, GeoPosition};
use crate::EARTH_RADIUS;

/// Snap tolerance (in cells) for queries that land on grid nodes.
const NODE_SNAP: f64 = 1e-9;

/// Regular latitude/longitude grid of crustal anomaly values (nT) at a fixed
/// reference altitude. Row-major, row 0 at `origin_lat` (southern edge).
#[derive(Debug, Clone, PartialEq)]
pub struct AnomalyGrid {
    pub name: String,
    /// Higher is preferred when layers overlap.
    pub priority: i32,
    pub origin_lat: f64,
    pub origin_lon: f64,
    pub d_lat: f64,
    pub d_lon: f64,
    pub n_rows: usize,
    pub n_cols: usize,
    pub reference_altitude: f64,
    pub values: Vec<f64>,
    /// Rows/columns along each edge affected by continuation padding.
    pub low_confidence_border: (usize, usize),
}

impl AnomalyGrid {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        name: impl Into<String>,
        priority: i32,
        origin_lat: f64,
        origin_lon: f64,
        d_lat: f64,
        d_lon: f64,
        n_rows: usize,
        n_cols: usize,
        reference_altitude: f64,
        values: Vec<f64>,
    ) -> Result<Self, MapError> {
        let grid = Self {
            name: name.into(),
            priority,
            origin_lat,
            origin_lon: wrap_longitude(origin_lon),
            d_lat,
            d_lon,
            n_rows,
            n_cols,
            reference_altitude,
            values,
            low_confidence_border: (0, 0),
        };
        grid.validate()?;
        Ok(grid)
    }

    /// Grid whose node spacing is `cell` metres in both directions around `center`.
    pub fn from_metric(
        name: impl Into<String>,
        center: &GeoPosition,
        cell: f64,
        n_rows: usize,
        n_cols: usize,
        reference_altitude: f64,
        values: Vec<f64>,
    ) -> Result<Self, MapError> {
        let r = EARTH_RADIUS + reference_altitude;
        let d_lat = cell / r;
        let d_lon = cell / (r * center.latitude.cos());
        let origin_lat = center.latitude - d_lat * (n_rows - 1) as f64 / 2.0;
        let origin_lon = center.longitude - d_lon * (n_cols - 1) as f64 / 2.0;
        Self::new(
            name,
            0,
            origin_lat,
            origin_lon,
            d_lat,
            d_lon,
            n_rows,
            n_cols,
            reference_altitude,
            values,
        )
    }

    pub fn validate(&self) -> Result<(), MapError> {
        if self.n_rows < 2 || self.n_cols < 2 {
            return Err(MapError::Invalid(format!(
                "grid {:?} must be at least 2x2, got {}x{}",
                self.name, self.n_rows, self.n_cols
            )));
        }
        if !(self.d_lat > 0.0 && self.d_lon > 0.0) {
            return Err(MapError::Invalid("cell sizes must be positive".into()));
        }
        if self.values.len() != self.n_rows * self.n_cols {
            return Err(MapError::Invalid(format!(
                "expected {} values, got {}",
                self.n_rows * self.n_cols,
                self.values.len()
            )));
        }
        if let Some(k) = self.values.iter().position(|v| !v.is_finite()) {
            return Err(MapError::Invalid(format!(
                "non-finite value at row {}, col {}",
                k / self.n_cols,
                k % self.n_cols
            )));
        }
        Ok(())
    }

    #[inline]
    pub fn value(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.n_cols + col]
    }

    pub fn lat_of(&self, row: usize) -> f64 {
        self.origin_lat + row as f64 * self.d_lat
    }

    pub fn lon_of(&self, col: usize) -> f64 {
        wrap_longitude(self.origin_lon + col as f64 * self.d_lon)
    }

    pub fn node_position(&self, row: usize, col: usize) -> GeoPosition {
        GeoPosition {
            latitude: self.lat_of(row),
            longitude: self.lon_of(col),
            altitude: self.reference_altitude,
        }
    }

    /// North and east node spacing in metres at the grid centre.
    pub fn cell_size_m(&self) -> (f64, f64) {
        let r = EARTH_RADIUS + self.reference_altitude;
        let mid = self.origin_lat + 0.5 * self.d_lat * (self.n_rows - 1) as f64;
        (self.d_lat * r, self.d_lon * r * mid.cos())
    }

    /// Fractional (row, col) coordinates of a position.
    pub fn fractional_index(&self, pos: &GeoPosition) -> (f64, f64) {
        let mut fi = (pos.latitude - self.origin_lat) / self.d_lat;
        let mut fj = wrap_longitude(pos.longitude - self.origin_lon) / self.d_lon;
        if (fi - fi.round()).abs() < NODE_SNAP {
            fi = fi.round();
        }
        if (fj - fj.round()).abs() < NODE_SNAP {
            fj = fj.round();
        }
        (fi, fj)
    }

    /// True when `pos` lies inside the node bounding box shrunk by `margin` cells.
    pub fn covers_with_margin(&self, pos: &GeoPosition, margin: f64) -> bool {
        let (fi, fj) = self.fractional_index(pos);
        fi >= margin
            && fj >= margin
            && fi <= (self.n_rows - 1) as f64 - margin
            && fj <= (self.n_cols - 1) as f64 - margin
    }

    pub fn covers(&self, pos: &GeoPosition) -> bool {
        self.covers_with_margin(pos, 0.0)
    }

    /// Bilinear interpolation of the four surrounding nodes.
    pub fn interpolate(&self, pos: &GeoPosition) -> Result<f64, MapError> {
        let (fi, fj) = self.fractional_index(pos);
        self.interpolate_index(fi, fj)
            .ok_or_else(|| MapError::coverage(pos))
    }

    pub(crate) fn interpolate_index(&self, fi: f64, fj: f64) -> Option<f64> {
        let max_i = (self.n_rows - 1) as f64;
        let max_j = (self.n_cols - 1) as f64;
        if !(fi >= 0.0 && fj >= 0.0 && fi <= max_i && fj <= max_j) {
            return None;
        }
        let i0 = (fi.floor() as usize).min(self.n_rows - 2);
        let j0 = (fj.floor() as usize).min(self.n_cols - 2);
        let ti = fi - i0 as f64;
        let tj = fj - j0 as f64;
        let v00 = self.value(i0, j0);
        let v01 = self.value(i0, j0 + 1);
        let v10 = self.value(i0 + 1, j0);
        let v11 = self.value(i0 + 1, j0 + 1);
        let south = v00 + (v01 - v00) * tj;
        let north = v10 + (v11 - v10) * tj;
        Some(south + (north - south) * ti)
    }

    /// `(dB/dnorth, dB/deast)` in nT/m by central differences of the bilinear
    /// surface with a half-cell step. The query must be a full cell inside the grid.
    pub fn gradient(&self, pos: &GeoPosition) -> Result<(f64, f64), MapError> {
        if !self.covers_with_margin(pos, 1.0) {
            return Err(MapError::coverage(pos));
        }
        let (fi, fj) = self.fractional_index(pos);
        let f = |a: f64, b: f64| self.interpolate_index(a, b).expect("inside margin");
        let d_row = f(fi + 0.5, fj) - f(fi - 0.5, fj);
        let d_col = f(fi, fj + 0.5) - f(fi, fj - 0.5);
        let r = EARTH_RADIUS + pos.altitude;
        let north_per_cell = self.d_lat * r;
        let east_per_cell = self.d_lon * r * pos.latitude.cos();
        Ok((d_row / north_per_cell, d_col / east_per_cell))
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    pub fn rms(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() / self.values.len() as f64).sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// Copy with every value shifted by `offset`.
    pub fn shifted(&self, offset: f64) -> Self {
        let mut g = self.clone();
        g.values.iter_mut().for_each(|v| *v += offset);
        g
    }

    /// Latitude/longitude bounding box `(lat_min, lat_max, lon_min, lon_max)`.
    pub fn bounds(&self) -> (f64, f64, f64, f64) {
        (
            self.origin_lat,
            self.origin_lat + self.d_lat * (self.n_rows - 1) as f64,
            self.origin_lon,
            self.origin_lon + self.d_lon * (self.n_cols - 1) as f64,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn plane_grid(d: f64) -> AnomalyGrid {
        let (nr, nc) = (12, 15);
        let values = (0..nr * nc)
            .map(|k| 2.0 * (k / nc) as f64 + 3.0 * (k % nc) as f64)
            .collect();
        AnomalyGrid::new("plane", 0, 0.2, 0.5, d, d, nr, nc, 0.0, values).unwrap()
    }

    #[test]
    fn exact_at_nodes() {
        let g = plane_grid(1e-4);
        for (i, j) in [(0, 0), (3, 7), (11, 14), (5, 0)] {
            let p = g.node_position(i, j);
            assert!((g.interpolate(&p).unwrap() - g.value(i, j)).abs() < 1e-9);
        }
    }

    #[test]
    fn cell_center_is_corner_average() {
        let g = AnomalyGrid::new(
            "c",
            0,
            0.0,
            0.0,
            1e-4,
            1e-4,
            2,
            2,
            0.0,
            vec![0.0, 0.0, 0.0, 4.0],
        )
        .unwrap();
        let p = GeoPosition::new(0.5e-4, 0.5e-4, 0.0).unwrap();
        assert!((g.interpolate(&p).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn plane_reproduced_at_random_points() {
        let g = plane_grid(2e-4);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut worst = 0.0f64;
        for _ in 0..1000 {
            let fi = rng.random_range(0.0..11.0);
            let fj = rng.random_range(0.0..14.0);
            let p = GeoPosition::new(
                g.origin_lat + fi * g.d_lat,
                g.origin_lon + fj * g.d_lon,
                0.0,
            )
            .unwrap();
            let expect = 2.0 * fi + 3.0 * fj;
            worst = worst.max((g.interpolate(&p).unwrap() - expect).abs());
        }
        assert!(worst < 1e-9, "worst {worst}");
    }

    #[test]
    fn out_of_bounds_is_coverage_error() {
        let g = plane_grid(1e-4);
        let p = GeoPosition::new(0.19, 0.5, 0.0).unwrap();
        assert!(matches!(g.interpolate(&p), Err(MapError::Coverage { .. })));
    }

    #[test]
    fn constant_grid_has_zero_gradient() {
        let g = AnomalyGrid::new("k", 0, 0.0, 0.0, 1e-4, 1e-4, 5, 5, 0.0, vec![42.0; 25]).unwrap();
        let p = GeoPosition::new(2.2e-4, 1.7e-4, 0.0).unwrap();
        assert_eq!(g.gradient(&p).unwrap(), (0.0, 0.0));
    }

    #[test]
    fn northward_plane_gradient_per_metre() {
        let d = 1000.0 / EARTH_RADIUS;
        let values = (0..36).map(|k| 2.0 * (k / 6) as f64).collect();
        let g = AnomalyGrid::new("n", 0, 0.0, 0.0, d, d, 6, 6, 0.0, values).unwrap();
        let p = GeoPosition::new(2.3 * d, 2.6 * d, 0.0).unwrap();
        let (gn, ge) = g.gradient(&p).unwrap();
        assert!((gn - 0.002).abs() < 1e-12, "{gn}");
        assert!(ge.abs() < 1e-12);
    }

    #[test]
    fn gradient_needs_one_cell_margin() {
        let g = plane_grid(1e-4);
        let p = GeoPosition::new(
            g.origin_lat + 0.5 * g.d_lat,
            g.origin_lon + 5.0 * g.d_lon,
            0.0,
        )
        .unwrap();
        assert!(g.interpolate(&p).is_ok());
        assert!(matches!(g.gradient(&p), Err(MapError::Coverage { .. })));
    }

    #[test]
    fn directional_derivative_matches_gradient() {
        // Smooth surface sampled on a fine grid.
        let (nr, nc) = (80, 90);
        let d = 100.0 / EARTH_RADIUS;
        let values = (0..nr * nc)
            .map(|k| {
                let (i, j) = ((k / nc) as f64, (k % nc) as f64);
                40.0 * (i / 40.0).sin() * (j / 55.0).cos() + 10.0 * (0.01 * i + 0.02 * j).sin()
            })
            .collect();
        let g = AnomalyGrid::new("s", 0, 0.0, 0.0, d, d, nr, nc, 0.0, values).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut checked = 0;
        for _ in 0..200 {
            let p = GeoPosition::new(
                rng.random_range(10.0..70.0) * d,
                rng.random_range(10.0..80.0) * d,
                0.0,
            )
            .unwrap();
            let ang: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (un, ue) = (ang.cos(), ang.sin());
            let (gn, ge) = g.gradient(&p).unwrap();
            let proj = gn * un + ge * ue;
            let h = 100.0; // one cell
            let fd = (g.interpolate(&p.offset_ne(h * un, h * ue)).unwrap()
                - g.interpolate(&p.offset_ne(-h * un, -h * ue)).unwrap())
                / (2.0 * h);
            if proj.abs() > 0.002 {
                checked += 1;
                assert!(((fd - proj) / proj).abs() < 0.01, "fd {fd} proj {proj}");
            }
        }
        assert!(checked > 50);
    }

    proptest! {
        #[test]
        fn continuous_across_cell_boundaries(seed in 0u64..1000, col in 1usize..14, frac in 0.0f64..1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let values: Vec<f64> = (0..12 * 15).map(|_| rng.random_range(-100.0..100.0)).collect();
            let g = AnomalyGrid::new("r", 0, 0.0, 0.0, 1e-4, 1e-4, 12, 15, 0.0, values).unwrap();
            let fi = 3.0 + frac;
            let eps = 1e-12;
            let left = g.interpolate_index(fi, col as f64 - eps).unwrap();
            let right = g.interpolate_index(fi, col as f64 + eps).unwrap();
            prop_assert!((left - right).abs() < 1e-9);
        }
    }
}
