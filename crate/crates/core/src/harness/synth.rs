use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;

use super::HarnessError;
use crate::geomag::GeoPosition;
use crate::maps::AnomalyGrid;
use crate::spectral::{fft2, wavenumber};

/// Gaussian random anomaly field with power spectrum ∝ |k|^(−slope), zero mean
/// and RMS exactly `rms`, on an `extent`×`extent` grid of `cell`-metre spacing
/// centred on `center`. The field is periodic over the grid.
pub fn synth_map(
    name: &str,
    rms: f64,
    slope: f64,
    cell: f64,
    extent: usize,
    center: &GeoPosition,
    seed: u64,
) -> Result<AnomalyGrid, HarnessError> {
    if !(rms > 0.0 && rms.is_finite()) {
        return Err(HarnessError::Spec("map rms must be > 0".into()));
    }
    if !(2.0..=4.0).contains(&slope) {
        return Err(HarnessError::Spec(format!(
            "spectral slope {slope} outside [2, 4]"
        )));
    }
    if !(cell > 0.0) || extent < 8 {
        return Err(HarnessError::Spec(
            "map needs cell > 0 and at least 8 cells".into(),
        ));
    }
    let n = extent;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data: Vec<Complex64> = (0..n * n)
        .map(|_| Complex64::new(StandardNormal.sample(&mut rng), 0.0))
        .collect();
    fft2(&mut data, n, n, false);
    for i in 0..n {
        let ky = wavenumber(i, n, cell);
        for j in 0..n {
            let kx = wavenumber(j, n, cell);
            let k = kx.hypot(ky);
            data[i * n + j] *= if k == 0.0 { 0.0 } else { k.powf(-0.5 * slope) };
        }
    }
    fft2(&mut data, n, n, true);
    let mut values: Vec<f64> = data.iter().map(|c| c.re).collect();
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    for v in &mut values {
        *v = (*v - mean) * rms / std;
    }
    Ok(AnomalyGrid::from_metric(
        name,
        center,
        cell,
        n,
        n,
        center.altitude,
        values,
    )?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn center() -> GeoPosition {
        GeoPosition::from_degrees(45.0, 10.0, 1000.0).unwrap()
    }

    #[test]
    fn rms_and_mean_match() {
        let g = synth_map("m", 50.0, 3.0, 250.0, 128, &center(), 7).unwrap();
        let n = g.values.len() as f64;
        let mean = g.values.iter().sum::<f64>() / n;
        let rms = (g.values.iter().map(|v| v * v).sum::<f64>() / n).sqrt();
        assert!(mean.abs() < 1e-9);
        assert!((rms / 50.0 - 1.0).abs() < 0.02);
        assert_eq!(g.reference_altitude, 1000.0);
    }

    #[test]
    fn seeded_output_is_identical() {
        let a = synth_map("m", 50.0, 3.0, 250.0, 64, &center(), 11).unwrap();
        let b = synth_map("m", 50.0, 3.0, 250.0, 64, &center(), 11).unwrap();
        assert!(a
            .values
            .iter()
            .zip(&b.values)
            .all(|(x, y)| x.to_bits() == y.to_bits()));
        let c = synth_map("m", 50.0, 3.0, 250.0, 64, &center(), 12).unwrap();
        assert_ne!(a.values, c.values);
    }

    #[test]
    fn rejects_bad_slope() {
        assert!(synth_map("m", 50.0, 1.5, 250.0, 64, &center(), 0).is_err());
        assert!(synth_map("m", -1.0, 3.0, 250.0, 64, &center(), 0).is_err());
    }

    #[test]
    fn window_peak_to_peak_in_anomaly_scale() {
        // 5 km windows on a 500 m grid.
        let g = synth_map("m", 50.0, 3.0, 500.0, 256, &center(), 3).unwrap();
        let n = g.n_cols;
        let w = 10;
        let mut p2p = Vec::new();
        for bi in (0..n - w).step_by(w) {
            for bj in (0..n - w).step_by(w) {
                let mut lo = f64::INFINITY;
                let mut hi = f64::NEG_INFINITY;
                for i in bi..bi + w {
                    for j in bj..bj + w {
                        let v = g.values[i * n + j];
                        lo = lo.min(v);
                        hi = hi.max(v);
                    }
                }
                p2p.push(hi - lo);
            }
        }
        p2p.sort_by(f64::total_cmp);
        let median = p2p[p2p.len() / 2];
        assert!(
            (10.0..=300.0).contains(&median),
            "median window peak-to-peak {median} nT"
        );
        assert!(p2p[p2p.len() * 9 / 10] <= 300.0);
    }
}
