//! Wavenumber-domain altitude continuation and smoothing of anomaly grids.
//!
//! Grids are treated as cell averages. The upward operator is the harmonic
//! (Poisson) continuation of that piecewise-constant surface: each cell's weight
//! is the solid angle it subtends from the continued point, divided by 2π.
//! That kernel is non-negative and its transfer function approximates
//! `exp(-|k| dz)`, so the maximum principle holds exactly. Downward continuation
//! applies the reciprocal of the same transfer function below a cutoff and rolls
//! it off with a cosine taper above.
//!
//! Before transforming, the mean is removed and the grid is extended by mirror
//! reflection with a cosine taper over 10% of each dimension; the data region
//! itself is never tapered.

use std::f64::consts::{PI, TAU};

use rustfft::num_complex::Complex64;

use super::AnomalyGrid;
use crate::spectral::{fast_len, fft2, signed_index, wavenumber};

/// Fraction of each dimension used for the tapered mirror extension.
pub const TAPER_FRACTION: f64 = 0.1;

/// Width of the cosine roll-off above the downward cutoff, relative to the cutoff.
const ROLLOFF_WIDTH: f64 = 0.25;

/// Largest amplification downward continuation may apply; the effective cutoff
/// is lowered for large `dz` so this bound holds.
pub const MAX_DOWNWARD_GAIN: f64 = 1e6;

/// Operator applied in the wavenumber domain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Continuation {
    /// Upward by `dz >= 0` metres.
    Up(f64),
    /// Downward by `dz >= 0` metres, gain limited to wavenumbers below
    /// `cutoff` × Nyquist.
    Down { dz: f64, cutoff: f64 },
}

pub fn upward_continue(grid: &AnomalyGrid, dz: f64) -> AnomalyGrid {
    assert!(
        dz >= 0.0 && dz.is_finite(),
        "upward continuation needs dz >= 0"
    );
    if dz == 0.0 {
        return grid.clone();
    }
    transform(grid, Some(Continuation::Up(dz)), 0.0)
}

pub fn downward_continue(grid: &AnomalyGrid, dz: f64, cutoff: f64) -> AnomalyGrid {
    assert!(
        dz >= 0.0 && dz.is_finite(),
        "downward continuation needs dz >= 0"
    );
    assert!(cutoff > 0.0 && cutoff <= 1.0, "cutoff must lie in (0, 1]");
    if dz == 0.0 {
        return grid.clone();
    }
    transform(grid, Some(Continuation::Down { dz, cutoff }), 0.0)
}

/// Gaussian low-pass with standard deviation `sigma` metres.
pub fn gaussian_smooth(grid: &AnomalyGrid, sigma: f64) -> AnomalyGrid {
    if sigma <= 0.0 {
        return grid.clone();
    }
    transform(grid, None, sigma)
}

/// Continues to `target_altitude` (up or down) and optionally smooths, in one pass.
pub fn continue_to(
    grid: &AnomalyGrid,
    target_altitude: f64,
    cutoff: f64,
    smooth_sigma: f64,
) -> AnomalyGrid {
    let dz = target_altitude - grid.reference_altitude;
    let op = if dz > 0.0 {
        Some(Continuation::Up(dz))
    } else if dz < 0.0 {
        Some(Continuation::Down { dz: -dz, cutoff })
    } else {
        None
    };
    if op.is_none() && smooth_sigma <= 0.0 {
        return grid.clone();
    }
    transform(grid, op, smooth_sigma)
}

struct Padded {
    data: Vec<Complex64>,
    py: usize,
    px: usize,
    wy: usize,
    wx: usize,
    mean: f64,
}

fn taper_width(n: usize) -> usize {
    ((TAPER_FRACTION * n as f64).ceil() as usize).max(1)
}

fn pad(grid: &AnomalyGrid) -> Padded {
    let (ny, nx) = (grid.n_rows, grid.n_cols);
    let (wy, wx) = (taper_width(ny), taper_width(nx));
    let py = fast_len(ny + 2 * wy);
    let px = fast_len(nx + 2 * wx);
    let mean = grid.mean();

    // Source index and weight for each padded coordinate along one axis.
    let axis = |n: usize, w: usize, p: usize| -> Vec<Option<(usize, f64)>> {
        (0..p)
            .map(|k| {
                let k = k as i64 - w as i64;
                if (0..n as i64).contains(&k) {
                    return Some((k as usize, 1.0));
                }
                let d = if k < 0 { -k } else { k - (n as i64 - 1) };
                if d > w as i64 {
                    return None;
                }
                let src = if k < 0 { d } else { n as i64 - 1 - d };
                let src = src.clamp(0, n as i64 - 1) as usize;
                let weight = 0.5 * (1.0 + (PI * d as f64 / (w as f64 + 1.0)).cos());
                Some((src, weight))
            })
            .collect()
    };
    let rows = axis(ny, wy, py);
    let cols = axis(nx, wx, px);

    let mut data = vec![Complex64::new(0.0, 0.0); py * px];
    for (i, r) in rows.iter().enumerate() {
        let Some((si, wi)) = r else { continue };
        for (j, c) in cols.iter().enumerate() {
            let Some((sj, wj)) = c else { continue };
            data[i * px + j] = Complex64::new((grid.value(*si, *sj) - mean) * wi * wj, 0.0);
        }
    }
    Padded {
        data,
        py,
        px,
        wy,
        wx,
        mean,
    }
}

/// Transfer function of the cell-integrated Poisson kernel for height `dz` on a
/// `py × px` periodic lattice with spacing `(dy, dx)`.
fn poisson_transfer(py: usize, px: usize, dy: f64, dx: f64, dz: f64) -> Vec<f64> {
    let corner = |x: f64, y: f64| (x * y / (dz * (x * x + y * y + dz * dz).sqrt())).atan();
    let mut kernel = vec![Complex64::new(0.0, 0.0); py * px];
    for i in 0..py {
        let y = signed_index(i, py) as f64 * dy;
        let (y1, y2) = (y - 0.5 * dy, y + 0.5 * dy);
        for j in 0..px {
            let x = signed_index(j, px) as f64 * dx;
            let (x1, x2) = (x - 0.5 * dx, x + 0.5 * dx);
            let w = (corner(x2, y2) - corner(x1, y2) - corner(x2, y1) + corner(x1, y1)) / TAU;
            kernel[i * px + j] = Complex64::new(w, 0.0);
        }
    }
    fft2(&mut kernel, py, px, false);
    let mut gain: Vec<f64> = kernel.iter().map(|c| c.re).collect();
    // Mass outside the periodic window is lost; the DC gain is exactly one.
    gain[0] = 1.0;
    gain
}

fn transform(grid: &AnomalyGrid, op: Option<Continuation>, smooth_sigma: f64) -> AnomalyGrid {
    let (dy, dx) = grid.cell_size_m();
    let mut padded = pad(grid);
    let (py, px) = (padded.py, padded.px);
    fft2(&mut padded.data, py, px, false);

    let k_nyquist = (PI / dy).min(PI / dx);
    let mut gain = match op {
        None => vec![1.0; py * px],
        Some(Continuation::Up(dz)) => poisson_transfer(py, px, dy, dx, dz),
        Some(Continuation::Down { dz, cutoff }) => {
            let up = poisson_transfer(py, px, dy, dx, dz);
            let kc = (cutoff * k_nyquist).min(MAX_DOWNWARD_GAIN.ln() / dz / (1.0 + ROLLOFF_WIDTH));
            let k_end = kc * (1.0 + ROLLOFF_WIDTH);
            let mut g = vec![0.0; py * px];
            for i in 0..py {
                let ky = wavenumber(i, py, dy);
                for j in 0..px {
                    let kx = wavenumber(j, px, dx);
                    let k = ky.hypot(kx);
                    let roll = if k <= kc {
                        1.0
                    } else if k >= k_end {
                        0.0
                    } else {
                        0.5 * (1.0 + (PI * (k - kc) / (k_end - kc)).cos())
                    };
                    let idx = i * px + j;
                    g[idx] = if roll == 0.0 {
                        0.0
                    } else {
                        (roll / up[idx]).clamp(0.0, MAX_DOWNWARD_GAIN)
                    };
                }
            }
            g[0] = 1.0;
            g
        }
    };
    if smooth_sigma > 0.0 {
        for i in 0..py {
            let ky = wavenumber(i, py, dy);
            for j in 0..px {
                let kx = wavenumber(j, px, dx);
                gain[i * px + j] *=
                    (-0.5 * (kx * kx + ky * ky) * smooth_sigma * smooth_sigma).exp();
            }
        }
    }
    for (v, g) in padded.data.iter_mut().zip(&gain) {
        *v *= *g;
    }
    fft2(&mut padded.data, py, px, true);

    let mut out = grid.clone();
    for i in 0..grid.n_rows {
        for j in 0..grid.n_cols {
            out.values[i * grid.n_cols + j] =
                padded.data[(i + padded.wy) * px + j + padded.wx].re + padded.mean;
        }
    }
    if let Some(op) = op {
        out.reference_altitude += match op {
            Continuation::Up(dz) => dz,
            Continuation::Down { dz, .. } => -dz,
        };
    }
    out.low_confidence_border = (padded.wy, padded.wx);
    out
}
