use serde::{Deserialize, Serialize};

use super::{FieldVector, GeoPosition, GeomagError};
use crate::EARTH_RADIUS;

/// Highest degree accepted by the synthesis routines.
pub const MAX_SUPPORTED_DEGREE: usize = 120;

/// Validity window of a model after its epoch (years).
const VALIDITY_YEARS: f64 = 10.0;

/// Geomagnetic potential model with Schmidt semi-normalized Gauss coefficients
/// and linear secular variation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SphericalHarmonicModel {
    pub epoch: f64,
    pub max_degree: usize,
    g: Vec<f64>,
    h: Vec<f64>,
    g_dot: Vec<f64>,
    h_dot: Vec<f64>,
}

#[inline]
fn index(n: usize, m: usize) -> usize {
    n * (n + 1) / 2 + m
}

impl SphericalHarmonicModel {
    /// All-zero model of the given degree.
    pub fn new(epoch: f64, max_degree: usize) -> Result<Self, GeomagError> {
        if max_degree == 0 {
            return Err(GeomagError::ModelInvalid(
                "max_degree must be at least 1".into(),
            ));
        }
        if max_degree > MAX_SUPPORTED_DEGREE {
            return Err(GeomagError::ModelInvalid(format!(
                "degree {max_degree} exceeds supported maximum {MAX_SUPPORTED_DEGREE}"
            )));
        }
        if !epoch.is_finite() {
            return Err(GeomagError::ModelInvalid("non-finite epoch".into()));
        }
        let len = index(max_degree, max_degree) + 1;
        Ok(Self {
            epoch,
            max_degree,
            g: vec![0.0; len],
            h: vec![0.0; len],
            g_dot: vec![0.0; len],
            h_dot: vec![0.0; len],
        })
    }

    /// Model with only the axial dipole term `g(1,0)`.
    pub fn axial_dipole(epoch: f64, g10: f64) -> Self {
        let mut model = Self::new(epoch, 1).expect("degree 1 is valid");
        model
            .set(1, 0, g10, 0.0, 0.0, 0.0)
            .expect("(1,0) is in range");
        model
    }

    /// The synthetic degree-13 model shipped with the crate. It has an Earth-like
    /// dipole and spectrum but is not a published reference field.
    pub fn builtin_synthetic() -> Self {
        super::load_harmonic_coefficients(include_str!("../../data/synthetic_deg13.shm"))
            .expect("bundled model parses")
    }

    pub fn set(
        &mut self,
        n: usize,
        m: usize,
        g: f64,
        h: f64,
        g_dot: f64,
        h_dot: f64,
    ) -> Result<(), GeomagError> {
        if n == 0 || m > n || n > self.max_degree {
            return Err(GeomagError::ModelInvalid(format!(
                "(n={n}, m={m}) outside degree {}",
                self.max_degree
            )));
        }
        if m == 0 && (h != 0.0 || h_dot != 0.0) {
            return Err(GeomagError::ModelInvalid(format!("h({n},0) must be zero")));
        }
        let i = index(n, m);
        self.g[i] = g;
        self.h[i] = h;
        self.g_dot[i] = g_dot;
        self.h_dot[i] = h_dot;
        Ok(())
    }

    /// `(g, h, g_dot, h_dot)` for degree `n`, order `m`.
    pub fn get(&self, n: usize, m: usize) -> Option<(f64, f64, f64, f64)> {
        if n == 0 || m > n || n > self.max_degree {
            return None;
        }
        let i = index(n, m);
        Some((self.g[i], self.h[i], self.g_dot[i], self.h_dot[i]))
    }

    pub fn validate(&self) -> Result<(), GeomagError> {
        if self.max_degree == 0 || self.max_degree > MAX_SUPPORTED_DEGREE {
            return Err(GeomagError::ModelInvalid(format!(
                "max_degree {} outside [1, {MAX_SUPPORTED_DEGREE}]",
                self.max_degree
            )));
        }
        let len = index(self.max_degree, self.max_degree) + 1;
        if [&self.g, &self.h, &self.g_dot, &self.h_dot]
            .iter()
            .any(|v| v.len() != len)
        {
            return Err(GeomagError::ModelInvalid(
                "coefficient table size mismatch".into(),
            ));
        }
        for n in 1..=self.max_degree {
            for m in 0..=n {
                let i = index(n, m);
                let vals = [self.g[i], self.h[i], self.g_dot[i], self.h_dot[i]];
                if vals.iter().any(|v| !v.is_finite()) {
                    return Err(GeomagError::ModelInvalid(format!(
                        "non-finite coefficient at (n={n}, m={m})"
                    )));
                }
                if m == 0 && (self.h[i] != 0.0 || self.h_dot[i] != 0.0) {
                    return Err(GeomagError::ModelInvalid(format!("h({n},0) must be zero")));
                }
            }
        }
        Ok(())
    }

    /// Copy of the model with coefficients advanced linearly to `epoch`; the
    /// secular-variation terms are kept.
    pub fn advanced_to(&self, epoch: f64) -> Self {
        let dt = epoch - self.epoch;
        let mut out = self.clone();
        out.epoch = epoch;
        for i in 0..self.g.len() {
            out.g[i] = self.g[i] + self.g_dot[i] * dt;
            out.h[i] = self.h[i] + self.h_dot[i] * dt;
        }
        out
    }

    /// Evaluates `B = -∇V` in local north/east/down at `pos` and decimal year `epoch`.
    ///
    /// Latitude is treated as geocentric on a sphere of radius [`EARTH_RADIUS`].
    pub fn synthesize(&self, pos: &GeoPosition, epoch: f64) -> Result<FieldVector, GeomagError> {
        self.validate()?;
        let end = self.epoch + VALIDITY_YEARS;
        if !(epoch >= self.epoch && epoch <= end) {
            return Err(GeomagError::EpochOutOfRange {
                epoch,
                start: self.epoch,
                end,
            });
        }
        if !(pos.latitude.is_finite() && pos.longitude.is_finite() && pos.altitude > -10_000.0) {
            return Err(GeomagError::InvalidPosition(format!("{pos:?}")));
        }
        Ok(self.synthesize_unchecked(pos, epoch - self.epoch))
    }

    fn synthesize_unchecked(&self, pos: &GeoPosition, dt: f64) -> FieldVector {
        let nmax = self.max_degree;
        let r = EARTH_RADIUS + pos.altitude;
        // Colatitude, nudged off the poles; the limit is continuous there.
        let theta =
            (std::f64::consts::FRAC_PI_2 - pos.latitude).clamp(1e-12, std::f64::consts::PI - 1e-12);
        let (sin_t, cos_t) = theta.sin_cos();
        let phi = pos.longitude;

        let len = index(nmax, nmax) + 1;
        let mut p = vec![0.0; len];
        let mut dp = vec![0.0; len];
        p[0] = 1.0;
        for n in 1..=nmax {
            // Sectoral term.
            let (pp, dpp) = (p[index(n - 1, n - 1)], dp[index(n - 1, n - 1)]);
            let k = if n == 1 {
                1.0
            } else {
                ((2 * n - 1) as f64 / (2 * n) as f64).sqrt()
            };
            p[index(n, n)] = k * sin_t * pp;
            dp[index(n, n)] = k * (sin_t * dpp + cos_t * pp);
            for m in 0..n {
                let nf = n as f64;
                let mf = m as f64;
                let a = (2.0 * nf - 1.0) / (nf * nf - mf * mf).sqrt();
                let (p1, dp1) = (p[index(n - 1, m)], dp[index(n - 1, m)]);
                let mut val = a * cos_t * p1;
                let mut dval = a * (cos_t * dp1 - sin_t * p1);
                if n >= 2 && m <= n - 2 {
                    let b = (((nf - 1.0).powi(2) - mf * mf) / (nf * nf - mf * mf)).sqrt();
                    val -= b * p[index(n - 2, m)];
                    dval -= b * dp[index(n - 2, m)];
                }
                p[index(n, m)] = val;
                dp[index(n, m)] = dval;
            }
        }

        let ratio = EARTH_RADIUS / r;
        let mut b_r = 0.0;
        let mut b_theta = 0.0;
        let mut b_phi = 0.0;
        let mut rpow = ratio * ratio; // (a/r)^(n+2) for n = 0
        for n in 1..=nmax {
            rpow *= ratio;
            let mut sum_r = 0.0;
            let mut sum_t = 0.0;
            let mut sum_p = 0.0;
            for m in 0..=n {
                let i = index(n, m);
                let g = self.g[i] + self.g_dot[i] * dt;
                let h = self.h[i] + self.h_dot[i] * dt;
                let (sm, cm) = (m as f64 * phi).sin_cos();
                let gc = g * cm + h * sm;
                sum_r += gc * p[i];
                sum_t += gc * dp[i];
                sum_p += m as f64 * (g * sm - h * cm) * p[i];
            }
            b_r += (n + 1) as f64 * rpow * sum_r;
            b_theta -= rpow * sum_t;
            b_phi += rpow * sum_p;
        }
        b_phi /= sin_t;
        FieldVector::new(-b_theta, b_phi, -b_r)
    }
}
