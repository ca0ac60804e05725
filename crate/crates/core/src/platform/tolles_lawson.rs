use nalgebra::{DMatrix, DVector, Matrix3, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::PlatformError;

pub const N_TL: usize = 18;
pub const TL_SCHEMA_VERSION: u32 = 1;

/// Below this magnitude (nT) the field direction is considered undefined.
pub const MIN_FIELD_FOR_DIRECTION: f64 = 1_000.0;

pub type Regressors = SVector<f64, N_TL>;

/// Platform interference coefficients.
///
/// Canonical order: permanent x, y, z (nT); induced xx, xy, xz, yy, yz, zz
/// (dimensionless, symmetric); eddy row-major 3×3 (s).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "TlFile", into = "TlFile")]
pub struct TlCoefficients {
    pub permanent: [f64; 3],
    pub induced: [f64; 6],
    pub eddy: [f64; 9],
}

#[derive(Serialize, Deserialize)]
struct TlFile {
    schema_version: u32,
    coefficients: Vec<f64>,
}

impl From<TlCoefficients> for TlFile {
    fn from(c: TlCoefficients) -> Self {
        Self {
            schema_version: TL_SCHEMA_VERSION,
            coefficients: c.to_vector().iter().copied().collect(),
        }
    }
}

impl TryFrom<TlFile> for TlCoefficients {
    type Error = String;

    fn try_from(f: TlFile) -> Result<Self, String> {
        if f.schema_version != TL_SCHEMA_VERSION {
            return Err(format!(
                "schema version {} not supported (expected {TL_SCHEMA_VERSION})",
                f.schema_version
            ));
        }
        TlCoefficients::from_slice(&f.coefficients).map_err(|e| e.to_string())
    }
}

impl TlCoefficients {
    pub fn from_slice(v: &[f64]) -> Result<Self, PlatformError> {
        if v.len() != N_TL {
            return Err(PlatformError::Invalid(format!(
                "expected {N_TL} coefficients, got {}",
                v.len()
            )));
        }
        if v.iter().any(|x| !x.is_finite()) {
            return Err(PlatformError::Invalid("non-finite coefficient".into()));
        }
        let mut c = Self::default();
        c.permanent.copy_from_slice(&v[0..3]);
        c.induced.copy_from_slice(&v[3..9]);
        c.eddy.copy_from_slice(&v[9..18]);
        Ok(c)
    }

    pub fn from_vector(v: &Regressors) -> Result<Self, PlatformError> {
        Self::from_slice(v.as_slice())
    }

    pub fn to_vector(&self) -> Regressors {
        let mut v = Regressors::zeros();
        v.as_mut_slice()[0..3].copy_from_slice(&self.permanent);
        v.as_mut_slice()[3..9].copy_from_slice(&self.induced);
        v.as_mut_slice()[9..18].copy_from_slice(&self.eddy);
        v
    }

    pub fn permanent_vector(&self) -> Vector3<f64> {
        Vector3::from(self.permanent)
    }

    pub fn induced_matrix(&self) -> Matrix3<f64> {
        let [xx, xy, xz, yy, yz, zz] = self.induced;
        Matrix3::new(xx, xy, xz, xy, yy, yz, xz, yz, zz)
    }

    pub fn eddy_matrix(&self) -> Matrix3<f64> {
        Matrix3::from_row_slice(&self.eddy)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("coefficients serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, PlatformError> {
        Ok(serde_json::from_str(text)?)
    }
}

/// Interference vector (body frame, nT) for field `b` and field rate `b_dot`.
pub fn perturbation_vector(
    c: &TlCoefficients,
    b: &Vector3<f64>,
    b_dot: &Vector3<f64>,
) -> Vector3<f64> {
    c.permanent_vector() + c.induced_matrix() * b + c.eddy_matrix() * b_dot
}

/// Regressors whose dot product with the coefficient vector is the projection
/// of the interference vector onto the field direction. Off-diagonal induced
/// regressors carry both symmetric terms.
pub fn tl_regressors(b: &Vector3<f64>, b_dot: &Vector3<f64>) -> Result<Regressors, PlatformError> {
    let mag = b.norm();
    if !(mag > MIN_FIELD_FOR_DIRECTION) {
        return Err(PlatformError::DegenerateField(mag));
    }
    let u = b / mag;
    let mut r = Regressors::zeros();
    r[0] = u.x;
    r[1] = u.y;
    r[2] = u.z;
    let mut k = 3;
    for i in 0..3 {
        for j in i..3 {
            r[k] = if i == j {
                u[i] * b[j]
            } else {
                u[i] * b[j] + u[j] * b[i]
            };
            k += 1;
        }
    }
    for i in 0..3 {
        for j in 0..3 {
            r[9 + 3 * i + j] = u[i] * b_dot[j];
        }
    }
    Ok(r)
}

pub fn scalar_perturbation(c: &TlCoefficients, regressors: &Regressors) -> f64 {
    c.to_vector().dot(regressors)
}

/// `|B + d| − |B|` without the first-order projection.
pub fn exact_contaminated_magnitude(
    c: &TlCoefficients,
    b: &Vector3<f64>,
    b_dot: &Vector3<f64>,
) -> f64 {
    (b + perturbation_vector(c, b, b_dot)).norm() - b.norm()
}

#[derive(Debug, Clone, PartialEq)]
pub struct TlFit {
    pub coefficients: TlCoefficients,
    /// RMS of the fit residual over the samples (nT).
    pub residual_rms: f64,
}

/// Ridge least squares on `(regressors, residual)` samples.
///
/// Columns are normalised to unit RMS before solving; `lambda` is the ridge
/// weight relative to that normalisation. With `lambda = 0` a rank-deficient
/// design is an error.
pub fn fit_tl_batch(samples: &[(Regressors, f64)], lambda: f64) -> Result<TlFit, PlatformError> {
    if samples.len() < N_TL {
        return Err(PlatformError::TooFewSamples {
            got: samples.len(),
            min: N_TL,
        });
    }
    if !(lambda >= 0.0) {
        return Err(PlatformError::Invalid(
            "ridge parameter must be >= 0".into(),
        ));
    }
    let n = samples.len() as f64;
    let mut gram = DMatrix::<f64>::zeros(N_TL, N_TL);
    let mut rhs = DVector::<f64>::zeros(N_TL);
    for (r, y) in samples {
        gram.ger(1.0, r, r, 1.0);
        rhs.axpy(*y, r, 1.0);
    }
    let scale: Vec<f64> = (0..N_TL)
        .map(|i| {
            let s = (gram[(i, i)] / n).sqrt();
            if s > 0.0 {
                1.0 / s
            } else {
                1.0
            }
        })
        .collect();
    for i in 0..N_TL {
        for j in 0..N_TL {
            gram[(i, j)] *= scale[i] * scale[j] / n;
        }
        rhs[i] *= scale[i] / n;
    }
    if lambda == 0.0 {
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.max();
        let min = eig.eigenvalues.min();
        if !(min > 1e-10 * max) {
            return Err(PlatformError::Singular);
        }
    }
    for i in 0..N_TL {
        gram[(i, i)] += lambda;
    }
    let chol = gram.cholesky().ok_or(PlatformError::Singular)?;
    let solved = chol.solve(&rhs);
    let coeffs = Regressors::from_iterator((0..N_TL).map(|i| solved[i] * scale[i]));
    let residual_rms = (samples
        .iter()
        .map(|(r, y)| (y - coeffs.dot(r)).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(TlFit {
        coefficients: TlCoefficients::from_vector(&coeffs)?,
        residual_rms,
    })
}
