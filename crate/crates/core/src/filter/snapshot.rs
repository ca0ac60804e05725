use std::io::Write;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::{FilterError, InnovationRecord};
use crate::platform::N_TL;

pub const SNAPSHOT_SCHEMA_VERSION: u32 = 1;

/// Learned platform coefficients carried between missions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSnapshot {
    pub schema_version: u32,
    pub vehicle_id: String,
    /// Mission time (s) at which the snapshot was taken.
    pub timestamp: f64,
    pub coefficients: Vec<f64>,
    pub covariance: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StartMode {
    Cold,
    Warm(CoefficientSnapshot),
}

impl CoefficientSnapshot {
    pub fn new(
        vehicle_id: &str,
        timestamp: f64,
        coefficients: Vec<f64>,
        covariance: Vec<Vec<f64>>,
    ) -> Self {
        Self {
            schema_version: SNAPSHOT_SCHEMA_VERSION,
            vehicle_id: vehicle_id.to_string(),
            timestamp,
            coefficients,
            covariance,
        }
    }

    /// Validates schema, identity, shape and positive definiteness.
    pub fn check(&self, vehicle_id: &str) -> Result<(), FilterError> {
        let reject = |m: String| Err(FilterError::WarmStartRejected(m));
        if self.schema_version != SNAPSHOT_SCHEMA_VERSION {
            return reject(format!(
                "schema version {} (expected {SNAPSHOT_SCHEMA_VERSION})",
                self.schema_version
            ));
        }
        if self.vehicle_id != vehicle_id {
            return reject(format!(
                "snapshot is for vehicle '{}', not '{vehicle_id}'",
                self.vehicle_id
            ));
        }
        if self.coefficients.len() != N_TL
            || self.covariance.len() != N_TL
            || self.covariance.iter().any(|r| r.len() != N_TL)
        {
            return reject(format!(
                "expected {N_TL} coefficients and a {N_TL}x{N_TL} covariance"
            ));
        }
        if self
            .coefficients
            .iter()
            .chain(self.covariance.iter().flatten())
            .any(|v| !v.is_finite())
        {
            return reject("non-finite values".into());
        }
        let m = DMatrix::from_fn(N_TL, N_TL, |i, j| self.covariance[i][j]);
        let asym = (&m - m.transpose()).amax();
        if asym > 1e-9 * m.amax().max(f64::MIN_POSITIVE) {
            return reject(format!("covariance asymmetric by {asym:e}"));
        }
        if m.cholesky().is_none() {
            return reject("covariance is not positive definite".into());
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String, FilterError> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, FilterError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn save(&self, path: &Path) -> Result<(), FilterError> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, FilterError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

/// Writes the innovation log as `t,innovation,sigma,accepted,layer_used`.
pub fn write_innovation_csv(
    records: &[InnovationRecord],
    out: &mut impl Write,
) -> std::io::Result<()> {
    writeln!(out, "t,innovation,sigma,accepted,layer_used")?;
    for r in records {
        writeln!(
            out,
            "{},{},{},{},{}",
            r.t, r.innovation, r.sigma, r.accepted, r.layer_used
        )?;
    }
    Ok(())
}
