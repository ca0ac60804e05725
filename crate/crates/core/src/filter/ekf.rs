use nalgebra::{SMatrix, SVector, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use super::acquire::{search_offset, AcquisitionSample};
use super::{
    idx, CoefficientSnapshot, FilterConfig, FilterError, StartMode, TemporalCorrection, N_STATES,
    POSITION_ENVELOPE_M,
};
use crate::geomag::GeoPosition;
use crate::maps::{MapError, MapQuery, MapStack};
use crate::platform::{tl_regressors, Regressors, TlCoefficients, N_TL};

pub type StateVector = SVector<f64, N_STATES>;
pub type Covariance = SMatrix<f64, N_STATES, N_STATES>;

/// Floor on the measurement variance (nT²).
const MIN_MEASUREMENT_VARIANCE: f64 = 1e-6;

/// Layer label of records returned while acquisition is buffering.
pub const ACQUIRING: &str = "acquiring";

/// One magnetometer epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MagObservation {
    pub t: f64,
    /// Scalar magnetometer reading (nT).
    pub scalar: f64,
    /// Vector magnetometer reading in body axes (nT).
    pub vector_body: Vector3<f64>,
    /// Body-frame field rate from the vector magnetometer (nT/s).
    pub vector_rate_body: Vector3<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InnovationRecord {
    pub t: f64,
    pub innovation: f64,
    /// Innovation standard deviation (nT).
    pub sigma: f64,
    pub accepted: bool,
    pub layer_used: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NavSolution {
    pub t: f64,
    pub position: GeoPosition,
    pub sigma_north: f64,
    pub sigma_east: f64,
    pub gate_open: bool,
}

impl NavSolution {
    /// Horizontal 1σ radius (m).
    pub fn sigma_horizontal(&self) -> f64 {
        self.sigma_north.hypot(self.sigma_east)
    }
}

#[derive(Debug, Clone)]
pub struct FilterState {
    pub mean: StateVector,
    pub covariance: Covariance,
    config: FilterConfig,
    /// Initial position the filter was started from.
    pub origin: GeoPosition,
    pub t: f64,
    confidence_gate_open: bool,
    gate_open_time: Option<f64>,
    /// Prior standard deviations of the coefficient and bias states.
    prior_platform_sigma: SVector<f64, 19>,
    consecutive_rejections: usize,
    pub innovation_log: Vec<InnovationRecord>,
    pub warnings: Vec<String>,
    pub coverage_gaps: usize,
    acquisition: Option<Box<Acquisition>>,
}

#[derive(Debug, Clone)]
struct Buffered {
    dt: f64,
    obs: MagObservation,
    ins_position: GeoPosition,
    ins_heading: f64,
}

/// Buffered start of the run while the position is acquired.
#[derive(Debug, Clone)]
struct Acquisition {
    mean: StateVector,
    covariance: Covariance,
    t: f64,
    sigma0: f64,
    pending_dt: f64,
    buffer: Vec<Buffered>,
}

fn prior_sigmas(config: &FilterConfig, position_sigma: f64) -> StateVector {
    let mut s = StateVector::zeros();
    s[idx::POS] = position_sigma;
    s[idx::POS + 1] = position_sigma;
    s[idx::VEL] = config.vel_sigma0;
    s[idx::VEL + 1] = config.vel_sigma0;
    s[idx::PSI] = config.heading_sigma0;
    for k in 0..N_TL {
        s[idx::COEF + k] = match k {
            0..=2 => config.permanent_sigma0,
            3..=8 => config.induced_sigma0,
            _ => config.eddy_sigma0,
        };
    }
    s[idx::BIAS] = config.bias_sigma0;
    s[idx::WIND] = config.wind_sigma0;
    s[idx::WIND + 1] = config.wind_sigma0;
    s
}

fn process_noise(config: &FilterConfig) -> StateVector {
    let mut q = StateVector::zeros();
    q[idx::POS] = config.q_pos;
    q[idx::POS + 1] = config.q_pos;
    q[idx::VEL] = config.q_vel;
    q[idx::VEL + 1] = config.q_vel;
    q[idx::PSI] = config.q_heading;
    for k in 0..N_TL {
        q[idx::COEF + k] = match k {
            0..=2 => config.q_permanent,
            3..=8 => config.q_induced,
            _ => config.q_eddy,
        };
    }
    q[idx::BIAS] = config.q_bias;
    q[idx::WIND] = config.q_wind;
    q[idx::WIND + 1] = config.q_wind;
    q
}

impl FilterState {
    /// Starts the filter. A warm start installs the snapshot's coefficient
    /// block verbatim and opens the confidence gate immediately.
    pub fn init(
        config: FilterConfig,
        initial_position: GeoPosition,
        initial_position_sigma: f64,
        mode: StartMode,
    ) -> Result<Self, FilterError> {
        config.validate()?;
        if !(initial_position_sigma > 0.0 && initial_position_sigma.is_finite()) {
            return Err(FilterError::Config(
                "initial position sigma must be > 0".into(),
            ));
        }
        let mut warnings = Vec::new();
        if initial_position_sigma > POSITION_ENVELOPE_M {
            let msg = format!(
                "initial position sigma {initial_position_sigma:.0} m exceeds the supported {POSITION_ENVELOPE_M:.0} m envelope"
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        let sigmas = prior_sigmas(&config, initial_position_sigma);
        let mut state = Self {
            mean: StateVector::zeros(),
            covariance: Covariance::from_diagonal(&sigmas.component_mul(&sigmas)),
            prior_platform_sigma: sigmas.fixed_rows::<19>(idx::COEF).into_owned(),
            config,
            origin: initial_position,
            t: 0.0,
            confidence_gate_open: false,
            gate_open_time: None,
            consecutive_rejections: 0,
            innovation_log: Vec::new(),
            warnings,
            coverage_gaps: 0,
            acquisition: None,
        };
        if let StartMode::Warm(snapshot) = mode {
            match snapshot.check(&state.config.vehicle_id) {
                Ok(()) => state.install(&snapshot),
                Err(e) if state.config.warm_fallback_to_cold => {
                    let msg = format!("{e}; continuing with a cold start");
                    log::warn!("{msg}");
                    state.warnings.push(msg);
                }
                Err(e) => return Err(e),
            }
        }
        if state.config.acquisition_window > 0.0
            && initial_position_sigma > state.config.acquisition_threshold
        {
            state.acquisition = Some(Box::new(Acquisition {
                mean: state.mean,
                covariance: state.covariance,
                t: state.t,
                sigma0: initial_position_sigma,
                pending_dt: 0.0,
                buffer: Vec::new(),
            }));
        }
        Ok(state)
    }

    /// Whether measurements are still being buffered for acquisition.
    pub fn acquiring(&self) -> bool {
        self.acquisition.is_some()
    }

    fn install(&mut self, snapshot: &CoefficientSnapshot) {
        for i in 0..N_TL {
            self.mean[idx::COEF + i] = snapshot.coefficients[i];
            for j in 0..N_TL {
                self.covariance[(idx::COEF + i, idx::COEF + j)] = snapshot.covariance[i][j];
            }
        }
        self.confidence_gate_open = true;
        self.gate_open_time = Some(self.t);
    }

    pub fn config(&self) -> &FilterConfig {
        &self.config
    }

    pub fn confidence_gate_open(&self) -> bool {
        self.confidence_gate_open
    }

    pub fn gate_open_time(&self) -> Option<f64> {
        self.gate_open_time
    }

    pub fn coefficients(&self) -> TlCoefficients {
        let v = Regressors::from_iterator((0..N_TL).map(|k| self.mean[idx::COEF + k]));
        TlCoefficients::from_vector(&v).unwrap_or_default()
    }

    pub fn bias(&self) -> f64 {
        self.mean[idx::BIAS]
    }

    pub fn position_error(&self) -> Vector2<f64> {
        Vector2::new(self.mean[idx::POS], self.mean[idx::POS + 1])
    }

    /// Predicted platform perturbation plus bias for the given regressors (nT).
    pub fn predicted_perturbation(&self, r: &Regressors) -> f64 {
        let mut s = self.mean[idx::BIAS];
        for k in 0..N_TL {
            s += r[k] * self.mean[idx::COEF + k];
        }
        s
    }

    fn ensure_finite(&self, what: &str) -> Result<(), FilterError> {
        if self
            .mean
            .iter()
            .chain(self.covariance.iter())
            .all(|v| v.is_finite())
        {
            Ok(())
        } else {
            Err(FilterError::Diverged {
                t: self.t,
                reason: format!("non-finite state after {what}"),
            })
        }
    }

    /// Propagates by `dt` seconds: δpos integrates δvel; all other states are
    /// random walks.
    pub fn predict(&mut self, dt: f64) -> Result<(), FilterError> {
        if !(dt > 0.0 && dt <= 1.0) {
            return Err(FilterError::Config(format!(
                "predict step {dt} s outside (0, 1]"
            )));
        }
        if let Some(a) = self.acquisition.as_mut() {
            a.pending_dt += dt;
        }
        for k in 0..2 {
            self.mean[idx::POS + k] += self.mean[idx::VEL + k] * dt;
        }
        // P ← F P Fᵀ with F = I + dt·E(pos, vel); applied as row then column operations.
        let p = &mut self.covariance;
        for k in 0..2 {
            let (r, v) = (idx::POS + k, idx::VEL + k);
            for j in 0..N_STATES {
                p[(r, j)] += dt * p[(v, j)];
            }
            for i in 0..N_STATES {
                p[(i, r)] += dt * p[(i, v)];
            }
        }
        let q = process_noise(&self.config);
        for i in 0..N_STATES {
            p[(i, i)] += q[i] * dt;
        }
        symmetrize(p);
        self.t += dt;
        self.ensure_finite("predict")
    }

    /// Multiplies the position variances by `factor`, scaling their
    /// cross-covariances so the matrix stays positive definite.
    fn inflate_position(&mut self, factor: f64) {
        let s = factor.sqrt();
        for k in 0..2 {
            let r = idx::POS + k;
            for j in 0..N_STATES {
                self.covariance[(r, j)] *= s;
            }
            for i in 0..N_STATES {
                self.covariance[(i, r)] *= s;
            }
        }
    }

    fn smoothing_level(&self, stack: &MapStack) -> usize {
        if !self.config.multiscale {
            return 0;
        }
        let sigma = self.covariance[(idx::POS, idx::POS)]
            .max(self.covariance[(idx::POS + 1, idx::POS + 1)])
            .sqrt();
        let levels = &stack.config().smoothing_levels;
        (0..levels.len())
            .rev()
            .find(|&k| levels[k] <= self.config.smoothing_fraction * sigma)
            .unwrap_or(0)
    }

    /// Corrected sensor position and its derivative with respect to ψ.
    fn sensor_position(
        &self,
        ins_position: &GeoPosition,
        ins_heading: f64,
    ) -> (GeoPosition, Vector2<f64>) {
        let [lx, ly] = self.config.lever_arm;
        let h = ins_heading - self.mean[idx::PSI];
        let (s, c) = h.sin_cos();
        let lever = Vector2::new(lx * c - ly * s, lx * s + ly * c);
        let d_lever_dh = Vector2::new(-lx * s - ly * c, lx * c - ly * s);
        let pos = ins_position.offset_ne(
            lever.x - self.mean[idx::POS],
            lever.y - self.mean[idx::POS + 1],
        );
        (pos, -d_lever_dh)
    }

    /// Scalar Kalman update in Joseph form. Returns false when gated out.
    fn scalar_update(&mut self, h: &StateVector, y: f64, r: f64) -> (bool, f64) {
        let ph = self.covariance * h;
        let s = h.dot(&ph) + r;
        let sigma = s.sqrt();
        if !(s > 0.0) || y * y > self.config.gate_sigma.powi(2) * s {
            return (false, sigma);
        }
        let k = ph / s;
        self.mean += k * y;
        let ikh = Covariance::identity() - k * h.transpose();
        self.covariance = ikh * self.covariance * ikh.transpose() + k * k.transpose() * r;
        symmetrize(&mut self.covariance);
        (true, sigma)
    }

    /// Map-matching update with one magnetometer epoch.
    ///
    /// `ins_position` is the navigator's position (altitude taken as known) and
    /// `ins_heading` its heading. Coverage gaps skip the update and inflate the
    /// position covariance.
    pub fn update_magnetic(
        &mut self,
        obs: &MagObservation,
        stack: &MapStack,
        ins_position: &GeoPosition,
        ins_heading: f64,
    ) -> Result<InnovationRecord, FilterError> {
        if let Some(a) = self.acquisition.as_mut() {
            let dt = std::mem::take(&mut a.pending_dt);
            a.buffer.push(Buffered {
                dt,
                obs: *obs,
                ins_position: *ins_position,
                ins_heading,
            });
            if obs.t - a.t < self.config.acquisition_window {
                return Ok(InnovationRecord {
                    t: obs.t,
                    innovation: f64::NAN,
                    sigma: f64::NAN,
                    accepted: false,
                    layer_used: ACQUIRING.into(),
                });
            }
            let a = self.acquisition.take().expect("acquisition present");
            return self.finish_acquisition(*a, stack);
        }
        let r = match tl_regressors(&obs.vector_body, &obs.vector_rate_body) {
            Ok(r) => r,
            Err(e) => {
                let msg = format!("t = {:.1} s: {e}", obs.t);
                self.warnings.push(msg);
                return Ok(self.log(obs.t, f64::NAN, f64::NAN, false, "none"));
            }
        };
        let (pos, d_pos_dpsi) = self.sensor_position(ins_position, ins_heading);
        let mut q = MapQuery::new(pos, obs.t, self.config.epoch + obs.t / (365.25 * 86_400.0));
        q.smoothing = self.smoothing_level(stack);
        q.with_gradient = true;
        q.include_temporal = self.config.temporal_correction == TemporalCorrection::PreSubtract;
        let sample = match stack.evaluate(&q) {
            Ok(s) => s,
            Err(MapError::Coverage { .. }) => {
                self.coverage_gaps += 1;
                self.inflate_position(self.config.inflation_factor);
                return Ok(self.log(obs.t, f64::NAN, f64::NAN, false, "none"));
            }
            Err(e) => return Err(FilterError::Config(e.to_string())),
        };

        let predicted = sample.value + self.predicted_perturbation(&r);
        let y = obs.scalar - predicted;
        let (gn, ge) = sample.gradient;
        let mut h = StateVector::zeros();
        h[idx::POS] = -gn;
        h[idx::POS + 1] = -ge;
        h[idx::PSI] = gn * d_pos_dpsi.x + ge * d_pos_dpsi.y;
        for k in 0..N_TL {
            h[idx::COEF + k] = r[k];
        }
        h[idx::BIAS] = 1.0;
        let var = (self.config.measurement_sigma.powi(2)
            + self.config.map_sigma.powi(2)
            + sample.smoothing_rms.powi(2))
        .max(MIN_MEASUREMENT_VARIANCE);

        let (accepted, sigma) = self.scalar_update(&h, y, var);
        if accepted {
            self.consecutive_rejections = 0;
        } else {
            self.consecutive_rejections += 1;
            if self.consecutive_rejections % self.config.inflate_after == 0 {
                self.inflate_position(self.config.inflation_factor);
            }
        }
        self.ensure_finite("magnetic update")?;
        self.update_confidence(&r);
        Ok(self.log(obs.t, y, sigma, accepted, &sample.layer))
    }

    /// Searches the buffered window for the position error, restarts from the
    /// initial state with that error installed and replays the window.
    fn finish_acquisition(
        &mut self,
        a: Acquisition,
        stack: &MapStack,
    ) -> Result<InnovationRecord, FilterError> {
        let samples: Vec<AcquisitionSample> = a
            .buffer
            .iter()
            .filter_map(|b| {
                let (position, _) = self.sensor_position(&b.ins_position, b.ins_heading);
                let epoch = self.config.epoch + b.obs.t / (365.25 * 86_400.0);
                let core = stack.core.synthesize(&position, epoch).ok()?.magnitude();
                let temporal = match self.config.temporal_correction {
                    TemporalCorrection::PreSubtract => stack.temporal.offset(b.obs.t),
                    TemporalCorrection::BiasState => 0.0,
                };
                Some(AcquisitionSample {
                    position,
                    residual: b.obs.scalar - core - temporal,
                })
            })
            .collect();
        let spacing = stack
            .layers()
            .iter()
            .map(|g| {
                let (dn, de) = g.cell_size_m();
                dn.min(de)
            })
            .fold(f64::INFINITY, f64::min)
            * 0.5;
        let clip = self.config.gate_sigma
            * self
                .config
                .measurement_sigma
                .hypot(self.config.map_sigma)
                .max(1.0);
        let found = search_offset(&samples, stack, 3.0 * a.sigma0, spacing, clip);

        self.mean = a.mean;
        self.covariance = a.covariance;
        self.t = a.t;
        match found {
            Some(res) => {
                log::info!(
                    "acquired position error ({:.0}, {:.0}) m, cost {:.1} vs median {:.1} nT²",
                    res.offset.x,
                    res.offset.y,
                    res.cost,
                    res.median_cost
                );
                self.mean[idx::POS] = res.offset.x;
                self.mean[idx::POS + 1] = res.offset.y;
                let var = self.config.acquisition_sigma.powi(2);
                for k in 0..2 {
                    let r = idx::POS + k;
                    for j in 0..N_STATES {
                        self.covariance[(r, j)] = 0.0;
                        self.covariance[(j, r)] = 0.0;
                    }
                    self.covariance[(r, r)] = var;
                }
            }
            None => self.warnings.push(format!(
                "t = {:.1} s: position acquisition found no candidate",
                self.t
            )),
        }
        let mut last = None;
        for b in a.buffer {
            if b.dt > 0.0 {
                self.predict(b.dt)?;
            }
            last = Some(self.update_magnetic(&b.obs, stack, &b.ins_position, b.ins_heading)?);
        }
        Ok(last.expect("buffer holds the triggering observation"))
    }

    /// Airspeed update using the wind states: `airspeed = |v_nav − δv − w|`.
    pub fn update_airspeed(
        &mut self,
        t: f64,
        airspeed: f64,
        sigma: f64,
        ins_velocity_ne: &Vector2<f64>,
    ) -> Result<bool, FilterError> {
        let v = Vector2::new(
            ins_velocity_ne.x - self.mean[idx::VEL],
            ins_velocity_ne.y - self.mean[idx::VEL + 1],
        );
        let air = v - Vector2::new(self.mean[idx::WIND], self.mean[idx::WIND + 1]);
        let speed = air.norm();
        if speed < 1.0 {
            return Ok(false);
        }
        let u = air / speed;
        let mut h = StateVector::zeros();
        h[idx::VEL] = -u.x;
        h[idx::VEL + 1] = -u.y;
        h[idx::WIND] = -u.x;
        h[idx::WIND + 1] = -u.y;
        let (ok, _) = self.scalar_update(
            &h,
            airspeed - speed,
            sigma.powi(2).max(MIN_MEASUREMENT_VARIANCE),
        );
        self.t = self.t.max(t);
        self.ensure_finite("airspeed update")?;
        Ok(ok)
    }

    /// Opens the gate once the platform-model uncertainty along the current
    /// regressor has shrunk below the configured fraction of its prior.
    fn update_confidence(&mut self, r: &Regressors) {
        if self.confidence_gate_open || self.t < self.config.confidence_min_time {
            return;
        }
        let mut g = SVector::<f64, 19>::zeros();
        g.fixed_rows_mut::<18>(0).copy_from(r);
        g[18] = 1.0;
        let block = self.covariance.fixed_view::<19, 19>(idx::COEF, idx::COEF);
        let now = (g.transpose() * block * g)[0];
        let prior: f64 = g
            .iter()
            .zip(self.prior_platform_sigma.iter())
            .map(|(gi, si)| (gi * si).powi(2))
            .sum();
        if now < self.config.confidence_ratio * prior {
            self.confidence_gate_open = true;
            self.gate_open_time = Some(self.t);
            log::info!("confidence gate open at t = {:.1} s", self.t);
        }
    }

    /// Platform-model variance ratio along `r` (current / prior).
    pub fn platform_variance_ratio(&self, r: &Regressors) -> f64 {
        let mut g = SVector::<f64, 19>::zeros();
        g.fixed_rows_mut::<18>(0).copy_from(r);
        g[18] = 1.0;
        let block = self.covariance.fixed_view::<19, 19>(idx::COEF, idx::COEF);
        let now = (g.transpose() * block * g)[0];
        let prior: f64 = g
            .iter()
            .zip(self.prior_platform_sigma.iter())
            .map(|(gi, si)| (gi * si).powi(2))
            .sum();
        now / prior
    }

    fn log(
        &mut self,
        t: f64,
        innovation: f64,
        sigma: f64,
        accepted: bool,
        layer: &str,
    ) -> InnovationRecord {
        let rec = InnovationRecord {
            t,
            innovation,
            sigma,
            accepted,
            layer_used: layer.to_string(),
        };
        self.innovation_log.push(rec.clone());
        rec
    }

    /// Navigation output: the navigator position moved by `−δpos` once the
    /// confidence gate is open, otherwise the navigator position unchanged.
    pub fn solution(&self, ins_position: &GeoPosition) -> NavSolution {
        let position = if self.confidence_gate_open {
            ins_position.offset_ne(-self.mean[idx::POS], -self.mean[idx::POS + 1])
        } else {
            *ins_position
        };
        NavSolution {
            t: self.t,
            position,
            sigma_north: self.covariance[(idx::POS, idx::POS)].sqrt(),
            sigma_east: self.covariance[(idx::POS + 1, idx::POS + 1)].sqrt(),
            gate_open: self.confidence_gate_open,
        }
    }

    /// Saves the coefficient block. Refused while the gate is closed unless `force`.
    pub fn export_snapshot(
        &self,
        vehicle_id: &str,
        force: bool,
    ) -> Result<CoefficientSnapshot, FilterError> {
        if !self.confidence_gate_open && !force {
            return Err(FilterError::NotConverged);
        }
        let coefficients = (0..N_TL).map(|k| self.mean[idx::COEF + k]).collect();
        let covariance = (0..N_TL)
            .map(|i| {
                (0..N_TL)
                    .map(|j| self.covariance[(idx::COEF + i, idx::COEF + j)])
                    .collect()
            })
            .collect();
        Ok(CoefficientSnapshot::new(
            vehicle_id,
            self.t,
            coefficients,
            covariance,
        ))
    }

    /// Symmetry and positive-definiteness check.
    pub fn check_covariance(&self) -> Result<(), String> {
        let asym = (self.covariance - self.covariance.transpose()).amax();
        if asym >= 1e-9 * self.covariance.amax().max(1.0) {
            return Err(format!("covariance asymmetric by {asym}"));
        }
        if self.covariance.cholesky().is_none() {
            return Err("covariance not positive definite".into());
        }
        Ok(())
    }
}

fn symmetrize(p: &mut Covariance) {
    for i in 0..N_STATES {
        for j in (i + 1)..N_STATES {
            let m = 0.5 * (p[(i, j)] + p[(j, i)]);
            p[(i, j)] = m;
            p[(j, i)] = m;
        }
    }
}
