//! Layered anomaly map with core field, temporal model and a continuation cache.

use std::collections::HashMap;
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use super::{continue_to, AnomalyGrid, MapError};
use crate::geomag::{GeoPosition, SphericalHarmonicModel, TemporalModel};

/// Step (m) of the finite difference used for the core-field gradient.
const CORE_GRADIENT_STEP: f64 = 250.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackConfig {
    /// Height of an altitude band (m). Queries inside a band share one
    /// continued grid. Zero or negative continues to the exact altitude.
    pub band_height: f64,
    /// Downward continuation cutoff as a fraction of Nyquist.
    pub downward_cutoff: f64,
    /// Gaussian smoothing scales (m) selectable per query; index 0 is usually 0.
    pub smoothing_levels: Vec<f64>,
}

impl Default for StackConfig {
    fn default() -> Self {
        Self {
            band_height: 100.0,
            downward_cutoff: 0.5,
            smoothing_levels: vec![0.0],
        }
    }
}

/// One `(path, priority)` entry of a map-stack manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StackManifestEntry {
    pub path: String,
    pub priority: i32,
}

/// A layer continued to an altitude band and optionally smoothed.
#[derive(Debug)]
pub struct ContinuedLayer {
    pub grid: AnomalyGrid,
    /// RMS (nT) of the difference between this grid and the unsmoothed grid in
    /// the same band; zero for the unsmoothed level.
    pub smoothing_rms: f64,
}

/// What to evaluate at a position.
#[derive(Debug, Clone, Copy)]
pub struct MapQuery {
    pub position: GeoPosition,
    /// Seconds since scenario start, for the temporal model.
    pub t: f64,
    /// Decimal year for the core field.
    pub epoch: f64,
    /// Index into [`StackConfig::smoothing_levels`].
    pub smoothing: usize,
    pub include_temporal: bool,
    pub with_gradient: bool,
}

impl MapQuery {
    pub fn new(position: GeoPosition, t: f64, epoch: f64) -> Self {
        Self {
            position,
            t,
            epoch,
            smoothing: 0,
            include_temporal: true,
            with_gradient: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MapSample {
    /// Core magnitude + anomaly (+ temporal offset when requested), nT.
    pub value: f64,
    pub core: f64,
    pub anomaly: f64,
    pub temporal: f64,
    pub layer: String,
    /// `(d/dnorth, d/deast)` of `value` in nT/m; zero unless requested.
    pub gradient: (f64, f64),
    pub smoothing_rms: f64,
}

type CacheKey = (usize, i64, usize);

#[derive(Debug)]
pub struct MapStack {
    layers: Vec<AnomalyGrid>,
    pub core: SphericalHarmonicModel,
    pub temporal: TemporalModel,
    config: StackConfig,
    cache: RwLock<HashMap<CacheKey, Arc<ContinuedLayer>>>,
}

impl Clone for MapStack {
    fn clone(&self) -> Self {
        Self {
            layers: self.layers.clone(),
            core: self.core.clone(),
            temporal: self.temporal.clone(),
            config: self.config.clone(),
            cache: RwLock::new(self.cache.read().expect("cache lock").clone()),
        }
    }
}

impl MapStack {
    pub fn new(
        mut layers: Vec<AnomalyGrid>,
        core: SphericalHarmonicModel,
        temporal: TemporalModel,
        config: StackConfig,
    ) -> Result<Self, MapError> {
        if layers.is_empty() {
            return Err(MapError::Stack("at least one layer is required".into()));
        }
        for g in &layers {
            g.validate()?;
        }
        layers.sort_by(|a, b| {
            b.priority
                .cmp(&a.priority)
                .then_with(|| a.name.cmp(&b.name))
        });
        let mut names: Vec<&str> = layers.iter().map(|g| g.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(MapError::Stack(format!("duplicate layer name {:?}", w[0])));
        }
        if !(config.downward_cutoff > 0.0 && config.downward_cutoff <= 1.0) {
            return Err(MapError::Stack("downward cutoff must lie in (0, 1]".into()));
        }
        if config.smoothing_levels.is_empty()
            || config.smoothing_levels.iter().any(|s| !(*s >= 0.0))
        {
            return Err(MapError::Stack(
                "smoothing levels must be non-empty and >= 0".into(),
            ));
        }
        core.validate()?;
        temporal.validate()?;
        Ok(Self {
            layers,
            core,
            temporal,
            config,
            cache: RwLock::new(HashMap::new()),
        })
    }

    /// Layers in selection order (descending priority, then name).
    pub fn layers(&self) -> &[AnomalyGrid] {
        &self.layers
    }

    pub fn config(&self) -> &StackConfig {
        &self.config
    }

    /// Replaces the layers, keeping models and configuration; clears the cache.
    pub fn with_layers(&self, layers: Vec<AnomalyGrid>) -> Result<Self, MapError> {
        Self::new(
            layers,
            self.core.clone(),
            self.temporal.clone(),
            self.config.clone(),
        )
    }

    fn band_key(&self, altitude: f64) -> (i64, f64) {
        if self.config.band_height > 0.0 {
            let k = (altitude / self.config.band_height).round();
            (k as i64, k * self.config.band_height)
        } else {
            let mm = (altitude * 1000.0).round();
            (mm as i64, mm / 1000.0)
        }
    }

    /// Layer `index` continued to the band containing `altitude` and smoothed
    /// at level `smoothing`. Computed once per key and shared.
    pub fn continued_layer(
        &self,
        index: usize,
        altitude: f64,
        smoothing: usize,
    ) -> Arc<ContinuedLayer> {
        let (band, band_alt) = self.band_key(altitude);
        let key = (index, band, smoothing);
        if let Some(hit) = self.cache.read().expect("cache lock").get(&key) {
            return Arc::clone(hit);
        }
        let grid = &self.layers[index];
        let sigma = self.config.smoothing_levels[smoothing];
        let continued = continue_to(grid, band_alt, self.config.downward_cutoff, sigma);
        let smoothing_rms = if sigma > 0.0 {
            let base = self.continued_layer(index, altitude, 0);
            let n = continued.values.len() as f64;
            (continued
                .values
                .iter()
                .zip(&base.grid.values)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                / n)
                .sqrt()
        } else {
            0.0
        };
        log::debug!(
            "continued layer {:?} to {band_alt} m, smoothing {sigma} m",
            grid.name
        );
        let entry = Arc::new(ContinuedLayer {
            grid: continued,
            smoothing_rms,
        });
        let mut cache = self.cache.write().expect("cache lock");
        Arc::clone(cache.entry(key).or_insert(entry))
    }

    pub fn cached_entries(&self) -> usize {
        self.cache.read().expect("cache lock").len()
    }

    /// Total scalar field at `pos`: core magnitude + anomaly + temporal offset,
    /// and the name of the layer that answered.
    pub fn map_scalar(
        &self,
        pos: &GeoPosition,
        t: f64,
        epoch: f64,
    ) -> Result<(f64, String), MapError> {
        let s = self.evaluate(&MapQuery::new(*pos, t, epoch))?;
        Ok((s.value, s.layer))
    }

    /// Anomaly only, from the highest-priority covering layer.
    pub fn anomaly(&self, pos: &GeoPosition) -> Result<(f64, String), MapError> {
        let mut q = MapQuery::new(*pos, 0.0, self.core.epoch);
        q.include_temporal = false;
        let (v, _, layer, _) = self.anomaly_at(&q)?;
        Ok((v, layer))
    }

    fn anomaly_at(&self, q: &MapQuery) -> Result<(f64, (f64, f64), String, f64), MapError> {
        let margin = if q.with_gradient { 1.0 } else { 0.0 };
        for (index, layer) in self.layers.iter().enumerate() {
            if !layer.covers_with_margin(&q.position, margin) {
                continue;
            }
            let c = self.continued_layer(index, q.position.altitude, q.smoothing);
            let value = c.grid.interpolate(&q.position)?;
            let gradient = if q.with_gradient {
                c.grid.gradient(&q.position)?
            } else {
                (0.0, 0.0)
            };
            return Ok((value, gradient, layer.name.clone(), c.smoothing_rms));
        }
        Err(MapError::coverage(&q.position))
    }

    pub fn evaluate(&self, q: &MapQuery) -> Result<MapSample, MapError> {
        if q.smoothing >= self.config.smoothing_levels.len() {
            return Err(MapError::Stack(format!(
                "no smoothing level {}",
                q.smoothing
            )));
        }
        let (anomaly, anomaly_gradient, layer, smoothing_rms) = self.anomaly_at(q)?;
        let core = self.core.synthesize(&q.position, q.epoch)?.magnitude();
        let temporal = if q.include_temporal {
            self.temporal.offset(q.t)
        } else {
            0.0
        };
        let gradient = if q.with_gradient {
            let h = CORE_GRADIENT_STEP;
            let f = |n: f64, e: f64| -> Result<f64, MapError> {
                Ok(self
                    .core
                    .synthesize(&q.position.offset_ne(n, e), q.epoch)?
                    .magnitude())
            };
            let gn = (f(h, 0.0)? - f(-h, 0.0)?) / (2.0 * h);
            let ge = (f(0.0, h)? - f(0.0, -h)?) / (2.0 * h);
            (anomaly_gradient.0 + gn, anomaly_gradient.1 + ge)
        } else {
            (0.0, 0.0)
        };
        Ok(MapSample {
            value: core + anomaly + temporal,
            core,
            anomaly,
            temporal,
            layer,
            gradient,
            smoothing_rms,
        })
    }
}

/// DC-offset levelling. Each lower-priority layer is shifted so that, over its
/// nodes inside the footprint of the highest-priority layer it overlaps, its
/// mean equals that layer's mean at the same points. Layers are processed in
/// priority order so references are already levelled.
pub fn level_layers(stack: &MapStack) -> Result<MapStack, MapError> {
    let mut layers: Vec<AnomalyGrid> = stack.layers().to_vec();
    for k in 1..layers.len() {
        let (upper, lower) = layers.split_at_mut(k);
        let target = &mut lower[0];
        for reference in upper.iter() {
            let reference =
                if (reference.reference_altitude - target.reference_altitude).abs() > 1e-6 {
                    continue_to(
                        reference,
                        target.reference_altitude,
                        stack.config().downward_cutoff,
                        0.0,
                    )
                } else {
                    reference.clone()
                };
            let mut sum_ref = 0.0;
            let mut sum_tgt = 0.0;
            let mut count = 0usize;
            for i in 0..target.n_rows {
                for j in 0..target.n_cols {
                    let p = target.node_position(i, j);
                    if let Ok(v) = reference.interpolate(&p) {
                        sum_ref += v;
                        sum_tgt += target.value(i, j);
                        count += 1;
                    }
                }
            }
            if count > 0 {
                let offset = (sum_ref - sum_tgt) / count as f64;
                log::info!(
                    "levelling {:?} against {:?}: {offset:+.3} nT",
                    target.name,
                    reference.name
                );
                *target = target.shifted(offset);
                break;
            }
        }
    }
    stack.with_layers(layers)
}
