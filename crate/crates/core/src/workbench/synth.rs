//! Synthetic panels with planted slopes, effects and error structure.
//!
//! Random numbers come from ChaCha8 (`rand_chacha` 0.9) seeded with
//! `seed_from_u64`; normals use `rand_distr::StandardNormal`. Draw order is
//! fixed: entity effects, period effects, then per regressor (in name order)
//! the entity components and the within paths, then the error paths.

use std::collections::BTreeMap;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::{PanelDataset, Record};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticPanelConfig {
    pub n_entities: usize,
    pub n_periods: usize,
    pub dependent: String,
    pub intercept: f64,
    pub slopes: BTreeMap<String, f64>,
    pub entity_effect_sd: f64,
    pub time_effect_sd: f64,
    pub noise_sd: f64,
    /// AR(1) coefficient of the errors within each entity.
    pub within_entity_ar1: f64,
    /// Correlation between each regressor's entity component and the entity effect.
    pub effect_regressor_correlation: f64,
    /// AR(1) coefficient of each regressor's within-entity component.
    pub regressor_ar1: f64,
    pub regressor_between_sd: f64,
    pub regressor_within_sd: f64,
    /// Error sd is scaled by `1 + heteroskedasticity · |x|` for the first regressor.
    pub heteroskedasticity: f64,
    pub first_period: i64,
    pub seed: u64,
}

impl Default for SyntheticPanelConfig {
    fn default() -> Self {
        Self {
            n_entities: 28,
            n_periods: 12,
            dependent: "y".into(),
            intercept: 0.0,
            slopes: BTreeMap::from([("x".to_string(), 1.0)]),
            entity_effect_sd: 1.0,
            time_effect_sd: 1.0,
            noise_sd: 1.0,
            within_entity_ar1: 0.0,
            effect_regressor_correlation: 0.0,
            regressor_ar1: 0.0,
            regressor_between_sd: 1.0,
            regressor_within_sd: 1.0,
            heteroskedasticity: 0.0,
            first_period: 1,
            seed: 0,
        }
    }
}

impl SyntheticPanelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.n_entities == 0 || self.n_periods == 0 {
            return bad("n_entities and n_periods must be positive".into());
        }
        for (name, v) in [
            ("entity_effect_sd", self.entity_effect_sd),
            ("time_effect_sd", self.time_effect_sd),
            ("noise_sd", self.noise_sd),
            ("regressor_between_sd", self.regressor_between_sd),
            ("regressor_within_sd", self.regressor_within_sd),
            ("heteroskedasticity", self.heteroskedasticity),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return bad(format!("{name} must be a finite nonnegative number, got {v}"));
            }
        }
        for (name, v) in [
            ("within_entity_ar1", self.within_entity_ar1),
            ("regressor_ar1", self.regressor_ar1),
        ] {
            if !(v.abs() < 1.0) {
                return bad(format!("{name} must lie in (-1, 1), got {v}"));
            }
        }
        if !(self.effect_regressor_correlation.abs() <= 1.0) {
            return bad("effect_regressor_correlation must lie in [-1, 1]".into());
        }
        if !self.intercept.is_finite() || self.slopes.values().any(|v| !v.is_finite()) {
            return bad("intercept and slopes must be finite".into());
        }
        if self.slopes.contains_key(&self.dependent) || self.dependent.is_empty() {
            return bad(format!("invalid dependent name '{}'", self.dependent));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

/// Stationary AR(1) path with marginal sd 1.
fn ar1_path(rng: &mut ChaCha8Rng, len: usize, phi: f64) -> Vec<f64> {
    let innovation_sd = (1.0 - phi * phi).sqrt();
    let mut out = Vec::with_capacity(len);
    let mut prev: f64 = rng.sample(StandardNormal);
    out.push(prev);
    for _ in 1..len {
        let z: f64 = rng.sample(StandardNormal);
        prev = phi * prev + innovation_sd * z;
        out.push(prev);
    }
    out
}

/// Seed of replication `index` under `master`: first output of ChaCha8 stream `index`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index);
    rng.next_u64()
}

pub fn generate_panel(config: &SyntheticPanelConfig) -> Result<PanelDataset> {
    config.validate()?;
    let n_e = config.n_entities;
    let n_t = config.n_periods;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let z: Vec<f64> = (0..n_e).map(|_| rng.sample(StandardNormal)).collect();
    let entity_effect: Vec<f64> = z.iter().map(|v| config.entity_effect_sd * v).collect();
    let time_effect: Vec<f64> = (0..n_t)
        .map(|_| config.time_effect_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();

    let rho = config.effect_regressor_correlation;
    let rho_c = (1.0 - rho * rho).sqrt();
    let mut regressors: Vec<Vec<f64>> = Vec::with_capacity(config.slopes.len());
    for _ in config.slopes.keys() {
        let between: Vec<f64> = z
            .iter()
            .map(|&zi| {
                let w: f64 = rng.sample(StandardNormal);
                config.regressor_between_sd * (rho * zi + rho_c * w)
            })
            .collect();
        let mut values = Vec::with_capacity(n_e * n_t);
        for b in between {
            for u in ar1_path(&mut rng, n_t, config.regressor_ar1) {
                values.push(b + config.regressor_within_sd * u);
            }
        }
        regressors.push(values);
    }
    let mut errors = Vec::with_capacity(n_e * n_t);
    for _ in 0..n_e {
        errors.extend(ar1_path(&mut rng, n_t, config.within_entity_ar1));
    }

    let width = n_e.to_string().len().max(2);
    let slopes: Vec<f64> = config.slopes.values().copied().collect();
    let mut records = Vec::with_capacity(n_e * n_t);
    for e in 0..n_e {
        for t in 0..n_t {
            let r = e * n_t + t;
            let mut scale = config.noise_sd;
            if let Some(first) = regressors.first() {
                scale *= 1.0 + config.heteroskedasticity * first[r].abs();
            }
            let mut y = config.intercept + entity_effect[e] + time_effect[t] + scale * errors[r];
            for (x, b) in regressors.iter().zip(&slopes) {
                y += b * x[r];
            }
            let mut values = vec![Some(y)];
            values.extend(regressors.iter().map(|x| Some(x[r])));
            records.push(Record {
                entity: format!("E{:0width$}", e + 1),
                period: (config.first_period + t as i64).to_string(),
                values,
            });
        }
    }
    let mut names = vec![config.dependent.clone()];
    names.extend(config.slopes.keys().cloned());
    PanelDataset::from_records(names, records)
}

/// Entity effects and period effects as drawn for `config`, for oracle checks.
pub fn planted_effects(config: &SyntheticPanelConfig) -> (Vec<f64>, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let z: Vec<f64> = (0..config.n_entities).map(|_| rng.sample(StandardNormal)).collect();
    let a = z.iter().map(|v| config.entity_effect_sd * v).collect();
    let g = (0..config.n_periods)
        .map(|_| config.time_effect_sd * rng.sample::<f64, _>(StandardNormal))
        .collect();
    (a, g)
}
