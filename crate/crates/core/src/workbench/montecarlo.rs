//! Monte Carlo runner over synthetic panels.
//!
//! Replication `i` uses the seed `replication_seed(master, i)`. Outcomes are
//! collected in index order and aggregated sequentially, so the summary is the
//! same bit for bit whatever the number of worker threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{fit_fixed_effects, fit_pooled, fit_random_effects, CovarianceKind, Effects, FeMethod, FitResult, ModelSpec};
use crate::inference::{classical_covariance, cluster_robust_covariance, hausman_test};
use crate::numerics::t_two_sided_p;
use crate::workbench::synth::{generate_panel, replication_seed, SyntheticPanelConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MonteCarloOptions {
    /// Confidence level of the intervals; tests run at `1 - level`.
    pub level: f64,
    /// Also fit random effects and run the Hausman test in every replication.
    pub hausman: bool,
    /// Worker threads; `None` uses the global rayon pool.
    pub workers: Option<usize>,
}

impl Default for MonteCarloOptions {
    fn default() -> Self {
        Self {
            level: 0.95,
            hausman: false,
            workers: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientDraw {
    pub name: String,
    pub estimate: f64,
    pub se_classical: f64,
    pub se_robust: f64,
    pub covered_classical: bool,
    pub covered_robust: bool,
    /// H0: coefficient = 0 rejected using the covariance named in the spec.
    pub rejected_zero: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicationOutcome {
    pub index: usize,
    pub seed: u64,
    pub draws: Vec<CoefficientDraw>,
    pub hausman_p_value: Option<f64>,
    pub sigma2_entity: Option<f64>,
    /// Fit failure; the replication is left out of every average.
    pub error: Option<String>,
    pub hausman_error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoefficientSummary {
    pub name: String,
    pub truth: f64,
    pub mean_estimate: f64,
    pub bias: f64,
    pub rmse: f64,
    pub coverage_classical: f64,
    pub coverage_robust: f64,
    pub mean_se_classical: f64,
    pub mean_se_robust: f64,
    /// Mean over replications of SE_robust / SE_classical (replications with SE_classical = 0 skipped).
    pub mean_se_ratio: f64,
    pub rejection_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MonteCarloSummary {
    pub replications: usize,
    pub master_seed: u64,
    pub level: f64,
    pub successful: usize,
    pub failed: usize,
    pub coefficients: Vec<CoefficientSummary>,
    pub hausman_rejection_rate: Option<f64>,
    pub hausman_failures: usize,
    pub mean_sigma2_entity: Option<f64>,
    pub outcomes: Vec<ReplicationOutcome>,
}

impl MonteCarloSummary {
    pub fn coefficient(&self, name: &str) -> Option<&CoefficientSummary> {
        self.coefficients.iter().find(|c| c.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut out = format!(
            "Monte Carlo: {} replications (seed {}), {} failed, level {}\n",
            self.replications, self.master_seed, self.failed, self.level
        );
        out.push_str(&format!(
            "{:<16}{:>10}{:>12}{:>12}{:>10}{:>10}{:>10}{:>10}\n",
            "coefficient", "truth", "bias", "rmse", "cov.cl", "cov.rob", "se.ratio", "reject"
        ));
        for c in &self.coefficients {
            out.push_str(&format!(
                "{:<16}{:>10.4}{:>12.5}{:>12.5}{:>10.3}{:>10.3}{:>10.3}{:>10.3}\n",
                c.name, c.truth, c.bias, c.rmse, c.coverage_classical, c.coverage_robust, c.mean_se_ratio, c.rejection_rate
            ));
        }
        if let Some(r) = self.hausman_rejection_rate {
            out.push_str(&format!(
                "Hausman rejection rate {:.3} ({} failures)\n",
                r, self.hausman_failures
            ));
        }
        if let Some(s) = self.mean_sigma2_entity {
            out.push_str(&format!("Mean sigma2_entity {s:.4}\n"));
        }
        out
    }
}

fn fit_model(data: &crate::panel::PanelDataset, spec: &ModelSpec) -> Result<FitResult> {
    if spec.effects == Effects::None {
        fit_pooled(data, spec)
    } else {
        fit_fixed_effects(data, spec, FeMethod::Within)
    }
}

fn covered(estimate: f64, truth: f64, se: f64, dof: usize, alpha: f64) -> Result<bool> {
    // Exact recoveries count as covered whatever the (numerically zero) SE.
    if (estimate - truth).abs() <= 1e-8 * (1.0 + truth.abs()) {
        return Ok(true);
    }
    if se == 0.0 {
        return Ok(false);
    }
    Ok(t_two_sided_p((estimate - truth) / se, dof as f64)? > alpha)
}

fn replicate(
    config: &SyntheticPanelConfig,
    spec: &ModelSpec,
    index: usize,
    seed: u64,
    options: &MonteCarloOptions,
) -> ReplicationOutcome {
    let mut outcome = ReplicationOutcome {
        index,
        seed,
        draws: Vec::new(),
        hausman_p_value: None,
        sigma2_entity: None,
        error: None,
        hausman_error: None,
    };
    let alpha = 1.0 - options.level;
    let cfg = config.with_seed(seed);
    let data = match generate_panel(&cfg) {
        Ok(d) => d,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return outcome;
        }
    };
    let draws = (|| -> Result<Vec<CoefficientDraw>> {
        let fit = fit_model(&data, spec)?;
        let classical = classical_covariance(&fit)?;
        let robust = cluster_robust_covariance(&fit, &fit.entity_index, fit.n_entities)?;
        let dof_classical = fit.dof_residual;
        let dof_robust = fit.n_entities.saturating_sub(1);
        if dof_classical == 0 || dof_robust == 0 {
            return Err(Error::ZeroDof);
        }
        let (test_cov, test_dof) = match spec.covariance {
            CovarianceKind::Classical => (&classical, dof_classical),
            CovarianceKind::ClusterEntity => (&robust, dof_robust),
        };
        spec.regressors
            .iter()
            .map(|name| {
                let i = fit.index_of(name)?;
                let b = fit.coefficients[i];
                let truth = config.slopes.get(name).copied().unwrap_or(0.0);
                let se_c = classical[(i, i)].max(0.0).sqrt();
                let se_r = robust[(i, i)].max(0.0).sqrt();
                let se_t = test_cov[(i, i)].max(0.0).sqrt();
                let rejected_zero = se_t > 0.0 && t_two_sided_p(b / se_t, test_dof as f64)? < alpha;
                Ok(CoefficientDraw {
                    name: name.clone(),
                    estimate: b,
                    se_classical: se_c,
                    se_robust: se_r,
                    covered_classical: covered(b, truth, se_c, dof_classical, alpha)?,
                    covered_robust: covered(b, truth, se_r, dof_robust, alpha)?,
                    rejected_zero,
                })
            })
            .collect()
    })();
    match draws {
        Ok(d) => outcome.draws = d,
        Err(e) => {
            outcome.error = Some(e.to_string());
            return outcome;
        }
    }
    if options.hausman {
        let classical_spec = ModelSpec {
            covariance: CovarianceKind::Classical,
            ..spec.clone()
        };
        let result = (|| -> Result<(f64, Option<f64>)> {
            let fe = fit_fixed_effects(&data, &classical_spec, FeMethod::Within)?;
            let re = fit_random_effects(&data, &classical_spec)?;
            let h = hausman_test(&fe, &re)?;
            Ok((h.p_value, re.variance_components.map(|v| v.sigma2_entity)))
        })();
        match result {
            Ok((p, s)) => {
                outcome.hausman_p_value = Some(p);
                outcome.sigma2_entity = s;
            }
            Err(e) => outcome.hausman_error = Some(e.to_string()),
        }
    }
    outcome
}

pub fn run_monte_carlo(
    config: &SyntheticPanelConfig,
    spec: &ModelSpec,
    replications: usize,
    seed: u64,
    options: MonteCarloOptions,
) -> Result<MonteCarloSummary> {
    if replications == 0 {
        return Err(Error::InvalidArgument("replications must be at least 1".into()));
    }
    if !(options.level > 0.0 && options.level < 1.0) {
        return Err(Error::InvalidArgument(format!("level must lie in (0, 1), got {}", options.level)));
    }
    if options.hausman && spec.effects == Effects::None {
        return Err(Error::InvalidArgument("the Hausman test needs entity effects in the spec".into()));
    }
    config.validate()?;
    spec.validate()?;
    for name in std::iter::once(&spec.dependent).chain(&spec.regressors) {
        if *name != config.dependent && !config.slopes.contains_key(name) {
            return Err(Error::MissingVariable(name.clone()));
        }
    }

    let run = || -> Vec<ReplicationOutcome> {
        (0..replications)
            .into_par_iter()
            .map(|i| replicate(config, spec, i, replication_seed(seed, i as u64), &options))
            .collect()
    };
    let outcomes = match options.workers {
        Some(0) => return Err(Error::InvalidArgument("workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?
            .install(run),
        None => run(),
    };

    let ok: Vec<&ReplicationOutcome> = outcomes.iter().filter(|o| o.error.is_none()).collect();
    let successful = ok.len();
    let m = successful.max(1) as f64;
    let coefficients = spec
        .regressors
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let truth = config.slopes.get(name).copied().unwrap_or(0.0);
            let mut s = CoefficientSummary {
                name: name.clone(),
                truth,
                mean_estimate: 0.0,
                bias: 0.0,
                rmse: 0.0,
                coverage_classical: 0.0,
                coverage_robust: 0.0,
                mean_se_classical: 0.0,
                mean_se_robust: 0.0,
                mean_se_ratio: 0.0,
                rejection_rate: 0.0,
            };
            let mut sq = 0.0;
            let mut ratio_count = 0usize;
            for o in &ok {
                let d = &o.draws[j];
                s.mean_estimate += d.estimate;
                sq += (d.estimate - truth).powi(2);
                s.coverage_classical += f64::from(u8::from(d.covered_classical));
                s.coverage_robust += f64::from(u8::from(d.covered_robust));
                s.mean_se_classical += d.se_classical;
                s.mean_se_robust += d.se_robust;
                if d.se_classical > 0.0 {
                    s.mean_se_ratio += d.se_robust / d.se_classical;
                    ratio_count += 1;
                }
                s.rejection_rate += f64::from(u8::from(d.rejected_zero));
            }
            s.mean_estimate /= m;
            s.bias = s.mean_estimate - truth;
            s.rmse = (sq / m).sqrt();
            s.coverage_classical /= m;
            s.coverage_robust /= m;
            s.mean_se_classical /= m;
            s.mean_se_robust /= m;
            s.mean_se_ratio = if ratio_count > 0 { s.mean_se_ratio / ratio_count as f64 } else { f64::NAN };
            s.rejection_rate /= m;
            s
        })
        .collect();

    let (mut hausman_rejection_rate, mut mean_sigma2_entity) = (None, None);
    let mut hausman_failures = 0;
    if options.hausman {
        let alpha = 1.0 - options.level;
        let ps: Vec<f64> = ok.iter().filter_map(|o| o.hausman_p_value).collect();
        hausman_failures = ok.len() - ps.len();
        if !ps.is_empty() {
            hausman_rejection_rate = Some(ps.iter().filter(|&&p| p < alpha).count() as f64 / ps.len() as f64);
        }
        let s2: Vec<f64> = ok.iter().filter_map(|o| o.sigma2_entity).collect();
        if !s2.is_empty() {
            mean_sigma2_entity = Some(s2.iter().sum::<f64>() / s2.len() as f64);
        }
    }

    Ok(MonteCarloSummary {
        replications,
        master_seed: seed,
        level: options.level,
        successful,
        failed: replications - successful,
        coefficients,
        hausman_rejection_rate,
        hausman_failures,
        mean_sigma2_entity,
        outcomes,
    })
}
