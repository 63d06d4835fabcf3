//! Stepwise regressor selection driven by (robust) coefficient p-values.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{fit_fixed_effects, fit_pooled, Effects, FeMethod, FitResult, ModelSpec};
use crate::inference::{default_dof, t_test};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepwiseOptions {
    pub p_enter: f64,
    pub p_remove: f64,
    pub max_steps: usize,
}

impl Default for StepwiseOptions {
    fn default() -> Self {
        Self {
            p_enter: 0.10,
            p_remove: 0.15,
            max_steps: 100,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StepAction {
    Add,
    Remove,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepRecord {
    pub action: StepAction,
    pub variable: String,
    pub p_value: f64,
    /// Number of selected candidates after the step.
    pub model_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SkipRecord {
    /// Forward round in which the candidate could not be fitted.
    pub round: usize,
    pub variable: String,
    pub reason: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    NoAction,
    MaxSteps,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepwiseTrace {
    pub steps: Vec<StepRecord>,
    pub skipped: Vec<SkipRecord>,
    pub final_spec: ModelSpec,
    /// p-values of the selected candidates in the final model, in entry order.
    pub final_p_values: Vec<(String, f64)>,
    pub candidate_pool: Vec<String>,
    pub forced: Vec<String>,
    pub p_enter: f64,
    pub p_remove: f64,
    pub max_steps: usize,
    pub termination: Termination,
}

impl StepwiseTrace {
    /// Candidates selected beyond the forced regressors.
    pub fn selected(&self) -> Vec<&str> {
        self.final_spec.regressors[self.forced.len()..]
            .iter()
            .map(String::as_str)
            .collect()
    }
}

fn fit_model(data: &PanelDataset, spec: &ModelSpec) -> Result<FitResult> {
    if spec.effects == Effects::None {
        fit_pooled(data, spec)
    } else {
        fit_fixed_effects(data, spec, FeMethod::Within)
    }
}

fn p_values(data: &PanelDataset, spec: &ModelSpec, names: &[String]) -> Result<Vec<f64>> {
    let fit = fit_model(data, spec)?;
    let dof = default_dof(&fit, spec.covariance);
    names
        .iter()
        .map(|n| Ok(t_test(&fit, n, &fit.covariance, dof)?.p_value))
        .collect()
}

/// Forward/backward stepwise selection over `candidates`.
///
/// `base_spec.regressors` are forced into every model and may be empty. Each
/// forward round adds the candidate with the smallest p-value below
/// `p_enter`; after every addition the selected candidate with the largest
/// p-value above `p_remove` is dropped. Ties go to the earlier candidate.
pub fn stepwise_select(
    data: &PanelDataset,
    base_spec: &ModelSpec,
    candidates: &[String],
    options: StepwiseOptions,
) -> Result<StepwiseTrace> {
    let StepwiseOptions {
        p_enter,
        p_remove,
        max_steps,
    } = options;
    if !(0.0..=1.0).contains(&p_enter) || !(0.0..=1.0).contains(&p_remove) || p_enter >= p_remove {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_enter < p_remove <= 1, got {p_enter} and {p_remove}"
        )));
    }
    for (i, c) in candidates.iter().enumerate() {
        if base_spec.regressors.contains(c) || *c == base_spec.dependent {
            return Err(Error::InvalidArgument(format!(
                "candidate '{c}' is already in the base specification"
            )));
        }
        if candidates[..i].contains(c) {
            return Err(Error::InvalidArgument(format!("candidate '{c}' listed twice")));
        }
        data.variable_index(c)?;
    }

    let forced = base_spec.regressors.clone();
    let mut selected: Vec<String> = Vec::new();
    let mut steps = Vec::new();
    let mut skipped = Vec::new();
    let mut termination = Termination::NoAction;
    let spec_for = |selected: &[String]| {
        let mut regs = forced.clone();
        regs.extend(selected.iter().cloned());
        base_spec.with_regressors(regs)
    };

    let mut round = 0;
    loop {
        if steps.len() >= max_steps {
            termination = Termination::MaxSteps;
            break;
        }
        let pool: Vec<&String> = candidates.iter().filter(|c| !selected.contains(c)).collect();
        let outcomes: Vec<Result<f64>> = pool
            .par_iter()
            .map(|c| {
                let mut trial = selected.clone();
                trial.push((*c).clone());
                Ok(p_values(data, &spec_for(&trial), std::slice::from_ref(*c))?[0])
            })
            .collect();
        let mut best: Option<(usize, f64)> = None;
        for (i, outcome) in outcomes.into_iter().enumerate() {
            match outcome {
                Ok(p) => {
                    if best.is_none_or(|(_, bp)| p < bp) {
                        best = Some((i, p));
                    }
                }
                Err(e) => skipped.push(SkipRecord {
                    round,
                    variable: pool[i].clone(),
                    reason: e.to_string(),
                }),
            }
        }
        round += 1;
        let Some((i, p)) = best.filter(|&(_, p)| p < p_enter) else {
            break;
        };
        selected.push(pool[i].clone());
        steps.push(StepRecord {
            action: StepAction::Add,
            variable: pool[i].clone(),
            p_value: p,
            model_size: selected.len(),
        });

        if steps.len() >= max_steps {
            termination = Termination::MaxSteps;
            break;
        }
        let ps = p_values(data, &spec_for(&selected), &selected)?;
        let mut worst: Option<(usize, f64)> = None;
        for (j, &p) in ps.iter().enumerate() {
            if worst.is_none_or(|(_, wp)| p > wp) {
                worst = Some((j, p));
            }
        }
        if let Some((j, p)) = worst.filter(|&(_, p)| p > p_remove) {
            let var = selected.remove(j);
            steps.push(StepRecord {
                action: StepAction::Remove,
                variable: var,
                p_value: p,
                model_size: selected.len(),
            });
        }
    }

    let final_spec = spec_for(&selected);
    let final_p_values = if selected.is_empty() {
        Vec::new()
    } else {
        let ps = p_values(data, &final_spec, &selected)?;
        selected.iter().cloned().zip(ps).collect()
    };
    Ok(StepwiseTrace {
        steps,
        skipped,
        final_spec,
        final_p_values,
        candidate_pool: candidates.to_vec(),
        forced,
        p_enter,
        p_remove,
        max_steps,
        termination,
    })
}
