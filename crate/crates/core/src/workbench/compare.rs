//! Descriptive comparison of one indicator between two periods.
//!
//! A decrease larger than the stable band counts as an improvement, which
//! suits rate indicators where lower is better (poverty, unemployment).

use std::io::Write;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

pub const DEFAULT_STABLE_BAND: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Movement {
    Improved,
    Worsened,
    Stable,
}

impl Movement {
    pub fn as_str(self) -> &'static str {
        match self {
            Movement::Improved => "improved",
            Movement::Worsened => "worsened",
            Movement::Stable => "stable",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EntityChange {
    pub entity: String,
    pub value_a: f64,
    pub value_b: f64,
    pub change: f64,
    pub classification: Movement,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RankedValue {
    pub entity: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegionalComparison {
    pub variable: String,
    pub period_a: String,
    pub period_b: String,
    pub stable_band: f64,
    /// Entities observed in both periods, in dataset order.
    pub per_entity: Vec<EntityChange>,
    /// Entities observed in `period_a`, highest value first.
    pub ranking_a: Vec<RankedValue>,
    /// Entities observed in `period_b`, highest value first.
    pub ranking_b: Vec<RankedValue>,
}

/// `b − a`, nudged by a few ulps so that `a + change == b` holds in floating
/// point whenever some binary64 value satisfies it. For some decimal pairs no
/// such value exists (0.2 → 0.9) and the sum then lands within one ulp of
/// the larger operand.
fn exact_change(a: f64, b: f64) -> f64 {
    let mut c = b - a;
    for _ in 0..4 {
        let s = a + c;
        if s == b {
            return c;
        }
        c = if s < b { c.next_up() } else { c.next_down() };
    }
    b - a
}

fn ranking(data: &PanelDataset, var: usize, period: usize) -> Vec<RankedValue> {
    let mut out: Vec<RankedValue> = data
        .rows()
        .iter()
        .filter(|o| o.period == period)
        .filter_map(|o| {
            o.values[var].map(|v| RankedValue {
                entity: data.entities()[o.entity].clone(),
                value: v,
            })
        })
        .collect();
    out.sort_by(|x, y| y.value.total_cmp(&x.value).then_with(|| x.entity.cmp(&y.entity)));
    out
}

pub fn compare_periods(
    data: &PanelDataset,
    variable: &str,
    period_a: &str,
    period_b: &str,
    stable_band: f64,
) -> Result<RegionalComparison> {
    if !(stable_band >= 0.0) {
        return Err(Error::InvalidArgument(format!("stable band must be >= 0, got {stable_band}")));
    }
    let var = data.variable_index(variable)?;
    let pa = data.period_index(period_a)?;
    let pb = data.period_index(period_b)?;
    let mut a_vals = vec![None; data.entities().len()];
    let mut b_vals = vec![None; data.entities().len()];
    for o in data.rows() {
        if o.period == pa {
            a_vals[o.entity] = o.values[var];
        }
        if o.period == pb {
            b_vals[o.entity] = o.values[var];
        }
    }
    let per_entity = data
        .entities()
        .iter()
        .enumerate()
        .filter_map(|(e, name)| {
            let (a, b) = (a_vals[e]?, b_vals[e]?);
            let change = exact_change(a, b);
            let classification = if change < -stable_band {
                Movement::Improved
            } else if change > stable_band {
                Movement::Worsened
            } else {
                Movement::Stable
            };
            Some(EntityChange {
                entity: name.clone(),
                value_a: a,
                value_b: b,
                change,
                classification,
            })
        })
        .collect();
    Ok(RegionalComparison {
        variable: variable.to_string(),
        period_a: period_a.to_string(),
        period_b: period_b.to_string(),
        stable_band,
        per_entity,
        ranking_a: ranking(data, var, pa),
        ranking_b: ranking(data, var, pb),
    })
}

impl RegionalComparison {
    pub fn entity(&self, name: &str) -> Option<&EntityChange> {
        self.per_entity.iter().find(|c| c.entity == name)
    }

    fn rank_of(ranking: &[RankedValue], entity: &str) -> Option<usize> {
        ranking.iter().position(|r| r.entity == entity).map(|p| p + 1)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (period, ranking) in [(&self.period_a, &self.ranking_a), (&self.period_b, &self.ranking_b)] {
            out.push_str(&format!("{} in {} ({} entities, highest first)\n", self.variable, period, ranking.len()));
            for (i, r) in ranking.iter().enumerate() {
                out.push_str(&format!("{:>4}. {:<24}{:>10}\n", i + 1, r.entity, r.value));
            }
            out.push('\n');
        }
        out.push_str(&format!(
            "Change {} -> {} (stable band ±{})\n",
            self.period_a, self.period_b, self.stable_band
        ));
        for c in &self.per_entity {
            out.push_str(&format!(
                "{:<24}{:>10} ->{:>10}{:>+10.1}  {}\n",
                c.entity,
                c.value_a,
                c.value_b,
                c.change,
                c.classification.as_str()
            ));
        }
        out
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record([
            "entity",
            "value_a",
            "value_b",
            "change",
            "classification",
            "rank_a",
            "rank_b",
        ])?;
        for c in &self.per_entity {
            let ra = Self::rank_of(&self.ranking_a, &c.entity).unwrap_or(0);
            let rb = Self::rank_of(&self.ranking_b, &c.entity).unwrap_or(0);
            w.write_record([
                c.entity.clone(),
                c.value_a.to_string(),
                c.value_b.to_string(),
                c.change.to_string(),
                c.classification.as_str().to_string(),
                ra.to_string(),
                rb.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}
