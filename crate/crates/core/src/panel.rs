//! Long-format panel data: CSV ingestion, listwise samples, dummy designs and
//! within (demeaning) transformations.

use std::cmp::Ordering;
use std::collections::HashMap;
use std::io::{Read, Write};
use std::ops::Range;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{Effects, ModelSpec};

/// Iteration cap for alternating two-way demeaning on unbalanced panels.
pub const MAX_DEMEAN_ITERATIONS: usize = 1000;
/// Convergence threshold on the largest per-sweep change.
pub const DEMEAN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    pub entity: usize,
    pub period: usize,
    pub values: Vec<Option<f64>>,
}

/// A panel indexed by (entity, period). Immutable once built.
#[derive(Debug, Clone, PartialEq)]
pub struct PanelDataset {
    entities: Vec<String>,
    periods: Vec<String>,
    variables: Vec<String>,
    rows: Vec<Observation>,
    balanced: bool,
}

/// One raw record before validation.
#[derive(Debug, Clone)]
pub struct Record {
    pub entity: String,
    pub period: String,
    pub values: Vec<Option<f64>>,
}

fn sort_periods(labels: &mut [String]) {
    let numeric: Option<Vec<i64>> = labels.iter().map(|l| l.trim().parse().ok()).collect();
    if numeric.is_some() {
        labels.sort_by_key(|l| l.trim().parse::<i64>().unwrap());
    } else {
        labels.sort();
    }
}

impl PanelDataset {
    pub fn from_records(variables: Vec<String>, records: Vec<Record>) -> Result<Self> {
        let mut seen_var = HashMap::new();
        for (j, v) in variables.iter().enumerate() {
            if seen_var.insert(v.as_str(), j).is_some() {
                return Err(Error::InvalidArgument(format!("variable '{v}' declared twice")));
            }
        }
        let mut entities: Vec<String> = records.iter().map(|r| r.entity.clone()).collect();
        entities.sort();
        entities.dedup();
        let mut periods: Vec<String> = records.iter().map(|r| r.period.clone()).collect();
        periods.sort();
        periods.dedup();
        sort_periods(&mut periods);

        let e_pos: HashMap<&str, usize> =
            entities.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
        let p_pos: HashMap<&str, usize> =
            periods.iter().enumerate().map(|(i, p)| (p.as_str(), i)).collect();

        let mut rows = Vec::with_capacity(records.len());
        let mut keys = HashMap::with_capacity(records.len());
        for rec in records {
            if rec.values.len() != variables.len() {
                return Err(Error::DimensionMismatch(format!(
                    "record ({}, {}) has {} values for {} variables",
                    rec.entity,
                    rec.period,
                    rec.values.len(),
                    variables.len()
                )));
            }
            if let Some(j) = rec.values.iter().position(|v| matches!(v, Some(x) if !x.is_finite())) {
                return Err(Error::NonFinite(format!(
                    "variable '{}' at ({}, {})",
                    variables[j], rec.entity, rec.period
                )));
            }
            let entity = e_pos[rec.entity.as_str()];
            let period = p_pos[rec.period.as_str()];
            if keys.insert((entity, period), ()).is_some() {
                return Err(Error::DuplicateKey {
                    entity: rec.entity,
                    period: rec.period,
                });
            }
            rows.push(Observation {
                entity,
                period,
                values: rec.values,
            });
        }
        rows.sort_by_key(|o| (o.entity, o.period));
        let balanced = !rows.is_empty() && rows.len() == entities.len() * periods.len();
        Ok(Self {
            entities,
            periods,
            variables,
            rows,
            balanced,
        })
    }

    /// Reads a comma-separated panel with a header row.
    pub fn read_csv<R: Read>(reader: R, entity_column: &str, period_column: &str) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::None)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        let find = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| Error::MissingColumn(name.to_string()))
        };
        let e_col = find(entity_column)?;
        let p_col = find(period_column)?;
        let var_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != e_col && c != p_col).collect();
        let variables: Vec<String> = var_cols.iter().map(|&c| headers[c].to_string()).collect();

        let mut records = Vec::new();
        for (i, row) in rdr.records().enumerate() {
            let row = row?;
            // data rows are numbered from 2: the header occupies line 1
            let line = i + 2;
            let mut values = Vec::with_capacity(var_cols.len());
            for &c in &var_cols {
                let cell = row.get(c).unwrap_or("").trim();
                if cell.is_empty() {
                    values.push(None);
                } else {
                    let v: f64 = cell.parse().map_err(|_| Error::BadCell {
                        row: line,
                        column: headers[c].to_string(),
                        value: cell.to_string(),
                    })?;
                    if !v.is_finite() {
                        return Err(Error::BadCell {
                            row: line,
                            column: headers[c].to_string(),
                            value: cell.to_string(),
                        });
                    }
                    values.push(Some(v));
                }
            }
            records.push(Record {
                entity: row.get(e_col).unwrap_or("").to_string(),
                period: row.get(p_col).unwrap_or("").to_string(),
                values,
            });
        }
        Self::from_records(variables, records)
    }

    /// Writes the panel back in long format. Missing values become empty fields.
    pub fn write_csv<W: Write>(&self, writer: W, entity_column: &str, period_column: &str) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec![entity_column.to_string(), period_column.to_string()];
        header.extend(self.variables.iter().cloned());
        w.write_record(&header)?;
        for obs in &self.rows {
            let mut rec = vec![self.entities[obs.entity].clone(), self.periods[obs.period].clone()];
            rec.extend(obs.values.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn entities(&self) -> &[String] {
        &self.entities
    }

    pub fn periods(&self) -> &[String] {
        &self.periods
    }

    pub fn variables(&self) -> &[String] {
        &self.variables
    }

    pub fn rows(&self) -> &[Observation] {
        &self.rows
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn is_balanced(&self) -> bool {
        self.balanced
    }

    pub fn variable_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v == name)
            .ok_or_else(|| Error::MissingVariable(name.to_string()))
    }

    pub fn period_index(&self, label: &str) -> Result<usize> {
        self.periods
            .iter()
            .position(|p| p == label)
            .ok_or_else(|| Error::MissingPeriod(label.to_string()))
    }

    pub fn value(&self, row: usize, variable: usize) -> Option<f64> {
        self.rows[row].values[variable]
    }

    /// Complete-case sample over `variables` (listwise deletion).
    pub fn sample(&self, variables: &[&str]) -> Result<Sample> {
        let idx: Vec<usize> = variables
            .iter()
            .map(|v| self.variable_index(v))
            .collect::<Result<_>>()?;
        let kept: Vec<&Observation> = self
            .rows
            .iter()
            .filter(|o| idx.iter().all(|&j| o.values[j].is_some()))
            .collect();
        let mut e_map = vec![usize::MAX; self.entities.len()];
        let mut p_map = vec![usize::MAX; self.periods.len()];
        for o in &kept {
            e_map[o.entity] = 0;
            p_map[o.period] = 0;
        }
        let mut entity_labels = Vec::new();
        for (i, slot) in e_map.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = entity_labels.len();
                entity_labels.push(self.entities[i].clone());
            }
        }
        let mut period_labels = Vec::new();
        for (i, slot) in p_map.iter_mut().enumerate() {
            if *slot == 0 {
                *slot = period_labels.len();
                period_labels.push(self.periods[i].clone());
            }
        }
        let n = kept.len();
        let values = DMatrix::from_fn(n, idx.len(), |r, c| kept[r].values[idx[c]].unwrap());
        Ok(Sample {
            names: variables.iter().map(|s| s.to_string()).collect(),
            values,
            entity: kept.iter().map(|o| e_map[o.entity]).collect(),
            period: kept.iter().map(|o| p_map[o.period]).collect(),
            entity_labels,
            period_labels,
            n_dropped: self.rows.len() - n,
        })
    }
}

/// Loads a long-format CSV panel.
pub fn load_csv(path: impl AsRef<Path>, entity_column: &str, period_column: &str) -> Result<PanelDataset> {
    let file = std::fs::File::open(path)?;
    PanelDataset::read_csv(std::io::BufReader::new(file), entity_column, period_column)
}

/// Complete-case numeric sample with compact entity/period ordinals.
#[derive(Debug, Clone)]
pub struct Sample {
    pub names: Vec<String>,
    pub values: DMatrix<f64>,
    pub entity: Vec<usize>,
    pub period: Vec<usize>,
    pub entity_labels: Vec<String>,
    pub period_labels: Vec<String>,
    pub n_dropped: usize,
}

impl Sample {
    pub fn n_obs(&self) -> usize {
        self.values.nrows()
    }

    pub fn n_entities(&self) -> usize {
        self.entity_labels.len()
    }

    pub fn n_periods(&self) -> usize {
        self.period_labels.len()
    }

    pub fn is_balanced(&self) -> bool {
        self.n_obs() == self.n_entities() * self.n_periods()
    }

    pub fn column(&self, j: usize) -> DVector<f64> {
        self.values.column(j).into_owned()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum DummyKind {
    Entity,
    Period,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct DummyBlock {
    pub kind: DummyKind,
    pub columns: Range<usize>,
}

/// Least-squares-dummy-variable design for one model specification.
#[derive(Debug, Clone)]
pub struct DesignBundle {
    pub y: DVector<f64>,
    pub x: DMatrix<f64>,
    pub column_names: Vec<String>,
    pub entity_index: Vec<usize>,
    pub period_index: Vec<usize>,
    pub entity_labels: Vec<String>,
    pub period_labels: Vec<String>,
    pub dummy_blocks: Vec<DummyBlock>,
    pub n_regressors: usize,
    pub has_intercept: bool,
    pub n_dropped: usize,
}

impl DesignBundle {
    pub fn block(&self, kind: DummyKind) -> Option<&DummyBlock> {
        self.dummy_blocks.iter().find(|b| b.kind == kind)
    }

    /// Column range holding the slope regressors.
    pub fn regressor_columns(&self) -> Range<usize> {
        let start = usize::from(self.has_intercept);
        start..start + self.n_regressors
    }
}

pub fn entity_dummy_name(label: &str) -> String {
    format!("DR[{label}]")
}

pub fn period_dummy_name(label: &str) -> String {
    format!("DT[{label}]")
}

/// `[intercept | regressors | entity dummies 2..E | period dummies 2..T]`.
///
/// The first entity and first period (sorted order) are the omitted baselines.
/// Without an intercept every entity gets its own dummy.
pub fn build_lsdv_design(data: &PanelDataset, spec: &ModelSpec) -> Result<DesignBundle> {
    spec.validate()?;
    let mut vars: Vec<&str> = vec![spec.dependent.as_str()];
    vars.extend(spec.regressors.iter().map(String::as_str));
    let sample = data.sample(&vars)?;
    check_regressors_vary(&sample, 1)?;
    Ok(design_from_sample(&sample, spec.effects, spec.intercept))
}

pub(crate) fn check_regressors_vary(sample: &Sample, first: usize) -> Result<()> {
    for j in first..sample.values.ncols() {
        let col = sample.values.column(j);
        if let Some(&v0) = col.iter().next() {
            if col.iter().all(|&v| v == v0) {
                return Err(Error::ConstantRegressor(sample.names[j].clone()));
            }
        }
    }
    Ok(())
}

/// Builds the dummy design from a sample whose first column is the response.
pub(crate) fn design_from_sample(sample: &Sample, effects: Effects, intercept: bool) -> DesignBundle {
    let n = sample.n_obs();
    let k = sample.values.ncols() - 1;
    let n_e = sample.n_entities();
    let n_t = sample.n_periods();
    let entity_dummies = match (effects.has_entity(), intercept) {
        (false, _) => 0,
        (true, true) => n_e.saturating_sub(1),
        (true, false) => n_e,
    };
    let entity_skip = n_e - entity_dummies;
    let period_dummies = if effects.has_time() {
        if intercept || effects.has_entity() {
            n_t.saturating_sub(1)
        } else {
            n_t
        }
    } else {
        0
    };
    let period_skip = n_t - period_dummies;
    let lead = usize::from(intercept);
    let cols = lead + k + entity_dummies + period_dummies;
    let mut x = DMatrix::zeros(n, cols);
    let mut names = Vec::with_capacity(cols);
    if intercept {
        x.column_mut(0).fill(1.0);
        names.push(crate::estimators::INTERCEPT.to_string());
    }
    for j in 0..k {
        x.set_column(lead + j, &sample.values.column(j + 1));
        names.push(sample.names[j + 1].clone());
    }
    let e_start = lead + k;
    let p_start = e_start + entity_dummies;
    for r in 0..n {
        let e = sample.entity[r];
        if e >= entity_skip && entity_dummies > 0 {
            x[(r, e_start + e - entity_skip)] = 1.0;
        }
        let t = sample.period[r];
        if t >= period_skip && period_dummies > 0 {
            x[(r, p_start + t - period_skip)] = 1.0;
        }
    }
    for label in &sample.entity_labels[entity_skip..] {
        names.push(entity_dummy_name(label));
    }
    for label in &sample.period_labels[period_skip..] {
        names.push(period_dummy_name(label));
    }
    let mut dummy_blocks = Vec::new();
    if entity_dummies > 0 {
        dummy_blocks.push(DummyBlock {
            kind: DummyKind::Entity,
            columns: e_start..p_start,
        });
    }
    if period_dummies > 0 {
        dummy_blocks.push(DummyBlock {
            kind: DummyKind::Period,
            columns: p_start..cols,
        });
    }
    DesignBundle {
        y: sample.column(0),
        x,
        column_names: names,
        entity_index: sample.entity.clone(),
        period_index: sample.period.clone(),
        entity_labels: sample.entity_labels.clone(),
        period_labels: sample.period_labels.clone(),
        dummy_blocks,
        n_regressors: k,
        has_intercept: intercept,
        n_dropped: sample.n_dropped,
    }
}

fn group_means(values: &DVector<f64>, group: &[usize], n_groups: usize) -> Vec<f64> {
    let mut sum = vec![0.0; n_groups];
    let mut count = vec![0usize; n_groups];
    for (v, &g) in values.iter().zip(group) {
        sum[g] += v;
        count[g] += 1;
    }
    sum.iter()
        .zip(&count)
        .map(|(s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect()
}

/// Removes the fixed effects in `effects` from one column.
///
/// Balanced two-way panels use x − x̄ᵢ − x̄ₜ + x̄; unbalanced two-way panels use
/// alternating entity/time demeaning.
pub fn demean(
    values: &DVector<f64>,
    entity: &[usize],
    n_entities: usize,
    period: &[usize],
    n_periods: usize,
    effects: Effects,
) -> DVector<f64> {
    match effects {
        Effects::None => values.clone(),
        Effects::Entity => {
            let m = group_means(values, entity, n_entities);
            DVector::from_iterator(values.len(), values.iter().zip(entity).map(|(v, &g)| v - m[g]))
        }
        Effects::Time => {
            let m = group_means(values, period, n_periods);
            DVector::from_iterator(values.len(), values.iter().zip(period).map(|(v, &g)| v - m[g]))
        }
        Effects::TwoWay => {
            if values.len() == n_entities * n_periods {
                let me = group_means(values, entity, n_entities);
                let mt = group_means(values, period, n_periods);
                let grand = values.mean();
                DVector::from_iterator(
                    values.len(),
                    values
                        .iter()
                        .zip(entity.iter().zip(period))
                        .map(|(v, (&e, &t))| v - me[e] - mt[t] + grand),
                )
            } else {
                alternating_demean(values, entity, n_entities, period, n_periods)
            }
        }
    }
}

fn alternating_demean(
    values: &DVector<f64>,
    entity: &[usize],
    n_entities: usize,
    period: &[usize],
    n_periods: usize,
) -> DVector<f64> {
    let scale = values.amax().max(1.0);
    let mut cur = values.clone();
    for _ in 0..MAX_DEMEAN_ITERATIONS {
        let me = group_means(&cur, entity, n_entities);
        let mut next = cur.clone();
        for (v, &e) in next.iter_mut().zip(entity) {
            *v -= me[e];
        }
        let mt = group_means(&next, period, n_periods);
        for (v, &t) in next.iter_mut().zip(period) {
            *v -= mt[t];
        }
        let change = (&next - &cur).amax();
        cur = next;
        if change < DEMEAN_TOLERANCE * scale {
            break;
        }
    }
    cur
}

/// Two-way within transformation of `variables`, on their complete-case rows.
pub fn within_transform(data: &PanelDataset, variables: &[&str]) -> Result<PanelDataset> {
    if variables.is_empty() {
        return Err(Error::InvalidArgument("within_transform needs at least one variable".into()));
    }
    let sample = data.sample(variables)?;
    let columns: Vec<DVector<f64>> = (0..variables.len())
        .map(|j| {
            demean(
                &sample.column(j),
                &sample.entity,
                sample.n_entities(),
                &sample.period,
                sample.n_periods(),
                Effects::TwoWay,
            )
        })
        .collect();
    let records = (0..sample.n_obs())
        .map(|r| Record {
            entity: sample.entity_labels[sample.entity[r]].clone(),
            period: sample.period_labels[sample.period[r]].clone(),
            values: columns.iter().map(|c| Some(c[r])).collect(),
        })
        .collect();
    PanelDataset::from_records(variables.iter().map(|v| v.to_string()).collect(), records)
}

/// Orders labels the way periods are ordered in a dataset.
pub fn compare_period_labels(a: &str, b: &str) -> Ordering {
    match (a.trim().parse::<i64>(), b.trim().parse::<i64>()) {
        (Ok(x), Ok(y)) => x.cmp(&y),
        _ => a.cmp(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::CovarianceKind;
    use crate::numerics::solve_least_squares;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn grid(n_e: usize, n_t: usize, mut f: impl FnMut(usize, usize) -> Vec<Option<f64>>, vars: &[&str]) -> PanelDataset {
        let mut records = Vec::new();
        for e in 0..n_e {
            for t in 0..n_t {
                records.push(Record {
                    entity: format!("E{e:02}"),
                    period: format!("{}", 2008 + t),
                    values: f(e, t),
                });
            }
        }
        PanelDataset::from_records(vars.iter().map(|s| s.to_string()).collect(), records).unwrap()
    }

    fn spec(dep: &str, regs: &[&str], effects: Effects) -> ModelSpec {
        ModelSpec {
            dependent: dep.into(),
            regressors: regs.iter().map(|s| s.to_string()).collect(),
            effects,
            covariance: CovarianceKind::Classical,
            intercept: true,
        }
    }

    #[test]
    fn reads_balanced_28_by_12() {
        let mut text = String::from("district,year,PRP,Empl\n");
        for e in 0..28 {
            for y in 2008..2020 {
                text.push_str(&format!("D{e},{y},{},{}\n", 30.0 + e as f64, 100 + y - 2000));
            }
        }
        let d = PanelDataset::read_csv(text.as_bytes(), "district", "year").unwrap();
        assert!(d.is_balanced());
        assert_eq!(d.n_rows(), 336);
        assert_eq!(d.periods()[0], "2008");
        assert_eq!(d.variables(), &["PRP".to_string(), "Empl".to_string()]);
    }

    #[test]
    fn duplicate_key_is_named() {
        let text = "district,year,PRP\nRazgrad,2019,48.8\nRazgrad,2019,47\n";
        match PanelDataset::read_csv(text.as_bytes(), "district", "year") {
            Err(Error::DuplicateKey { entity, period }) => {
                assert_eq!(entity, "Razgrad");
                assert_eq!(period, "2019");
            }
            other => panic!("expected duplicate key, got {other:?}"),
        }
    }

    #[test]
    fn missing_row_unbalances() {
        let mut text = String::from("district,year,PRP\n");
        for e in 0..28 {
            for y in 2008..2020 {
                if e == 21 && y == 2015 {
                    continue;
                }
                text.push_str(&format!("D{e:02},{y},1.5\n"));
            }
        }
        let d = PanelDataset::read_csv(text.as_bytes(), "district", "year").unwrap();
        assert!(!d.is_balanced());
        assert_eq!(d.n_rows(), 335);
    }

    #[test]
    fn bad_cell_and_missing_column() {
        let text = "district,year,PRP\nA,2008,1.0\nA,2009,abc\n";
        match PanelDataset::read_csv(text.as_bytes(), "district", "year") {
            Err(Error::BadCell { row, column, .. }) => {
                assert_eq!(row, 3);
                assert_eq!(column, "PRP");
            }
            other => panic!("{other:?}"),
        }
        let text = "district,PRP\nA,1.0\n";
        assert!(matches!(
            PanelDataset::read_csv(text.as_bytes(), "district", "year"),
            Err(Error::MissingColumn(c)) if c == "year"
        ));
    }

    #[test]
    fn empty_cell_is_missing_not_zero() {
        let text = "district,year,PRP,Empl\nA,2008,,3\nA,2009,2,4\n";
        let d = PanelDataset::read_csv(text.as_bytes(), "district", "year").unwrap();
        assert_eq!(d.value(0, 0), None);
        assert_eq!(d.value(0, 1), Some(3.0));
        let s = d.sample(&["PRP", "Empl"]).unwrap();
        assert_eq!(s.n_obs(), 1);
        assert_eq!(s.n_dropped, 1);
    }

    #[test]
    fn periods_sort_numerically() {
        let text = "id,t,v\nA,10,1\nA,9,2\nA,100,3\n";
        let d = PanelDataset::read_csv(text.as_bytes(), "id", "t").unwrap();
        assert_eq!(d.periods(), &["9", "10", "100"]);
        let text = "id,t,v\nA,b,1\nA,a,2\n";
        let d = PanelDataset::read_csv(text.as_bytes(), "id", "t").unwrap();
        assert_eq!(d.periods(), &["a", "b"]);
    }

    #[test]
    fn lsdv_column_count_28_by_12() {
        let d = grid(28, 12, |e, t| vec![Some(e as f64), Some((e * t) as f64 + t as f64 * 0.5)], &["y", "x"]);
        let b = build_lsdv_design(&d, &spec("y", &["x"], Effects::TwoWay)).unwrap();
        assert_eq!(b.x.ncols(), 40);
        assert_eq!(b.block(DummyKind::Entity).unwrap().columns, 2..29);
        assert_eq!(b.block(DummyKind::Period).unwrap().columns, 29..40);
        assert_eq!(b.column_names[2], "DR[E01]");
        assert_eq!(b.column_names[29], "DT[2009]");
    }

    #[test]
    fn lsdv_degenerate_panel() {
        let records = vec![
            Record { entity: "A".into(), period: "1".into(), values: vec![Some(1.0), Some(2.0)] },
        ];
        let d = PanelDataset::from_records(vec!["y".into(), "x".into()], records).unwrap();
        // a single row makes x constant; build directly from the sample
        let s = d.sample(&["y", "x"]).unwrap();
        let b = design_from_sample(&s, Effects::TwoWay, true);
        assert_eq!(b.x.ncols(), 2);
        assert!(b.dummy_blocks.is_empty());
    }

    #[test]
    fn lsdv_dummies_match_enumeration() {
        let d = grid(3, 2, |e, t| vec![Some(1.0), Some((e * 2 + t) as f64)], &["y", "x"]);
        let b = build_lsdv_design(&d, &spec("y", &["x"], Effects::TwoWay)).unwrap();
        // columns: const, x, DR[E01], DR[E02], DT[2009]
        assert_eq!(b.x.ncols(), 5);
        for r in 0..6 {
            let (e, t) = (r / 2, r % 2);
            assert_eq!(b.x[(r, 2)], if e == 1 { 1.0 } else { 0.0 });
            assert_eq!(b.x[(r, 3)], if e == 2 { 1.0 } else { 0.0 });
            assert_eq!(b.x[(r, 4)], if t == 1 { 1.0 } else { 0.0 });
        }
    }

    #[test]
    fn constant_regressor_reported() {
        let d = grid(3, 3, |e, _| vec![Some(e as f64), Some(7.0)], &["y", "x"]);
        assert!(matches!(
            build_lsdv_design(&d, &spec("y", &["x"], Effects::TwoWay)),
            Err(Error::ConstantRegressor(v)) if v == "x"
        ));
    }

    #[test]
    fn within_annihilates_constants_and_entity_levels() {
        let d = grid(4, 3, |e, _| vec![Some(5.0), Some(e as f64 * 3.0)], &["c", "a"]);
        let w = within_transform(&d, &["c", "a"]).unwrap();
        for r in 0..w.n_rows() {
            assert!(w.value(r, 0).unwrap().abs() < 1e-12);
            assert!(w.value(r, 1).unwrap().abs() < 1e-12);
        }
        assert!(within_transform(&d, &[]).is_err());
    }

    #[test]
    fn within_matches_dummy_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let d = grid(4, 3, |_, _| vec![Some(rng.random_range(-2.0..2.0))], &["v"]);
        let w = within_transform(&d, &["v"]).unwrap();
        // regress v on a full entity + time dummy set
        let s = d.sample(&["v"]).unwrap();
        let mut x = DMatrix::zeros(12, 4 + 3);
        for r in 0..12 {
            x[(r, s.entity[r])] = 1.0;
            x[(r, 4 + s.period[r])] = 1.0;
        }
        let sol = solve_least_squares(&x, &s.column(0)).unwrap();
        for r in 0..12 {
            assert!((w.value(r, 0).unwrap() - sol.residuals[r]).abs() < 1e-9);
        }
    }

    #[test]
    fn unbalanced_alternating_matches_projection() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let mut records = Vec::new();
        for e in 0..5 {
            for t in 0..4 {
                if (e + t) % 4 == 3 && e > 0 {
                    continue;
                }
                records.push(Record {
                    entity: format!("E{e}"),
                    period: format!("{t}"),
                    values: vec![Some(rng.random_range(-1.0..1.0))],
                });
            }
        }
        let d = PanelDataset::from_records(vec!["v".into()], records).unwrap();
        assert!(!d.is_balanced());
        let w = within_transform(&d, &["v"]).unwrap();
        let s = d.sample(&["v"]).unwrap();
        let n = s.n_obs();
        let mut x = DMatrix::zeros(n, 5 + 4);
        for r in 0..n {
            x[(r, s.entity[r])] = 1.0;
            x[(r, 5 + s.period[r])] = 1.0;
        }
        let sol = solve_least_squares(&x, &s.column(0)).unwrap();
        for r in 0..n {
            assert!((w.value(r, 0).unwrap() - sol.residuals[r]).abs() < 1e-8);
        }
    }

    proptest::proptest! {
        #[test]
        fn within_means_vanish(seed in 0u64..500, n_e in 2usize..8, n_t in 2usize..7) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = grid(n_e, n_t, |_, _| vec![Some(rng.random_range(-100.0..100.0))], &["v"]);
            let w = within_transform(&d, &["v"]).unwrap();
            let s = w.sample(&["v"]).unwrap();
            let col = s.column(0);
            for m in group_means(&col, &s.entity, n_e) {
                proptest::prop_assert!(m.abs() < 1e-10);
            }
            for m in group_means(&col, &s.period, n_t) {
                proptest::prop_assert!(m.abs() < 1e-10);
            }
        }

        #[test]
        fn csv_round_trip(seed in 0u64..500) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = grid(3, 4, |_, _| {
                let v: f64 = rng.random_range(-1e6..1e6);
                let digits = rng.random_range(0..10);
                let s = format!("{v:.digits$}");
                vec![Some(s.parse().unwrap()), if rng.random_bool(0.2) { None } else { Some(v) }]
            }, &["a", "b"]);
            let mut buf = Vec::new();
            d.write_csv(&mut buf, "id", "year").unwrap();
            let back = PanelDataset::read_csv(buf.as_slice(), "id", "year").unwrap();
            proptest::prop_assert_eq!(back, d);
        }
    }
}
