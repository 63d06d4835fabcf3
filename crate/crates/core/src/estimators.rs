//! Pooled OLS, two-way fixed effects and Swamy–Arora random effects.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::{classical_covariance, cluster_robust_covariance};
use crate::numerics::{solve_least_squares, LeastSquaresSolution, RANK_TOLERANCE};
use crate::panel::{check_regressors_vary, demean, design_from_sample, DummyBlock, PanelDataset, Sample};

/// Name given to the intercept coefficient.
pub const INTERCEPT: &str = "const";

/// A regressor whose demeaned norm falls below this fraction of its raw norm
/// has no usable within variation.
const WITHIN_VARIATION_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Effects {
    None,
    Entity,
    Time,
    #[serde(rename = "twoway")]
    TwoWay,
}

impl Effects {
    pub fn has_entity(self) -> bool {
        matches!(self, Effects::Entity | Effects::TwoWay)
    }

    pub fn has_time(self) -> bool {
        matches!(self, Effects::Time | Effects::TwoWay)
    }
}

impl FromStr for Effects {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Effects::None),
            "entity" => Ok(Effects::Entity),
            "time" => Ok(Effects::Time),
            "twoway" => Ok(Effects::TwoWay),
            other => Err(Error::InvalidArgument(format!("unknown effects '{other}'"))),
        }
    }
}

impl fmt::Display for Effects {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Effects::None => "none",
            Effects::Entity => "entity",
            Effects::Time => "time",
            Effects::TwoWay => "twoway",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    Classical,
    ClusterEntity,
}

impl CovarianceKind {
    pub fn is_robust(self) -> bool {
        self == CovarianceKind::ClusterEntity
    }
}

impl FromStr for CovarianceKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical" => Ok(CovarianceKind::Classical),
            "cluster" | "cluster_entity" => Ok(CovarianceKind::ClusterEntity),
            other => Err(Error::InvalidArgument(format!("unknown covariance '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub dependent: String,
    pub regressors: Vec<String>,
    pub effects: Effects,
    pub covariance: CovarianceKind,
    #[serde(default = "default_true")]
    pub intercept: bool,
}

fn default_true() -> bool {
    true
}

impl ModelSpec {
    pub fn new(dependent: &str, regressors: &[&str], effects: Effects, covariance: CovarianceKind) -> Self {
        Self {
            dependent: dependent.to_string(),
            regressors: regressors.iter().map(|s| s.to_string()).collect(),
            effects,
            covariance,
            intercept: true,
        }
    }

    pub fn with_regressors(&self, regressors: Vec<String>) -> Self {
        Self {
            regressors,
            ..self.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.regressors.is_empty() {
            return Err(Error::InvalidArgument("at least one regressor is required".into()));
        }
        for (i, r) in self.regressors.iter().enumerate() {
            if *r == self.dependent {
                return Err(Error::InvalidArgument(format!(
                    "dependent variable '{r}' is also a regressor"
                )));
            }
            if self.regressors[..i].contains(r) {
                return Err(Error::InvalidArgument(format!("regressor '{r}' listed twice")));
            }
        }
        Ok(())
    }

    fn variables(&self) -> Vec<&str> {
        std::iter::once(self.dependent.as_str())
            .chain(self.regressors.iter().map(String::as_str))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EstimatorKind {
    Pooled,
    FeLsdv,
    FeWithin,
    Re,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeMethod {
    Lsdv,
    Within,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VarianceComponents {
    pub sigma2_idiosyncratic: f64,
    pub sigma2_entity: f64,
    pub theta: f64,
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub spec: ModelSpec,
    pub kind: EstimatorKind,
    pub coefficient_names: Vec<String>,
    pub coefficients: DVector<f64>,
    /// Covariance of `coefficients`, of the type requested in `spec`.
    pub covariance: DMatrix<f64>,
    /// Residuals of the regression that produced `coefficients` (quasi-demeaned for RE).
    pub residuals: DVector<f64>,
    pub rss: f64,
    pub r_squared_overall: f64,
    pub r_squared_within: f64,
    pub n_obs: usize,
    pub dof_residual: usize,
    pub n_entities: usize,
    pub n_periods: usize,
    /// Regressor matrix aligned with `residuals`, used by the sandwich estimators.
    pub design: DMatrix<f64>,
    pub xtx_inverse: DMatrix<f64>,
    pub entity_index: Vec<usize>,
    pub period_index: Vec<usize>,
    pub entity_labels: Vec<String>,
    pub period_labels: Vec<String>,
    pub dummy_blocks: Vec<DummyBlock>,
    pub variance_components: Option<VarianceComponents>,
    pub n_dropped: usize,
    pub warnings: Vec<String>,
}

impl FitResult {
    pub fn index_of(&self, name: &str) -> Result<usize> {
        self.coefficient_names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| Error::UnknownCoefficient(name.to_string()))
    }

    pub fn coefficient(&self, name: &str) -> Result<f64> {
        Ok(self.coefficients[self.index_of(name)?])
    }

    pub fn std_error(&self, name: &str) -> Result<f64> {
        let i = self.index_of(name)?;
        Ok(self.covariance[(i, i)].max(0.0).sqrt())
    }

    /// Parameter count implied by the residual degrees of freedom, absorbed effects included.
    pub fn n_params(&self) -> usize {
        self.n_obs - self.dof_residual
    }

    /// Names of the coefficients in one dummy block.
    pub fn block_names(&self, kind: crate::panel::DummyKind) -> Vec<&str> {
        self.dummy_blocks
            .iter()
            .filter(|b| b.kind == kind)
            .flat_map(|b| self.coefficient_names[b.columns.clone()].iter().map(String::as_str))
            .collect()
    }

    fn attach_covariance(mut self) -> Result<Self> {
        self.covariance = match self.spec.covariance {
            CovarianceKind::Classical => classical_covariance(&self)?,
            CovarianceKind::ClusterEntity => {
                cluster_robust_covariance(&self, &self.entity_index, self.n_entities)?
            }
        };
        Ok(self)
    }
}

fn r_squared(rss: f64, tss: f64) -> f64 {
    if tss <= 0.0 {
        0.0
    } else {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    }
}

fn centered_ss(y: &DVector<f64>) -> f64 {
    let m = y.mean();
    y.iter().map(|v| (v - m) * (v - m)).sum()
}

fn regressors_matrix(sample: &Sample) -> DMatrix<f64> {
    sample.values.columns(1, sample.values.ncols() - 1).into_owned()
}

fn demean_sample(sample: &Sample, values: &DVector<f64>, effects: Effects) -> DVector<f64> {
    demean(
        values,
        &sample.entity,
        sample.n_entities(),
        &sample.period,
        sample.n_periods(),
        effects,
    )
}

/// Number of parameters absorbed by the dummy structure, intercept included.
fn absorbed_parameters(sample: &Sample, effects: Effects) -> usize {
    match effects {
        Effects::None => 1,
        Effects::Entity => sample.n_entities(),
        Effects::Time => sample.n_periods(),
        Effects::TwoWay => {
            sample.n_entities() + sample.n_periods() - connected_components(sample)
        }
    }
}

/// Components of the bipartite entity–period graph; 1 for any balanced panel.
fn connected_components(sample: &Sample) -> usize {
    let n_e = sample.n_entities();
    let mut parent: Vec<usize> = (0..n_e + sample.n_periods()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    for (&e, &t) in sample.entity.iter().zip(&sample.period) {
        let a = find(&mut parent, e);
        let b = find(&mut parent, n_e + t);
        if a != b {
            parent[a] = b;
        }
    }
    (0..parent.len()).filter(|&i| find(&mut parent, i) == i).count()
}

fn matrix_rank(m: &DMatrix<f64>) -> usize {
    let sv = m.clone().svd(false, false).singular_values;
    let largest = sv.iter().cloned().fold(0.0, f64::max);
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * largest && s > 0.0).count()
}

/// Names the first regressor that carries no new information once the
/// effects are absorbed.
fn check_identification(sample: &Sample, demeaned: &DMatrix<f64>, effects: Effects) -> Result<()> {
    let k = demeaned.ncols();
    for j in 0..k {
        let raw = sample.values.column(j + 1).norm();
        if demeaned.column(j).norm() <= WITHIN_VARIATION_TOLERANCE * raw.max(f64::MIN_POSITIVE) {
            return Err(Error::Collinear {
                variable: sample.names[j + 1].clone(),
                reason: format!("no variation left after absorbing {effects} effects"),
            });
        }
    }
    if matrix_rank(demeaned) == k {
        return Ok(());
    }
    for j in 2..=k {
        if matrix_rank(&demeaned.columns(0, j).into_owned()) < j {
            return Err(Error::Collinear {
                variable: sample.names[j].clone(),
                reason: "linearly dependent on earlier regressors after absorbing effects".into(),
            });
        }
    }
    unreachable!("rank deficiency must be attributable to some prefix")
}

/// Ordinary least squares on `[intercept | regressors]`, ignoring the panel structure.
pub fn fit_pooled(data: &PanelDataset, spec: &ModelSpec) -> Result<FitResult> {
    spec.validate()?;
    if spec.effects != Effects::None {
        return Err(Error::InvalidArgument("pooled OLS requires effects = none".into()));
    }
    let sample = data.sample(&spec.variables())?;
    let bundle = design_from_sample(&sample, Effects::None, spec.intercept);
    let n = bundle.x.nrows();
    let p = bundle.x.ncols();
    if n < p {
        return Err(Error::InsufficientObservations { n_obs: n, n_params: p });
    }
    let sol = solve_least_squares(&bundle.x, &bundle.y)?;
    let tss = if spec.intercept {
        centered_ss(&bundle.y)
    } else {
        bundle.y.norm_squared()
    };
    let resid_within = demean_sample(&sample, &sol.residuals, Effects::Entity);
    let y_within = demean_sample(&sample, &bundle.y, Effects::Entity);
    let fit = FitResult {
        spec: spec.clone(),
        kind: EstimatorKind::Pooled,
        coefficient_names: bundle.column_names,
        coefficients: sol.coefficients,
        covariance: DMatrix::zeros(p, p),
        rss: sol.rss,
        r_squared_overall: r_squared(sol.rss, tss),
        r_squared_within: r_squared(resid_within.norm_squared(), y_within.norm_squared()),
        residuals: sol.residuals,
        n_obs: n,
        dof_residual: n - p,
        n_entities: sample.n_entities(),
        n_periods: sample.n_periods(),
        design: bundle.x,
        xtx_inverse: sol.xtx_inverse,
        entity_index: sample.entity.clone(),
        period_index: sample.period.clone(),
        entity_labels: sample.entity_labels.clone(),
        period_labels: sample.period_labels.clone(),
        dummy_blocks: Vec::new(),
        variance_components: None,
        n_dropped: sample.n_dropped,
        warnings: Vec::new(),
    };
    fit.attach_covariance()
}

/// Fixed-effects regression, by explicit dummies or by demeaning.
///
/// Both methods produce the same slopes, residuals and residual degrees of
/// freedom; LSDV additionally reports the intercept and every dummy coefficient.
pub fn fit_fixed_effects(data: &PanelDataset, spec: &ModelSpec, method: FeMethod) -> Result<FitResult> {
    spec.validate()?;
    if spec.effects == Effects::None {
        return Err(Error::InvalidArgument(
            "fixed effects require entity, time or twoway effects".into(),
        ));
    }
    let sample = data.sample(&spec.variables())?;
    check_regressors_vary(&sample, 1)?;
    let k = spec.regressors.len();
    let n = sample.n_obs();

    let y = sample.column(0);
    let y_within = demean_sample(&sample, &y, spec.effects);
    let raw_x = regressors_matrix(&sample);
    let mut x_within = DMatrix::zeros(n, k);
    for j in 0..k {
        x_within.set_column(j, &demean_sample(&sample, &raw_x.column(j).into_owned(), spec.effects));
    }
    check_identification(&sample, &x_within, spec.effects)?;

    let absorbed = absorbed_parameters(&sample, spec.effects);
    let n_params = absorbed + k;
    if n <= n_params {
        return Err(Error::InsufficientObservations { n_obs: n, n_params });
    }
    let tss = centered_ss(&y);
    let base = |kind, names, sol: LeastSquaresSolution, design, blocks, dof| FitResult {
        spec: spec.clone(),
        kind,
        coefficient_names: names,
        covariance: DMatrix::zeros(sol.coefficients.len(), sol.coefficients.len()),
        coefficients: sol.coefficients,
        r_squared_overall: r_squared(sol.rss, tss),
        r_squared_within: r_squared(sol.rss, y_within.norm_squared()),
        rss: sol.rss,
        residuals: sol.residuals,
        n_obs: n,
        dof_residual: dof,
        n_entities: sample.n_entities(),
        n_periods: sample.n_periods(),
        design,
        xtx_inverse: sol.xtx_inverse,
        entity_index: sample.entity.clone(),
        period_index: sample.period.clone(),
        entity_labels: sample.entity_labels.clone(),
        period_labels: sample.period_labels.clone(),
        dummy_blocks: blocks,
        variance_components: None,
        n_dropped: sample.n_dropped,
        warnings: Vec::new(),
    };

    let fit = match method {
        FeMethod::Within => {
            let sol = solve_least_squares(&x_within, &y_within)?;
            base(
                EstimatorKind::FeWithin,
                spec.regressors.clone(),
                sol,
                x_within,
                Vec::new(),
                n - n_params,
            )
        }
        FeMethod::Lsdv => {
            let bundle = design_from_sample(&sample, spec.effects, spec.intercept);
            let sol = solve_least_squares(&bundle.x, &bundle.y)?;
            let dof = n - sol.rank;
            base(
                EstimatorKind::FeLsdv,
                bundle.column_names,
                sol,
                bundle.x,
                bundle.dummy_blocks,
                dof,
            )
        }
    };
    fit.attach_covariance()
}

fn entity_means(sample: &Sample, values: &DVector<f64>) -> Vec<f64> {
    let mut sum = vec![0.0; sample.n_entities()];
    let mut count = vec![0usize; sample.n_entities()];
    for (v, &e) in values.iter().zip(&sample.entity) {
        sum[e] += v;
        count[e] += 1;
    }
    sum.iter().zip(count).map(|(s, c)| s / c as f64).collect()
}

/// Swamy–Arora random effects on a balanced panel.
///
/// `effects = entity` treats entity intercepts as random; `effects = twoway`
/// additionally enters period dummies as fixed regressors.
pub fn fit_random_effects(data: &PanelDataset, spec: &ModelSpec) -> Result<FitResult> {
    spec.validate()?;
    if !spec.effects.has_entity() {
        return Err(Error::InvalidArgument(
            "random effects require entity or twoway effects".into(),
        ));
    }
    let sample = data.sample(&spec.variables())?;
    if !sample.is_balanced() {
        return Err(Error::Unsupported(
            "random effects need a balanced panel after listwise deletion".into(),
        ));
    }
    check_regressors_vary(&sample, 1)?;
    let n = sample.n_obs();
    let n_e = sample.n_entities();
    let n_t = sample.n_periods();
    let k = spec.regressors.len();
    let fixed = if spec.effects == Effects::TwoWay {
        Effects::Time
    } else {
        Effects::None
    };
    let bundle = design_from_sample(&sample, fixed, spec.intercept);
    let p = bundle.x.ncols();
    let lead = usize::from(spec.intercept);
    let y = bundle.y.clone();

    // within (entity-demeaned) regression for the idiosyncratic variance
    let varying: Vec<usize> = (lead..p).collect();
    let mut x_w = DMatrix::zeros(n, varying.len());
    for (c, &j) in varying.iter().enumerate() {
        x_w.set_column(c, &demean_sample(&sample, &bundle.x.column(j).into_owned(), Effects::Entity));
    }
    let x_w_slopes = x_w.columns(0, k).into_owned();
    check_identification(&sample, &x_w_slopes, Effects::Entity)?;
    let y_w = demean_sample(&sample, &y, Effects::Entity);
    let within = solve_least_squares(&x_w, &y_w)?;
    let dof_w = n.checked_sub(n_e + within.rank).filter(|&d| d > 0).ok_or(
        Error::InsufficientObservations {
            n_obs: n,
            n_params: n_e + within.rank,
        },
    )?;
    let sigma2_e = within.rss / dof_w as f64;

    // between regression on entity means; period dummies have constant means
    let y_bar = entity_means(&sample, &y);
    let mut x_b = DMatrix::zeros(n_e, lead + k);
    if spec.intercept {
        x_b.column_mut(0).fill(1.0);
    }
    for j in 0..k {
        let m = entity_means(&sample, &bundle.x.column(lead + j).into_owned());
        for (e, v) in m.into_iter().enumerate() {
            x_b[(e, lead + j)] = v;
        }
    }
    if n_e <= lead + k {
        return Err(Error::InsufficientObservations {
            n_obs: n_e,
            n_params: lead + k,
        });
    }
    let between = solve_least_squares(&x_b, &DVector::from_vec(y_bar.clone()))?;
    let sigma2_between = between.rss / (n_e - between.rank) as f64;
    let mut warnings = Vec::new();
    let mut sigma2_a = sigma2_between - sigma2_e / n_t as f64;
    if sigma2_a < 0.0 {
        warnings.push(format!(
            "negative entity variance estimate {sigma2_a:.6e} truncated to zero"
        ));
        sigma2_a = 0.0;
    }
    let denom = sigma2_e + n_t as f64 * sigma2_a;
    let theta = if denom > 0.0 {
        1.0 - (sigma2_e / denom).sqrt()
    } else {
        0.0
    };

    // quasi-demeaned GLS
    let mut x_star = bundle.x.clone();
    for j in 0..p {
        let m = entity_means(&sample, &bundle.x.column(j).into_owned());
        for r in 0..n {
            x_star[(r, j)] -= theta * m[sample.entity[r]];
        }
    }
    let y_star = DVector::from_iterator(
        n,
        (0..n).map(|r| y[r] - theta * y_bar[sample.entity[r]]),
    );
    let sol = solve_least_squares(&x_star, &y_star)?;
    let raw_resid = &y - &bundle.x * &sol.coefficients;
    let tss = if spec.intercept { centered_ss(&y) } else { y.norm_squared() };
    let r2_overall = r_squared(raw_resid.norm_squared(), tss);
    let r2_within = r_squared(
        demean_sample(&sample, &raw_resid, Effects::Entity).norm_squared(),
        y_w.norm_squared(),
    );
    let fit = FitResult {
        spec: spec.clone(),
        kind: EstimatorKind::Re,
        coefficient_names: bundle.column_names,
        covariance: DMatrix::zeros(p, p),
        coefficients: sol.coefficients,
        rss: sol.rss,
        residuals: sol.residuals,
        r_squared_overall: r2_overall,
        r_squared_within: r2_within,
        n_obs: n,
        dof_residual: n - sol.rank,
        n_entities: n_e,
        n_periods: n_t,
        design: x_star,
        xtx_inverse: sol.xtx_inverse,
        entity_index: sample.entity.clone(),
        period_index: sample.period.clone(),
        entity_labels: sample.entity_labels.clone(),
        period_labels: sample.period_labels.clone(),
        dummy_blocks: bundle.dummy_blocks,
        variance_components: Some(VarianceComponents {
            sigma2_idiosyncratic: sigma2_e,
            sigma2_entity: sigma2_a,
            theta,
        }),
        n_dropped: sample.n_dropped,
        warnings,
    };
    fit.attach_covariance()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::panel::Record;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn panel(n_e: usize, n_t: usize, vars: &[&str], mut f: impl FnMut(usize, usize) -> Vec<f64>) -> PanelDataset {
        let mut records = Vec::new();
        for e in 0..n_e {
            for t in 0..n_t {
                records.push(Record {
                    entity: format!("E{e:02}"),
                    period: format!("{t}"),
                    values: f(e, t).into_iter().map(Some).collect(),
                });
            }
        }
        PanelDataset::from_records(vars.iter().map(|s| s.to_string()).collect(), records).unwrap()
    }

    fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        (x.transpose() * x).try_inverse().unwrap() * (x.transpose() * y)
    }

    #[test]
    fn pooled_perfect_fit() {
        let d = panel(3, 4, &["y", "x"], |e, t| {
            let x = (e * 4 + t) as f64 * 0.7 + 1.0;
            vec![x, x]
        });
        let spec = ModelSpec::new("y", &["x"], Effects::None, CovarianceKind::Classical);
        let f = fit_pooled(&d, &spec).unwrap();
        assert!((f.coefficient("x").unwrap() - 1.0).abs() < 1e-12);
        assert!(f.coefficient(INTERCEPT).unwrap().abs() < 1e-12);
        assert!((f.r_squared_overall - 1.0).abs() < 1e-12);
    }

    #[test]
    fn pooled_constant_response() {
        let d = panel(3, 4, &["y", "x"], |e, t| vec![3.0, (e + 2 * t) as f64]);
        let spec = ModelSpec::new("y", &["x"], Effects::None, CovarianceKind::Classical);
        let f = fit_pooled(&d, &spec).unwrap();
        assert!(f.coefficient("x").unwrap().abs() < 1e-12);
        assert_eq!(f.r_squared_overall, 0.0);
        assert_eq!(f.r_squared_within, 0.0);
    }

    #[test]
    fn pooled_matches_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(50);
        let d = panel(10, 5, &["y", "a", "b"], |_, _| {
            (0..3).map(|_| rng.random_range(-2.0..2.0)).collect()
        });
        let spec = ModelSpec::new("y", &["a", "b"], Effects::None, CovarianceKind::Classical);
        let f = fit_pooled(&d, &spec).unwrap();
        let s = d.sample(&["y", "a", "b"]).unwrap();
        let mut x = DMatrix::from_element(50, 3, 1.0);
        x.set_column(1, &s.column(1));
        x.set_column(2, &s.column(2));
        let oracle = normal_equations(&x, &s.column(0));
        assert!((&f.coefficients - oracle).amax() < 1e-8);
        assert_eq!(f.dof_residual, 47);
    }

    #[test]
    fn pooled_too_few_observations() {
        let d = panel(1, 2, &["y", "a", "b"], |_, t| vec![t as f64, t as f64 * 2.0, (t * t) as f64 + 1.0]);
        let spec = ModelSpec::new("y", &["a", "b"], Effects::None, CovarianceKind::Classical);
        assert!(matches!(
            fit_pooled(&d, &spec),
            Err(Error::InsufficientObservations { .. })
        ));
    }

    fn noiseless() -> PanelDataset {
        panel(6, 4, &["y", "x"], |e, t| {
            let x = ((e * 7 + t * 3) % 5) as f64 + 0.1 * (e * t) as f64;
            let a = [0.0, 1.5, -2.0, 0.7, 3.1, -0.4][e];
            let g = [0.0, -1.0, 0.5, 2.0][t];
            vec![5.0 + 2.0 * x + a + g, x]
        })
    }

    #[test]
    fn fe_noiseless_recovery_and_methods_agree() {
        let d = noiseless();
        let spec = ModelSpec::new("y", &["x"], Effects::TwoWay, CovarianceKind::Classical);
        let lsdv = fit_fixed_effects(&d, &spec, FeMethod::Lsdv).unwrap();
        let within = fit_fixed_effects(&d, &spec, FeMethod::Within).unwrap();
        assert!((lsdv.coefficient("x").unwrap() - 2.0).abs() < 1e-10);
        assert!((within.coefficient("x").unwrap() - 2.0).abs() < 1e-10);
        assert!((&lsdv.residuals - &within.residuals).amax() < 1e-9);
        assert_eq!(lsdv.dof_residual, within.dof_residual);
        assert_eq!(lsdv.dof_residual, 24 - 1 - 5 - 3 - 1);
        assert!((lsdv.coefficient("DR[E02]").unwrap() + 2.0).abs() < 1e-9);
        assert!((lsdv.coefficient("DT[3]").unwrap() - 2.0).abs() < 1e-9);
        assert!((lsdv.coefficient(INTERCEPT).unwrap() - 5.0).abs() < 1e-9);
    }

    #[test]
    fn fe_rejects_time_invariant_regressor() {
        let d = panel(5, 4, &["y", "z"], |e, t| vec![(e + t) as f64, e as f64 * 1.3]);
        let spec = ModelSpec::new("y", &["z"], Effects::Entity, CovarianceKind::Classical);
        for m in [FeMethod::Lsdv, FeMethod::Within] {
            match fit_fixed_effects(&d, &spec, m) {
                Err(Error::Collinear { variable, .. }) => assert_eq!(variable, "z"),
                other => panic!("{other:?}"),
            }
        }
    }

    #[test]
    fn fe_names_collinear_pair() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = panel(5, 4, &["y", "a", "b"], |_, _| {
            let a: f64 = rng.random_range(-1.0..1.0);
            vec![rng.random_range(-1.0..1.0), a, 3.0 * a]
        });
        let spec = ModelSpec::new("y", &["a", "b"], Effects::TwoWay, CovarianceKind::Classical);
        match fit_fixed_effects(&d, &spec, FeMethod::Within) {
            Err(Error::Collinear { variable, .. }) => assert_eq!(variable, "b"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn fe_invariant_to_entity_shift_of_response() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let mut draws = Vec::new();
        for _ in 0..30 {
            draws.push((rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)));
        }
        let shifts = [0.0, 10.0, -4.0, 2.5, 100.0, -0.3];
        let base = panel(6, 5, &["y", "x"], |e, t| vec![draws[e * 5 + t].0, draws[e * 5 + t].1]);
        let shifted = panel(6, 5, &["y", "x"], |e, t| vec![draws[e * 5 + t].0 + shifts[e], draws[e * 5 + t].1]);
        let spec = ModelSpec::new("y", &["x"], Effects::TwoWay, CovarianceKind::Classical);
        let a = fit_fixed_effects(&base, &spec, FeMethod::Lsdv).unwrap();
        let b = fit_fixed_effects(&shifted, &spec, FeMethod::Lsdv).unwrap();
        assert!((a.coefficient("x").unwrap() - b.coefficient("x").unwrap()).abs() < 1e-8);
    }

    #[test]
    fn rescaling_regressor() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut draws = Vec::new();
        for _ in 0..40 {
            draws.push((rng.random_range(-1.0..1.0), rng.random_range(0.0..1000.0)));
        }
        let c = 1e-4;
        let a = panel(8, 5, &["y", "x"], |e, t| vec![draws[e * 5 + t].0, draws[e * 5 + t].1]);
        let b = panel(8, 5, &["y", "x"], |e, t| vec![draws[e * 5 + t].0, draws[e * 5 + t].1 * c]);
        let spec = ModelSpec::new("y", &["x"], Effects::TwoWay, CovarianceKind::Classical);
        let fa = fit_fixed_effects(&a, &spec, FeMethod::Lsdv).unwrap();
        let fb = fit_fixed_effects(&b, &spec, FeMethod::Lsdv).unwrap();
        let ratio = fb.coefficient("x").unwrap() * c / fa.coefficient("x").unwrap();
        assert!((ratio - 1.0).abs() < 1e-8);
        assert!((&fa.residuals - &fb.residuals).amax() < 1e-8);
    }

    #[test]
    fn r_squared_matches_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = panel(7, 5, &["y", "x"], |e, t| {
            let x: f64 = rng.random_range(-1.0..1.0);
            vec![1.0 + 0.5 * x + e as f64 * 0.2 + t as f64 * 0.1 + rng.sample::<f64, _>(StandardNormal), x]
        });
        let spec = ModelSpec::new("y", &["x"], Effects::TwoWay, CovarianceKind::Classical);
        let f = fit_fixed_effects(&d, &spec, FeMethod::Lsdv).unwrap();
        let y = d.sample(&["y"]).unwrap().column(0);
        let mean = y.mean();
        let tss: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        let rss = f.residuals.norm_squared();
        assert!((f.r_squared_overall - (1.0 - rss / tss)).abs() < 1e-10);
        assert!(f.r_squared_within <= f.r_squared_overall + 1e-12);
    }

    fn re_panel(seed: u64, sigma_a: f64) -> PanelDataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n_e = 28;
        let effects: Vec<f64> = (0..n_e).map(|_| sigma_a * rng.sample::<f64, _>(StandardNormal)).collect();
        panel(n_e, 12, &["y", "x"], |e, _| {
            let x: f64 = rng.sample(StandardNormal);
            let eps: f64 = rng.sample(StandardNormal);
            vec![1.0 + 0.5 * x + effects[e] + eps, x]
        })
    }

    #[test]
    fn re_without_entity_effects_is_pooled() {
        // search seeds for a sample where the entity variance truncates to zero
        let spec = ModelSpec::new("y", &["x"], Effects::Entity, CovarianceKind::Classical);
        let pooled_spec = ModelSpec::new("y", &["x"], Effects::None, CovarianceKind::Classical);
        let mut checked = 0;
        for seed in 0..40 {
            let d = re_panel(seed, 0.0);
            let re = fit_random_effects(&d, &spec).unwrap();
            let vc = re.variance_components.unwrap();
            if vc.sigma2_entity == 0.0 {
                assert_eq!(vc.theta, 0.0);
                assert!(!re.warnings.is_empty());
                let pooled = fit_pooled(&d, &pooled_spec).unwrap();
                assert!((&re.coefficients - &pooled.coefficients).amax() < 1e-6);
                checked += 1;
            } else {
                assert!(vc.theta < 0.5);
            }
        }
        assert!(checked > 5);
    }

    #[test]
    fn re_approaches_fe_with_large_entity_variance() {
        let spec = ModelSpec::new("y", &["x"], Effects::Entity, CovarianceKind::Classical);
        let mut prev_gap = f64::INFINITY;
        for sigma_a in [1.0, 10.0, 100.0] {
            let d = re_panel(3, sigma_a);
            let re = fit_random_effects(&d, &spec).unwrap();
            let fe = fit_fixed_effects(&d, &spec, FeMethod::Within).unwrap();
            let theta = re.variance_components.unwrap().theta;
            let gap = (re.coefficient("x").unwrap() - fe.coefficient("x").unwrap()).abs();
            assert!(gap <= prev_gap + 1e-12);
            prev_gap = gap;
            if sigma_a == 100.0 {
                assert!(theta > 0.99);
                assert!(gap < 1e-3);
            }
        }
    }

    #[test]
    fn re_requires_balance() {
        let mut records = Vec::new();
        for e in 0..4 {
            for t in 0..3 {
                if e == 2 && t == 1 {
                    continue;
                }
                records.push(Record {
                    entity: format!("{e}"),
                    period: format!("{t}"),
                    values: vec![Some((e * t) as f64), Some((e + t * t) as f64)],
                });
            }
        }
        let d = PanelDataset::from_records(vec!["y".into(), "x".into()], records).unwrap();
        let spec = ModelSpec::new("y", &["x"], Effects::Entity, CovarianceKind::Classical);
        assert!(matches!(fit_random_effects(&d, &spec), Err(Error::Unsupported(_))));
    }

    #[test]
    fn spec_validation() {
        let mut spec = ModelSpec::new("y", &["x", "x"], Effects::TwoWay, CovarianceKind::Classical);
        assert!(spec.validate().is_err());
        spec.regressors = vec!["y".into()];
        assert!(spec.validate().is_err());
        spec.regressors.clear();
        assert!(spec.validate().is_err());
    }
}
