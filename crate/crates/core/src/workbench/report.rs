//! Fit tables in the layout of a published panel regression table, plus the
//! structured JSON form of a fit.
//!
//! Formatting rules:
//!
//! | column            | rule                                                        |
//! |-------------------|-------------------------------------------------------------|
//! | B, SE(B)          | `d` decimals, `d = clamp(2 − ⌊log10 |B|⌋, 3, 6)` (3 sig. digits of B) |
//! | Student's test    | 3 decimals                                                  |
//! | P-value (rows)    | 3 decimals; below 0.0005 rendered `<0.000`                  |
//! | P-value (footer)  | 3 decimals                                                  |
//! | R-squared         | 2 decimals                                                  |
//! | F, Chi-square     | 1 decimal                                                   |

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    CovarianceKind, Effects, EstimatorKind, FitResult, ModelSpec, VarianceComponents, INTERCEPT,
};
use crate::inference::{
    default_dof, heteroskedastic_covariance, joint_wald_test, t_test, Distribution, TestResult,
    WaldForm,
};
use crate::numerics::{chi2_sf, f_sf, t_two_sided_p};
use crate::panel::DummyKind;

/// Per-coefficient t-tests plus the joint tests on the two dummy blocks.
#[derive(Debug, Clone, Serialize)]
pub struct FitTests {
    pub coefficients: Vec<TestResult>,
    pub entity_dummies: Option<TestResult>,
    pub period_dummies: Option<TestResult>,
}

#[derive(Debug, Clone, Copy)]
pub struct RenderOptions {
    /// Adds a line with the within R² next to the overall (LSDV) R².
    pub show_within_r_squared: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            show_within_r_squared: true,
        }
    }
}

/// Runs the tests that go into a fit table.
///
/// Entity dummies are tested with an F form over G − 1 denominator dof (robust)
/// or the residual dof (classical). Under entity clustering the sandwich is
/// singular on the entity-dummy block, so that block is tested with the
/// observation-level HC1 covariance instead. Period dummies get a chi-square
/// Wald test with the fit's own covariance.
pub fn analyze_fit(fit: &FitResult) -> Result<FitTests> {
    let cov = fit.spec.covariance;
    let dof = default_dof(fit, cov);
    let mut names: Vec<&str> = Vec::new();
    if fit.coefficient_names.iter().any(|n| n == INTERCEPT) {
        names.push(INTERCEPT);
    }
    names.extend(fit.spec.regressors.iter().map(String::as_str));
    let coefficients = names
        .iter()
        .map(|n| t_test(fit, n, &fit.covariance, dof))
        .collect::<Result<Vec<_>>>()?;

    let entity_names = fit.block_names(DummyKind::Entity);
    let entity_dummies = if entity_names.is_empty() {
        None
    } else {
        let (v, detail) = match cov {
            CovarianceKind::ClusterEntity => (
                heteroskedastic_covariance(fit)?,
                "robust (HC1) covariance; entity-clustered covariance is singular on this block",
            ),
            CovarianceKind::Classical => (fit.covariance.clone(), "classical covariance"),
        };
        let mut t = joint_wald_test(fit, &entity_names, &v, WaldForm::F { denominator_dof: dof })?;
        t.name = "entity_dummies".into();
        t.detail = format!("H0: all {} entity dummies are zero; {detail}", entity_names.len());
        Some(t)
    };
    let period_names = fit.block_names(DummyKind::Period);
    let period_dummies = if period_names.is_empty() {
        None
    } else {
        let mut t = joint_wald_test(fit, &period_names, &fit.covariance, WaldForm::ChiSquare)?;
        t.name = "period_dummies".into();
        t.detail = format!("H0: all {} period dummies are zero", period_names.len());
        Some(t)
    };
    Ok(FitTests {
        coefficients,
        entity_dummies,
        period_dummies,
    })
}

/// Decimals shared by B and SE(B) on one row.
pub fn coefficient_decimals(b: f64) -> usize {
    if b == 0.0 || !b.is_finite() {
        return 3;
    }
    let lead = b.abs().log10().floor() as i64;
    (2 - lead).clamp(3, 6) as usize
}

pub fn format_row_p(p: f64) -> String {
    if p < 0.0005 {
        "<0.000".to_string()
    } else {
        format!("{p:.3}")
    }
}

fn row_label(name: &str, position: usize) -> String {
    if name == INTERCEPT {
        "Constant β_0".to_string()
    } else {
        format!("β_{position} {name}[i,t]")
    }
}

fn pad_right(s: &str, width: usize) -> String {
    let n = s.chars().count();
    if n >= width {
        format!("{s} ")
    } else {
        format!("{s}{}", " ".repeat(width - n))
    }
}

/// Renders a fit in the fixed-width table layout.
pub fn render_fit_table(fit: &FitResult, tests: &FitTests, options: RenderOptions) -> Result<String> {
    if fit.spec.effects == Effects::TwoWay && fit.kind == EstimatorKind::FeLsdv {
        if tests.entity_dummies.is_none() {
            return Err(Error::MissingTest("joint test on entity dummies".into()));
        }
        if tests.period_dummies.is_none() {
            return Err(Error::MissingTest("joint test on period dummies".into()));
        }
    }
    let robust = fit.spec.covariance.is_robust();
    let se_header = if robust { "SE(B) robust" } else { "SE(B)" };
    let mut out = String::new();
    out.push_str(&format!(
        "{}{:>32}{:>18}{:>10}\n",
        pad_right("Variables", 20),
        "Regression coefficients",
        "Student's test",
        "P-value"
    ));
    out.push_str(&format!("{}{:>14}{:>16}\n", pad_right("", 20), "B", se_header));

    let mut slope_position = 0;
    for t in &tests.coefficients {
        let i = fit.index_of(&t.name)?;
        let b = fit.coefficients[i];
        let se = fit.covariance[(i, i)].max(0.0).sqrt();
        let d = coefficient_decimals(b);
        let label = if t.name == INTERCEPT {
            row_label(&t.name, 0)
        } else {
            slope_position += 1;
            row_label(&t.name, slope_position)
        };
        out.push_str(&format!(
            "{}{:>14}{:>16}{:>20}{:>10}\n",
            pad_right(&label, 20),
            format!("{b:.d$}"),
            format!("{se:.d$}"),
            format!("{:.3}", t.statistic),
            format_row_p(t.p_value)
        ));
    }
    out.push_str(&format!(
        "Dependent variable: {}[i,t] N.T={} R-squared={:.2}\n",
        fit.spec.dependent, fit.n_obs, fit.r_squared_overall
    ));
    if options.show_within_r_squared {
        out.push_str(&format!("Within R-squared={:.2}\n", fit.r_squared_within));
    }
    if tests.entity_dummies.is_some() || tests.period_dummies.is_some() {
        out.push_str("Diagnosis of panel components:\n");
        let mut item = 0;
        if let Some(t) = &tests.entity_dummies {
            item += 1;
            let kind = if robust { "Robust F-test" } else { "F-test" };
            out.push_str(&format!(
                "{item}) {kind} for joint significance on regional dummies: H_0: δ_r = 0 F = {:.1} p-value={:.3}\n",
                t.statistic, t.p_value
            ));
        }
        if let Some(t) = &tests.period_dummies {
            item += 1;
            out.push_str(&format!(
                "{item}) Wald joint test on time dummies: H_0: γ_s = 0 Chi-square({}) = {:.1} p-value = {:.3}\n",
                t.dof1, t.statistic, t.p_value
            ));
        }
    }
    Ok(out)
}

/// Builds a fit carrying externally reported estimates, for rendering only.
///
/// `rows` are `(name, estimate, standard error)`; the covariance is diagonal.
pub fn reported_fit(
    spec: ModelSpec,
    rows: &[(&str, f64, f64)],
    n_obs: usize,
    r_squared_overall: f64,
    r_squared_within: f64,
) -> FitResult {
    let k = rows.len();
    FitResult {
        kind: if spec.effects == Effects::None {
            EstimatorKind::Pooled
        } else {
            EstimatorKind::FeLsdv
        },
        spec,
        coefficient_names: rows.iter().map(|r| r.0.to_string()).collect(),
        coefficients: DVector::from_iterator(k, rows.iter().map(|r| r.1)),
        covariance: DMatrix::from_diagonal(&DVector::from_iterator(k, rows.iter().map(|r| r.2 * r.2))),
        residuals: DVector::zeros(0),
        rss: 0.0,
        r_squared_overall,
        r_squared_within,
        n_obs,
        dof_residual: n_obs.saturating_sub(k),
        n_entities: 0,
        n_periods: 0,
        design: DMatrix::zeros(0, k),
        xtx_inverse: DMatrix::zeros(k, k),
        entity_index: Vec::new(),
        period_index: Vec::new(),
        entity_labels: Vec::new(),
        period_labels: Vec::new(),
        dummy_blocks: Vec::new(),
        variance_components: None,
        n_dropped: 0,
        warnings: Vec::new(),
    }
}

/// A test result carrying an externally reported statistic; the p-value is
/// recomputed from `distribution` with the given dof.
pub fn reported_test(
    name: &str,
    statistic: f64,
    distribution: Distribution,
    dof1: usize,
    dof2: Option<usize>,
) -> Result<TestResult> {
    let p_value = match (distribution, dof2) {
        (Distribution::StudentT, _) => t_two_sided_p(statistic, dof1 as f64)?,
        (Distribution::ChiSquare, _) => chi2_sf(statistic, dof1 as f64)?,
        (Distribution::F, Some(d2)) => f_sf(statistic, dof1 as f64, d2 as f64)?,
        (Distribution::F, None) => {
            return Err(Error::InvalidArgument("F test needs a denominator dof".into()))
        }
    };
    Ok(TestResult {
        name: name.to_string(),
        statistic,
        distribution,
        dof1,
        dof2,
        p_value,
        detail: "reported".into(),
        warnings: Vec::new(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct CoefficientReport {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

/// JSON form of a fit.
#[derive(Debug, Clone, Serialize)]
pub struct FitReport {
    pub spec: ModelSpec,
    pub estimator: EstimatorKind,
    pub n_obs: usize,
    pub n_dropped: usize,
    pub dof_residual: usize,
    pub n_entities: usize,
    pub n_periods: usize,
    pub r_squared_overall: f64,
    pub r_squared_within: f64,
    pub coefficients: Vec<CoefficientReport>,
    /// Row-major covariance of `coefficients`.
    pub covariance: Vec<Vec<f64>>,
    pub tests: Option<FitTests>,
    pub variance_components: Option<VarianceComponents>,
    pub warnings: Vec<String>,
}

impl FitReport {
    pub fn new(fit: &FitResult, tests: Option<&FitTests>) -> Self {
        let coefficients = fit
            .coefficient_names
            .iter()
            .enumerate()
            .map(|(i, name)| CoefficientReport {
                name: name.clone(),
                estimate: fit.coefficients[i],
                std_error: fit.covariance[(i, i)].max(0.0).sqrt(),
            })
            .collect();
        let covariance = fit
            .covariance
            .row_iter()
            .map(|r| r.iter().copied().collect())
            .collect();
        Self {
            spec: fit.spec.clone(),
            estimator: fit.kind,
            n_obs: fit.n_obs,
            n_dropped: fit.n_dropped,
            dof_residual: fit.dof_residual,
            n_entities: fit.n_entities,
            n_periods: fit.n_periods,
            r_squared_overall: fit.r_squared_overall,
            r_squared_within: fit.r_squared_within,
            coefficients,
            covariance,
            tests: tests.cloned(),
            variance_components: fit.variance_components,
            warnings: fit.warnings.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn decimals_rule() {
        assert_eq!(coefficient_decimals(196.417), 3);
        assert_eq!(coefficient_decimals(-0.787), 3);
        assert_eq!(coefficient_decimals(-1.010), 3);
        assert_eq!(coefficient_decimals(-0.000024), 6);
        assert_eq!(coefficient_decimals(0.00108), 5);
        assert_eq!(coefficient_decimals(0.00283), 5);
        assert_eq!(coefficient_decimals(0.0), 3);
    }

    #[test]
    fn p_formatting() {
        assert_eq!(format_row_p(0.0002), "<0.000");
        assert_eq!(format_row_p(0.00095), "0.001");
        assert_eq!(format_row_p(0.0636), "0.064");
    }

    #[test]
    fn no_footer_without_dummies() {
        let spec = ModelSpec::new("y", &["x"], Effects::None, CovarianceKind::Classical);
        let fit = reported_fit(spec, &[("x", 0.5, 0.1)], 40, 0.3, 0.3);
        let tests = FitTests {
            coefficients: vec![t_test(&fit, "x", &fit.covariance, 39).unwrap()],
            entity_dummies: None,
            period_dummies: None,
        };
        let text = render_fit_table(&fit, &tests, RenderOptions::default()).unwrap();
        assert!(!text.contains("Diagnosis"));
        assert!(text.contains("β_1 x[i,t]"));
        assert!(text.contains("SE(B)\n"));
    }

    #[test]
    fn twoway_requires_joint_tests() {
        let spec = ModelSpec::new("y", &["x"], Effects::TwoWay, CovarianceKind::ClusterEntity);
        let fit = reported_fit(spec, &[("x", 0.5, 0.1)], 40, 0.3, 0.3);
        let tests = FitTests {
            coefficients: vec![],
            entity_dummies: None,
            period_dummies: None,
        };
        assert!(matches!(
            render_fit_table(&fit, &tests, RenderOptions::default()),
            Err(Error::MissingTest(_))
        ));
    }
}
