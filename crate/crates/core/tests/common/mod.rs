//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::f64::consts::PI;
use std::path::PathBuf;

use nalgebra::{DMatrix, DVector};
use regpanel::estimators::{CovarianceKind, Effects, FitResult, ModelSpec};
use regpanel::inference::Distribution;
use regpanel::panel::PanelDataset;
use regpanel::workbench::report::{reported_fit, reported_test, FitTests};

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn golden_path(name: &str) -> PathBuf {
    crate_dir().join("tests").join("golden").join(name)
}

pub struct ReportedTable {
    pub fit: FitResult,
    pub tests: FitTests,
    /// Numerals printed in the published table, as they appear there.
    pub numerals: Vec<&'static str>,
}

/// `rows` are `(name, B, SE, t)`; t p-values use `t_dof`.
fn reported_table(
    regressors: &[&str],
    rows: &[(&str, f64, f64, f64)],
    t_dof: usize,
    r_squared: f64,
    entity_f: f64,
    period_chi2: f64,
    numerals: Vec<&'static str>,
) -> ReportedTable {
    let spec = ModelSpec::new("PRP", regressors, Effects::TwoWay, CovarianceKind::ClusterEntity);
    let fit_rows: Vec<(&str, f64, f64)> = rows.iter().map(|r| (r.0, r.1, r.2)).collect();
    let fit = reported_fit(spec, &fit_rows, 336, r_squared, f64::NAN);
    let coefficients = rows
        .iter()
        .map(|r| reported_test(r.0, r.3, Distribution::StudentT, t_dof, None).unwrap())
        .collect();
    let tests = FitTests {
        coefficients,
        entity_dummies: Some(reported_test("entity_dummies", entity_f, Distribution::F, 27, Some(27)).unwrap()),
        period_dummies: Some(reported_test("period_dummies", period_chi2, Distribution::ChiSquare, 11, None).unwrap()),
    };
    ReportedTable { fit, tests, numerals }
}

pub fn table1() -> ReportedTable {
    reported_table(
        &["Empl"],
        &[("const", 196.417, 25.286, 7.768), ("Empl", -0.787, 0.212, -3.708)],
        27,
        0.51,
        16.6,
        147.6,
        vec![
            "196.417", "25.286", "7.768", "<0.000", "-0.787", "0.212", "-3.708", "0.001",
            "N.T=336", "R-squared=0.51", "F = 16.6", "p-value=0.000", "Chi-square(11) = 147.6",
            "p-value = 0.000",
        ],
    )
}

pub fn table2() -> ReportedTable {
    reported_table(
        &["Empl", "TFA", "RB", "DNR1"],
        &[
            ("const", 13.955, 131.203, 0.106),
            ("Empl", -1.010, 0.205, -4.930),
            ("TFA", -0.000024, 0.000004, -5.649),
            ("RB", 0.00108, 0.00058, 1.862),
            ("DNR1", 0.00283, 0.00167, 1.695),
        ],
        293,
        0.65,
        14.4,
        332.6,
        vec![
            "13.955", "131.203", "0.106", "0.916", "-1.010", "0.205", "-4.930", "-0.000024",
            "0.000004", "-5.649", "0.00108", "0.00058", "1.862", "0.064", "0.00283", "0.00167",
            "1.695", "0.091", "N.T=336", "R-squared=0.65", "F = 14.4", "p-value=0.000",
            "Chi-square(11) = 332.6", "p-value = 0.000",
        ],
    )
}

// ---- distribution oracles: finite closed forms for integer dof ----

/// Two-sided Student t p-value, trigonometric series for integer dof.
pub fn t_two_sided_oracle(t: f64, dof: u32) -> f64 {
    let nu = dof as f64;
    let theta = (t.abs() / nu.sqrt()).atan();
    let (s, c) = theta.sin_cos();
    let c2 = c * c;
    let a = if dof % 2 == 1 {
        let mut sum = 0.0;
        if dof > 1 {
            let mut term = 1.0;
            sum = 1.0;
            let mut k = 2;
            while k + 1 < dof {
                term *= k as f64 / (k + 1) as f64 * c2;
                sum += term;
                k += 2;
            }
        }
        2.0 / PI * (theta + s * c * sum)
    } else {
        let mut term = 1.0;
        let mut sum = 1.0;
        let mut k = 1;
        while k + 1 < dof {
            term *= k as f64 / (k + 1) as f64 * c2;
            sum += term;
            k += 2;
        }
        s * sum
    };
    1.0 - a
}

pub fn t_cdf_oracle(t: f64, dof: u32) -> f64 {
    let p = t_two_sided_oracle(t, dof) / 2.0;
    if t >= 0.0 {
        1.0 - p
    } else {
        p
    }
}

/// Chi-square upper tail for integer dof (Poisson sum / normal tail series).
pub fn chi2_sf_oracle(x: f64, dof: u32) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if dof % 2 == 0 {
        let h = x / 2.0;
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..dof / 2 {
            term *= h / j as f64;
            sum += term;
        }
        (-h).exp() * sum
    } else {
        let tail = statrs::function::erf::erfc((x / 2.0).sqrt());
        if dof == 1 {
            return tail;
        }
        let mut term = 1.0;
        let mut sum = 1.0;
        for j in 1..=(dof - 3) / 2 {
            term *= x / (2 * j + 1) as f64;
            sum += term;
        }
        tail + (2.0 * x / PI).sqrt() * (-x / 2.0).exp() * sum
    }
}

/// F upper tail when the numerator dof is even: finite binomial-type series.
pub fn f_sf_oracle_even_d1(x: f64, d1: u32, d2: u32) -> f64 {
    assert!(d1 % 2 == 0);
    if x <= 0.0 {
        return 1.0;
    }
    let (a, b) = (d1 as f64, d2 as f64);
    let z = b / (b + a * x);
    let w = 1.0 - z;
    // P(F > x) = z^{d2/2} Σ_{j<d1/2} Γ(d2/2 + j)/(Γ(d2/2) j!) w^j
    let mut term = 1.0;
    let mut sum = 1.0;
    for j in 1..d1 / 2 {
        term *= (b / 2.0 + (j - 1) as f64) / j as f64 * w;
        sum += term;
    }
    z.powf(b / 2.0) * sum
}

// ---- least squares oracle ----

/// Intercept, non-baseline entity and period dummies, then the regressors.
pub fn full_dummy_design(data: &PanelDataset, regressors: &[&str]) -> (DMatrix<f64>, usize) {
    let n_e = data.entities().len();
    let n_t = data.periods().len();
    let k = regressors.len();
    let cols = 1 + (n_e - 1) + (n_t - 1) + k;
    let rows = data.rows();
    let idx: Vec<usize> = regressors.iter().map(|r| data.variable_index(r).unwrap()).collect();
    let mut x = DMatrix::zeros(rows.len(), cols);
    for (r, o) in rows.iter().enumerate() {
        x[(r, 0)] = 1.0;
        if o.entity > 0 {
            x[(r, o.entity)] = 1.0;
        }
        if o.period > 0 {
            x[(r, n_e - 1 + o.period)] = 1.0;
        }
        for (j, &v) in idx.iter().enumerate() {
            x[(r, cols - k + j)] = o.values[v].unwrap();
        }
    }
    (x, cols - k)
}

/// β = (XᵀX)⁻¹Xᵀy by Cholesky on the normal equations.
pub fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    xtx.cholesky().expect("normal equations not positive definite").solve(&xty)
}

pub fn column(data: &PanelDataset, name: &str) -> DVector<f64> {
    let v = data.variable_index(name).unwrap();
    DVector::from_iterator(data.rows().len(), data.rows().iter().map(|o| o.values[v].unwrap()))
}

/// Writes straight to the stderr handle so the line survives test output capture.
pub fn report(criterion: u32, pass: bool, detail: &str) {
    use std::io::Write;
    let status = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "{status} criterion {criterion}: {detail}");
}
