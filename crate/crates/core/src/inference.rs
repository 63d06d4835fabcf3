//! Covariance estimators, t-tests, joint Wald/F tests and the Hausman test.
//!
//! Robust inference is entity-clustered (Arellano) covariance. By default
//! robust t-tests and robust F-tests use G − 1 denominator degrees of freedom,
//! where G is the number of clusters; classical tests use the residual
//! degrees of freedom.

use std::collections::HashSet;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{CovarianceKind, EstimatorKind, FitResult};
use crate::numerics::{chi2_sf, f_sf, t_two_sided_p};

/// Relative eigenvalue threshold for rank decisions on covariance blocks.
const EIGEN_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Distribution {
    StudentT,
    F,
    ChiSquare,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TestResult {
    pub name: String,
    pub statistic: f64,
    pub distribution: Distribution,
    pub dof1: usize,
    pub dof2: Option<usize>,
    pub p_value: f64,
    pub detail: String,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaldForm {
    ChiSquare,
    F { denominator_dof: usize },
}

/// Which small-sample scaling the clustered sandwich receives.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SmallSample {
    /// No scaling (CR0).
    None,
    /// G/(G−1) · (n−1)/(n−k).
    Standard,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

/// s²(XᵀX)⁻¹ with s² = RSS / residual dof.
///
/// Random-effects fits use the idiosyncratic variance from the within
/// regression for s², the GLS covariance of the quasi-demeaned model.
pub fn classical_covariance(fit: &FitResult) -> Result<DMatrix<f64>> {
    if fit.dof_residual == 0 {
        return Err(Error::ZeroDof);
    }
    let s2 = match (fit.kind, fit.variance_components) {
        (EstimatorKind::Re, Some(vc)) => vc.sigma2_idiosyncratic,
        _ => fit.rss / fit.dof_residual as f64,
    };
    Ok(symmetrize(&fit.xtx_inverse * s2))
}

/// Entity-clustered sandwich with the standard small-sample factor.
///
/// `clusters[r]` is the cluster of row `r`, in `0..n_clusters`.
pub fn cluster_robust_covariance(
    fit: &FitResult,
    clusters: &[usize],
    n_clusters: usize,
) -> Result<DMatrix<f64>> {
    cluster_robust_covariance_with(fit, clusters, n_clusters, SmallSample::Standard)
}

pub fn cluster_robust_covariance_with(
    fit: &FitResult,
    clusters: &[usize],
    n_clusters: usize,
    scaling: SmallSample,
) -> Result<DMatrix<f64>> {
    let n = fit.design.nrows();
    let p = fit.design.ncols();
    if clusters.len() != n {
        return Err(Error::Cluster(format!(
            "{} cluster labels for {n} rows",
            clusters.len()
        )));
    }
    if n_clusters < 2 {
        return Err(Error::Cluster(format!("need at least 2 clusters, got {n_clusters}")));
    }
    let mut scores = DMatrix::<f64>::zeros(p, n_clusters);
    let mut sizes = vec![0usize; n_clusters];
    for (r, &g) in clusters.iter().enumerate() {
        if g >= n_clusters {
            return Err(Error::Cluster(format!("label {g} out of range 0..{n_clusters}")));
        }
        sizes[g] += 1;
        let e = fit.residuals[r];
        for j in 0..p {
            scores[(j, g)] += fit.design[(r, j)] * e;
        }
    }
    if let Some(g) = sizes.iter().position(|&s| s == 0) {
        return Err(Error::Cluster(format!("cluster {g} has no rows")));
    }
    let meat = &scores * scores.transpose();
    let bread = &fit.xtx_inverse;
    let mut v = bread * meat * bread;
    if scaling == SmallSample::Standard {
        let g = n_clusters as f64;
        let k = fit.n_params() as f64;
        let nn = n as f64;
        v *= g / (g - 1.0) * (nn - 1.0) / (nn - k);
    }
    Ok(symmetrize(v))
}

/// Observation-level heteroskedasticity-robust sandwich, HC1 scaling n/(n−k).
pub fn heteroskedastic_covariance(fit: &FitResult) -> Result<DMatrix<f64>> {
    let n = fit.design.nrows();
    let rows: Vec<usize> = (0..n).collect();
    let v = cluster_robust_covariance_with(fit, &rows, n, SmallSample::None)?;
    let k = fit.n_params();
    if n <= k {
        return Err(Error::ZeroDof);
    }
    Ok(v * (n as f64 / (n - k) as f64))
}

/// Default t/F denominator dof for a covariance kind.
pub fn default_dof(fit: &FitResult, covariance: CovarianceKind) -> usize {
    match covariance {
        CovarianceKind::Classical => fit.dof_residual,
        CovarianceKind::ClusterEntity => fit.n_entities.saturating_sub(1),
    }
}

/// Two-sided t-test of one coefficient against zero.
pub fn t_test(fit: &FitResult, coefficient: &str, covariance: &DMatrix<f64>, dof: usize) -> Result<TestResult> {
    let i = fit.index_of(coefficient)?;
    let var = covariance[(i, i)];
    if !(var > 0.0) || !var.is_finite() {
        return Err(Error::ZeroStandardError(coefficient.to_string()));
    }
    let se = var.sqrt();
    let statistic = fit.coefficients[i] / se;
    if dof == 0 {
        return Err(Error::ZeroDof);
    }
    Ok(TestResult {
        name: coefficient.to_string(),
        statistic,
        distribution: Distribution::StudentT,
        dof1: dof,
        dof2: None,
        p_value: t_two_sided_p(statistic, dof as f64)?,
        detail: format!("H0: {coefficient} = 0, SE = {se}"),
        warnings: Vec::new(),
    })
}

/// Wald test that every named coefficient is zero.
pub fn joint_wald_test(
    fit: &FitResult,
    coefficients: &[&str],
    covariance: &DMatrix<f64>,
    form: WaldForm,
) -> Result<TestResult> {
    if coefficients.is_empty() {
        return Err(Error::InvalidArgument("joint test needs at least one coefficient".into()));
    }
    let idx: Vec<usize> = coefficients
        .iter()
        .map(|c| fit.index_of(c))
        .collect::<Result<_>>()?;
    let distinct: HashSet<usize> = idx.iter().copied().collect();
    if distinct.len() != idx.len() {
        return Err(Error::InvalidArgument("joint test lists a coefficient twice".into()));
    }
    let q = idx.len();
    let b = DVector::from_iterator(q, idx.iter().map(|&i| fit.coefficients[i]));
    let v = DMatrix::from_fn(q, q, |r, c| covariance[(idx[r], idx[c])]);
    let eig = SymmetricEigen::new(v.clone());
    let largest = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let rank = eig
        .eigenvalues
        .iter()
        .filter(|&&l| l > EIGEN_TOLERANCE * largest && l > 0.0)
        .count();
    if rank < q {
        return Err(Error::SingularCovariance { rank, dim: q });
    }
    let chol = v
        .cholesky()
        .ok_or(Error::SingularCovariance { rank, dim: q })?;
    let w = b.dot(&chol.solve(&b)).max(0.0);
    let detail = format!("H0: {} coefficients jointly zero", q);
    Ok(match form {
        WaldForm::ChiSquare => TestResult {
            name: "wald".into(),
            statistic: w,
            distribution: Distribution::ChiSquare,
            dof1: q,
            dof2: None,
            p_value: chi2_sf(w, q as f64)?,
            detail,
            warnings: Vec::new(),
        },
        WaldForm::F { denominator_dof } => {
            if denominator_dof == 0 {
                return Err(Error::ZeroDof);
            }
            let f = w / q as f64;
            TestResult {
                name: "wald_f".into(),
                statistic: f,
                distribution: Distribution::F,
                dof1: q,
                dof2: Some(denominator_dof),
                p_value: f_sf(f, q as f64, denominator_dof as f64)?,
                detail,
                warnings: Vec::new(),
            }
        }
    })
}

/// Hausman test of fixed against random effects over the shared slopes.
///
/// When V_FE − V_RE is not positive definite the quadratic form uses a
/// generalized inverse on its positive eigenspace and the dof drops to that rank.
pub fn hausman_test(fe: &FitResult, re: &FitResult) -> Result<TestResult> {
    if fe.spec.dependent != re.spec.dependent {
        return Err(Error::SpecMismatch("fits explain different dependent variables".into()));
    }
    let slopes = &fe.spec.regressors;
    if slopes.is_empty() {
        return Err(Error::InvalidArgument("Hausman comparison set is empty".into()));
    }
    let a: HashSet<&String> = slopes.iter().collect();
    let b: HashSet<&String> = re.spec.regressors.iter().collect();
    if a != b {
        return Err(Error::SpecMismatch("fits use different regressors".into()));
    }
    let fi: Vec<usize> = slopes.iter().map(|s| fe.index_of(s)).collect::<Result<_>>()?;
    let ri: Vec<usize> = slopes.iter().map(|s| re.index_of(s)).collect::<Result<_>>()?;
    let q = slopes.len();
    let diff = DVector::from_fn(q, |i, _| fe.coefficients[fi[i]] - re.coefficients[ri[i]]);
    let vdiff = DMatrix::from_fn(q, q, |r, c| {
        fe.covariance[(fi[r], fi[c])] - re.covariance[(ri[r], ri[c])]
    });
    let eig = SymmetricEigen::new(symmetrize(vdiff));
    let scale = eig.eigenvalues.iter().fold(0.0_f64, |m, l| m.max(l.abs()));
    let mut statistic = 0.0;
    let mut rank = 0;
    for (j, &l) in eig.eigenvalues.iter().enumerate() {
        if l > EIGEN_TOLERANCE * scale && l > 0.0 {
            let proj = eig.eigenvectors.column(j).dot(&diff);
            statistic += proj * proj / l;
            rank += 1;
        }
    }
    let mut warnings = Vec::new();
    if rank < q {
        warnings.push(format!(
            "V_FE - V_RE is not positive definite; generalized inverse on rank {rank} of {q}"
        ));
    }
    if rank == 0 {
        return Err(Error::SingularCovariance { rank, dim: q });
    }
    Ok(TestResult {
        name: "hausman".into(),
        statistic,
        distribution: Distribution::ChiSquare,
        dof1: rank,
        dof2: None,
        p_value: chi2_sf(statistic, rank as f64)?,
        detail: format!("FE vs RE over {}", slopes.join(", ")),
        warnings,
    })
}
