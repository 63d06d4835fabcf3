//! Panel-data regression toolkit.
//!
//! Two-way fixed effects (explicit dummies or within demeaning), Swamy–Arora
//! random effects, entity-clustered sandwich covariance, joint Wald/F tests on
//! dummy blocks, the Hausman specification test and p-value driven stepwise
//! selection. The [`workbench`] module holds the report renderer, the
//! descriptive period comparison, the synthetic panel generator and the Monte
//! Carlo runner used by the CLI.

pub mod error;
pub mod estimators;
pub mod inference;
pub mod numerics;
pub mod panel;
pub mod selection;
pub mod workbench;

pub use error::{Error, Result};
pub use estimators::{
    fit_fixed_effects, fit_pooled, fit_random_effects, CovarianceKind, Effects, EstimatorKind,
    FeMethod, FitResult, ModelSpec,
};
pub use inference::{
    classical_covariance, cluster_robust_covariance, hausman_test, joint_wald_test, t_test,
    Distribution, TestResult, WaldForm,
};
pub use panel::{build_lsdv_design, load_csv, within_transform, DesignBundle, PanelDataset};
pub use selection::{stepwise_select, StepwiseOptions, StepwiseTrace};
