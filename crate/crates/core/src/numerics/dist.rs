//! Student t, F and chi-square distribution functions.

use super::special::{regularized_beta, regularized_gamma_p, regularized_gamma_q};
use crate::error::{Error, Result};

fn check_dof(dof: f64, what: &str) -> Result<()> {
    if dof.is_finite() && dof > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidArgument(format!(
            "{what} degrees of freedom must be positive, got {dof}"
        )))
    }
}

fn check_x(x: f64) -> Result<()> {
    if x.is_nan() {
        Err(Error::NonFinite("distribution argument".into()))
    } else {
        Ok(())
    }
}

/// P(T ≤ x) for Student's t with `dof` degrees of freedom.
pub fn t_cdf(x: f64, dof: f64) -> Result<f64> {
    check_dof(dof, "t")?;
    check_x(x)?;
    if x == 0.0 {
        return Ok(0.5);
    }
    let tail = 0.5 * regularized_beta(dof / (dof + x * x), 0.5 * dof, 0.5);
    Ok(if x < 0.0 { tail } else { 1.0 - tail })
}

/// P(|T| ≥ |t|), computed directly from the tail to keep small p-values accurate.
pub fn t_two_sided_p(t: f64, dof: f64) -> Result<f64> {
    check_dof(dof, "t")?;
    check_x(t)?;
    if t == 0.0 {
        return Ok(1.0);
    }
    Ok(regularized_beta(dof / (dof + t * t), 0.5 * dof, 0.5).clamp(0.0, 1.0))
}

/// P(F ≤ x) for the F(dof1, dof2) distribution.
pub fn f_cdf(x: f64, dof1: f64, dof2: f64) -> Result<f64> {
    check_dof(dof1, "numerator")?;
    check_dof(dof2, "denominator")?;
    check_x(x)?;
    if x <= 0.0 {
        return Ok(0.0);
    }
    let z = dof1 * x / (dof1 * x + dof2);
    Ok(regularized_beta(z, 0.5 * dof1, 0.5 * dof2))
}

/// Upper tail P(F > x).
pub fn f_sf(x: f64, dof1: f64, dof2: f64) -> Result<f64> {
    check_dof(dof1, "numerator")?;
    check_dof(dof2, "denominator")?;
    check_x(x)?;
    if x <= 0.0 {
        return Ok(1.0);
    }
    let z = dof2 / (dof2 + dof1 * x);
    Ok(regularized_beta(z, 0.5 * dof2, 0.5 * dof1))
}

/// P(χ² ≤ x) with `dof` degrees of freedom.
pub fn chi2_cdf(x: f64, dof: f64) -> Result<f64> {
    check_dof(dof, "chi-square")?;
    check_x(x)?;
    Ok(regularized_gamma_p(0.5 * dof, 0.5 * x.max(0.0)))
}

/// Upper tail P(χ² > x).
pub fn chi2_sf(x: f64, dof: f64) -> Result<f64> {
    check_dof(dof, "chi-square")?;
    check_x(x)?;
    Ok(regularized_gamma_q(0.5 * dof, 0.5 * x.max(0.0)))
}
