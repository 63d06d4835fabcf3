use nalgebra::{DMatrix, DVector, SVD};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one are treated as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    pub coefficients: DVector<f64>,
    pub residuals: DVector<f64>,
    pub rss: f64,
    /// (XᵀX)⁻¹, or its pseudo-inverse on the identified subspace when rank-deficient.
    pub xtx_inverse: DMatrix<f64>,
    pub rank: usize,
}

impl LeastSquaresSolution {
    pub fn is_full_rank(&self) -> bool {
        self.rank == self.coefficients.len()
    }
}

/// Minimum-norm least squares through a thin SVD of `x`.
pub fn solve_least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<LeastSquaresSolution> {
    let (n, p) = x.shape();
    if n != y.len() {
        return Err(Error::DimensionMismatch(format!(
            "design has {n} rows but response has {} entries",
            y.len()
        )));
    }
    if n == 0 || p == 0 {
        return Err(Error::DimensionMismatch("empty design matrix".into()));
    }
    if n < p {
        return Err(Error::InsufficientObservations { n_obs: n, n_params: p });
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("design matrix".into()));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("response vector".into()));
    }

    let svd = SVD::new(x.clone(), true, true);
    let u = svd.u.as_ref().expect("u requested");
    let v_t = svd.v_t.as_ref().expect("v_t requested");
    let sigma = &svd.singular_values;
    let largest = sigma.iter().cloned().fold(0.0_f64, f64::max);
    let cutoff = RANK_TOLERANCE * largest;

    let mut coefficients = DVector::zeros(p);
    let mut xtx_inverse = DMatrix::zeros(p, p);
    let mut rank = 0;
    for (j, &s) in sigma.iter().enumerate() {
        if s <= cutoff || s == 0.0 {
            continue;
        }
        rank += 1;
        let v_j = v_t.row(j).transpose();
        let proj = u.column(j).dot(y) / s;
        coefficients.axpy(proj, &v_j, 1.0);
        xtx_inverse.ger(1.0 / (s * s), &v_j, &v_j, 1.0);
    }
    // enforce exact symmetry
    let xtx_inverse = (&xtx_inverse + xtx_inverse.transpose()) * 0.5;

    let residuals = y - x * &coefficients;
    let rss = residuals.norm_squared();
    Ok(LeastSquaresSolution {
        coefficients,
        residuals,
        rss,
        xtx_inverse,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn normal_equations(x: &DMatrix<f64>, y: &DVector<f64>) -> DVector<f64> {
        let xtx = x.transpose() * x;
        let xty = x.transpose() * y;
        xtx.try_inverse().unwrap() * xty
    }

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, p: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, p, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn exact_line() {
        let x = DMatrix::from_row_slice(3, 2, &[1., 1., 1., 2., 1., 3.]);
        let y = DVector::from_vec(vec![2., 4., 6.]);
        let s = solve_least_squares(&x, &y).unwrap();
        assert!((s.coefficients[0]).abs() < 1e-12);
        assert!((s.coefficients[1] - 2.0).abs() < 1e-12);
        assert!(s.rss < 1e-20);
        assert_eq!(s.rank, 2);
    }

    #[test]
    fn intercept_only_is_mean() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let y = DVector::from_vec(vec![1., 2., 3.]);
        let s = solve_least_squares(&x, &y).unwrap();
        assert!((s.coefficients[0] - 2.0).abs() < 1e-12);
        assert!((s.rss - 2.0).abs() < 1e-12);
    }

    #[test]
    fn matches_normal_equations_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 30, 4);
        let y = DVector::from_fn(30, |_, _| rng.random_range(-3.0..3.0));
        let s = solve_least_squares(&x, &y).unwrap();
        let oracle = normal_equations(&x, &y);
        assert!((s.coefficients - oracle).amax() < 1e-8);
        assert!((s.rss - s.residuals.norm_squared()).abs() <= 1e-10 * s.rss.max(1e-300));
        let sym = (&s.xtx_inverse - s.xtx_inverse.transpose()).amax();
        assert!(sym < 1e-10);
    }

    #[test]
    fn ill_conditioned_instance() {
        // X = U diag(s) Vᵀ with condition number 1e8
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random_matrix(&mut rng, 40, 4);
        let b = random_matrix(&mut rng, 4, 4);
        let u = a.qr().q();
        let v = b.qr().q();
        let s = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 1e-3, 1e-6, 1e-8]));
        let x = &u * s * v.transpose();
        let beta = DVector::from_vec(vec![1.0, -2.0, 0.5, 3.0]);
        let y = &x * &beta;
        let sol = solve_least_squares(&x, &y).unwrap();
        assert_eq!(sol.rank, 4);
        assert!((sol.coefficients - beta).amax() < 1e-4);
    }

    #[test]
    fn duplicated_column_keeps_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 25, 3);
        let y = DVector::from_fn(25, |_, _| rng.random_range(-1.0..1.0));
        let full = solve_least_squares(&x, &y).unwrap();
        let mut dup = x.clone().insert_column(3, 0.0);
        dup.set_column(3, &x.column(1));
        let d = solve_least_squares(&dup, &y).unwrap();
        assert_eq!(d.rank, 3);
        let fitted_a = &x * &full.coefficients;
        let fitted_b = &dup * &d.coefficients;
        assert!((fitted_a - fitted_b).amax() < 1e-8);
        // minimum norm splits the duplicated coefficient evenly
        assert!((d.coefficients[1] - d.coefficients[3]).abs() < 1e-8);
    }

    #[test]
    fn rejects_bad_input() {
        let x = DMatrix::from_element(3, 1, 1.0);
        let y = DVector::from_vec(vec![1., 2.]);
        assert!(matches!(
            solve_least_squares(&x, &y),
            Err(Error::DimensionMismatch(_))
        ));
        let y = DVector::from_vec(vec![1., f64::NAN, 2.]);
        assert!(matches!(solve_least_squares(&x, &y), Err(Error::NonFinite(_))));
    }

    proptest::proptest! {
        #[test]
        fn residuals_orthogonal(seed in 0u64..1000, n in 8usize..40, p in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_matrix(&mut rng, n, p);
            let y = DVector::from_fn(n, |_, _| rng.random_range(-5.0..5.0));
            let s = solve_least_squares(&x, &y).unwrap();
            let xr = x.transpose() * &s.residuals;
            proptest::prop_assert!(xr.amax() < 1e-8 * y.norm().max(1.0));
        }
    }
}
