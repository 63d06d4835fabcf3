//! Dense least squares and the distribution functions behind every p-value.

mod dist;
mod lstsq;
mod special;

pub use dist::{chi2_cdf, chi2_sf, f_cdf, f_sf, t_cdf, t_two_sided_p};
pub use lstsq::{solve_least_squares, LeastSquaresSolution, RANK_TOLERANCE};
pub use special::{ln_gamma, regularized_beta, regularized_gamma_p, regularized_gamma_q};

pub type Matrix = nalgebra::DMatrix<f64>;
pub type Vector = nalgebra::DVector<f64>;
