//! Empirical CDFs, Kolmogorov-Smirnov tests, moment checks and adaptive
//! quadrature shared by the verification modules.

mod ks;
mod normality;
mod quad;

pub use ks::{kolmogorov_survival, ks_one_sample, ks_two_sample, EmpiricalCdf, KsResult};
pub use normality::{mean_and_stderr, normality_check};
pub use quad::{integrate_adaptive, Quadrature, Upper};

/// Standard normal CDF.
pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}
