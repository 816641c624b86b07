//! Linear statistics, their Gaussian limit, and microscopic statistics.

mod anisotropy;
mod clt;
mod concentration;
mod local;
pub mod stats;
pub mod testfn;

pub use anisotropy::{anisotropy_1d, difference_quotient};
pub use clt::{
    clt_report, empirical_log_laplace, fluct_linear, laplace_quadratic_fit, log_laplace_of, moments, variance_prediction,
    CltReport, LaplacePoint, LinearStatistic, VariancePrediction, MIN_LAPLACE_SAMPLES,
};
pub use concentration::{concentration_check, ConcentrationReport, ConcentrationRow};
pub use local::{local_statistics, poisson_nn_cdf, LocalReport};
pub use testfn::TestFunction;
