//! Rational quadric surface regression and the statistics used to judge it.

mod correlation;
mod lowess;
mod stats;
mod surface;

pub use correlation::{average_ranks, linear_regression, spearman_rho, LinearFit};
pub use lowess::{lowess, lowess_with_delta, DEFAULT_FRAC, DEFAULT_ITERATIONS};
pub use stats::{
    fit_report, mean_sd, pearson, quantile_sorted, report_from_predictions, standardized_residuals,
    DataPoint, FitReport,
};
pub use surface::{
    paper_surface, Domain, RationalQuadricSurface, DOMAIN_GRID, DOMAIN_POLE_THRESHOLD,
    POLE_THRESHOLD,
};
