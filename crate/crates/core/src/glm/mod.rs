//! Weighted regression: design matrices with lags, categorical expansion
//! and fixed effects; Poisson quasi-maximum likelihood; weighted least
//! squares; group demeaning.

mod design;
mod fit;
mod frame;
mod within;

pub use design::{build_design, lag_column_name, Covariate, Design, DesignSpec, RowExclusion, INTERCEPT};
pub use fit::{
    fit_ols, fit_poisson_qmle, independent_columns, predict, Coefficient, FittedModel, Link, BETA_TOL,
    DEVIANCE_TOL, MAX_IRLS_ITER, RANK_TOL,
};
pub use frame::{Column, Frame};
pub use within::{within_transform, within_transform_vec};

#[cfg(test)]
mod tests;
