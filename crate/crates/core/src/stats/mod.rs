//! Regression and agreement statistics.

pub mod agreement;
pub mod features;
pub mod regression;
pub mod special;

pub use agreement::{
    cohen_kappa, cohen_kappa_avg, fleiss_kappa, one_way_anova, parse_ratings, pearson, Anova,
    Correlation, Kappa, RatingSet,
};
pub use features::{impute_missing, standardize, Column, ColumnKind, FeatureTable, ImputeOptions};
pub use regression::{ols_regress, stars, vif, Coefficient, ModelFit, RegressionReport};
pub use special::{f_survival, ln_gamma, reg_incomplete_beta, t_two_sided_p};
