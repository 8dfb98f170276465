//! LEAR: a LASSO-estimated linear model over the lagged design.

pub mod cv;
pub mod model;
pub mod solver;

pub use cv::{
    cv_select_folds, cv_select_lambda, lambda_grid, lambda_max, make_block_plan, make_cv_plan, CvPlan, CvPoint,
    CvResult, FoldData, DEFAULT_FOLDS, GRID_RATIO, GRID_SIZE,
};
pub use model::{fit_lear, fit_lear_with, predict_lear, predict_normalized, LassoFit, LearOptions};
pub use solver::{
    coordinate_descent, duality_gap, kkt_residual, lasso_objective, solve_stats, LassoSolution, RawSums,
    SolverOptions, SufficientStats,
};
