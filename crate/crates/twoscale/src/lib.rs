//! Additive hazard regression on two time scales.
//!
//! Estimates cumulative effect curves on a duration scale and an age scale
//! jointly, without smoothing, by solving discretized backfitting operator
//! equations; quantifies uncertainty with a wild bootstrap (pointwise
//! standard errors and uniform confidence bands); ships a simulation harness
//! for bias and coverage studies.

pub mod bootstrap;
pub mod data;
pub mod grid;
mod linalg;
pub mod marginal;
pub mod operator;
pub mod output;
pub mod pipeline;
pub mod simulation;
pub mod solver;

pub use data::{
    counting_increments, parse_subjects, write_subjects, CohortBounds, CsvSchema, DataError,
    IncrementMatrix, SubjectCohort, SubjectRecord,
};
pub use grid::{Axis, GridError, StepFunctionVec, ThetaEstimate, TwoScaleGrid};
pub use marginal::{
    marginal_estimates, pinv_increment, GridGrams, MarginalEstimate, DEFAULT_PINV_TOL,
};
pub use operator::{
    apply_operator, assemble_block_operator, kernel_matrices, spectral_report, BlockOperator,
    KernelMatrices, OperatorError, SpectralReport,
};
pub use solver::{
    project_constraint, solve_backfit, solve_direct, OperatorFactor, SolveError, SolveMethod,
    SolveReport,
};
pub use bootstrap::{
    pointwise_se, predict_survival, run_ensemble, uniform_band, wild_weights, BandResult,
    BootstrapEnsemble, BootstrapError, PointwiseSe, ResamplingVariant, SurvivalCurve, WeightLaw,
};
pub use pipeline::{estimate, EstimateOptions, FittedModel};
pub use simulation::{
    bias_study, coverage_study, simulate_cohort, true_cumulatives, Scenario, StudyResult,
};
