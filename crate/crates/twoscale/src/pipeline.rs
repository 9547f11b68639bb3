//! End-to-end fit: align data on the grid, build the marginal estimate and
//! the constrained operator, solve, and keep everything a bootstrap needs.

use crate::bootstrap::{run_ensemble, BootstrapEnsemble, BootstrapError, ResamplingVariant, WeightLaw};
use crate::data::{counting_increments, DataError, IncrementMatrix, SubjectCohort};
use crate::grid::{ThetaEstimate, TwoScaleGrid};
use crate::marginal::{marginal_with_grams, GridGrams, MarginalEstimate, DEFAULT_PINV_TOL};
use crate::operator::{
    assemble_block_operator, kernel_matrices, spectral_report, BlockOperator, OperatorError,
    SpectralReport,
};
use crate::solver::{
    solve_backfit, solve_direct_with, OperatorFactor, SolveError, SolveMethod, SolveReport,
};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Operator(#[from] OperatorError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Bootstrap(#[from] BootstrapError),
}

#[derive(Debug, Clone, Copy)]
pub struct EstimateOptions {
    pub pinv_tol: f64,
    pub method: SolveMethod,
    pub backfit_tol: f64,
    pub max_iter: usize,
    /// Near-unit singular value tolerance; spectral diagnostics are skipped
    /// when `None` (they cost two dense SVDs).
    pub spectral_tol: Option<f64>,
}

impl Default for EstimateOptions {
    fn default() -> Self {
        Self {
            pinv_tol: DEFAULT_PINV_TOL,
            method: SolveMethod::Direct,
            backfit_tol: 1e-8,
            max_iter: 1000,
            spectral_tol: None,
        }
    }
}

/// Everything produced by one fit, retained for inference.
pub struct FittedModel {
    pub increments: IncrementMatrix,
    pub grams: GridGrams,
    pub operator: BlockOperator,
    pub factor: OperatorFactor,
    pub m_hat: MarginalEstimate,
    pub theta: ThetaEstimate,
    pub report: SolveReport,
    pub spectral: Option<SpectralReport>,
}

impl FittedModel {
    pub fn grid(&self) -> &TwoScaleGrid {
        &self.operator.grid
    }

    /// Wild-bootstrap error paths for this fit.
    pub fn bootstrap(
        &self,
        replicates: usize,
        seed: u64,
        law: WeightLaw,
        variant: ResamplingVariant,
    ) -> Result<BootstrapEnsemble, BootstrapError> {
        run_ensemble(
            &self.increments,
            &self.grams,
            &self.theta,
            &self.factor,
            replicates,
            seed,
            law,
            variant,
        )
    }
}

/// Fit the two-scale model on a grid.
pub fn estimate(
    cohort: &SubjectCohort,
    grid: &TwoScaleGrid,
    opts: &EstimateOptions,
) -> Result<FittedModel, PipelineError> {
    let increments = counting_increments(cohort, grid)?;
    let grams = GridGrams::compute(&increments, opts.pinv_tol);
    let m_hat = marginal_with_grams(&increments, &grams);
    let kernels = kernel_matrices(&increments, &grams);
    let operator = assemble_block_operator(&kernels, grid, cohort.d)?;
    let factor = OperatorFactor::new(&operator)?;
    let (theta, report) = match opts.method {
        SolveMethod::Direct => solve_direct_with(&operator, &factor, &m_hat)?,
        SolveMethod::Backfit => solve_backfit(&operator, &m_hat, opts.backfit_tol, opts.max_iter)?,
    };
    let spectral = opts
        .spectral_tol
        .map(|tol| spectral_report(&kernels, &operator, cohort.d, tol));
    Ok(FittedModel {
        increments,
        grams,
        operator,
        factor,
        m_hat,
        theta,
        report,
        spectral,
    })
}
