//! Compound marginal estimator: per-cell Moore-Penrose increments accumulated
//! on each axis separately, ignoring the other scale.

use crate::data::IncrementMatrix;
use crate::grid::{Axis, StepFunctionVec, ThetaEstimate};
use crate::linalg::DesignPinv;
use ndarray::{Array1, Array2, ArrayView1, ArrayView2, Axis as NdAxis};

/// Default relative singular-value cutoff for the per-cell pseudo-inverses.
pub const DEFAULT_PINV_TOL: f64 = 1e-8;

/// Per-cell design pseudo-inverses for both axes, shared by the marginal
/// estimator, the kernel construction, and the bootstrap accumulation.
#[derive(Debug, Clone)]
pub struct GridGrams {
    pub duration: Vec<DesignPinv>,
    pub age: Vec<DesignPinv>,
    pub tol: f64,
}

impl GridGrams {
    pub fn compute(inc: &IncrementMatrix, tol: f64) -> Self {
        let duration = (0..inc.grid.duration.len())
            .map(|l| DesignPinv::compute(inc.x_duration.index_axis(NdAxis(0), l), tol))
            .collect();
        let age = (0..inc.grid.age.len())
            .map(|m| DesignPinv::compute(inc.z_age.index_axis(NdAxis(0), m), tol))
            .collect();
        Self { duration, age, tol }
    }
}

/// The compound marginal estimate with per-cell rank flags.
#[derive(Debug, Clone)]
pub struct MarginalEstimate {
    pub m_hat: ThetaEstimate,
    pub duration_rank_flags: Vec<bool>,
    pub age_rank_flags: Vec<bool>,
}

/// One cell's least-squares increment: the Moore-Penrose solution of
/// `design . delta = dn`, with singular values below `tol * sigma_max`
/// treated as zero. Rank deficiency yields a zero-padded increment and a
/// raised flag, not an error.
pub fn pinv_increment(
    design: ArrayView2<f64>,
    dn: ArrayView1<f64>,
    tol: f64,
) -> (Array1<f64>, bool) {
    let pinv = DesignPinv::compute(design, tol);
    (pinv.apply(dn), pinv.rank_deficient)
}

/// Running sums of per-cell increments: the first design against duration
/// increments, the shifted second design against age-shifted increments.
pub fn marginal_estimates(inc: &IncrementMatrix, tol: f64) -> MarginalEstimate {
    let grams = GridGrams::compute(inc, tol);
    marginal_with_grams(inc, &grams)
}

pub fn marginal_with_grams(inc: &IncrementMatrix, grams: &GridGrams) -> MarginalEstimate {
    let ones = vec![1.0; inc.n];
    let (dur_values, duration_rank_flags) = accumulate_axis(
        &inc.dn_duration,
        &grams.duration,
        &ones,
        inc.p,
    );
    let (age_values, age_rank_flags) = accumulate_axis(&inc.dn_age, &grams.age, &ones, inc.q);
    MarginalEstimate {
        m_hat: ThetaEstimate {
            duration: StepFunctionVec {
                axis: Axis::Duration,
                values: dur_values,
            },
            age: StepFunctionVec {
                axis: Axis::Age,
                values: age_values,
            },
        },
        duration_rank_flags,
        age_rank_flags,
    }
}

/// Marginal-style accumulation with per-subject multipliers on the event
/// increments; the backbone of both the estimator (unit weights) and the
/// wild bootstrap.
pub fn weighted_marginal(inc: &IncrementMatrix, grams: &GridGrams, weights: &[f64]) -> ThetaEstimate {
    assert_eq!(weights.len(), inc.n);
    let (dur_values, _) = accumulate_axis(&inc.dn_duration, &grams.duration, weights, inc.p);
    let (age_values, _) = accumulate_axis(&inc.dn_age, &grams.age, weights, inc.q);
    ThetaEstimate {
        duration: StepFunctionVec {
            axis: Axis::Duration,
            values: dur_values,
        },
        age: StepFunctionVec {
            axis: Axis::Age,
            values: age_values,
        },
    }
}

fn accumulate_axis(
    dn: &Array2<f64>,
    cells: &[DesignPinv],
    weights: &[f64],
    dim: usize,
) -> (Array2<f64>, Vec<bool>) {
    let cells_count = dn.nrows();
    let n = dn.ncols();
    let mut values = Array2::zeros((cells_count, dim));
    let mut flags = Vec::with_capacity(cells_count);
    let mut running = Array1::<f64>::zeros(dim);
    for cell in 0..cells_count {
        let pinv = &cells[cell];
        flags.push(pinv.rank_deficient);
        // events are sparse 0/1; only touched columns contribute
        for i in 0..n {
            let d = dn[[cell, i]];
            if d != 0.0 {
                let w = d * weights[i];
                for c in 0..dim {
                    running[c] += w * pinv.pinv_rows[[c, i]];
                }
            }
        }
        values.row_mut(cell).assign(&running);
    }
    (values, flags)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{counting_increments, parse_subjects, CohortBounds, CsvSchema};
    use crate::grid::TwoScaleGrid;
    use ndarray::array;

    fn schema_y() -> CsvSchema {
        CsvSchema::all_shared(vec!["y".into()])
    }

    #[test]
    fn single_event_single_subject_jumps_to_one() {
        let csv = "id,entry_age,exit_time,event,y\ns1,0,1.0,1,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(1.0),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 1.0, 5, 5).unwrap();
        let inc = counting_increments(&cohort, &grid).unwrap();
        let marg = marginal_estimates(&inc, DEFAULT_PINV_TOL);
        let a = &marg.m_hat.duration.values;
        assert_eq!(a[[3, 0]], 0.0);
        assert_eq!(a[[4, 0]], 1.0);
    }

    #[test]
    fn pooled_nelson_aalen_with_risk_indicator() {
        // four subjects, one event at 0.5; everyone at risk there -> step 1/4
        let csv = "id,entry_age,exit_time,event,y\n\
                   a,0,0.5,1,1\nb,0,1,0,1\nc,0,1,0,1\nd,0,1,0,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(1.0),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 1.0, 5, 5).unwrap();
        let inc = counting_increments(&cohort, &grid).unwrap();
        let marg = marginal_estimates(&inc, DEFAULT_PINV_TOL);
        let a = &marg.m_hat.duration.values;
        assert_eq!(a[[1, 0]], 0.0);
        assert!((a[[2, 0]] - 0.25).abs() < 1e-12);
        assert!((a[[4, 0]] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn empty_risk_cells_are_flagged_and_zero() {
        // subject leaves at 0.4; later duration cells have an empty design
        let csv = "id,entry_age,exit_time,event,y\ns1,0,0.4,1,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(1.0),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 1.0, 5, 5).unwrap();
        let inc = counting_increments(&cohort, &grid).unwrap();
        let marg = marginal_estimates(&inc, DEFAULT_PINV_TOL);
        assert!(marg.duration_rank_flags[4]);
        assert!(!marg.duration_rank_flags[2]);
        // value stays flat after the event
        assert_eq!(
            marg.m_hat.duration.values[[4, 0]],
            marg.m_hat.duration.values[[2, 0]]
        );
    }

    #[test]
    fn matched_grids_agree_across_axes_when_all_entries_zero() {
        // a_i = 0 and Z = X: the age-axis estimate over [0, t_max] equals the
        // duration-axis estimate at shared grid points
        let csv = "id,entry_age,exit_time,event,y\n\
                   a,0,0.45,1,1\nb,0,0.8,1,1\nc,0,1,0,1\nd,0,1,0,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(1.0),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 1.0, 6, 6).unwrap();
        let inc = counting_increments(&cohort, &grid).unwrap();
        let marg = marginal_estimates(&inc, DEFAULT_PINV_TOL);
        for l in 0..6 {
            assert!(
                (marg.m_hat.duration.values[[l, 0]] - marg.m_hat.age.values[[l, 0]]).abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn weighted_accumulation_with_unit_weights_matches_marginal() {
        let csv = "id,entry_age,exit_time,event,y\n\
                   a,0,0.45,1,1\nb,1.3,0.8,1,1\nc,0.4,1,0,1\n";
        let cohort = parse_subjects(
            csv.as_bytes(),
            &schema_y(),
            CohortBounds {
                t_max: Some(1.0),
                a0: Some(0.0),
                a_max: Some(2.5),
            },
        )
        .unwrap();
        let grid = TwoScaleGrid::build(1.0, 0.0, 2.5, 6, 9).unwrap();
        let inc = counting_increments(&cohort, &grid).unwrap();
        let grams = GridGrams::compute(&inc, DEFAULT_PINV_TOL);
        let marg = marginal_with_grams(&inc, &grams);
        let weighted = weighted_marginal(&inc, &grams, &[1.0, 1.0, 1.0]);
        assert_eq!(marg.m_hat, weighted);
    }

    #[test]
    fn pinv_increment_zero_design() {
        let design = Array2::<f64>::zeros((4, 1));
        let (inc, flagged) = pinv_increment(design.view(), array![1.0, 0.0, 0.0, 0.0].view(), 1e-8);
        assert!(flagged);
        assert_eq!(inc[0], 0.0);
    }
}
