//! CSV writers for estimates, bands, survival curves, and study tables.

use crate::bootstrap::{BandResult, PointwiseSe, SurvivalCurve};
use crate::grid::{Axis, StepFunctionVec, ThetaEstimate, TwoScaleGrid};
use crate::marginal::MarginalEstimate;
use crate::simulation::{normal_quantile, StudyResult};
use std::io::Write;

type IoResult = Result<(), std::io::Error>;

/// `axis,point,component,value` rows for one step function.
pub fn write_step_csv<W: Write>(mut w: W, points: &[f64], step: &StepFunctionVec) -> IoResult {
    writeln!(w, "axis,point,component,value")?;
    for (idx, x) in points.iter().enumerate() {
        for c in 0..step.dim() {
            writeln!(w, "{},{},{},{}", step.axis.label(), x, c + 1, step.values[[idx, c]])?;
        }
    }
    Ok(())
}

/// Marginal curves with the per-cell rank flag.
pub fn write_marginal_csv<W: Write>(
    mut w: W,
    grid: &TwoScaleGrid,
    marginal: &MarginalEstimate,
) -> IoResult {
    writeln!(w, "axis,point,component,value,rank_deficient")?;
    let mut dump = |points: &[f64], step: &StepFunctionVec, flags: &[bool]| -> IoResult {
        for (idx, x) in points.iter().enumerate() {
            for c in 0..step.dim() {
                writeln!(
                    w,
                    "{},{},{},{},{}",
                    step.axis.label(),
                    x,
                    c + 1,
                    step.values[[idx, c]],
                    flags[idx]
                )?;
            }
        }
        Ok(())
    };
    dump(
        &grid.duration.points,
        &marginal.m_hat.duration,
        &marginal.duration_rank_flags,
    )?;
    dump(&grid.age.points, &marginal.m_hat.age, &marginal.age_rank_flags)
}

/// Estimates with optional bootstrap columns:
/// `axis,point,component,estimate[,se,ci_lower,ci_upper,band_lower,band_upper]`.
pub fn write_estimates_csv<W: Write>(
    mut w: W,
    grid: &TwoScaleGrid,
    theta: &ThetaEstimate,
    inference: Option<(&PointwiseSe, &BandResult, &BandResult, f64)>,
) -> IoResult {
    match inference {
        None => {
            writeln!(w, "axis,point,component,estimate")?;
            for (axis, points, step) in [
                (Axis::Duration, &grid.duration.points, &theta.duration),
                (Axis::Age, &grid.age.points, &theta.age),
            ] {
                for (idx, x) in points.iter().enumerate() {
                    for c in 0..step.dim() {
                        writeln!(
                            w,
                            "{},{},{},{}",
                            axis.label(),
                            x,
                            c + 1,
                            step.values[[idx, c]]
                        )?;
                    }
                }
            }
        }
        Some((se, band_dur, band_age, alpha)) => {
            let z = normal_quantile(1.0 - alpha / 2.0);
            writeln!(
                w,
                "axis,point,component,estimate,se,ci_lower,ci_upper,band_lower,band_upper"
            )?;
            for (axis, points, step, sig, band) in [
                (
                    Axis::Duration,
                    &grid.duration.points,
                    &theta.duration,
                    &se.duration,
                    band_dur,
                ),
                (Axis::Age, &grid.age.points, &theta.age, &se.age, band_age),
            ] {
                for (idx, x) in points.iter().enumerate() {
                    for c in 0..step.dim() {
                        let est = step.values[[idx, c]];
                        let s = sig[[idx, c]];
                        writeln!(
                            w,
                            "{},{},{},{},{},{},{},{},{}",
                            axis.label(),
                            x,
                            c + 1,
                            est,
                            s,
                            est - z * s,
                            est + z * s,
                            band.band_lower[[idx, c]],
                            band.band_upper[[idx, c]]
                        )?;
                    }
                }
            }
        }
    }
    Ok(())
}

/// `t,survival,band_lower,band_upper` rows for one predicted curve.
pub fn write_survival_csv<W: Write>(mut w: W, curve: &SurvivalCurve) -> IoResult {
    writeln!(w, "t,survival,band_lower,band_upper")?;
    for (idx, t) in curve.t.iter().enumerate() {
        writeln!(
            w,
            "{},{},{},{}",
            t, curve.survival[idx], curve.band_lower[idx], curve.band_upper[idx]
        )?;
    }
    Ok(())
}

/// Bias table: one row per tabulated point and axis, one column per sample
/// size.
pub fn write_bias_table_csv<W: Write>(mut w: W, results: &[&StudyResult]) -> IoResult {
    let header: Vec<String> = std::iter::once("axis,point".to_string())
        .chain(results.iter().map(|r| format!("n={}", r.n)))
        .collect();
    writeln!(w, "{}", header.join(","))?;
    if results.is_empty() {
        return Ok(());
    }
    let first = results[0];
    for (label, points, pick) in [
        (
            "age",
            &first.age_points,
            Box::new(|r: &StudyResult, idx: usize| r.bias_age[idx]) as Box<dyn Fn(&StudyResult, usize) -> f64>,
        ),
        (
            "time",
            &first.duration_points,
            Box::new(|r: &StudyResult, idx: usize| r.bias_duration[idx]),
        ),
    ] {
        for idx in StudyResult::tabulated_indices(points.len()) {
            let mut row = format!("{},{}", label, points[idx]);
            for r in results {
                row.push_str(&format!(",{:.4}", pick(r, idx)));
            }
            writeln!(w, "{row}")?;
        }
    }
    Ok(())
}

/// Bootstrap uncertainty table: mean estimated se, Monte Carlo sd, and
/// pointwise coverage per tabulated point.
pub fn write_uncertainty_table_csv<W: Write>(mut w: W, results: &[&StudyResult]) -> IoResult {
    writeln!(w, "n,axis,point,mean_se,sd,coverage")?;
    for r in results {
        let (Some(se_a), Some(cov_a), Some(se_d), Some(cov_d)) = (
            r.mean_se_age.as_ref(),
            r.coverage_age.as_ref(),
            r.mean_se_duration.as_ref(),
            r.coverage_duration.as_ref(),
        ) else {
            continue;
        };
        for idx in StudyResult::tabulated_indices(r.age_points.len()) {
            writeln!(
                w,
                "{},age,{},{:.4},{:.4},{:.4}",
                r.n, r.age_points[idx], se_a[idx], r.mc_sd_age[idx], cov_a[idx]
            )?;
        }
        for idx in StudyResult::tabulated_indices(r.duration_points.len()) {
            writeln!(
                w,
                "{},time,{},{:.4},{:.4},{:.4}",
                r.n, r.duration_points[idx], se_d[idx], r.mc_sd_duration[idx], cov_d[idx]
            )?;
        }
    }
    Ok(())
}

/// Band coverage table: one row per sample size.
pub fn write_band_table_csv<W: Write>(mut w: W, results: &[&StudyResult]) -> IoResult {
    writeln!(w, "n,coverage_age,coverage_time")?;
    for r in results {
        let (Some(age), Some(dur)) = (r.band_coverage_age, r.band_coverage_duration) else {
            continue;
        };
        writeln!(w, "{},{:.4},{:.4}", r.n, age, dur)?;
    }
    Ok(())
}
