//! Wild bootstrap of the estimation error: replicate error paths, pointwise
//! standard errors, uniform confidence bands, and survival prediction.
//!
//! Each replicate multiplies per-subject increments by an i.i.d. mean-zero
//! unit-variance weight, pushes the resulting compound path through
//! (I - operator)^{-1}, and applies the same gauge projection as the
//! estimator. Replicates therefore live in the constrained solution space,
//! and their spread approximates the spread of the estimation error.

use crate::data::IncrementMatrix;
use crate::grid::{Axis, StepFunctionVec, ThetaEstimate};
use crate::marginal::{weighted_marginal, GridGrams};
use crate::solver::{project_with_points, OperatorFactor, SolveError};
use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use thiserror::Error;

/// Two-sided 97.5% standard normal quantile, for pointwise intervals.
pub const Z_975: f64 = 1.959963984540054;

/// Points with a standard error at or below this fraction of the axis
/// maximum are excluded from studentized sup statistics (they are pinned to
/// zero by the gauge projection and the ratio there is 0/0).
pub const SIGMA_EXCLUSION_REL: f64 = 1e-8;

#[derive(Debug, Error)]
pub enum BootstrapError {
    #[error("need at least 2 replicates, got {0}")]
    TooFewReplicates(usize),
    #[error("unknown weight distribution `{0}`")]
    UnknownWeightLaw(String),
    #[error("alpha must lie strictly between 0 and 1, got {0}")]
    BadAlpha(f64),
    #[error("no grid points with positive standard error in [{lo}, {hi}]")]
    EmptyRange { lo: f64, hi: f64 },
    #[error("entry age {age} outside the estimable range [{lo}, {hi}]")]
    EntryAgeOutsideGrid { age: f64, lo: f64, hi: f64 },
    #[error("covariate vector of length {actual} does not match design dimension {expected}")]
    ContractionDimension { expected: usize, actual: usize },
    #[error(transparent)]
    Solve(#[from] SolveError),
}

/// Weight law for the wild multipliers; both are mean zero, unit variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum WeightLaw {
    StandardNormal,
    Rademacher,
}

impl std::str::FromStr for WeightLaw {
    type Err = BootstrapError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "normal" | "standard-normal" | "gaussian" => Ok(WeightLaw::StandardNormal),
            "rademacher" => Ok(WeightLaw::Rademacher),
            other => Err(BootstrapError::UnknownWeightLaw(other.to_string())),
        }
    }
}

/// Which increments the wild weights multiply.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ResamplingVariant {
    /// Weights on the raw counting increments.
    Counting,
    /// Weights on the residual increments (observed minus fitted).
    Residual,
}

impl ResamplingVariant {
    pub fn from_index(idx: u8) -> Option<Self> {
        match idx {
            1 => Some(ResamplingVariant::Counting),
            2 => Some(ResamplingVariant::Residual),
            _ => None,
        }
    }
}

/// SplitMix64; documented replicate-seed derivation so parallel runs are
/// reproducible for any worker count.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E3779B97F4A7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D049BB133111EB);
    z ^ (z >> 31)
}

/// Independent sub-seed derived from a master seed, a stream label, and an
/// index within the stream.
pub fn stream_seed(master: u64, stream: u64, index: u64) -> u64 {
    splitmix64(master ^ splitmix64(stream.wrapping_mul(0x51_7C_C1_B7_27_22_0A_95) ^ (index + 1)))
}

/// Seed for one replicate: the master seed mixed with the replicate index.
pub fn replicate_seed(master: u64, replicate: usize) -> u64 {
    stream_seed(master, 0, replicate as u64)
}

/// i.i.d. wild weights, deterministic given the seed.
pub fn wild_weights(n: usize, seed: u64, law: WeightLaw) -> Vec<f64> {
    assert!(n >= 1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| match law {
            WeightLaw::StandardNormal => rng.sample(StandardNormal),
            WeightLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        })
        .collect()
}

/// Replicate error paths together with the configuration that produced them.
#[derive(Debug, Clone)]
pub struct BootstrapEnsemble {
    pub replicates: Vec<ThetaEstimate>,
    pub variant: ResamplingVariant,
    pub law: WeightLaw,
    pub seed: u64,
}

/// Compound path of weighted residual increments on both axes.
fn residual_path(
    inc: &IncrementMatrix,
    grams: &GridGrams,
    theta_hat: &ThetaEstimate,
    weights: &[f64],
) -> ThetaEstimate {
    let grid = &inc.grid;
    let j = grid.duration.len();
    let k = grid.age.len();
    let (n, p, q) = (inc.n, inc.p, inc.q);
    let da = theta_hat.duration.increments();
    let db = theta_hat.age.increments();

    let mut dur_values = Array2::zeros((j, p));
    let mut running = Array1::<f64>::zeros(p);
    let mut resid = vec![0.0; n];
    for l in 0..j {
        let t = grid.duration.points[l];
        let t_prev = if l == 0 { t } else { grid.duration.points[l - 1] };
        for i in 0..n {
            let a_i = inc.entry_ages[i];
            let mut fitted = 0.0;
            for c in 0..p {
                fitted += inc.x_duration[[l, i, c]] * da[[l, c]];
            }
            let b_hi = theta_hat.age.eval_clamped(&grid.age, t + a_i);
            let b_lo = theta_hat.age.eval_clamped(&grid.age, t_prev + a_i);
            for c in 0..q {
                fitted += inc.z_duration[[l, i, c]] * (b_hi[c] - b_lo[c]);
            }
            resid[i] = weights[i] * (inc.dn_duration[[l, i]] - fitted);
        }
        let pinv = &grams.duration[l];
        for c in 0..p {
            let mut acc = 0.0;
            for i in 0..n {
                acc += pinv.pinv_rows[[c, i]] * resid[i];
            }
            running[c] += acc;
        }
        dur_values.row_mut(l).assign(&running);
    }

    let mut age_values = Array2::zeros((k, q));
    let mut running = Array1::<f64>::zeros(q);
    for m in 0..k {
        let u = grid.age.points[m];
        let u_prev = if m == 0 { u } else { grid.age.points[m - 1] };
        for i in 0..n {
            let a_i = inc.entry_ages[i];
            let mut fitted = 0.0;
            for c in 0..q {
                fitted += inc.z_age[[m, i, c]] * db[[m, c]];
            }
            let a_hi = theta_hat.duration.eval_clamped(&grid.duration, u - a_i);
            let a_lo = theta_hat.duration.eval_clamped(&grid.duration, u_prev - a_i);
            for c in 0..p {
                fitted += inc.x_age[[m, i, c]] * (a_hi[c] - a_lo[c]);
            }
            resid[i] = weights[i] * (inc.dn_age[[m, i]] - fitted);
        }
        let pinv = &grams.age[m];
        for c in 0..q {
            let mut acc = 0.0;
            for i in 0..n {
                acc += pinv.pinv_rows[[c, i]] * resid[i];
            }
            running[c] += acc;
        }
        age_values.row_mut(m).assign(&running);
    }

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

/// One replicate error path: weighted compound path pushed through
/// (I - operator)^{-1}, then gauge-projected like the estimator.
pub fn bootstrap_replicate(
    inc: &IncrementMatrix,
    grams: &GridGrams,
    theta_hat: &ThetaEstimate,
    factor: &OperatorFactor,
    weights: &[f64],
    variant: ResamplingVariant,
) -> Result<ThetaEstimate, BootstrapError> {
    let path = match variant {
        ResamplingVariant::Counting => weighted_marginal(inc, grams, weights),
        ResamplingVariant::Residual => residual_path(inc, grams, theta_hat, weights),
    };
    let solved = factor.solve_stacked(&path.stack())?;
    let raw = ThetaEstimate::unstack(&solved, &inc.grid, inc.p, inc.q)
        .expect("dimensions fixed by the grid");
    Ok(project_with_points(
        &raw,
        inc.d,
        &inc.grid.duration.points,
        &inc.grid.age.points,
    ))
}

/// Generate `replicates` error paths in parallel; bit-reproducible for any
/// worker count because each replicate derives its own seed from the index.
pub fn run_ensemble(
    inc: &IncrementMatrix,
    grams: &GridGrams,
    theta_hat: &ThetaEstimate,
    factor: &OperatorFactor,
    replicates: usize,
    seed: u64,
    law: WeightLaw,
    variant: ResamplingVariant,
) -> Result<BootstrapEnsemble, BootstrapError> {
    let paths: Result<Vec<ThetaEstimate>, BootstrapError> = (0..replicates)
        .into_par_iter()
        .map(|r| {
            let weights = wild_weights(inc.n, replicate_seed(seed, r), law);
            bootstrap_replicate(inc, grams, theta_hat, factor, &weights, variant)
        })
        .collect();
    Ok(BootstrapEnsemble {
        replicates: paths?,
        variant,
        law,
        seed,
    })
}

/// Componentwise standard deviation of the replicate paths at each grid
/// point (divisor B-1).
#[derive(Debug, Clone)]
pub struct PointwiseSe {
    pub duration: Array2<f64>,
    pub age: Array2<f64>,
}

pub fn pointwise_se(ensemble: &BootstrapEnsemble) -> Result<PointwiseSe, BootstrapError> {
    let b = ensemble.replicates.len();
    if b < 2 {
        return Err(BootstrapError::TooFewReplicates(b));
    }
    let shape_dur = ensemble.replicates[0].duration.values.raw_dim();
    let shape_age = ensemble.replicates[0].age.values.raw_dim();
    let mut sum_d = Array2::<f64>::zeros(shape_dur.clone());
    let mut sq_d = Array2::<f64>::zeros(shape_dur);
    let mut sum_a = Array2::<f64>::zeros(shape_age.clone());
    let mut sq_a = Array2::<f64>::zeros(shape_age);
    for rep in &ensemble.replicates {
        sum_d += &rep.duration.values;
        sq_d += &rep.duration.values.mapv(|v| v * v);
        sum_a += &rep.age.values;
        sq_a += &rep.age.values.mapv(|v| v * v);
    }
    let bf = b as f64;
    let var = |sum: &Array2<f64>, sq: &Array2<f64>| {
        let mut out = Array2::<f64>::zeros(sum.raw_dim());
        for ((o, s), q) in out.iter_mut().zip(sum.iter()).zip(sq.iter()) {
            let v = (q - s * s / bf) / (bf - 1.0);
            *o = v.max(0.0).sqrt();
        }
        out
    };
    Ok(PointwiseSe {
        duration: var(&sum_d, &sq_d),
        age: var(&sum_a, &sq_a),
    })
}

/// A uniform confidence band over one axis.
#[derive(Debug, Clone)]
pub struct BandResult {
    pub axis: Axis,
    pub alpha: f64,
    pub nu_lo: f64,
    pub nu_hi: f64,
    /// Bootstrap quantile of the studentized sup statistic.
    pub c_quantile: f64,
    /// (points x dim) pointwise standard errors on the axis.
    pub sigma: Array2<f64>,
    pub band_lower: Array2<f64>,
    pub band_upper: Array2<f64>,
}

/// Ceiling order statistic index (1-based) for the (1-alpha) quantile.
fn quantile_index(b: usize, alpha: f64) -> usize {
    (((1.0 - alpha) * b as f64).ceil() as usize).clamp(1, b)
}

/// Build the sup-statistic band over `[nu_lo, nu_hi]` on one axis. Grid
/// points whose standard error vanishes (constraint-pinned) are excluded
/// from the sup.
pub fn uniform_band(
    ensemble: &BootstrapEnsemble,
    sigma: &PointwiseSe,
    theta_hat: &ThetaEstimate,
    alpha: f64,
    axis: Axis,
    nu_lo: f64,
    nu_hi: f64,
    grid_points: &[f64],
) -> Result<BandResult, BootstrapError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BootstrapError::BadAlpha(alpha));
    }
    let (sig, hat) = match axis {
        Axis::Duration => (&sigma.duration, &theta_hat.duration.values),
        Axis::Age => (&sigma.age, &theta_hat.age.values),
    };
    let dim = sig.ncols();
    let in_range: Vec<usize> = grid_points
        .iter()
        .enumerate()
        .filter(|(_, x)| **x >= nu_lo && **x <= nu_hi)
        .map(|(idx, _)| idx)
        .collect();
    let sigma_max = in_range
        .iter()
        .flat_map(|&idx| (0..dim).map(move |c| sig[[idx, c]]))
        .fold(0.0f64, f64::max);
    let floor = SIGMA_EXCLUSION_REL * sigma_max;
    let included: Vec<(usize, usize)> = in_range
        .iter()
        .flat_map(|&idx| (0..dim).map(move |c| (idx, c)))
        .filter(|&(idx, c)| sig[[idx, c]] > floor)
        .collect();
    if included.is_empty() {
        return Err(BootstrapError::EmptyRange {
            lo: nu_lo,
            hi: nu_hi,
        });
    }

    let mut sups: Vec<f64> = ensemble
        .replicates
        .iter()
        .map(|rep| {
            let path = match axis {
                Axis::Duration => &rep.duration.values,
                Axis::Age => &rep.age.values,
            };
            included
                .iter()
                .map(|&(idx, c)| (path[[idx, c]] / sig[[idx, c]]).abs())
                .fold(0.0f64, f64::max)
        })
        .collect();
    sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c_quantile = sups[quantile_index(sups.len(), alpha) - 1];

    let mut band_lower = hat.clone();
    let mut band_upper = hat.clone();
    for ((lo, hi), s) in band_lower
        .iter_mut()
        .zip(band_upper.iter_mut())
        .zip(sig.iter())
    {
        *lo -= c_quantile * s;
        *hi += c_quantile * s;
    }
    Ok(BandResult {
        axis,
        alpha,
        nu_lo,
        nu_hi,
        c_quantile,
        sigma: sig.clone(),
        band_lower,
        band_upper,
    })
}

/// Predicted survival with a uniform band, for a subject entering at the
/// given age.
#[derive(Debug, Clone)]
pub struct SurvivalCurve {
    pub entry_age: f64,
    pub t: Vec<f64>,
    pub survival: Vec<f64>,
    pub band_lower: Vec<f64>,
    pub band_upper: Vec<f64>,
    pub c_quantile: f64,
}

/// Survival S(t) = exp(-[x'A(t) + z'(B(a+t) - B(a))]) with a band obtained
/// by bootstrapping the same linear functional of each replicate path and
/// transforming the cumulative-hazard band monotonically.
#[allow(clippy::too_many_arguments)]
pub fn predict_survival(
    theta_hat: &ThetaEstimate,
    ensemble: &BootstrapEnsemble,
    grid: &crate::grid::TwoScaleGrid,
    entry_age: f64,
    alpha: f64,
    x_vec: Option<&[f64]>,
    z_vec: Option<&[f64]>,
) -> Result<SurvivalCurve, BootstrapError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(BootstrapError::BadAlpha(alpha));
    }
    let hi_allowed = grid.a_max() - grid.t_max();
    if entry_age < grid.a0() || entry_age > hi_allowed {
        return Err(BootstrapError::EntryAgeOutsideGrid {
            age: entry_age,
            lo: grid.a0(),
            hi: hi_allowed,
        });
    }
    let p = theta_hat.p();
    let q = theta_hat.q();
    let ones_p = vec![1.0; p];
    let ones_q = vec![1.0; q];
    let x = x_vec.unwrap_or(&ones_p);
    let z = z_vec.unwrap_or(&ones_q);
    if x.len() != p {
        return Err(BootstrapError::ContractionDimension {
            expected: p,
            actual: x.len(),
        });
    }
    if z.len() != q {
        return Err(BootstrapError::ContractionDimension {
            expected: q,
            actual: z.len(),
        });
    }

    let functional = |theta: &ThetaEstimate, l: usize| -> f64 {
        let t = grid.duration.points[l];
        let mut h = 0.0;
        for (c, xc) in x.iter().enumerate() {
            h += xc * theta.duration.values[[l, c]];
        }
        let b_t = theta.age.eval_clamped(&grid.age, entry_age + t);
        let b_0 = theta.age.eval_clamped(&grid.age, entry_age);
        for (c, zc) in z.iter().enumerate() {
            h += zc * (b_t[c] - b_0[c]);
        }
        h
    };

    let j = grid.duration.len();
    let hat: Vec<f64> = (0..j).map(|l| functional(theta_hat, l)).collect();
    let b = ensemble.replicates.len();
    if b < 2 {
        return Err(BootstrapError::TooFewReplicates(b));
    }
    let rep_paths: Vec<Vec<f64>> = ensemble
        .replicates
        .iter()
        .map(|rep| (0..j).map(|l| functional(rep, l)).collect())
        .collect();
    let mut sigma = vec![0.0; j];
    for (l, s) in sigma.iter_mut().enumerate() {
        let mean = rep_paths.iter().map(|p| p[l]).sum::<f64>() / b as f64;
        let var = rep_paths
            .iter()
            .map(|p| (p[l] - mean).powi(2))
            .sum::<f64>()
            / (b as f64 - 1.0);
        *s = var.max(0.0).sqrt();
    }
    let sigma_max = sigma.iter().copied().fold(0.0f64, f64::max);
    let floor = SIGMA_EXCLUSION_REL * sigma_max;
    let included: Vec<usize> = (0..j).filter(|&l| sigma[l] > floor).collect();
    if included.is_empty() {
        return Err(BootstrapError::EmptyRange {
            lo: 0.0,
            hi: grid.t_max(),
        });
    }
    let mut sups: Vec<f64> = rep_paths
        .iter()
        .map(|p| {
            included
                .iter()
                .map(|&l| (p[l] / sigma[l]).abs())
                .fold(0.0f64, f64::max)
        })
        .collect();
    sups.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let c_quantile = sups[quantile_index(b, alpha) - 1];

    let survival: Vec<f64> = hat.iter().map(|h| (-h).exp()).collect();
    let band_lower: Vec<f64> = hat
        .iter()
        .zip(sigma.iter())
        .map(|(h, s)| (-(h + c_quantile * s)).exp())
        .collect();
    let band_upper: Vec<f64> = hat
        .iter()
        .zip(sigma.iter())
        .map(|(h, s)| (-(h - c_quantile * s)).exp())
        .collect();
    Ok(SurvivalCurve {
        entry_age,
        t: grid.duration.points.clone(),
        survival,
        band_lower,
        band_upper,
        c_quantile,
    })
}
