//! Cohort generation from a piecewise-constant two-scale hazard and the
//! Monte Carlo bias/coverage studies.

use crate::bootstrap::{
    pointwise_se, stream_seed, uniform_band, ResamplingVariant, WeightLaw, SIGMA_EXCLUSION_REL,
};
use crate::data::{CovariatePath, SubjectCohort, SubjectRecord};
use crate::grid::{Axis, ThetaEstimate, TwoScaleGrid};
use crate::pipeline::{estimate, EstimateOptions, PipelineError};
use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One piece of the duration-scale rate: `rate` on (previous upper, `upper`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatePiece {
    pub upper: f64,
    pub rate: f64,
}

/// The data-generating design: an age-constant rate plus a piecewise-constant
/// duration rate integrating to zero, entries mixing a point mass at zero
/// with a uniform draw, censoring at a fixed follow-up.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub beta_const: f64,
    pub alpha_pieces: Vec<RatePiece>,
    pub entry_zero_mass: f64,
    pub entry_upper: f64,
    pub censor_time: f64,
    pub duration_points: usize,
    pub age_points: usize,
    pub a0: f64,
    pub a_max: f64,
}

impl Default for Scenario {
    fn default() -> Self {
        // The closing rate is chosen so the duration rate integrates to
        // exactly zero over the follow-up window: -(0.32*0.25 + 0.48*0.25)/4.5.
        Self {
            beta_const: 0.067,
            alpha_pieces: vec![
                RatePiece {
                    upper: 0.25,
                    rate: 0.32,
                },
                RatePiece {
                    upper: 0.5,
                    rate: 0.48,
                },
                RatePiece {
                    upper: 5.0,
                    rate: -0.2 / 4.5,
                },
            ],
            entry_zero_mass: 0.10,
            entry_upper: 30.0,
            censor_time: 5.0,
            duration_points: 100,
            age_points: 100,
            a0: 0.0,
            a_max: 35.0,
        }
    }
}

impl Scenario {
    pub fn grid(&self) -> TwoScaleGrid {
        TwoScaleGrid::build(
            self.censor_time,
            self.a0,
            self.a_max,
            self.duration_points,
            self.age_points,
        )
        .expect("scenario grid dimensions are valid")
    }

    /// Duration-scale rate at t (left piece at the breakpoints).
    pub fn alpha_at(&self, t: f64) -> f64 {
        for piece in &self.alpha_pieces {
            if t <= piece.upper {
                return piece.rate;
            }
        }
        self.alpha_pieces.last().map(|p| p.rate).unwrap_or(0.0)
    }

    /// Total hazard for a subject under risk at duration t.
    pub fn hazard_at(&self, t: f64) -> f64 {
        self.alpha_at(t) + self.beta_const
    }

    /// Exact integral of the duration rate over [0, t].
    pub fn cumulative_alpha(&self, t: f64) -> f64 {
        let mut acc = 0.0;
        let mut lo = 0.0;
        for piece in &self.alpha_pieces {
            let hi = piece.upper.min(t);
            if hi > lo {
                acc += piece.rate * (hi - lo);
            }
            if piece.upper >= t {
                break;
            }
            lo = piece.upper;
        }
        acc
    }

    fn validate(&self) {
        assert!(self.censor_time > 0.0);
        assert!(
            self.alpha_pieces
                .last()
                .map(|p| p.upper >= self.censor_time)
                .unwrap_or(false),
            "duration rate pieces must cover the follow-up window"
        );
        let mut lo = 0.0;
        for piece in &self.alpha_pieces {
            assert!(piece.upper > lo, "rate pieces must be increasing");
            assert!(
                piece.rate + self.beta_const > 0.0,
                "total hazard must stay positive"
            );
            lo = piece.upper;
        }
        assert!((0.0..=1.0).contains(&self.entry_zero_mass));
        assert!(self.a0 <= 0.0 || self.a0 <= self.entry_upper);
        assert!(self.a_max >= self.entry_upper + self.censor_time);
    }
}

/// Exact inverse-transform draw from the piecewise-exponential event law;
/// returns None when the draw survives past the censoring time.
fn draw_event_time(scenario: &Scenario, rng: &mut ChaCha8Rng) -> Option<f64> {
    let target: f64 = rng.sample(rand_distr::Exp1);
    let mut acc = 0.0;
    let mut lo = 0.0;
    for piece in &scenario.alpha_pieces {
        let hi = piece.upper.min(scenario.censor_time);
        if hi <= lo {
            break;
        }
        let rate = piece.rate + scenario.beta_const;
        let seg = rate * (hi - lo);
        if target <= acc + seg {
            let t = lo + (target - acc) / rate;
            return (t < scenario.censor_time).then_some(t);
        }
        acc += seg;
        lo = hi;
        if lo >= scenario.censor_time {
            break;
        }
    }
    None
}

/// Draw a cohort: entry ages from the point-mass/uniform mixture, event
/// times by exact inverse transform, censoring at the follow-up limit, and
/// a single shared at-risk column on both scales.
pub fn simulate_cohort(n: usize, scenario: &Scenario, seed: u64) -> SubjectCohort {
    scenario.validate();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut subjects = Vec::with_capacity(n);
    for idx in 0..n {
        let entry_age = if rng.gen::<f64>() < scenario.entry_zero_mass {
            0.0
        } else {
            rng.gen_range(0.0..scenario.entry_upper)
        };
        let (exit_time, event) = match draw_event_time(scenario, &mut rng) {
            Some(t) => (t, true),
            None => (scenario.censor_time, false),
        };
        subjects.push(SubjectRecord {
            id: format!("s{idx}"),
            entry_age,
            exit_time,
            event,
            covariates_x: CovariatePath::constant(Array1::from(vec![1.0])),
            covariates_z: CovariatePath::constant(Array1::from(vec![1.0])),
        });
    }
    SubjectCohort::new(
        subjects,
        1,
        scenario.censor_time,
        scenario.a0,
        scenario.a_max,
    )
    .expect("simulated subjects satisfy the cohort invariants")
}

/// Exact cumulative effect curves of the scenario at the grid points.
pub fn true_cumulatives(scenario: &Scenario, grid: &TwoScaleGrid) -> ThetaEstimate {
    let mut theta = ThetaEstimate::zeros(grid, 1, 1);
    for (l, t) in grid.duration.points.iter().enumerate() {
        theta.duration.values[[l, 0]] = scenario.cumulative_alpha(*t);
    }
    for (m, u) in grid.age.points.iter().enumerate() {
        theta.age.values[[m, 0]] = scenario.beta_const * (u - scenario.a0);
    }
    theta
}

/// Aggregated Monte Carlo results on the full grid.
#[derive(Debug, Clone, Serialize)]
pub struct StudyResult {
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub boot_replicates: Option<usize>,
    pub alpha: Option<f64>,
    pub duration_points: Vec<f64>,
    pub age_points: Vec<f64>,
    pub bias_duration: Vec<f64>,
    pub bias_age: Vec<f64>,
    pub mc_sd_duration: Vec<f64>,
    pub mc_sd_age: Vec<f64>,
    pub mean_se_duration: Option<Vec<f64>>,
    pub mean_se_age: Option<Vec<f64>>,
    pub coverage_duration: Option<Vec<f64>>,
    pub coverage_age: Option<Vec<f64>>,
    pub band_coverage_duration: Option<f64>,
    pub band_coverage_age: Option<f64>,
}

impl StudyResult {
    /// Indices of the conventional reporting points (the 20th, 40th, ...,
    /// 100th points of each axis).
    pub fn tabulated_indices(len: usize) -> Vec<usize> {
        (1..=5).map(|r| (len * r) / 5 - 1).collect()
    }
}

/// Two-sided standard normal quantile by the Acklam rational approximation
/// (absolute error below 1.2e-9, ample for interval construction).
pub fn normal_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0);
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    let p_low = 0.02425;
    if p < p_low {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - p_low {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -normal_quantile(1.0 - p)
    }
}

struct RepOutcome {
    theta_dur: Vec<f64>,
    theta_age: Vec<f64>,
    se_dur: Option<Vec<f64>>,
    se_age: Option<Vec<f64>>,
    covered_dur: Option<Vec<bool>>,
    covered_age: Option<Vec<bool>>,
    band_dur: Option<bool>,
    band_age: Option<bool>,
}

fn aggregate(
    n: usize,
    reps: usize,
    seed: u64,
    boot: Option<(usize, f64)>,
    grid: &TwoScaleGrid,
    truth: &ThetaEstimate,
    outcomes: Vec<RepOutcome>,
) -> StudyResult {
    let j = grid.duration.len();
    let k = grid.age.len();
    let r = reps as f64;
    let mut bias_duration = vec![0.0; j];
    let mut bias_age = vec![0.0; k];
    let mut sum_d = vec![0.0; j];
    let mut sq_d = vec![0.0; j];
    let mut sum_a = vec![0.0; k];
    let mut sq_a = vec![0.0; k];
    let with_boot = boot.is_some();
    let mut se_d = vec![0.0; j];
    let mut se_a = vec![0.0; k];
    let mut cov_d = vec![0.0; j];
    let mut cov_a = vec![0.0; k];
    let mut band_d = 0.0;
    let mut band_a = 0.0;

    for out in &outcomes {
        for l in 0..j {
            let v = out.theta_dur[l];
            bias_duration[l] += (v - truth.duration.values[[l, 0]]) / r;
            sum_d[l] += v;
            sq_d[l] += v * v;
        }
        for m in 0..k {
            let v = out.theta_age[m];
            bias_age[m] += (v - truth.age.values[[m, 0]]) / r;
            sum_a[m] += v;
            sq_a[m] += v * v;
        }
        if with_boot {
            for l in 0..j {
                se_d[l] += out.se_dur.as_ref().unwrap()[l] / r;
                cov_d[l] += if out.covered_dur.as_ref().unwrap()[l] {
                    1.0 / r
                } else {
                    0.0
                };
            }
            for m in 0..k {
                se_a[m] += out.se_age.as_ref().unwrap()[m] / r;
                cov_a[m] += if out.covered_age.as_ref().unwrap()[m] {
                    1.0 / r
                } else {
                    0.0
                };
            }
            band_d += if out.band_dur.unwrap() { 1.0 / r } else { 0.0 };
            band_a += if out.band_age.unwrap() { 1.0 / r } else { 0.0 };
        }
    }

    let sd = |sum: &[f64], sq: &[f64]| -> Vec<f64> {
        sum.iter()
            .zip(sq.iter())
            .map(|(s, q)| (((q - s * s / r) / (r - 1.0)).max(0.0)).sqrt())
            .collect()
    };

    StudyResult {
        n,
        reps,
        seed,
        boot_replicates: boot.map(|(b, _)| b),
        alpha: boot.map(|(_, a)| a),
        duration_points: grid.duration.points.clone(),
        age_points: grid.age.points.clone(),
        bias_duration,
        bias_age,
        mc_sd_duration: sd(&sum_d, &sq_d),
        mc_sd_age: sd(&sum_a, &sq_a),
        mean_se_duration: with_boot.then_some(se_d),
        mean_se_age: with_boot.then_some(se_a),
        coverage_duration: with_boot.then_some(cov_d),
        coverage_age: with_boot.then_some(cov_a),
        band_coverage_duration: with_boot.then_some(band_d),
        band_coverage_age: with_boot.then_some(band_a),
    }
}

fn run_study(
    n: usize,
    reps: usize,
    scenario: &Scenario,
    seed: u64,
    boot: Option<(usize, f64)>,
) -> Result<StudyResult, PipelineError> {
    assert!(reps >= 1);
    let grid = scenario.grid();
    let truth = true_cumulatives(scenario, &grid);
    let opts = EstimateOptions::default();

    let outcomes: Result<Vec<RepOutcome>, PipelineError> = (0..reps)
        .into_par_iter()
        .map(|rep| {
            let cohort = simulate_cohort(n, scenario, stream_seed(seed, 1, rep as u64));
            let fit = estimate(&cohort, &grid, &opts)?;
            let theta_dur: Vec<f64> = fit.theta.duration.values.column(0).to_vec();
            let theta_age: Vec<f64> = fit.theta.age.values.column(0).to_vec();
            let mut out = RepOutcome {
                theta_dur,
                theta_age,
                se_dur: None,
                se_age: None,
                covered_dur: None,
                covered_age: None,
                band_dur: None,
                band_age: None,
            };
            if let Some((b, alpha)) = boot {
                let ensemble = fit.bootstrap(
                    b,
                    stream_seed(seed, 2, rep as u64),
                    WeightLaw::StandardNormal,
                    ResamplingVariant::Counting,
                )?;
                let se = pointwise_se(&ensemble)?;
                let z = normal_quantile(1.0 - alpha / 2.0);
                let covered = |hat: &ndarray::Array2<f64>,
                               sig: &ndarray::Array2<f64>,
                               truth_col: &ndarray::Array2<f64>|
                 -> Vec<bool> {
                    (0..hat.nrows())
                        .map(|idx| {
                            (hat[[idx, 0]] - truth_col[[idx, 0]]).abs()
                                <= z * sig[[idx, 0]] + 1e-15
                        })
                        .collect()
                };
                out.covered_dur = Some(covered(
                    &fit.theta.duration.values,
                    &se.duration,
                    &truth.duration.values,
                ));
                out.covered_age = Some(covered(
                    &fit.theta.age.values,
                    &se.age,
                    &truth.age.values,
                ));
                let band_covers = |axis: Axis| -> Result<bool, PipelineError> {
                    let (lo, hi, points, sig, hat, truth_vals) = match axis {
                        Axis::Duration => (
                            0.0,
                            grid.t_max(),
                            &grid.duration.points,
                            &se.duration,
                            &fit.theta.duration.values,
                            &truth.duration.values,
                        ),
                        Axis::Age => (
                            grid.a0(),
                            grid.a_max(),
                            &grid.age.points,
                            &se.age,
                            &fit.theta.age.values,
                            &truth.age.values,
                        ),
                    };
                    let band =
                        uniform_band(&ensemble, &se, &fit.theta, alpha, axis, lo, hi, points)?;
                    let sigma_max = sig.iter().copied().fold(0.0f64, f64::max);
                    let floor = SIGMA_EXCLUSION_REL * sigma_max;
                    let ok = (0..points.len()).all(|idx| {
                        // pinned points carry no randomness and are skipped
                        if sig[[idx, 0]] <= floor {
                            return true;
                        }
                        let t = truth_vals[[idx, 0]];
                        let c = band.c_quantile * sig[[idx, 0]];
                        t >= hat[[idx, 0]] - c - 1e-15 && t <= hat[[idx, 0]] + c + 1e-15
                    });
                    Ok(ok)
                };
                out.band_dur = Some(band_covers(Axis::Duration)?);
                out.band_age = Some(band_covers(Axis::Age)?);
                out.se_dur = Some(se.duration.column(0).to_vec());
                out.se_age = Some(se.age.column(0).to_vec());
            }
            Ok(out)
        })
        .collect();

    Ok(aggregate(n, reps, seed, boot, &grid, &truth, outcomes?))
}

/// Repeated simulate-and-fit: mean error of the estimate at every grid point.
pub fn bias_study(
    n: usize,
    reps: usize,
    scenario: &Scenario,
    seed: u64,
) -> Result<StudyResult, PipelineError> {
    run_study(n, reps, scenario, seed, None)
}

/// Repeated simulate-fit-bootstrap: pointwise standard errors, pointwise
/// interval coverage, and per-axis uniform band coverage.
pub fn coverage_study(
    n: usize,
    reps: usize,
    boot_replicates: usize,
    alpha: f64,
    scenario: &Scenario,
    seed: u64,
) -> Result<StudyResult, PipelineError> {
    assert!(boot_replicates >= 2);
    run_study(n, reps, scenario, seed, Some((boot_replicates, alpha)))
}
