//! Product discretization of the two time axes and step functions living on them.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid needs at least 2 points per axis, got {0}")]
    TooFewPoints(usize),
    #[error("axis range must have positive length (lo={lo}, hi={hi})")]
    EmptyRange { lo: f64, hi: f64 },
    #[error("point {x} outside axis range [{lo}, {hi}]")]
    OutOfRange { x: f64, lo: f64, hi: f64 },
    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },
}

/// Which of the two time scales a quantity lives on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    /// Time since entry, `[0, t_max]`.
    Duration,
    /// Age, `[a0, a_max]`.
    Age,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::Duration => "time",
            Axis::Age => "age",
        }
    }
}

/// One discretized axis: strictly increasing points spanning `[lo, hi]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridAxis {
    pub points: Vec<f64>,
}

impl GridAxis {
    pub fn uniform(lo: f64, hi: f64, count: usize) -> Result<Self, GridError> {
        if count < 2 {
            return Err(GridError::TooFewPoints(count));
        }
        if !(hi > lo) {
            return Err(GridError::EmptyRange { lo, hi });
        }
        let span = hi - lo;
        let points = (0..count)
            .map(|idx| lo + span * idx as f64 / (count - 1) as f64)
            .collect();
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn lo(&self) -> f64 {
        self.points[0]
    }

    pub fn hi(&self) -> f64 {
        *self.points.last().unwrap()
    }

    /// Index of the largest grid point <= x (step-function lookup).
    /// Returns None when x lies below the first point.
    pub fn floor_index(&self, x: f64) -> Option<usize> {
        if x < self.points[0] {
            return None;
        }
        match self
            .points
            .binary_search_by(|p| p.partial_cmp(&x).unwrap())
        {
            Ok(idx) => Some(idx),
            Err(ins) => Some(ins - 1),
        }
    }

    /// Index of the smallest grid point >= x (right snapping).
    /// Returns None when x lies above the last point.
    pub fn ceil_index(&self, x: f64) -> Option<usize> {
        if x > self.hi() {
            return None;
        }
        match self
            .points
            .binary_search_by(|p| p.partial_cmp(&x).unwrap())
        {
            Ok(idx) => Some(idx),
            Err(ins) => Some(ins),
        }
    }
}

/// Discrete evaluation points on the duration axis `[0, t_max]` and the age
/// axis `[a0, a_max]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwoScaleGrid {
    pub duration: GridAxis,
    pub age: GridAxis,
}

impl TwoScaleGrid {
    /// Uniform grids including both endpoints on each axis.
    pub fn build(
        t_max: f64,
        a0: f64,
        a_max: f64,
        duration_points: usize,
        age_points: usize,
    ) -> Result<Self, GridError> {
        Ok(Self {
            duration: GridAxis::uniform(0.0, t_max, duration_points)?,
            age: GridAxis::uniform(a0, a_max, age_points)?,
        })
    }

    pub fn axis(&self, axis: Axis) -> &GridAxis {
        match axis {
            Axis::Duration => &self.duration,
            Axis::Age => &self.age,
        }
    }

    pub fn t_max(&self) -> f64 {
        self.duration.hi()
    }

    pub fn a0(&self) -> f64 {
        self.age.lo()
    }

    pub fn a_max(&self) -> f64 {
        self.age.hi()
    }
}

/// A vector-valued right-continuous step function on one axis, stored as its
/// values at the grid points. Cumulative quantities start at the zero vector.
#[derive(Debug, Clone, PartialEq)]
pub struct StepFunctionVec {
    pub axis: Axis,
    /// (points x dim) values at the grid points.
    pub values: Array2<f64>,
}

impl StepFunctionVec {
    pub fn zeros(axis: Axis, points: usize, dim: usize) -> Self {
        Self {
            axis,
            values: Array2::zeros((points, dim)),
        }
    }

    pub fn points(&self) -> usize {
        self.values.nrows()
    }

    pub fn dim(&self) -> usize {
        self.values.ncols()
    }

    /// Value at the largest grid point <= x.
    pub fn eval(&self, grid_axis: &GridAxis, x: f64) -> Result<Array1<f64>, GridError> {
        if x < grid_axis.lo() || x > grid_axis.hi() {
            return Err(GridError::OutOfRange {
                x,
                lo: grid_axis.lo(),
                hi: grid_axis.hi(),
            });
        }
        let idx = grid_axis.floor_index(x).expect("range checked");
        Ok(self.values.row(idx).to_owned())
    }

    /// Like `eval` but clamping x into the axis range; values below the first
    /// point are the zero vector (cumulatives carry nothing before the start).
    pub fn eval_clamped(&self, grid_axis: &GridAxis, x: f64) -> Array1<f64> {
        match grid_axis.floor_index(x) {
            None => Array1::zeros(self.dim()),
            Some(idx) => {
                let idx = idx.min(self.points() - 1);
                self.values.row(idx).to_owned()
            }
        }
    }

    /// Backward differences: row l holds f(x_l) - f(x_{l-1}), with the first
    /// row differenced against 0. Telescopes back to the values.
    pub fn increments(&self) -> Array2<f64> {
        let mut inc = self.values.clone();
        for l in (1..inc.nrows()).rev() {
            let prev = self.values.row(l - 1).to_owned();
            let mut row = inc.row_mut(l);
            row -= &prev;
        }
        inc
    }

    /// Inverse of `increments`: running sum of rows.
    pub fn from_increments(axis: Axis, increments: &Array2<f64>) -> Self {
        let mut values = increments.clone();
        for l in 1..values.nrows() {
            let prev = values.row(l - 1).to_owned();
            let mut row = values.row_mut(l);
            row += &prev;
        }
        Self { axis, values }
    }
}

/// Stacked step-function estimate: cumulative duration effects (dim p) and
/// cumulative age effects (dim q).
#[derive(Debug, Clone, PartialEq)]
pub struct ThetaEstimate {
    pub duration: StepFunctionVec,
    pub age: StepFunctionVec,
}

impl ThetaEstimate {
    pub fn zeros(grid: &TwoScaleGrid, p: usize, q: usize) -> Self {
        Self {
            duration: StepFunctionVec::zeros(Axis::Duration, grid.duration.len(), p),
            age: StepFunctionVec::zeros(Axis::Age, grid.age.len(), q),
        }
    }

    pub fn p(&self) -> usize {
        self.duration.dim()
    }

    pub fn q(&self) -> usize {
        self.age.dim()
    }

    /// Total length of the stacked representation, p*j + q*k.
    pub fn stacked_len(&self) -> usize {
        self.duration.points() * self.p() + self.age.points() * self.q()
    }

    /// Stack as one vector: duration block first (point-major, component
    /// within point), then the age block.
    pub fn stack(&self) -> Array1<f64> {
        let mut out = Array1::zeros(self.stacked_len());
        let pj = self.duration.points() * self.p();
        for (idx, v) in self.duration.values.iter().enumerate() {
            out[idx] = *v;
        }
        for (idx, v) in self.age.values.iter().enumerate() {
            out[pj + idx] = *v;
        }
        out
    }

    /// Inverse of `stack`.
    pub fn unstack(
        stacked: &Array1<f64>,
        grid: &TwoScaleGrid,
        p: usize,
        q: usize,
    ) -> Result<Self, GridError> {
        let j = grid.duration.len();
        let k = grid.age.len();
        if stacked.len() != p * j + q * k {
            return Err(GridError::DimensionMismatch {
                expected: p * j + q * k,
                actual: stacked.len(),
            });
        }
        let dur = Array2::from_shape_vec((j, p), stacked.iter().take(p * j).copied().collect())
            .expect("length checked");
        let age = Array2::from_shape_vec((k, q), stacked.iter().skip(p * j).copied().collect())
            .expect("length checked");
        Ok(Self {
            duration: StepFunctionVec {
                axis: Axis::Duration,
                values: dur,
            },
            age: StepFunctionVec {
                axis: Axis::Age,
                values: age,
            },
        })
    }

    pub fn sup_norm(&self) -> f64 {
        self.duration
            .values
            .iter()
            .chain(self.age.values.iter())
            .fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    pub fn sup_distance(&self, other: &Self) -> f64 {
        let a = self.stack();
        let b = other.stack();
        a.iter()
            .zip(b.iter())
            .fold(0.0f64, |acc, (x, y)| acc.max((x - y).abs()))
    }
}
