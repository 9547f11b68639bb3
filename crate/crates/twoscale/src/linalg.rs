//! Thin dense linear algebra layer: rank-revealing pseudo-inverses per grid
//! cell and pivoted factorization of the block system.

use nalgebra::{DMatrix, DVector};
use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

pub fn to_dmatrix(a: ArrayView2<f64>) -> DMatrix<f64> {
    DMatrix::from_row_iterator(a.nrows(), a.ncols(), a.iter().copied())
}

pub fn to_array2(m: &DMatrix<f64>) -> Array2<f64> {
    Array2::from_shape_fn((m.nrows(), m.ncols()), |(r, c)| m[(r, c)])
}

pub fn to_dvector(v: ArrayView1<f64>) -> DVector<f64> {
    DVector::from_iterator(v.len(), v.iter().copied())
}

pub fn to_array1(v: &DVector<f64>) -> Array1<f64> {
    Array1::from_iter(v.iter().copied())
}

/// Moore-Penrose data for one grid cell's design matrix, built from an SVD
/// with singular values below `tol * sigma_max` treated as zero.
#[derive(Debug, Clone)]
pub struct DesignPinv {
    /// C^- as an (r x n) matrix; increments are `pinv_rows . dN`.
    pub pinv_rows: Array2<f64>,
    /// (C^T C)^- as an (r x r) matrix.
    pub gram_pinv: Array2<f64>,
    pub rank: usize,
    pub rank_deficient: bool,
}

impl DesignPinv {
    /// Decompose an (n x r) design.
    pub fn compute(design: ArrayView2<f64>, tol: f64) -> Self {
        let n = design.nrows();
        let r = design.ncols();
        let m = to_dmatrix(design);
        let svd = m.svd(true, true);
        let u = svd.u.as_ref().expect("svd with u");
        let v_t = svd.v_t.as_ref().expect("svd with v_t");
        let sigma = &svd.singular_values;
        let sigma_max = sigma.iter().copied().fold(0.0f64, f64::max);
        let cutoff = tol * sigma_max;

        let mut rank = 0;
        let kdim = sigma.len();
        // C^- = V diag(1/sigma) U^T, Gram^- = V diag(1/sigma^2) V^T
        let mut pinv = DMatrix::zeros(r, n);
        let mut gram = DMatrix::zeros(r, r);
        for s in 0..kdim {
            let sv = sigma[s];
            if sv > cutoff && sv > 0.0 {
                rank += 1;
                let inv = 1.0 / sv;
                let inv2 = inv * inv;
                for row in 0..r {
                    let vrs = v_t[(s, row)];
                    for col in 0..n {
                        pinv[(row, col)] += vrs * inv * u[(col, s)];
                    }
                    for col in 0..r {
                        gram[(row, col)] += vrs * inv2 * v_t[(s, col)];
                    }
                }
            }
        }

        DesignPinv {
            pinv_rows: to_array2(&pinv),
            gram_pinv: to_array2(&gram),
            rank,
            rank_deficient: rank < r,
        }
    }

    /// C^- . dn
    pub fn apply(&self, dn: ArrayView1<f64>) -> Array1<f64> {
        self.pinv_rows.dot(&dn)
    }
}

/// Pivoted LU factorization of a square system with a cheap condition proxy.
pub struct DenseFactor {
    lu: nalgebra::linalg::FullPivLU<f64, nalgebra::Dyn, nalgebra::Dyn>,
    cond_estimate: f64,
    dim: usize,
}

impl DenseFactor {
    pub fn new(a: ArrayView2<f64>) -> Self {
        assert_eq!(a.nrows(), a.ncols());
        let dim = a.nrows();
        let lu = to_dmatrix(a).full_piv_lu();
        let u = lu.u();
        let mut dmax = 0.0f64;
        let mut dmin = f64::INFINITY;
        for i in 0..dim {
            let d = u[(i, i)].abs();
            dmax = dmax.max(d);
            dmin = dmin.min(d);
        }
        let cond_estimate = if dmin == 0.0 { f64::INFINITY } else { dmax / dmin };
        Self {
            lu,
            cond_estimate,
            dim,
        }
    }

    /// Ratio of extreme pivots of U; an order-of-magnitude condition estimate.
    pub fn cond_estimate(&self) -> f64 {
        self.cond_estimate
    }

    pub fn solve(&self, rhs: ArrayView1<f64>) -> Option<Array1<f64>> {
        assert_eq!(rhs.len(), self.dim);
        self.lu.solve(&to_dvector(rhs)).map(|v| to_array1(&v))
    }
}

/// Singular values of a (possibly rectangular) dense matrix, descending.
pub fn singular_values(a: ArrayView2<f64>) -> Vec<f64> {
    let svd = to_dmatrix(a).svd(false, false);
    let mut out: Vec<f64> = svd.singular_values.iter().copied().collect();
    out.sort_by(|x, y| y.partial_cmp(x).unwrap());
    out
}
