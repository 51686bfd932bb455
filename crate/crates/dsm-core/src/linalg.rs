//! Small dense linear-algebra kernels: LU solves with pivot reporting and
//! singular-value extremes for conditioning estimates.

use nalgebra::{DMatrix, DVector};

/// Outcome of an LU factorization attempt that ran into a tiny pivot.
#[derive(Debug, Clone, Copy)]
pub struct SingularPivot {
    /// Magnitude of the offending pivot.
    pub pivot: f64,
    /// Elimination stage at which it occurred.
    pub stage: usize,
}

/// Solves `A x = b` by LU decomposition with partial pivoting.
///
/// A pivot of magnitude below `1e-12 * ||A||_inf` is treated as numerically
/// singular and returned as [`SingularPivot`] rather than divided through.
pub fn lu_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, SingularPivot> {
    let n = a.nrows();
    assert_eq!(n, a.ncols(), "lu_solve requires a square matrix");
    assert_eq!(n, b.len(), "lu_solve rhs length must match");

    let norm_inf = a
        .row_iter()
        .map(|r| r.iter().map(|x| x.abs()).sum::<f64>())
        .fold(0.0_f64, f64::max);
    let pivot_floor = 1e-12 * norm_inf;

    let mut lu = a.clone();
    let mut x = b.clone();

    for k in 0..n {
        // partial pivoting: largest magnitude in column k at or below row k
        let mut p = k;
        let mut best = lu[(k, k)].abs();
        for i in (k + 1)..n {
            let v = lu[(i, k)].abs();
            if v > best {
                best = v;
                p = i;
            }
        }
        if best <= pivot_floor {
            return Err(SingularPivot {
                pivot: best,
                stage: k,
            });
        }
        if p != k {
            lu.swap_rows(p, k);
            x.swap_rows(p, k);
        }
        let piv = lu[(k, k)];
        for i in (k + 1)..n {
            let factor = lu[(i, k)] / piv;
            lu[(i, k)] = factor;
            for j in (k + 1)..n {
                lu[(i, j)] -= factor * lu[(k, j)];
            }
            x[i] -= factor * x[k];
        }
    }

    // back substitution on U
    for k in (0..n).rev() {
        let mut s = x[k];
        for j in (k + 1)..n {
            s -= lu[(k, j)] * x[j];
        }
        x[k] = s / lu[(k, k)];
    }
    Ok(x)
}

/// Smallest and largest singular values of a square matrix.
pub fn singular_extremes(a: &DMatrix<f64>) -> (f64, f64) {
    let sv = a.clone().singular_values();
    let mut min = f64::INFINITY;
    let mut max = 0.0_f64;
    for s in sv.iter() {
        min = min.min(*s);
        max = max.max(*s);
    }
    (min, max)
}

/// Spectral norm (largest singular value).
pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    singular_extremes(a).1
}
