//! Small dense complex linear algebra: LU with partial pivoting, solve,
//! inverse, and log-magnitude determinants.
//!
//! The demixing matrices are N x N with N equal to the channel count (2 or 3
//! at the scales this crate targets), so a direct factorization is used
//! rather than an external LAPACK binding.

use ndarray::{Array1, Array2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `|det|` below this raises a singularity error instead of returning a
/// meaningless log-determinant.
pub const MIN_ABS_DET: f64 = 1e-300;

/// LU factorization with partial pivoting, stored in place.
struct Lu {
    /// Combined L (unit lower) and U factors.
    lu: Array2<Complex64>,
    /// Row permutation: `perm[k]` is the source row of pivot step `k`.
    perm: Vec<usize>,
}

fn factor(a: &Array2<Complex64>) -> Result<Lu> {
    let n = a.nrows();
    if a.ncols() != n {
        return Err(Error::DimensionMismatch(format!(
            "LU requires a square matrix, got {}x{}",
            a.nrows(),
            a.ncols()
        )));
    }
    let mut lu = a.clone();
    let mut perm = Vec::with_capacity(n);
    for k in 0..n {
        let mut pivot = k;
        let mut best = lu[[k, k]].norm_sqr();
        for r in (k + 1)..n {
            let mag = lu[[r, k]].norm_sqr();
            if mag > best {
                best = mag;
                pivot = r;
            }
        }
        if best == 0.0 {
            return Err(Error::Singular(format!("zero pivot at column {k}")));
        }
        if pivot != k {
            for c in 0..n {
                let tmp = lu[[k, c]];
                lu[[k, c]] = lu[[pivot, c]];
                lu[[pivot, c]] = tmp;
            }
        }
        perm.push(pivot);
        let diag = lu[[k, k]];
        for r in (k + 1)..n {
            let factor = lu[[r, k]] / diag;
            lu[[r, k]] = factor;
            for c in (k + 1)..n {
                let sub = factor * lu[[k, c]];
                lu[[r, c]] -= sub;
            }
        }
    }
    Ok(Lu { lu, perm })
}

impl Lu {
    fn solve_into(&self, mut b: Array1<Complex64>) -> Array1<Complex64> {
        let n = self.lu.nrows();
        for k in 0..n {
            b.swap(k, self.perm[k]);
        }
        // forward substitution, unit lower triangle
        for r in 1..n {
            let mut acc = b[r];
            for c in 0..r {
                acc -= self.lu[[r, c]] * b[c];
            }
            b[r] = acc;
        }
        // back substitution
        for r in (0..n).rev() {
            let mut acc = b[r];
            for c in (r + 1)..n {
                acc -= self.lu[[r, c]] * b[c];
            }
            b[r] = acc / self.lu[[r, r]];
        }
        b
    }

    fn log_abs_det(&self) -> f64 {
        let n = self.lu.nrows();
        let mut acc = 0.0;
        for k in 0..n {
            acc += self.lu[[k, k]].norm().ln();
        }
        acc
    }
}

/// Solve `a x = b` for a square complex system.
pub fn solve(a: &Array2<Complex64>, b: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    if b.len() != a.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "solve: matrix is {}x{} but rhs has length {}",
            a.nrows(),
            a.ncols(),
            b.len()
        )));
    }
    let lu = factor(a)?;
    Ok(lu.solve_into(b.clone()))
}

/// Inverse of a square complex matrix.
pub fn inverse(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    let n = a.nrows();
    let lu = factor(a)?;
    let mut inv = Array2::zeros((n, n));
    for col in 0..n {
        let mut e = Array1::zeros(n);
        e[col] = Complex64::new(1.0, 0.0);
        let x = lu.solve_into(e);
        for row in 0..n {
            inv[[row, col]] = x[row];
        }
    }
    Ok(inv)
}

/// `ln |det a|`, via the pivoted factorization so the product never
/// overflows or underflows. Errors when `|det|` falls below [`MIN_ABS_DET`].
pub fn log_abs_det(a: &Array2<Complex64>) -> Result<f64> {
    let lu = factor(a)?;
    let val = lu.log_abs_det();
    if val < MIN_ABS_DET.ln() {
        return Err(Error::Singular(format!(
            "determinant magnitude below {MIN_ABS_DET:e}"
        )));
    }
    Ok(val)
}
