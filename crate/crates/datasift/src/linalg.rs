//! Dense symmetric positive-definite solves.
//!
//! The Hessians and Gram matrices in this crate are small (feature dimension
//! plus intercept), so a plain Cholesky factorization is all we need. The
//! factor is kept around where many right-hand sides share one matrix.

use ndarray::{Array1, Array2};

use crate::error::{Error, Result};

/// Lower-triangular Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    l: Array2<f64>,
}

impl CholeskyFactor {
    /// Factor `a` as `L Lᵀ`. Fails if `a` is not positive definite
    /// (non-positive pivot) or contains non-finite entries.
    pub fn factor(a: &Array2<f64>) -> Result<CholeskyFactor> {
        let n = a.nrows();
        if a.ncols() != n {
            return Err(Error::Dimension { expected: n, got: a.ncols() });
        }
        let mut l = Array2::<f64>::zeros((n, n));
        for j in 0..n {
            let mut d = a[[j, j]];
            for k in 0..j {
                d -= l[[j, k] ] * l[[j, k]];
            }
            if !d.is_finite() {
                return Err(Error::Numeric("non-finite pivot in factorization".into()));
            }
            if d <= 0.0 {
                return Err(Error::Optimization(format!(
                    "matrix not positive definite (pivot {d:.3e} at {j})"
                )));
            }
            l[[j, j]] = d.sqrt();
            for i in (j + 1)..n {
                let mut s = a[[i, j]];
                for k in 0..j {
                    s -= l[[i, k]] * l[[j, k]];
                }
                l[[i, j]] = s / l[[j, j]];
            }
        }
        Ok(CholeskyFactor { l })
    }

    pub fn dim(&self) -> usize {
        self.l.nrows()
    }

    /// Solve `A x = b` using the stored factor.
    pub fn solve(&self, b: &Array1<f64>) -> Result<Array1<f64>> {
        let n = self.dim();
        if b.len() != n {
            return Err(Error::Dimension { expected: n, got: b.len() });
        }
        // Forward: L y = b
        let mut y = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mut s = b[i];
            for k in 0..i {
                s -= self.l[[i, k]] * y[k];
            }
            y[i] = s / self.l[[i, i]];
        }
        // Backward: Lᵀ x = y
        let mut x = Array1::<f64>::zeros(n);
        for i in (0..n).rev() {
            let mut s = y[i];
            for k in (i + 1)..n {
                s -= self.l[[k, i]] * x[k];
            }
            x[i] = s / self.l[[i, i]];
        }
        Ok(x)
    }
}
