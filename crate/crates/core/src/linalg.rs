//! Dense symmetric positive-definite solves for the least-squares fits.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Relative pivot size below which a normal matrix is treated as singular.
const PIVOT_TOL: f64 = 1e-13;

/// Cholesky factor of a symmetric positive-definite matrix.
pub(crate) struct SpdFactor(nalgebra::Cholesky<f64, nalgebra::Dyn>);

impl SpdFactor {
    /// Factors `a`, given row-major as `n x n`.
    pub(crate) fn new(a: &[f64], n: usize) -> Result<Self> {
        if a.len() != n * n {
            return Err(Error::dim(format!("{} entries cannot form a {n}x{n} matrix", a.len())));
        }
        let m = DMatrix::from_row_slice(n, n, a);
        let scale = (0..n).map(|i| m[(i, i)].abs()).fold(0.0, f64::max);
        let chol = m
            .cholesky()
            .ok_or_else(|| Error::Singular("normal matrix is not positive definite".into()))?;
        let l = chol.l_dirty();
        let min_pivot = (0..n).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
        if !(min_pivot > PIVOT_TOL * scale) {
            return Err(Error::Singular(format!(
                "normal matrix is numerically rank deficient (pivot {min_pivot:e}, scale {scale:e})"
            )));
        }
        Ok(SpdFactor(chol))
    }

    pub(crate) fn solve(&self, b: &[f64]) -> Vec<f64> {
        self.0.solve(&DVector::from_column_slice(b)).iter().copied().collect()
    }
}

/// Solves `A x = b` for symmetric positive-definite `A` given row-major.
pub(crate) fn solve_spd(a: &[f64], b: &[f64]) -> Result<Vec<f64>> {
    Ok(SpdFactor::new(a, b.len())?.solve(b))
}

/// Accumulated normal equations `Z'Z beta = Z'y`, reusable across ridge values.
pub(crate) struct NormalEquations {
    p: usize,
    ztz: Vec<f64>,
    zty: Vec<f64>,
}

impl NormalEquations {
    pub(crate) fn new<'a>(p: usize, rows: impl Iterator<Item = (&'a [f64], f64)>) -> Self {
        let mut ztz = vec![0.0; p * p];
        let mut zty = vec![0.0; p];
        for (z, y) in rows {
            debug_assert_eq!(z.len(), p);
            for i in 0..p {
                let zi = z[i];
                if zi == 0.0 {
                    continue;
                }
                zty[i] += zi * y;
                let row = &mut ztz[i * p..(i + 1) * p];
                for (cell, &zj) in row[i..].iter_mut().zip(&z[i..]) {
                    *cell += zi * zj;
                }
            }
        }
        for i in 0..p {
            for j in 0..i {
                ztz[i * p + j] = ztz[j * p + i];
            }
        }
        NormalEquations { p, ztz, zty }
    }

    /// Minimizes `|y - Z beta|^2 + ridge * sum_{j in penalized} beta_j^2`.
    pub(crate) fn solve(&self, penalized: &[bool], ridge: f64) -> Result<Vec<f64>> {
        debug_assert_eq!(penalized.len(), self.p);
        let mut a = self.ztz.clone();
        for (i, _) in penalized.iter().enumerate().filter(|(_, &pen)| pen) {
            a[i * self.p + i] += ridge;
        }
        solve_spd(&a, &self.zty)
    }
}

/// Ridge least squares in one shot; see [`NormalEquations::solve`].
pub(crate) fn ridge_least_squares<'a>(
    rows: impl Iterator<Item = (&'a [f64], f64)>,
    penalized: &[bool],
    ridge: f64,
) -> Result<Vec<f64>> {
    NormalEquations::new(penalized.len(), rows).solve(penalized, ridge)
}
