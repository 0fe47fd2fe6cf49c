//! Compressed-row matrices and a banded LU solver.
//!
//! The assembled operators are nonsingular M-matrices (positive diagonal,
//! nonpositive off-diagonals, diagonally dominant with a Dirichlet or
//! absorbing row reachable from every row), so Gaussian elimination without
//! pivoting is stable and never meets a zero pivot. The factorization is
//! kept so several right-hand sides can share one elimination.

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    n: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    /// Builds a square matrix from per-row `(column, value)` lists.
    /// Duplicate columns within a row are summed.
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>) -> Self {
        let n = rows.len();
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for mut row in rows {
            row.sort_by_key(|e| e.0);
            let start = indices.len();
            for (c, v) in row {
                debug_assert!(c < n);
                if indices.len() > start && *indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            n,
            indptr,
            indices,
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_rows((0..n).map(|i| vec![(i, 1.0)]).collect())
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        self.indices[a..b].iter().copied().zip(self.values[a..b].iter().copied())
    }

    pub fn row_nnz(&self, i: usize) -> usize {
        self.indptr[i + 1] - self.indptr[i]
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n).map(|i| self.row(i).map(|(c, v)| v * x[c]).sum()).collect()
    }

    /// Lower and upper half-bandwidths.
    pub fn bandwidths(&self) -> (usize, usize) {
        let mut lo = 0;
        let mut hi = 0;
        for i in 0..self.n {
            for (c, _) in self.row(i) {
                if c < i {
                    lo = lo.max(i - c);
                } else {
                    hi = hi.max(c - i);
                }
            }
        }
        (lo, hi)
    }

    /// Relative residual `|A x - b|_inf / max(1, |b|_inf)`.
    pub fn relative_residual(&self, x: &[f64], b: &[f64]) -> f64 {
        let ax = self.mul_vec(x);
        let r = ax.iter().zip(b).fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        r / scale
    }
}

/// Doolittle LU of a banded matrix, stored row-major with the diagonal at
/// offset `lower` inside each row of width `lower + upper + 1`.
#[derive(Debug, Clone)]
pub struct BandedLu {
    n: usize,
    lower: usize,
    upper: usize,
    data: Vec<f64>,
}

impl BandedLu {
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.n();
        let (lower, upper) = a.bandwidths();
        let width = lower + upper + 1;
        let mut data = vec![0.0; n * width];
        for i in 0..n {
            for (c, v) in a.row(i) {
                data[i * width + c + lower - i] += v;
            }
        }
        for k in 0..n {
            let pivot = data[k * width + lower];
            if !(pivot.is_finite() && pivot.abs() > f64::MIN_POSITIVE) {
                return Err(Error::SingularPivot { row: k, pivot });
            }
            let jmax = (k + upper).min(n - 1);
            let imax = (k + lower).min(n - 1);
            let (head, tail) = data.split_at_mut((k + 1) * width);
            let pivot_row = &head[k * width + lower + 1..k * width + lower + 1 + (jmax - k)];
            for i in k + 1..=imax {
                let row = &mut tail[(i - k - 1) * width..(i - k) * width];
                let off = k + lower - i;
                let l = row[off];
                if l == 0.0 {
                    continue;
                }
                let l = l / pivot;
                row[off] = l;
                for (dst, &u) in row[off + 1..off + 1 + pivot_row.len()].iter_mut().zip(pivot_row) {
                    *dst -= l * u;
                }
            }
        }
        Ok(Self {
            n,
            lower,
            upper,
            data,
        })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let (n, lo, up) = (self.n, self.lower, self.upper);
        let width = lo + up + 1;
        let mut x = b.to_vec();
        for i in 0..n {
            let start = i.saturating_sub(lo);
            let row = &self.data[i * width..];
            let mut s = x[i];
            for (c, xc) in x.iter().enumerate().take(i).skip(start) {
                s -= row[c + lo - i] * xc;
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let end = (i + up).min(n - 1);
            let row = &self.data[i * width..];
            let mut s = x[i];
            for (c, xc) in x.iter().enumerate().take(end + 1).skip(i + 1) {
                s -= row[c + lo - i] * xc;
            }
            x[i] = s / row[lo];
        }
        x
    }
}

/// A factored operator together with the matrix used for residual checks.
#[derive(Debug, Clone)]
pub struct Factored {
    matrix: CsrMatrix,
    lu: BandedLu,
}

impl Factored {
    pub fn new(matrix: CsrMatrix) -> Result<Self> {
        let lu = BandedLu::factor(&matrix)?;
        Ok(Self { matrix, lu })
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Solves with up to three steps of iterative refinement until the
    /// relative residual is at most `tol`.
    pub fn solve(&self, b: &[f64], tol: f64) -> Result<Vec<f64>> {
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        let mut x = self.lu.solve(b);
        let mut res = f64::INFINITY;
        for _ in 0..4 {
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("solution"));
            }
            res = self.matrix.relative_residual(&x, b);
            if res <= tol {
                return Ok(x);
            }
            let ax = self.matrix.mul_vec(&x);
            let r: Vec<f64> = b.iter().zip(&ax).map(|(p, q)| p - q).collect();
            let dx = self.lu.solve(&r);
            for (xi, d) in x.iter_mut().zip(dx) {
                *xi += d;
            }
        }
        Err(Error::ResidualTooLarge {
            residual: res,
            target: tol,
        })
    }
}
