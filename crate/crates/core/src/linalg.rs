//! Small dense and banded linear-algebra helpers.

use crate::error::{Error, Result};

/// Symmetric tridiagonal matrix stored by its diagonal and off-diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct SymTridiagonal {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl SymTridiagonal {
    pub fn new(diag: Vec<f64>, off: Vec<f64>) -> Self {
        assert_eq!(off.len() + 1, diag.len(), "off-diagonal length must be n-1");
        Self { diag, off }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        debug_assert_eq!(y.len(), n);
        for i in 0..n {
            let mut acc = self.diag[i] * x[i];
            if i > 0 {
                acc += self.off[i - 1] * x[i - 1];
            }
            if i + 1 < n {
                acc += self.off[i] * x[i + 1];
            }
            y[i] = acc;
        }
    }

    pub fn to_dense(&self) -> nalgebra::DMatrix<f64> {
        let n = self.dim();
        nalgebra::DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i + 1 == j {
                self.off[i]
            } else if j + 1 == i {
                self.off[j]
            } else {
                0.0
            }
        })
    }

    pub fn factorize(&self) -> Result<TridiagonalLdl> {
        TridiagonalLdl::new(self)
    }
}

/// `L D Lᵀ` factorization of a symmetric positive definite tridiagonal matrix.
#[derive(Debug, Clone)]
pub struct TridiagonalLdl {
    d: Vec<f64>,
    l: Vec<f64>,
}

impl TridiagonalLdl {
    pub fn new(a: &SymTridiagonal) -> Result<Self> {
        let n = a.dim();
        let mut d = vec![0.0; n];
        let mut l = vec![0.0; n.saturating_sub(1)];
        d[0] = a.diag[0];
        for i in 1..n {
            let prev = d[i - 1];
            if !(prev > 0.0) || !prev.is_finite() {
                return Err(Error::Singular { row: i - 1, pivot: prev });
            }
            l[i - 1] = a.off[i - 1] / prev;
            d[i] = a.diag[i] - l[i - 1] * a.off[i - 1];
        }
        if !(d[n - 1] > 0.0) || !d[n - 1].is_finite() {
            return Err(Error::Singular {
                row: n - 1,
                pivot: d[n - 1],
            });
        }
        Ok(Self { d, l })
    }

    pub fn dim(&self) -> usize {
        self.d.len()
    }

    /// Solves `A X = B` in place for `k` right-hand sides stored node-major,
    /// `x[i * k + c]` being row `i` of column `c`.
    pub fn solve_many_in_place(&self, x: &mut [f64], k: usize) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n * k);
        for i in 1..n {
            let li = self.l[i - 1];
            let (prev, cur) = x[(i - 1) * k..(i + 1) * k].split_at_mut(k);
            for (c, p) in cur.iter_mut().zip(prev.iter()) {
                *c -= li * p;
            }
        }
        for i in 0..n {
            let inv = 1.0 / self.d[i];
            for v in &mut x[i * k..(i + 1) * k] {
                *v *= inv;
            }
        }
        for i in (0..n - 1).rev() {
            let li = self.l[i];
            let (cur, next) = x[i * k..(i + 2) * k].split_at_mut(k);
            for (c, nx) in cur.iter_mut().zip(next.iter()) {
                *c -= li * nx;
            }
        }
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 1..n {
            x[i] -= self.l[i - 1] * x[i - 1];
        }
        for i in 0..n {
            x[i] /= self.d[i];
        }
        for i in (0..n - 1).rev() {
            x[i] -= self.l[i] * x[i + 1];
        }
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    debug_assert_eq!(x.len(), y.len());
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}
