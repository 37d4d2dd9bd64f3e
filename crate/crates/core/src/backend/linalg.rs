//! Small dense symmetric-matrix helpers for the PLDA backend.

use crate::error::{Error, Result};
use crate::scalar::{dot, Scalar};

/// Row-major square matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Mat<T> {
    pub n: usize,
    pub data: Vec<T>,
}

impl<T: Scalar> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        Mat {
            n,
            data: vec![T::zero(); n * n],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m.data[i * n + i] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::Shape("matrix rows must form a square".into()));
        }
        Ok(Mat {
            n,
            data: rows.concat(),
        })
    }

    pub fn at(&self, i: usize, j: usize) -> T {
        self.data[i * self.n + j]
    }

    pub fn at_mut(&mut self, i: usize, j: usize) -> &mut T {
        &mut self.data[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.n..(i + 1) * self.n]
    }

    pub fn add(&self, o: &Mat<T>) -> Mat<T> {
        Mat {
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| a + b).collect(),
        }
    }

    pub fn sub(&self, o: &Mat<T>) -> Mat<T> {
        Mat {
            n: self.n,
            data: self.data.iter().zip(&o.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn scale(&self, k: T) -> Mat<T> {
        Mat {
            n: self.n,
            data: self.data.iter().map(|&a| a * k).collect(),
        }
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut t = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                *t.at_mut(j, i) = self.at(i, j);
            }
        }
        t
    }

    pub fn matmul(&self, o: &Mat<T>) -> Mat<T> {
        let n = self.n;
        let mut out = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.at(i, k);
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * o.data[k * n + j];
                }
            }
        }
        out
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n).map(|i| dot(self.row(i), x)).collect()
    }

    /// `x^T M y`
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        dot(x, &self.matvec(y))
    }

    /// `(M + M^T) / 2`
    pub fn symmetrize(&self) -> Mat<T> {
        let half = T::of(0.5);
        self.add(&self.transpose()).scale(half)
    }

    pub fn trace(&self) -> T {
        (0..self.n).map(|i| self.at(i, i)).sum()
    }

    pub fn frobenius(&self) -> T {
        self.data.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Adds `x x^T * w`.
    pub fn add_outer(&mut self, x: &[T], w: T) {
        let n = self.n;
        for i in 0..n {
            let xi = x[i] * w;
            for j in 0..n {
                self.data[i * n + j] += xi * x[j];
            }
        }
    }

    pub fn add_diagonal(&mut self, v: T) {
        for i in 0..self.n {
            self.data[i * self.n + i] += v;
        }
    }
}

/// Lower Cholesky factor of a symmetric positive-definite matrix.
#[derive(Debug, Clone)]
pub struct Cholesky<T> {
    pub lower: Mat<T>,
}

impl<T: Scalar> Cholesky<T> {
    pub fn new(a: &Mat<T>) -> Result<Self> {
        let n = a.n;
        let mut l = Mat::zeros(n);
        for j in 0..n {
            let mut d = a.at(j, j);
            for k in 0..j {
                d -= l.at(j, k) * l.at(j, k);
            }
            if !(d > T::zero()) || !d.is_finite() {
                return Err(Error::Numerical(format!(
                    "matrix is not positive definite (pivot {j})"
                )));
            }
            let d = d.sqrt();
            *l.at_mut(j, j) = d;
            for i in j + 1..n {
                let mut s = a.at(i, j);
                for k in 0..j {
                    s -= l.at(i, k) * l.at(j, k);
                }
                *l.at_mut(i, j) = s / d;
            }
        }
        Ok(Cholesky { lower: l })
    }

    pub fn logdet(&self) -> T {
        let two = T::of(2.0);
        (0..self.lower.n).map(|i| two * self.lower.at(i, i).ln()).sum()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.lower.n;
        let l = &self.lower;
        let mut y = b.to_vec();
        for i in 0..n {
            for k in 0..i {
                let v = l.at(i, k) * y[k];
                y[i] -= v;
            }
            y[i] /= l.at(i, i);
        }
        for i in (0..n).rev() {
            for k in i + 1..n {
                let v = l.at(k, i) * y[k];
                y[i] -= v;
            }
            y[i] /= l.at(i, i);
        }
        y
    }

    pub fn inverse(&self) -> Mat<T> {
        let n = self.lower.n;
        let mut inv = Mat::zeros(n);
        let mut e = vec![T::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|v| *v = T::zero());
            e[j] = T::one();
            let col = self.solve(&e);
            for i in 0..n {
                *inv.at_mut(i, j) = col[i];
            }
        }
        inv.symmetrize()
    }
}

/// Cholesky of `a`, adding a growing ridge to the diagonal until it succeeds.
/// Returns the ridge that was needed (zero when none).
pub fn cholesky_ridged<T: Scalar>(a: &Mat<T>, start: f64, what: &str) -> Result<(Cholesky<T>, f64)> {
    if let Ok(c) = Cholesky::new(a) {
        return Ok((c, 0.0));
    }
    let base = (a.trace().as_f64() / a.n.max(1) as f64).abs().max(1e-12);
    let mut eps = start.max(1e-12) * base;
    for _ in 0..16 {
        let mut r = a.clone();
        r.add_diagonal(T::of(eps));
        if let Ok(c) = Cholesky::new(&r) {
            log::warn!("{what} covariance is singular; added ridge {eps:.3e}");
            return Ok((c, eps));
        }
        eps *= 10.0;
    }
    Err(Error::Numerical(format!("{what} covariance could not be regularized")))
}
