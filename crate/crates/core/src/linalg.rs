//! Small dense linear algebra for the estimators (a dozen parameters at most).

use std::ops::{Index, IndexMut};

use crate::scalar::Real;

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix<F> {
    rows: usize,
    cols: usize,
    data: Vec<F>,
}

impl<F: Real> Matrix<F> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![F::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = F::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<F>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged matrix rows");
            data.extend_from_slice(r);
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[F] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn diag(&self) -> Vec<F> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).collect()
    }

    pub fn mul_vec(&self, v: &[F]) -> Vec<F> {
        assert_eq!(v.len(), self.cols);
        (0..self.rows)
            .map(|i| self.row(i).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn scale(&mut self, s: F) {
        for x in &mut self.data {
            *x *= s;
        }
    }

    /// Adds `s * u vᵀ` in place.
    pub fn add_outer(&mut self, s: F, u: &[F], v: &[F]) {
        for i in 0..self.rows {
            for j in 0..self.cols {
                self[(i, j)] += s * u[i] * v[j];
            }
        }
    }

    pub fn symmetrize(&mut self) {
        let two = F::lit(2.0);
        for i in 0..self.rows {
            for j in 0..i {
                let m = (self[(i, j)] + self[(j, i)]) / two;
                self[(i, j)] = m;
                self[(j, i)] = m;
            }
        }
    }

    /// Lower Cholesky factor, or `None` when the matrix is not positive definite.
    pub fn cholesky(&self) -> Option<Matrix<F>> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut l = Matrix::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > F::zero()) || !d.is_finite() {
                return None;
            }
            let d = d.sqrt();
            l[(j, j)] = d;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / d;
            }
        }
        Some(l)
    }

    /// Solves `A x = b` for symmetric positive-definite `A`.
    pub fn solve_spd(&self, b: &[F]) -> Option<Vec<F>> {
        let l = self.cholesky()?;
        Some(cholesky_solve(&l, b))
    }

    /// Inverse of a symmetric positive-definite matrix.
    pub fn inverse_spd(&self) -> Option<Matrix<F>> {
        let l = self.cholesky()?;
        let n = self.rows;
        let mut inv = Matrix::zeros(n, n);
        let mut e = vec![F::zero(); n];
        for j in 0..n {
            e.iter_mut().for_each(|x| *x = F::zero());
            e[j] = F::one();
            let col = cholesky_solve(&l, &e);
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        inv.symmetrize();
        Some(inv)
    }
}

fn cholesky_solve<F: Real>(l: &Matrix<F>, b: &[F]) -> Vec<F> {
    let n = l.rows;
    let mut y = b.to_vec();
    for i in 0..n {
        for k in 0..i {
            let t = l[(i, k)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = l[(k, i)] * y[k];
            y[i] -= t;
        }
        y[i] /= l[(i, i)];
    }
    y
}

impl<F> Index<(usize, usize)> for Matrix<F> {
    type Output = F;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &F {
        &self.data[i * self.cols + j]
    }
}

impl<F> IndexMut<(usize, usize)> for Matrix<F> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut F {
        &mut self.data[i * self.cols + j]
    }
}

/// Solves a general square system by Gaussian elimination with partial pivoting.
pub fn solve_general<F: Real>(a: &Matrix<F>, b: &[F]) -> Option<Vec<F>> {
    let n = a.rows();
    assert_eq!(n, a.cols());
    let mut m = a.clone();
    let mut x = b.to_vec();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| {
            m[(i, col)]
                .abs()
                .partial_cmp(&m[(j, col)].abs())
                .unwrap_or(std::cmp::Ordering::Equal)
        })?;
        if m[(pivot, col)].abs() <= F::epsilon() {
            return None;
        }
        if pivot != col {
            for k in 0..n {
                let t = m[(col, k)];
                m[(col, k)] = m[(pivot, k)];
                m[(pivot, k)] = t;
            }
            x.swap(col, pivot);
        }
        for i in col + 1..n {
            let f = m[(i, col)] / m[(col, col)];
            for k in col..n {
                let t = f * m[(col, k)];
                m[(i, k)] -= t;
            }
            let t = f * x[col];
            x[i] -= t;
        }
    }
    for i in (0..n).rev() {
        for k in i + 1..n {
            let t = m[(i, k)] * x[k];
            x[i] -= t;
        }
        x[i] /= m[(i, i)];
    }
    Some(x)
}
