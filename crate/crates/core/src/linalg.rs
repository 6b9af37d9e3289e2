//! Small dense matrices and factorizations for cell-local work, and a
//! one-shot sparse direct solve.

use crate::scalar::Real;
use faer::linalg::solvers::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::MatMut;
use std::ops::{Index, IndexMut};

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[T] {
        &self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// Copy of the sub-block `[r0, r0 + nr) x [c0, c0 + nc)`.
    pub fn block(&self, r0: usize, c0: usize, nr: usize, nc: usize) -> Self {
        Self::from_fn(nr, nc, |i, j| self[(r0 + i, c0 + j)])
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut out = Self::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                let orow = other.row(k);
                for (o, &b) in out.row_mut(i).iter_mut().zip(orow) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> T {
        self.data
            .iter()
            .fold(T::zero(), |m, &v| if v.abs() > m { v.abs() } else { m })
    }

    /// LU factorization with partial pivoting. `None` if a zero pivot is met.
    pub fn lu(&self) -> Option<LuFactors<T>> {
        LuFactors::new(self.clone())
    }

    /// Cholesky factor `L` with `self = L L^T`. `None` if not positive definite.
    pub fn cholesky(&self) -> Option<Self> {
        let n = self.rows;
        assert_eq!(n, self.cols);
        let mut l = Self::zeros(n, n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d > T::zero()) {
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

    /// Inverse of a lower-triangular matrix.
    pub fn lower_triangular_inverse(&self) -> Self {
        let n = self.rows;
        let mut inv = Self::zeros(n, n);
        for col in 0..n {
            for i in col..n {
                let mut s = if i == col { T::one() } else { T::zero() };
                for k in col..i {
                    s -= self[(i, k)] * inv[(k, col)];
                }
                inv[(i, col)] = s / self[(i, i)];
            }
        }
        inv
    }
}

impl<T> Index<(usize, usize)> for DenseMatrix<T> {
    type Output = T;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.cols + j]
    }
}

impl<T> IndexMut<(usize, usize)> for DenseMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |s, (&x, &y)| s + x * y)
}

pub fn max_abs<T: Real>(v: &[T]) -> T {
    v.iter().fold(T::zero(), |m, &x| if x.abs() > m { x.abs() } else { m })
}

/// Row-pivoted LU factors of a square matrix, `P A = L U`.
#[derive(Debug, Clone)]
pub struct LuFactors<T> {
    lu: DenseMatrix<T>,
    perm: Vec<usize>,
}

impl<T: Real> LuFactors<T> {
    fn new(mut a: DenseMatrix<T>) -> Option<Self> {
        let n = a.rows;
        assert_eq!(n, a.cols);
        let scale = a.max_abs();
        if !(scale > T::zero()) {
            return None;
        }
        let tiny = scale * T::epsilon() * T::of(n.max(1));
        let mut perm: Vec<usize> = (0..n).collect();
        for k in 0..n {
            let mut p = k;
            let mut best = a[(k, k)].abs();
            for i in k + 1..n {
                let v = a[(i, k)].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            if !(best > tiny) {
                return None;
            }
            if p != k {
                perm.swap(p, k);
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
            }
            let pivot = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / pivot;
                a[(i, k)] = f;
                if f != T::zero() {
                    for j in k + 1..n {
                        let u = a[(k, j)];
                        a[(i, j)] -= f * u;
                    }
                }
            }
        }
        Some(Self { lu: a, perm })
    }

    pub fn dim(&self) -> usize {
        self.perm.len()
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let n = self.dim();
        let mut x: Vec<T> = self.perm.iter().map(|&p| b[p]).collect();
        for i in 0..n {
            let mut s = x[i];
            for j in 0..i {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = x[i];
            for j in i + 1..n {
                s -= self.lu[(i, j)] * x[j];
            }
            x[i] = s / self.lu[(i, i)];
        }
        x
    }

    /// Solves `A X = B` column by column.
    pub fn solve_matrix(&self, b: &DenseMatrix<T>) -> DenseMatrix<T> {
        let n = self.dim();
        assert_eq!(b.rows, n);
        let m = b.cols;
        let mut x = DenseMatrix::zeros(n, m);
        for (i, &p) in self.perm.iter().enumerate() {
            x.row_mut(i).copy_from_slice(b.row(p));
        }
        for i in 0..n {
            for j in 0..i {
                let l = self.lu[(i, j)];
                if l == T::zero() {
                    continue;
                }
                for c in 0..m {
                    let v = x[(j, c)];
                    x[(i, c)] -= l * v;
                }
            }
        }
        for i in (0..n).rev() {
            for j in i + 1..n {
                let u = self.lu[(i, j)];
                if u == T::zero() {
                    continue;
                }
                for c in 0..m {
                    let v = x[(j, c)];
                    x[(i, c)] -= u * v;
                }
            }
            let d = self.lu[(i, i)];
            for c in 0..m {
                x[(i, c)] /= d;
            }
        }
        x
    }
}

/// Solves a square sparse system given as triplets (duplicates summed)
/// with one step of iterative refinement. `None` if the factorization
/// fails or the relative residual exceeds `tol`.
pub fn sparse_solve<T: Real>(n: usize, triplets: &[(usize, usize, T)], rhs: &[T], tol: T) -> Option<Vec<T>> {
    let t: Vec<Triplet<usize, usize, T>> = triplets.iter().map(|&(r, c, v)| Triplet::new(r, c, v)).collect();
    let mat = SparseColMat::<usize, T>::try_new_from_triplets(n, n, &t).ok()?;
    let lu = mat.sp_lu().ok()?;
    let apply = |x: &[T]| {
        let mut y = vec![T::zero(); n];
        for &(r, c, v) in triplets {
            y[r] += v * x[c];
        }
        y
    };
    let inverse = |b: &[T]| {
        let mut x = b.to_vec();
        lu.solve_in_place(MatMut::from_column_major_slice_mut(&mut x, n, 1));
        x
    };
    let mut x = inverse(rhs);
    let r: Vec<T> = apply(&x).iter().zip(rhs).map(|(a, b)| *b - *a).collect();
    for (xi, d) in x.iter_mut().zip(inverse(&r)) {
        *xi += d;
    }
    let res = apply(&x)
        .iter()
        .zip(rhs)
        .fold(T::zero(), |m, (a, b)| m.max((*a - *b).abs()));
    let scale = triplets.iter().fold(T::zero(), |m, &(_, _, v)| m.max(v.abs())) * max_abs(&x) + max_abs(rhs);
    let ok = x.iter().all(|v| v.is_finite()) && res <= tol * scale.max(T::min_positive_value());
    ok.then_some(x)
}
