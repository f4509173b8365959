use serde::{Deserialize, Serialize};

use super::scalar::Scalar;
use crate::error::{Error, Result};

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Matrix<T = f32> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Scalar> Matrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn filled(rows: usize, cols: usize, value: T) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![value; rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "from_vec",
                left: (rows, cols),
                right: (data.len(), 1),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(rows.len() * cols);
        for row in rows {
            if row.len() != cols {
                return Err(Error::ShapeMismatch {
                    op: "from_rows",
                    left: (rows.len(), cols),
                    right: (1, row.len()),
                });
            }
            data.extend_from_slice(row);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
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
    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    #[inline]
    pub fn data(&self) -> &[T] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<T> {
        self.data
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.data[r * self.cols + c]
    }

    #[inline]
    pub fn set(&mut self, r: usize, c: usize, value: T) {
        self.data[r * self.cols + c] = value;
    }

    #[inline]
    pub fn row(&self, r: usize) -> &[T] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, r: usize) -> &mut [T] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn fill(&mut self, value: T) {
        self.data.iter_mut().for_each(|v| *v = value);
    }

    fn check_same_shape(&self, other: &Matrix<T>, op: &'static str) -> Result<()> {
        if self.shape() != other.shape() {
            return Err(Error::ShapeMismatch {
                op,
                left: self.shape(),
                right: other.shape(),
            });
        }
        Ok(())
    }

    pub fn add(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = self.clone();
        out.add_assign(other)?;
        Ok(out)
    }

    pub fn add_assign(&mut self, other: &Matrix<T>) -> Result<()> {
        self.check_same_shape(other, "add")?;
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += *b;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: T) {
        self.data.iter_mut().for_each(|v| *v *= factor);
    }

    pub fn hadamard(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_same_shape(other, "hadamard")?;
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| a * b)
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data,
        })
    }

    pub fn transpose(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    /// `self · other`
    pub fn matmul(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Matrix::zeros(self.rows, other.cols);
        out.add_matmul(self, other)?;
        Ok(out)
    }

    /// `self · otherᵀ`
    pub fn matmul_bt(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Matrix::zeros(self.rows, other.rows);
        out.add_matmul_bt(self, other)?;
        Ok(out)
    }

    /// `selfᵀ · other`
    pub fn matmul_at(&self, other: &Matrix<T>) -> Result<Matrix<T>> {
        let mut out = Matrix::zeros(self.cols, other.cols);
        out.add_matmul_at(self, other)?;
        Ok(out)
    }

    /// `self += a · b`
    pub fn add_matmul(&mut self, a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
        if a.cols != b.rows || self.rows != a.rows || self.cols != b.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let n = b.cols;
        for i in 0..a.rows {
            let out_row = &mut self.data[i * n..(i + 1) * n];
            for (k, &aik) in a.row(i).iter().enumerate() {
                if aik == T::zero() {
                    continue;
                }
                for (o, &bkj) in out_row.iter_mut().zip(b.row(k)) {
                    *o += aik * bkj;
                }
            }
        }
        Ok(())
    }

    /// `self += a · bᵀ`
    pub fn add_matmul_bt(&mut self, a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
        if a.cols != b.cols || self.rows != a.rows || self.cols != b.rows {
            return Err(Error::ShapeMismatch {
                op: "matmul_bt",
                left: a.shape(),
                right: b.shape(),
            });
        }
        for i in 0..a.rows {
            let ai = a.row(i);
            for j in 0..b.rows {
                self.data[i * self.cols + j] += dot(ai, b.row(j));
            }
        }
        Ok(())
    }

    /// `self += aᵀ · b`
    pub fn add_matmul_at(&mut self, a: &Matrix<T>, b: &Matrix<T>) -> Result<()> {
        if a.rows != b.rows || self.rows != a.cols || self.cols != b.cols {
            return Err(Error::ShapeMismatch {
                op: "matmul_at",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let n = b.cols;
        for k in 0..a.rows {
            let bk = b.row(k);
            for (i, &aki) in a.row(k).iter().enumerate() {
                if aki == T::zero() {
                    continue;
                }
                let out_row = &mut self.data[i * n..(i + 1) * n];
                for (o, &bkj) in out_row.iter_mut().zip(bk) {
                    *o += aki * bkj;
                }
            }
        }
        Ok(())
    }

    /// Copy of columns `[start, start + width)`.
    pub fn columns(&self, start: usize, width: usize) -> Matrix<T> {
        let mut out = Matrix::zeros(self.rows, width);
        for r in 0..self.rows {
            out.row_mut(r)
                .copy_from_slice(&self.row(r)[start..start + width]);
        }
        out
    }

    /// Adds `block` into columns `[start, start + block.cols)`.
    pub fn add_columns(&mut self, start: usize, block: &Matrix<T>) {
        debug_assert_eq!(self.rows, block.rows);
        for r in 0..self.rows {
            let dst = &mut self.row_mut(r)[start..start + block.cols];
            for (d, s) in dst.iter_mut().zip(block.row(r)) {
                *d += *s;
            }
        }
    }

    /// Copy of rows `[start, end)`.
    pub fn slice_rows(&self, start: usize, end: usize) -> Matrix<T> {
        Matrix {
            rows: end - start,
            cols: self.cols,
            data: self.data[start * self.cols..end * self.cols].to_vec(),
        }
    }

    /// Column-wise sum, as a `1 × cols` matrix.
    pub fn sum_rows(&self) -> Matrix<T> {
        let mut out = Matrix::zeros(1, self.cols);
        for r in 0..self.rows {
            for (o, v) in out.data.iter_mut().zip(self.row(r)) {
                *o += *v;
            }
        }
        out
    }

    pub fn sum(&self) -> f64 {
        self.data.iter().map(|v| v.as_f64()).sum()
    }

    /// Element-wise conversion to another precision.
    pub fn cast<U: Scalar>(&self) -> Matrix<U> {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| U::from_f64(v.as_f64())).collect(),
        }
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}
