//! Dense exact-rational matrices and stochastic kernels between levels.
//!
//! Storage is dense; products skip structural zeros, which keeps the
//! up/down kernels (a handful of nonzeros per row) cheap to compose.

use num_traits::{One, Zero};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rational::{format_rational, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<Rational>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Rational::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.set(i, i, Rational::one());
        }
        m
    }

    pub fn from_rows(rows: Vec<Vec<Rational>>) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::SizeMismatch("ragged rows".into()));
        }
        Ok(Self {
            rows: r,
            cols: c,
            data: rows.into_iter().flatten().collect(),
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn add_at(&mut self, i: usize, j: usize, v: &Rational) {
        let slot = &mut self.data[i * self.cols + j];
        *slot = &*slot + v;
    }

    pub fn row(&self, i: usize) -> &[Rational] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vec<Rational> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    /// Nonzero `(column, value)` pairs of row `i`.
    pub fn row_support(&self, i: usize) -> impl Iterator<Item = (usize, &Rational)> {
        self.row(i).iter().enumerate().filter(|(_, v)| !v.is_zero())
    }

    pub fn mul(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.rows {
            return Err(Error::SizeMismatch(format!(
                "{}x{} times {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        let support: Vec<Vec<(usize, &Rational)>> = (0..other.rows)
            .map(|k| other.row_support(k).collect())
            .collect();
        let cols = other.cols;
        let data: Vec<Rational> = (0..self.rows)
            .into_par_iter()
            .flat_map_iter(|i| {
                let mut acc = vec![Rational::zero(); cols];
                for (k, a) in self.row_support(i) {
                    for &(j, b) in &support[k] {
                        acc[j] += a * b;
                    }
                }
                acc
            })
            .collect();
        Ok(Matrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    /// `(A f)(i) = Σ_j A(i, j) f(j)`: the kernel acting on a function.
    pub fn apply(&self, f: &[Rational]) -> Vec<Rational> {
        assert_eq!(f.len(), self.cols, "function length mismatch");
        (0..self.rows)
            .map(|i| {
                self.row_support(i)
                    .fold(Rational::zero(), |acc, (j, a)| acc + a * &f[j])
            })
            .collect()
    }

    /// `(μ A)(j) = Σ_i μ(i) A(i, j)`: a measure pushed through the kernel.
    pub fn push(&self, mu: &[Rational]) -> Vec<Rational> {
        assert_eq!(mu.len(), self.rows, "measure length mismatch");
        let mut out = vec![Rational::zero(); self.cols];
        for (i, m) in mu.iter().enumerate() {
            if m.is_zero() {
                continue;
            }
            for (j, a) in self.row_support(i) {
                out[j] += m * a;
            }
        }
        out
    }

    pub fn scale(&self, s: &Rational) -> Matrix {
        Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| v * s).collect(),
        }
    }

    pub fn add(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        self.zip(other, |a, b| a - b)
    }

    fn zip(&self, other: &Matrix, f: impl Fn(&Rational, &Rational) -> Rational) -> Result<Matrix> {
        if self.rows != other.rows || self.cols != other.cols {
            return Err(Error::SizeMismatch(format!(
                "{}x{} vs {}x{}",
                self.rows, self.cols, other.rows, other.cols
            )));
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(a, b)).collect(),
        })
    }

    /// First entry where the two matrices differ.
    pub fn first_difference(&self, other: &Matrix) -> Option<(usize, usize)> {
        if self.rows != other.rows || self.cols != other.cols {
            return Some((0, 0));
        }
        self.data
            .iter()
            .zip(&other.data)
            .position(|(a, b)| a != b)
            .map(|idx| (idx / self.cols, idx % self.cols))
    }

    pub fn is_row_stochastic(&self) -> bool {
        (0..self.rows).all(|i| {
            let row = self.row(i);
            row.iter().all(|v| *v >= Rational::zero())
                && row.iter().fold(Rational::zero(), |acc, v| acc + v) == Rational::one()
        })
    }

    pub fn rank(&self) -> usize {
        rank(self.data.chunks(self.cols.max(1)).map(<[Rational]>::to_vec).collect())
    }
}

/// Exact rank of a family of vectors by Gaussian elimination over Q.
pub fn rank(mut rows: Vec<Vec<Rational>>) -> usize {
    let cols = rows.first().map_or(0, Vec::len);
    let mut r = 0;
    for c in 0..cols {
        let Some(pivot) = (r..rows.len()).find(|&i| !rows[i][c].is_zero()) else {
            continue;
        };
        rows.swap(r, pivot);
        let inv = rows[r][c].recip();
        let pivot_row: Vec<Rational> = rows[r].iter().map(|v| v * &inv).collect();
        for (i, row) in rows.iter_mut().enumerate() {
            if i == r || row[c].is_zero() {
                continue;
            }
            let factor = row[c].clone();
            for (x, p) in row.iter_mut().zip(&pivot_row).skip(c) {
                *x -= &factor * p;
            }
        }
        rows[r] = pivot_row;
        r += 1;
        if r == rows.len() {
            break;
        }
    }
    r
}

/// An exact row-stochastic matrix from level `from_level` to `to_level`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StochKernel {
    pub from_level: usize,
    pub to_level: usize,
    pub matrix: Matrix,
}

impl StochKernel {
    pub fn new(from_level: usize, to_level: usize, matrix: Matrix) -> Result<Self> {
        if !matrix.is_row_stochastic() {
            return Err(Error::InvalidArgument(format!(
                "kernel {from_level}->{to_level} is not row-stochastic"
            )));
        }
        Ok(Self {
            from_level,
            to_level,
            matrix,
        })
    }

    pub fn identity(level: usize, size: usize) -> Self {
        Self {
            from_level: level,
            to_level: level,
            matrix: Matrix::identity(size),
        }
    }

    pub fn compose(&self, next: &StochKernel) -> Result<StochKernel> {
        if self.to_level != next.from_level {
            return Err(Error::SizeMismatch(format!(
                "cannot compose {}->{} with {}->{}",
                self.from_level, self.to_level, next.from_level, next.to_level
            )));
        }
        Ok(StochKernel {
            from_level: self.from_level,
            to_level: next.to_level,
            matrix: self.matrix.mul(&next.matrix)?,
        })
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        self.matrix.get(i, j)
    }
}

/// JSON interchange form of a kernel or matrix between two enumerated levels.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct KernelExport {
    pub from_level: usize,
    pub to_level: usize,
    pub states_from: Vec<String>,
    pub states_to: Vec<String>,
    pub entries: Vec<Vec<String>>,
}

impl KernelExport {
    pub fn new(
        from_level: usize,
        to_level: usize,
        states_from: Vec<String>,
        states_to: Vec<String>,
        matrix: &Matrix,
    ) -> Self {
        let entries = (0..matrix.rows())
            .map(|i| matrix.row(i).iter().map(format_rational).collect())
            .collect();
        Self {
            from_level,
            to_level,
            states_from,
            states_to,
            entries,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    #[test]
    fn product_matches_naive() {
        let a = Matrix::from_rows(vec![
            vec![rat(1, 2), rat(1, 2), int(0)],
            vec![int(0), rat(1, 3), rat(2, 3)],
        ])
        .unwrap();
        let b = Matrix::from_rows(vec![
            vec![int(1), int(0)],
            vec![rat(1, 4), rat(3, 4)],
            vec![int(0), int(1)],
        ])
        .unwrap();
        let c = a.mul(&b).unwrap();
        for i in 0..2 {
            for j in 0..2 {
                let naive = (0..3).fold(Rational::zero(), |acc, k| acc + a.get(i, k) * b.get(k, j));
                assert_eq!(*c.get(i, j), naive);
            }
        }
        assert!(c.is_row_stochastic());
    }

    #[test]
    fn rank_of_dependent_rows() {
        let rows = vec![
            vec![int(1), int(2), int(3)],
            vec![int(2), int(4), int(6)],
            vec![int(0), int(1), int(1)],
        ];
        assert_eq!(rank(rows), 2);
        assert_eq!(Matrix::identity(4).rank(), 4);
    }

    #[test]
    fn rejects_non_stochastic() {
        let m = Matrix::from_rows(vec![vec![rat(1, 2), rat(1, 3)]]).unwrap();
        assert!(StochKernel::new(1, 2, m).is_err());
    }

    #[test]
    fn apply_and_push() {
        let m = Matrix::from_rows(vec![vec![rat(1, 2), rat(1, 2)], vec![int(0), int(1)]]).unwrap();
        assert_eq!(m.apply(&[int(2), int(4)]), vec![int(3), int(4)]);
        assert_eq!(m.push(&[rat(1, 2), rat(1, 2)]), vec![rat(1, 4), rat(3, 4)]);
    }
}
