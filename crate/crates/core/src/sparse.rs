//! Compressed sparse row blocks with complex entries.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseBlock {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<Complex64>,
}

impl SparseBlock {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            indptr: vec![0; rows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed and
    /// exact zeros dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, Complex64)>,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut indptr = vec![0; rows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<Complex64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < rows && c < cols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                values.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..rows {
            indptr[r + 1] += indptr[r];
        }
        let mut out = Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        };
        out.prune(0.0);
        out
    }

    pub fn from_dense(m: &DMatrix<Complex64>) -> Self {
        let mut t = Vec::new();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                if m[(r, c)] != Complex64::new(0.0, 0.0) {
                    t.push((r, c, m[(r, c)]));
                }
            }
        }
        Self::from_triplets(m.nrows(), m.ncols(), t)
    }

    /// Drops entries with modulus `<= tol`.
    pub fn prune(&mut self, tol: f64) {
        let mut indptr = vec![0; self.rows + 1];
        let mut indices = Vec::with_capacity(self.indices.len());
        let mut values = Vec::with_capacity(self.values.len());
        for r in 0..self.rows {
            for p in self.indptr[r]..self.indptr[r + 1] {
                if self.values[p].norm() > tol {
                    indices.push(self.indices[p]);
                    values.push(self.values[p]);
                }
            }
            indptr[r + 1] = indices.len();
        }
        self.indptr = indptr;
        self.indices = indices;
        self.values = values;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, Complex64)> + '_ {
        (self.indptr[r]..self.indptr[r + 1]).map(move |p| (self.indices[p], self.values[p]))
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        (0..self.rows).flat_map(move |r| self.row(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn get(&self, r: usize, c: usize) -> Complex64 {
        self.row(r)
            .find(|&(j, _)| j == c)
            .map(|(_, v)| v)
            .unwrap_or_default()
    }

    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            m[(r, c)] += v;
        }
        m
    }

    pub fn is_real(&self) -> bool {
        self.values.iter().all(|v| v.im == 0.0)
    }

    pub fn adjoint(&self) -> Self {
        Self::from_triplets(
            self.cols,
            self.rows,
            self.iter().map(|(r, c, v)| (c, r, v.conj())).collect(),
        )
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out.prune(0.0);
        out
    }

    pub fn add(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self::from_triplets(self.rows, self.cols, self.iter().chain(other.iter()).collect())
    }

    /// `self · other`.
    pub fn mul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows);
        let mut acc = vec![Complex64::new(0.0, 0.0); other.cols];
        let mut touched = Vec::new();
        let mut marked = vec![false; other.cols];
        let mut t = Vec::new();
        for r in 0..self.rows {
            for (k, a) in self.row(r) {
                for (c, b) in other.row(k) {
                    if !marked[c] {
                        marked[c] = true;
                        touched.push(c);
                    }
                    acc[c] += a * b;
                }
            }
            for &c in &touched {
                t.push((r, c, acc[c]));
                acc[c] = Complex64::new(0.0, 0.0);
                marked[c] = false;
            }
            touched.clear();
        }
        Self::from_triplets(self.rows, other.cols, t)
    }

    pub fn matvec(&self, x: &DVector<Complex64>) -> DVector<Complex64> {
        DVector::from_iterator(
            self.rows,
            (0..self.rows).map(|r| self.row(r).map(|(c, v)| v * x[c]).sum()),
        )
    }

    /// `⟨x, A y⟩` with the conjugate on `x`.
    pub fn sandwich(&self, x: &[Complex64], y: &[Complex64]) -> Complex64 {
        (0..self.rows)
            .map(|r| x[r].conj() * self.row(r).map(|(c, v)| v * y[c]).sum::<Complex64>())
            .sum()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
            .values
            .iter()
            .map(|v| v.norm())
            .fold(0.0, f64::max)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> Complex64 {
        Complex64::new(re, 0.0)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let s = SparseBlock::from_triplets(2, 2, vec![(0, 1, c(1.0)), (0, 1, c(2.0)), (1, 0, c(0.0))]);
        assert_eq!(s.nnz(), 1);
        assert_eq!(s.get(0, 1), c(3.0));
    }

    #[test]
    fn products_match_dense() {
        let a = DMatrix::from_fn(3, 4, |i, j| Complex64::new((i * 4 + j) as f64 % 3.0 - 1.0, (i + j) as f64 % 2.0));
        let b = DMatrix::from_fn(4, 2, |i, j| Complex64::new((i + 2 * j) as f64 % 4.0 - 2.0, 0.5));
        let sa = SparseBlock::from_dense(&a);
        let sb = SparseBlock::from_dense(&b);
        assert!((sa.mul(&sb).to_dense() - &a * &b).camax() < 1e-14);
        assert!((sa.adjoint().to_dense() - a.adjoint()).camax() < 1e-14);
        let x = DVector::from_fn(4, |i, _| Complex64::new(i as f64, -1.0));
        assert!((sa.matvec(&x) - &a * &x).camax() < 1e-14);
        let y = DVector::from_fn(3, |i, _| Complex64::new(1.0, i as f64));
        let dense = (y.adjoint() * &a * &x)[(0, 0)];
        assert!((sa.sandwich(y.as_slice(), x.as_slice()) - dense).norm() < 1e-12);
        assert_eq!(sa.max_abs_diff(&sa), 0.0);
    }
}
