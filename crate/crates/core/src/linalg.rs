//! Hermitian eigendecompositions and Schatten norms on dense blocks.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;

/// Eigenvalues (ascending) and eigenvectors (columns) of a Hermitian matrix.
/// Real blocks go through the real symmetric solver.
pub fn hermitian_eigen(m: &DMatrix<Complex64>) -> (Vec<f64>, DMatrix<Complex64>) {
    let n = m.nrows();
    if n == 0 {
        return (Vec::new(), DMatrix::zeros(0, 0));
    }
    if n == 1 {
        return (vec![m[(0, 0)].re], DMatrix::from_element(1, 1, Complex64::new(1.0, 0.0)));
    }
    let (values, vectors) = if m.iter().all(|z| z.im == 0.0) {
        let eig = SymmetricEigen::new(m.map(|z| z.re));
        (eig.eigenvalues, eig.eigenvectors.map(|x| Complex64::new(x, 0.0)))
    } else {
        let eig = SymmetricEigen::new(m.clone());
        (eig.eigenvalues, eig.eigenvectors)
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted = order.iter().map(|&i| values[i]).collect();
    let vecs = DMatrix::from_fn(n, n, |r, c| vectors[(r, order[c])]);
    (sorted, vecs)
}

pub fn hermitian_eigenvalues(m: &DMatrix<Complex64>) -> Vec<f64> {
    let n = m.nrows();
    if n == 0 {
        return Vec::new();
    }
    let mut v: Vec<f64> = if m.iter().all(|z| z.im == 0.0) {
        SymmetricEigen::new(m.map(|z| z.re)).eigenvalues.iter().copied().collect()
    } else {
        SymmetricEigen::new(m.clone()).eigenvalues.iter().copied().collect()
    };
    v.sort_by(f64::total_cmp);
    v
}

pub fn hermitize(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
    (m + m.adjoint()).scale(0.5)
}

pub fn hermitian_deviation(m: &DMatrix<Complex64>) -> f64 {
    (m - m.adjoint()).iter().map(|z| z.norm()).fold(0.0, f64::max)
}

/// `(tr |A|^p)^{1/p}` for Hermitian `A`; `p = ∞` gives the operator norm.
pub fn schatten_norm(m: &DMatrix<Complex64>, p: f64) -> f64 {
    let ev = hermitian_eigenvalues(&hermitize(m));
    if p.is_infinite() {
        return ev.iter().map(|x| x.abs()).fold(0.0, f64::max);
    }
    ev.iter().map(|x| x.abs().powf(p)).sum::<f64>().powf(1.0 / p)
}

pub fn trace_norm(m: &DMatrix<Complex64>) -> f64 {
    schatten_norm(m, 1.0)
}

pub fn max_abs(m: &DMatrix<Complex64>) -> f64 {
    m.iter().map(|z| z.norm()).fold(0.0, f64::max)
}
