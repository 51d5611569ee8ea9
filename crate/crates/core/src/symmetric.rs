//! Orthonormal basis of the symmetric `k`-particle space over `J` modes.
//!
//! The basis is the sector-`k` occupation basis of [`FockBasis`]; the vector
//! for the multiset `α` is `sqrt(k!/α!)` times the symmetrizer applied to any
//! product `φ_{i_1}⊗…⊗φ_{i_k}` with multiset `α`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{invalid, Result};
use crate::fock::{binomial, factorial, total, FockBasis};

#[derive(Debug, Clone)]
pub struct SymmetricSpace {
    k: usize,
    basis: FockBasis,
}

impl SymmetricSpace {
    pub fn new(modes: usize, k: usize) -> Result<Self> {
        Ok(Self {
            k,
            basis: FockBasis::new(modes, k)?,
        })
    }

    pub fn modes(&self) -> usize {
        self.basis.modes()
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.basis.sector_dim(self.k)
    }

    pub fn state(&self, i: usize) -> &[u32] {
        self.basis.state(self.k, i)
    }

    pub fn states(&self) -> impl Iterator<Item = &[u32]> {
        self.basis.sector_states(self.k)
    }

    pub fn index(&self, counts: &[u32]) -> Option<usize> {
        if total(counts) != self.k {
            return None;
        }
        self.basis.index_in_sector(counts)
    }

    /// Coefficients of the product vector `u^{⊗k}` in this basis:
    /// `sqrt(k!/α!) Π u_i^{α_i}`.
    pub fn power_coefficients(&self, u: &[Complex64]) -> DVector<Complex64> {
        let kf = factorial(self.k);
        DVector::from_iterator(
            self.dim(),
            self.states().map(|alpha| {
                let mut c = Complex64::new((kf / alpha_factorial(alpha)).sqrt(), 0.0);
                for (ui, &a) in u.iter().zip(alpha) {
                    c *= ui.powu(a);
                }
                c
            }),
        )
    }

    /// Diagonal of `A^{⊗k}` restricted to the symmetric space, for a diagonal
    /// one-body operator with entries `values`.
    pub fn tensor_power_diagonal(&self, values: &[f64]) -> Vec<f64> {
        self.states()
            .map(|alpha| {
                values
                    .iter()
                    .zip(alpha)
                    .map(|(v, &a)| v.powi(a as i32))
                    .product()
            })
            .collect()
    }

    /// `A_ℓ ⊗_s 1_{k-ℓ}` as a matrix on this space, where `a` acts on the
    /// symmetric `ℓ`-particle space `small`.
    pub fn embed_with_identity(
        &self,
        a: &DMatrix<Complex64>,
        small: &SymmetricSpace,
    ) -> Result<DMatrix<Complex64>> {
        if small.modes() != self.modes() || small.k() > self.k {
            return invalid("embedding needs the same modes and fewer particles");
        }
        if a.nrows() != small.dim() || a.ncols() != small.dim() {
            return invalid("operator does not match the small symmetric space");
        }
        let dim = self.dim();
        let mut out = DMatrix::zeros(dim, dim);
        let mut gamma = vec![0u32; self.modes()];
        let mut beta1 = vec![0u32; self.modes()];
        for (i, alpha) in self.states().enumerate() {
            for (p, alpha1) in small.states().enumerate() {
                if alpha1.iter().zip(alpha).any(|(x, y)| x > y) {
                    continue;
                }
                for (g, (x, y)) in gamma.iter_mut().zip(alpha.iter().zip(alpha1)) {
                    *g = x - y;
                }
                let sa = split_coefficient(alpha, alpha1);
                for (j, beta) in self.states().enumerate() {
                    if gamma.iter().zip(beta).any(|(g, b)| g > b) {
                        continue;
                    }
                    for (b1, (b, g)) in beta1.iter_mut().zip(beta.iter().zip(&gamma)) {
                        *b1 = b - g;
                    }
                    let q = small.index(&beta1).expect("split stays in the small space");
                    out[(i, j)] += a[(p, q)] * (sa * split_coefficient(beta, &beta1));
                }
            }
        }
        Ok(out)
    }

    /// Columns are the basis vectors written in the product basis of
    /// `(C^J)^{⊗k}`, index `Σ_l i_l J^{k-1-l}`.
    pub fn product_isometry(&self) -> DMatrix<f64> {
        let modes = self.modes();
        let rows = modes.pow(self.k as u32);
        let mut out = DMatrix::zeros(rows, self.dim());
        let kf = factorial(self.k);
        for r in 0..rows {
            let idx = product_digits(r, modes, self.k);
            let mut counts = vec![0u32; modes];
            for &i in &idx {
                counts[i] += 1;
            }
            let col = self.index(&counts).expect("multiset of a product index");
            out[(r, col)] = (alpha_factorial(&counts) / kf).sqrt();
        }
        out
    }
}

pub fn alpha_factorial(alpha: &[u32]) -> f64 {
    alpha.iter().map(|&a| factorial(a as usize)).product()
}

/// Coefficient of `e_α ⊗ e_{m-α}` in the splitting of the normalized
/// symmetric vector `e_m`: `sqrt(Π C(m_i, α_i) / C(|m|, |α|))`.
pub fn split_coefficient(m: &[u32], alpha: &[u32]) -> f64 {
    let num: f64 = m
        .iter()
        .zip(alpha)
        .map(|(&mi, &ai)| binomial(mi as usize, ai as usize))
        .product();
    (num / binomial(total(m), total(alpha))).sqrt()
}

/// Digits of `r` in base `modes`, most significant first, `k` digits.
pub fn product_digits(mut r: usize, modes: usize, k: usize) -> Vec<usize> {
    let mut idx = vec![0; k];
    for slot in idx.iter_mut().rev() {
        *slot = r % modes;
        r /= modes;
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn isometry_is_orthonormal_and_symmetric() {
        for (modes, k) in [(2, 2), (3, 2), (2, 3), (3, 3)] {
            let s = SymmetricSpace::new(modes, k).unwrap();
            let v = s.product_isometry();
            let gram = v.transpose() * &v;
            assert!((gram - DMatrix::identity(s.dim(), s.dim())).camax() < 1e-14);
        }
    }

    #[test]
    fn power_coefficients_match_product_vector() {
        let u = [c(0.3, -0.2), c(-1.1, 0.4), c(0.5, 0.9)];
        for k in 1..=3 {
            let s = SymmetricSpace::new(3, k).unwrap();
            let rows = 3usize.pow(k as u32);
            let prod = DVector::from_iterator(
                rows,
                (0..rows).map(|r| product_digits(r, 3, k).iter().map(|&i| u[i]).product()),
            );
            let v = s.product_isometry().map(|x| c(x, 0.0));
            let coeffs = v.adjoint() * &prod;
            let direct = s.power_coefficients(&u);
            assert!((coeffs - direct).camax() < 1e-13);
        }
    }

    #[test]
    fn split_coefficients_reconstruct() {
        // Σ_{|α|=ℓ} s(m,α)^2 = 1 for every m.
        let s = SymmetricSpace::new(3, 4).unwrap();
        let small = SymmetricSpace::new(3, 2).unwrap();
        for m in s.states() {
            let sum: f64 = small
                .states()
                .filter(|a| a.iter().zip(m).all(|(x, y)| x <= y))
                .map(|a| split_coefficient(m, a).powi(2))
                .sum();
            assert!((sum - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn embedding_matches_product_construction() {
        // A ⊗_s 1 agrees with (A ⊗ 1) compressed to the symmetric space.
        let modes = 2;
        let small = SymmetricSpace::new(modes, 1).unwrap();
        let big = SymmetricSpace::new(modes, 3).unwrap();
        let a = DMatrix::from_row_slice(2, 2, &[c(1.0, 0.0), c(0.2, 0.3), c(0.2, -0.3), c(0.5, 0.0)]);
        let emb = big.embed_with_identity(&a, &small).unwrap();
        let v = big.product_isometry().map(|x| c(x, 0.0));
        let id4 = DMatrix::<Complex64>::identity(4, 4);
        let full = a.kronecker(&id4);
        let oracle = v.adjoint() * full * &v;
        assert!((emb - oracle).camax() < 1e-13);

        let zero = SymmetricSpace::new(modes, 0).unwrap();
        let one = DMatrix::from_element(1, 1, c(1.0, 0.0));
        let id = big.embed_with_identity(&one, &zero).unwrap();
        assert!((id - DMatrix::identity(big.dim(), big.dim())).camax() < 1e-14);
        assert!(big.embed_with_identity(&a, &SymmetricSpace::new(3, 1).unwrap()).is_err());
    }

    #[test]
    fn tensor_power_diagonal_values() {
        let s = SymmetricSpace::new(2, 2).unwrap();
        assert_eq!(s.tensor_power_diagonal(&[1.0, 0.25]), vec![1.0, 0.25, 0.0625]);
    }
}
