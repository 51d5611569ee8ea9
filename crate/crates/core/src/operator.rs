//! Second-quantized operators as blocks between particle-number sectors.
//!
//! Every operator built here shifts the particle number by a fixed amount,
//! so it is stored as one sparse block per source sector. Creation
//! operators annihilate the top sector (truncation); identities involving
//! them are only exact on the sectors listed as safe by each check.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::fock::{binomial, factorial, FockBasis};
use crate::kernel::TwoBodyKernel;
use crate::sparse::SparseBlock;
use crate::spectrum::OneBodySpectrum;

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockStructure {
    DiagonalInN,
    Raising(usize),
    Lowering(usize),
}

#[derive(Debug, Clone)]
pub struct FockOperator {
    basis: Arc<FockBasis>,
    shift: isize,
    /// `blocks[n]` maps sector `n` to sector `n + shift`.
    blocks: Vec<Option<SparseBlock>>,
}

impl FockOperator {
    fn new(basis: Arc<FockBasis>, shift: isize, blocks: Vec<Option<SparseBlock>>) -> Self {
        debug_assert_eq!(blocks.len(), basis.n_max() + 1);
        Self {
            basis,
            shift,
            blocks,
        }
    }

    fn target(&self, n: usize) -> Option<usize> {
        let t = n as isize + self.shift;
        (t >= 0 && t as usize <= self.basis.n_max()).then_some(t as usize)
    }

    pub fn zero(basis: &Arc<FockBasis>, shift: isize) -> Self {
        Self::new(basis.clone(), shift, vec![None; basis.n_max() + 1])
    }

    pub fn identity(basis: &Arc<FockBasis>) -> Self {
        Self::diagonal(basis, |_| 1.0)
    }

    /// Operator diagonal in the occupation basis with entry `f(counts)`.
    pub fn diagonal(basis: &Arc<FockBasis>, f: impl Fn(&[u32]) -> f64 + Sync) -> Self {
        let blocks = (0..=basis.n_max())
            .into_par_iter()
            .map(|n| {
                let t = basis
                    .sector_states(n)
                    .enumerate()
                    .map(|(i, s)| (i, i, Complex64::new(f(s), 0.0)))
                    .collect();
                let d = basis.sector_dim(n);
                Some(SparseBlock::from_triplets(d, d, t))
            })
            .collect();
        Self::new(basis.clone(), 0, blocks)
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn shift(&self) -> isize {
        self.shift
    }

    pub fn structure(&self) -> BlockStructure {
        match self.shift {
            0 => BlockStructure::DiagonalInN,
            s if s > 0 => BlockStructure::Raising(s as usize),
            s => BlockStructure::Lowering((-s) as usize),
        }
    }

    /// Block from sector `n` to sector `n + shift`, if nonzero.
    pub fn block(&self, n: usize) -> Option<&SparseBlock> {
        self.blocks.get(n).and_then(|b| b.as_ref())
    }

    /// Dense copy of the block from sector `n` (zero matrix if absent).
    pub fn dense_block(&self, n: usize) -> Option<DMatrix<Complex64>> {
        let t = self.target(n)?;
        Some(match self.block(n) {
            Some(b) => b.to_dense(),
            None => DMatrix::zeros(self.basis.sector_dim(t), self.basis.sector_dim(n)),
        })
    }

    fn check_same_basis(&self, other: &Self) -> Result<()> {
        if !self.basis.same_shape(&other.basis) {
            return Err(LabError::DimensionMismatch(
                "operators live on different Fock bases".into(),
            ));
        }
        Ok(())
    }

    /// `self · other`.
    pub fn mul(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        let shift = self.shift + other.shift;
        let blocks = (0..=self.basis.n_max())
            .map(|n| {
                let mid = other.target(n)?;
                let a = self.block(mid)?;
                let b = other.block(n)?;
                Some(a.mul(b))
            })
            .collect();
        Ok(Self::new(self.basis.clone(), shift, blocks))
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.check_same_basis(other)?;
        if self.shift != other.shift {
            return invalid("cannot add operators with different block structure");
        }
        let blocks = self
            .blocks
            .iter()
            .zip(&other.blocks)
            .map(|(a, b)| match (a, b) {
                (Some(a), Some(b)) => Some(a.add(b)),
                (Some(a), None) => Some(a.clone()),
                (None, Some(b)) => Some(b.clone()),
                (None, None) => None,
            })
            .collect();
        Ok(Self::new(self.basis.clone(), self.shift, blocks))
    }

    pub fn scale(&self, s: Complex64) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|b| b.as_ref().map(|b| b.scale(s)))
            .collect();
        Self::new(self.basis.clone(), self.shift, blocks)
    }

    pub fn adjoint(&self) -> Self {
        let mut blocks = vec![None; self.basis.n_max() + 1];
        for n in 0..=self.basis.n_max() {
            if let (Some(t), Some(b)) = (self.target(n), self.block(n)) {
                blocks[t] = Some(b.adjoint());
            }
        }
        Self::new(self.basis.clone(), -self.shift, blocks)
    }

    /// Dense matrix on the whole truncated Fock space.
    pub fn to_dense(&self) -> DMatrix<Complex64> {
        let dim = self.basis.dim();
        let mut m = DMatrix::zeros(dim, dim);
        for n in 0..=self.basis.n_max() {
            if let (Some(t), Some(b)) = (self.target(n), self.block(n)) {
                let (r0, c0) = (self.basis.offset(t), self.basis.offset(n));
                for (r, c, v) in b.iter() {
                    m[(r0 + r, c0 + c)] += v;
                }
            }
        }
        m
    }

    pub fn is_real(&self) -> bool {
        self.blocks.iter().flatten().all(|b| b.is_real())
    }

    /// `max |B - B†|` over blocks; infinite for operators that change `N`.
    pub fn hermitian_deviation(&self) -> f64 {
        if self.shift != 0 {
            return f64::INFINITY;
        }
        self.blocks
            .iter()
            .flatten()
            .map(|b| b.max_abs_diff(&b.adjoint()))
            .fold(0.0, f64::max)
    }

    /// Largest entry of `self - other` over blocks whose source sector is at
    /// most `max_source`.
    pub fn deviation_on_sectors(&self, other: &Self, max_source: usize) -> Result<f64> {
        self.check_same_basis(other)?;
        if self.shift != other.shift {
            return invalid("cannot compare operators with different block structure");
        }
        let mut dev: f64 = 0.0;
        for n in 0..=max_source.min(self.basis.n_max()) {
            let d = match (self.block(n), other.block(n)) {
                (Some(a), Some(b)) => a.max_abs_diff(b),
                (Some(a), None) | (None, Some(a)) => a.iter().map(|(_, _, v)| v.norm()).fold(0.0, f64::max),
                (None, None) => 0.0,
            };
            dev = dev.max(d);
        }
        Ok(dev)
    }
}

fn check_mode(basis: &FockBasis, mode: usize) -> Result<()> {
    if mode >= basis.modes() {
        return Err(LabError::ModeOutOfRange {
            mode,
            modes: basis.modes(),
        });
    }
    Ok(())
}

/// `a†_i |…, n_i, …⟩ = sqrt(n_i + 1) |…, n_i + 1, …⟩`; the top sector maps to zero.
pub fn creation_op(basis: &Arc<FockBasis>, mode: usize) -> Result<FockOperator> {
    check_mode(basis, mode)?;
    let blocks = (0..=basis.n_max())
        .map(|n| {
            if n == basis.n_max() {
                return None;
            }
            let mut target = vec![0u32; basis.modes()];
            let t = basis
                .sector_states(n)
                .enumerate()
                .map(|(i, s)| {
                    target.copy_from_slice(s);
                    target[mode] += 1;
                    let j = basis.index_in_sector(&target).expect("raised state in basis");
                    (j, i, Complex64::new(((s[mode] + 1) as f64).sqrt(), 0.0))
                })
                .collect();
            Some(SparseBlock::from_triplets(basis.sector_dim(n + 1), basis.sector_dim(n), t))
        })
        .collect();
    Ok(FockOperator::new(basis.clone(), 1, blocks))
}

pub fn annihilation_op(basis: &Arc<FockBasis>, mode: usize) -> Result<FockOperator> {
    Ok(creation_op(basis, mode)?.adjoint())
}

/// `a†(v) = Σ_i v_i a†_i`.
pub fn creation_op_vec(basis: &Arc<FockBasis>, v: &[Complex64]) -> Result<FockOperator> {
    if v.len() != basis.modes() {
        return Err(LabError::DimensionMismatch(format!(
            "vector has {} components for {} modes",
            v.len(),
            basis.modes()
        )));
    }
    let mut out = FockOperator::zero(basis, 1);
    for (i, &vi) in v.iter().enumerate() {
        if vi != ZERO {
            out = out.add(&creation_op(basis, i)?.scale(vi))?;
        }
    }
    Ok(out)
}

/// `a(v)`, the adjoint of `a†(v)` (anti-linear in `v`).
pub fn annihilation_op_vec(basis: &Arc<FockBasis>, v: &[Complex64]) -> Result<FockOperator> {
    Ok(creation_op_vec(basis, v)?.adjoint())
}

/// `dΓ(h) = Σ_i λ_i a†_i a_i`.
pub fn dgamma_op(basis: &Arc<FockBasis>, spectrum: &OneBodySpectrum) -> Result<FockOperator> {
    if spectrum.mode_count() != basis.modes() {
        return Err(LabError::DimensionMismatch(format!(
            "spectrum has {} modes, basis has {}",
            spectrum.mode_count(),
            basis.modes()
        )));
    }
    let ev = spectrum.eigenvalues().to_vec();
    Ok(FockOperator::diagonal(basis, move |s| {
        s.iter().zip(&ev).map(|(&n, l)| n as f64 * l).sum()
    }))
}

pub fn number_op(basis: &Arc<FockBasis>) -> FockOperator {
    FockOperator::diagonal(basis, |s| s.iter().map(|&n| n as f64).sum())
}

/// `½ Σ W[(a,b),(c,d)] a†_a a†_b a_d a_c`, block diagonal in `N`.
pub fn two_body_op(basis: &Arc<FockBasis>, kernel: &TwoBodyKernel) -> Result<FockOperator> {
    let modes = basis.modes();
    if kernel.modes() != modes {
        return Err(LabError::DimensionMismatch(format!(
            "kernel has {} modes, basis has {}",
            kernel.modes(),
            modes
        )));
    }
    let groups = kernel.by_annihilated_pair();
    let blocks = (0..=basis.n_max())
        .into_par_iter()
        .map(|n| {
            let dim = basis.sector_dim(n);
            if n < 2 {
                return Some(SparseBlock::zeros(dim, dim));
            }
            let mut t = Vec::new();
            let mut m = vec![0u32; modes];
            for (col, s) in basis.sector_states(n).enumerate() {
                for c in 0..modes {
                    for d in 0..modes {
                        let group = &groups[c * modes + d];
                        if group.is_empty() {
                            continue;
                        }
                        m.copy_from_slice(s);
                        if m[c] == 0 {
                            continue;
                        }
                        let mut amp = (m[c] as f64).sqrt();
                        m[c] -= 1;
                        if m[d] == 0 {
                            continue;
                        }
                        amp *= (m[d] as f64).sqrt();
                        m[d] -= 1;
                        for &(a, b, w) in group {
                            let mut r = m.clone();
                            r[b] += 1;
                            let mut amp2 = amp * (r[b] as f64).sqrt();
                            r[a] += 1;
                            amp2 *= (r[a] as f64).sqrt();
                            let row = basis.index_in_sector(&r).expect("same sector");
                            t.push((row, col, w * (0.5 * amp2)));
                        }
                    }
                }
            }
            Some(SparseBlock::from_triplets(dim, dim, t))
        })
        .collect();
    Ok(FockOperator::new(basis.clone(), 0, blocks))
}

/// `H_λ = dΓ(h) + λ W`.
pub fn hamiltonian(
    basis: &Arc<FockBasis>,
    spectrum: &OneBodySpectrum,
    kernel: &TwoBodyKernel,
    coupling: f64,
) -> Result<FockOperator> {
    if !(coupling.is_finite() && coupling >= 0.0) {
        return invalid(format!("coupling must be nonnegative, got {coupling}"));
    }
    let h0 = dgamma_op(basis, spectrum)?;
    if coupling == 0.0 || kernel.is_zero() {
        if kernel.modes() != basis.modes() {
            return Err(LabError::DimensionMismatch("kernel and basis modes differ".into()));
        }
        return Ok(h0);
    }
    let w = two_body_op(basis, kernel)?;
    h0.add(&w.scale(Complex64::new(coupling, 0.0)))
}

/// Max deviation of the canonical commutation relations
/// `[a_i, a†_j] = δ_ij`, `[a_i, a_j] = 0` on sectors below the cutoff.
pub fn ccr_deviation(basis: &Arc<FockBasis>) -> Result<f64> {
    let modes = basis.modes();
    let create: Vec<FockOperator> = (0..modes)
        .map(|i| creation_op(basis, i))
        .collect::<Result<_>>()?;
    let annihilate: Vec<FockOperator> = create.iter().map(|c| c.adjoint()).collect();
    let id = FockOperator::identity(basis);
    let safe = basis.n_max().saturating_sub(1);
    let mut dev: f64 = 0.0;
    for i in 0..modes {
        for j in 0..modes {
            let comm = annihilate[i]
                .mul(&create[j])?
                .add(&create[j].mul(&annihilate[i])?.scale(Complex64::new(-1.0, 0.0)))?;
            let expected = if i == j { id.clone() } else { FockOperator::zero(basis, 0) };
            dev = dev.max(comm.deviation_on_sectors(&expected, safe)?);
            let aa = annihilate[i]
                .mul(&annihilate[j])?
                .add(&annihilate[j].mul(&annihilate[i])?.scale(Complex64::new(-1.0, 0.0)))?;
            dev = dev.max(aa.deviation_on_sectors(&FockOperator::zero(basis, -2), basis.n_max())?);
        }
    }
    Ok(dev)
}

fn power(op: &FockOperator, k: usize) -> Result<FockOperator> {
    let mut out = FockOperator::identity(op.basis());
    for _ in 0..k {
        out = op.mul(&out)?;
    }
    Ok(out)
}

/// Max deviation of `a(v)^k a†(v)^k = Σ_ℓ C(k,ℓ) (k!/ℓ!) a†(v)^ℓ a(v)^ℓ` on
/// source sectors `n ≤ N_max - k`.
pub fn wick_identity_check(basis: &Arc<FockBasis>, v: &[Complex64], k: usize) -> Result<f64> {
    if k == 0 || k >= basis.n_max() {
        return Err(LabError::CutoffTooSmall(format!(
            "Wick identity of order {k} needs 1 ≤ k ≤ N_max - 1 = {}",
            basis.n_max() as isize - 1
        )));
    }
    let ad = creation_op_vec(basis, v)?;
    let a = ad.adjoint();
    let lhs = power(&a, k)?.mul(&power(&ad, k)?)?;
    let mut rhs = FockOperator::zero(basis, 0);
    for l in 0..=k {
        let c = binomial(k, l) * factorial(k) / factorial(l);
        let term = power(&ad, l)?.mul(&power(&a, l)?)?;
        rhs = rhs.add(&term.scale(Complex64::new(c, 0.0)))?;
    }
    lhs.deviation_on_sectors(&rhs, basis.n_max() - k)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{delta_kernel, finite_rank_kernel};
    use crate::spectrum::dirichlet_spectrum;
    use crate::symmetric::{product_digits, SymmetricSpace};
    use crate::fock::OccupationVector;
    use nalgebra::SymmetricEigen;

    fn basis(j: usize, n: usize) -> Arc<FockBasis> {
        Arc::new(FockBasis::new(j, n).unwrap())
    }

    fn elem(op: &FockOperator, row: &[u32], col: &[u32]) -> Complex64 {
        let b = op.basis();
        let r = b.global_index(&OccupationVector::new(row.to_vec())).unwrap();
        let c = b.global_index(&OccupationVector::new(col.to_vec())).unwrap();
        op.to_dense()[(r, c)]
    }

    #[test]
    fn ladder_matrix_elements() {
        let b1 = basis(1, 5);
        let ad = creation_op(&b1, 0).unwrap();
        for n in 0..5u32 {
            assert!((elem(&ad, &[n + 1], &[n]).re - ((n + 1) as f64).sqrt()).abs() < 1e-15);
        }
        assert!(ad.block(5).is_none());
        let b = basis(2, 3);
        let ad2 = creation_op(&b, 1).unwrap();
        assert_eq!(elem(&ad2, &[1, 1], &[1, 0]).re, 1.0);
        assert!((elem(&ad2, &[0, 2], &[0, 1]).re - 2f64.sqrt()).abs() < 1e-15);
        let a1 = annihilation_op(&b, 0).unwrap();
        assert!((elem(&a1, &[1, 0], &[2, 0]).re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a1.structure(), BlockStructure::Lowering(1));
        assert!(a1.block(0).is_none());
        assert!(creation_op(&b, 2).is_err());
    }

    #[test]
    fn ccr_holds_exactly() {
        for (j, n) in [(1, 6), (2, 5), (3, 4)] {
            assert!(ccr_deviation(&basis(j, n)).unwrap() < 1e-13);
        }
    }

    #[test]
    fn dgamma_and_number() {
        let b = basis(2, 3);
        let s = dirichlet_spectrum(2).unwrap();
        let h0 = dgamma_op(&b, &s).unwrap();
        assert_eq!(elem(&h0, &[0, 0], &[0, 0]).re, 0.0);
        assert_eq!(elem(&h0, &[1, 1], &[1, 1]).re, 5.0);
        assert_eq!(elem(&h0, &[0, 3], &[0, 3]).re, 12.0);
        let n = number_op(&b);
        assert_eq!(elem(&n, &[2, 1], &[2, 1]).re, 3.0);
        let comm = h0.mul(&n).unwrap().add(&n.mul(&h0).unwrap().scale(Complex64::new(-1.0, 0.0))).unwrap();
        assert_eq!(comm.deviation_on_sectors(&FockOperator::zero(&b, 0), 3).unwrap(), 0.0);
        assert!(dgamma_op(&b, &dirichlet_spectrum(3).unwrap()).is_err());
    }

    #[test]
    fn two_body_small_cases() {
        let b1 = basis(1, 3);
        let w = two_body_op(&b1, &delta_kernel(1).unwrap()).unwrap();
        assert_eq!(w.dense_block(0).unwrap()[(0, 0)].norm(), 0.0);
        assert_eq!(w.dense_block(1).unwrap()[(0, 0)].norm(), 0.0);
        // ½ ⟨2|a†a†aa|2⟩ W = ½ · 2 · 3/(2π)
        let expected = 3.0 / (2.0 * std::f64::consts::PI);
        assert!((elem(&w, &[2], &[2]).re - expected).abs() < 1e-15);

        let c = |x: f64| Complex64::new(x, 0.0);
        let k = finite_rank_kernel(2, &[vec![c(0.0), c(1.0), c(0.0)]], &[1.0]).unwrap();
        let w = two_body_op(&basis(2, 2), &k).unwrap();
        assert!((elem(&w, &[1, 1], &[1, 1]).re - 1.0).abs() < 1e-14);
        assert!(elem(&w, &[2, 0], &[2, 0]).norm() < 1e-15);
    }

    #[test]
    fn hamiltonian_small_cases() {
        let b = basis(1, 3);
        let s = dirichlet_spectrum(1).unwrap();
        let k = delta_kernel(1).unwrap();
        let h = hamiltonian(&b, &s, &k, 1.0).unwrap();
        let e = elem(&h, &[2], &[2]).re;
        assert!((e - (2.0 + 3.0 / (2.0 * std::f64::consts::PI))).abs() < 1e-14);
        let h0 = hamiltonian(&b, &s, &k, 0.0).unwrap();
        let d = dgamma_op(&b, &s).unwrap();
        assert_eq!(h0.deviation_on_sectors(&d, 3).unwrap(), 0.0);
        assert!(hamiltonian(&b, &s, &k, -1.0).is_err());
    }

    #[test]
    fn hamiltonian_bounded_below_by_free_energy() {
        let b = basis(3, 5);
        let s = dirichlet_spectrum(3).unwrap();
        let h = hamiltonian(&b, &s, &delta_kernel(3).unwrap(), 0.7).unwrap();
        assert!(h.hermitian_deviation() < 1e-14);
        for n in 0..=5 {
            let blk = h.dense_block(n).unwrap().map(|z| z.re);
            let min = SymmetricEigen::new(blk).eigenvalues.min();
            // n particles, all in the lowest mode.
            assert!(min >= n as f64 * 1.0 - 1e-12);
        }
    }

    #[test]
    fn wick_identity_orders() {
        let b = basis(2, 7);
        let v = [Complex64::new(0.6, 0.0), Complex64::new(0.0, 0.8)];
        for k in 1..=3 {
            assert!(wick_identity_check(&b, &v, k).unwrap() < 1e-10);
        }
        assert!(wick_identity_check(&b, &v, 7).is_err());
    }

    /// Dense oracle: the n-particle symmetric sector as a subspace of the
    /// product space, with W acting as Σ_{i<j} w_ij.
    fn pairwise_oracle(kernel: &crate::kernel::TwoBodyKernel, modes: usize, n: usize) -> DMatrix<Complex64> {
        let space = SymmetricSpace::new(modes, n).unwrap();
        let v = space.product_isometry().map(|x| Complex64::new(x, 0.0));
        let rows = modes.pow(n as u32);
        let mut full = DMatrix::<Complex64>::zeros(rows, rows);
        for r in 0..rows {
            let ri = product_digits(r, modes, n);
            for c in 0..rows {
                let ci = product_digits(c, modes, n);
                for i in 0..n {
                    for j in (i + 1)..n {
                        let same = (0..n).filter(|&l| l != i && l != j).all(|l| ri[l] == ci[l]);
                        if same {
                            full[(r, c)] += kernel.get(ri[i], ri[j], ci[i], ci[j]);
                        }
                    }
                }
            }
        }
        v.adjoint() * full * v
    }

    #[test]
    fn two_body_matches_pairwise_sum() {
        for modes in 1..=3 {
            let k = delta_kernel(modes).unwrap();
            let b = basis(modes, 3);
            let w = two_body_op(&b, &k).unwrap();
            for n in 0..=3 {
                let oracle = pairwise_oracle(&k, modes, n);
                assert!((w.dense_block(n).unwrap() - oracle).camax() < 1e-13, "J={modes} n={n}");
            }
        }
    }
}
