//! Density operators that commute with the number operator, stored per
//! sector through their spectral decomposition, and `k`-particle density
//! matrices on the orthonormal symmetric basis.
//!
//! `Γ^(k) = Σ_n C(n,k) tr_{k+1→n} Γ_n`, so `tr Γ^(k) = E[C(N,k)]`. In the
//! occupation basis `⟨e_α, Γ^(k) e_β⟩ = tr(A_β† A_α Γ)` with
//! `A_α = Π_i a_i^{α_i} / sqrt(α_i!)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::fock::{binomial, FockBasis};
use crate::linalg::{hermitian_deviation, hermitian_eigen, hermitian_eigenvalues, hermitize, schatten_norm};
use crate::operator::{annihilation_op, FockOperator};
use crate::symmetric::{alpha_factorial, SymmetricSpace};

const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };
/// Eigenvalues of input blocks below `-NEG_TOL·scale` are rejected; smaller
/// negative ones are clamped to zero.
const NEG_TOL: f64 = 1e-10;
const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct SectorState {
    weights: Vec<f64>,
    /// Orthonormal eigenvectors as columns, one per weight; they may span only
    /// part of the sector. `None` means the occupation basis itself.
    vectors: Option<DMatrix<Complex64>>,
}

impl SectorState {
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn vectors(&self) -> Option<&DMatrix<Complex64>> {
        self.vectors.as_ref()
    }

    pub fn probability(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// `⟨m|Γ_n|m⟩` for each occupation state `m` of the sector.
    pub fn diagonal(&self) -> Vec<f64> {
        match &self.vectors {
            None => self.weights.clone(),
            Some(v) => (0..v.nrows())
                .map(|r| {
                    self.weights
                        .iter()
                        .enumerate()
                        .map(|(i, p)| p * v[(r, i)].norm_sqr())
                        .sum()
                })
                .collect(),
        }
    }

    pub fn dense(&self) -> DMatrix<Complex64> {
        match &self.vectors {
            None => DMatrix::from_diagonal(&DVector::from_iterator(
                self.weights.len(),
                self.weights.iter().map(|&p| Complex64::new(p, 0.0)),
            )),
            Some(v) => {
                let scaled = DMatrix::from_fn(v.nrows(), v.ncols(), |r, c| v[(r, c)] * self.weights[c]);
                scaled * v.adjoint()
            }
        }
    }

    /// Iterates `(p_i, v_i)` over eigenpairs with nonzero weight.
    fn eigenpairs(&self) -> impl Iterator<Item = (f64, EigenColumn)> + '_ {
        self.weights
            .iter()
            .enumerate()
            .filter(|(_, &p)| p > 0.0)
            .map(move |(i, &p)| {
                let col = match &self.vectors {
                    None => EigenColumn::Unit(i),
                    Some(v) => EigenColumn::Dense(v.column(i).iter().copied().collect()),
                };
                (p, col)
            })
    }
}

enum EigenColumn {
    Unit(usize),
    Dense(Vec<Complex64>),
}

impl EigenColumn {
    fn get(&self, r: usize) -> Complex64 {
        match self {
            EigenColumn::Unit(i) => {
                if *i == r {
                    Complex64::new(1.0, 0.0)
                } else {
                    ZERO
                }
            }
            EigenColumn::Dense(v) => v[r],
        }
    }

    fn to_vec(&self, dim: usize) -> DVector<Complex64> {
        DVector::from_fn(dim, |r, _| self.get(r))
    }
}

#[derive(Debug, Clone)]
pub struct QuantumState {
    basis: Arc<FockBasis>,
    sectors: Vec<SectorState>,
    log_partition: Option<f64>,
}

impl QuantumState {
    pub(crate) fn from_parts(
        basis: Arc<FockBasis>,
        sectors: Vec<SectorState>,
        log_partition: Option<f64>,
    ) -> Self {
        Self {
            basis,
            sectors,
            log_partition,
        }
    }

    pub(crate) fn sector_from_spectrum(weights: Vec<f64>, vectors: Option<DMatrix<Complex64>>) -> SectorState {
        SectorState { weights, vectors }
    }

    /// State from Hermitian PSD sector blocks. The blocks are rescaled to
    /// unit total trace.
    pub fn from_blocks(basis: &Arc<FockBasis>, blocks: Vec<DMatrix<Complex64>>) -> Result<Self> {
        if blocks.len() != basis.n_max() + 1 {
            return Err(LabError::DimensionMismatch(format!(
                "{} blocks for {} sectors",
                blocks.len(),
                basis.n_max() + 1
            )));
        }
        for (n, b) in blocks.iter().enumerate() {
            let d = basis.sector_dim(n);
            if b.nrows() != d || b.ncols() != d {
                return Err(LabError::DimensionMismatch(format!(
                    "sector {n} block is {}x{}, expected {d}x{d}",
                    b.nrows(),
                    b.ncols()
                )));
            }
        }
        let scale = blocks.iter().map(|b| b.iter().map(|z| z.norm()).fold(0.0, f64::max)).fold(0.0, f64::max).max(1e-300);
        let dev = blocks.iter().map(hermitian_deviation).fold(0.0, f64::max);
        if dev > 1e-12 * scale.max(1.0) {
            return Err(LabError::NotHermitian(dev));
        }
        let decomposed: Vec<(Vec<f64>, DMatrix<Complex64>)> =
            blocks.par_iter().map(|b| hermitian_eigen(&hermitize(b))).collect();
        let mut sectors = Vec::with_capacity(blocks.len());
        let mut total = 0.0;
        for (mut w, v) in decomposed {
            for x in w.iter_mut() {
                if *x < -NEG_TOL * scale {
                    return invalid(format!("density block has eigenvalue {x:.3e}"));
                }
                *x = x.max(0.0);
            }
            total += w.iter().sum::<f64>();
            sectors.push(SectorState {
                weights: w,
                vectors: Some(v),
            });
        }
        if !(total > 0.0) {
            return invalid("density blocks have zero trace");
        }
        for s in sectors.iter_mut() {
            s.weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Self::from_parts(basis.clone(), sectors, None))
    }

    /// State diagonal in the occupation basis with weights `f(counts)`,
    /// normalized to unit trace.
    pub fn diagonal(basis: &Arc<FockBasis>, f: impl Fn(&[u32]) -> f64) -> Result<Self> {
        let mut sectors = Vec::with_capacity(basis.n_max() + 1);
        let mut total = 0.0;
        for n in 0..=basis.n_max() {
            let w: Vec<f64> = basis.sector_states(n).map(&f).collect();
            if w.iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
                return invalid("diagonal weights must be finite and nonnegative");
            }
            total += w.iter().sum::<f64>();
            sectors.push(SectorState {
                weights: w,
                vectors: None,
            });
        }
        if !(total > 0.0) {
            return invalid("diagonal weights sum to zero");
        }
        for s in sectors.iter_mut() {
            s.weights.iter_mut().for_each(|w| *w /= total);
        }
        Ok(Self::from_parts(basis.clone(), sectors, None))
    }

    pub fn vacuum(basis: &Arc<FockBasis>) -> Self {
        Self::diagonal(basis, |s| if s.iter().all(|&c| c == 0) { 1.0 } else { 0.0 })
            .expect("vacuum weight is one")
    }

    pub fn basis(&self) -> &Arc<FockBasis> {
        &self.basis
    }

    pub fn sector(&self, n: usize) -> &SectorState {
        &self.sectors[n]
    }

    pub fn log_partition(&self) -> Option<f64> {
        self.log_partition
    }

    pub fn sector_probabilities(&self) -> Vec<f64> {
        self.sectors.iter().map(|s| s.probability()).collect()
    }

    /// Weight of the top sector `N_max`.
    pub fn tail_certificate(&self) -> f64 {
        self.sectors[self.basis.n_max()].probability()
    }

    pub fn trace(&self) -> f64 {
        self.sectors.iter().map(|s| s.probability()).sum()
    }

    pub fn density_block(&self, n: usize) -> DMatrix<Complex64> {
        self.sectors[n].dense()
    }

    /// `tr[N^k Γ]`.
    pub fn number_moment(&self, k: u32) -> f64 {
        self.sectors
            .iter()
            .enumerate()
            .map(|(n, s)| (n as f64).powi(k as i32) * s.probability())
            .sum()
    }

    /// `tr[A Γ]` for an operator that commutes with `N`.
    pub fn expectation(&self, op: &FockOperator) -> Result<f64> {
        if op.shift() != 0 || !op.basis().same_shape(&self.basis) {
            return invalid("expectation needs an N-conserving operator on the same basis");
        }
        let mut total = Complex64::new(0.0, 0.0);
        for (n, s) in self.sectors.iter().enumerate() {
            let Some(block) = op.block(n) else { continue };
            let dim = self.basis.sector_dim(n);
            for (p, col) in s.eigenpairs() {
                let v = col.to_vec(dim);
                total += block.sandwich(v.as_slice(), v.as_slice()) * p;
            }
        }
        Ok(total.re)
    }

    /// Probability of each occupation vector, by sector.
    pub fn occupation_probabilities(&self) -> Vec<Vec<f64>> {
        self.sectors.iter().map(|s| s.diagonal()).collect()
    }

    /// `tr[Π_j (a_j†)^{m_j} a_j^{m_j} Γ]`; the operator is diagonal in the
    /// occupation basis with entries `Π_j n_j!/(n_j - m_j)!`.
    pub fn normal_ordered_moment(&self, powers: &[u32]) -> Result<f64> {
        if powers.len() != self.basis.modes() {
            return Err(LabError::DimensionMismatch("powers must list every mode".into()));
        }
        let probs = self.occupation_probabilities();
        let mut total = 0.0;
        for (n, p) in probs.iter().enumerate() {
            for (s, &w) in self.basis.sector_states(n).zip(p) {
                if w == 0.0 {
                    continue;
                }
                let f: f64 = s
                    .iter()
                    .zip(powers)
                    .map(|(&c, &m)| falling_factorial(c, m))
                    .product();
                total += w * f;
            }
        }
        Ok(total)
    }

    /// `-tr Γ log Γ`.
    pub fn entropy(&self) -> f64 {
        self.sectors
            .iter()
            .flat_map(|s| s.weights.iter())
            .filter(|&&p| p > 0.0)
            .map(|&p| -p * p.ln())
            .sum()
    }

    /// Partial-trace route: `Γ^(k)_{αβ} = Σ_n Σ_{|γ|=n-k}
    /// sqrt(C(α+γ,α) C(β+γ,β)) ⟨α+γ|Γ_n|β+γ⟩`.
    pub fn reduced_density_matrix(&self, k: usize) -> Result<DensityMatrixK> {
        if k > self.basis.n_max() {
            return Err(LabError::CutoffTooSmall(format!(
                "k = {k} exceeds N_max = {}",
                self.basis.n_max()
            )));
        }
        let modes = self.basis.modes();
        let space = SymmetricSpace::new(modes, k)?;
        let dk = space.dim();
        let partials: Vec<DMatrix<Complex64>> = (k..=self.basis.n_max())
            .into_par_iter()
            .map(|n| {
                let mut acc = DMatrix::<Complex64>::zeros(dk, dk);
                let sector = &self.sectors[n];
                if sector.probability() == 0.0 {
                    return acc;
                }
                let table = split_table(&self.basis, &space, n);
                match &sector.vectors {
                    None => {
                        for row in &table {
                            for (a, &(idx, c)) in row.iter().enumerate() {
                                acc[(a, a)] += Complex64::new(c * c * sector.weights[idx], 0.0);
                            }
                        }
                    }
                    Some(v) => {
                        let mut x = DVector::<Complex64>::zeros(dk);
                        for (i, &p) in sector.weights.iter().enumerate() {
                            if p == 0.0 {
                                continue;
                            }
                            let col = v.column(i);
                            for row in &table {
                                for (a, &(idx, c)) in row.iter().enumerate() {
                                    x[a] = col[idx] * c;
                                }
                                acc.gerc(Complex64::new(p, 0.0), &x, &x, Complex64::new(1.0, 0.0));
                            }
                        }
                    }
                }
                acc
            })
            .collect();
        let mut m = DMatrix::<Complex64>::zeros(dk, dk);
        for p in partials {
            m += p;
        }
        Ok(DensityMatrixK::new(k, modes, hermitize(&m)))
    }

    /// Creation-operator route: `⟨e_α, Γ^(k) e_β⟩ = tr(A_β† A_α Γ)` with the
    /// `A_α` assembled as products of annihilation operators.
    pub fn reduced_density_matrix_via_operators(&self, k: usize) -> Result<DensityMatrixK> {
        if k > self.basis.n_max() {
            return Err(LabError::CutoffTooSmall(format!(
                "k = {k} exceeds N_max = {}",
                self.basis.n_max()
            )));
        }
        let modes = self.basis.modes();
        let space = SymmetricSpace::new(modes, k)?;
        let annihilators: Vec<FockOperator> = (0..modes)
            .map(|i| annihilation_op(&self.basis, i))
            .collect::<Result<_>>()?;
        let mut ops = Vec::with_capacity(space.dim());
        for alpha in space.states() {
            let mut op = FockOperator::identity(&self.basis);
            for (i, &a) in alpha.iter().enumerate() {
                for _ in 0..a {
                    op = annihilators[i].mul(&op)?;
                }
            }
            ops.push(op.scale(Complex64::new(1.0 / alpha_factorial(alpha).sqrt(), 0.0)));
        }
        let dk = space.dim();
        let mut m = DMatrix::<Complex64>::zeros(dk, dk);
        for n in k..=self.basis.n_max() {
            let dim = self.basis.sector_dim(n);
            for (p, col) in self.sectors[n].eigenpairs() {
                let v = col.to_vec(dim);
                let images: Vec<DVector<Complex64>> = ops
                    .iter()
                    .map(|op| match op.block(n) {
                        Some(b) => b.matvec(&v),
                        None => DVector::zeros(self.basis.sector_dim(n - k)),
                    })
                    .collect();
                for a in 0..dk {
                    for b in 0..dk {
                        m[(a, b)] += images[b].dotc(&images[a]) * p;
                    }
                }
            }
        }
        Ok(DensityMatrixK::new(k, modes, m))
    }

    /// Partial trace over the Fock factor of the modes not in `modes`.
    pub fn localize(&self, modes: &[usize]) -> Result<QuantumState> {
        let j = self.basis.modes();
        if modes.is_empty() {
            return invalid("localization needs a nonempty mode subset");
        }
        let mut kept: Vec<usize> = modes.to_vec();
        kept.sort_unstable();
        kept.dedup();
        if let Some(&m) = kept.iter().find(|&&m| m >= j) {
            return Err(LabError::ModeOutOfRange { mode: m, modes: j });
        }
        let rest: Vec<usize> = (0..j).filter(|m| !kept.contains(m)).collect();
        let sub = Arc::new(FockBasis::new(kept.len(), self.basis.n_max())?);
        let all_diagonal = self.sectors.iter().all(|s| s.vectors.is_none());
        let mut blocks: Vec<DMatrix<Complex64>> = (0..=sub.n_max())
            .map(|s| DMatrix::zeros(sub.sector_dim(s), sub.sector_dim(s)))
            .collect();
        for n in 0..=self.basis.n_max() {
            let sector = &self.sectors[n];
            if sector.probability() == 0.0 {
                continue;
            }
            // Group states of sector n by their occupation of the traced modes.
            let mut groups: std::collections::BTreeMap<Vec<u32>, Vec<(usize, usize)>> =
                std::collections::BTreeMap::new();
            for (pos, s) in self.basis.sector_states(n).enumerate() {
                let outer: Vec<u32> = rest.iter().map(|&m| s[m]).collect();
                let inner: Vec<u32> = kept.iter().map(|&m| s[m]).collect();
                let idx = sub.index_in_sector(&inner).expect("kept occupation fits");
                groups.entry(outer).or_default().push((pos, idx));
            }
            for (outer, members) in groups {
                let s_sector = n - outer.iter().map(|&c| c as usize).sum::<usize>();
                let block = &mut blocks[s_sector];
                match &sector.vectors {
                    None => {
                        for &(pos, idx) in &members {
                            block[(idx, idx)] += Complex64::new(sector.weights[pos], 0.0);
                        }
                    }
                    Some(v) => {
                        for (i, &p) in sector.weights.iter().enumerate() {
                            if p == 0.0 {
                                continue;
                            }
                            for &(pa, ia) in &members {
                                let va = v[(pa, i)] * p;
                                for &(pb, ib) in &members {
                                    block[(ia, ib)] += va * v[(pb, i)].conj();
                                }
                            }
                        }
                    }
                }
            }
        }
        if all_diagonal {
            let sectors = blocks
                .into_iter()
                .map(|b| SectorState {
                    weights: (0..b.nrows()).map(|i| b[(i, i)].re).collect(),
                    vectors: None,
                })
                .collect();
            return Ok(QuantumState::from_parts(sub, sectors, None));
        }
        QuantumState::from_blocks(&sub, blocks)
    }

    pub fn export(&self) -> StateExport {
        StateExport {
            modes: self.basis.modes(),
            n_max: self.basis.n_max(),
            log_partition: self.log_partition,
            sectors: (0..=self.basis.n_max())
                .map(|n| {
                    let b = self.density_block(n);
                    let dim = b.nrows();
                    SectorExport {
                        n,
                        dim,
                        states: self.basis.sector_states(n).map(|s| s.to_vec()).collect(),
                        re: (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c))).map(|(r, c)| b[(r, c)].re).collect(),
                        im: (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c))).map(|(r, c)| b[(r, c)].im).collect(),
                    }
                })
                .collect(),
        }
    }

    pub fn import(export: &StateExport) -> Result<Self> {
        let basis = Arc::new(FockBasis::new(export.modes, export.n_max)?);
        let blocks = export
            .sectors
            .iter()
            .map(|s| {
                if s.re.len() != s.dim * s.dim || s.im.len() != s.dim * s.dim {
                    return Err(LabError::DimensionMismatch(format!("sector {} data length", s.n)));
                }
                Ok(DMatrix::from_fn(s.dim, s.dim, |r, c| {
                    Complex64::new(s.re[r * s.dim + c], s.im[r * s.dim + c])
                }))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut st = Self::from_blocks(&basis, blocks)?;
        st.log_partition = export.log_partition;
        Ok(st)
    }
}

pub(crate) fn falling_factorial(n: u32, m: u32) -> f64 {
    if m > n {
        return 0.0;
    }
    (0..m).map(|i| (n - i) as f64).product()
}

/// For every `γ` in sector `n-k`: the position of `α+γ` in sector `n` and
/// `sqrt(Π_j C(α_j+γ_j, α_j))`, for each `α` of the symmetric space.
fn split_table(basis: &FockBasis, space: &SymmetricSpace, n: usize) -> Vec<Vec<(usize, f64)>> {
    let k = space.k();
    let mut sum = vec![0u32; basis.modes()];
    basis
        .sector_states(n - k)
        .map(|gamma| {
            space
                .states()
                .map(|alpha| {
                    for ((s, a), g) in sum.iter_mut().zip(alpha).zip(gamma) {
                        *s = a + g;
                    }
                    let idx = basis.index_in_sector(&sum).expect("α+γ in sector n");
                    let c: f64 = sum
                        .iter()
                        .zip(alpha)
                        .map(|(&s, &a)| binomial(s as usize, a as usize))
                        .product();
                    (idx, c.sqrt())
                })
                .collect()
        })
        .collect()
}

/// Quantum relative entropy, with an explicit sentinel for `+∞`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RelativeEntropy {
    Finite(f64),
    Infinite,
}

impl RelativeEntropy {
    pub fn value(self) -> f64 {
        match self {
            RelativeEntropy::Finite(x) => x,
            RelativeEntropy::Infinite => f64::INFINITY,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, RelativeEntropy::Finite(_))
    }
}

/// `H(Γ, Γ') = Σ_n tr[Γ_n (log Γ_n - log Γ'_n)]`, evaluated in the two
/// eigenbases of each sector.
pub fn relative_entropy(a: &QuantumState, b: &QuantumState) -> Result<RelativeEntropy> {
    if !a.basis.same_shape(&b.basis) {
        return Err(LabError::DimensionMismatch(
            "relative entropy needs states on the same basis".into(),
        ));
    }
    let mut total = 0.0;
    for n in 0..=a.basis.n_max() {
        let (sa, sb) = (&a.sectors[n], &b.sectors[n]);
        if sa.probability() == 0.0 {
            continue;
        }
        let dim = a.basis.sector_dim(n);
        let mut cross = 0.0;
        let mut lost = 0.0;
        for (p, col) in sa.eigenpairs() {
            let v = col.to_vec(dim);
            total += p * p.ln();
            // Weight outside the support of the second state, including any
            // directions its eigenvectors do not span.
            let mut captured = 0.0;
            for (j, &q) in sb.weights.iter().enumerate() {
                if q <= 0.0 {
                    continue;
                }
                let overlap = match &sb.vectors {
                    None => v[j].norm_sqr(),
                    Some(u) => u.column(j).dotc(&v).norm_sqr(),
                };
                captured += overlap;
                cross += p * overlap * q.ln();
            }
            lost += p * (1.0 - captured).max(0.0);
        }
        if lost > SUPPORT_TOL {
            return Ok(RelativeEntropy::Infinite);
        }
        total -= cross;
    }
    Ok(RelativeEntropy::Finite(total.max(0.0)))
}

/// Hermitian PSD operator on the orthonormal symmetric `k`-particle space.
#[derive(Debug, Clone)]
pub struct DensityMatrixK {
    k: usize,
    modes: usize,
    matrix: DMatrix<Complex64>,
}

impl DensityMatrixK {
    pub fn new(k: usize, modes: usize, matrix: DMatrix<Complex64>) -> Self {
        Self { k, modes, matrix }
    }

    pub fn diagonal(k: usize, modes: usize, diag: &[f64]) -> Self {
        let m = DMatrix::from_diagonal(&DVector::from_iterator(
            diag.len(),
            diag.iter().map(|&x| Complex64::new(x, 0.0)),
        ));
        Self::new(k, modes, m)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn matrix(&self) -> &DMatrix<Complex64> {
        &self.matrix
    }

    pub fn into_matrix(self) -> DMatrix<Complex64> {
        self.matrix
    }

    pub fn trace(&self) -> f64 {
        self.matrix.diagonal().iter().map(|z| z.re).sum()
    }

    pub fn hermitian_deviation(&self) -> f64 {
        hermitian_deviation(&self.matrix)
    }

    pub fn eigenvalues(&self) -> Vec<f64> {
        hermitian_eigenvalues(&hermitize(&self.matrix))
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues().first().copied().unwrap_or(0.0)
    }

    pub fn scaled(&self, s: f64) -> Self {
        Self::new(self.k, self.modes, self.matrix.scale(s))
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.k != other.k || self.modes != other.modes {
            return Err(LabError::DimensionMismatch(format!(
                "density matrices differ: k={} J={} vs k={} J={}",
                self.k, self.modes, other.k, other.modes
            )));
        }
        Ok(())
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self::new(self.k, self.modes, &self.matrix - &other.matrix))
    }

    /// `‖self - other‖_p`.
    pub fn schatten_distance(&self, other: &Self, p: f64) -> Result<f64> {
        Ok(schatten_norm(self.sub(other)?.matrix(), p))
    }

    pub fn trace_distance(&self, other: &Self) -> Result<f64> {
        self.schatten_distance(other, 1.0)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        Ok(crate::linalg::max_abs(self.sub(other)?.matrix()))
    }

    pub fn export(&self) -> Result<DensityMatrixExport> {
        let space = SymmetricSpace::new(self.modes, self.k)?;
        let dim = self.matrix.nrows();
        Ok(DensityMatrixExport {
            k: self.k,
            modes: self.modes,
            basis: space.states().map(|s| s.to_vec()).collect(),
            re: (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c))).map(|(r, c)| self.matrix[(r, c)].re).collect(),
            im: (0..dim).flat_map(|r| (0..dim).map(move |c| (r, c))).map(|(r, c)| self.matrix[(r, c)].im).collect(),
        })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SectorExport {
    pub n: usize,
    pub dim: usize,
    pub states: Vec<Vec<u32>>,
    /// Row-major real parts of the density block.
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StateExport {
    pub modes: usize,
    pub n_max: usize,
    pub log_partition: Option<f64>,
    pub sectors: Vec<SectorExport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityMatrixExport {
    pub k: usize,
    pub modes: usize,
    /// Occupation vector of each basis state, in matrix order.
    pub basis: Vec<Vec<u32>>,
    pub re: Vec<f64>,
    pub im: Vec<f64>,
}

/// A random state with independent random positive blocks per sector;
/// with `rank_deficient` each block has rank about half its dimension.
pub fn random_state(basis: &Arc<FockBasis>, seed: u64, rank_deficient: bool) -> Result<QuantumState> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let blocks = (0..=basis.n_max())
        .map(|n| {
            let d = basis.sector_dim(n);
            let cols = if rank_deficient { 1.max(d / 2) } else { d };
            let g = DMatrix::from_fn(d, cols, |_, _| {
                Complex64::new(rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5)
            });
            let w: f64 = rng.random::<f64>() + 0.1;
            (&g * g.adjoint()).scale(w)
        })
        .collect();
    QuantumState::from_blocks(basis, blocks)
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    pub(crate) fn random_state(basis: &Arc<FockBasis>, seed: u64, rank_deficient: bool) -> QuantumState {
        super::random_state(basis, seed, rank_deficient).unwrap()
    }

    /// Oracle: embed each sector block into the product space `(C^J)^{⊗n}`
    /// and take the partial trace over the last `n-k` factors.
    fn product_space_rdm(state: &QuantumState, k: usize) -> DMatrix<Complex64> {
        let j = state.basis().modes();
        let space_k = SymmetricSpace::new(j, k).unwrap();
        let pk = j.pow(k as u32);
        let mut acc = DMatrix::<Complex64>::zeros(pk, pk);
        for n in k..=state.basis().n_max() {
            let space_n = SymmetricSpace::new(j, n).unwrap();
            let v = space_n.product_isometry().map(|x| Complex64::new(x, 0.0));
            let full = &v * state.density_block(n) * v.adjoint();
            let rest = j.pow((n - k) as u32);
            for a in 0..pk {
                for b in 0..pk {
                    let mut s = Complex64::new(0.0, 0.0);
                    for r in 0..rest {
                        s += full[(a * rest + r, b * rest + r)];
                    }
                    acc[(a, b)] += s * binomial(n, k);
                }
            }
        }
        let vk = space_k.product_isometry().map(|x| Complex64::new(x, 0.0));
        vk.adjoint() * acc * vk
    }

    #[test]
    fn rdm_routes_agree_with_product_oracle() {
        for (j, n_max, seed) in [(1, 5, 1), (2, 4, 2), (3, 3, 3)] {
            let basis = Arc::new(FockBasis::new(j, n_max).unwrap());
            let st = random_state(&basis, seed, false);
            for k in 0..=n_max.min(3) {
                let a = st.reduced_density_matrix(k).unwrap();
                let b = st.reduced_density_matrix_via_operators(k).unwrap();
                let oracle = product_space_rdm(&st, k);
                assert!(a.max_abs_diff(&b).unwrap() < 1e-12, "J={j} k={k}");
                assert!(crate::linalg::max_abs(&(a.matrix() - &oracle)) < 1e-12, "J={j} k={k}");
                // tr Γ^(k) = E[C(N,k)]
                let expected: f64 = st
                    .sector_probabilities()
                    .iter()
                    .enumerate()
                    .map(|(n, p)| p * binomial(n, k))
                    .sum();
                assert!((a.trace() - expected).abs() < 1e-12);
                assert!(a.hermitian_deviation() < 1e-13);
                assert!(a.min_eigenvalue() > -1e-12);
            }
        }
    }

    #[test]
    fn vacuum_rdm_is_zero() {
        let basis = Arc::new(FockBasis::new(2, 3).unwrap());
        let v = QuantumState::vacuum(&basis);
        let g = v.reduced_density_matrix(1).unwrap();
        assert_eq!(crate::linalg::max_abs(g.matrix()), 0.0);
        assert!(v.reduced_density_matrix(4).is_err());
        assert_eq!(v.tail_certificate(), 0.0);
        assert_eq!(v.entropy(), 0.0);
    }

    #[test]
    fn relative_entropy_basics() {
        let basis = Arc::new(FockBasis::new(2, 3).unwrap());
        let a = random_state(&basis, 7, false);
        let b = random_state(&basis, 8, false);
        assert!(relative_entropy(&a, &a).unwrap().value().abs() < 1e-10);
        assert!(relative_entropy(&a, &b).unwrap().value() > 0.0);
        let deficient = random_state(&basis, 9, true);
        assert_eq!(relative_entropy(&a, &deficient).unwrap(), RelativeEntropy::Infinite);
        assert!(relative_entropy(&deficient, &a).unwrap().is_finite());
        let vac = QuantumState::vacuum(&basis);
        // H(vacuum, Γ) = -log ⟨0|Γ|0⟩
        let h = relative_entropy(&vac, &a).unwrap().value();
        let p0 = a.occupation_probabilities()[0][0];
        assert!((h + p0.ln()).abs() < 1e-12);
    }

    #[test]
    fn localization_properties() {
        let basis = Arc::new(FockBasis::new(3, 3).unwrap());
        let st = random_state(&basis, 11, false);
        let same = st.localize(&[0, 1, 2]).unwrap();
        for n in 0..=3 {
            assert!(crate::linalg::max_abs(&(same.density_block(n) - st.density_block(n))) < 1e-13);
        }
        let loc = st.localize(&[0, 2]).unwrap();
        assert!((loc.trace() - 1.0).abs() < 1e-13);
        // (Γ_P)^(k) = P^{⊗k} Γ^(k) P^{⊗k} on the kept modes.
        for k in 1..=2 {
            let full = st.reduced_density_matrix(k).unwrap();
            let small = loc.reduced_density_matrix(k).unwrap();
            let big_space = SymmetricSpace::new(3, k).unwrap();
            let small_space = SymmetricSpace::new(2, k).unwrap();
            for (a, sa) in small_space.states().enumerate() {
                for (b, sb) in small_space.states().enumerate() {
                    let lift = |s: &[u32]| vec![s[0], 0, s[1]];
                    let ia = big_space.index(&lift(sa)).unwrap();
                    let ib = big_space.index(&lift(sb)).unwrap();
                    assert!((small.matrix()[(a, b)] - full.matrix()[(ia, ib)]).norm() < 1e-12);
                }
            }
        }
        assert!(st.localize(&[]).is_err());
        assert!(st.localize(&[3]).is_err());
    }

    #[test]
    fn export_round_trip() {
        let basis = Arc::new(FockBasis::new(2, 2).unwrap());
        let st = random_state(&basis, 5, false);
        let text = serde_json::to_string(&st.export()).unwrap();
        let back = QuantumState::import(&serde_json::from_str(&text).unwrap()).unwrap();
        for n in 0..=2 {
            assert!(crate::linalg::max_abs(&(back.density_block(n) - st.density_block(n))) < 1e-14);
        }
    }
}
