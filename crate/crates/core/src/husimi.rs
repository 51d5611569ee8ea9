//! Coherent states, Husimi measures at semiclassical scale `ε`, anti-Wick
//! expectations and the Berezin–Lieb comparison of relative entropies.
//!
//! `ξ(u)` has sector-`n` coefficients `e^{-|u|²/2} Π_j u_j^{m_j}/sqrt(m_j!)`
//! on the occupation state `m`. The Husimi density of `Γ` on the modes `V` is
//! `(επ)^{-d} ⟨ξ(u/√ε), Γ_V ξ(u/√ε)⟩`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::{gamma_lr, gamma_ur};

use crate::error::{invalid, LabError, Result};
use crate::fock::{binomial, factorial, ln_factorial, FockBasis};
use crate::linalg::{hermitian_eigen, hermitian_eigenvalues, max_abs};
use crate::operator::{annihilation_op_vec, creation_op_vec};
use crate::quadrature::integrate_half_line;
use crate::state::{relative_entropy, DensityMatrixK, QuantumState, RelativeEntropy};
use crate::stats::{complex_gaussian, run_batches, McEstimate, Welford, DEFAULT_BATCH};
use crate::symmetric::SymmetricSpace;

/// Default bound on the Poisson mass a guarded coherent vector may lose.
pub const DEFAULT_MAX_TAIL: f64 = 1e-8;

fn norm_sq(u: &[Complex64]) -> f64 {
    u.iter().map(|z| z.norm_sqr()).sum()
}

/// `P(Poisson(mean) > n_max)`.
pub fn poisson_upper_tail(mean: f64, n_max: usize) -> f64 {
    if mean == 0.0 {
        return 0.0;
    }
    gamma_lr((n_max + 1) as f64, mean)
}

/// Logarithms of `|coefficient|` and unit phases, before the Gaussian factor.
fn log_coefficients(basis: &FockBasis, v: &[Complex64]) -> Vec<Vec<(f64, Complex64)>> {
    let ln_abs: Vec<f64> = v.iter().map(|z| z.norm().ln()).collect();
    let phase: Vec<Complex64> = v
        .iter()
        .map(|z| if z.norm() == 0.0 { Complex64::new(1.0, 0.0) } else { z / z.norm() })
        .collect();
    (0..=basis.n_max())
        .map(|n| {
            basis
                .sector_states(n)
                .map(|m| {
                    let mut l = 0.0;
                    let mut ph = Complex64::new(1.0, 0.0);
                    for (j, &c) in m.iter().enumerate() {
                        if c == 0 {
                            continue;
                        }
                        l += c as f64 * ln_abs[j] - 0.5 * ln_factorial(c as usize);
                        ph *= phase[j].powu(c);
                    }
                    (l, ph)
                })
                .collect()
        })
        .collect()
}

/// Coefficients scaled by `e^{-shift}`; returns `(sectors, shift)` with the
/// Gaussian factor included in `shift`.
fn scaled_coefficients(basis: &FockBasis, v: &[Complex64]) -> (Vec<DVector<Complex64>>, f64) {
    let logs = log_coefficients(basis, v);
    let top = logs
        .iter()
        .flat_map(|s| s.iter().map(|x| x.0))
        .fold(f64::NEG_INFINITY, f64::max);
    let sectors = logs
        .iter()
        .map(|s| DVector::from_iterator(s.len(), s.iter().map(|&(l, ph)| ph * (l - top).exp())))
        .collect();
    (sectors, top - 0.5 * norm_sq(v))
}

#[derive(Debug, Clone)]
pub struct CoherentVector {
    amplitude: Vec<Complex64>,
    sectors: Vec<DVector<Complex64>>,
    tail_norm: f64,
}

impl CoherentVector {
    pub fn amplitude(&self) -> &[Complex64] {
        &self.amplitude
    }

    pub fn sector(&self, n: usize) -> &DVector<Complex64> {
        &self.sectors[n]
    }

    /// `1 - Σ_{n≤N_max} e^{-|u|²}|u|^{2n}/n!`.
    pub fn tail_norm(&self) -> f64 {
        self.tail_norm
    }

    pub fn retained_norm_sq(&self) -> f64 {
        self.sectors.iter().map(|s| s.norm_squared()).sum()
    }
}

/// Truncated coherent vector without any amplitude guard.
pub fn coherent_vector_unguarded(basis: &FockBasis, u: &[Complex64]) -> Result<CoherentVector> {
    if u.len() != basis.modes() {
        return Err(LabError::DimensionMismatch(format!(
            "amplitude has {} components for {} modes",
            u.len(),
            basis.modes()
        )));
    }
    if u.iter().any(|z| !(z.re.is_finite() && z.im.is_finite())) {
        return invalid("amplitude must be finite");
    }
    let (scaled, shift) = scaled_coefficients(basis, u);
    let factor = shift.exp();
    Ok(CoherentVector {
        amplitude: u.to_vec(),
        sectors: scaled.into_iter().map(|s| s * Complex64::new(factor, 0.0)).collect(),
        tail_norm: poisson_upper_tail(norm_sq(u), basis.n_max()),
    })
}

/// Truncated coherent vector; fails when more than `max_tail` of its norm
/// lies above the cutoff.
pub fn coherent_vector(basis: &FockBasis, u: &[Complex64], max_tail: f64) -> Result<CoherentVector> {
    let v = coherent_vector_unguarded(basis, u)?;
    if v.tail_norm > max_tail {
        return Err(LabError::AmplitudeTooLarge {
            norm_sq: norm_sq(u),
            n_max: basis.n_max(),
        });
    }
    Ok(v)
}

/// `max_n ‖(a(g)ξ(u))_n - ⟨g,u⟩ ξ(u)_n‖_∞` over sectors below the cutoff.
pub fn coherent_eigen_deviation(basis: &Arc<FockBasis>, xi: &CoherentVector, g: &[Complex64]) -> Result<f64> {
    let a = annihilation_op_vec(basis, g)?;
    let ev: Complex64 = g.iter().zip(xi.amplitude()).map(|(g, u)| g.conj() * u).sum();
    let mut dev: f64 = 0.0;
    for n in 0..basis.n_max() {
        let image = match a.block(n + 1) {
            Some(b) => b.matvec(xi.sector(n + 1)),
            None => DVector::zeros(basis.sector_dim(n)),
        };
        let diff = image - xi.sector(n) * ev;
        dev = dev.max(diff.iter().map(|z| z.norm()).fold(0.0, f64::max));
    }
    Ok(dev)
}

/// The `N`-dephased coherent state `Σ_n |ξ_n⟩⟨ξ_n|`, renormalized on the
/// truncated space. It has the same reduced density matrices as `|ξ⟩⟨ξ|`.
pub fn coherent_state(basis: &Arc<FockBasis>, u: &[Complex64], max_tail: f64) -> Result<QuantumState> {
    let xi = coherent_vector(basis, u, max_tail)?;
    let total = xi.retained_norm_sq();
    let sectors = xi
        .sectors
        .iter()
        .map(|s| {
            let w = s.norm_squared();
            if w == 0.0 {
                return QuantumState::sector_from_spectrum(vec![0.0], Some(DMatrix::zeros(s.len(), 1)));
            }
            let col = DMatrix::from_column_slice(s.len(), 1, (s / Complex64::new(w.sqrt(), 0.0)).as_slice());
            QuantumState::sector_from_spectrum(vec![w / total], Some(col))
        })
        .collect();
    Ok(QuantumState::from_parts(basis.clone(), sectors, None))
}

/// Sectors on which the truncated Weyl operator agrees with the exact one to
/// better than `1e-8` for `|f| ≤ 1` at `N_max ≥ 24`.
pub fn weyl_safe_sector(n_max: usize) -> usize {
    n_max / 3
}

/// Max deviation of `W(f)† a†(g) W(f) = a†(g) + ⟨f,g⟩` with
/// `W(f) = exp(a†(f) - a(f))` exponentiated on the truncated space, compared
/// on sectors `n ≤ safe_sector`.
pub fn weyl_action_check(basis: &Arc<FockBasis>, f: &[Complex64], g: &[Complex64], safe_sector: usize) -> Result<f64> {
    let limit = (basis.n_max() as f64).sqrt() / 4.0;
    if norm_sq(f).sqrt() > limit {
        return Err(LabError::AmplitudeTooLarge {
            norm_sq: norm_sq(f),
            n_max: basis.n_max(),
        });
    }
    if safe_sector >= basis.n_max() {
        return invalid("safe sectors must lie below the cutoff");
    }
    let k = creation_op_vec(basis, f)?.to_dense() - annihilation_op_vec(basis, f)?.to_dense();
    // iK is Hermitian, so W = e^K = U e^{-iD} U† from iK = U D U†.
    let (d, u) = hermitian_eigen(&(k * Complex64::new(0.0, 1.0)));
    let phases = DMatrix::from_diagonal(&DVector::from_iterator(
        d.len(),
        d.iter().map(|&x| Complex64::new(0.0, -x).exp()),
    ));
    let w = &u * phases * u.adjoint();
    let adag = creation_op_vec(basis, g)?.to_dense();
    let lhs = w.adjoint() * &adag * &w;
    let shift: Complex64 = f.iter().zip(g).map(|(f, g)| f.conj() * g).sum();
    let cut = basis.offset(safe_sector) + basis.sector_dim(safe_sector);
    let mut dev: f64 = 0.0;
    for r in 0..cut {
        for c in 0..cut {
            let mut expected = adag[(r, c)];
            if r == c {
                expected += shift;
            }
            dev = dev.max((lhs[(r, c)] - expected).norm());
        }
    }
    Ok(dev)
}

/// Monte Carlo budget for integrals against Husimi measures.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub batch: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            seed: 1,
            batch: DEFAULT_BATCH,
        }
    }
}

/// Entrywise Monte Carlo estimate of a complex matrix.
#[derive(Debug, Clone)]
pub struct MatrixEstimate {
    pub mean: DMatrix<Complex64>,
    pub stderr_re: DMatrix<f64>,
    pub stderr_im: DMatrix<f64>,
    pub n_samples: u64,
    pub seed: u64,
}

impl MatrixEstimate {
    fn from_welford(w: &Welford, dim: usize, seed: u64) -> Self {
        let mean = w.mean();
        let se = w.stderr();
        let at = |v: &[f64], r: usize, c: usize, part: usize| v[2 * (r * dim + c) + part];
        Self {
            mean: DMatrix::from_fn(dim, dim, |r, c| Complex64::new(at(mean, r, c, 0), at(mean, r, c, 1))),
            stderr_re: DMatrix::from_fn(dim, dim, |r, c| at(&se, r, c, 0)),
            stderr_im: DMatrix::from_fn(dim, dim, |r, c| at(&se, r, c, 1)),
            n_samples: w.count(),
            seed,
        }
    }

    /// Largest entrywise deviation from `target` in units of the stderr of
    /// that component; components with zero stderr must match to `1e-12`.
    pub fn max_sigma_deviation(&self, target: &DMatrix<Complex64>) -> f64 {
        let mut worst: f64 = 0.0;
        for r in 0..self.mean.nrows() {
            for c in 0..self.mean.ncols() {
                let d = self.mean[(r, c)] - target[(r, c)];
                for (diff, se) in [(d.re, self.stderr_re[(r, c)]), (d.im, self.stderr_im[(r, c)])] {
                    let z = if se > 0.0 {
                        diff.abs() / se
                    } else if diff.abs() <= 1e-12 {
                        0.0
                    } else {
                        f64::INFINITY
                    };
                    worst = worst.max(z);
                }
            }
        }
        worst
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr_re.iter().chain(self.stderr_im.iter()).copied().fold(0.0, f64::max)
    }
}

/// Husimi measure `μ^ε_{V,Γ}` of a state localized to a set of modes.
#[derive(Debug, Clone)]
pub struct HusimiMeasure {
    state: QuantumState,
    eps: f64,
    gamma1_diag: Vec<f64>,
}

impl HusimiMeasure {
    /// Localizes `state` to `modes` (in the given order of the state's modes).
    pub fn new(state: &QuantumState, modes: &[usize], eps: f64) -> Result<Self> {
        if !(eps.is_finite() && eps > 0.0) {
            return invalid(format!("semiclassical scale must be positive, got {eps}"));
        }
        let all: Vec<usize> = (0..state.basis().modes()).collect();
        let mut sorted = modes.to_vec();
        sorted.sort_unstable();
        let local = if sorted == all { state.clone() } else { state.localize(modes)? };
        let g1 = local.reduced_density_matrix(1.min(local.basis().n_max()))?;
        let gamma1_diag = if g1.k() == 1 {
            g1.matrix().diagonal().iter().map(|z| z.re).collect()
        } else {
            vec![0.0; local.basis().modes()]
        };
        Ok(Self {
            state: local,
            eps,
            gamma1_diag,
        })
    }

    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn dimension(&self) -> usize {
        self.state.basis().modes()
    }

    /// `log` of the density at `u`; `-∞` where it vanishes.
    pub fn log_density(&self, u: &[Complex64]) -> Result<f64> {
        let d = self.dimension();
        if u.len() != d {
            return Err(LabError::DimensionMismatch(format!("point has {} components, measure has {d}", u.len())));
        }
        let s = 1.0 / self.eps.sqrt();
        let v: Vec<Complex64> = u.iter().map(|z| z * s).collect();
        let (coeffs, shift) = scaled_coefficients(self.state.basis(), &v);
        let mut total = 0.0;
        for (n, c) in coeffs.iter().enumerate() {
            let sector = self.state.sector(n);
            match sector.vectors() {
                None => {
                    for (p, z) in sector.weights().iter().zip(c.iter()) {
                        total += p * z.norm_sqr();
                    }
                }
                Some(vecs) => {
                    for (i, &p) in sector.weights().iter().enumerate() {
                        if p > 0.0 {
                            total += p * vecs.column(i).dotc(c).norm_sqr();
                        }
                    }
                }
            }
        }
        if total <= 0.0 {
            return Ok(f64::NEG_INFINITY);
        }
        Ok(total.ln() + 2.0 * shift - d as f64 * (self.eps * std::f64::consts::PI).ln())
    }

    pub fn density(&self, u: &[Complex64]) -> Result<f64> {
        Ok(self.log_density(u)?.exp())
    }

    /// `k! ε^k Σ_ℓ C(k,ℓ) Γ_V^(ℓ) ⊗_s 1`.
    pub fn identity_rhs(&self, k: usize) -> Result<DensityMatrixK> {
        let d = self.dimension();
        let big = SymmetricSpace::new(d, k)?;
        let mut acc = DMatrix::<Complex64>::zeros(big.dim(), big.dim());
        for l in 0..=k {
            let small = SymmetricSpace::new(d, l)?;
            let gl = if l == 0 {
                DMatrix::from_element(1, 1, Complex64::new(self.state.trace(), 0.0))
            } else if l <= self.state.basis().n_max() {
                self.state.reduced_density_matrix(l)?.into_matrix()
            } else {
                DMatrix::zeros(small.dim(), small.dim())
            };
            acc += big.embed_with_identity(&gl, &small)? * Complex64::new(binomial(k, l), 0.0);
        }
        let scale = factorial(k) * self.eps.powi(k as i32);
        Ok(DensityMatrixK::new(k, d, acc * Complex64::new(scale, 0.0)))
    }

    /// Smallest eigenvalue of `identity_rhs(k) - k! ε^k Γ_V^(k)`.
    pub fn identity_psd_gap(&self, k: usize) -> Result<f64> {
        let rhs = self.identity_rhs(k)?;
        let gk = self.state.reduced_density_matrix(k)?;
        let scaled = gk.scaled(factorial(k) * self.eps.powi(k as i32));
        Ok(hermitian_eigenvalues(rhs.sub(&scaled)?.matrix()).first().copied().unwrap_or(0.0))
    }

    /// Per-mode variances `max(ε(Γ^(1)_jj + 1), ε)` of the Gaussian proposal.
    pub fn proposal_variances(&self) -> Vec<f64> {
        self.gamma1_diag
            .iter()
            .map(|g| (self.eps * (g + 1.0)).max(self.eps))
            .collect()
    }

    /// Monte Carlo estimate of `∫ F dμ` for a vector observable `F`, by
    /// importance sampling from the Gaussian proposal.
    pub fn integrate_mc<F>(&self, width: usize, observable: F, cfg: &SamplerConfig) -> Result<(Vec<f64>, Vec<f64>, u64)>
    where
        F: Fn(&[Complex64], &mut [f64]) + Sync,
    {
        let vars = self.proposal_variances();
        if vars.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            return Err(LabError::Config("degenerate Husimi proposal".into()));
        }
        let log_norm: f64 = vars.iter().map(|v| (std::f64::consts::PI * v).ln()).sum();
        let parts = run_batches(cfg.n_samples, cfg.batch, cfg.seed, |rng, count| {
            let mut acc = Welford::new(width);
            let mut u = vec![Complex64::new(0.0, 0.0); vars.len()];
            let mut x = vec![0.0; width];
            for _ in 0..count {
                let mut log_q = -log_norm;
                for (z, &v) in u.iter_mut().zip(&vars) {
                    *z = complex_gaussian(rng, v);
                    log_q -= z.norm_sqr() / v;
                }
                let w = (self.log_density(&u).expect("dimension checked") - log_q).exp();
                observable(&u, &mut x);
                x.iter_mut().for_each(|v| *v *= w);
                acc.push(&x);
            }
            acc
        })?;
        let acc = Welford::merged(parts, width);
        Ok((acc.mean().to_vec(), acc.stderr(), acc.count()))
    }

    /// `∫ |u^{⊗k}⟩⟨u^{⊗k}| dμ^ε` on the orthonormal symmetric basis.
    pub fn moment_mc(&self, k: usize, cfg: &SamplerConfig) -> Result<MatrixEstimate> {
        let space = SymmetricSpace::new(self.dimension(), k)?;
        let dim = space.dim();
        let (mean, se, n) = self.integrate_mc(
            2 * dim * dim,
            |u, out| {
                let c = space.power_coefficients(u);
                for r in 0..dim {
                    for col in 0..dim {
                        let z = c[r] * c[col].conj();
                        out[2 * (r * dim + col)] = z.re;
                        out[2 * (r * dim + col) + 1] = z.im;
                    }
                }
            },
            cfg,
        )?;
        Ok(MatrixEstimate {
            mean: DMatrix::from_fn(dim, dim, |r, c| {
                Complex64::new(mean[2 * (r * dim + c)], mean[2 * (r * dim + c) + 1])
            }),
            stderr_re: DMatrix::from_fn(dim, dim, |r, c| se[2 * (r * dim + c)]),
            stderr_im: DMatrix::from_fn(dim, dim, |r, c| se[2 * (r * dim + c) + 1]),
            n_samples: n,
            seed: cfg.seed,
        })
    }

    /// `tr[B_ε Γ_V] = ∫ b dμ^ε` by importance sampling.
    pub fn anti_wick_mc<F>(&self, b: F, sup_norm: f64, cfg: &SamplerConfig) -> Result<McEstimate>
    where
        F: Fn(&[Complex64]) -> f64 + Sync,
    {
        if !(sup_norm.is_finite() && sup_norm >= 0.0) {
            return invalid("test function needs a finite sup norm");
        }
        let (m, s, n) = self.integrate_mc(1, |u, out| out[0] = b(u).clamp(-sup_norm, sup_norm), cfg)?;
        Ok(McEstimate::new(m[0], s[0], n, cfg.seed))
    }
}

/// Resolution of the identity `π^{-J} ∫ |ξ(u)⟩⟨ξ(u)| du` on a truncated
/// basis, sampled from a complex Gaussian with per-mode variance `variance`.
pub fn resolution_of_identity_mc(basis: &FockBasis, variance: f64, cfg: &SamplerConfig) -> Result<MatrixEstimate> {
    if !(variance > 0.5) {
        return invalid("proposal variance must exceed 1/2 for finite weight variance");
    }
    let j = basis.modes();
    let dim = basis.dim();
    let parts = run_batches(cfg.n_samples, cfg.batch, cfg.seed, |rng, count| {
        let mut acc = Welford::new(2 * dim * dim);
        let mut u = vec![Complex64::new(0.0, 0.0); j];
        let mut x = vec![0.0; 2 * dim * dim];
        for _ in 0..count {
            let mut r2 = 0.0;
            for z in u.iter_mut() {
                *z = complex_gaussian(rng, variance);
                r2 += z.norm_sqr();
            }
            // π^{-J} / q(u)
            let w = variance.powi(j as i32) * (r2 / variance).exp();
            let xi = coherent_vector_unguarded(basis, &u).expect("dimension fixed");
            let flat: Vec<Complex64> = xi.sectors.iter().flat_map(|s| s.iter().copied()).collect();
            for r in 0..dim {
                for c in 0..dim {
                    let z = flat[r] * flat[c].conj() * w;
                    x[2 * (r * dim + c)] = z.re;
                    x[2 * (r * dim + c) + 1] = z.im;
                }
            }
            acc.push(&x);
        }
        acc
    })?;
    Ok(MatrixEstimate::from_welford(&Welford::merged(parts, 2 * dim * dim), dim, cfg.seed))
}

/// Second and fourth moments of `|u_m|` for each mode `m` of `V2 ⊂ V1`,
/// under the `V1` measure and under the `V2` measure.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CylindricalReport {
    pub from_larger: Vec<McEstimate>,
    pub from_smaller: Vec<McEstimate>,
    pub max_joint_sigma: f64,
}

pub fn cylindrical_consistency(
    state: &QuantumState,
    v1: &[usize],
    v2: &[usize],
    eps: f64,
    cfg: &SamplerConfig,
) -> Result<CylindricalReport> {
    let positions: Vec<usize> = v2
        .iter()
        .map(|m| v1.iter().position(|x| x == m))
        .collect::<Option<_>>()
        .ok_or_else(|| LabError::InvalidArgument("V2 must be contained in V1".into()))?;
    let mut sorted1 = v1.to_vec();
    sorted1.sort_unstable();
    let mut sorted2 = v2.to_vec();
    sorted2.sort_unstable();
    if sorted1 != v1 || sorted2 != v2 {
        return invalid("mode subsets must be listed in increasing order");
    }
    let big = HusimiMeasure::new(state, v1, eps)?;
    let small = HusimiMeasure::new(state, v2, eps)?;
    let width = 2 * v2.len();
    let moments = |u: &[Complex64], out: &mut [f64], pos: &[usize]| {
        for (i, &p) in pos.iter().enumerate() {
            let r = u[p].norm_sqr();
            out[2 * i] = r;
            out[2 * i + 1] = r * r;
        }
    };
    let (m1, s1, n1) = big.integrate_mc(width, |u, o| moments(u, o, &positions), cfg)?;
    let own: Vec<usize> = (0..v2.len()).collect();
    let cfg2 = SamplerConfig {
        seed: cfg.seed.wrapping_add(0x9e37_79b9),
        ..cfg.clone()
    };
    let (m2, s2, n2) = small.integrate_mc(width, |u, o| moments(u, o, &own), &cfg2)?;
    let from_larger: Vec<McEstimate> = (0..width).map(|i| McEstimate::new(m1[i], s1[i], n1, cfg.seed)).collect();
    let from_smaller: Vec<McEstimate> = (0..width).map(|i| McEstimate::new(m2[i], s2[i], n2, cfg2.seed)).collect();
    let max_joint_sigma = from_larger
        .iter()
        .zip(&from_smaller)
        .map(|(a, b)| (a.value - b.value).abs() / a.stderr.hypot(b.stderr).max(1e-300))
        .fold(0.0, f64::max);
    Ok(CylindricalReport {
        from_larger,
        from_smaller,
        max_joint_sigma,
    })
}

/// Bounded test functions on `V` that depend on `u` only through the
/// intensities `|u_j|²`; their anti-Wick expectations have closed forms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RadialTest {
    Constant,
    /// `exp(-c|u|²)`.
    Gaussian { c: f64 },
    /// `exp(-c|u_mode|²)`.
    ModeGaussian { mode: usize, c: f64 },
    /// `min(|u_mode|², cap)`.
    ClippedIntensity { mode: usize, cap: f64 },
}

impl RadialTest {
    pub fn label(&self) -> String {
        match self {
            RadialTest::Constant => "one".into(),
            RadialTest::Gaussian { c } => format!("gauss_all_{c}"),
            RadialTest::ModeGaussian { mode, c } => format!("gauss_mode{mode}_{c}"),
            RadialTest::ClippedIntensity { mode, cap } => format!("clip_mode{mode}_{cap}"),
        }
    }

    pub fn eval(&self, u: &[Complex64]) -> f64 {
        match *self {
            RadialTest::Constant => 1.0,
            RadialTest::Gaussian { c } => (-c * norm_sq(u)).exp(),
            RadialTest::ModeGaussian { mode, c } => (-c * u[mode].norm_sqr()).exp(),
            RadialTest::ClippedIntensity { mode, cap } => u[mode].norm_sqr().min(cap),
        }
    }

    pub fn sup_norm(&self) -> f64 {
        match *self {
            RadialTest::ClippedIntensity { cap, .. } => cap,
            _ => 1.0,
        }
    }

    fn validate(&self, modes: usize) -> Result<()> {
        match *self {
            RadialTest::Constant => Ok(()),
            RadialTest::Gaussian { c } if c > 0.0 => Ok(()),
            RadialTest::ModeGaussian { mode, c } if c > 0.0 && mode < modes => Ok(()),
            RadialTest::ClippedIntensity { mode, cap } if cap > 0.0 && mode < modes => Ok(()),
            _ => invalid(format!("invalid test function {self:?} on {modes} modes")),
        }
    }

    /// `E[b]` under the Husimi measure of the occupation state `m`: each
    /// `|u_j|²/ε` is Gamma(m_j + 1) distributed and the modes are independent.
    fn occupation_value(&self, m: &[u32], eps: f64) -> f64 {
        match *self {
            RadialTest::Constant => 1.0,
            RadialTest::Gaussian { c } => {
                let n: u32 = m.iter().sum();
                (1.0 + c * eps).powi(-((n as usize + m.len()) as i32))
            }
            RadialTest::ModeGaussian { mode, c } => (1.0 + c * eps).powi(-(m[mode] as i32 + 1)),
            RadialTest::ClippedIntensity { mode, cap } => {
                let a = m[mode] as f64 + 1.0;
                let x = cap / eps;
                eps * (a * gamma_lr(a + 1.0, x) + x * gamma_ur(a, x))
            }
        }
    }
}

/// `∫ b dμ^ε_{V,Γ}` in closed form for a radial test function; only the
/// occupation probabilities of `Γ_V` enter.
pub fn anti_wick_exact(measure: &HusimiMeasure, test: &RadialTest) -> Result<f64> {
    let st = measure.state();
    test.validate(st.basis().modes())?;
    let probs = st.occupation_probabilities();
    let mut total = 0.0;
    for (n, p) in probs.iter().enumerate() {
        for (m, &w) in st.basis().sector_states(n).zip(p) {
            if w != 0.0 {
                total += w * test.occupation_value(m, measure.eps());
            }
        }
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BerezinLiebReport {
    pub quantum: RelativeEntropy,
    pub classical: RelativeEntropy,
    pub classical_stderr: f64,
    /// `H(Γ_V, Γ'_V) - H_cl(μ_Γ, μ_Γ')`; `+∞` when the quantum side is infinite.
    pub margin: f64,
}

/// Single-mode states diagonal in `n` with laws `p` and `q`. The Husimi
/// densities are radial with `|u|²/ε` distributed as the mixtures
/// `f(r) = e^{-r} Σ_n p_n r^n/n!`, so the classical entropy is a 1D integral
/// (independent of `ε`).
pub fn berezin_lieb_radial(p: &[f64], q: &[f64], tol: f64) -> Result<BerezinLiebReport> {
    if p.len() != q.len() || p.is_empty() {
        return Err(LabError::DimensionMismatch("laws must have equal nonzero length".into()));
    }
    let norm = |v: &[f64]| -> Result<Vec<f64>> {
        let s: f64 = v.iter().sum();
        if v.iter().any(|x| !(x.is_finite() && *x >= 0.0)) || s <= 0.0 {
            return invalid("laws must be nonnegative with positive mass");
        }
        Ok(v.iter().map(|x| x / s).collect())
    };
    let (p, q) = (norm(p)?, norm(q)?);
    let mut quantum = 0.0;
    let mut infinite = false;
    for (&a, &b) in p.iter().zip(&q) {
        if a > 0.0 {
            if b == 0.0 {
                infinite = true;
            } else {
                quantum += a * (a / b).ln();
            }
        }
    }
    // log Σ_n p_n r^n / n!
    let log_mix = |w: &[f64], r: f64| -> f64 {
        let terms: Vec<f64> = w
            .iter()
            .enumerate()
            .filter(|(_, &x)| x > 0.0)
            .map(|(n, &x)| {
                let pow = if n == 0 { 0.0 } else { n as f64 * r.ln() };
                x.ln() + pow - ln_factorial(n)
            })
            .collect();
        let top = terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if top == f64::NEG_INFINITY {
            return top;
        }
        top + terms.iter().map(|t| (t - top).exp()).sum::<f64>().ln()
    };
    let integrand = |r: f64| -> f64 {
        if r <= 0.0 {
            return 0.0;
        }
        let lp = log_mix(&p, r);
        if lp == f64::NEG_INFINITY {
            return 0.0;
        }
        let lq = log_mix(&q, r);
        (lp - r).exp() * (lp - lq)
    };
    let scale: f64 = p.iter().enumerate().map(|(n, x)| x * (n as f64 + 1.0)).sum();
    let classical = integrate_half_line(integrand, scale, tol)?;
    let quantum = if infinite { RelativeEntropy::Infinite } else { RelativeEntropy::Finite(quantum) };
    Ok(BerezinLiebReport {
        quantum,
        classical: RelativeEntropy::Finite(classical),
        classical_stderr: 0.0,
        margin: quantum.value() - classical,
    })
}

/// Berezin–Lieb comparison on modes `V` with the classical entropy
/// `E_{μ_Γ}[log ρ_Γ - log ρ_Γ']` estimated by importance sampling.
pub fn berezin_lieb_mc(
    a: &QuantumState,
    b: &QuantumState,
    modes: &[usize],
    eps: f64,
    cfg: &SamplerConfig,
) -> Result<BerezinLiebReport> {
    let ma = HusimiMeasure::new(a, modes, eps)?;
    let mb = HusimiMeasure::new(b, modes, eps)?;
    let quantum = relative_entropy(ma.state(), mb.state())?;
    let (m, s, _) = ma.integrate_mc(
        2,
        |u, out| {
            let la = ma.log_density(u).expect("dimension checked");
            let lb = mb.log_density(u).expect("dimension checked");
            if la == f64::NEG_INFINITY {
                out[0] = 0.0;
                out[1] = 0.0;
            } else if lb == f64::NEG_INFINITY {
                out[0] = 0.0;
                out[1] = 1.0;
            } else {
                out[0] = la - lb;
                out[1] = 0.0;
            }
        },
        cfg,
    )?;
    let classical = if m[1] > 0.0 { RelativeEntropy::Infinite } else { RelativeEntropy::Finite(m[0]) };
    let margin = match (quantum, classical) {
        (RelativeEntropy::Infinite, _) => f64::INFINITY,
        (q, RelativeEntropy::Finite(c)) => q.value() - c,
        (_, RelativeEntropy::Infinite) => f64::NEG_INFINITY,
    };
    Ok(BerezinLiebReport {
        quantum,
        classical,
        classical_stderr: s[0],
        margin,
    })
}

/// `‖m‖_max` helper for reports.
pub fn matrix_gap(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    max_abs(&(a - b))
}
