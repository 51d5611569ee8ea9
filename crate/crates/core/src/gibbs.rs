//! Grand-canonical Gibbs states `e^{-H/T}/Z`, free-state closed forms, and
//! the a-priori bounds relating the interacting and free ensembles.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::fock::{factorial, FockBasis};
use crate::kernel::TwoBodyKernel;
use crate::linalg::{hermitian_eigen, hermitian_eigenvalues};
use crate::operator::FockOperator;
use crate::spectrum::OneBodySpectrum;
use crate::state::{relative_entropy, DensityMatrixK, QuantumState, RelativeEntropy, SectorState};
use crate::symmetric::SymmetricSpace;

const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GibbsState {
    state: QuantumState,
    temperature: f64,
    log_partition: f64,
    energies: Vec<Vec<f64>>,
}

impl GibbsState {
    pub fn state(&self) -> &QuantumState {
        &self.state
    }

    pub fn into_state(self) -> QuantumState {
        self.state
    }

    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn log_partition(&self) -> f64 {
        self.log_partition
    }

    /// Eigenvalues of `H` per sector, in the order of the state's eigenvectors.
    pub fn energies(&self) -> &[Vec<f64>] {
        &self.energies
    }

    pub fn tail_certificate(&self) -> f64 {
        self.state.tail_certificate()
    }

    /// `tr[H Γ]`, from the stored spectrum.
    pub fn energy(&self) -> f64 {
        self.energies
            .iter()
            .enumerate()
            .map(|(n, e)| {
                e.iter()
                    .zip(self.state.sector(n).weights())
                    .map(|(e, p)| e * p)
                    .sum::<f64>()
            })
            .sum()
    }

    pub fn free_energy(&self) -> f64 {
        -self.temperature * self.log_partition
    }
}

fn check_temperature(t: f64) -> Result<()> {
    if !(t.is_finite() && t > 0.0) {
        return invalid(format!("temperature must be positive, got {t}"));
    }
    Ok(())
}

fn is_diagonal_block(op: &FockOperator, n: usize) -> bool {
    op.block(n).is_none_or(|b| b.iter().all(|(r, c, z)| r == c && z.im == 0.0))
}

/// Per-sector diagonalization of an `N`-conserving Hermitian `H`.
pub fn gibbs_state(h: &FockOperator, temperature: f64) -> Result<GibbsState> {
    check_temperature(temperature)?;
    if h.shift() != 0 {
        return invalid("Gibbs states need an N-conserving Hamiltonian");
    }
    let dev = h.hermitian_deviation();
    if dev > HERMITIAN_TOL {
        return Err(LabError::NotHermitian(dev));
    }
    let basis = h.basis().clone();
    let spectra: Vec<(Vec<f64>, Option<DMatrix<Complex64>>)> = (0..=basis.n_max())
        .into_par_iter()
        .map(|n| {
            if is_diagonal_block(h, n) {
                let d = basis.sector_dim(n);
                let e = (0..d)
                    .map(|i| h.block(n).map_or(0.0, |b| b.get(i, i).re))
                    .collect();
                (e, None)
            } else {
                let m = h.dense_block(n).expect("N-conserving block");
                let (e, v) = hermitian_eigen(&m);
                (e, Some(v))
            }
        })
        .collect();
    Ok(assemble(&basis, spectra, temperature))
}

/// Gibbs state of `dΓ(h)`, diagonal in the occupation basis.
pub fn free_gibbs_state(
    basis: &Arc<FockBasis>,
    spectrum: &OneBodySpectrum,
    temperature: f64,
) -> Result<GibbsState> {
    check_temperature(temperature)?;
    if spectrum.mode_count() != basis.modes() {
        return Err(LabError::DimensionMismatch("spectrum and basis modes differ".into()));
    }
    let lambdas = spectrum.eigenvalues();
    let spectra = (0..=basis.n_max())
        .map(|n| {
            let e = basis
                .sector_states(n)
                .map(|s| s.iter().zip(lambdas).map(|(&c, l)| c as f64 * l).sum())
                .collect();
            (e, None)
        })
        .collect();
    Ok(assemble(basis, spectra, temperature))
}

fn assemble(
    basis: &Arc<FockBasis>,
    spectra: Vec<(Vec<f64>, Option<DMatrix<Complex64>>)>,
    temperature: f64,
) -> GibbsState {
    let e_min = spectra
        .iter()
        .flat_map(|(e, _)| e.iter().copied())
        .fold(f64::INFINITY, f64::min);
    let mut sum = 0.0;
    let mut weights: Vec<Vec<f64>> = Vec::with_capacity(spectra.len());
    for (e, _) in &spectra {
        let w: Vec<f64> = e.iter().map(|&x| (-(x - e_min) / temperature).exp()).collect();
        sum += w.iter().sum::<f64>();
        weights.push(w);
    }
    let log_partition = -e_min / temperature + sum.ln();
    let mut energies = Vec::with_capacity(spectra.len());
    let sectors = spectra
        .into_iter()
        .zip(weights)
        .map(|((e, v), mut w)| {
            w.iter_mut().for_each(|x| *x /= sum);
            energies.push(e);
            QuantumState::sector_from_spectrum(w, v)
        })
        .collect::<Vec<SectorState>>();
    GibbsState {
        state: QuantumState::from_parts(basis.clone(), sectors, Some(log_partition)),
        temperature,
        log_partition,
        energies,
    }
}

/// `log Z_0 = -Σ_j log(1 - e^{-λ_j/T})` on the untruncated Fock space.
pub fn free_log_partition(spectrum: &OneBodySpectrum, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    Ok(spectrum
        .eigenvalues()
        .iter()
        .map(|&l| -(-(-l / temperature).exp_m1()).ln())
        .sum())
}

/// `Z_n = Σ_{|m|=n} e^{-⟨λ,m⟩/T}` for `n = 0..=n_max`.
pub fn free_sector_weights(spectrum: &OneBodySpectrum, temperature: f64, n_max: usize) -> Result<Vec<f64>> {
    check_temperature(temperature)?;
    let mut c = vec![0.0; n_max + 1];
    c[0] = 1.0;
    for &l in spectrum.eigenvalues() {
        let q = (-l / temperature).exp();
        for n in 1..=n_max {
            c[n] += q * c[n - 1];
        }
    }
    Ok(c)
}

/// `log Σ_{n≤N_max} Z_n`, the free log-partition function on the truncated space.
pub fn free_truncated_log_partition(
    spectrum: &OneBodySpectrum,
    temperature: f64,
    n_max: usize,
) -> Result<f64> {
    Ok(free_sector_weights(spectrum, temperature, n_max)?.iter().sum::<f64>().ln())
}

/// Law of `N` under the untruncated free Gibbs state, `n = 0..=n_max`.
pub fn free_sector_law(spectrum: &OneBodySpectrum, temperature: f64, n_max: usize) -> Result<Vec<f64>> {
    let norm = free_log_partition(spectrum, temperature)?.exp();
    Ok(free_sector_weights(spectrum, temperature, n_max)?
        .into_iter()
        .map(|c| c / norm)
        .collect())
}

/// Smallest `N_max` with `P_0(N ≥ N_max) < tail` under the untruncated free law.
pub fn adaptive_n_max(spectrum: &OneBodySpectrum, temperature: f64, tail: f64) -> Result<usize> {
    if !(tail > 0.0 && tail < 1.0) {
        return invalid(format!("tail threshold must lie in (0,1), got {tail}"));
    }
    check_temperature(temperature)?;
    let lmin = spectrum.eigenvalues().iter().copied().fold(f64::INFINITY, f64::min);
    let mean: f64 = spectrum
        .eigenvalues()
        .iter()
        .map(|&l| 1.0 / (l / temperature).exp_m1())
        .sum();
    // The law decays like e^{-λ_min n / T} times a polynomial; extend until the
    // terms beyond the horizon are negligible relative to the threshold.
    let mut horizon = (mean * 4.0 + 16.0) as usize;
    loop {
        let law = free_sector_law(spectrum, temperature, horizon)?;
        let ratio = (-lmin / temperature).exp();
        let last = law[horizon];
        let beyond = last * ratio / (1.0 - ratio) * (spectrum.mode_count() as f64 + horizon as f64);
        if beyond < tail * 1e-6 {
            let mut suffix = beyond;
            for n in (0..=horizon).rev() {
                suffix += law[n];
                if suffix >= tail {
                    return Ok(n + 1);
                }
            }
            return Ok(1);
        }
        horizon *= 2;
        if horizon > 1 << 24 {
            return Err(LabError::CutoffTooSmall("free sector law does not decay".into()));
        }
    }
}

/// `(e^{h/T} - 1)^{-⊗k}` on the symmetric space: diagonal with entries
/// `Π_j (e^{λ_j/T} - 1)^{-α_j}`.
pub fn free_dm_closed_form(spectrum: &OneBodySpectrum, temperature: f64, k: usize) -> Result<DensityMatrixK> {
    check_temperature(temperature)?;
    let occ: Vec<f64> = spectrum
        .eigenvalues()
        .iter()
        .map(|&l| 1.0 / (l / temperature).exp_m1())
        .collect();
    let space = SymmetricSpace::new(spectrum.mode_count(), k)?;
    Ok(DensityMatrixK::diagonal(k, spectrum.mode_count(), &space.tensor_power_diagonal(&occ)))
}

/// `k! (h^{-1})^{⊗k}` on the symmetric space, the `T → ∞` limit of
/// `k! T^{-k} Γ_0^(k)`.
pub fn free_dm_limit(spectrum: &OneBodySpectrum, k: usize) -> Result<DensityMatrixK> {
    let inv: Vec<f64> = spectrum.eigenvalues().iter().map(|l| 1.0 / l).collect();
    let space = SymmetricSpace::new(spectrum.mode_count(), k)?;
    let d: Vec<f64> = space
        .tensor_power_diagonal(&inv)
        .into_iter()
        .map(|x| x * factorial(k))
        .collect();
    Ok(DensityMatrixK::diagonal(k, spectrum.mode_count(), &d))
}

/// Compositions `s` of `k` into `modes` nonnegative parts with `k!/Π s_j!`.
fn compositions(modes: usize, k: usize) -> Result<Vec<(Vec<u32>, f64)>> {
    let space = SymmetricSpace::new(modes, k)?;
    Ok(space
        .states()
        .map(|s| {
            let m = factorial(k) / s.iter().map(|&x| factorial(x as usize)).product::<f64>();
            (s.to_vec(), m)
        })
        .collect())
}

fn tilted_sum(powers: &[u32], k: usize, scale: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (s, multinomial) in compositions(powers.len(), k)? {
        let term: f64 = powers
            .iter()
            .zip(&s)
            .zip(scale)
            .map(|((&n, &s), &x)| {
                let m = (n + s) as usize;
                factorial(m) / x.powi(m as i32)
            })
            .product();
        total += multinomial * term;
    }
    Ok(total)
}

/// `Σ_{|s|=k} k!/s! Π_j (n_j+s_j)! / (T(e^{λ_j/T} - 1))^{n_j+s_j}`: the free
/// expectation of the normal-ordered `Π_j (a_j†)^{n_j} a_j^{n_j}` tilted by
/// `(N/T)^k`, everything scaled by `T^{-|n|}`.
pub fn tilted_moment(spectrum: &OneBodySpectrum, temperature: f64, powers: &[u32], k: usize) -> Result<f64> {
    check_temperature(temperature)?;
    if powers.len() != spectrum.mode_count() {
        return Err(LabError::DimensionMismatch("powers must list every mode".into()));
    }
    let scale: Vec<f64> = spectrum
        .eigenvalues()
        .iter()
        .map(|&l| temperature * (l / temperature).exp_m1())
        .collect();
    tilted_sum(powers, k, &scale)
}

/// `T → ∞` limit of [`tilted_moment`]: `Σ_{|s|=k} k!/s! Π_j (n_j+s_j)!/λ_j^{n_j+s_j}`.
pub fn tilted_moment_limit(spectrum: &OneBodySpectrum, powers: &[u32], k: usize) -> Result<f64> {
    if powers.len() != spectrum.mode_count() {
        return Err(LabError::DimensionMismatch("powers must list every mode".into()));
    }
    tilted_sum(powers, k, spectrum.eigenvalues())
}

/// The same normal-ordered moment traced directly against a state on a
/// truncated basis.
pub fn tilted_moment_direct(state: &QuantumState, temperature: f64, powers: &[u32], k: usize) -> Result<f64> {
    check_temperature(temperature)?;
    let mut total = 0.0;
    for (s, multinomial) in compositions(powers.len(), k)? {
        let m: Vec<u32> = powers.iter().zip(&s).map(|(a, b)| a + b).collect();
        let order: u32 = m.iter().sum();
        total += multinomial * state.normal_ordered_moment(&m)? / temperature.powi(order as i32);
    }
    Ok(total)
}

/// `tr[S Γ^(2)]` with `S` the kernel on the symmetric pair space; equals
/// `tr[W Γ]`.
pub fn interaction_energy(kernel: &TwoBodyKernel, gamma2: &DensityMatrixK) -> Result<f64> {
    if gamma2.k() != 2 || gamma2.modes() != kernel.modes() {
        return Err(LabError::DimensionMismatch("interaction needs a two-particle matrix on the kernel modes".into()));
    }
    Ok((kernel.symmetric_matrix() * gamma2.matrix()).trace().re)
}

/// `tr[w h^{-1}⊗h^{-1}]` over the retained modes.
pub fn kernel_inverse_trace(spectrum: &OneBodySpectrum, kernel: &TwoBodyKernel) -> Result<f64> {
    let inv: Vec<f64> = spectrum.eigenvalues().iter().map(|l| 1.0 / l).collect();
    kernel.trace_against_diagonal(&inv)
}

/// Pass/fail record of one inequality, `margin ≥ -tolerance` meaning pass.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundCheck {
    pub name: String,
    pub margin: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl BoundCheck {
    pub fn new(name: impl Into<String>, margin: f64, tolerance: f64) -> Self {
        Self {
            name: name.into(),
            margin,
            tolerance,
            pass: margin >= -tolerance,
        }
    }
}

/// Quantities comparing an interacting Gibbs state with the free one at the
/// same temperature and cutoff.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GibbsComparison {
    pub temperature: f64,
    pub coupling: f64,
    pub log_z: f64,
    pub log_z0: f64,
    pub log_ratio: f64,
    pub kernel_inverse_trace: f64,
    pub interaction_energy: f64,
    pub relative_entropy: Option<f64>,
    pub identity_residual: Option<f64>,
    pub tail_certificate: f64,
    pub tail_certificate_free: f64,
    pub checks: Vec<BoundCheck>,
}

impl GibbsComparison {
    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.pass)
    }
}

/// A-priori bounds of the interacting Gibbs state against the free one:
/// `e^{-λT tr[w h^{-1}⊗h^{-1}]} ≤ Z_λ/Z_0 ≤ 1`,
/// `tr[w Γ^(2)] ≤ T² tr[w h^{-1}⊗h^{-1}]`,
/// `Γ^(1) ≤ 2T(1 + λT tr[w h^{-1}⊗h^{-1}]) h^{-1}`,
/// `tr[(N/T)^k Γ_λ] ≤ (Z_0/Z_λ) tr[(N/T)^k Γ_0]` for `k ≤ 4`,
/// and the decomposition `-log(Z_λ/Z_0) = H(Γ_λ, Γ_0) + (λ/T) tr[w Γ^(2)]`.
pub fn compare_with_free(
    interacting: &GibbsState,
    free: &GibbsState,
    spectrum: &OneBodySpectrum,
    kernel: &TwoBodyKernel,
    coupling: f64,
    with_entropy: bool,
) -> Result<GibbsComparison> {
    let t = interacting.temperature();
    if (t - free.temperature()).abs() > 0.0 || !interacting.state().basis().same_shape(free.state().basis()) {
        return invalid("comparison needs both states at the same temperature and cutoff");
    }
    let tw = kernel_inverse_trace(spectrum, kernel)?;
    let log_ratio = interacting.log_partition() - free.log_partition();
    let gamma2 = interacting.state().reduced_density_matrix(2)?;
    let inter = interaction_energy(kernel, &gamma2)?;
    let mut checks = Vec::new();

    let lower = -coupling * t * tw;
    checks.push(BoundCheck::new("ratio_lower", log_ratio - lower, 1e-12));
    checks.push(BoundCheck::new("ratio_upper", -log_ratio, 1e-12));
    let cap = t * t * tw;
    checks.push(BoundCheck::new("interaction", (cap - inter) / cap.max(1e-300), 1e-10));

    let gamma1 = interacting.state().reduced_density_matrix(1)?;
    let factor = 2.0 * t * (1.0 + coupling * t * tw);
    let mut gap = -gamma1.matrix().clone();
    for (j, &l) in spectrum.eigenvalues().iter().enumerate() {
        gap[(j, j)] += Complex64::new(factor / l, 0.0);
    }
    let min_ev = hermitian_eigenvalues(&gap).first().copied().unwrap_or(0.0);
    checks.push(BoundCheck::new("one_pdm", min_ev, 1e-8));

    for k in 1..=4u32 {
        let lhs = interacting.state().number_moment(k) / t.powi(k as i32);
        let rhs = (-log_ratio).exp() * free.state().number_moment(k) / t.powi(k as i32);
        checks.push(BoundCheck::new(format!("number_moment_{k}"), (rhs - lhs) / rhs.max(1e-300), 1e-10));
    }

    let (relative_entropy, identity_residual) = if with_entropy {
        match relative_entropy(interacting.state(), free.state())? {
            RelativeEntropy::Finite(h) => {
                let residual = -log_ratio - h - coupling / t * inter;
                (Some(h), Some(residual))
            }
            RelativeEntropy::Infinite => (None, None),
        }
    } else {
        (None, None)
    };
    if let Some(r) = identity_residual {
        let scale = log_ratio.abs().max(1e-300);
        checks.push(BoundCheck::new("entropy_identity", -(r.abs() / scale), 1e-8));
    }

    Ok(GibbsComparison {
        temperature: t,
        coupling,
        log_z: interacting.log_partition(),
        log_z0: free.log_partition(),
        log_ratio,
        kernel_inverse_trace: tw,
        interaction_energy: inter,
        relative_entropy,
        identity_residual,
        tail_certificate: interacting.tail_certificate(),
        tail_certificate_free: free.tail_certificate(),
        checks,
    })
}

/// `tr[H Γ] - T S(Γ)` for an arbitrary state.
pub fn free_energy(state: &QuantumState, h: &FockOperator, temperature: f64) -> Result<f64> {
    check_temperature(temperature)?;
    Ok(state.expectation(h)? - temperature * state.entropy())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{delta_kernel, finite_rank_kernel};
    use crate::operator::{dgamma_op, hamiltonian, two_body_op};
    use crate::spectrum::dirichlet_spectrum;
    use crate::state::tests::random_state;

    fn spectrum_of(v: &[f64]) -> OneBodySpectrum {
        OneBodySpectrum::custom(v.to_vec()).unwrap()
    }

    #[test]
    fn single_mode_partition() {
        let s = spectrum_of(&[1.0]);
        assert!((free_log_partition(&s, 1.0).unwrap() - 0.458_675_145_387_081_8).abs() < 1e-14);
        assert!(free_log_partition(&s, 1e-3).unwrap() < 1e-300);
        for t in [0.5, 2.0] {
            let basis = Arc::new(FockBasis::new(1, 30).unwrap());
            let g = gibbs_state(&dgamma_op(&basis, &s).unwrap(), t).unwrap();
            let geometric: f64 = (0..=30).map(|n| (-(n as f64) / t).exp()).sum();
            assert!((g.log_partition() - geometric.ln()).abs() < 1e-13);
            assert!((free_truncated_log_partition(&s, t, 30).unwrap() - geometric.ln()).abs() < 1e-13);
        }
        assert!(gibbs_state(&dgamma_op(&Arc::new(FockBasis::new(1, 3).unwrap()), &s).unwrap(), 0.0).is_err());
    }

    #[test]
    fn vacuum_only_and_low_temperature() {
        let s = spectrum_of(&[1.0, 2.0]);
        let basis = Arc::new(FockBasis::new(2, 0).unwrap());
        let g = gibbs_state(&dgamma_op(&basis, &s).unwrap(), 1.0).unwrap();
        assert_eq!(g.log_partition(), 0.0);
        assert_eq!(g.state().sector_probabilities(), vec![1.0]);
        let basis = Arc::new(FockBasis::new(2, 4).unwrap());
        let g = gibbs_state(&hamiltonian(&basis, &s, &delta_kernel(2).unwrap(), 0.5).unwrap(), 0.01).unwrap();
        assert!(1.0 - g.state().sector_probabilities()[0] < 1e-30);
    }

    #[test]
    fn free_state_matches_closed_forms() {
        let s = spectrum_of(&[1.0, 4.0]);
        let t = 3.0;
        let n_max = adaptive_n_max(&s, t, 1e-15).unwrap() + 20;
        let basis = Arc::new(FockBasis::new(2, n_max).unwrap());
        let g = gibbs_state(&dgamma_op(&basis, &s).unwrap(), t).unwrap();
        let direct = free_gibbs_state(&basis, &s, t).unwrap();
        assert!((g.log_partition() - direct.log_partition()).abs() < 1e-13);
        let closed = free_log_partition(&s, t).unwrap();
        assert!(((g.log_partition() - closed) / closed).abs() < 1e-12);
        assert!(g.tail_certificate() < 1e-12);
        for k in 1..=3 {
            let a = g.state().reduced_density_matrix(k).unwrap();
            let b = free_dm_closed_form(&s, t, k).unwrap();
            let rel = a.max_abs_diff(&b).unwrap() / crate::linalg::max_abs(b.matrix());
            assert!(rel < 1e-10, "k={k} rel={rel}");
        }
    }

    #[test]
    fn adaptive_cutoff_meets_tail() {
        let s = spectrum_of(&[1.0, 4.0]);
        for t in [2.0, 16.0] {
            let m = adaptive_n_max(&s, t, 1e-10).unwrap();
            let law = free_sector_law(&s, t, m + 2000).unwrap();
            let tail: f64 = law[m..].iter().sum();
            let tail_before: f64 = law[m - 1..].iter().sum();
            assert!(tail < 1e-10 && tail_before >= 1e-10, "T={t} m={m}");
        }
        let law = free_sector_law(&s, 2.0, 4000).unwrap();
        assert!((law.iter().sum::<f64>() - 1.0).abs() < 1e-13);
    }

    #[test]
    fn free_dm_values() {
        let s = spectrum_of(&[1.0]);
        let g = free_dm_closed_form(&s, 1.0, 1).unwrap();
        assert!((g.trace() - 1.0 / (1f64.exp() - 1.0)).abs() < 1e-15);
        let g2 = free_dm_closed_form(&s, 2.0, 2).unwrap();
        assert!((g2.trace() - (0.5f64.exp() - 1.0).powi(-2)).abs() < 1e-13);
        let big = free_dm_closed_form(&s, 1e6, 1).unwrap();
        assert!((big.trace() / 1e6 - 1.0).abs() < 1e-6);
        let lim = free_dm_limit(&spectrum_of(&[1.0, 4.0]), 2).unwrap();
        let d: Vec<f64> = lim.matrix().diagonal().iter().map(|z| z.re).collect();
        assert_eq!(d, vec![2.0, 0.5, 2.0 / 16.0]);
    }

    #[test]
    fn tilted_moments() {
        let s = spectrum_of(&[1.0]);
        assert_eq!(tilted_moment(&s, 1.0, &[0], 0).unwrap(), 1.0);
        let v = tilted_moment(&s, 1.0, &[1], 0).unwrap();
        assert!((v - 1.0 / (1f64.exp() - 1.0)).abs() < 1e-15);
        let t: f64 = 10.0;
        let x = t * (0.1f64).exp_m1();
        // a single mode admits only the composition s = (1)
        let expected = 2.0 / (x * x);
        assert!((tilted_moment(&s, t, &[1], 1).unwrap() - expected).abs() < 1e-14);
        assert!((tilted_moment_limit(&s, &[1], 1).unwrap() - 2.0).abs() < 1e-15);

        for (lams, powers, k, t) in [
            (vec![1.0], vec![1u32], 1usize, 10.0),
            (vec![1.0, 4.0], vec![1, 0], 2, 2.0),
            (vec![1.0, 4.0], vec![2, 1], 1, 1.5),
            (vec![2.0, 3.0], vec![0, 0], 3, 1.0),
        ] {
            let s = spectrum_of(&lams);
            let n_max = adaptive_n_max(&s, t, 1e-18).unwrap() + 40;
            let basis = Arc::new(FockBasis::new(lams.len(), n_max).unwrap());
            let g = free_gibbs_state(&basis, &s, t).unwrap();
            let direct = tilted_moment_direct(g.state(), t, &powers, k).unwrap();
            let closed = tilted_moment(&s, t, &powers, k).unwrap();
            assert!(((direct - closed) / closed).abs() < 1e-10, "{lams:?} {powers:?} k={k}");
        }
    }

    #[test]
    fn interaction_energy_matches_operator_trace() {
        let basis = Arc::new(FockBasis::new(2, 4).unwrap());
        let kernel = delta_kernel(2).unwrap();
        let w = two_body_op(&basis, &kernel).unwrap();
        let st = random_state(&basis, 21, false);
        let direct = st.expectation(&w).unwrap();
        let via = interaction_energy(&kernel, &st.reduced_density_matrix(2).unwrap()).unwrap();
        assert!((direct - via).abs() < 1e-12);
    }

    #[test]
    fn interacting_bounds_and_identity() {
        let s = dirichlet_spectrum(2).unwrap();
        let v = vec![
            Complex64::new(1.0, 0.0),
            Complex64::new(0.5, 0.5),
            Complex64::new(0.0, -1.0),
        ];
        for kernel in [delta_kernel(2).unwrap(), finite_rank_kernel(2, &[v], &[0.7]).unwrap()] {
            for t in [1.0, 3.0] {
                let lambda = 1.0 / t;
                let basis = Arc::new(FockBasis::new(2, adaptive_n_max(&s, t, 1e-12).unwrap()).unwrap());
                let h = hamiltonian(&basis, &s, &kernel, lambda).unwrap();
                let g = gibbs_state(&h, t).unwrap();
                let g0 = free_gibbs_state(&basis, &s, t).unwrap();
                let cmp = compare_with_free(&g, &g0, &s, &kernel, lambda, true).unwrap();
                assert!(cmp.all_pass(), "{:?}", cmp.checks);
                assert!(cmp.identity_residual.unwrap().abs() < 1e-10);
                // Gibbs free energy is -T log Z
                let f = free_energy(g.state(), &h, t).unwrap();
                assert!((f - g.free_energy()).abs() < 1e-10);
                assert!((g.energy() - g.state().expectation(&h).unwrap()).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn relative_entropy_of_geometric_laws() {
        let s = spectrum_of(&[1.0]);
        let basis = Arc::new(FockBasis::new(1, 200).unwrap());
        let (t, tp) = (1.0, 2.5);
        let a = free_gibbs_state(&basis, &s, t).unwrap();
        let b = free_gibbs_state(&basis, &s, tp).unwrap();
        let (q, qp) = ((-1.0 / t).exp(), (-1.0 / tp).exp());
        // KL of geometric laws with ratios q, q'.
        let kl = ((1.0 - q) / (1.0 - qp)).ln() + q / (1.0 - q) * (q / qp).ln();
        let h = relative_entropy(a.state(), b.state()).unwrap().value();
        assert!((h - kl).abs() < 1e-12);
        // pure excited state against the Gibbs state: -log p_3
        let excited = QuantumState::diagonal(&basis, |c| if c[0] == 3 { 1.0 } else { 0.0 }).unwrap();
        let h = relative_entropy(&excited, a.state()).unwrap().value();
        assert!((h + a.state().sector_probabilities()[3].ln()).abs() < 1e-12);
    }
}
