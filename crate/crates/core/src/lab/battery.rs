//! Fast invariant battery: exact algebraic identities, coherent-state and
//! Husimi identities, entropy inequalities, a-priori bounds, and the
//! classical-side oracles. Every check records its value, threshold and
//! verdict.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::classical::{default_competitors, gamma0_exact, ClassicalConfig, ClassicalModel, InteractionConvention};
use crate::error::Result;
use crate::fock::{factorial, sector_dimension, FockBasis};
use crate::gibbs::{
    adaptive_n_max, compare_with_free, free_dm_closed_form, free_energy, free_gibbs_state, free_log_partition,
    gibbs_state,
};
use crate::husimi::{
    berezin_lieb_mc, berezin_lieb_radial, coherent_eigen_deviation, coherent_vector, cylindrical_consistency,
    resolution_of_identity_mc, HusimiMeasure, SamplerConfig, DEFAULT_MAX_TAIL,
};
use crate::kernel::{delta_kernel, finite_rank_kernel, TwoBodyKernel};
use crate::lab::campaigns::tilted_deviation;
use crate::operator::{ccr_deviation, hamiltonian, wick_identity_check};
use crate::spectrum::{dirichlet_spectrum, OneBodySpectrum};
use crate::state::{random_state, relative_entropy, QuantumState};
use crate::stats::{run_batches, McEstimate, Welford};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub group: String,
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckOutcome {
    /// Passes when `value ≤ threshold`.
    pub fn at_most(group: &str, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            group: group.into(),
            name: name.into(),
            value,
            threshold,
            pass: value <= threshold,
        }
    }

    /// Passes when `value ≥ threshold`.
    pub fn at_least(group: &str, name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self {
            group: group.into(),
            name: name.into(),
            value,
            threshold,
            pass: value >= threshold,
        }
    }
}

/// Folds many samples of one check into its worst case.
fn worst(group: &str, name: &str, values: &[f64], threshold: f64, upper: bool) -> CheckOutcome {
    let name = format!("{name} (worst of {})", values.len());
    if upper {
        let v = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        CheckOutcome::at_most(group, name, v, threshold)
    } else {
        let v = values.iter().copied().fold(f64::INFINITY, f64::min);
        CheckOutcome::at_least(group, name, v, threshold)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct BatteryConfig {
    pub husimi_samples: usize,
    pub classical_samples: usize,
    pub seed: u64,
}

impl Default for BatteryConfig {
    fn default() -> Self {
        Self {
            husimi_samples: 200_000,
            classical_samples: 1_000_000,
            seed: 2024,
        }
    }
}

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

fn basis(j: usize, n: usize) -> Result<Arc<FockBasis>> {
    Ok(Arc::new(FockBasis::new(j, n)?))
}

fn exact_binomial(n: u128, k: u128) -> u128 {
    (0..k).fold(1u128, |acc, i| acc * (n - i) / (i + 1))
}

fn relative_gap(a: &DMatrix<Complex64>, b: &DMatrix<Complex64>) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max) / scale
}

/// Free tail mass for the closed-form comparison. A 1e-10 tail already
/// biases `Γ^(2)` by a few 1e-8 through the `N²` weight of the tail.
const FREE_TAIL: f64 = 1e-13;

/// Ladder algebra, Wick identities, free closed forms, sector dimensions,
/// the two density-matrix routes and the tilted moments.
pub fn identity_battery() -> Result<Vec<CheckOutcome>> {
    const G: &str = "identities";
    let mut out = Vec::new();

    let ccr: Vec<f64> = [(1, 8), (2, 6), (3, 4)]
        .iter()
        .map(|&(j, n)| ccr_deviation(&basis(j, n)?))
        .collect::<Result<_>>()?;
    out.push(worst(G, "canonical commutation relations", &ccr, 1e-12, true));

    let b = basis(2, 8)?;
    // the identity holds for unit vectors
    let v = [c(0.6, 0.2), c(-0.3, 0.5)].map(|z| z / 0.74f64.sqrt());
    for k in 1..=3 {
        out.push(CheckOutcome::at_most(
            G,
            format!("Wick identity k={k}"),
            wick_identity_check(&b, &v, k)?,
            1e-10,
        ));
    }

    let mut dims_ok = true;
    for j in 1..=5usize {
        let bs = FockBasis::new(j, 12)?;
        for n in 0..=12usize {
            let exact = exact_binomial((n + j - 1) as u128, (j - 1) as u128);
            dims_ok &= sector_dimension(j, n)? as u128 == exact && bs.sector_dim(n) as u128 == exact;
        }
    }
    out.push(CheckOutcome::at_most(
        G,
        "sector dimensions equal binomials",
        if dims_ok { 0.0 } else { 1.0 },
        0.0,
    ));

    let mut free_devs = Vec::new();
    for (spectrum, t) in [
        (dirichlet_spectrum(2)?, 2.0),
        (dirichlet_spectrum(2)?, 6.0),
        (dirichlet_spectrum(3)?, 3.0),
        (OneBodySpectrum::custom(vec![0.5, 0.7])?, 1.5),
    ] {
        let n_max = adaptive_n_max(&spectrum, t, FREE_TAIL)?;
        let bs = basis(spectrum.mode_count(), n_max)?;
        let h = hamiltonian(&bs, &spectrum, &TwoBodyKernel::zero(spectrum.mode_count())?, 0.0)?;
        let g = gibbs_state(&h, t)?;
        let lz = free_log_partition(&spectrum, t)?;
        free_devs.push((g.log_partition() - lz).abs() / lz.abs());
        for k in 1..=2 {
            let rdm = g.state().reduced_density_matrix(k)?;
            free_devs.push(relative_gap(rdm.matrix(), free_dm_closed_form(&spectrum, t, k)?.matrix()));
        }
    }
    out.push(worst(G, "free partition and density matrices vs closed form", &free_devs, 1e-8, true));

    let mut routes = Vec::new();
    for (j, n_max, seed) in [(1, 6, 1), (2, 4, 2), (3, 3, 3), (2, 5, 4)] {
        let st = random_state(&basis(j, n_max)?, seed, seed % 2 == 0)?;
        for k in 1..=3.min(n_max) {
            let a = st.reduced_density_matrix(k)?;
            let b = st.reduced_density_matrix_via_operators(k)?;
            routes.push(a.max_abs_diff(&b)?);
        }
    }
    out.push(worst(G, "density matrix routes agree", &routes, 1e-9, true));

    let mut tilted = Vec::new();
    for (s, t) in [
        (OneBodySpectrum::custom(vec![1.0])?, 10.0),
        (dirichlet_spectrum(2)?, 2.0),
        (dirichlet_spectrum(2)?, 16.0),
        (dirichlet_spectrum(3)?, 4.0),
    ] {
        tilted.push(tilted_deviation(&s, t)?);
    }
    out.push(worst(G, "tilted moments closed form vs trace", &tilted, 1e-10, true));
    Ok(out)
}

/// Coherent eigenrelation, resolution of identity, the moment identity of
/// Husimi measures and its PSD consequence, and cylindrical consistency.
pub fn husimi_battery(cfg: &BatteryConfig) -> Result<Vec<CheckOutcome>> {
    const G: &str = "husimi";
    let sampler = |seed: u64| SamplerConfig {
        n_samples: cfg.husimi_samples,
        seed: cfg.seed.wrapping_add(seed),
        ..SamplerConfig::default()
    };
    let mut out = Vec::new();

    let b = basis(2, 24)?;
    let mut eig = Vec::new();
    for (u, g) in [
        ([c(0.6, 0.2), c(-0.3, 0.7)], [c(0.3, -0.4), c(1.0, 0.2)]),
        ([c(0.0, 0.0), c(0.0, 0.0)], [c(1.0, 0.0), c(0.0, 0.0)]),
        ([c(1.1, -0.4), c(0.2, 0.1)], [c(0.0, 1.0), c(0.5, 0.5)]),
    ] {
        let xi = coherent_vector(&b, &u, DEFAULT_MAX_TAIL)?;
        eig.push(coherent_eigen_deviation(&b, &xi, &g)?);
    }
    out.push(worst(G, "coherent eigenrelation", &eig, 1e-10, true));

    for (j, n_max, variance, seed) in [(1, 4, 3.0, 1), (2, 3, 2.0, 2)] {
        let bs = FockBasis::new(j, n_max)?;
        let est = resolution_of_identity_mc(&bs, variance, &sampler(seed))?;
        let id = DMatrix::identity(bs.dim(), bs.dim());
        out.push(CheckOutcome::at_most(
            G,
            format!("resolution of identity J={j} N_max={n_max} (sigmas)"),
            est.max_sigma_deviation(&id),
            3.0,
        ));
    }

    for (j, n_max, eps, seed) in [(1, 4, 0.5, 10), (2, 4, 0.5, 11), (2, 3, 1.2, 12)] {
        let st = random_state(&basis(j, n_max)?, seed, false)?;
        let modes: Vec<usize> = (0..j).collect();
        let m = HusimiMeasure::new(&st, &modes, eps)?;
        for k in 1..=2 {
            let est = m.moment_mc(k, &sampler(seed + 100 * k as u64))?;
            let rhs = m.identity_rhs(k)?;
            out.push(CheckOutcome::at_most(
                G,
                format!("moment identity J={j} k={k} eps={eps} (sigmas)"),
                est.max_sigma_deviation(rhs.matrix()),
                3.0,
            ));
            out.push(CheckOutcome::at_least(
                G,
                format!("moment PSD gap J={j} k={k} eps={eps}"),
                m.identity_psd_gap(k)?,
                -1e-8,
            ));
        }
    }

    for (j, v1, v2, seed) in [(2, vec![0, 1], vec![1], 20), (3, vec![0, 1, 2], vec![0, 2], 21)] {
        let st = random_state(&basis(j, 3)?, seed, false)?;
        let rep = cylindrical_consistency(&st, &v1, &v2, 0.6, &sampler(seed))?;
        out.push(CheckOutcome::at_most(
            G,
            format!("cylindrical consistency {v1:?} -> {v2:?} (sigmas)"),
            rep.max_joint_sigma,
            3.0,
        ));
    }
    Ok(out)
}

fn random_law(rng: &mut ChaCha8Rng, len: usize, zeros: bool) -> Vec<f64> {
    let mut v: Vec<f64> = (0..len).map(|_| rng.random::<f64>() + 0.01).collect();
    if zeros {
        let i = rng.random_range(0..len);
        v[i] = 0.0;
    }
    let s: f64 = v.iter().sum();
    v.iter().map(|x| x / s).collect()
}

fn mixture(a: &QuantumState, b: &QuantumState, t: f64) -> Result<QuantumState> {
    let blocks = (0..=a.basis().n_max())
        .map(|n| a.density_block(n).scale(1.0 - t) + b.density_block(n).scale(t))
        .collect();
    QuantumState::from_blocks(a.basis(), blocks)
}

/// Positivity and monotonicity of the relative entropy, the Berezin–Lieb
/// inequality, and the Gibbs variational principle.
pub fn entropy_battery(cfg: &BatteryConfig) -> Result<Vec<CheckOutcome>> {
    const G: &str = "entropy";
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut out = Vec::new();

    let mut self_entropy = Vec::new();
    let mut distinct = Vec::new();
    let mut monotone = Vec::new();
    for i in 0..120u64 {
        let j = 2 + (i % 2) as usize;
        let n_max = 2 + (i % 3) as usize;
        let bs = basis(j, n_max)?;
        let a = random_state(&bs, 1000 + i, i % 4 == 0)?;
        let b = random_state(&bs, 5000 + i, false)?;
        self_entropy.push(relative_entropy(&a, &a)?.value().abs());
        let full = relative_entropy(&a, &b)?;
        distinct.push(full.value());
        let mut modes: Vec<usize> = (0..j).filter(|_| rng.random::<bool>()).collect();
        if modes.is_empty() || modes.len() == j {
            modes = vec![rng.random_range(0..j)];
        }
        let local = relative_entropy(&a.localize(&modes)?, &b.localize(&modes)?)?;
        monotone.push(full.value() - local.value());
    }
    out.push(worst(G, "H(Γ,Γ) = 0", &self_entropy, 1e-10, true));
    out.push(worst(G, "H(Γ,Γ') > 0 for distinct states", &distinct, 1e-8, false));
    out.push(worst(G, "monotonicity under localization", &monotone, -1e-8, false));

    let mut radial = Vec::new();
    for i in 0..50 {
        let len = 3 + i % 5;
        let p = random_law(&mut rng, len, i % 3 == 0);
        let q = random_law(&mut rng, len, false);
        radial.push(berezin_lieb_radial(&p, &q, 1e-12)?.margin);
    }
    out.push(worst(G, "Berezin-Lieb single mode (quadrature)", &radial, -1e-4, false));
    let mut sampled = Vec::new();
    for i in 0..5u64 {
        let bs = basis(2, 3)?;
        let a = random_state(&bs, 7000 + i, false)?;
        let b = random_state(&bs, 8000 + i, false)?;
        let sampler = SamplerConfig {
            n_samples: cfg.husimi_samples,
            seed: cfg.seed + i,
            ..SamplerConfig::default()
        };
        sampled.push(berezin_lieb_mc(&a, &b, &[0, 1], 0.5, &sampler)?.margin);
    }
    out.push(worst(G, "Berezin-Lieb two modes (Monte Carlo)", &sampled, -1e-4, false));

    let spectrum = dirichlet_spectrum(2)?;
    let bs = basis(2, 6)?;
    let t = 2.0;
    let h = hamiltonian(&bs, &spectrum, &delta_kernel(2)?, 0.5)?;
    let g = gibbs_state(&h, t)?;
    let f0 = g.free_energy();
    let mut margins = Vec::new();
    for i in 0..100u64 {
        let r = random_state(&bs, 9000 + i, i % 2 == 0)?;
        let s = 10f64.powf(-4.0 * rng.random::<f64>());
        margins.push(free_energy(&mixture(g.state(), &r, s)?, &h, t)? - f0);
    }
    out.push(worst(G, "Gibbs variational principle", &margins, -1e-9, false));
    Ok(out)
}

/// The a-priori bounds at small temperatures for two kernels.
pub fn bounds_battery() -> Result<Vec<CheckOutcome>> {
    const G: &str = "bounds";
    let spectrum = dirichlet_spectrum(2)?;
    let uniform = vec![c(1.0 / 3f64.sqrt(), 0.0); 3];
    let mut out = Vec::new();
    for (label, kernel) in [
        ("delta", delta_kernel(2)?),
        ("rank_one", finite_rank_kernel(2, &[uniform], &[1.0])?),
    ] {
        for t in [1.0, 2.0, 4.0] {
            let n_max = adaptive_n_max(&spectrum, t, 1e-10)?;
            let bs = basis(2, n_max)?;
            let lambda = 1.0 / t;
            let g = gibbs_state(&hamiltonian(&bs, &spectrum, &kernel, lambda)?, t)?;
            let f = free_gibbs_state(&bs, &spectrum, t)?;
            let cmp = compare_with_free(&g, &f, &spectrum, &kernel, lambda, true)?;
            for check in cmp.checks {
                out.push(CheckOutcome::at_least(
                    G,
                    format!("{label} T={t} {}", check.name),
                    check.margin,
                    -check.tolerance,
                ));
            }
        }
    }
    Ok(out)
}

/// Gaussian moments, `z_r` range and reproducibility, free density matrices,
/// the classical variational identity and minimality against competitors.
pub fn classical_battery(cfg: &BatteryConfig) -> Result<Vec<CheckOutcome>> {
    const G: &str = "classical";
    let ccfg = |seed: u64| ClassicalConfig {
        n_samples: cfg.classical_samples,
        seed: cfg.seed.wrapping_add(seed),
        ..ClassicalConfig::default()
    };
    let spectrum = dirichlet_spectrum(2)?;
    let free = ClassicalModel::new(&spectrum, &TwoBodyKernel::zero(2)?, InteractionConvention::Half)?;
    let model = ClassicalModel::new(&spectrum, &delta_kernel(2)?, InteractionConvention::Half)?;
    let mut out = Vec::new();

    let c0 = ccfg(1);
    let parts = run_batches(c0.n_samples, c0.batch, c0.seed, |rng, count| {
        let mut w = Welford::new(8);
        let mut a = [c(0.0, 0.0); 2];
        let mut row = [0.0; 8];
        for _ in 0..count {
            free.sample_mu0(rng, &mut a);
            for (j, z) in a.iter().enumerate() {
                let r = z.norm_sqr();
                for m in 0..4 {
                    row[4 * j + m] = r.powi(m as i32 + 1);
                }
            }
            w.push(&row);
        }
        w
    })?;
    let w = Welford::merged(parts, 8);
    let mut sig = Vec::new();
    for (j, &l) in spectrum.eigenvalues().iter().enumerate() {
        for m in 1..=4 {
            let exact = factorial(m) / l.powi(m as i32);
            let i = 4 * j + m - 1;
            sig.push((w.mean()[i] - exact).abs() / w.stderr()[i]);
        }
    }
    out.push(worst(G, "Gaussian moments m!/λ^m (sigmas)", &sig, 3.0, true));

    let z1 = model.relative_partition_mc(&ccfg(2))?;
    let z2 = model.relative_partition_mc(&ccfg(3))?;
    out.push(CheckOutcome::at_least(G, "z_r > 0", z1.value, f64::MIN_POSITIVE));
    out.push(CheckOutcome::at_most(G, "z_r ≤ 1", z1.value, 1.0));
    out.push(CheckOutcome::at_most(
        G,
        "z_r cross-seed agreement (sigmas)",
        (z1.value - z2.value).abs() / z1.stderr.hypot(z2.stderr),
        3.0,
    ));

    for k in 1..=2 {
        let est = free.gamma_k_mc(k, &ccfg(10 + k as u64))?;
        let exact = gamma0_exact(spectrum.eigenvalues(), k)?;
        out.push(CheckOutcome::at_most(
            G,
            format!("free γ^({k}) = k!(h^-1)^⊗k (sigmas)"),
            est.max_sigma_deviation(exact.matrix()),
            3.0,
        ));
    }

    let v = model.variational_identity(&ccfg(20), cfg.seed.wrapping_add(21))?;
    out.push(CheckOutcome::at_most(
        G,
        "classical variational identity (sigmas)",
        v.residual.abs() / v.residual_stderr,
        3.0,
    ));

    let target = McEstimate::new(-z1.value.ln(), z1.stderr / z1.value, z1.n_samples, z1.seed);
    let mut excess = Vec::new();
    for (i, nu) in default_competitors(spectrum.eigenvalues()).iter().enumerate() {
        let f = model.competitor_free_energy(nu, &ccfg(30 + i as u64))?;
        excess.push((f.value - target.value) / f.stderr.hypot(target.stderr));
    }
    out.push(worst(G, "minimality against Gaussian competitors (sigmas)", &excess, -3.0, false));
    Ok(out)
}

/// The whole battery in a fixed order.
pub fn run_battery(cfg: &BatteryConfig) -> Result<Vec<CheckOutcome>> {
    let mut out = identity_battery()?;
    out.extend(husimi_battery(cfg)?);
    out.extend(entropy_battery(cfg)?);
    out.extend(bounds_battery()?);
    out.extend(classical_battery(cfg)?);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_battery_passes() {
        let out = identity_battery().unwrap();
        for o in &out {
            assert!(o.pass, "{o:?}");
        }
    }

    #[test]
    fn outcome_directions() {
        assert!(CheckOutcome::at_most("g", "x", 1.0, 1.0).pass);
        assert!(!CheckOutcome::at_least("g", "x", -2.0, -1.0).pass);
        let w = worst("g", "x", &[0.5, -3.0, 1.0], -1.0, false);
        assert_eq!(w.value, -3.0);
        assert!(!w.pass);
    }
}
