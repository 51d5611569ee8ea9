//! The Gaussian free measure `μ0` on `J` modes, the nonlinear weight
//! `e^{-F_NL}`, and Monte Carlo estimates for the interacting measure
//! `dμ = z_r^{-1} e^{-F_NL} dμ0`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::fock::factorial;
use crate::kernel::{quadratic_form, TwoBodyKernel};
use crate::spectrum::OneBodySpectrum;
use crate::state::DensityMatrixK;
use crate::stats::{complex_gaussian, run_batches, McEstimate, RatioAccumulator, Welford, DEFAULT_BATCH};
use crate::symmetric::SymmetricSpace;

/// Prefactor of `⟨u⊗u, w u⊗u⟩` in `F_NL`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InteractionConvention {
    #[default]
    Half,
    Full,
}

impl InteractionConvention {
    pub fn factor(self) -> f64 {
        match self {
            InteractionConvention::Half => 0.5,
            InteractionConvention::Full => 1.0,
        }
    }
}

/// Sampling budget for classical estimates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassicalConfig {
    pub n_samples: usize,
    pub seed: u64,
    pub batch: usize,
    /// Minimum effective sample size, as a fraction of `n_samples`.
    pub ess_floor: f64,
}

impl Default for ClassicalConfig {
    fn default() -> Self {
        Self {
            n_samples: 1_000_000,
            seed: 7,
            batch: DEFAULT_BATCH,
            ess_floor: 0.1,
        }
    }
}

impl ClassicalConfig {
    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

#[derive(Debug, Clone)]
pub struct ClassicalModel {
    lambdas: Vec<f64>,
    kernel: TwoBodyKernel,
    convention: InteractionConvention,
    pair: SymmetricSpace,
}

impl ClassicalModel {
    pub fn new(spectrum: &OneBodySpectrum, kernel: &TwoBodyKernel, convention: InteractionConvention) -> Result<Self> {
        if spectrum.mode_count() != kernel.modes() {
            return Err(LabError::DimensionMismatch(format!(
                "spectrum has {} modes, kernel has {}",
                spectrum.mode_count(),
                kernel.modes()
            )));
        }
        Ok(Self {
            lambdas: spectrum.eigenvalues().to_vec(),
            kernel: kernel.clone(),
            convention,
            pair: SymmetricSpace::new(kernel.modes(), 2)?,
        })
    }

    pub fn modes(&self) -> usize {
        self.lambdas.len()
    }

    pub fn lambdas(&self) -> &[f64] {
        &self.lambdas
    }

    pub fn convention(&self) -> InteractionConvention {
        self.convention
    }

    /// Independent circular Gaussians with `E|α_j|² = 1/λ_j`.
    pub fn sample_mu0<R: Rng + ?Sized>(&self, rng: &mut R, out: &mut [Complex64]) {
        for (z, &l) in out.iter_mut().zip(&self.lambdas) {
            *z = complex_gaussian(rng, 1.0 / l);
        }
    }

    /// `F_NL(α) = c ⟨α⊗α, w α⊗α⟩` with `c` fixed by the convention.
    pub fn f_nl(&self, alpha: &[Complex64]) -> Result<f64> {
        if alpha.len() != self.modes() {
            return Err(LabError::DimensionMismatch(format!(
                "field has {} modes, model has {}",
                alpha.len(),
                self.modes()
            )));
        }
        Ok(self.f_nl_unchecked(alpha))
    }

    fn f_nl_unchecked(&self, alpha: &[Complex64]) -> f64 {
        if self.kernel.is_zero() {
            return 0.0;
        }
        let d = self.pair.power_coefficients(alpha);
        (self.convention.factor() * quadratic_form(self.kernel.symmetric_matrix(), &d)).max(0.0)
    }

    /// Self-normalized sums for `E_μ0[e^{-sF} X] / E_μ0[e^{-sF}]` plus the
    /// observable `F` itself in slot 0.
    fn weighted<G>(&self, scale: f64, width: usize, observable: G, cfg: &ClassicalConfig) -> Result<RatioAccumulator>
    where
        G: Fn(&[Complex64], &mut [f64]) + Sync,
    {
        let parts = run_batches(cfg.n_samples, cfg.batch, cfg.seed, |rng, count| {
            let mut acc = RatioAccumulator::new(width + 1);
            let mut a = vec![Complex64::new(0.0, 0.0); self.modes()];
            let mut x = vec![0.0; width + 1];
            for _ in 0..count {
                self.sample_mu0(rng, &mut a);
                let f = self.f_nl_unchecked(&a);
                x[0] = f;
                observable(&a, &mut x[1..]);
                acc.push((-scale * f).exp(), &x);
            }
            acc
        })?;
        Ok(RatioAccumulator::merged(parts, width + 1))
    }

    /// `z_r = E_μ0[e^{-F_NL}]`.
    pub fn relative_partition_mc(&self, cfg: &ClassicalConfig) -> Result<McEstimate> {
        self.scaled_partition_mc(1.0, cfg)
    }

    /// `E_μ0[e^{-s F_NL}]`.
    pub fn scaled_partition_mc(&self, scale: f64, cfg: &ClassicalConfig) -> Result<McEstimate> {
        if self.kernel.is_zero() || scale == 0.0 {
            if cfg.n_samples == 0 {
                return invalid("Monte Carlo needs at least one sample");
            }
            return Ok(McEstimate::new(1.0, 0.0, cfg.n_samples as u64, cfg.seed));
        }
        let parts = run_batches(cfg.n_samples, cfg.batch, cfg.seed, |rng, count| {
            let mut acc = Welford::new(1);
            let mut a = vec![Complex64::new(0.0, 0.0); self.modes()];
            for _ in 0..count {
                self.sample_mu0(rng, &mut a);
                acc.push(&[(-scale * self.f_nl_unchecked(&a)).exp()]);
            }
            acc
        })?;
        let acc = Welford::merged(parts, 1);
        Ok(McEstimate::new(acc.mean()[0], acc.stderr()[0], acc.count(), cfg.seed))
    }

    /// `γ^(k) = E_μ0[e^{-F}|α^{⊗k}⟩⟨α^{⊗k}|] / z_r` on the orthonormal
    /// symmetric basis, with `∫ F dμ` and `z_r` from the same samples.
    pub fn gamma_k_mc(&self, k: usize, cfg: &ClassicalConfig) -> Result<GammaEstimate> {
        let space = SymmetricSpace::new(self.modes(), k)?;
        let dim = space.dim();
        let acc = self.weighted(
            1.0,
            2 * dim * dim,
            |a, out| {
                let c = space.power_coefficients(a);
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
        let ratios = acc.ratios();
        let se = acc.stderrs();
        let at = |v: &[f64], r: usize, c: usize, p: usize| v[1 + 2 * (r * dim + c) + p];
        let mean = DMatrix::from_fn(dim, dim, |r, c| Complex64::new(at(&ratios, r, c, 0), at(&ratios, r, c, 1)));
        // Symmetrize so the estimate is exactly Hermitian.
        let mean = (&mean + mean.adjoint()) * Complex64::new(0.5, 0.0);
        let ess = acc.effective_sample_size();
        let (z, z_se) = acc.weight_mean();
        Ok(GammaEstimate {
            k,
            matrix: DensityMatrixK::new(k, self.modes(), mean),
            stderr_re: DMatrix::from_fn(dim, dim, |r, c| at(&se, r, c, 0)),
            stderr_im: DMatrix::from_fn(dim, dim, |r, c| at(&se, r, c, 1)),
            effective_sample_size: ess,
            ess_warning: ess < cfg.ess_floor * cfg.n_samples as f64,
            z_r: McEstimate::new(z, z_se, acc.count(), cfg.seed),
            mean_interaction: McEstimate::new(ratios[0], se[0], acc.count(), cfg.seed),
        })
    }

    /// `E_μ[b_i]` for a family of observables, self-normalized.
    pub fn expectations_mc<G>(&self, width: usize, observable: G, cfg: &ClassicalConfig) -> Result<Vec<McEstimate>>
    where
        G: Fn(&[Complex64], &mut [f64]) + Sync,
    {
        let acc = self.weighted(1.0, width, observable, cfg)?;
        let (r, s) = (acc.ratios(), acc.stderrs());
        Ok((1..=width)
            .map(|i| McEstimate::new(r[i], s[i], acc.count(), cfg.seed))
            .collect())
    }

    /// `H_cl(μ,μ0) + ∫F dμ + log z_r`, which vanishes identically. The entropy
    /// term `E_μ[-F] - log z_r` comes from `seed_a`, the other two from `seed_b`.
    pub fn variational_identity(&self, cfg: &ClassicalConfig, seed_b: u64) -> Result<VariationalReport> {
        if self.kernel.is_zero() {
            return Ok(VariationalReport {
                relative_entropy: 0.0,
                mean_interaction: 0.0,
                log_z_r: 0.0,
                residual: 0.0,
                residual_stderr: 0.0,
            });
        }
        let a = self.weighted(1.0, 0, |_, _| {}, cfg)?;
        let b = self.weighted(1.0, 0, |_, _| {}, &cfg.with_seed(seed_b))?;
        let (za, _) = a.weight_mean();
        let (zb, _) = b.weight_mean();
        let h = -a.ratios()[0] - za.ln();
        let mean_f = b.ratios()[0];
        let log_z = zb.ln();
        Ok(VariationalReport {
            relative_entropy: h,
            mean_interaction: mean_f,
            log_z_r: log_z,
            residual: h + mean_f + log_z,
            residual_stderr: (entropy_variance(&a) + entropy_variance(&b)).sqrt(),
        })
    }

    /// `H_cl(ν,μ0) + ∫F dν` for a Gaussian competitor `ν` with variances
    /// `1/λ'_j` and mean `m`, to be compared with `-log z_r`.
    pub fn competitor_free_energy(&self, nu: &GaussianCompetitor, cfg: &ClassicalConfig) -> Result<McEstimate> {
        if nu.lambdas.len() != self.modes() || nu.mean.len() != self.modes() {
            return Err(LabError::DimensionMismatch("competitor has the wrong number of modes".into()));
        }
        if nu.lambdas.iter().any(|l| !(l.is_finite() && *l > 0.0)) {
            return invalid("competitor variances must be positive");
        }
        let kl = nu.relative_entropy_to(&self.lambdas);
        let parts = run_batches(cfg.n_samples, cfg.batch, cfg.seed, |rng, count| {
            let mut acc = Welford::new(1);
            let mut a = vec![Complex64::new(0.0, 0.0); self.modes()];
            for _ in 0..count {
                for ((z, &l), m) in a.iter_mut().zip(&nu.lambdas).zip(&nu.mean) {
                    *z = m + complex_gaussian(rng, 1.0 / l);
                }
                acc.push(&[self.f_nl_unchecked(&a)]);
            }
            acc
        })?;
        let acc = Welford::merged(parts, 1);
        Ok(McEstimate::new(kl + acc.mean()[0], acc.stderr()[0], acc.count(), cfg.seed))
    }
}

/// Delta-method variance of `-Σ wF/Σ w - log(Σ w / n)`.
fn entropy_variance(acc: &RatioAccumulator) -> f64 {
    let n = acc.count() as f64;
    let (z, _) = acc.weight_mean();
    let r = acc.ratios()[0];
    let c = r - 1.0;
    let sums = acc;
    // a_i = -w_i F_i + c w_i + Z has mean zero; var = Σ a_i² / (n Z)².
    let sa2 = sums.sw2x2[0] - 2.0 * c * sums.sw2x[0] + c * c * sums.sw2 + 2.0 * z * (-sums.swx[0] + c * sums.sw)
        + n * z * z;
    (sa2 / (n * z).powi(2)).max(0.0)
}

#[derive(Debug, Clone)]
pub struct GammaEstimate {
    pub k: usize,
    pub matrix: DensityMatrixK,
    pub stderr_re: DMatrix<f64>,
    pub stderr_im: DMatrix<f64>,
    pub effective_sample_size: f64,
    pub ess_warning: bool,
    pub z_r: McEstimate,
    pub mean_interaction: McEstimate,
}

impl GammaEstimate {
    /// Largest entrywise deviation from `target` in stderr units.
    pub fn max_sigma_deviation(&self, target: &DMatrix<Complex64>) -> f64 {
        let m = self.matrix.matrix();
        let mut worst: f64 = 0.0;
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let d = m[(r, c)] - target[(r, c)];
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

    /// Stderr bound on the trace norm of the estimation error, from the
    /// Frobenius norm of the entrywise errors times `sqrt(dim)`.
    pub fn trace_norm_stderr(&self) -> f64 {
        let dim = self.stderr_re.nrows() as f64;
        let frob: f64 = self
            .stderr_re
            .iter()
            .chain(self.stderr_im.iter())
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt();
        dim.sqrt() * frob
    }

    /// Stderr bound on the Schatten-2 norm of the estimation error.
    pub fn frobenius_stderr(&self) -> f64 {
        self.stderr_re
            .iter()
            .chain(self.stderr_im.iter())
            .map(|s| s * s)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct VariationalReport {
    pub relative_entropy: f64,
    pub mean_interaction: f64,
    pub log_z_r: f64,
    pub residual: f64,
    pub residual_stderr: f64,
}

/// Gaussian measure `Π_j (λ'_j/π) e^{-λ'_j |α_j - m_j|²}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GaussianCompetitor {
    pub lambdas: Vec<f64>,
    pub mean: Vec<Complex64>,
}

impl GaussianCompetitor {
    /// `Σ_j [λ_j/λ'_j - 1 - log(λ_j/λ'_j) + λ_j |m_j|²]`, the relative
    /// entropy with respect to `μ0`.
    pub fn relative_entropy_to(&self, lambdas: &[f64]) -> f64 {
        lambdas
            .iter()
            .zip(&self.lambdas)
            .zip(&self.mean)
            .map(|((&l, &lp), m)| {
                let x = l / lp;
                x - 1.0 - x.ln() + l * m.norm_sqr()
            })
            .sum()
    }
}

/// A spread of competitors around `μ0`: rescaled variances and shifted means.
pub fn default_competitors(lambdas: &[f64]) -> Vec<GaussianCompetitor> {
    let zero = vec![Complex64::new(0.0, 0.0); lambdas.len()];
    let mut out: Vec<GaussianCompetitor> = [1.0, 0.5, 0.8, 1.25, 2.0]
        .iter()
        .map(|&s| GaussianCompetitor {
            lambdas: lambdas.iter().map(|l| l * s).collect(),
            mean: zero.clone(),
        })
        .collect();
    let mut shifted = zero.clone();
    shifted[0] = Complex64::new(0.3 / lambdas[0].sqrt(), 0.0);
    out.push(GaussianCompetitor {
        lambdas: lambdas.to_vec(),
        mean: shifted,
    });
    out.push(GaussianCompetitor {
        lambdas: lambdas.iter().map(|l| l * 1.5).collect(),
        mean: lambdas.iter().map(|l| Complex64::new(0.0, 0.2 / l.sqrt())).collect(),
    });
    out
}

/// `k! (h^{-1})^{⊗k}` as a matrix on the symmetric space: the free-measure
/// moments `E_μ0[|α^{⊗k}⟩⟨α^{⊗k}|]`.
pub fn gamma0_exact(lambdas: &[f64], k: usize) -> Result<DensityMatrixK> {
    let inv: Vec<f64> = lambdas.iter().map(|l| 1.0 / l).collect();
    let space = SymmetricSpace::new(lambdas.len(), k)?;
    let d: Vec<f64> = space
        .tensor_power_diagonal(&inv)
        .into_iter()
        .map(|x| x * factorial(k))
        .collect();
    Ok(DensityMatrixK::diagonal(k, lambdas.len(), &d))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernel::{delta_kernel, finite_rank_kernel};
    use crate::spectrum::dirichlet_spectrum;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn cfg(n: usize, seed: u64) -> ClassicalConfig {
        ClassicalConfig {
            n_samples: n,
            seed,
            ..ClassicalConfig::default()
        }
    }

    #[test]
    fn gaussian_moments() {
        let s = OneBodySpectrum::custom(vec![1.0, 4.0]).unwrap();
        let model = ClassicalModel::new(&s, &TwoBodyKernel::zero(2).unwrap(), InteractionConvention::Half).unwrap();
        let parts = run_batches(400_000, 4096, 11, |rng, count| {
            let mut w = Welford::new(8);
            let mut a = [c(0.0, 0.0); 2];
            for _ in 0..count {
                model.sample_mu0(rng, &mut a);
                let r = a[1].norm_sqr();
                w.push(&[r, r * r, r * r * r, r * r * r * r, a[0].re, a[0].im, (a[0] * a[0]).re, (a[0] * a[0]).im]);
            }
            w
        })
        .unwrap();
        let w = Welford::merged(parts, 8);
        for m in 1..=4 {
            let exact = factorial(m) / 4f64.powi(m as i32);
            assert!((w.mean()[m - 1] - exact).abs() < 4.0 * w.stderr()[m - 1], "m={m}");
        }
        for i in 4..8 {
            assert!(w.mean()[i].abs() < 4.0 * w.stderr()[i]);
        }
    }

    #[test]
    fn f_nl_matches_product_contraction() {
        let v = vec![c(0.3, 0.1), c(1.0, 0.0), c(-0.2, 0.5)];
        for kernel in [delta_kernel(2).unwrap(), finite_rank_kernel(2, &[v], &[0.8]).unwrap()] {
            let s = dirichlet_spectrum(2).unwrap();
            let model = ClassicalModel::new(&s, &kernel, InteractionConvention::Half).unwrap();
            let a = [c(0.7, -0.4), c(0.2, 1.1)];
            let mut oracle = c(0.0, 0.0);
            for p in 0..2 {
                for q in 0..2 {
                    for r in 0..2 {
                        for t in 0..2 {
                            oracle += (a[p] * a[q]).conj() * kernel.get(p, q, r, t) * a[r] * a[t];
                        }
                    }
                }
            }
            assert!((model.f_nl(&a).unwrap() - 0.5 * oracle.re).abs() < 1e-13);
            let full = ClassicalModel::new(&s, &kernel, InteractionConvention::Full).unwrap();
            assert!((full.f_nl(&a).unwrap() - oracle.re).abs() < 1e-13);
            assert_eq!(model.f_nl(&[c(0.0, 0.0); 2]).unwrap(), 0.0);
            assert!(model.f_nl(&[c(0.0, 0.0)]).is_err());
        }
        // single mode, delta kernel: W_{11,11} = 3/(2π)
        let model =
            ClassicalModel::new(&dirichlet_spectrum(1).unwrap(), &delta_kernel(1).unwrap(), InteractionConvention::Half)
                .unwrap();
        let f = model.f_nl(&[c(1.5, 0.0)]).unwrap();
        assert!((f - 0.5 * 1.5f64.powi(4) * 3.0 / (2.0 * std::f64::consts::PI)).abs() < 1e-13);
    }

    #[test]
    fn relative_partition_single_mode_quadrature() {
        let lambda = 2.0;
        let weight = 0.9;
        let s = OneBodySpectrum::custom(vec![lambda]).unwrap();
        let kernel = finite_rank_kernel(1, &[vec![c(1.0, 0.0)]], &[weight]).unwrap();
        let model = ClassicalModel::new(&s, &kernel, InteractionConvention::Half).unwrap();
        let est = model.relative_partition_mc(&cfg(300_000, 3)).unwrap();
        // |α|² ~ Exp(λ) and F = weight |α|⁴ / 2
        let oracle = crate::quadrature::integrate_half_line(
            |r| (-0.5 * weight * r * r).exp() * lambda * (-lambda * r).exp(),
            1.0 / lambda,
            1e-13,
        )
        .unwrap();
        assert!(est.agrees_with(oracle, 4.0), "{est:?} {oracle}");
        assert!(est.value <= 1.0);
        let free = ClassicalModel::new(&s, &TwoBodyKernel::zero(1).unwrap(), InteractionConvention::Half).unwrap();
        let one = free.relative_partition_mc(&cfg(10, 3)).unwrap();
        assert_eq!((one.value, one.stderr), (1.0, 0.0));
        assert!(free.relative_partition_mc(&cfg(0, 3)).is_err());
    }

    #[test]
    fn free_density_matrices() {
        let s = dirichlet_spectrum(2).unwrap();
        let model = ClassicalModel::new(&s, &TwoBodyKernel::zero(2).unwrap(), InteractionConvention::Half).unwrap();
        for k in 1..=2 {
            let est = model.gamma_k_mc(k, &cfg(200_000, 4 + k as u64)).unwrap();
            let exact = gamma0_exact(s.eigenvalues(), k).unwrap();
            assert!(est.max_sigma_deviation(exact.matrix()) < 4.5, "k={k}");
            assert!(!est.ess_warning);
        }
        let g = gamma0_exact(&[1.0, 4.0], 1).unwrap();
        assert_eq!(g.matrix().diagonal().iter().map(|z| z.re).collect::<Vec<_>>(), vec![1.0, 0.25]);
    }

    #[test]
    fn interacting_estimates() {
        let s = dirichlet_spectrum(2).unwrap();
        let kernel = delta_kernel(2).unwrap();
        let model = ClassicalModel::new(&s, &kernel, InteractionConvention::Half).unwrap();
        let c1 = cfg(200_000, 21);
        let g = model.gamma_k_mc(1, &c1).unwrap();
        let z = model.relative_partition_mc(&c1).unwrap();
        assert!((g.z_r.value - z.value).abs() < 1e-12);
        let z2 = model.relative_partition_mc(&cfg(200_000, 22)).unwrap();
        assert!(z.agrees_with_estimate(&z2, 4.0));
        assert!(z.value > 0.0 && z.value < 1.0);
        let g0 = gamma0_exact(s.eigenvalues(), 1).unwrap();
        for j in 0..2 {
            let bound = g0.matrix()[(j, j)].re / z.value;
            assert!(g.matrix.matrix()[(j, j)].re <= bound + 3.0 * g.stderr_re[(j, j)]);
        }
        assert!(g.matrix.hermitian_deviation() == 0.0);
        assert!(g.matrix.min_eigenvalue() > -3.0 * g.stderr_re.max());

        let v = model.variational_identity(&cfg(200_000, 31), 32).unwrap();
        assert!(v.residual.abs() < 4.0 * v.residual_stderr, "{v:?}");
        assert!(v.relative_entropy > 0.0);
        for nu in default_competitors(s.eigenvalues()) {
            let f = model.competitor_free_energy(&nu, &cfg(100_000, 41)).unwrap();
            assert!(f.value + 3.0 * f.stderr >= -v.log_z_r, "{nu:?}");
        }
    }

    #[test]
    fn competitor_entropy_formula() {
        let nu = GaussianCompetitor {
            lambdas: vec![2.0],
            mean: vec![c(0.5, 0.0)],
        };
        // log(λ'/λ) - 1 + λ(1/λ' + |m|²) with λ = 1, λ' = 2
        let expected = 2f64.ln() - 1.0 + 0.5 + 0.25;
        assert!((nu.relative_entropy_to(&[1.0]) - expected).abs() < 1e-15);
    }
}
