//! JSON run configuration for the convergence campaigns.
//!
//! Every field has a default, so `{}` is a valid configuration describing
//! the desk-scale campaign: two Dirichlet modes, the delta kernel, the grid
//! `T ∈ {2, 4, 8, 16}` with `λ = 1/T`, and an adaptive cutoff. The schema is
//! documented in `docs/config.md`.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::classical::{ClassicalConfig, InteractionConvention};
use crate::error::{LabError, Result};
use crate::gibbs::adaptive_n_max;
use crate::husimi::RadialTest;
use crate::kernel::{delta_kernel, finite_rank_kernel, KernelFile, TwoBodyKernel};
use crate::spectrum::{dirichlet_spectrum, linear_spectrum, OneBodySpectrum};
use crate::symmetric::SymmetricSpace;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case", deny_unknown_fields)]
pub enum SpectrumSpec {
    /// `λ_n = n²`.
    Dirichlet { modes: usize },
    /// `λ_n = slope · n`.
    Linear {
        modes: usize,
        #[serde(default = "one")]
        slope: f64,
    },
    Custom { eigenvalues: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

impl Default for SpectrumSpec {
    fn default() -> Self {
        SpectrumSpec::Dirichlet { modes: 2 }
    }
}

impl SpectrumSpec {
    pub fn build(&self) -> Result<OneBodySpectrum> {
        match self {
            SpectrumSpec::Dirichlet { modes } => dirichlet_spectrum(*modes),
            SpectrumSpec::Linear { modes, slope } => linear_spectrum(*modes, *slope),
            SpectrumSpec::Custom { eigenvalues } => OneBodySpectrum::custom(eigenvalues.clone()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum KernelSpec {
    Zero,
    /// Coefficients `∫ φ_a φ_b φ_c φ_d` of the Dirichlet sine modes.
    #[default]
    Delta,
    /// `weight |g⟩⟨g|` with `g` given as `[re, im]` pairs on the orthonormal
    /// symmetric pair basis; omitted `vector` means the normalized uniform
    /// vector.
    RankOne {
        #[serde(default)]
        vector: Option<Vec<[f64; 2]>>,
        #[serde(default = "one")]
        weight: f64,
    },
    /// A kernel file with `[a, b, c, d, re, im]` entries.
    File { path: PathBuf },
}

impl KernelSpec {
    pub fn build(&self, modes: usize) -> Result<TwoBodyKernel> {
        match self {
            KernelSpec::Zero => TwoBodyKernel::zero(modes),
            KernelSpec::Delta => delta_kernel(modes),
            KernelSpec::RankOne { vector, weight } => {
                let dim = SymmetricSpace::new(modes, 2)?.dim();
                let g: Vec<Complex64> = match vector {
                    Some(v) => v.iter().map(|&[re, im]| Complex64::new(re, im)).collect(),
                    None => vec![Complex64::new(1.0 / (dim as f64).sqrt(), 0.0); dim],
                };
                finite_rank_kernel(modes, &[g], &[*weight])
            }
            KernelSpec::File { path } => {
                let file: KernelFile = serde_json::from_str(&std::fs::read_to_string(path)?)?;
                if file.modes != modes {
                    return Err(LabError::DimensionMismatch(format!(
                        "kernel file has {} modes, spectrum has {modes}",
                        file.modes
                    )));
                }
                TwoBodyKernel::from_file(&file)
            }
        }
    }
}

/// `λ(T)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingRule {
    /// `λ = factor / T`.
    InverseTemperature {
        #[serde(default = "one")]
        factor: f64,
    },
    Constant { value: f64 },
}

impl Default for CouplingRule {
    fn default() -> Self {
        CouplingRule::InverseTemperature { factor: 1.0 }
    }
}

impl CouplingRule {
    pub fn coupling(&self, temperature: f64) -> f64 {
        match *self {
            CouplingRule::InverseTemperature { factor } => factor / temperature,
            CouplingRule::Constant { value } => value,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum CutoffPolicy {
    Fixed {
        n_max: usize,
        #[serde(default = "default_certificate")]
        max_certificate: f64,
    },
    /// Smallest `N_max` whose free tail mass at each temperature is below
    /// `tail`.
    Adaptive {
        #[serde(default = "default_tail")]
        tail: f64,
        #[serde(default = "default_certificate")]
        max_certificate: f64,
    },
}

fn default_tail() -> f64 {
    1e-10
}

fn default_certificate() -> f64 {
    1e-8
}

impl Default for CutoffPolicy {
    fn default() -> Self {
        CutoffPolicy::Adaptive {
            tail: default_tail(),
            max_certificate: default_certificate(),
        }
    }
}

impl CutoffPolicy {
    pub fn n_max(&self, spectrum: &OneBodySpectrum, temperature: f64) -> Result<usize> {
        match *self {
            CutoffPolicy::Fixed { n_max, .. } => Ok(n_max),
            CutoffPolicy::Adaptive { tail, .. } => adaptive_n_max(spectrum, temperature, tail),
        }
    }

    pub fn max_certificate(&self) -> f64 {
        match *self {
            CutoffPolicy::Fixed { max_certificate, .. } | CutoffPolicy::Adaptive { max_certificate, .. } => {
                max_certificate
            }
        }
    }
}

/// Norm used for the one-body distance in the `dm` campaign.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DistanceNorm {
    #[default]
    Trace,
    Schatten2,
}

impl DistanceNorm {
    pub fn exponent(self) -> f64 {
        match self {
            DistanceNorm::Trace => 1.0,
            DistanceNorm::Schatten2 => 2.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmSettings {
    pub k: usize,
    pub norm: DistanceNorm,
}

impl Default for DmSettings {
    fn default() -> Self {
        Self {
            k: 1,
            norm: DistanceNorm::Trace,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HusimiSettings {
    pub tests: Vec<RadialTest>,
}

impl Default for HusimiSettings {
    fn default() -> Self {
        Self {
            tests: vec![
                RadialTest::Constant,
                RadialTest::Gaussian { c: 1.0 },
                RadialTest::ModeGaussian { mode: 0, c: 1.0 },
                RadialTest::ClippedIntensity { mode: 0, cap: 1.0 },
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSettings {
    pub dir: PathBuf,
    /// File stem; the campaign name when absent.
    pub stem: Option<String>,
}

impl Default for OutputSettings {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            stem: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub spectrum: SpectrumSpec,
    pub kernel: KernelSpec,
    pub temperatures: Vec<f64>,
    pub coupling: CouplingRule,
    pub cutoff: CutoffPolicy,
    pub interaction_convention: InteractionConvention,
    pub classical: ClassicalConfig,
    /// Second seed for estimates that need two independent streams.
    pub secondary_seed: u64,
    pub dm: DmSettings,
    pub husimi: HusimiSettings,
    pub output: OutputSettings,
    /// Worker threads; all available cores when absent.
    pub threads: Option<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            spectrum: SpectrumSpec::default(),
            kernel: KernelSpec::default(),
            temperatures: vec![2.0, 4.0, 8.0, 16.0],
            coupling: CouplingRule::default(),
            cutoff: CutoffPolicy::default(),
            interaction_convention: InteractionConvention::Half,
            classical: ClassicalConfig::default(),
            secondary_seed: 11,
            dm: DmSettings::default(),
            husimi: HusimiSettings::default(),
            output: OutputSettings::default(),
            threads: None,
        }
    }
}

/// Largest `λ(T)·T` accepted on the grid.
const MAX_COUPLING_TIMES_T: f64 = 1e3;

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// The campaign with a linear spectrum `λ_n = n` on two modes and the
    /// uniform rank-one kernel, reporting Schatten-2 distances.
    pub fn schatten_campaign() -> Self {
        Self {
            spectrum: SpectrumSpec::Linear { modes: 2, slope: 1.0 },
            kernel: KernelSpec::RankOne {
                vector: None,
                weight: 1.0,
            },
            dm: DmSettings {
                k: 1,
                norm: DistanceNorm::Schatten2,
            },
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(LabError::Config(m));
        if self.temperatures.is_empty() {
            return bad("temperature grid is empty".into());
        }
        if self.temperatures.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("temperatures must be positive and finite".into());
        }
        if self.temperatures.windows(2).any(|w| w[1] <= w[0]) {
            return bad("temperature grid must be strictly ascending".into());
        }
        for &t in &self.temperatures {
            let l = self.coupling.coupling(t);
            if !(l.is_finite() && l >= 0.0) {
                return bad(format!("coupling at T={t} is {l}"));
            }
            if l * t > MAX_COUPLING_TIMES_T {
                return bad(format!("λ(T)·T = {} at T={t} is not bounded on the grid", l * t));
            }
        }
        match self.cutoff {
            CutoffPolicy::Fixed { n_max: 0, .. } => return bad("fixed cutoff must be positive".into()),
            CutoffPolicy::Adaptive { tail, .. } if !(tail > 0.0 && tail < 1.0) => {
                return bad(format!("tail threshold {tail} outside (0,1)"))
            }
            _ => {}
        }
        if self.classical.n_samples == 0 {
            return bad("classical sample budget is zero".into());
        }
        if self.dm.k == 0 {
            return bad("dm.k must be at least 1".into());
        }
        if self.dm.norm == DistanceNorm::Schatten2 && self.dm.k != 1 {
            return bad("Schatten-2 distances are reported for k = 1 only".into());
        }
        Ok(())
    }

    pub fn spectrum(&self) -> Result<OneBodySpectrum> {
        self.spectrum.build()
    }

    pub fn kernel(&self) -> Result<TwoBodyKernel> {
        self.kernel.build(self.spectrum()?.mode_count())
    }

    pub fn output_stem(&self, campaign: &str) -> String {
        self.output.stem.clone().unwrap_or_else(|| campaign.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_is_default_campaign() {
        let cfg = RunConfig::from_json("{}").unwrap();
        assert_eq!(cfg, RunConfig::default());
        assert_eq!(cfg.spectrum().unwrap().eigenvalues(), &[1.0, 4.0]);
        assert!((cfg.coupling.coupling(8.0) - 0.125).abs() < 1e-15);
    }

    #[test]
    fn tagged_variants_parse() {
        let cfg = RunConfig::from_json(
            r#"{"spectrum": {"family": "linear", "modes": 3},
                "kernel": {"kind": "rank_one", "weight": 2.0},
                "temperatures": [1, 3],
                "coupling": {"rule": "constant", "value": 0.1},
                "cutoff": {"policy": "fixed", "n_max": 6},
                "interaction_convention": "full",
                "classical": {"n_samples": 1000}}"#,
        )
        .unwrap();
        assert_eq!(cfg.spectrum().unwrap().eigenvalues(), &[1.0, 2.0, 3.0]);
        let w = cfg.kernel().unwrap();
        // uniform vector of weight 2 has a single eigenvalue 2 on the pair space
        assert!((w.symmetric_matrix().trace().re - 2.0).abs() < 1e-12);
        assert_eq!(cfg.classical.seed, 7);
        assert_eq!(cfg.cutoff.n_max(&cfg.spectrum().unwrap(), 3.0).unwrap(), 6);
    }

    #[test]
    fn rejects_bad_grids_and_fields() {
        assert!(RunConfig::from_json(r#"{"temperatures": []}"#).is_err());
        assert!(RunConfig::from_json(r#"{"temperatures": [4, 2]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"temperatures": [2, 2]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"temperature": [2]}"#).is_err());
        assert!(RunConfig::from_json(r#"{"coupling": {"rule": "constant", "value": 1e4}}"#).is_err());
        assert!(RunConfig::from_json(r#"{"dm": {"k": 2, "norm": "schatten2"}}"#).is_err());
    }

    #[test]
    fn round_trip() {
        let cfg = RunConfig::schatten_campaign();
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(RunConfig::from_json(&text).unwrap(), cfg);
    }
}
