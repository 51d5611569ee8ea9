//! One-particle operator `h`, stored purely through its eigenvalues.
//!
//! Every quantity downstream (free Gibbs states, Gaussian measures, traces of
//! negative powers) depends on `h` only through its spectrum, so no operator
//! is ever materialized. Mode `j` (0-based) carries eigenvalue `eigenvalues[j]`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SpectrumFamily {
    DirichletInterval,
    Anharmonic,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OneBodySpectrum {
    eigenvalues: Vec<f64>,
    family: SpectrumFamily,
}

impl OneBodySpectrum {
    /// Builds a spectrum from explicit eigenvalues. They must be finite,
    /// strictly positive and nondecreasing.
    pub fn custom(eigenvalues: Vec<f64>) -> Result<Self> {
        Self::with_family(eigenvalues, SpectrumFamily::Custom)
    }

    /// Custom spectrum shifted by a constant, e.g. `-d²/dx² + C` with
    /// boundary conditions that leave a zero mode.
    pub fn shifted(eigenvalues: &[f64], shift: f64) -> Result<Self> {
        Self::custom(eigenvalues.iter().map(|&e| e + shift).collect())
    }

    fn with_family(eigenvalues: Vec<f64>, family: SpectrumFamily) -> Result<Self> {
        if eigenvalues.is_empty() {
            return invalid("spectrum needs at least one mode");
        }
        if let Some(bad) = eigenvalues.iter().find(|e| !(e.is_finite() && **e > 0.0)) {
            return invalid(format!("eigenvalue {bad} is not strictly positive"));
        }
        if eigenvalues.windows(2).any(|w| w[1] < w[0]) {
            return invalid("eigenvalues must be sorted nondecreasing");
        }
        Ok(Self { eigenvalues, family })
    }

    pub fn eigenvalues(&self) -> &[f64] {
        &self.eigenvalues
    }

    pub fn mode_count(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn family(&self) -> SpectrumFamily {
        self.family
    }

    /// Restriction to the first `modes` eigenvalues.
    pub fn truncated(&self, modes: usize) -> Result<Self> {
        if modes == 0 || modes > self.mode_count() {
            return invalid(format!("cannot truncate {} modes to {modes}", self.mode_count()));
        }
        Ok(Self {
            eigenvalues: self.eigenvalues[..modes].to_vec(),
            family: self.family,
        })
    }

    /// Spectrum of the union of two independent mode sets.
    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut all = self.eigenvalues.clone();
        all.extend_from_slice(&other.eigenvalues);
        all.sort_by(f64::total_cmp);
        Self::custom(all)
    }
}

/// `-d²/dx²` on `(0, π)` with Dirichlet boundary conditions: `λ_n = n²`.
pub fn dirichlet_spectrum(modes: usize) -> Result<OneBodySpectrum> {
    if modes == 0 {
        return invalid("dirichlet spectrum needs at least one mode");
    }
    let eigenvalues = (1..=modes).map(|n| (n * n) as f64).collect();
    OneBodySpectrum::with_family(eigenvalues, SpectrumFamily::DirichletInterval)
}

/// `λ_n = slope · n`; for infinitely many modes `tr h^{-1}` diverges while
/// `tr h^{-p}` is finite for every `p > 1`.
pub fn linear_spectrum(modes: usize, slope: f64) -> Result<OneBodySpectrum> {
    if modes == 0 {
        return invalid("linear spectrum needs at least one mode");
    }
    if !(slope.is_finite() && slope > 0.0) {
        return invalid(format!("slope must be positive, got {slope}"));
    }
    let eigenvalues = (1..=modes).map(|n| slope * n as f64).collect();
    OneBodySpectrum::with_family(eigenvalues, SpectrumFamily::Anharmonic)
}

/// Truncated trace `Σ_j λ_j^{-p}`.
pub fn schatten_trace(spectrum: &OneBodySpectrum, p: f64) -> Result<f64> {
    if !(p.is_finite() && p > 0.0) {
        return invalid(format!("schatten exponent must be positive, got {p}"));
    }
    Ok(spectrum.eigenvalues.iter().map(|l| l.powf(-p)).sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dirichlet_values() {
        assert_eq!(dirichlet_spectrum(3).unwrap().eigenvalues(), &[1.0, 4.0, 9.0]);
        assert_eq!(dirichlet_spectrum(1).unwrap().eigenvalues(), &[1.0]);
        assert!(dirichlet_spectrum(0).is_err());
    }

    #[test]
    fn linear_values() {
        assert_eq!(linear_spectrum(3, 1.0).unwrap().eigenvalues(), &[1.0, 2.0, 3.0]);
        assert_eq!(linear_spectrum(2, 0.5).unwrap().eigenvalues(), &[0.5, 1.0]);
        assert!(linear_spectrum(1, -1.0).is_err());
        assert!(linear_spectrum(1, 0.0).is_err());
        assert_eq!(linear_spectrum(2, 1.0).unwrap().family(), SpectrumFamily::Anharmonic);
    }

    #[test]
    fn custom_validation() {
        assert!(OneBodySpectrum::custom(vec![]).is_err());
        assert!(OneBodySpectrum::custom(vec![0.0, 1.0]).is_err());
        assert!(OneBodySpectrum::custom(vec![2.0, 1.0]).is_err());
        assert!(OneBodySpectrum::custom(vec![f64::NAN]).is_err());
        let s = OneBodySpectrum::shifted(&[0.0, 1.0, 4.0], 0.5).unwrap();
        assert_eq!(s.eigenvalues(), &[0.5, 1.5, 4.5]);
    }

    #[test]
    fn schatten_small_cases() {
        let s = dirichlet_spectrum(3).unwrap();
        let t = schatten_trace(&s, 1.0).unwrap();
        assert!((t - (1.0 + 0.25 + 1.0 / 9.0)).abs() < 1e-15);
        assert!(schatten_trace(&s, 0.0).is_err());
        assert!(schatten_trace(&s, -1.0).is_err());
    }

    #[test]
    fn schatten_basel_limit() {
        // Partial sums of 1/n² miss π²/6 by a remainder in (1/(J+1), 1/J).
        let exact = std::f64::consts::PI.powi(2) / 6.0;
        for &j in &[10usize, 100, 1000] {
            let partial = schatten_trace(&dirichlet_spectrum(j).unwrap(), 1.0).unwrap();
            let remainder = exact - partial;
            assert!(remainder > 1.0 / (j as f64 + 1.0) - 1e-12);
            assert!(remainder < 1.0 / j as f64);
        }
    }

    #[test]
    fn schatten_decreasing_in_p_on_tail() {
        let s = dirichlet_spectrum(8).unwrap();
        let tail = |p: f64| schatten_trace(&s, p).unwrap() - 1.0;
        let mut prev = tail(0.5);
        for p in [0.75, 1.0, 1.5, 2.0, 3.0] {
            let cur = tail(p);
            assert!(cur < prev);
            prev = cur;
        }
    }

    #[test]
    fn schatten_additive() {
        let a = dirichlet_spectrum(3).unwrap();
        let b = linear_spectrum(4, 0.7).unwrap();
        let ab = a.concat(&b).unwrap();
        for p in [0.5, 1.0, 2.5] {
            let lhs = schatten_trace(&ab, p).unwrap();
            let rhs = schatten_trace(&a, p).unwrap() + schatten_trace(&b, p).unwrap();
            assert!((lhs - rhs).abs() < 1e-13);
        }
    }
}
