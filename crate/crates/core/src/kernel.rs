//! Two-body interaction kernels `w ≥ 0` on the symmetric pair space.
//!
//! Coefficients are stored in the product mode basis,
//! `W[(a,b),(c,d)] = ⟨φ_a⊗φ_b, w φ_c⊗φ_d⟩`, with modes indexed from zero.
//! The second-quantized operator is `½ Σ W[(a,b),(c,d)] a†_a a†_b a_d a_c`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};
use crate::symmetric::SymmetricSpace;

const STRUCTURE_TOL: f64 = 1e-12;
const PSD_TOL: f64 = 1e-10;

/// One coefficient, serialized as `[a, b, c, d, re, im]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelEntry(pub usize, pub usize, pub usize, pub usize, pub f64, pub f64);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelFile {
    pub modes: usize,
    pub entries: Vec<KernelEntry>,
}

#[derive(Debug, Clone)]
pub struct TwoBodyKernel {
    modes: usize,
    coeffs: Vec<Complex64>,
    sym: DMatrix<Complex64>,
    min_eigenvalue: f64,
}

impl TwoBodyKernel {
    fn from_coeffs(modes: usize, coeffs: Vec<Complex64>, tol: f64) -> Result<Self> {
        let idx = |a: usize, b: usize, c: usize, d: usize| ((a * modes + b) * modes + c) * modes + d;
        let mut swap_dev: f64 = 0.0;
        let mut herm_dev: f64 = 0.0;
        for a in 0..modes {
            for b in 0..modes {
                for c in 0..modes {
                    for d in 0..modes {
                        let w = coeffs[idx(a, b, c, d)];
                        swap_dev = swap_dev.max((w - coeffs[idx(b, a, d, c)]).norm());
                        herm_dev = herm_dev.max((w - coeffs[idx(c, d, a, b)].conj()).norm());
                    }
                }
            }
        }
        if swap_dev > tol {
            return Err(LabError::KernelStructure {
                what: "exchange symmetry",
                deviation: swap_dev,
            });
        }
        if herm_dev > tol {
            return Err(LabError::KernelStructure {
                what: "hermiticity",
                deviation: herm_dev,
            });
        }
        let pair = SymmetricSpace::new(modes, 2)?;
        let v = pair.product_isometry().map(|x| Complex64::new(x, 0.0));
        let n2 = modes * modes;
        let w = DMatrix::from_fn(n2, n2, |r, c| coeffs[r * n2 + c]);
        let mut sym = v.adjoint() * w * &v;
        sym = (&sym + sym.adjoint()).scale(0.5);
        let min_eigenvalue = if sym.iter().all(|z| z.im == 0.0) {
            SymmetricEigen::new(sym.map(|z| z.re)).eigenvalues.min()
        } else {
            SymmetricEigen::new(sym.clone()).eigenvalues.min()
        };
        if min_eigenvalue < -PSD_TOL {
            return Err(LabError::KernelStructure {
                what: "positivity",
                deviation: -min_eigenvalue,
            });
        }
        Ok(Self {
            modes,
            coeffs,
            sym,
            min_eigenvalue,
        })
    }

    pub fn zero(modes: usize) -> Result<Self> {
        if modes == 0 {
            return invalid("kernel needs at least one mode");
        }
        Self::from_coeffs(modes, vec![Complex64::new(0.0, 0.0); modes.pow(4)], 0.0)
    }

    pub fn from_entries(modes: usize, entries: &[KernelEntry]) -> Result<Self> {
        if modes == 0 {
            return invalid("kernel needs at least one mode");
        }
        let mut coeffs = vec![Complex64::new(0.0, 0.0); modes.pow(4)];
        for &KernelEntry(a, b, c, d, re, im) in entries {
            if [a, b, c, d].iter().any(|&m| m >= modes) {
                return Err(LabError::ModeOutOfRange {
                    mode: a.max(b).max(c).max(d),
                    modes,
                });
            }
            coeffs[((a * modes + b) * modes + c) * modes + d] = Complex64::new(re, im);
        }
        Self::from_coeffs(modes, coeffs, STRUCTURE_TOL)
    }

    pub fn from_file(file: &KernelFile) -> Result<Self> {
        Self::from_entries(file.modes, &file.entries)
    }

    pub fn to_file(&self) -> KernelFile {
        KernelFile {
            modes: self.modes,
            entries: self.entries(),
        }
    }

    /// Nonzero coefficients in `(a,b,c,d)` lexicographic order.
    pub fn entries(&self) -> Vec<KernelEntry> {
        let m = self.modes;
        let mut out = Vec::new();
        for (i, w) in self.coeffs.iter().enumerate() {
            if *w != Complex64::new(0.0, 0.0) {
                out.push(KernelEntry(i / (m * m * m), (i / (m * m)) % m, (i / m) % m, i % m, w.re, w.im));
            }
        }
        out
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn get(&self, a: usize, b: usize, c: usize, d: usize) -> Complex64 {
        let m = self.modes;
        self.coeffs[((a * m + b) * m + c) * m + d]
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|w| w.norm() == 0.0)
    }

    pub fn is_real(&self) -> bool {
        self.coeffs.iter().all(|w| w.im == 0.0)
    }

    /// Matrix of `w` on the orthonormal symmetric pair basis.
    pub fn symmetric_matrix(&self) -> &DMatrix<Complex64> {
        &self.sym
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.min_eigenvalue
    }

    pub fn psd_certificate(&self) -> bool {
        self.min_eigenvalue >= -PSD_TOL
    }

    /// Restriction to the first `modes` modes.
    pub fn truncated(&self, modes: usize) -> Result<Self> {
        if modes == 0 || modes > self.modes {
            return invalid(format!("cannot restrict a {}-mode kernel to {modes}", self.modes));
        }
        let mut coeffs = Vec::with_capacity(modes.pow(4));
        for a in 0..modes {
            for b in 0..modes {
                for c in 0..modes {
                    for d in 0..modes {
                        coeffs.push(self.get(a, b, c, d));
                    }
                }
            }
        }
        Self::from_coeffs(modes, coeffs, f64::INFINITY)
    }

    /// Non-zero coefficients grouped by the annihilated pair `(c, d)`.
    pub(crate) fn by_annihilated_pair(&self) -> Vec<Vec<(usize, usize, Complex64)>> {
        let m = self.modes;
        let mut out = vec![Vec::new(); m * m];
        for a in 0..m {
            for b in 0..m {
                for c in 0..m {
                    for d in 0..m {
                        let w = self.get(a, b, c, d);
                        if w != Complex64::new(0.0, 0.0) {
                            out[c * m + d].push((a, b, w));
                        }
                    }
                }
            }
        }
        out
    }

    /// `tr[w A^{⊗2}]` on the symmetric pair space for a diagonal one-body `A`.
    pub fn trace_against_diagonal(&self, diag: &[f64]) -> Result<f64> {
        if diag.len() != self.modes {
            return Err(LabError::DimensionMismatch(format!(
                "kernel has {} modes, diagonal has {}",
                self.modes,
                diag.len()
            )));
        }
        let pair = SymmetricSpace::new(self.modes, 2)?;
        let d = pair.tensor_power_diagonal(diag);
        Ok(d.iter().enumerate().map(|(i, x)| self.sym[(i, i)].re * x).sum())
    }

    /// `⟨u⊗u, w u⊗u⟩`.
    pub fn pair_expectation(&self, u: &[Complex64]) -> f64 {
        let pair = SymmetricSpace::new(self.modes, 2).expect("kernel has modes");
        let d = pair.power_coefficients(u);
        quadratic_form(&self.sym, &d)
    }
}

pub(crate) fn quadratic_form(m: &DMatrix<Complex64>, d: &DVector<Complex64>) -> f64 {
    (d.adjoint() * m * d)[(0, 0)].re
}

/// `W[(a,b),(c,d)] = ∫_0^π φ_a φ_b φ_c φ_d` with `φ_n = sqrt(2/π) sin(n x)`,
/// the sine modes of the Dirichlet interval.
pub fn delta_kernel(modes: usize) -> Result<TwoBodyKernel> {
    if modes == 0 {
        return invalid("delta kernel needs at least one mode");
    }
    let mut coeffs = Vec::with_capacity(modes.pow(4));
    for a in 1..=modes {
        for b in 1..=modes {
            for c in 1..=modes {
                for d in 1..=modes {
                    coeffs.push(Complex64::new(sine_quartic_integral(a, b, c, d), 0.0));
                }
            }
        }
    }
    TwoBodyKernel::from_coeffs(modes, coeffs, STRUCTURE_TOL)
}

/// `(2/π)^2 ∫_0^π sin(ax) sin(bx) sin(cx) sin(dx) dx` through the cosine
/// product expansion, with 1-based frequencies.
pub fn sine_quartic_integral(a: usize, b: usize, c: usize, d: usize) -> f64 {
    let (a, b, c, d) = (a as i64, b as i64, c as i64, d as i64);
    let ps = [(a - b, 1.0), (a + b, -1.0)];
    let qs = [(c - d, 1.0), (c + d, -1.0)];
    let mut s = 0.0;
    for &(p, sp) in &ps {
        for &(q, sq) in &qs {
            let hits = (p == q) as i32 + (p == -q) as i32;
            s += sp * sq * hits as f64;
        }
    }
    let pi = std::f64::consts::PI;
    // ∫ cos(px)cos(qx) = (π/2)(δ_{p,q} + δ_{p,-q}), prefactor 1/4 from the
    // two sine products.
    (2.0 / pi).powi(2) * s * pi / 8.0
}

/// `w = Σ_r weight_r |g_r⟩⟨g_r|` with `g_r` given on the orthonormal symmetric
/// pair basis.
pub fn finite_rank_kernel(
    modes: usize,
    vectors: &[Vec<Complex64>],
    weights: &[f64],
) -> Result<TwoBodyKernel> {
    if modes == 0 {
        return invalid("kernel needs at least one mode");
    }
    if vectors.len() != weights.len() {
        return Err(LabError::DimensionMismatch(format!(
            "{} vectors but {} weights",
            vectors.len(),
            weights.len()
        )));
    }
    if let Some(w) = weights.iter().find(|w| !(w.is_finite() && **w > 0.0)) {
        return invalid(format!("kernel weights must be positive, got {w}"));
    }
    let pair = SymmetricSpace::new(modes, 2)?;
    let v = pair.product_isometry().map(|x| Complex64::new(x, 0.0));
    let n2 = modes * modes;
    let mut coeffs = vec![Complex64::new(0.0, 0.0); n2 * n2];
    for (g, &weight) in vectors.iter().zip(weights) {
        if g.len() != pair.dim() {
            return Err(LabError::DimensionMismatch(format!(
                "pair vector has length {}, symmetric pair space has dimension {}",
                g.len(),
                pair.dim()
            )));
        }
        let prod = &v * DVector::from_column_slice(g);
        for r in 0..n2 {
            for c in 0..n2 {
                coeffs[r * n2 + c] += prod[r] * prod[c].conj() * weight;
            }
        }
    }
    TwoBodyKernel::from_coeffs(modes, coeffs, STRUCTURE_TOL)
}
