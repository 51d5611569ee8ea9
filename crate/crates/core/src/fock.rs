//! Occupation-number basis of the bosonic Fock space over `J` modes with at
//! most `N_max` particles.
//!
//! Sector `n` lists every occupation vector with total `n` in descending
//! lexicographic order: for `J = 2, n = 2` the order is `(2,0), (1,1), (0,2)`.
//! Basis vectors are orthonormal, i.e. the symmetric tensor for an occupation
//! vector has already been divided by `sqrt(Π n_i!)`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, LabError, Result};

pub const DEFAULT_BASIS_CEILING: usize = 5_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OccupationVector {
    counts: Vec<u32>,
}

impl OccupationVector {
    pub fn new(counts: Vec<u32>) -> Self {
        Self { counts }
    }

    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn total(&self) -> usize {
        total(&self.counts)
    }
}

pub fn total(counts: &[u32]) -> usize {
    counts.iter().map(|&c| c as usize).sum()
}

/// `C(n+J-1, J-1)`, exact. Errors when the result does not fit in a `u64`.
pub fn sector_dimension(modes: usize, n: usize) -> Result<u64> {
    if modes == 0 {
        return invalid("sector dimension needs at least one mode");
    }
    let mut r: u128 = 1;
    for i in 1..modes as u128 {
        r = r
            .checked_mul(n as u128 + i)
            .ok_or(LabError::Overflow("sector dimension"))?
            / i;
    }
    u64::try_from(r).map_err(|_| LabError::Overflow("sector dimension"))
}

/// `Π_i n_i!`, the squared norm of the unnormalized symmetric tensor.
pub fn symmetric_norm_factor(counts: &[u32]) -> f64 {
    counts.iter().map(|&c| factorial(c as usize)).product()
}

pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

pub fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// Binomial coefficient as a float, exact for the small arguments used here.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    let k = k.min(n - k);
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

#[derive(Debug, Clone)]
pub struct FockBasis {
    modes: usize,
    n_max: usize,
    /// Flattened occupation vectors per sector, stride `modes`.
    sectors: Vec<Vec<u32>>,
    offsets: Vec<usize>,
    /// `dims[q][s]` is the sector dimension for `q` modes and `s` particles.
    dims: Vec<Vec<usize>>,
}

impl FockBasis {
    pub fn new(modes: usize, n_max: usize) -> Result<Self> {
        Self::with_ceiling(modes, n_max, DEFAULT_BASIS_CEILING)
    }

    pub fn with_ceiling(modes: usize, n_max: usize, ceiling: usize) -> Result<Self> {
        if modes == 0 {
            return invalid("Fock basis needs at least one mode");
        }
        // Hockey stick: Σ_{n≤N} C(n+J-1, J-1) = C(N+J, J).
        let size = sector_dimension(modes + 1, n_max)?;
        if size as u128 > ceiling as u128 {
            return Err(LabError::BasisTooLarge {
                size: size as u128,
                ceiling,
            });
        }
        let mut dims = vec![vec![0usize; n_max + 1]; modes + 1];
        for (q, row) in dims.iter_mut().enumerate().skip(1) {
            for (s, d) in row.iter_mut().enumerate() {
                *d = sector_dimension(q, s)? as usize;
            }
        }
        let mut sectors = Vec::with_capacity(n_max + 1);
        let mut offsets = Vec::with_capacity(n_max + 2);
        let mut offset = 0;
        for n in 0..=n_max {
            let mut flat = Vec::with_capacity(dims[modes][n] * modes);
            let mut current = vec![0u32; modes];
            enumerate_sector(&mut current, 0, n, &mut flat);
            debug_assert_eq!(flat.len(), dims[modes][n] * modes);
            offsets.push(offset);
            offset += dims[modes][n];
            sectors.push(flat);
        }
        offsets.push(offset);
        Ok(Self {
            modes,
            n_max,
            sectors,
            offsets,
            dims,
        })
    }

    pub fn modes(&self) -> usize {
        self.modes
    }

    pub fn n_max(&self) -> usize {
        self.n_max
    }

    pub fn dim(&self) -> usize {
        self.offsets[self.n_max + 1]
    }

    pub fn sector_dim(&self, n: usize) -> usize {
        if n > self.n_max {
            0
        } else {
            self.dims[self.modes][n]
        }
    }

    pub fn sector_sizes(&self) -> Vec<usize> {
        (0..=self.n_max).map(|n| self.sector_dim(n)).collect()
    }

    /// Global position of the first state of sector `n`.
    pub fn offset(&self, n: usize) -> usize {
        self.offsets[n]
    }

    pub fn state(&self, n: usize, i: usize) -> &[u32] {
        &self.sectors[n][i * self.modes..(i + 1) * self.modes]
    }

    pub fn sector_states(&self, n: usize) -> impl Iterator<Item = &[u32]> {
        self.sectors[n].chunks_exact(self.modes)
    }

    /// Position of `counts` inside its sector.
    pub fn index_in_sector(&self, counts: &[u32]) -> Option<usize> {
        if counts.len() != self.modes {
            return None;
        }
        let n = total(counts);
        if n > self.n_max {
            return None;
        }
        let mut rank = 0;
        let mut remaining = n;
        for (j, &c) in counts.iter().enumerate().take(self.modes - 1) {
            let c = c as usize;
            if remaining > c {
                rank += self.dims[self.modes - j][remaining - c - 1];
            }
            remaining -= c;
        }
        Some(rank)
    }

    /// Occupation vector to `(sector, position)`.
    pub fn locate(&self, occ: &OccupationVector) -> Option<(usize, usize)> {
        let i = self.index_in_sector(occ.counts())?;
        Some((occ.total(), i))
    }

    /// Global index to occupation vector.
    pub fn occupation(&self, global: usize) -> Option<OccupationVector> {
        if global >= self.dim() {
            return None;
        }
        let n = self.offsets.partition_point(|&o| o <= global) - 1;
        Some(OccupationVector::new(
            self.state(n, global - self.offsets[n]).to_vec(),
        ))
    }

    pub fn global_index(&self, occ: &OccupationVector) -> Option<usize> {
        self.locate(occ).map(|(n, i)| self.offsets[n] + i)
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.modes == other.modes && self.n_max == other.n_max
    }
}

fn enumerate_sector(current: &mut [u32], j: usize, remaining: usize, out: &mut Vec<u32>) {
    let modes = current.len();
    if j == modes - 1 {
        current[j] = remaining as u32;
        out.extend_from_slice(current);
        return;
    }
    for c in (0..=remaining).rev() {
        current[j] = c as u32;
        enumerate_sector(current, j + 1, remaining - c, out);
    }
    current[j] = 0;
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_bases() {
        let b = FockBasis::new(2, 2).unwrap();
        assert_eq!(b.sector_sizes(), vec![1, 2, 3]);
        assert_eq!(b.dim(), 6);
        let listed: Vec<Vec<u32>> = (0..3)
            .flat_map(|n| b.sector_states(n).map(|s| s.to_vec()).collect::<Vec<_>>())
            .collect();
        assert_eq!(
            listed,
            vec![vec![0, 0], vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
        assert_eq!(FockBasis::new(3, 1).unwrap().sector_sizes(), vec![1, 3]);
        let one = FockBasis::new(1, 10).unwrap();
        assert!(one.sector_sizes().iter().all(|&d| d == 1));
        assert_eq!(one.dim(), 11);
        assert!(FockBasis::new(0, 3).is_err());
    }

    #[test]
    fn dimensions() {
        assert_eq!(sector_dimension(2, 2).unwrap(), 3);
        assert_eq!(sector_dimension(4, 3).unwrap(), 20);
        assert_eq!(sector_dimension(3, 24).unwrap(), 325);
        assert_eq!(sector_dimension(1, 1000).unwrap(), 1);
        assert!(matches!(
            sector_dimension(40, 1_000_000),
            Err(LabError::Overflow(_))
        ));
    }

    #[test]
    fn ceiling_guard() {
        assert!(matches!(
            FockBasis::with_ceiling(3, 30, 100),
            Err(LabError::BasisTooLarge { .. })
        ));
        assert!(FockBasis::new(20, 40).is_err());
    }

    #[test]
    fn norm_factor() {
        assert_eq!(symmetric_norm_factor(&[2, 0]), 2.0);
        assert_eq!(symmetric_norm_factor(&[1, 1]), 1.0);
        assert_eq!(symmetric_norm_factor(&[3, 2]), 12.0);
    }

    fn multiset_count(modes: u64, n: u64) -> u64 {
        // Brute-force count of nonnegative integer solutions.
        if modes == 1 {
            return 1;
        }
        (0..=n).map(|c| multiset_count(modes - 1, n - c)).sum()
    }

    proptest! {
        #[test]
        fn dimension_matches_count(modes in 1usize..6, n in 0usize..12) {
            prop_assert_eq!(sector_dimension(modes, n).unwrap(), multiset_count(modes as u64, n as u64));
        }

        #[test]
        fn hockey_stick(modes in 1usize..7, n_max in 0usize..15) {
            let sum: u64 = (0..=n_max).map(|n| sector_dimension(modes, n).unwrap()).sum();
            prop_assert_eq!(sum, sector_dimension(modes + 1, n_max).unwrap());
        }

        #[test]
        fn index_round_trip(modes in 1usize..5, n_max in 0usize..7) {
            let b = FockBasis::new(modes, n_max).unwrap();
            for g in 0..b.dim() {
                let occ = b.occupation(g).unwrap();
                prop_assert_eq!(b.global_index(&occ), Some(g));
                prop_assert!(occ.total() <= n_max);
            }
            prop_assert!(b.occupation(b.dim()).is_none());
        }

        #[test]
        fn sectors_descending(modes in 1usize..5, n in 0usize..7) {
            let b = FockBasis::new(modes, n).unwrap();
            let states: Vec<&[u32]> = b.sector_states(n).collect();
            for w in states.windows(2) {
                prop_assert!(w[0] > w[1]);
            }
        }
    }
}
