//! Physical parameters and the single-excitation Hamiltonian of a
//! coupled-cavity waveguide with an embedded two-level emitter.
//!
//! Everything is expressed in the frame rotating at the atom frequency, so
//! the atom diagonal entry is 0, cavity diagonals carry the detuning
//! omega_c - omega0, nearest-neighbour hopping is -J and the atom couples to
//! the central cavity with strength g0. The basis ordering is fixed:
//! index 0 is the atom, index 1 + (l + M) is cavity site l for l = -M..M.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid model parameters: {0}")]
    InvalidParams(String),
    #[error(
        "atom frequency outside the band: |omega0 - omega_c| = {detuning_abs} >= 2J = {bandwidth}; \
         no propagating mode is resonant with the atom"
    )]
    ResonanceOutsideBand { detuning_abs: f64, bandwidth: f64 },
}

/// Physical constants of the emitter-waveguide model plus the lattice
/// half-width `M` used to truncate the infinite chain (sites l = -M..M).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams {
    /// Atom transition frequency omega_0.
    pub omega0: f64,
    /// Cavity resonance frequency omega_c.
    pub omega_c: f64,
    /// Photon hopping rate J between adjacent cavities (sets the time unit 1/J).
    pub hopping: f64,
    /// Atom-cavity coupling g_0 at site l = 0.
    pub g0: f64,
    /// Lattice half-width M; the chain has 2M+1 sites.
    pub half_width: usize,
}

impl ModelParams {
    pub fn new(
        omega0: f64,
        omega_c: f64,
        hopping: f64,
        g0: f64,
        half_width: usize,
    ) -> Result<Self, ModelError> {
        let p = Self { omega0, omega_c, hopping, g0, half_width };
        p.validate()?;
        Ok(p)
    }

    /// Resonant parameters omega0 = omega_c, in units of J = 1.
    pub fn resonant(g0: f64, half_width: usize) -> Result<Self, ModelError> {
        Self::new(1.0, 1.0, 1.0, g0, half_width)
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.hopping > 0.0) || !self.hopping.is_finite() {
            return Err(ModelError::InvalidParams(format!(
                "hopping rate J must be positive and finite, got {}",
                self.hopping
            )));
        }
        if !(self.g0 >= 0.0) || !self.g0.is_finite() {
            return Err(ModelError::InvalidParams(format!(
                "coupling g0 must be non-negative and finite, got {}",
                self.g0
            )));
        }
        if self.half_width < 1 {
            return Err(ModelError::InvalidParams(
                "lattice half-width M must be at least 1".into(),
            ));
        }
        if !self.omega0.is_finite() || !self.omega_c.is_finite() {
            return Err(ModelError::InvalidParams(
                "omega0 and omega_c must be finite".into(),
            ));
        }
        Ok(())
    }

    /// Advisory warnings (not errors); golden-rule comparisons assume weak coupling.
    pub fn advisories(&self) -> Vec<String> {
        let mut notes = Vec::new();
        if self.g0 / self.hopping > 0.5 {
            notes.push(format!(
                "g0/J = {:.3} exceeds 0.5: weak-coupling (golden-rule) comparisons are unreliable",
                self.g0 / self.hopping
            ));
        }
        notes
    }

    /// Cavity-atom detuning omega_c - omega0.
    pub fn detuning(&self) -> f64 {
        self.omega_c - self.omega0
    }

    /// Hilbert-space dimension 2M+2 of the single-excitation sector.
    pub fn dimension(&self) -> usize {
        2 * self.half_width + 2
    }
}

/// Sparse (CSR) representation of the rotating-frame Hamiltonian.
///
/// Entries are stored as complex numbers so that symmetry checks and
/// deliberately perturbed test Hamiltonians share one type, but
/// `build_hamiltonian` always produces a real symmetric matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Hamiltonian {
    dim: usize,
    half_width: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<Complex64>,
}

impl Hamiltonian {
    /// Basis index of the atom level.
    pub const ATOM: usize = 0;

    /// Build from (row, col, value) triplets; duplicate positions are summed.
    pub fn from_triplets(
        dim: usize,
        half_width: usize,
        triplets: &[(usize, usize, Complex64)],
    ) -> Self {
        let mut sorted: Vec<(usize, usize, Complex64)> = triplets.to_vec();
        sorted.sort_by_key(|&(r, c, _)| (r, c));
        let mut merged: Vec<(usize, usize, Complex64)> = Vec::with_capacity(sorted.len());
        for (r, c, v) in sorted {
            assert!(r < dim && c < dim, "triplet index out of range");
            match merged.last_mut() {
                Some(last) if last.0 == r && last.1 == c => last.2 += v,
                _ => merged.push((r, c, v)),
            }
        }
        let mut row_ptr = vec![0usize; dim + 1];
        for &(r, _, _) in &merged {
            row_ptr[r + 1] += 1;
        }
        for r in 0..dim {
            row_ptr[r + 1] += row_ptr[r];
        }
        let col_idx = merged.iter().map(|&(_, c, _)| c).collect();
        let values = merged.iter().map(|&(_, _, v)| v).collect();
        Self { dim, half_width, row_ptr, col_idx, values }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn half_width(&self) -> usize {
        self.half_width
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    /// Basis index of cavity site l, for l in -M..=M.
    pub fn site_index(&self, l: i64) -> usize {
        let m = self.half_width as i64;
        assert!(l.abs() <= m, "site index {l} outside lattice |l| <= {m}");
        (1 + l + m) as usize
    }

    /// Entry (i, j); zero if not stored.
    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        match self.col_idx[lo..hi].binary_search(&j) {
            Ok(p) => self.values[lo + p],
            Err(_) => Complex64::new(0.0, 0.0),
        }
    }

    /// All stored entries as (row, col, value) triplets.
    pub fn triplets(&self) -> Vec<(usize, usize, Complex64)> {
        let mut out = Vec::with_capacity(self.nnz());
        for r in 0..self.dim {
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                out.push((r, self.col_idx[p], self.values[p]));
            }
        }
        out
    }

    /// y = H x.
    pub fn apply(&self, x: &[Complex64], y: &mut [Complex64]) {
        assert_eq!(x.len(), self.dim);
        assert_eq!(y.len(), self.dim);
        for r in 0..self.dim {
            let mut acc = Complex64::new(0.0, 0.0);
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.values[p] * x[self.col_idx[p]];
            }
            y[r] = acc;
        }
    }

    /// <psi|H|psi> (not normalized by <psi|psi>).
    pub fn expectation(&self, psi: &[Complex64]) -> Complex64 {
        let mut h_psi = vec![Complex64::new(0.0, 0.0); self.dim];
        self.apply(psi, &mut h_psi);
        psi.iter().zip(&h_psi).map(|(a, b)| a.conj() * b).sum()
    }

    /// Gershgorin bounds (lo, hi) on the spectrum, from real diagonal centers
    /// and absolute row sums. Rigorous containment for Hermitian matrices.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for r in 0..self.dim {
            let mut center = 0.0;
            let mut radius = 0.0;
            for p in self.row_ptr[r]..self.row_ptr[r + 1] {
                if self.col_idx[p] == r {
                    center = self.values[p].re;
                } else {
                    radius += self.values[p].norm();
                }
            }
            lo = lo.min(center - radius);
            hi = hi.max(center + radius);
        }
        if !lo.is_finite() || !hi.is_finite() {
            (0.0, 0.0)
        } else {
            (lo, hi)
        }
    }
}

/// Assemble the rotating-frame Hamiltonian in the ordered basis
/// [atom, l = -M, ..., l = M]. Every diagonal entry is stored explicitly,
/// so the structure has 2M+2 diagonal, 4M hopping and 2 coupling entries.
pub fn build_hamiltonian(params: &ModelParams) -> Result<Hamiltonian, ModelError> {
    params.validate()?;
    let m = params.half_width as i64;
    let delta = params.detuning();
    let mut triplets = Vec::with_capacity(6 * params.half_width + 4);
    triplets.push((0usize, 0usize, Complex64::new(0.0, 0.0))); // atom level at 0 in the rotating frame
    let site = |l: i64| (1 + l + m) as usize;
    triplets.push((0, site(0), Complex64::new(params.g0, 0.0)));
    triplets.push((site(0), 0, Complex64::new(params.g0, 0.0)));
    for l in -m..=m {
        triplets.push((site(l), site(l), Complex64::new(delta, 0.0)));
        if l < m {
            triplets.push((site(l), site(l + 1), Complex64::new(-params.hopping, 0.0)));
            triplets.push((site(l + 1), site(l), Complex64::new(-params.hopping, 0.0)));
        }
    }
    Ok(Hamiltonian::from_triplets(params.dimension(), params.half_width, &triplets))
}

/// Rotating-frame dispersion Omega(k) = omega_c - omega0 - 2J cos(k),
/// for Bloch wavenumber k in [-pi, pi).
pub fn dispersion(params: &ModelParams, k: f64) -> f64 {
    params.detuning() - 2.0 * params.hopping * k.cos()
}

/// Flat spectral coupling g(k) = g0 / sqrt(2 pi).
pub fn coupling_spectrum(params: &ModelParams) -> f64 {
    params.g0 / (2.0 * std::f64::consts::PI).sqrt()
}

/// Resonance wavenumber k0 in (0, pi) with Omega(k0) = 0 and the group
/// velocity v_g = 2J sin(k0) there. Errors if the atom frequency lies
/// outside the band.
pub fn resonance_point(params: &ModelParams) -> Result<(f64, f64), ModelError> {
    let d = params.detuning();
    let bandwidth = 2.0 * params.hopping;
    if d.abs() >= bandwidth {
        return Err(ModelError::ResonanceOutsideBand { detuning_abs: d.abs(), bandwidth });
    }
    let k0 = (d / bandwidth).acos();
    let v_g = bandwidth * k0.sin();
    Ok((k0, v_g))
}

/// Fermi-golden-rule decay rate Gamma = 4 pi |g(k0)|^2 / v_g = 2 g0^2 / v_g;
/// reduces to g0^2 / J on resonance.
pub fn fermi_golden_rule_rate(params: &ModelParams) -> Result<f64, ModelError> {
    let (_, v_g) = resonance_point(params)?;
    Ok(2.0 * params.g0 * params.g0 / v_g)
}
