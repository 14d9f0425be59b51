//! Initial-condition factories for the single-excitation sector and the
//! Wannier <-> Bloch transforms connecting lattice amplitudes to k-space.
//!
//! Three families matter physically: the canonical product state (atom
//! excited, field in vacuum), the time-reversed entangled state obtained by
//! conjugating the canonically evolved amplitudes at a fixed time t_f, and
//! the quasi-dark entangled state with staggered field amplitudes on even
//! sites that transiently stalls spontaneous emission.

use num_complex::Complex64;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::model::{build_hamiltonian, ModelError, ModelParams};
use crate::propagate::{check_truncation, propagate_for, PropagateError};
use crate::symmetry::is_time_reversal_symmetric;

/// Tolerance on |norm^2 - 1| accepted at state construction.
pub const NORM_TOL: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum StateError {
    #[error("state is not normalized: |norm^2 - 1| = {0:.3e} exceeds 1e-12")]
    NotNormalized(f64),
    #[error("all amplitudes are zero")]
    ZeroVector,
    #[error("field length {0} is not of the form 2M+1")]
    BadFieldLength(usize),
    #[error("amplitudes must be finite")]
    NonFiniteAmplitude,
    #[error("dark state needs 2L <= M - 8 (got L = {l}, M = {m})")]
    DarkStateTooWide { l: usize, m: usize },
    #[error("dark state requires g0 > 0")]
    ZeroCoupling,
    #[error("Bloch grid undersampled: N_k = {n_k} < 2(2M+1) = {min}")]
    UndersampledGrid { n_k: usize, min: usize },
    #[error("hamiltonian is not time-reversal symmetric (complex or asymmetric entries)")]
    NotTimeReversalSymmetric,
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
}

/// One state of the N = 1 excitation sector: the atom amplitude c_a plus
/// 2M+1 field amplitudes q_l in the Wannier (site) basis, l = -M..M.
/// Normalized to 1 within [`NORM_TOL`] by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct ExcitationState {
    atom_amp: Complex64,
    field_amps: Vec<Complex64>,
}

impl ExcitationState {
    pub fn new(atom_amp: Complex64, field_amps: Vec<Complex64>) -> Result<Self, StateError> {
        if field_amps.len() % 2 == 0 {
            return Err(StateError::BadFieldLength(field_amps.len()));
        }
        if !atom_amp.is_finite() || field_amps.iter().any(|q| !q.is_finite()) {
            return Err(StateError::NonFiniteAmplitude);
        }
        let n2: f64 = atom_amp.norm_sqr() + field_amps.iter().map(|q| q.norm_sqr()).sum::<f64>();
        let defect = (n2 - 1.0).abs();
        if defect > NORM_TOL {
            return Err(StateError::NotNormalized(defect));
        }
        Ok(Self { atom_amp, field_amps })
    }

    pub fn atom_amp(&self) -> Complex64 {
        self.atom_amp
    }

    pub fn field_amps(&self) -> &[Complex64] {
        &self.field_amps
    }

    /// Lattice half-width M.
    pub fn half_width(&self) -> usize {
        (self.field_amps.len() - 1) / 2
    }

    /// Field amplitude q_l at site l in -M..=M.
    pub fn field_amp(&self, l: i64) -> Complex64 {
        let m = self.half_width() as i64;
        assert!(l.abs() <= m, "site {l} outside lattice |l| <= {m}");
        self.field_amps[(l + m) as usize]
    }

    pub fn norm_sqr(&self) -> f64 {
        self.atom_amp.norm_sqr() + self.field_amps.iter().map(|q| q.norm_sqr()).sum::<f64>()
    }

    /// Flatten to the ordered basis [atom, l = -M..M] used by the Hamiltonian.
    pub fn to_amplitude_vec(&self) -> Vec<Complex64> {
        let mut v = Vec::with_capacity(self.field_amps.len() + 1);
        v.push(self.atom_amp);
        v.extend_from_slice(&self.field_amps);
        v
    }

    /// Inverse of [`Self::to_amplitude_vec`]; checks the norm invariant.
    pub fn from_amplitude_vec(v: &[Complex64]) -> Result<Self, StateError> {
        if v.is_empty() {
            return Err(StateError::BadFieldLength(0));
        }
        Self::new(v[0], v[1..].to_vec())
    }

    /// For the propagator, which enforces the norm bound itself.
    pub(crate) fn from_amplitude_vec_unchecked(v: &[Complex64]) -> Self {
        Self { atom_amp: v[0], field_amps: v[1..].to_vec() }
    }
}

// JSON schema: {"atom_re", "atom_im", "field_re": [...], "field_im": [...], "M"}
#[derive(Serialize, Deserialize)]
struct StateJson {
    atom_re: f64,
    atom_im: f64,
    field_re: Vec<f64>,
    field_im: Vec<f64>,
    #[serde(rename = "M")]
    m: usize,
}

impl Serialize for ExcitationState {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        StateJson {
            atom_re: self.atom_amp.re,
            atom_im: self.atom_amp.im,
            field_re: self.field_amps.iter().map(|q| q.re).collect(),
            field_im: self.field_amps.iter().map(|q| q.im).collect(),
            m: self.half_width(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for ExcitationState {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let raw = StateJson::deserialize(deserializer)?;
        let n = 2 * raw.m + 1;
        if raw.field_re.len() != n || raw.field_im.len() != n {
            return Err(D::Error::custom(format!(
                "field arrays must have length 2M+1 = {n}, got {}/{}",
                raw.field_re.len(),
                raw.field_im.len()
            )));
        }
        let field = raw
            .field_re
            .iter()
            .zip(&raw.field_im)
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect();
        ExcitationState::new(Complex64::new(raw.atom_re, raw.atom_im), field)
            .map_err(D::Error::custom)
    }
}

/// Field amplitudes on a uniform Bloch grid k_i = -pi + 2 pi i / N_k.
#[derive(Debug, Clone)]
pub struct BlochField {
    pub k_grid: Vec<f64>,
    pub amps: Vec<Complex64>,
}

/// Canonical product state: atom excited, field in vacuum.
pub fn canonical_state(params: &ModelParams) -> ExcitationState {
    ExcitationState {
        atom_amp: Complex64::new(1.0, 0.0),
        field_amps: vec![Complex64::new(0.0, 0.0); 2 * params.half_width + 1],
    }
}

/// Anti-unitary time reversal: complex-conjugate every amplitude.
pub fn conjugate_state(state: &ExcitationState) -> ExcitationState {
    ExcitationState {
        atom_amp: state.atom_amp.conj(),
        field_amps: state.field_amps.iter().map(|q| q.conj()).collect(),
    }
}

/// The entangled state whose forward evolution retraces the canonical decay:
/// evolve the canonical state for t_f, then conjugate all amplitudes.
/// Evolving the result for t_f re-excites the atom exactly.
pub fn time_reversed_state(
    params: &ModelParams,
    t_f: f64,
    solver_tol: f64,
) -> Result<ExcitationState, StateError> {
    let h = build_hamiltonian(params)?;
    time_reversed_from_hamiltonian(&h, params, t_f, solver_tol)
}

/// Same construction on a caller-supplied Hamiltonian; errors if the matrix
/// is not real symmetric, since conjugation then no longer reverses time.
pub fn time_reversed_from_hamiltonian(
    h: &crate::model::Hamiltonian,
    params: &ModelParams,
    t_f: f64,
    solver_tol: f64,
) -> Result<ExcitationState, StateError> {
    if !is_time_reversal_symmetric(h, 1e-12) {
        return Err(StateError::NotTimeReversalSymmetric);
    }
    let report = check_truncation(params, t_f);
    if !report.pass {
        return Err(PropagateError::GuardViolation(report).into());
    }
    if t_f == 0.0 {
        return Ok(canonical_state(params));
    }
    let psi0 = canonical_state(params);
    let psi_tf = propagate_for(&psi0, h, t_f, solver_tol)?;
    Ok(conjugate_state(&psi_tf))
}

/// Quasi-dark entangled state: real atom amplitude
/// c_a = [1 + (2L+1) J^2/g0^2]^(-1/2) and staggered field amplitudes
/// Q_{2m} = (-1)^m (-c_a J/g0) on the 2L+1 even sites |l| <= 2L.
/// Normalization is exact by construction.
pub fn dark_state(params: &ModelParams, l: usize) -> Result<ExcitationState, StateError> {
    params.validate()?;
    if params.g0 <= 0.0 {
        return Err(StateError::ZeroCoupling);
    }
    let m = params.half_width;
    if 2 * l + 8 > m {
        return Err(StateError::DarkStateTooWide { l, m });
    }
    let ratio = params.hopping / params.g0;
    let n_amps = (2 * l + 1) as f64;
    let c_a = 1.0 / (1.0 + n_amps * ratio * ratio).sqrt();
    let q0 = -c_a * ratio;
    let mut field = vec![Complex64::new(0.0, 0.0); 2 * m + 1];
    for i in -(l as i64)..=(l as i64) {
        let sign = if i.rem_euclid(2) == 0 { 1.0 } else { -1.0 };
        field[(2 * i + m as i64) as usize] = Complex64::new(sign * q0, 0.0);
    }
    Ok(ExcitationState { atom_amp: Complex64::new(c_a, 0.0), field_amps: field })
}

/// Normalize arbitrary amplitudes into a valid state. Returns the state and
/// the scale factor that was applied to the input.
pub fn custom_state(
    atom_amp: Complex64,
    field_amps: Vec<Complex64>,
) -> Result<(ExcitationState, f64), StateError> {
    if field_amps.len() % 2 == 0 {
        return Err(StateError::BadFieldLength(field_amps.len()));
    }
    if !atom_amp.is_finite() || field_amps.iter().any(|q| !q.is_finite()) {
        return Err(StateError::NonFiniteAmplitude);
    }
    let n2 = atom_amp.norm_sqr() + field_amps.iter().map(|q| q.norm_sqr()).sum::<f64>();
    if n2 == 0.0 {
        return Err(StateError::ZeroVector);
    }
    let scale = 1.0 / n2.sqrt();
    let state = ExcitationState {
        atom_amp: atom_amp * scale,
        field_amps: field_amps.into_iter().map(|q| q * scale).collect(),
    };
    Ok((state, scale))
}

/// phi(k_i) = (1/sqrt(2 pi)) sum_l q_l e^{i k_i l} on a uniform grid with
/// N_k >= 2(2M+1) points (endpoint -pi included, +pi excluded).
pub fn wannier_to_bloch(state: &ExcitationState, n_k: usize) -> Result<BlochField, StateError> {
    let m = state.half_width();
    let min = 2 * (2 * m + 1);
    if n_k < min {
        return Err(StateError::UndersampledGrid { n_k, min });
    }
    let norm = 1.0 / (2.0 * std::f64::consts::PI).sqrt();
    let mut k_grid = Vec::with_capacity(n_k);
    let mut amps = Vec::with_capacity(n_k);
    for i in 0..n_k {
        let k = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n_k as f64;
        let mut acc = Complex64::new(0.0, 0.0);
        for (idx, &q) in state.field_amps.iter().enumerate() {
            let l = idx as f64 - m as f64;
            acc += q * Complex64::from_polar(1.0, k * l);
        }
        k_grid.push(k);
        amps.push(acc * norm);
    }
    Ok(BlochField { k_grid, amps })
}

/// Inverse transform q_l = (1/sqrt(2 pi)) int dk phi(k) e^{-ikl}, evaluated
/// with the periodic trapezoid weight 2 pi / N_k. Returns the 2M+1 field
/// amplitudes.
pub fn bloch_to_wannier(field: &BlochField, half_width: usize) -> Vec<Complex64> {
    let n_k = field.amps.len();
    let weight = (2.0 * std::f64::consts::PI).sqrt() / n_k as f64;
    let m = half_width as i64;
    (-m..=m)
        .map(|l| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, &phi) in field.k_grid.iter().zip(&field.amps) {
                acc += phi * Complex64::from_polar(1.0, -k * l as f64);
            }
            acc * weight
        })
        .collect()
}
