//! Executable time-reversal checks for the single-excitation sector.
//!
//! With K the complex-conjugation operator, a real symmetric Hamiltonian
//! satisfies HK = KH, hence U(-t) = K U(t) K: evolving, conjugating,
//! evolving again and conjugating once more must return the initial
//! amplitudes exactly (up to solver error). That identity is what makes the
//! conjugated-forward-evolution construction of the time-reversed state
//! legitimate, so it is worth testing directly.

use thiserror::Error;

use crate::model::{build_hamiltonian, Hamiltonian, ModelError, ModelParams};
use crate::propagate::{check_truncation, propagate_for, PropagateError, TruncationReport};
use crate::states::{canonical_state, conjugate_state};

#[derive(Debug, Error)]
pub enum SymmetryError {
    #[error("{0}")]
    GuardViolation(TruncationReport),
    #[error("roundtrip residual {residual:.3e} exceeds budget {budget:.3e}")]
    ResidualExceedsTolerance { residual: f64, budget: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Propagate(#[from] PropagateError),
}

/// True iff every stored entry of `h` is real within `tol` and `h` equals
/// its transpose within `tol`. For K = complex conjugation this is exactly
/// the condition HK = KH.
pub fn is_time_reversal_symmetric(h: &Hamiltonian, tol: f64) -> bool {
    for (r, c, v) in h.triplets() {
        if v.im.abs() > tol {
            return false;
        }
        if (v - h.entry(c, r)).norm() > tol {
            return false;
        }
    }
    true
}

/// Amplitude-vector distance after evolve(t_f), conjugate, evolve(t_f),
/// conjugate, starting from the canonical state. Exactly zero in arithmetic
/// for a real symmetric Hamiltonian; what survives is solver error. No
/// guard is applied here so deliberately broken Hamiltonians can be probed.
pub fn reversal_roundtrip_residual(
    h: &Hamiltonian,
    params: &ModelParams,
    t_f: f64,
) -> Result<f64, PropagateError> {
    let start = canonical_state(params);
    // generous norm budget: broken test Hamiltonians stay unitary
    let fwd = propagate_for(&start, h, t_f, 1e-6)?;
    let back = propagate_for(&conjugate_state(&fwd), h, t_f, 1e-6)?;
    let roundtrip = conjugate_state(&back);
    let a = roundtrip.to_amplitude_vec();
    let b = start.to_amplitude_vec();
    Ok(a.iter().zip(&b).map(|(x, y)| (x - y).norm_sqr()).sum::<f64>().sqrt())
}

/// Run the roundtrip on the Hamiltonian built from `params`, enforcing the
/// light-cone guard for horizon 2 t_f, and require residual <= 10 tol.
pub fn reversal_roundtrip_check(
    params: &ModelParams,
    t_f: f64,
    tol: f64,
) -> Result<f64, SymmetryError> {
    let report = check_truncation(params, 2.0 * t_f);
    if !report.pass {
        return Err(SymmetryError::GuardViolation(report));
    }
    let h = build_hamiltonian(params)?;
    let residual = reversal_roundtrip_residual(&h, params, t_f)?;
    let budget = 10.0 * tol;
    if residual > budget {
        return Err(SymmetryError::ResidualExceedsTolerance { residual, budget });
    }
    Ok(residual)
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_complex::Complex64;

    fn resonant(g0: f64, m: usize) -> ModelParams {
        ModelParams { omega0: 1.0, omega_c: 1.0, hopping: 1.0, g0, half_width: m }
    }

    /// Hermitian but complex: coupling g0 e^{i phi}, which breaks HK = KH.
    fn broken_symmetry_hamiltonian(params: &ModelParams, phi: f64) -> Hamiltonian {
        let h = build_hamiltonian(params).unwrap();
        let site0 = h.site_index(0);
        let mut triplets: Vec<(usize, usize, Complex64)> = h
            .triplets()
            .into_iter()
            .filter(|&(r, c, _)| !((r == 0 && c == site0) || (r == site0 && c == 0)))
            .collect();
        let g = Complex64::from_polar(params.g0, phi);
        triplets.push((0, site0, g));
        triplets.push((site0, 0, g.conj()));
        Hamiltonian::from_triplets(h.dim(), h.half_width(), &triplets)
    }

    #[test]
    fn built_hamiltonian_is_symmetric() {
        let h = build_hamiltonian(&resonant(0.2, 10)).unwrap();
        assert!(is_time_reversal_symmetric(&h, 1e-9));
    }

    #[test]
    fn imaginary_perturbation_detected() {
        let p = resonant(0.2, 4);
        let h = build_hamiltonian(&p).unwrap();
        let mut triplets = h.triplets();
        triplets.push((2, 2, Complex64::new(0.0, 1e-3)));
        let perturbed = Hamiltonian::from_triplets(h.dim(), h.half_width(), &triplets);
        assert!(!is_time_reversal_symmetric(&perturbed, 1e-9));
        assert!(is_time_reversal_symmetric(&perturbed, 1e-2));
    }

    #[test]
    fn asymmetric_perturbation_detected() {
        let p = resonant(0.2, 4);
        let h = build_hamiltonian(&p).unwrap();
        let mut triplets = h.triplets();
        triplets.push((1, 3, Complex64::new(1e-3, 0.0)));
        let perturbed = Hamiltonian::from_triplets(h.dim(), h.half_width(), &triplets);
        assert!(!is_time_reversal_symmetric(&perturbed, 1e-9));
    }

    #[test]
    fn roundtrip_residual_is_solver_noise() {
        let p = resonant(0.2, 90);
        let r = reversal_roundtrip_check(&p, 20.0, 1e-10).unwrap();
        assert!(r < 1e-8, "residual {r}");
        let r0 = reversal_roundtrip_check(&p, 0.0, 1e-10).unwrap();
        assert_eq!(r0, 0.0);
    }

    #[test]
    fn roundtrip_guard_violation() {
        let p = resonant(0.2, 30);
        assert!(matches!(
            reversal_roundtrip_check(&p, 20.0, 1e-10),
            Err(SymmetryError::GuardViolation(_))
        ));
    }

    #[test]
    fn broken_symmetry_gives_large_residual() {
        let p = resonant(0.4, 40);
        let h = broken_symmetry_hamiltonian(&p, 1.2);
        assert!(!is_time_reversal_symmetric(&h, 1e-9));
        let r = reversal_roundtrip_residual(&h, &p, 8.0).unwrap();
        assert!(r > 0.05, "broken-symmetry residual should be large, got {r}");
    }

    #[test]
    fn forward_backward_distance_symmetry_for_real_states() {
        // |c_a(-t)| = |c_a(t)| for real initial amplitudes: U(-t) = K U(t) K
        let p = resonant(0.25, 60);
        let h = build_hamiltonian(&p).unwrap();
        let s = canonical_state(&p);
        for &t in &[1.0, 5.0, 12.5] {
            let fwd = propagate_for(&s, &h, t, 1e-9).unwrap();
            // backward evolution of a real state = conjugate of forward
            let back = conjugate_state(&propagate_for(&conjugate_state(&s), &h, t, 1e-9).unwrap());
            let df = fwd.atom_amp().norm();
            let db = back.atom_amp().norm();
            assert!((df - db).abs() < 1e-12, "t = {t}: |c_a| fwd {df} vs back {db}");
        }
    }
}
