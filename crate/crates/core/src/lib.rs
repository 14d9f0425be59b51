//! Single-excitation waveguide QED: spontaneous emission of a two-level
//! atom into a coupled-cavity array, and the anomalous (Mpemba-style)
//! relaxation that initial atom-photon entanglement can produce.
//!
//! The crate provides two independent formulations of the same dynamics —
//! sparse lattice propagation ([`propagate`]) and the memory-kernel Volterra
//! equation ([`kernel`]) — plus factories for the physically interesting
//! initial conditions ([`states`]), trace-distance analysis
//! ([`observables`]) and executable time-reversal checks ([`symmetry`]).
//! Keeping both formulations honest against each other is the main
//! validation strategy; see the `acceptance` integration test.
//!
//! Conventions: everything lives in the frame rotating at the atom
//! frequency; the basis ordering is [atom, l = -M..M]; J = 1 sets the time
//! unit in the canonical configuration.

pub mod kernel;
pub mod model;
pub mod observables;
pub mod propagate;
pub mod special;
pub mod states;
pub mod symmetry;

pub use kernel::{
    forcing_term, markov_decay, markov_rate_and_shift, memory_kernel, solve_volterra,
    ForcingData, KernelData, KernelError, MarkovData, VolterraSolution,
};
pub use model::{
    build_hamiltonian, coupling_spectrum, dispersion, fermi_golden_rule_rate, resonance_point,
    Hamiltonian, ModelError, ModelParams,
};
pub use observables::{
    detect_mpemba_crossing, estimate_delay, fit_decay_rate, initial_slope, max_distance_excess,
    reduced_density, trace_distance, DecayFit, MpembaReport, MpembaVerdict, ObservablesError,
};
pub use propagate::{
    check_truncation, evolve, evolve_batch, propagate_for, EvolveOptions, PropagateError,
    Trajectory, TruncationReport,
};
pub use states::{
    bloch_to_wannier, canonical_state, conjugate_state, custom_state, dark_state,
    time_reversed_state, wannier_to_bloch, BlochField, ExcitationState, StateError,
};
pub use symmetry::{
    is_time_reversal_symmetric, reversal_roundtrip_check, reversal_roundtrip_residual,
    SymmetryError,
};
