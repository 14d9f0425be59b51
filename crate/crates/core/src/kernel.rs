//! Memory-kernel (Wigner-Weisskopf) formulation of the atom dynamics: an
//! independent route to c_a(t) used to cross-validate lattice propagation.
//!
//! The atom amplitude obeys
//!
//!   dc_a/dt = F(t) - int_0^t G(t - t') c_a(t') dt'
//!
//! with memory kernel G(tau) = int dk |g(k)|^2 exp(-i Omega(k) tau) and
//! forcing F(t) = -i int dk g(k) phi_0(k) exp(-i Omega(k) t). Both are
//! evaluated by the periodic trapezoid rule over the Brillouin zone, which
//! is spectrally accurate here; convergence is certified by grid doubling.
//! The Volterra equation is integrated with a product trapezoidal rule and
//! one fixed-point correction of the t' = t endpoint per step (second
//! order, O(N^2) in the grid length).

use num_complex::Complex64;
use serde::Serialize;
use thiserror::Error;

use crate::model::{resonance_point, ModelError, ModelParams};
use crate::states::{wannier_to_bloch, ExcitationState, StateError};

/// Quadrature grids are doubled until results change by less than this.
pub const QUADRATURE_TOL: f64 = 1e-10;
/// Hard cap on the Brillouin-zone grid during doubling.
pub const MAX_NK: usize = 1 << 17;

#[derive(Debug, Error)]
pub enum KernelError {
    #[error(
        "Brillouin-zone quadrature did not converge below {tol:.1e} at N_k = {n_k_max} \
         (last doubling changed results by {last_delta:.3e})"
    )]
    QuadratureNotConverged { n_k_max: usize, last_delta: f64, tol: f64 },
    #[error("grid mismatch: {0}")]
    GridMismatch(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    State(#[from] StateError),
}

/// Sampled memory kernel G(tau) on the uniform grid tau_j = j * step.
#[derive(Debug, Clone)]
pub struct KernelData {
    pub step: f64,
    pub values: Vec<Complex64>,
    /// First tau with |G| below 1% of |G(0)|, if reached within the grid.
    pub memory_time: Option<f64>,
    /// Brillouin-zone points used after convergence.
    pub n_k: usize,
}

/// Sampled forcing term F(t) on the uniform grid t_j = j * step.
#[derive(Debug, Clone)]
pub struct ForcingData {
    pub step: f64,
    pub values: Vec<Complex64>,
    pub n_k: usize,
}

/// Markov-limit constants: decay rate, Lamb shift, resonance wavenumber and
/// group velocity.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct MarkovData {
    pub gamma: f64,
    pub delta: f64,
    pub k0: f64,
    pub v_g: f64,
}

/// Volterra solution c_a(t_j) with a Richardson error estimate from an
/// internal step-doubled solve.
#[derive(Debug, Clone)]
pub struct VolterraSolution {
    pub step: f64,
    pub amplitudes: Vec<Complex64>,
    pub error_estimate: f64,
}

impl KernelData {
    /// CSV with columns tau, re, im at full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau,re,im\n");
        for (j, v) in self.values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_full(j as f64 * self.step),
                fmt_full(v.re),
                fmt_full(v.im)
            ));
        }
        out
    }
}

impl ForcingData {
    /// CSV with columns t, re, im at full round-trip precision.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,re,im\n");
        for (j, v) in self.values.iter().enumerate() {
            out.push_str(&format!(
                "{},{},{}\n",
                fmt_full(j as f64 * self.step),
                fmt_full(v.re),
                fmt_full(v.im)
            ));
        }
        out
    }
}

pub(crate) fn fmt_full(x: f64) -> String {
    format!("{:.16e}", x)
}

fn uniform_grid_len(t_max: f64, step: f64) -> usize {
    (t_max / step + 1e-9).floor() as usize + 1
}

/// G(tau_j) = (g0^2 / N_k) sum_i exp(-i Omega(k_i) tau_j) for one grid size.
fn kernel_on_grid(params: &ModelParams, taus: &[f64], n_k: usize) -> Vec<Complex64> {
    let g2 = params.g0 * params.g0;
    let omegas: Vec<f64> = (0..n_k)
        .map(|i| {
            let k = -std::f64::consts::PI + 2.0 * std::f64::consts::PI * i as f64 / n_k as f64;
            crate::model::dispersion(params, k)
        })
        .collect();
    taus.iter()
        .map(|&tau| {
            let mut acc = Complex64::new(0.0, 0.0);
            for &om in &omegas {
                acc += Complex64::from_polar(1.0, -om * tau);
            }
            acc * (g2 / n_k as f64)
        })
        .collect()
}

/// Memory kernel on tau in [0, tau_max] with the given step. `n_k` seeds the
/// Brillouin-zone grid, which is doubled until converged.
pub fn memory_kernel(
    params: &ModelParams,
    tau_max: f64,
    step: f64,
    n_k: usize,
) -> Result<KernelData, KernelError> {
    params.validate()?;
    let taus: Vec<f64> = (0..uniform_grid_len(tau_max, step))
        .map(|j| j as f64 * step)
        .collect();
    let mut n = n_k.next_power_of_two().max(64);
    let mut current = kernel_on_grid(params, &taus, n);
    loop {
        let doubled = kernel_on_grid(params, &taus, 2 * n);
        let delta = current
            .iter()
            .zip(&doubled)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        if delta < QUADRATURE_TOL {
            let g0_abs = doubled[0].norm();
            let memory_time = taus
                .iter()
                .zip(&doubled)
                .find(|(_, v)| v.norm() < 0.01 * g0_abs)
                .map(|(&t, _)| t);
            return Ok(KernelData { step, values: doubled, memory_time, n_k: 2 * n });
        }
        n *= 2;
        if 2 * n > MAX_NK {
            return Err(KernelError::QuadratureNotConverged {
                n_k_max: MAX_NK,
                last_delta: delta,
                tol: QUADRATURE_TOL,
            });
        }
        current = kernel_on_grid(params, &taus, n);
    }
}

fn forcing_on_grid(
    params: &ModelParams,
    initial: &ExcitationState,
    ts: &[f64],
    n_k: usize,
) -> Result<Vec<Complex64>, KernelError> {
    let bloch = wannier_to_bloch(initial, n_k)?;
    let omegas: Vec<f64> = bloch
        .k_grid
        .iter()
        .map(|&k| crate::model::dispersion(params, k))
        .collect();
    // -i g(k) with flat g(k) = g0/sqrt(2 pi), trapezoid weight 2 pi / N_k
    let prefactor = Complex64::new(0.0, -1.0) * params.g0
        * (2.0 * std::f64::consts::PI).sqrt()
        / n_k as f64;
    Ok(ts
        .iter()
        .map(|&t| {
            let mut acc = Complex64::new(0.0, 0.0);
            for (phi, &om) in bloch.amps.iter().zip(&omegas) {
                acc += phi * Complex64::from_polar(1.0, -om * t);
            }
            acc * prefactor
        })
        .collect())
}

/// Forcing term F(t) on t in [0, t_max] for the given initial state. The
/// Brillouin-zone grid starts at max(n_k, 2(2M+1)) and doubles to
/// convergence. F(0) = -i g0 q_0(0).
pub fn forcing_term(
    params: &ModelParams,
    initial: &ExcitationState,
    t_max: f64,
    step: f64,
    n_k: usize,
) -> Result<ForcingData, KernelError> {
    params.validate()?;
    let ts: Vec<f64> = (0..uniform_grid_len(t_max, step))
        .map(|j| j as f64 * step)
        .collect();
    let min_nk = 2 * (2 * initial.half_width() + 1);
    let mut n = n_k.max(min_nk).next_power_of_two().max(64);
    let mut current = forcing_on_grid(params, initial, &ts, n)?;
    loop {
        let doubled = forcing_on_grid(params, initial, &ts, 2 * n)?;
        let delta = current
            .iter()
            .zip(&doubled)
            .map(|(a, b)| (a - b).norm())
            .fold(0.0_f64, f64::max);
        if delta < QUADRATURE_TOL {
            return Ok(ForcingData { step, values: doubled, n_k: 2 * n });
        }
        n *= 2;
        if 2 * n > MAX_NK {
            return Err(KernelError::QuadratureNotConverged {
                n_k_max: MAX_NK,
                last_delta: delta,
                tol: QUADRATURE_TOL,
            });
        }
        current = forcing_on_grid(params, initial, &ts, n)?;
    }
}

/// Uniformly sampled complex data with linear interpolation off-grid.
struct Sampled<'a> {
    step: f64,
    values: &'a [Complex64],
}

impl Sampled<'_> {
    fn at(&self, t: f64) -> Complex64 {
        let x = t / self.step;
        let i = x.round();
        if (x - i).abs() < 1e-9 {
            return self.values[i as usize];
        }
        let lo = x.floor() as usize;
        let w = x - lo as f64;
        self.values[lo] * (1.0 - w) + self.values[lo + 1] * w
    }

    fn covers(&self, t: f64) -> bool {
        t <= (self.values.len() - 1) as f64 * self.step + 1e-9
    }
}

/// Integrate dc/dt = F(t) - int_0^t G(t-s) c(s) ds on t_j = j*step up to
/// t_max, with initial value `c_a0`.
///
/// Product trapezoidal rule in the memory integral; the implicit endpoint is
/// handled by an Euler predictor plus one trapezoidal correction (global
/// order 2). Cost is O(N^2) in the number of time steps. Kernel and forcing
/// must be sampled at least as finely as `step` and cover [0, t_max]; they
/// are interpolated linearly where grids differ. The reported
/// `error_estimate` is max_t |c_2h - c_h| / 3 from an internal double-step
/// solve, so halving the step again should move results by roughly a
/// quarter of it.
pub fn solve_volterra(
    c_a0: Complex64,
    kernel: &KernelData,
    forcing: &ForcingData,
    t_max: f64,
    step: f64,
) -> Result<VolterraSolution, KernelError> {
    if !(step > 0.0) || !(t_max > 0.0) {
        return Err(KernelError::GridMismatch("step and t_max must be positive".into()));
    }
    if kernel.step > step + 1e-12 {
        return Err(KernelError::GridMismatch(format!(
            "kernel step {} is coarser than solver step {}",
            kernel.step, step
        )));
    }
    if forcing.step > step + 1e-12 {
        return Err(KernelError::GridMismatch(format!(
            "forcing step {} is coarser than solver step {}",
            forcing.step, step
        )));
    }
    let g = Sampled { step: kernel.step, values: &kernel.values };
    let f = Sampled { step: forcing.step, values: &forcing.values };
    if !g.covers(t_max) {
        return Err(KernelError::GridMismatch(format!(
            "kernel grid ends before t_max = {t_max}"
        )));
    }
    if !f.covers(t_max) {
        return Err(KernelError::GridMismatch(format!(
            "forcing grid ends before t_max = {t_max}"
        )));
    }

    let n = (t_max / step + 1e-9).floor() as usize;
    let fine = volterra_march(c_a0, &g, &f, step, n);
    // step-doubled solve for the error estimate (order-2 Richardson)
    let error_estimate = if n >= 4 {
        let n2 = n / 2;
        let coarse = volterra_march(c_a0, &g, &f, 2.0 * step, n2);
        coarse
            .iter()
            .enumerate()
            .map(|(j, c)| (c - fine[2 * j]).norm())
            .fold(0.0_f64, f64::max)
            / 3.0
    } else {
        0.0
    };
    Ok(VolterraSolution { step, amplitudes: fine, error_estimate })
}

fn volterra_march(
    c_a0: Complex64,
    g: &Sampled<'_>,
    f: &Sampled<'_>,
    h: f64,
    n: usize,
) -> Vec<Complex64> {
    // kernel values at lag j*h, forcing at j*h
    let gk: Vec<Complex64> = (0..=n).map(|j| g.at(j as f64 * h)).collect();
    let fk: Vec<Complex64> = (0..=n).map(|j| f.at(j as f64 * h)).collect();
    let mut c = Vec::with_capacity(n + 1);
    c.push(c_a0);
    for k in 0..n {
        // I_k = h [ G_k c_0 / 2 + sum_{1..k-1} G_{k-j} c_j + G_0 c_k / 2 ]
        let mut mem_k = Complex64::new(0.0, 0.0);
        if k >= 1 {
            let mut s = gk[k] * c[0] * 0.5 + gk[0] * c[k] * 0.5;
            for j in 1..k {
                s += gk[k - j] * c[j];
            }
            mem_k = s * h;
        }
        let f_k = fk[k] - mem_k;
        // predictor, then one trapezoidal correction of the endpoint
        let c_star = c[k] + f_k * h;
        let mut s = gk[k + 1] * c[0] * 0.5 + gk[0] * c_star * 0.5;
        for j in 1..=k {
            s += gk[k + 1 - j] * c[j];
        }
        let f_k1 = fk[k + 1] - s * h;
        c.push(c[k] + (f_k + f_k1) * (0.5 * h));
    }
    c
}

/// Decay rate by analytic reduction of the golden-rule delta function to the
/// two roots +-k0, and Lamb shift by principal-value quadrature with
/// symmetric excision windows (width `PV_EPSILON`), Richardson-extrapolated
/// in the window size.
pub fn markov_rate_and_shift(params: &ModelParams) -> Result<MarkovData, KernelError> {
    params.validate()?;
    let (k0, v_g) = resonance_point(params)?;
    let gamma = 2.0 * params.g0 * params.g0 / v_g;

    // Delta = (g0^2 / 2 pi) PV int dk 1 / (omega0 - omega(k)); the integrand
    // has simple poles at +-k0.
    let d = params.detuning();
    let two_j = 2.0 * params.hopping;
    let integrand = |k: f64| 1.0 / (-d + two_j * k.cos());
    let i_eps = pv_excised_integral(&integrand, &[k0, -k0], PV_EPSILON);
    let i_eps2 = pv_excised_integral(&integrand, &[k0, -k0], PV_EPSILON / 2.0);
    let pv = 2.0 * i_eps2 - i_eps;
    let delta = params.g0 * params.g0 / (2.0 * std::f64::consts::PI) * pv;

    Ok(MarkovData { gamma, delta, k0, v_g })
}

/// Default excision half-width for the principal-value integral.
pub const PV_EPSILON: f64 = 1e-3;

/// Integral of `f` over [-pi, pi] minus symmetric windows of half-width
/// `eps` around each pole, with windows wrapped on the periodic domain.
/// Each remaining segment is panelized geometrically away from its ends, so
/// the 1/(distance-to-pole) boundary layers cost a logarithmic number of
/// well-conditioned panels instead of a deep uniform bisection.
fn pv_excised_integral(f: &dyn Fn(f64) -> f64, poles: &[f64], eps: f64) -> f64 {
    use std::f64::consts::PI;
    // collect excluded intervals, wrapping into [-pi, pi]
    let mut excluded: Vec<(f64, f64)> = Vec::new();
    for &p in poles {
        let (lo, hi) = (p - eps, p + eps);
        if lo < -PI {
            excluded.push((lo + 2.0 * PI, PI));
            excluded.push((-PI, hi));
        } else if hi > PI {
            excluded.push((lo, PI));
            excluded.push((-PI, hi - 2.0 * PI));
        } else {
            excluded.push((lo, hi));
        }
    }
    excluded.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for iv in excluded {
        match merged.last_mut() {
            Some(last) if iv.0 <= last.1 => last.1 = last.1.max(iv.1),
            _ => merged.push(iv),
        }
    }
    let mut segments: Vec<(f64, f64)> = Vec::new();
    let mut cursor = -PI;
    for (lo, hi) in &merged {
        if *lo > cursor {
            segments.push((cursor, *lo));
        }
        cursor = cursor.max(*hi);
    }
    if cursor < PI {
        segments.push((cursor, PI));
    }

    let mut total = 0.0;
    for (lo, hi) in segments {
        let mid = 0.5 * (lo + hi);
        let mut cuts = vec![lo];
        let mut step = eps;
        while lo + step < mid {
            cuts.push(lo + step);
            step *= 2.0;
        }
        let mut upper = vec![hi];
        step = eps;
        while hi - step > mid {
            upper.push(hi - step);
            step *= 2.0;
        }
        cuts.push(mid);
        cuts.extend(upper.into_iter().rev());
        for pair in cuts.windows(2) {
            total += adaptive_simpson(f, pair[0], pair[1], 1e-12, 40);
        }
    }
    total
}

/// Recursive adaptive Simpson quadrature. The termination test carries a
/// value-scaled roundoff floor: near steep boundary layers the Richardson
/// correction bottoms out at machine noise, which scales with the interval
/// exactly like the halved tolerance and would otherwise force the
/// recursion to full depth.
pub(crate) fn adaptive_simpson(
    f: &dyn Fn(f64) -> f64,
    a: f64,
    b: f64,
    tol: f64,
    max_depth: u32,
) -> f64 {
    fn simpson(fa: f64, fm: f64, fb: f64, h: f64) -> f64 {
        h / 6.0 * (fa + 4.0 * fm + fb)
    }
    #[allow(clippy::too_many_arguments)]
    fn recurse(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        b: f64,
        fa: f64,
        fm: f64,
        fb: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let m = 0.5 * (a + b);
        let lm = 0.5 * (a + m);
        let rm = 0.5 * (m + b);
        let flm = f(lm);
        let frm = f(rm);
        let left = simpson(fa, flm, fm, m - a);
        let right = simpson(fm, frm, fb, b - m);
        let delta = left + right - whole;
        let noise_floor =
            32.0 * f64::EPSILON * (left.abs() + right.abs() + whole.abs());
        let width_floor = (b - a) <= 1e-13 * (a.abs() + b.abs() + 1.0);
        if depth == 0 || width_floor || delta.abs() <= (15.0 * tol).max(noise_floor) {
            left + right + delta / 15.0
        } else {
            recurse(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
                + recurse(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
        }
    }
    if a >= b {
        return 0.0;
    }
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = simpson(fa, fm, fb, b - a);
    recurse(f, a, b, fa, fm, fb, whole, tol, max_depth.min(42))
}

/// Markov-limit amplitude A(t) = exp(-(Gamma/2 + i Delta) t).
pub fn markov_decay(markov: &MarkovData, t: f64) -> Complex64 {
    Complex64::from_polar((-0.5 * markov.gamma * t).exp(), -markov.delta * t)
}
