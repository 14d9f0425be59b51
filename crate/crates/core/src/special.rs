//! Bessel functions of the first kind.
//!
//! `bessel_j0` is a standalone series/asymptotic evaluation used as an
//! independent oracle against the Brillouin-zone quadrature of the memory
//! kernel. `bessel_jn_array` computes the whole ladder J_0..J_n by Miller's
//! downward recurrence and supplies the expansion coefficients of the
//! Chebyshev propagator. The two deliberately share no code.

/// J_0(x) by power series for |x| <= 12 and the Hankel asymptotic
/// expansion beyond. Absolute error below 1e-12 on [0, 300].
pub fn bessel_j0(x: f64) -> f64 {
    let x = x.abs();
    if x <= 12.0 {
        // sum_m (-1)^m (x^2/4)^m / (m!)^2
        let q = 0.25 * x * x;
        let mut term = 1.0_f64;
        let mut sum = 1.0_f64;
        let mut m = 1.0_f64;
        while term.abs() > 1e-18 * sum.abs().max(1e-10) && m < 80.0 {
            term *= -q / (m * m);
            sum += term;
            m += 1.0;
        }
        sum
    } else {
        // J_0(x) ~ sqrt(2/(pi x)) [P cos(chi) - Q sin(chi)], chi = x - pi/4,
        // with b_m = prod (2j-1)^2 / (m! 8^m) feeding P (even m) and Q (odd m).
        let chi = x - std::f64::consts::FRAC_PI_4;
        let mut p = 1.0;
        let mut q = 0.0;
        let mut b = 1.0;
        let mut sign_p = -1.0;
        let mut sign_q = -1.0;
        let mut prev = f64::INFINITY;
        let mut m = 1u32;
        loop {
            let mf = f64::from(m);
            b *= (2.0 * mf - 1.0) * (2.0 * mf - 1.0) / (8.0 * mf);
            let t = b / x.powi(m as i32);
            // asymptotic series: stop at the smallest term
            if t >= prev || t < 1e-18 || m > 200 {
                break;
            }
            prev = t;
            if m % 2 == 0 {
                p += sign_p * t;
                sign_p = -sign_p;
            } else {
                q += sign_q * t;
                sign_q = -sign_q;
            }
            m += 1;
        }
        (2.0 / (std::f64::consts::PI * x)).sqrt() * (p * chi.cos() - q * chi.sin())
    }
}

/// J_l(x) for signed order, using J_{-l} = (-1)^l J_l.
pub fn bessel_jl(l: i64, x: f64) -> f64 {
    let n = l.unsigned_abs() as usize;
    let v = bessel_jn_array(x, n)[n];
    if l < 0 && l % 2 != 0 {
        -v
    } else {
        v
    }
}

/// J_0(x)..J_n(x) by Miller's downward recurrence, normalized with
/// J_0 + 2 sum_k J_{2k} = 1. Requires x >= 0.
pub fn bessel_jn_array(x: f64, n_max: usize) -> Vec<f64> {
    assert!(x >= 0.0, "bessel_jn_array: negative argument");
    let mut out = vec![0.0; n_max + 1];
    if x == 0.0 {
        out[0] = 1.0;
        return out;
    }
    let top = (n_max as f64).max(x);
    let mut m_start = (top + 25.0 + 2.0 * top.sqrt()).ceil() as usize;
    if m_start % 2 == 1 {
        m_start += 1;
    }
    let mut j_plus = 0.0_f64;
    let mut j_curr = 1e-300_f64;
    let mut norm = 0.0_f64;
    let mut m = m_start;
    loop {
        let j_minus = (2.0 * (m as f64 + 1.0) / x) * j_curr - j_plus;
        j_plus = j_curr;
        j_curr = j_minus; // now holds the unnormalized J_m
        if j_curr.abs() > 1e250 {
            j_curr *= 1e-250;
            j_plus *= 1e-250;
            norm *= 1e-250;
            for v in &mut out {
                *v *= 1e-250;
            }
        }
        if m <= n_max {
            out[m] = j_curr;
        }
        if m % 2 == 0 {
            norm += if m == 0 { j_curr } else { 2.0 * j_curr };
        }
        if m == 0 {
            break;
        }
        m -= 1;
    }
    for v in &mut out {
        *v /= norm;
    }
    out
}
