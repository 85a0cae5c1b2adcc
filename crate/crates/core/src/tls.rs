//! Resonant two-level-system (TLS) loss and dispersion.
//!
//! Near-resonant TLS saturate with drive strength and temperature:
//!
//! ```text
//! 1/Q_i = (1/Q_TLS) · tanh(hf/2k_BT) / √(1 + n̄/n_c) + 1/Q_bg
//! ```
//!
//! and the same bath pulls the mode frequency dispersively through the
//! complex digamma function. The effective zero-temperature tangent of a
//! layered resonator is the potential-energy-participation-weighted sum of
//! per-layer tangents, since TLS couple to strain.

use crate::constants::PhysicalConstants;
use crate::scalar::{two_pi, Float};
use crate::special::digamma;
use num_complex::Complex;
use serde::Serialize;

/// Opaque fit parameters of the resonant-TLS model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TlsParams<F> {
    /// Effective zero-temperature TLS loss tangent 1/Q_TLS.
    pub q_tls_inv: F,
    /// Critical phonon number for saturation.
    pub n_c: F,
    /// TLS ensemble cutoff, rad/s; only the variance ratio uses it.
    pub omega_max: F,
}

/// Thermal-and-power saturation factor `tanh(hf/2k_BT)/√(1 + n̄/n_c)`.
/// `T = 0` is treated as the tanh → 1 limit.
pub fn saturation_factor<F: Float>(
    phonon_number: F,
    n_c: F,
    temperature: F,
    f: F,
    consts: &PhysicalConstants<F>,
) -> F {
    let thermal = if temperature > F::zero() {
        (consts.planck * f / (F::c(2.0) * consts.boltzmann * temperature)).tanh()
    } else {
        F::one()
    };
    let drive = if n_c.is_finite() {
        (F::one() + phonon_number / n_c).sqrt()
    } else {
        F::one()
    };
    thermal / drive
}

/// Power- and temperature-dependent TLS loss plus a saturation-independent
/// background.
pub fn tls_q_inv<F: Float>(
    params: &TlsParams<F>,
    phonon_number: F,
    temperature: F,
    f: F,
    background_q_inv: F,
) -> F {
    tls_q_inv_with(
        params,
        phonon_number,
        temperature,
        f,
        background_q_inv,
        &PhysicalConstants::default(),
    )
}

pub fn tls_q_inv_with<F: Float>(
    params: &TlsParams<F>,
    phonon_number: F,
    temperature: F,
    f: F,
    background_q_inv: F,
    consts: &PhysicalConstants<F>,
) -> F {
    params.q_tls_inv * saturation_factor(phonon_number, params.n_c, temperature, f, consts)
        + background_q_inv
}

/// Dispersive fractional frequency shift of a mode coupled to a TLS bath:
///
/// ```text
/// Δf/f = (1/πQ_TLS)·[Re Ψ(1/2 + hf/(2πi·k_BT)) − ln(hf/(2πk_BT))]
/// ```
///
/// The bracket vanishes as T → 0, grows logarithmically at high temperature,
/// and passes through a shallow negative dip near k_BT ≈ hf/8.
pub fn tls_fractional_shift<F: Float>(q_tls_inv: F, temperature: F, f: F) -> F {
    tls_fractional_shift_with(q_tls_inv, temperature, f, &PhysicalConstants::default())
}

pub fn tls_fractional_shift_with<F: Float>(
    q_tls_inv: F,
    temperature: F,
    f: F,
    consts: &PhysicalConstants<F>,
) -> F {
    let y = consts.planck * f / (two_pi::<F>() * consts.boltzmann * temperature);
    // hf/(2πi k_BT) = −iy and Re Ψ(z̄) = Re Ψ(z)
    let bracket = digamma(Complex::new(F::c(0.5), y)).re - y.ln();
    q_tls_inv / F::PI() * bracket
}

/// Invert a fractional-frequency-shift difference between two temperatures
/// into the zero-temperature tangent 1/Q_TLS.
pub fn invert_two_point_shift<F: Float>(shift_difference: F, t_low: F, t_high: F, f: F) -> F {
    let per_unit = tls_fractional_shift(F::one(), t_high, f)
        - tls_fractional_shift(F::one(), t_low, f);
    shift_difference / per_unit
}

/// Composite zero-temperature tangent of a layered resonator:
/// `1/Q_TLS = Σ_X p_X^pot / Q_{X,TLS}`.
pub fn tls_tangent_composite<F: Float>(p_pot: &[F], tangents: &[F]) -> F {
    p_pot
        .iter()
        .zip(tangents)
        .fold(F::zero(), |acc, (&p, &t)| acc + p * t)
}

/// Dissipative-to-reactive variance ratio of the tangent across modes for an
/// inhomogeneous TLS frequency distribution: `(4/π²)·ln²(ω_max/ω_r)`.
pub fn variance_ratio<F: Float>(omega_max: F, omega_r: F) -> F {
    let l = (omega_max / omega_r).ln();
    F::c(4.0) / (F::PI() * F::PI()) * l * l
}
