//! Qubit-phonon figures of merit: inverse Purcell decay, cooperativities,
//! and Q ↔ T₁ conversion.
//!
//! Every rate and coupling here is angular (rad/s); [`hz_to_angular`] and
//! [`angular_to_hz`] are the only 2π conversion points in this module.

use crate::scalar::{two_pi, Float};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CqadError {
    #[error("inverse Purcell rate is undefined at zero detuning")]
    ZeroDetuning,
}

/// Coupled qubit-phonon system parameters (angular rates, seconds).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CqadParams<F> {
    /// Qubit-phonon coupling g₀, rad/s.
    pub g0: F,
    /// Qubit-mode detuning Δ, rad/s.
    pub detuning: F,
    /// Qubit decay rate κ, rad/s.
    pub kappa_qubit: F,
    pub t1_qubit: F,
    pub t2_qubit: F,
    pub t1_phonon: F,
    pub t2_phonon: F,
}

pub fn hz_to_angular<F: Float>(f: F) -> F {
    two_pi::<F>() * f
}

pub fn angular_to_hz<F: Float>(omega: F) -> F {
    omega / two_pi::<F>()
}

/// Extra phonon decay induced by a detuned lossy qubit:
/// `κ_Purcell = (g₀/Δ)²·κ_qubit`. Logs a warning outside the dispersive
/// regime |Δ| > 3g₀.
pub fn inverse_purcell<F: Float>(g0: F, detuning: F, kappa_qubit: F) -> Result<F, CqadError> {
    if detuning == F::zero() {
        return Err(CqadError::ZeroDetuning);
    }
    if detuning.abs() <= F::c(3.0) * g0 {
        log::warn!("detuning is within 3 g0; dispersive Purcell estimate degrades");
    }
    let r = g0 / detuning;
    Ok(r * r * kappa_qubit)
}

/// Cooperativities `C_T1 = 4 g₀² T₁q T₁p` and `C_T2 = g₀² T₂q* T₂p*`
/// (g₀ angular).
pub fn cooperativities<F: Float>(params: &CqadParams<F>) -> (F, F) {
    let g2 = params.g0 * params.g0;
    (
        F::c(4.0) * g2 * params.t1_qubit * params.t1_phonon,
        g2 * params.t2_qubit * params.t2_phonon,
    )
}

/// Internal quality factor implied by an energy decay time: `Q = 2πf·T₁`.
pub fn q_from_t1<F: Float>(f: F, t1: F) -> F {
    hz_to_angular(f) * t1
}
