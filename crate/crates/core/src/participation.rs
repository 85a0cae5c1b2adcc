//! Per-layer acoustic energies and participation ratios.
//!
//! For a standing wave `T(z) = 2a sin(k(z+δ))`, `u̇(z) = (2a/Z) cos(k(z+δ))`,
//! the potential and kinetic energies of a layer are
//!
//! ```text
//! E_pot = ½ ∫ T²/(vZ) dz,    E_kin = ½ ∫ (Z/v) u̇² dz
//! ```
//!
//! which integrate in closed form to `a²/(vZ)·(t ∓ osc)` with
//! `osc = [sin(2k(z₁+δ)) − sin(2k(z₀+δ))]/(2k)` (minus for potential, plus
//! for kinetic). The total per-layer energy is therefore exactly twice the
//! non-oscillatory term. Energies are reported up to a common normalization
//! (top-layer stress amplitude set to one); only ratios are meaningful.

use crate::scalar::{two_pi, Float};
use crate::stack::{ModeSolution, StackError, StackModel};
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ParticipationError {
    #[error(transparent)]
    Stack(#[from] StackError),
}

/// Acoustic energies of one layer, arbitrary common units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LayerEnergies<F> {
    pub potential: F,
    pub kinetic: F,
    pub total: F,
}

/// Normalized per-layer participation ratios; each family sums to one.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParticipationRecord<F> {
    pub potential: Vec<F>,
    pub kinetic: Vec<F>,
    pub total: Vec<F>,
}

/// Closed-form per-layer potential and kinetic energies of a solved mode.
pub fn layer_energies<F: Float>(
    stack: &StackModel<F>,
    mode: &ModeSolution<F>,
) -> Result<Vec<LayerEnergies<F>>, ParticipationError> {
    let waves = stack.standing_wave(mode.frequency)?;
    let out = stack
        .layers()
        .iter()
        .zip(waves)
        .map(|(layer, w)| {
            let k = two_pi::<F>() * mode.frequency / layer.velocity;
            let osc = ((k + k) * (w.z1 + w.offset)).sin() - ((k + k) * (w.z0 + w.offset)).sin();
            let osc = osc / (k + k);
            let scale = w.amplitude * w.amplitude / (layer.velocity * layer.impedance());
            let t = layer.thickness;
            LayerEnergies {
                potential: scale * (t - osc),
                kinetic: scale * (t + osc),
                total: (scale + scale) * t,
            }
        })
        .collect();
    Ok(out)
}

/// Potential, kinetic, and total energy participation ratios of a mode.
pub fn participation_ratios<F: Float>(
    stack: &StackModel<F>,
    mode: &ModeSolution<F>,
) -> Result<ParticipationRecord<F>, ParticipationError> {
    let energies = layer_energies(stack, mode)?;
    let norm = |get: fn(&LayerEnergies<F>) -> F| -> Vec<F> {
        let sum = energies.iter().fold(F::zero(), |acc, e| acc + get(e));
        energies.iter().map(|e| get(e) / sum).collect()
    };
    Ok(ParticipationRecord {
        potential: norm(|e| e.potential),
        kinetic: norm(|e| e.kinetic),
        total: norm(|e| e.total),
    })
}
