//! Analytic loss channels and per-mode budget composition.
//!
//! Channels are expressed as inverse quality factors and add linearly:
//! roughness-induced surface scattering, intrinsic mechanical absorption,
//! saturable TLS loss, diffraction out of the transverse mode, and
//! phonon-phonon damping (Akhiezer and Landau-Rumer regimes).

use crate::constants::PhysicalConstants;
use crate::participation::ParticipationRecord;
use crate::scalar::{two_pi, Float};
use crate::stack::{Layer, ModeSolution, StackModel};
use crate::tls;
use serde::Serialize;
use thiserror::Error;

/// Diffraction loss is negligible above this frequency for dome geometries;
/// budget composition skips the channel there.
const DIFFRACTION_CUTOFF_HZ: f64 = 2.0e9;
/// Cap for diffraction-limited Q when the round-trip leakage underflows.
const Q_CAP: f64 = 1e300;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("dome geometry: `{field}` must be {requirement}")]
    Invalid { field: &'static str, requirement: &'static str },
}

/// Plano-convex cavity geometry for the transverse mode structure.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DomeGeometry<F> {
    /// Dome radius of curvature R, m.
    pub radius_of_curvature: F,
    /// Dome (transducer) radius r_d, m.
    pub dome_radius: F,
    /// Total cavity thickness L, m.
    pub total_thickness: F,
    /// Acoustic anisotropy correction χ.
    pub anisotropy: F,
}

impl<F: Float> DomeGeometry<F> {
    /// Default anisotropy parameter for c-axis sapphire.
    pub fn default_anisotropy() -> F {
        F::c(1.5)
    }

    pub fn new(
        radius_of_curvature: F,
        dome_radius: F,
        total_thickness: F,
        anisotropy: F,
    ) -> Result<Self, GeometryError> {
        if !(total_thickness > F::zero()) {
            return Err(GeometryError::Invalid {
                field: "total_thickness",
                requirement: "positive",
            });
        }
        if !(radius_of_curvature > total_thickness) {
            return Err(GeometryError::Invalid {
                field: "radius_of_curvature",
                requirement: "greater than the total thickness",
            });
        }
        if !(dome_radius > F::zero()) {
            return Err(GeometryError::Invalid { field: "dome_radius", requirement: "positive" });
        }
        if !(anisotropy > F::zero()) {
            return Err(GeometryError::Invalid { field: "anisotropy", requirement: "positive" });
        }
        Ok(Self { radius_of_curvature, dome_radius, total_thickness, anisotropy })
    }
}

/// Phonon-phonon damping parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThermalLossParams<F> {
    /// Fitted product C_v γ² τ_th, J·s/(m³·K).
    pub akhiezer_product: F,
    /// Effective Grüneisen parameter γ.
    pub grueneisen: F,
}

/// Specularity of reflection from a rough boundary:
/// `p = exp(−(4πσ cosθ / λ)²)`.
pub fn specularity<F: Float>(sigma: F, wavelength: F, incidence: F) -> F {
    let x = F::c(4.0) * F::PI() * sigma * incidence.cos() / wavelength;
    (-(x * x)).exp()
}

/// Surface-scattering loss of one mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScatterBudget<F> {
    /// Q_{X,σ} per layer (infinite for smooth layers).
    pub per_layer_q: Vec<F>,
    /// Participation-weighted per-layer contributions p_X/Q_{X,σ}.
    pub per_layer_q_inv: Vec<F>,
    /// Total 1/Q_σ.
    pub total_q_inv: F,
}

/// Roughness-limited scattering loss: per-layer
/// `Q_{X,σ} = t_X v_X / (4π f (σ₁² + σ₂²))`, combined as
/// `1/Q_σ = Σ p_X / Q_{X,σ}` with total-energy participations.
pub fn q_scatter<F: Float>(
    stack: &StackModel<F>,
    mode: &ModeSolution<F>,
    participation: &ParticipationRecord<F>,
) -> ScatterBudget<F> {
    let f = mode.frequency;
    let mut per_layer_q = Vec::with_capacity(stack.layers().len());
    let mut per_layer_q_inv = Vec::with_capacity(stack.layers().len());
    let mut total = F::zero();
    for (layer, &p) in stack.layers().iter().zip(&participation.total) {
        let s2 = layer.roughness_top * layer.roughness_top
            + layer.roughness_bottom * layer.roughness_bottom;
        let q = if s2 > F::zero() {
            layer.thickness * layer.velocity / (F::c(4.0) * F::PI() * f * s2)
        } else {
            F::infinity()
        };
        let contrib = if q.is_finite() { p / q } else { F::zero() };
        per_layer_q.push(q);
        per_layer_q_inv.push(contrib);
        total += contrib;
    }
    ScatterBudget { per_layer_q, per_layer_q_inv, total_q_inv: total }
}

/// Participation-weighted mechanical absorption: `1/Q = Σ p_X / Q_{X,mech}`.
pub fn q_absorption<F: Float>(participation: &ParticipationRecord<F>, layers: &[Layer<F>]) -> F {
    participation
        .total
        .iter()
        .zip(layers)
        .fold(F::zero(), |acc, (&p, l)| acc + p * l.q_mech_inv)
}

/// Fundamental Gaussian mode waist and Rayleigh length of a plano-convex
/// cavity: `w₀ = (L R v² / (χ π² f²))^{1/4}`, `z_R = π w₀² χ f / v`.
///
/// Valid in the thin-lens regime R ≫ L; logs a warning when R < 5L.
pub fn mode_waist<F: Float>(geometry: &DomeGeometry<F>, velocity: F, f: F) -> (F, F) {
    if geometry.radius_of_curvature < F::c(5.0) * geometry.total_thickness {
        log::warn!(
            "dome radius of curvature is below 5x the cavity thickness; waist formula degrades"
        );
    }
    let w0 = (geometry.total_thickness * geometry.radius_of_curvature * velocity * velocity
        / (geometry.anisotropy * F::PI() * F::PI() * f * f))
        .powf(F::c(0.25));
    let z_r = F::PI() * w0 * w0 * geometry.anisotropy * f / velocity;
    (w0, z_r)
}

/// Diffraction-limited Q: `4πfL / (v·exp(−2 r_d²/w₀²))`, capped at 1e300 when
/// the leakage underflows (negligible channel).
pub fn q_diffraction<F: Float>(geometry: &DomeGeometry<F>, velocity: F, f: F) -> F {
    let (w0, _) = mode_waist(geometry, velocity, f);
    let ratio = geometry.dome_radius / w0;
    let ln_q = (F::c(4.0) * F::PI() * f * geometry.total_thickness / velocity).ln()
        + (ratio * ratio + ratio * ratio);
    if ln_q > F::c(Q_CAP).ln() {
        F::c(Q_CAP)
    } else {
        ln_q.exp()
    }
}

/// Frequency spacing between transverse mode families:
/// `Δ_N = (v/2πL)·arctan(L/z_R)`.
pub fn transverse_mode_spacing<F: Float>(total_thickness: F, velocity: F, rayleigh_length: F) -> F {
    velocity / (two_pi::<F>() * total_thickness) * (total_thickness / rayleigh_length).atan()
}

/// Phonon-phonon damping: Akhiezer `1/Q = (C_v γ² τ_th)·2πf·T/(ρ v²)` and
/// Landau-Rumer `1/Q = π⁵ γ² k_B⁴ T⁴ / (15 ρ v⁵ h³)`, returned separately.
pub fn q_phonon_phonon<F: Float>(
    temperature: F,
    f: F,
    density: F,
    velocity: F,
    params: &ThermalLossParams<F>,
) -> (F, F) {
    q_phonon_phonon_with(temperature, f, density, velocity, params, &PhysicalConstants::default())
}

pub fn q_phonon_phonon_with<F: Float>(
    temperature: F,
    f: F,
    density: F,
    velocity: F,
    params: &ThermalLossParams<F>,
    consts: &PhysicalConstants<F>,
) -> (F, F) {
    let akhiezer = params.akhiezer_product * two_pi::<F>() * f * temperature
        / (density * velocity * velocity);
    let kbt = consts.boltzmann * temperature;
    let landau_rumer = F::PI().powi(5)
        * params.grueneisen
        * params.grueneisen
        * kbt.powi(4)
        / (F::c(15.0) * density * velocity.powi(5) * consts.planck.powi(3));
    (akhiezer, landau_rumer)
}

/// Environment of a budget evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Environment<F> {
    /// Bath temperature, K.
    pub temperature: F,
    /// Mean phonon occupation of the mode.
    pub phonon_number: F,
    /// Drive power at the coupling port, W (bookkeeping only).
    pub input_power: F,
    /// Constant external loss (e.g. ohmic antenna contribution), 1/Q.
    pub external_q_inv: F,
}

impl<F: Float> Default for Environment<F> {
    fn default() -> Self {
        Self {
            temperature: F::c(0.01),
            phonon_number: F::zero(),
            input_power: F::zero(),
            external_q_inv: F::zero(),
        }
    }
}

/// Per-layer contribution breakdown of a budget.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LayerLoss<F> {
    pub name: String,
    pub scatter_q_inv: F,
    pub absorption_q_inv: F,
    pub tls_q_inv: F,
}

/// Channel-wise additive inverse-Q budget of one mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LossBudget<F> {
    pub frequency: F,
    pub index: i64,
    pub scatter: F,
    pub absorption: F,
    pub tls: F,
    pub diffraction: F,
    pub phonon_phonon: F,
    pub external: F,
    /// Sum of all channels, 1/Q_i.
    pub total: F,
    pub per_layer: Vec<LayerLoss<F>>,
}

/// Compose every available channel into a per-mode loss budget. Channels
/// without inputs (no geometry, no thermal parameters, zero tangents)
/// contribute zero. Diffraction participates only below 2 GHz, where it is
/// not negligible for dome geometries; [`q_diffraction`] remains callable at
/// any frequency.
#[allow(clippy::too_many_arguments)]
pub fn compose_budget<F: Float>(
    stack: &StackModel<F>,
    mode: &ModeSolution<F>,
    participation: &ParticipationRecord<F>,
    geometry: Option<&DomeGeometry<F>>,
    thermal: Option<&ThermalLossParams<F>>,
    tls_critical_number: Option<F>,
    env: &Environment<F>,
) -> LossBudget<F> {
    compose_budget_with(
        stack,
        mode,
        participation,
        geometry,
        thermal,
        tls_critical_number,
        env,
        &PhysicalConstants::default(),
    )
}

#[allow(clippy::too_many_arguments)]
pub fn compose_budget_with<F: Float>(
    stack: &StackModel<F>,
    mode: &ModeSolution<F>,
    participation: &ParticipationRecord<F>,
    geometry: Option<&DomeGeometry<F>>,
    thermal: Option<&ThermalLossParams<F>>,
    tls_critical_number: Option<F>,
    env: &Environment<F>,
    consts: &PhysicalConstants<F>,
) -> LossBudget<F> {
    let scatter = q_scatter(stack, mode, participation);
    let absorption = q_absorption(participation, stack.layers());

    // TLS: composite zero-temperature tangent from the potential-energy
    // participations, then thermal and power saturation
    let tangents: Vec<F> = stack.layers().iter().map(|l| l.q_tls_inv).collect();
    let tls_zero_t = tls::tls_tangent_composite(&participation.potential, &tangents);
    let saturation = tls::saturation_factor(
        env.phonon_number,
        tls_critical_number.unwrap_or_else(F::infinity),
        env.temperature,
        mode.frequency,
        consts,
    );
    let tls_total = tls_zero_t * saturation;

    let diffraction = match geometry {
        Some(g) if mode.frequency < F::c(DIFFRACTION_CUTOFF_HZ) => {
            let bulk = stack.layers().last().expect("stack has layers");
            q_diffraction(g, bulk.velocity, mode.frequency).recip()
        }
        _ => F::zero(),
    };

    let phonon_phonon = match thermal {
        Some(t) => {
            let bulk = stack.layers().last().expect("stack has layers");
            let (akh, lr) = q_phonon_phonon_with(
                env.temperature,
                mode.frequency,
                bulk.density,
                bulk.velocity,
                t,
                consts,
            );
            akh + lr
        }
        None => F::zero(),
    };

    let per_layer = stack
        .layers()
        .iter()
        .enumerate()
        .map(|(i, l)| LayerLoss {
            name: l.name.clone(),
            scatter_q_inv: scatter.per_layer_q_inv[i],
            absorption_q_inv: participation.total[i] * l.q_mech_inv,
            tls_q_inv: participation.potential[i] * l.q_tls_inv * saturation,
        })
        .collect();

    let total = scatter.total_q_inv
        + absorption
        + tls_total
        + diffraction
        + phonon_phonon
        + env.external_q_inv;

    LossBudget {
        frequency: mode.frequency,
        index: mode.index,
        scatter: scatter.total_q_inv,
        absorption,
        tls: tls_total,
        diffraction,
        phonon_phonon,
        external: env.external_q_inv,
        total,
        per_layer,
    }
}

/// Acoustic wavelength `v/f`.
pub fn wavelength<F: Float>(velocity: F, f: F) -> F {
    velocity / f
}
