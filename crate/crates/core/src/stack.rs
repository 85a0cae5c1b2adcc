//! One-dimensional acoustic transmission-line model of a layered bulk
//! resonator.
//!
//! Longitudinal plane waves in each layer are standing waves of stress
//! `T(z) = 2T_X sin(k_X (z + δ_X))` and particle velocity
//! `u̇(z) = (2T_X/Z_X) cos(k_X (z + δ_X))`, with `k_X = 2πf/v_X` and acoustic
//! impedance `Z_X = ρ_X v_X`. Free (zero-stress) outer surfaces plus stress
//! and velocity continuity at the interfaces give a transcendental
//! characteristic equation whose roots are the mode frequencies. Two layers:
//!
//! ```text
//! tan(2πf t_P / v_P) = -(Z_B/Z_P) tan(2πf t_B / v_B)
//! ```
//!
//! A third thin interlayer between the film and the substrate adds a position
//! offset `δ_D` and amplitude factor `η` solved from the lower-interface
//! conditions. Residuals here are evaluated in a product form cleared of
//! tangents, so they are continuous and pole-free — safe for bracketing.

use crate::scalar::{two_pi, Float};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Scan density for root bracketing, in brackets per mean free spectral range.
const SCAN_PER_FSR: f64 = 20.0;
/// Relative frequency tolerance for root refinement.
const ROOT_REL_TOL: f64 = 1e-12;
/// Roots closer than `fsr_mean / MERGE_DIVISOR` are treated as duplicates.
const MERGE_DIVISOR: f64 = 100.0;
const MAX_BISECTIONS: usize = 200;

#[derive(Debug, Error)]
pub enum StackError {
    #[error("layer `{layer}`: field `{field}` must be {requirement}, got {value}")]
    InvalidLayer { layer: String, field: &'static str, requirement: &'static str, value: f64 },
    #[error("stacks of {0} layers are not supported (1 to 3)")]
    UnsupportedLayerCount(usize),
    #[error("defect-layer parameters require a three-layer stack")]
    NoDefectLayer,
    #[error("degenerate evaluation at {frequency} Hz: standing-wave amplitude ratio is 0/0")]
    DegenerateMode { frequency: f64 },
    #[error("root refinement did not converge in bracket [{lo}, {hi}] Hz")]
    NonConvergentBracket { lo: f64, hi: f64 },
    #[error("invalid frequency window [{lo}, {hi}] Hz")]
    InvalidWindow { lo: f64, hi: f64 },
}

/// One acoustic medium in the stack.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layer<F> {
    pub name: String,
    /// Thickness, m.
    pub thickness: F,
    /// Longitudinal sound velocity, m/s.
    pub velocity: F,
    /// Mass density, kg/m³.
    pub density: F,
    /// RMS roughness of the top surface, m.
    pub roughness_top: F,
    /// RMS roughness of the bottom surface, m.
    pub roughness_bottom: F,
    /// Intrinsic mechanical absorption loss tangent 1/Q.
    pub q_mech_inv: F,
    /// TLS loss tangent 1/Q at zero temperature.
    pub q_tls_inv: F,
}

impl<F: Float> Layer<F> {
    pub fn new(
        name: impl Into<String>,
        thickness: F,
        velocity: F,
        density: F,
    ) -> Result<Self, StackError> {
        let name = name.into();
        let positive = |field: &'static str, v: F| -> Result<(), StackError> {
            if v > F::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(StackError::InvalidLayer {
                    layer: name.clone(),
                    field,
                    requirement: "positive and finite",
                    value: v.to_f64().unwrap_or(f64::NAN),
                })
            }
        };
        positive("thickness", thickness)?;
        positive("velocity", velocity)?;
        positive("density", density)?;
        Ok(Self {
            name,
            thickness,
            velocity,
            density,
            roughness_top: F::zero(),
            roughness_bottom: F::zero(),
            q_mech_inv: F::zero(),
            q_tls_inv: F::zero(),
        })
    }

    pub fn with_roughness(mut self, top: F, bottom: F) -> Result<Self, StackError> {
        for (field, v) in [("roughness_top", top), ("roughness_bottom", bottom)] {
            if !(v >= F::zero()) || !v.is_finite() {
                return Err(StackError::InvalidLayer {
                    layer: self.name.clone(),
                    field: if field == "roughness_top" { "roughness_top" } else { "roughness_bottom" },
                    requirement: "non-negative and finite",
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        self.roughness_top = top;
        self.roughness_bottom = bottom;
        Ok(self)
    }

    pub fn with_loss(mut self, q_mech_inv: F, q_tls_inv: F) -> Result<Self, StackError> {
        for (field, v) in [("q_mech_inv", q_mech_inv), ("q_tls_inv", q_tls_inv)] {
            if !(v >= F::zero()) || !v.is_finite() {
                return Err(StackError::InvalidLayer {
                    layer: self.name.clone(),
                    field: if field == "q_mech_inv" { "q_mech_inv" } else { "q_tls_inv" },
                    requirement: "non-negative and finite",
                    value: v.to_f64().unwrap_or(f64::NAN),
                });
            }
        }
        self.q_mech_inv = q_mech_inv;
        self.q_tls_inv = q_tls_inv;
        Ok(self)
    }

    /// Acoustic impedance `Z = ρ v`, kg/(m²·s).
    pub fn impedance(&self) -> F {
        self.density * self.velocity
    }

    /// One-way transit time `β = t/v`, s.
    pub fn transit_time(&self) -> F {
        self.thickness / self.velocity
    }
}

/// Acoustic impedance `Z = ρ v` of a layer.
pub fn acoustic_impedance<F: Float>(layer: &Layer<F>) -> F {
    layer.impedance()
}

/// Longitudinal standing-wave offset and amplitude parameters of the defect
/// interlayer at a given frequency.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DefectParams<F> {
    /// Position offset δ_D of the standing wave in the interlayer, m.
    pub delta_d: F,
    /// Interlayer-to-bulk stress amplitude ratio η = T_D/T_B (positive).
    pub eta: F,
    /// Film-to-interlayer stress amplitude ratio ξ = T_D/T_P.
    pub xi: F,
}

/// One solved longitudinal mode.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSolution<F> {
    /// Mode frequency, Hz.
    pub frequency: F,
    /// Overtone index from integer division by the mean FSR.
    pub index: i64,
    /// δ_D, present for three-layer stacks.
    pub defect_offset: Option<F>,
    /// η, present for three-layer stacks.
    pub amplitude_ratio: Option<F>,
    /// ξ, present for three-layer stacks.
    pub piezo_defect_ratio: Option<F>,
    /// Stress amplitude of each layer relative to the top layer, T_X/T_P.
    pub amplitudes: Vec<F>,
}

/// Standing-wave description of one layer at a fixed frequency: stress is
/// `2a·sin(k(z+δ))` for `z ∈ [z0, z1]`, with `a` relative to the top layer.
#[derive(Debug, Clone, Copy)]
pub struct LayerWave<F> {
    pub z0: F,
    pub z1: F,
    pub offset: F,
    pub amplitude: F,
}

/// An ordered stack of 1 to 3 layers (top film → optional interlayer → bulk)
/// with free surfaces on both ends.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackModel<F> {
    layers: Vec<Layer<F>>,
    /// Constant comb offset from the transverse (Gouy) phase, Hz. A fit
    /// nuisance parameter; it does not enter the characteristic equation.
    pub gouy_shift: F,
    fsr_mean: F,
}

impl<F: Float> StackModel<F> {
    pub fn new(layers: Vec<Layer<F>>, gouy_shift: F) -> Result<Self, StackError> {
        if layers.is_empty() || layers.len() > 3 {
            return Err(StackError::UnsupportedLayerCount(layers.len()));
        }
        let round_trip = layers
            .iter()
            .fold(F::zero(), |acc, l| acc + F::c(2.0) * l.transit_time());
        let fsr_mean = round_trip.recip();
        Ok(Self { layers, gouy_shift, fsr_mean })
    }

    pub fn layers(&self) -> &[Layer<F>] {
        &self.layers
    }

    /// Mean free spectral range Δ₀ = (Σ 2 t_X/v_X)⁻¹, Hz.
    pub fn fsr_mean(&self) -> F {
        self.fsr_mean
    }

    /// Total stack thickness, m.
    pub fn total_thickness(&self) -> F {
        self.layers.iter().fold(F::zero(), |acc, l| acc + l.thickness)
    }

    fn phase(&self, i: usize, f: F) -> F {
        two_pi::<F>() * f * self.layers[i].transit_time()
    }

    /// Characteristic residual whose zeros are the free-free mode
    /// frequencies. Continuous in `f` and free of tangent poles.
    pub fn characteristic_residual(&self, f: F) -> F {
        match self.layers.len() {
            1 => self.phase(0, f).sin(),
            2 => {
                let zr = self.layers[1].impedance() / self.layers[0].impedance();
                residual_two(self.phase(0, f), self.phase(1, f), zr)
            }
            _ => {
                let zd = self.layers[1].impedance();
                residual_three(
                    self.phase(0, f),
                    self.phase(1, f),
                    self.phase(2, f),
                    self.layers[0].impedance() / zd,
                    self.layers[2].impedance() / zd,
                )
            }
        }
    }

    /// Standing-wave offset δ_D, amplitude factor η, and film-to-interlayer
    /// ratio ξ for a three-layer stack at frequency `f`.
    ///
    /// δ_D is unwrapped to the branch continuous in `f` (the branch on which
    /// δ_D → −t_B when the interlayer matches the bulk). ξ diverges where its
    /// sine denominator vanishes; that is reported as a degenerate
    /// evaluation. At solved mode frequencies the boundary conditions keep ξ
    /// finite.
    pub fn defect_mode_params(&self, f: F) -> Result<DefectParams<F>, StackError> {
        if self.layers.len() != 3 {
            return Err(StackError::NoDefectLayer);
        }
        let (defect, bulk) = (&self.layers[1], &self.layers[2]);
        let z_d = defect.impedance();
        let z_b = bulk.impedance();
        let k_d = two_pi::<F>() * f / defect.velocity;

        let phi_b = self.phase(2, f);
        // reduce φ_B to r ∈ (−π/2, π/2] around the nearest multiple of π so
        // the arctan argument stays accurate near the tangent poles
        let m = (phi_b / F::PI()).round();
        let r = phi_b - m * F::PI();
        let theta0 = (-(z_b / z_d) * r.tan()).atan();
        let theta = theta0 - m * F::PI();
        let delta_d = theta / k_d;

        let eta = (z_d * phi_b.cos()).hypot(z_b * phi_b.sin()) / z_b;

        let den = (k_d * (delta_d - defect.thickness)).sin();
        let num = self.phase(0, f).sin();
        if den == F::zero() || !(num / den).is_finite() {
            return Err(StackError::DegenerateMode {
                frequency: f.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(DefectParams { delta_d, eta, xi: num / den })
    }

    /// Per-layer standing-wave parameters at a mode frequency, with the
    /// coordinate origin at the lowest internal interface and stress
    /// amplitudes normalized to the top layer.
    pub fn standing_wave(&self, f: F) -> Result<Vec<LayerWave<F>>, StackError> {
        match self.layers.len() {
            1 => {
                let t = self.layers[0].thickness;
                Ok(vec![LayerWave { z0: F::zero(), z1: t, offset: -t, amplitude: F::one() }])
            }
            2 => {
                let (t_p, t_b) = (self.layers[0].thickness, self.layers[1].thickness);
                let phi_p = self.phase(0, f);
                let phi_b = self.phase(1, f);
                // T_B/T_P from stress or velocity continuity, whichever
                // denominator is farther from zero
                let amp_b = if phi_b.sin().abs() > phi_b.cos().abs() {
                    -phi_p.sin() / phi_b.sin()
                } else {
                    let zr = self.layers[1].impedance() / self.layers[0].impedance();
                    zr * phi_p.cos() / phi_b.cos()
                };
                Ok(vec![
                    LayerWave { z0: -t_p, z1: F::zero(), offset: t_p, amplitude: F::one() },
                    LayerWave { z0: F::zero(), z1: t_b, offset: -t_b, amplitude: amp_b },
                ])
            }
            _ => {
                let d = self.defect_mode_params(f)?;
                let (t_p, t_d, t_b) = (
                    self.layers[0].thickness,
                    self.layers[1].thickness,
                    self.layers[2].thickness,
                );
                Ok(vec![
                    LayerWave {
                        z0: -(t_p + t_d),
                        z1: -t_d,
                        offset: t_p + t_d,
                        amplitude: F::one(),
                    },
                    LayerWave { z0: -t_d, z1: F::zero(), offset: d.delta_d, amplitude: d.xi },
                    LayerWave { z0: F::zero(), z1: t_b, offset: -t_b, amplitude: d.xi / d.eta },
                ])
            }
        }
    }

    /// All mode frequencies in `[f_min, f_max]`.
    ///
    /// Brackets sign changes of the characteristic residual on a uniform scan
    /// of Δ₀/20 and refines each by bisection to 1e-12 relative; roots closer
    /// than Δ₀/100 are merged. An empty window yields an empty vector.
    pub fn solve_modes(&self, f_min: F, f_max: F) -> Result<Vec<ModeSolution<F>>, StackError> {
        if !(f_min > F::zero()) || !f_min.is_finite() || !f_max.is_finite() {
            return Err(StackError::InvalidWindow {
                lo: f_min.to_f64().unwrap_or(f64::NAN),
                hi: f_max.to_f64().unwrap_or(f64::NAN),
            });
        }
        if f_max <= f_min {
            return Ok(Vec::new());
        }
        let step = self.fsr_mean / F::c(SCAN_PER_FSR);
        let mut roots: Vec<F> = Vec::new();

        let mut lo = f_min;
        let mut r_lo = self.characteristic_residual(lo);
        while lo < f_max {
            let hi = (lo + step).min(f_max);
            let r_hi = self.characteristic_residual(hi);
            if r_lo == F::zero() {
                roots.push(lo);
            } else if r_lo * r_hi < F::zero() {
                roots.push(self.bisect(lo, hi, r_lo)?);
            }
            lo = hi;
            r_lo = r_hi;
        }
        if r_lo == F::zero() {
            roots.push(lo);
        }

        // merge near-duplicates (bracket endpoints landing on a root, etc.)
        let merge = self.fsr_mean / F::c(MERGE_DIVISOR);
        roots.dedup_by(|b, a| (*b - *a).abs() < merge);

        let indices = assign_mode_index(&roots, self.fsr_mean);
        roots
            .into_iter()
            .zip(indices)
            .map(|(f, index)| {
                let defect = if self.layers.len() == 3 {
                    Some(self.defect_mode_params(f)?)
                } else {
                    None
                };
                let amplitudes =
                    self.standing_wave(f)?.iter().map(|w| w.amplitude).collect();
                Ok(ModeSolution {
                    frequency: f,
                    index,
                    defect_offset: defect.map(|d| d.delta_d),
                    amplitude_ratio: defect.map(|d| d.eta),
                    piezo_defect_ratio: defect.map(|d| d.xi),
                    amplitudes,
                })
            })
            .collect()
    }

    fn bisect(&self, mut lo: F, mut hi: F, r_lo_init: F) -> Result<F, StackError> {
        let tol = F::c(ROOT_REL_TOL);
        let mut r_lo = r_lo_init;
        for _ in 0..MAX_BISECTIONS {
            let mid = (lo + hi) * F::c(0.5);
            if (hi - lo) <= tol * mid {
                return Ok(mid);
            }
            let r_mid = self.characteristic_residual(mid);
            if r_mid == F::zero() {
                return Ok(mid);
            }
            if r_lo * r_mid < F::zero() {
                hi = mid;
            } else {
                lo = mid;
                r_lo = r_mid;
            }
        }
        Err(StackError::NonConvergentBracket {
            lo: lo.to_f64().unwrap_or(f64::NAN),
            hi: hi.to_f64().unwrap_or(f64::NAN),
        })
    }
}

/// Two-layer characteristic residual in pole-free product form:
/// `sin φ_P cos φ_B + (Z_B/Z_P) cos φ_P sin φ_B`.
pub(crate) fn residual_two<F: Float>(phi_p: F, phi_b: F, zb_over_zp: F) -> F {
    phi_p.sin() * phi_b.cos() + zb_over_zp * phi_p.cos() * phi_b.sin()
}

/// Three-layer characteristic residual in pole-free product form. Derived by
/// eliminating δ_D between the two interface conditions and clearing all
/// tangents; reduces exactly to [`residual_two`] when the interlayer matches
/// the bulk or its thickness vanishes.
pub(crate) fn residual_three<F: Float>(
    phi_p: F,
    phi_d: F,
    phi_b: F,
    zp_over_zd: F,
    zb_over_zd: F,
) -> F {
    let (sp, cp) = (phi_p.sin(), phi_p.cos());
    let (sd, cd) = (phi_d.sin(), phi_d.cos());
    let (sb, cb) = (phi_b.sin(), phi_b.cos());
    sp * cb * cd - zb_over_zd * sp * sb * sd
        + (zb_over_zd / zp_over_zd) * cp * sb * cd
        + cp * cb * sd / zp_over_zd
}

/// Overtone index by integer division against the mean FSR:
/// `n = ⌊(f + Δ₀/2)/Δ₀⌋`.
pub fn assign_mode_index<F: Float>(frequencies: &[F], fsr_mean: F) -> Vec<i64> {
    frequencies
        .iter()
        .map(|&f| {
            ((f + fsr_mean * F::c(0.5)) / fsr_mean)
                .floor()
                .to_i64()
                .unwrap_or(i64::MAX)
        })
        .collect()
}
