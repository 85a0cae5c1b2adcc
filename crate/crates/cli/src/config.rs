//! Project configuration: the layer stack in bench-sheet units (µm, km/s,
//! g/cm³, nm), dome geometry, loss-model parameters, and optional sections
//! for the qubit metrics and physical-constant overrides. Unknown keys are
//! rejected so typos fail loudly.

use anyhow::{bail, Context, Result};
use hbar_core::constants::PhysicalConstants;
use hbar_core::loss::{DomeGeometry, Environment, ThermalLossParams};
use hbar_core::stack::{Layer, StackModel};
use hbar_core::Real;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Default interlayer thickness when a three-layer stack omits it, µm.
const DEFAULT_DEFECT_THICKNESS_UM: f64 = 0.010;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProjectConfig {
    pub stack: StackSection,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub roughness: Option<RoughnessSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub geometry: Option<GeometrySection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tls: Option<TlsSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub thermal: Option<ThermalSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub environment: Option<EnvironmentSection>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cqad: Option<CqadSection>,
    /// Physical-constant overrides; intended for testing only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub constants: Option<ConstantsSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StackSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gouy_shift_hz: Option<Real>,
    pub layers: Vec<LayerSection>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSection {
    pub name: String,
    /// Optional only for the interlayer of a three-layer stack (10 nm default).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub thickness_um: Option<Real>,
    pub velocity_km_s: Real,
    pub density_g_cm3: Real,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roughness_top_nm: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub roughness_bottom_nm: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_mech_inv: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub q_tls_inv: Option<Real>,
}

/// Measured surface roughnesses assigned by convention: the film takes the
/// top value, the interlayer (or the film bottom in a two-layer stack) takes
/// the interface value once, and the substrate takes the back value.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RoughnessSection {
    pub top_nm: Real,
    pub interface_nm: Real,
    pub back_nm: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySection {
    pub radius_of_curvature_mm: Real,
    pub dome_radius_um: Real,
    /// Defaults to the summed layer thicknesses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub total_thickness_um: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anisotropy: Option<Real>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TlsSection {
    pub critical_phonon_number: Real,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cutoff_hz: Option<Real>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    /// Fitted product C_v γ² τ_th in J·s/(m³·K).
    pub akhiezer_product: Real,
    pub grueneisen: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnvironmentSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature_k: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub phonon_number: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub input_power_dbm: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external_q_inv: Option<Real>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CqadSection {
    pub g0_2pi_khz: Real,
    pub detuning_2pi_mhz: Real,
    pub kappa_qubit_2pi_khz: Real,
    pub t1_qubit_us: Real,
    pub t2_qubit_us: Real,
    pub t1_phonon_us: Real,
    pub t2_phonon_us: Real,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConstantsSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub planck: Option<Real>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub boltzmann: Option<Real>,
}

impl ProjectConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("cannot read config file `{}`", path.display()))?;
        let config: ProjectConfig = toml::from_str(&text)
            .with_context(|| format!("config file `{}` is not valid", path.display()))?;
        config.validate()?;
        Ok(config)
    }

    fn validate(&self) -> Result<()> {
        let n = self.stack.layers.len();
        if n == 0 || n > 3 {
            bail!("stack.layers: between 1 and 3 layers supported, got {n}");
        }
        for (i, layer) in self.stack.layers.iter().enumerate() {
            if layer.thickness_um.is_none() && !(n == 3 && i == 1) {
                bail!(
                    "stack.layers[{i}] (`{}`): thickness_um is required (only the middle \
                     interlayer of a three-layer stack may omit it)",
                    layer.name
                );
            }
        }
        if self.roughness.is_some() {
            for (i, layer) in self.stack.layers.iter().enumerate() {
                if layer.roughness_top_nm.is_some() || layer.roughness_bottom_nm.is_some() {
                    bail!(
                        "stack.layers[{i}] (`{}`): per-layer roughness conflicts with the \
                         [roughness] section; use one or the other",
                        layer.name
                    );
                }
            }
        }
        Ok(())
    }

    /// Build the SI stack model, applying unit conversions, the interlayer
    /// thickness default, and the interface-roughness assignment convention.
    pub fn stack_model(&self) -> Result<StackModel<Real>> {
        let n = self.stack.layers.len();
        let mut layers = Vec::with_capacity(n);
        for (i, section) in self.stack.layers.iter().enumerate() {
            let thickness_um = section
                .thickness_um
                .unwrap_or(DEFAULT_DEFECT_THICKNESS_UM);
            let mut layer = Layer::new(
                section.name.clone(),
                thickness_um * 1e-6,
                section.velocity_km_s * 1e3,
                section.density_g_cm3 * 1e3,
            )
            .with_context(|| format!("stack.layers[{i}] (`{}`)", section.name))?;

            let (top_nm, bottom_nm) = if let Some(r) = &self.roughness {
                match (n, i) {
                    (1, _) => (r.top_nm, r.back_nm),
                    (2, 0) => (r.top_nm, r.interface_nm),
                    (2, _) => (0.0, r.back_nm),
                    (_, 0) => (r.top_nm, 0.0),
                    (_, 1) => (0.0, r.interface_nm),
                    (_, _) => (0.0, r.back_nm),
                }
            } else {
                (
                    section.roughness_top_nm.unwrap_or(0.0),
                    section.roughness_bottom_nm.unwrap_or(0.0),
                )
            };
            layer = layer
                .with_roughness(top_nm * 1e-9, bottom_nm * 1e-9)
                .with_context(|| format!("stack.layers[{i}] (`{}`)", section.name))?;
            layer = layer
                .with_loss(
                    section.q_mech_inv.unwrap_or(0.0),
                    section.q_tls_inv.unwrap_or(0.0),
                )
                .with_context(|| format!("stack.layers[{i}] (`{}`)", section.name))?;
            layers.push(layer);
        }
        Ok(StackModel::new(layers, self.stack.gouy_shift_hz.unwrap_or(0.0))?)
    }

    pub fn dome_geometry(&self, stack: &StackModel<Real>) -> Result<Option<DomeGeometry<Real>>> {
        let Some(g) = &self.geometry else { return Ok(None) };
        let total = g
            .total_thickness_um
            .map(|t| t * 1e-6)
            .unwrap_or_else(|| stack.total_thickness());
        Ok(Some(
            DomeGeometry::new(
                g.radius_of_curvature_mm * 1e-3,
                g.dome_radius_um * 1e-6,
                total,
                g.anisotropy
                    .unwrap_or_else(DomeGeometry::<Real>::default_anisotropy),
            )
            .context("[geometry]")?,
        ))
    }

    pub fn thermal_params(&self) -> Option<ThermalLossParams<Real>> {
        self.thermal.as_ref().map(|t| ThermalLossParams {
            akhiezer_product: t.akhiezer_product,
            grueneisen: t.grueneisen,
        })
    }

    pub fn environment(&self) -> Environment<Real> {
        let mut env = Environment::default();
        if let Some(e) = &self.environment {
            if let Some(t) = e.temperature_k {
                env.temperature = t;
            }
            if let Some(n) = e.phonon_number {
                env.phonon_number = n;
            }
            if let Some(p) = e.input_power_dbm {
                env.input_power = dbm_to_watts(p);
            }
            if let Some(x) = e.external_q_inv {
                env.external_q_inv = x;
            }
        }
        env
    }

    pub fn physical_constants(&self) -> PhysicalConstants<Real> {
        let mut c = PhysicalConstants::default();
        if let Some(s) = &self.constants {
            if let Some(h) = s.planck {
                c.planck = h;
            }
            if let Some(kb) = s.boltzmann {
                c.boltzmann = kb;
            }
        }
        c
    }
}

pub fn dbm_to_watts(dbm: Real) -> Real {
    1e-3 * 10f64.powf(dbm / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    const B1: &str = r#"
[stack]
gouy_shift_hz = 0.0

[[stack.layers]]
name = "piezo"
thickness_um = 1.1778
velocity_km_s = 10.920
density_g_cm3 = 3.306

[[stack.layers]]
name = "defect"
velocity_km_s = 11.767
density_g_cm3 = 1.823

[[stack.layers]]
name = "bulk"
thickness_um = 434.57
velocity_km_s = 11.059
density_g_cm3 = 3.98

[roughness]
top_nm = 0.8
interface_nm = 2.0
back_nm = 0.5
"#;

    #[test]
    fn table_units_convert_to_si() {
        let config: ProjectConfig = toml::from_str(B1).unwrap();
        config.validate().unwrap();
        let stack = config.stack_model().unwrap();
        let layers = stack.layers();
        assert_eq!(layers.len(), 3);
        assert!((layers[0].thickness - 1.1778e-6).abs() < 1e-18);
        assert!((layers[0].velocity - 10920.0).abs() < 1e-9);
        assert!((layers[0].density - 3306.0).abs() < 1e-9);
        // interlayer picked up the 10 nm default
        assert!((layers[1].thickness - 1.0e-8).abs() < 1e-20);
        // roughness convention: film top, interlayer bottom, substrate back
        assert!((layers[0].roughness_top - 0.8e-9).abs() < 1e-18);
        assert_eq!(layers[0].roughness_bottom, 0.0);
        assert!((layers[1].roughness_bottom - 2.0e-9).abs() < 1e-18);
        assert!((layers[2].roughness_bottom - 0.5e-9).abs() < 1e-18);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let bad = B1.replace("[roughness]", "[roughness]\nsides_nm = 1.0");
        let err = toml::from_str::<ProjectConfig>(&bad).unwrap_err();
        assert!(err.to_string().contains("sides_nm"), "{err}");
    }

    #[test]
    fn missing_required_thickness_is_named() {
        let bad = B1.replace("thickness_um = 434.57\n", "");
        let config: ProjectConfig = toml::from_str(&bad).unwrap();
        let err = config.validate().unwrap_err();
        assert!(err.to_string().contains("bulk"), "{err}");
    }

    #[test]
    fn dbm_conversion() {
        assert!((dbm_to_watts(-70.0) - 1e-10).abs() < 1e-22);
        assert!((dbm_to_watts(0.0) - 1e-3).abs() < 1e-15);
    }
}
