//! JSON report schemas. Field order is fixed by the struct definitions and
//! every float goes through the 12-digit formatter, keeping reports
//! byte-stable across runs.

use crate::jsonfmt::J;
use serde::Serialize;
use std::collections::BTreeMap;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Serialize)]
pub struct ModesReport {
    pub schema_version: u32,
    pub fsr_mean_hz: J,
    pub modes: Vec<ModeEntry>,
}

#[derive(Debug, Serialize)]
pub struct ModeEntry {
    pub n: i64,
    pub f_hz: J,
    pub delta_d_m: Option<J>,
    pub eta: Option<J>,
    pub xi: Option<J>,
}

#[derive(Debug, Serialize)]
pub struct ParticipationReport {
    pub schema_version: u32,
    pub modes: Vec<ParticipationEntry>,
}

#[derive(Debug, Serialize)]
pub struct ParticipationEntry {
    pub n: i64,
    pub f_hz: J,
    pub p_pot: BTreeMap<String, J>,
    pub p_kin: BTreeMap<String, J>,
    pub p_tot: BTreeMap<String, J>,
}

#[derive(Debug, Serialize)]
pub struct BudgetReport {
    pub schema_version: u32,
    pub modes: Vec<BudgetEntry>,
}

#[derive(Debug, Serialize)]
pub struct BudgetEntry {
    pub n: i64,
    pub f_hz: J,
    pub q_inv: ChannelBreakdown,
    pub per_layer: Vec<LayerBreakdown>,
}

#[derive(Debug, Serialize)]
pub struct ChannelBreakdown {
    pub scatter: J,
    pub absorption: J,
    pub tls: J,
    pub diffraction: J,
    pub phonon_phonon: J,
    pub external: J,
    pub total: J,
}

#[derive(Debug, Serialize)]
pub struct LayerBreakdown {
    pub layer: String,
    pub scatter: J,
    pub absorption: J,
    pub tls: J,
}

#[derive(Debug, Serialize)]
pub struct S11Report {
    pub schema_version: u32,
    pub fits: Vec<S11Entry>,
}

#[derive(Debug, Serialize)]
pub struct S11Entry {
    pub file: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub fit: Option<S11Fit>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Serialize)]
pub struct S11Fit {
    pub f_n_hz: J,
    pub q_i: J,
    pub q_e: J,
    pub phi_rad: J,
    pub sigma: S11Sigma,
    pub background: BackgroundOut,
    pub residual_rms: J,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub phonon_number: Option<J>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

#[derive(Debug, Serialize)]
pub struct S11Sigma {
    pub f_n_hz: J,
    pub q_i: J,
    pub q_e: J,
    pub phi_rad: J,
}

#[derive(Debug, Serialize)]
pub struct BackgroundOut {
    pub amp_const: J,
    pub amp_linear: J,
    pub amp_quadratic: J,
    pub phase_const: J,
    pub phase_linear: J,
    pub phase_quadratic: J,
}

#[derive(Debug, Serialize)]
pub struct StackFitReport {
    pub schema_version: u32,
    pub params: ReducedParamsOut,
    pub sigma: ReducedParamsOut,
    pub epsilon_hz2: J,
    pub matched_modes: usize,
    pub evaluations: usize,
}

#[derive(Debug, Serialize)]
pub struct ReducedParamsOut {
    pub beta_p_s: J,
    pub beta_d_s: J,
    pub beta_b_s: J,
    pub zp_over_zd: J,
    pub zb_over_zd: J,
    pub psi_hz: J,
}

#[derive(Debug, Serialize)]
pub struct LossFitReport {
    pub schema_version: u32,
    pub layers: Vec<LossTangentOut>,
    pub condition_number: J,
    pub residual_rms: J,
}

#[derive(Debug, Serialize)]
pub struct LossTangentOut {
    pub layer: String,
    pub q_mech_inv: J,
    pub sigma: J,
    pub min_q_mech: Option<J>,
}

#[derive(Debug, Serialize)]
pub struct TlsFitReport {
    pub schema_version: u32,
    pub layers: Vec<TlsTangentOut>,
    pub condition_number: J,
    pub residual_rms: J,
}

#[derive(Debug, Serialize)]
pub struct TlsTangentOut {
    pub layer: String,
    pub q_tls_inv: J,
    pub sigma: J,
    pub pinned: bool,
}

#[derive(Debug, Serialize)]
pub struct StabilityReport {
    pub schema_version: u32,
    pub samples: usize,
    pub dt_s: J,
    pub psd: PsdOut,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub psd_fit: Option<PowerLawOut>,
    pub allan: Vec<AllanOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub allan_fit: Option<PowerLawOut>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tcf: Option<TcfOut>,
}

#[derive(Debug, Serialize)]
pub struct PsdOut {
    pub frequency_hz: Vec<J>,
    pub density_per_hz: Vec<J>,
}

#[derive(Debug, Serialize)]
pub struct PowerLawOut {
    pub amplitude: J,
    pub exponent: J,
    pub sigma_exponent: J,
}

#[derive(Debug, Serialize)]
pub struct AllanOut {
    pub tau_s: J,
    pub sigma: J,
}

#[derive(Debug, Serialize)]
pub struct TcfOut {
    pub points: Vec<TcfPoint>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub power_law: Option<PowerLawOut>,
}

#[derive(Debug, Serialize)]
pub struct TcfPoint {
    pub temperature_k: J,
    pub tcf_per_k: J,
}

#[derive(Debug, Serialize)]
pub struct CqadReport {
    pub c_t1: J,
    pub c_t2: J,
    pub inverse_purcell_rate_hz: J,
    pub q_i_from_t1_phonon: J,
}

#[derive(Debug, Serialize)]
pub struct FullReport {
    pub schema_version: u32,
    pub fsr_mean_hz: J,
    pub modes: Vec<ModeEntry>,
    pub participation: Vec<ParticipationEntry>,
    pub budget: Vec<BudgetEntry>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s11_fits: Option<Vec<S11Entry>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stack_fit: Option<StackFitReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub stability: Option<StabilityReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cqad: Option<CqadReport>,
}
