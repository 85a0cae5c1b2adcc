//! `hbar` — batch pipeline for layered bulk-acoustic-resonator analysis:
//! mode spectra, participation ratios, loss budgets, reflection-trace and
//! mode-comb fitting, loss-tangent extraction, and frequency-stability
//! statistics. Exit codes: 0 success, 2 invalid input, 3 fit failure.

mod config;
mod jsonfmt;
mod report;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use config::{dbm_to_watts, ProjectConfig};
use hbar_core::loss::{self, Environment};
use hbar_core::participation::participation_ratios;
use hbar_core::resonance::{fit_resonance, phonon_number, ResonanceError, ResonanceFit};
use hbar_core::stability::{
    allan_deviation, default_tau_grid, fit_power_law, psd, tcf, FrequencySeries, Window,
};
use hbar_core::stack::{ModeSolution, StackModel};
use hbar_core::stack_fit::{
    fit_absorption_tangents, fit_stack, fit_tls_tangents, FitConstraints, LossDatum, ModeComb,
    ReducedStackParams,
};
use hbar_core::{cqad, Real};
use jsonfmt::{write_json, J};
use rayon::prelude::*;
use report::*;
use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const EXIT_INVALID: u8 = 2;
const EXIT_FIT: u8 = 3;

#[derive(Parser)]
#[command(
    name = "hbar",
    about = "Acoustic transmission-line modeling and spectroscopy fitting for layered bulk resonators",
    version
)]
struct Cli {
    /// Worker threads for batch fits (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct FreqWindow {
    /// Lower edge of the frequency window, Hz.
    #[arg(long)]
    fmin: Real,
    /// Upper edge of the frequency window, Hz.
    #[arg(long)]
    fmax: Real,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the longitudinal mode spectrum of the configured stack.
    Modes {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        window: FreqWindow,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-layer energy participation ratios over a frequency window.
    Participation {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        window: FreqWindow,
        #[arg(long)]
        out: PathBuf,
    },
    /// Channel-by-channel loss budget per mode.
    Budget {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        window: FreqWindow,
        #[arg(long)]
        out: PathBuf,
        /// Override the configured bath temperature, K.
        #[arg(long)]
        temperature_k: Option<Real>,
        /// Override the configured mean phonon occupation.
        #[arg(long)]
        phonon_number: Option<Real>,
    },
    /// Fit reflection traces (CSV `freq_hz,re,im`); batch-safe.
    FitS11 {
        /// One or more trace files.
        traces: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        /// Drive power for phonon-number estimates, dBm at the coupling port.
        #[arg(long, allow_negative_numbers = true)]
        power_dbm: Option<Real>,
    },
    /// Fit the reduced stack parameters to a measured mode comb
    /// (CSV `f_hz[,q_i[,q_i_sigma]]`).
    FitStack {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        comb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write a stack configuration rebuilt from the fitted
        /// parameters under the configured velocities and densities.
        #[arg(long)]
        emit_config: Option<PathBuf>,
    },
    /// Extract per-layer absorption tangents from measured quality factors.
    FitLoss {
        #[arg(long)]
        config: PathBuf,
        /// Comb CSV with a `q_i` column.
        #[arg(long)]
        comb: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Skip subtracting the modeled scattering loss first.
        #[arg(long)]
        no_scattering: bool,
    },
    /// Extract per-layer TLS tangents from measured per-mode tangents
    /// (CSV `f_hz,q_tls` or `f_hz,q_tls_inv`).
    FitTls {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Fit the substrate tangent too instead of pinning it to zero.
        #[arg(long)]
        free_bulk: bool,
    },
    /// Frequency-stability statistics of a time series
    /// (CSV `t_s,df_over_f` or `t_s,f_hz`).
    Stability {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Reference frequency when the series column is `f_hz`.
        #[arg(long)]
        ref_freq_hz: Option<Real>,
        /// Periodogram taper.
        #[arg(long, default_value = "hann")]
        window: String,
        /// Optional temperature sweep (CSV `temperature_k,f_hz`) for the
        /// temperature coefficient of frequency.
        #[arg(long)]
        tcf_data: Option<PathBuf>,
    },
    /// Combined sample report: spectrum, participation, budget, optional
    /// fits, stability, and qubit figures of merit.
    Report {
        #[arg(long)]
        config: PathBuf,
        #[command(flatten)]
        window: FreqWindow,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        comb: Option<PathBuf>,
        #[arg(long)]
        traces: Vec<PathBuf>,
        #[arg(long)]
        series: Option<PathBuf>,
        #[arg(long, allow_negative_numbers = true)]
        power_dbm: Option<Real>,
        #[arg(long)]
        ref_freq_hz: Option<Real>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot size worker pool: {e}");
            return ExitCode::from(EXIT_INVALID);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

/// Fit failures exit 3; everything else is an input/validation problem (2).
fn exit_code_for(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(r) = cause.downcast_ref::<ResonanceError>() {
            if matches!(
                r,
                ResonanceError::NoResonance { .. } | ResonanceError::NonConvergence { .. }
            ) {
                return EXIT_FIT;
            }
        }
        if let Some(s) = cause.downcast_ref::<hbar_core::stack_fit::StackFitError>() {
            if matches!(
                s,
                hbar_core::stack_fit::StackFitError::NonConvergence
                    | hbar_core::stack_fit::StackFitError::NoOverlap
            ) {
                return EXIT_FIT;
            }
        }
    }
    EXIT_INVALID
}

fn run(command: Command) -> Result<()> {
    match command {
        Command::Modes { config, window, out } => {
            let (stack, modes) = solve_window(&config, &window)?;
            let report = ModesReport {
                schema_version: SCHEMA_VERSION,
                fsr_mean_hz: J(stack.fsr_mean()),
                modes: modes.iter().map(mode_entry).collect(),
            };
            write_json(&out, &report)
        }
        Command::Participation { config, window, out } => {
            let (stack, modes) = solve_window(&config, &window)?;
            let report = ParticipationReport {
                schema_version: SCHEMA_VERSION,
                modes: modes
                    .iter()
                    .map(|m| participation_entry(&stack, m))
                    .collect::<Result<_>>()?,
            };
            write_json(&out, &report)
        }
        Command::Budget { config, window, out, temperature_k, phonon_number } => {
            let cfg = ProjectConfig::load(&config)?;
            let stack = cfg.stack_model()?;
            let modes = stack.solve_modes(window.fmin, window.fmax)?;
            let geometry = cfg.dome_geometry(&stack)?;
            let thermal = cfg.thermal_params();
            let mut env = cfg.environment();
            if let Some(t) = temperature_k {
                env.temperature = t;
            }
            if let Some(n) = phonon_number {
                env.phonon_number = n;
            }
            let n_c = cfg.tls.as_ref().map(|t| t.critical_phonon_number);
            let consts = cfg.physical_constants();
            let report = BudgetReport {
                schema_version: SCHEMA_VERSION,
                modes: modes
                    .iter()
                    .map(|m| {
                        budget_entry(&stack, m, geometry.as_ref(), thermal.as_ref(), n_c, &env, &consts)
                    })
                    .collect::<Result<_>>()?,
            };
            write_json(&out, &report)
        }
        Command::FitS11 { traces, out, power_dbm } => {
            if traces.is_empty() {
                bail!("no trace files given");
            }
            let fits = fit_traces(&traces, power_dbm);
            let any_ok = fits.iter().any(|f| f.fit.is_some());
            let report = S11Report { schema_version: SCHEMA_VERSION, fits };
            write_json(&out, &report)?;
            if !any_ok {
                bail!(ResonanceError::NonConvergence {
                    f_n: f64::NAN,
                    q_i: f64::NAN,
                    q_e: f64::NAN,
                    phi: f64::NAN,
                });
            }
            Ok(())
        }
        Command::FitStack { config, comb, out, emit_config } => {
            let cfg = ProjectConfig::load(&config)?;
            let stack = cfg.stack_model()?;
            let measured = read_comb(&comb)?;
            let init = ReducedStackParams::from_stack(&stack);
            let fit = fit_stack(&measured, &init, &FitConstraints::default())?;
            let report = StackFitReport {
                schema_version: SCHEMA_VERSION,
                params: reduced_out(&fit.params),
                sigma: ReducedParamsOut {
                    beta_p_s: J(fit.sigma[0]),
                    beta_d_s: J(fit.sigma[1]),
                    beta_b_s: J(fit.sigma[2]),
                    zp_over_zd: J(fit.sigma[3]),
                    zb_over_zd: J(fit.sigma[4]),
                    psi_hz: J(fit.sigma[5]),
                },
                epsilon_hz2: J(fit.epsilon),
                matched_modes: fit.matched,
                evaluations: fit.evaluations,
            };
            write_json(&out, &report)?;
            if let Some(path) = emit_config {
                emit_fitted_config(&cfg, &fit.params, &path)?;
            }
            Ok(())
        }
        Command::FitLoss { config, comb, out, no_scattering } => {
            let cfg = ProjectConfig::load(&config)?;
            let stack = cfg.stack_model()?;
            let measured = read_comb(&comb)?;
            let (data, scattering) = loss_rows(&stack, &measured, !no_scattering)?;
            let fit = fit_absorption_tangents(&data, &scattering)?;
            let report = LossFitReport {
                schema_version: SCHEMA_VERSION,
                layers: stack
                    .layers()
                    .iter()
                    .enumerate()
                    .map(|(i, l)| LossTangentOut {
                        layer: l.name.clone(),
                        q_mech_inv: J(fit.tangents[i]),
                        sigma: J(fit.sigma[i]),
                        min_q_mech: if fit.min_q[i].is_finite() {
                            Some(J(fit.min_q[i]))
                        } else {
                            None
                        },
                    })
                    .collect(),
                condition_number: J(fit.condition),
                residual_rms: J(fit.residual_rms),
            };
            write_json(&out, &report)
        }
        Command::FitTls { config, data, out, free_bulk } => {
            let cfg = ProjectConfig::load(&config)?;
            let stack = cfg.stack_model()?;
            let file = std::fs::File::open(&data)
                .with_context(|| format!("cannot read `{}`", data.display()))?;
            let measured = hbar_core::io::read_tls_csv(file)?;
            let rows = tls_rows(&stack, &measured)?;
            let pinned: Vec<usize> = if free_bulk {
                Vec::new()
            } else {
                vec![stack.layers().len() - 1]
            };
            let fit = fit_tls_tangents(&rows, &pinned)?;
            let report = TlsFitReport {
                schema_version: SCHEMA_VERSION,
                layers: stack
                    .layers()
                    .iter()
                    .enumerate()
                    .map(|(i, l)| TlsTangentOut {
                        layer: l.name.clone(),
                        q_tls_inv: J(fit.tangents[i]),
                        sigma: J(fit.sigma[i]),
                        pinned: pinned.contains(&i),
                    })
                    .collect(),
                condition_number: J(fit.condition),
                residual_rms: J(fit.residual_rms),
            };
            write_json(&out, &report)
        }
        Command::Stability { data, out, ref_freq_hz, window, tcf_data } => {
            let report = stability_report(&data, ref_freq_hz, &window, tcf_data.as_deref())?;
            write_json(&out, &report)
        }
        Command::Report {
            config,
            window,
            out,
            comb,
            traces,
            series,
            power_dbm,
            ref_freq_hz,
        } => {
            let cfg = ProjectConfig::load(&config)?;
            let stack = cfg.stack_model()?;
            let modes = stack.solve_modes(window.fmin, window.fmax)?;
            let geometry = cfg.dome_geometry(&stack)?;
            let thermal = cfg.thermal_params();
            let env = cfg.environment();
            let n_c = cfg.tls.as_ref().map(|t| t.critical_phonon_number);

            let consts = cfg.physical_constants();
            let participation = modes
                .iter()
                .map(|m| participation_entry(&stack, m))
                .collect::<Result<_>>()?;
            let budget = modes
                .iter()
                .map(|m| {
                    budget_entry(&stack, m, geometry.as_ref(), thermal.as_ref(), n_c, &env, &consts)
                })
                .collect::<Result<_>>()?;

            let s11_fits = if traces.is_empty() {
                None
            } else {
                Some(fit_traces(
                    &traces,
                    power_dbm.or(cfg.environment.as_ref().and_then(|e| e.input_power_dbm)),
                ))
            };

            let stack_fit_report = match comb {
                Some(path) => {
                    let measured = read_comb(&path)?;
                    let init = ReducedStackParams::from_stack(&stack);
                    let fit = fit_stack(&measured, &init, &FitConstraints::default())?;
                    Some(StackFitReport {
                        schema_version: SCHEMA_VERSION,
                        params: reduced_out(&fit.params),
                        sigma: ReducedParamsOut {
                            beta_p_s: J(fit.sigma[0]),
                            beta_d_s: J(fit.sigma[1]),
                            beta_b_s: J(fit.sigma[2]),
                            zp_over_zd: J(fit.sigma[3]),
                            zb_over_zd: J(fit.sigma[4]),
                            psi_hz: J(fit.sigma[5]),
                        },
                        epsilon_hz2: J(fit.epsilon),
                        matched_modes: fit.matched,
                        evaluations: fit.evaluations,
                    })
                }
                None => None,
            };

            let stability = match series {
                Some(path) => Some(stability_report(&path, ref_freq_hz, "hann", None)?),
                None => None,
            };

            let cqad_report = cfg.cqad.as_ref().map(|c| {
                let params = cqad::CqadParams {
                    g0: cqad::hz_to_angular(c.g0_2pi_khz * 1e3),
                    detuning: cqad::hz_to_angular(c.detuning_2pi_mhz * 1e6),
                    kappa_qubit: cqad::hz_to_angular(c.kappa_qubit_2pi_khz * 1e3),
                    t1_qubit: c.t1_qubit_us * 1e-6,
                    t2_qubit: c.t2_qubit_us * 1e-6,
                    t1_phonon: c.t1_phonon_us * 1e-6,
                    t2_phonon: c.t2_phonon_us * 1e-6,
                };
                let (c_t1, c_t2) = cqad::cooperativities(&params);
                let rate = cqad::inverse_purcell(params.g0, params.detuning, params.kappa_qubit)
                    .map(cqad::angular_to_hz)
                    .unwrap_or(f64::NAN);
                let f_mid = modes
                    .get(modes.len() / 2)
                    .map(|m| m.frequency)
                    .unwrap_or(5e9);
                CqadReport {
                    c_t1: J(c_t1),
                    c_t2: J(c_t2),
                    inverse_purcell_rate_hz: J(rate),
                    q_i_from_t1_phonon: J(cqad::q_from_t1(f_mid, params.t1_phonon)),
                }
            });

            let report = FullReport {
                schema_version: SCHEMA_VERSION,
                fsr_mean_hz: J(stack.fsr_mean()),
                modes: modes.iter().map(mode_entry).collect(),
                participation,
                budget,
                s11_fits,
                stack_fit: stack_fit_report,
                stability,
                cqad: cqad_report,
            };
            write_json(&out, &report)
        }
    }
}

fn solve_window(config: &Path, window: &FreqWindow) -> Result<(StackModel<Real>, Vec<ModeSolution<Real>>)> {
    let cfg = ProjectConfig::load(config)?;
    let stack = cfg.stack_model()?;
    let modes = stack.solve_modes(window.fmin, window.fmax)?;
    Ok((stack, modes))
}

fn mode_entry(m: &ModeSolution<Real>) -> ModeEntry {
    ModeEntry {
        n: m.index,
        f_hz: J(m.frequency),
        delta_d_m: m.defect_offset.map(J),
        eta: m.amplitude_ratio.map(J),
        xi: m.piezo_defect_ratio.map(J),
    }
}

fn participation_entry(
    stack: &StackModel<Real>,
    m: &ModeSolution<Real>,
) -> Result<ParticipationEntry> {
    let p = participation_ratios(stack, m)?;
    let named = |values: &[Real]| -> BTreeMap<String, J> {
        stack
            .layers()
            .iter()
            .zip(values)
            .map(|(l, &v)| (l.name.clone(), J(v)))
            .collect()
    };
    Ok(ParticipationEntry {
        n: m.index,
        f_hz: J(m.frequency),
        p_pot: named(&p.potential),
        p_kin: named(&p.kinetic),
        p_tot: named(&p.total),
    })
}

#[allow(clippy::too_many_arguments)]
fn budget_entry(
    stack: &StackModel<Real>,
    m: &ModeSolution<Real>,
    geometry: Option<&loss::DomeGeometry<Real>>,
    thermal: Option<&loss::ThermalLossParams<Real>>,
    n_c: Option<Real>,
    env: &Environment<Real>,
    consts: &hbar_core::constants::PhysicalConstants<Real>,
) -> Result<BudgetEntry> {
    let p = participation_ratios(stack, m)?;
    let budget = loss::compose_budget_with(stack, m, &p, geometry, thermal, n_c, env, consts);
    Ok(BudgetEntry {
        n: m.index,
        f_hz: J(m.frequency),
        q_inv: ChannelBreakdown {
            scatter: J(budget.scatter),
            absorption: J(budget.absorption),
            tls: J(budget.tls),
            diffraction: J(budget.diffraction),
            phonon_phonon: J(budget.phonon_phonon),
            external: J(budget.external),
            total: J(budget.total),
        },
        per_layer: budget
            .per_layer
            .iter()
            .map(|l| LayerBreakdown {
                layer: l.name.clone(),
                scatter: J(l.scatter_q_inv),
                absorption: J(l.absorption_q_inv),
                tls: J(l.tls_q_inv),
            })
            .collect(),
    })
}

fn fit_traces(paths: &[PathBuf], power_dbm: Option<Real>) -> Vec<S11Entry> {
    let power = power_dbm.map(dbm_to_watts);
    paths
        .par_iter()
        .map(|path| match fit_one_trace(path, power) {
            Ok(fit) => S11Entry { file: path.display().to_string(), fit: Some(fit), error: None },
            Err(e) => {
                log::warn!("{}: {e:#}", path.display());
                S11Entry {
                    file: path.display().to_string(),
                    fit: None,
                    error: Some(format!("{e:#}")),
                }
            }
        })
        .collect()
}

fn fit_one_trace(path: &Path, power_w: Option<Real>) -> Result<S11Fit> {
    // optional sidecar `<stem>.meta.toml` with acquisition metadata
    #[derive(serde::Deserialize, Default)]
    #[serde(deny_unknown_fields)]
    struct Sidecar {
        power_dbm: Option<Real>,
        #[allow(dead_code)]
        temperature_k: Option<Real>,
        #[allow(dead_code)]
        mode_index: Option<i64>,
    }
    let sidecar_path = path.with_extension("meta.toml");
    let sidecar: Sidecar = if sidecar_path.exists() {
        toml::from_str(&std::fs::read_to_string(&sidecar_path)?)
            .with_context(|| format!("sidecar `{}`", sidecar_path.display()))?
    } else {
        Sidecar::default()
    };
    let power = sidecar.power_dbm.map(dbm_to_watts).or(power_w);

    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot read trace `{}`", path.display()))?;
    let trace = hbar_core::io::read_trace_csv(file, power)?;
    let fit: ResonanceFit<Real> = fit_resonance(&trace)?;
    let n_bar = power.map(|p| phonon_number(&fit, p));
    Ok(S11Fit {
        f_n_hz: J(fit.f_n),
        q_i: J(fit.q_i),
        q_e: J(fit.q_e),
        phi_rad: J(fit.phi),
        sigma: S11Sigma {
            f_n_hz: J(fit.sigma.f_n),
            q_i: J(fit.sigma.q_i),
            q_e: J(fit.sigma.q_e),
            phi_rad: J(fit.sigma.phi),
        },
        background: BackgroundOut {
            amp_const: J(fit.background.amp_const),
            amp_linear: J(fit.background.amp_linear),
            amp_quadratic: J(fit.background.amp_quadratic),
            phase_const: J(fit.background.phase_const),
            phase_linear: J(fit.background.phase_linear),
            phase_quadratic: J(fit.background.phase_quadratic),
        },
        residual_rms: J(fit.residual_rms),
        phonon_number: n_bar.map(J),
        warnings: fit.warnings,
    })
}

fn read_comb(path: &Path) -> Result<ModeComb<Real>> {
    let file = std::fs::File::open(path)
        .with_context(|| format!("cannot read comb `{}`", path.display()))?;
    Ok(hbar_core::io::read_comb_csv(file)?)
}

fn reduced_out(p: &ReducedStackParams<Real>) -> ReducedParamsOut {
    ReducedParamsOut {
        beta_p_s: J(p.beta_p),
        beta_d_s: J(p.beta_d),
        beta_b_s: J(p.beta_b),
        zp_over_zd: J(p.zp_over_zd),
        zb_over_zd: J(p.zb_over_zd),
        psi_hz: J(p.psi),
    }
}

/// Regenerate a stack configuration from fitted reduced parameters, keeping
/// the configured velocities and material densities (the comb constrains the
/// reduced parameters only; expansion needs those assumptions).
fn emit_fitted_config(
    cfg: &ProjectConfig,
    fitted: &ReducedStackParams<Real>,
    path: &Path,
) -> Result<()> {
    let mut out = cfg.clone();
    if out.stack.layers.len() != 3 {
        bail!("--emit-config requires a three-layer stack configuration");
    }
    let betas = [fitted.beta_p, fitted.beta_d, fitted.beta_b];
    for (layer, beta) in out.stack.layers.iter_mut().zip(betas) {
        layer.thickness_um = Some(beta * layer.velocity_km_s * 1e3 * 1e6);
    }
    // interlayer density from the fitted bulk-to-interlayer impedance ratio
    let bulk = &out.stack.layers[2];
    let z_b = bulk.density_g_cm3 * 1e3 * bulk.velocity_km_s * 1e3;
    let v_d = out.stack.layers[1].velocity_km_s * 1e3;
    out.stack.layers[1].density_g_cm3 = z_b / fitted.zb_over_zd / v_d / 1e3;
    out.stack.gouy_shift_hz = Some(fitted.psi);

    let text = toml::to_string_pretty(&out).context("serializing fitted config")?;
    jsonfmt::write_atomic(path, text.as_bytes())
}

/// Solve model modes near each measured comb frequency and pair them with
/// participation records for the loss regressions.
fn matched_rows(
    stack: &StackModel<Real>,
    measured: &ModeComb<Real>,
) -> Result<Vec<(ModeSolution<Real>, Real)>> {
    let freqs = measured.frequencies();
    let lo = freqs[0] - 2.0 * measured.fsr_mean;
    let hi = freqs[freqs.len() - 1] + 2.0 * measured.fsr_mean;
    let modes = stack.solve_modes(lo.max(measured.fsr_mean * 0.5), hi)?;
    let mut rows = Vec::new();
    for (cm, &f) in measured.modes.iter().zip(&freqs) {
        let Some(q_i) = cm.q_i else { continue };
        let nearest = modes
            .iter()
            .min_by(|a, b| {
                (a.frequency - f)
                    .abs()
                    .partial_cmp(&(b.frequency - f).abs())
                    .unwrap()
            })
            .ok_or_else(|| anyhow!("no model modes in the measured band"))?;
        if (nearest.frequency - f).abs() > measured.fsr_mean * 0.5 {
            log::warn!("measured mode at {f} Hz has no model mode within half an FSR");
            continue;
        }
        rows.push((nearest.clone(), 1.0 / q_i));
    }
    if rows.is_empty() {
        bail!("comb carries no usable q_i entries");
    }
    Ok(rows)
}

fn loss_rows(
    stack: &StackModel<Real>,
    measured: &ModeComb<Real>,
    subtract_scattering: bool,
) -> Result<(Vec<LossDatum<Real>>, Vec<Real>)> {
    let mut data = Vec::new();
    let mut scattering = Vec::new();
    for (mode, q_inv) in matched_rows(stack, measured)? {
        let p = participation_ratios(stack, &mode)?;
        let s = if subtract_scattering {
            loss::q_scatter(stack, &mode, &p).total_q_inv
        } else {
            0.0
        };
        data.push(LossDatum { mode, participation: p, q_inv });
        scattering.push(s);
    }
    Ok((data, scattering))
}

fn tls_rows(
    stack: &StackModel<Real>,
    measured: &[(Real, Real)],
) -> Result<Vec<(Vec<Real>, Real)>> {
    let comb = ModeComb::new(
        measured
            .iter()
            .map(|&(f, _)| hbar_core::stack_fit::CombMode {
                frequency: f,
                q_i: None,
                q_i_sigma: None,
            })
            .collect(),
    )?;
    let freqs = comb.frequencies();
    let lo = (freqs[0] - 2.0 * comb.fsr_mean).max(comb.fsr_mean * 0.5);
    let hi = freqs[freqs.len() - 1] + 2.0 * comb.fsr_mean;
    let modes = stack.solve_modes(lo, hi)?;
    let mut rows = Vec::new();
    for &(f, q_inv) in measured {
        let Some(nearest) = modes.iter().min_by(|a, b| {
            (a.frequency - f)
                .abs()
                .partial_cmp(&(b.frequency - f).abs())
                .unwrap()
        }) else {
            continue;
        };
        if (nearest.frequency - f).abs() > comb.fsr_mean * 0.5 {
            log::warn!("tls point at {f} Hz has no model mode within half an FSR");
            continue;
        }
        let p = participation_ratios(stack, nearest)?;
        rows.push((p.potential, q_inv));
    }
    if rows.is_empty() {
        bail!("no tls data points matched model modes");
    }
    Ok(rows)
}

fn stability_report(
    data: &Path,
    ref_freq_hz: Option<Real>,
    window: &str,
    tcf_data: Option<&Path>,
) -> Result<StabilityReport> {
    let file = std::fs::File::open(data)
        .with_context(|| format!("cannot read series `{}`", data.display()))?;
    let series: FrequencySeries<Real> = hbar_core::io::read_series_csv(file, ref_freq_hz)?;
    let win = match window {
        "hann" => Window::Hann,
        "rect" | "rectangular" => Window::Rectangular,
        other => bail!("unknown PSD window `{other}` (use `hann` or `rect`)"),
    };
    let (freqs, density) = psd(&series, win);
    let taus = default_tau_grid(&series);
    let allan = allan_deviation(&series, &taus);
    for skipped in &allan.skipped {
        log::warn!("allan: tau {skipped} s exceeds a third of the record; skipped");
    }

    let psd_fit = {
        let pts: Vec<(Real, Real)> = freqs
            .iter()
            .zip(&density)
            .skip(1)
            .filter(|&(_, &d)| d > 0.0)
            .map(|(&f, &d)| (f, d))
            .collect();
        if pts.len() >= 4 {
            let xs: Vec<Real> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<Real> = pts.iter().map(|p| p.1).collect();
            fit_power_law(&xs, &ys).ok()
        } else {
            None
        }
    };
    let allan_fit = if allan.points.len() >= 4 {
        let xs: Vec<Real> = allan.points.iter().map(|p| p.tau).collect();
        let ys: Vec<Real> = allan.points.iter().map(|p| p.sigma).collect();
        fit_power_law(&xs, &ys).ok()
    } else {
        None
    };

    let tcf_out = match tcf_data {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("cannot read `{}`", path.display()))?;
            let mut samples = Vec::new();
            for (i, line) in text.lines().enumerate() {
                if i == 0 && line.to_ascii_lowercase().contains("temperature") {
                    continue;
                }
                let mut parts = line.split(',');
                let t: Real = parts
                    .next()
                    .ok_or_else(|| anyhow!("line {i}: missing temperature"))?
                    .trim()
                    .parse()
                    .with_context(|| format!("line {i}"))?;
                let f: Real = parts
                    .next()
                    .ok_or_else(|| anyhow!("line {i}: missing frequency"))?
                    .trim()
                    .parse()
                    .with_context(|| format!("line {i}"))?;
                samples.push((t, f));
            }
            let r = tcf(&samples, true)?;
            Some(TcfOut {
                points: r
                    .tcf
                    .iter()
                    .map(|&(t, v)| TcfPoint { temperature_k: J(t), tcf_per_k: J(v) })
                    .collect(),
                power_law: r.power_law.map(|p| PowerLawOut {
                    amplitude: J(p.amplitude),
                    exponent: J(p.exponent),
                    sigma_exponent: J(p.sigma_exponent),
                }),
            })
        }
        None => None,
    };

    Ok(StabilityReport {
        schema_version: SCHEMA_VERSION,
        samples: series.len(),
        dt_s: J(series.dt()),
        psd: PsdOut {
            frequency_hz: freqs.into_iter().map(J).collect(),
            density_per_hz: density.into_iter().map(J).collect(),
        },
        psd_fit: psd_fit.map(|p| PowerLawOut {
            amplitude: J(p.amplitude),
            exponent: J(p.exponent),
            sigma_exponent: J(p.sigma_exponent),
        }),
        allan: allan
            .points
            .iter()
            .map(|p| AllanOut { tau_s: J(p.tau), sigma: J(p.sigma) })
            .collect(),
        allan_fit: allan_fit.map(|p| PowerLawOut {
            amplitude: J(p.amplitude),
            exponent: J(p.exponent),
            sigma_exponent: J(p.sigma_exponent),
        }),
        tcf: tcf_out,
    })
}
