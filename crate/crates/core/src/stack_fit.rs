//! Fitting measured mode combs to the layered model and extracting per-layer
//! loss tangents from measured quality factors.
//!
//! The characteristic equation only constrains the layer parameters through
//! the one-way transit times β_X = t_X/v_X and two impedance ratios, plus a
//! constant comb offset ψ from the transverse phase — six reduced parameters
//! for a three-layer stack. Measured and model combs are aligned by overtone
//! index (integer division by the mean FSR), which tolerates gaps in either
//! set, and the index-matched squared frequency error is minimized.

use crate::optim::{jacobi_eigen, linear_fit, nelder_mead, nnls, LineFit, NmOptions, OptimError};
use crate::participation::ParticipationRecord;
use crate::scalar::{two_pi, Float};
use crate::stack::{assign_mode_index, Layer, ModeSolution, StackError, StackModel};
use serde::Serialize;
use thiserror::Error;

/// Huber robustification kicks in at this multiple of the median residual.
const HUBER_MEDIAN_MULTIPLE: f64 = 5.0;
/// Local root search around each measured frequency scans this fraction of
/// the mean FSR per step.
const SEED_SCAN_DIVISOR: f64 = 20.0;

#[derive(Debug, Error)]
pub enum StackFitError {
    #[error("mode comb needs at least {need} modes, got {got}")]
    TooFewModes { need: usize, got: usize },
    #[error("no overlapping mode indices between data and model")]
    NoOverlap,
    #[error("comb frequencies must be strictly increasing (violation at mode {0})")]
    NonIncreasing(usize),
    #[error("comb fit did not converge")]
    NonConvergence,
    #[error("participation rows and loss data disagree in length")]
    ShapeMismatch,
    #[error(transparent)]
    Stack(#[from] StackError),
    #[error(transparent)]
    Optim(#[from] OptimError),
}

/// Reduced parameters that fully determine the mode comb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReducedStackParams<F> {
    /// Film transit time β_P = t_P/v_P, s.
    pub beta_p: F,
    /// Interlayer transit time β_D, s.
    pub beta_d: F,
    /// Bulk transit time β_B, s.
    pub beta_b: F,
    /// Impedance ratio Z_P/Z_D.
    pub zp_over_zd: F,
    /// Impedance ratio Z_B/Z_D.
    pub zb_over_zd: F,
    /// Comb offset ψ, Hz.
    pub psi: F,
}

impl<F: Float> ReducedStackParams<F> {
    pub fn from_stack(stack: &StackModel<F>) -> Self {
        let ls = stack.layers();
        match ls.len() {
            3 => Self {
                beta_p: ls[0].transit_time(),
                beta_d: ls[1].transit_time(),
                beta_b: ls[2].transit_time(),
                zp_over_zd: ls[0].impedance() / ls[1].impedance(),
                zb_over_zd: ls[2].impedance() / ls[1].impedance(),
                psi: stack.gouy_shift,
            },
            2 => Self {
                // a vanishing interlayer with matched impedance is inert
                beta_p: ls[0].transit_time(),
                beta_d: F::zero(),
                beta_b: ls[1].transit_time(),
                zp_over_zd: F::one(),
                zb_over_zd: ls[1].impedance() / ls[0].impedance(),
                psi: stack.gouy_shift,
            },
            _ => Self {
                beta_p: ls[0].transit_time(),
                beta_d: F::zero(),
                beta_b: F::zero(),
                zp_over_zd: F::one(),
                zb_over_zd: F::one(),
                psi: stack.gouy_shift,
            },
        }
    }

    /// Characteristic residual at frequency `f` (shares the pole-free form of
    /// the full stack model).
    pub fn residual(&self, f: F) -> F {
        let w = two_pi::<F>() * f;
        crate::stack::residual_three(
            w * self.beta_p,
            w * self.beta_d,
            w * self.beta_b,
            self.zp_over_zd,
            self.zb_over_zd,
        )
    }

    /// Mean FSR implied by the transit times.
    pub fn fsr_mean(&self) -> F {
        (F::c(2.0) * (self.beta_p + self.beta_d + self.beta_b)).recip()
    }

    /// Expand to a thickness/velocity/density stack under assumed velocities
    /// and densities per layer (film, interlayer, bulk). The interlayer
    /// density is rescaled to honor the fitted impedance ratios.
    pub fn expand(
        &self,
        velocities: [F; 3],
        densities: [F; 3],
    ) -> Result<StackModel<F>, StackError> {
        let t = [
            self.beta_p * velocities[0],
            self.beta_d * velocities[1],
            self.beta_b * velocities[2],
        ];
        // honor Z_B/Z_D by deriving the interlayer density from the bulk
        let z_b = densities[2] * velocities[2];
        let rho_d = z_b / self.zb_over_zd / velocities[1];
        let layers = vec![
            Layer::new("piezo", t[0], velocities[0], densities[0])?,
            Layer::new("defect", t[1], velocities[1], rho_d)?,
            Layer::new("bulk", t[2], velocities[2], densities[2])?,
        ];
        StackModel::new(layers, self.psi)
    }

    fn to_array(self) -> [F; 6] {
        [self.beta_p, self.beta_d, self.beta_b, self.zp_over_zd, self.zb_over_zd, self.psi]
    }

    fn from_array(a: [F; 6]) -> Self {
        Self {
            beta_p: a[0],
            beta_d: a[1],
            beta_b: a[2],
            zp_over_zd: a[3],
            zb_over_zd: a[4],
            psi: a[5],
        }
    }
}

/// One measured mode in a comb.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CombMode<F> {
    pub frequency: F,
    pub q_i: Option<F>,
    pub q_i_sigma: Option<F>,
}

/// A measured comb of mode frequencies with the indexing FSR.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeComb<F> {
    pub modes: Vec<CombMode<F>>,
    /// Mean FSR Δ₀ used for index assignment, Hz.
    pub fsr_mean: F,
}

impl<F: Float> ModeComb<F> {
    /// Build a comb, deriving Δ₀ from the median spacing (robust to gaps).
    pub fn new(modes: Vec<CombMode<F>>) -> Result<Self, StackFitError> {
        if modes.len() < 2 {
            return Err(StackFitError::TooFewModes { need: 2, got: modes.len() });
        }
        for i in 1..modes.len() {
            if !(modes[i].frequency > modes[i - 1].frequency) {
                return Err(StackFitError::NonIncreasing(i));
            }
        }
        let mut spacings: Vec<F> =
            modes.windows(2).map(|w| w[1].frequency - w[0].frequency).collect();
        spacings.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        let fsr_mean = spacings[spacings.len() / 2];
        Ok(Self { modes, fsr_mean })
    }

    pub fn with_fsr(modes: Vec<CombMode<F>>, fsr_mean: F) -> Result<Self, StackFitError> {
        let mut comb = Self::new(modes)?;
        comb.fsr_mean = fsr_mean;
        Ok(comb)
    }

    pub fn frequencies(&self) -> Vec<F> {
        self.modes.iter().map(|m| m.frequency).collect()
    }
}

/// Index-matched comb error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchResult<F> {
    /// Robustified squared error ε, Hz².
    pub error: F,
    pub matched: usize,
    pub unmatched: usize,
}

/// Find the model root nearest to `seed` by expanding a bracket search
/// outward, then bisecting.
fn nearest_root<F: Float>(params: &ReducedStackParams<F>, seed: F, fsr: F) -> Option<F> {
    let step = fsr / F::c(SEED_SCAN_DIVISOR);
    let max_k = (SEED_SCAN_DIVISOR * 0.75) as usize;
    let r_seed = params.residual(seed);
    let mut best: Option<F> = None;
    // bisection runs to machine precision: the fit's finite differences
    // would otherwise be dominated by root quantization noise
    let consider = |lo: F, hi: F, r_lo: F, best: &mut Option<F>| {
        let mut lo = lo;
        let mut hi = hi;
        let mut r_lo = r_lo;
        for _ in 0..200 {
            let mid = (lo + hi) * F::c(0.5);
            if mid <= lo || mid >= hi {
                break;
            }
            let r_mid = params.residual(mid);
            if r_mid == F::zero() {
                lo = mid;
                hi = mid;
                break;
            }
            if r_lo * r_mid < F::zero() {
                hi = mid;
            } else {
                lo = mid;
                r_lo = r_mid;
            }
        }
        let root = (lo + hi) * F::c(0.5);
        match best {
            Some(b) if (*b - seed).abs() <= (root - seed).abs() => {}
            _ => *best = Some(root),
        }
    };
    let mut r_lo_prev = r_seed;
    let mut r_hi_prev = r_seed;
    for k in 1..=max_k {
        let lo = seed - F::c(k as f64) * step;
        let hi = seed + F::c(k as f64) * step;
        let r_lo = params.residual(lo);
        let r_hi = params.residual(hi);
        if r_lo * r_lo_prev < F::zero() {
            consider(lo, lo + step, r_lo, &mut best);
        }
        if r_hi_prev * r_hi < F::zero() {
            consider(hi - step, hi, r_hi_prev, &mut best);
        }
        if best.is_some() {
            return best;
        }
        r_lo_prev = r_lo;
        r_hi_prev = r_hi;
    }
    None
}

/// Index-matched comb error ε between a measured comb and the model comb.
///
/// For every measured frequency a model root is solved nearby (seeded at the
/// measured value), both are detrended against `n·Δ₀`, and
/// `((f_n − nΔ₀) − ψ − (f'_m − mΔ₀))²` is accumulated over matching indices
/// with Huber weighting at five times the median residual. Modes with no
/// index match are only counted.
pub fn matching_error<F: Float>(
    measured: &ModeComb<F>,
    params: &ReducedStackParams<F>,
) -> Result<MatchResult<F>, StackFitError> {
    let (residuals, unmatched) = comb_residuals(measured, params)?;
    let kept: Vec<F> = residuals.into_iter().flatten().collect();
    if kept.is_empty() {
        return Err(StackFitError::NoOverlap);
    }
    let delta = huber_threshold(&kept);
    let error = kept
        .iter()
        .map(|&r| {
            let a = r.abs();
            if delta > F::zero() && a > delta {
                delta * (F::c(2.0) * a - delta)
            } else {
                r * r
            }
        })
        .fold(F::zero(), |acc, v| acc + v);
    Ok(MatchResult { error, matched: kept.len(), unmatched })
}

/// Per-measured-mode detrended frequency residuals; `None` marks modes
/// without an index match.
fn comb_residuals<F: Float>(
    measured: &ModeComb<F>,
    params: &ReducedStackParams<F>,
) -> Result<(Vec<Option<F>>, usize), StackFitError> {
    if measured.modes.len() < 5 {
        return Err(StackFitError::TooFewModes { need: 5, got: measured.modes.len() });
    }
    let d0 = measured.fsr_mean;
    let freqs = measured.frequencies();
    let meas_idx = assign_mode_index(&freqs, d0);

    let mut residuals: Vec<Option<F>> = Vec::with_capacity(freqs.len());
    let mut unmatched = 0usize;
    for (&f_n, &n) in freqs.iter().zip(&meas_idx) {
        let Some(root) = nearest_root(params, f_n - params.psi, d0) else {
            unmatched += 1;
            residuals.push(None);
            continue;
        };
        let m = assign_mode_index(&[root], d0)[0];
        if m != n {
            unmatched += 1;
            residuals.push(None);
            continue;
        }
        let nf = F::c(n as f64);
        residuals.push(Some((f_n - nf * d0) - params.psi - (root - nf * d0)));
    }
    Ok((residuals, unmatched))
}

fn huber_threshold<F: Float>(residuals: &[F]) -> F {
    let mut sorted: Vec<F> = residuals.iter().map(|r| r.abs()).collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    F::c(HUBER_MEDIAN_MULTIPLE) * sorted[sorted.len() / 2]
}

/// Optional pins fixing individual reduced parameters during the fit
/// (order: β_P, β_D, β_B, Z_P/Z_D, Z_B/Z_D, ψ).
#[derive(Debug, Clone, Copy, Default)]
pub struct FitConstraints<F> {
    pub pinned: [Option<F>; 6],
}

#[derive(Debug, Clone, Serialize)]
pub struct StackFitResult<F> {
    pub params: ReducedStackParams<F>,
    /// 1σ per parameter from the local quadratic model of ε; infinite along
    /// degenerate directions.
    pub sigma: [F; 6],
    pub epsilon: F,
    pub matched: usize,
    pub evaluations: usize,
}

/// Fit the six reduced parameters to a measured comb.
///
/// Restart strategy: the raw initialization plus one in which the transit
/// times are rescaled so the implied mean FSR matches the measured comb (the
/// comb tilt is by far the stiffest direction, and rescaling removes the
/// index-aliasing local minima it causes). Each restart runs a simplex
/// minimization of ε with shape-aware initial steps; the best result is
/// polished with successively smaller simplices.
pub fn fit_stack<F: Float>(
    measured: &ModeComb<F>,
    init: &ReducedStackParams<F>,
    constraints: &FitConstraints<F>,
) -> Result<StackFitResult<F>, StackFitError> {
    if measured.modes.len() < 5 {
        return Err(StackFitError::TooFewModes { need: 5, got: measured.modes.len() });
    }
    let freqs = measured.frequencies();
    let span_mean_fsr =
        (freqs[freqs.len() - 1] - freqs[0]) / F::c((freqs.len() - 1) as f64);

    let apply_pins = |mut a: [F; 6]| -> [F; 6] {
        for (v, pin) in a.iter_mut().zip(&constraints.pinned) {
            if let Some(p) = pin {
                *v = *p;
            }
        }
        a
    };

    let objective = |a: &[F]| -> F {
        let arr = apply_pins([a[0], a[1], a[2], a[3], a[4], a[5]]);
        let p = ReducedStackParams::from_array(arr);
        if p.beta_p <= F::zero()
            || p.beta_d < F::zero()
            || p.beta_b <= F::zero()
            || p.zp_over_zd <= F::zero()
            || p.zb_over_zd <= F::zero()
        {
            return F::infinity();
        }
        match matching_error(measured, &p) {
            Ok(m) => m.error,
            Err(_) => F::infinity(),
        }
    };

    // restart seeds
    let raw = apply_pins(init.to_array());
    let mut rescaled = raw;
    {
        let target = (F::c(2.0) * span_mean_fsr).recip();
        let sum = rescaled[0] + rescaled[1] + rescaled[2];
        let scale = target / sum;
        for b in rescaled.iter_mut().take(3) {
            *b *= scale;
        }
        rescaled = apply_pins(rescaled);
        // initial comb offset: median detrended misalignment
        if constraints.pinned[5].is_none() {
            let mut probe = ReducedStackParams::from_array(rescaled);
            probe.psi = F::zero();
            let d0 = measured.fsr_mean;
            let mut offsets: Vec<F> = Vec::new();
            for &f_n in &freqs {
                if let Some(root) = nearest_root(&probe, f_n, d0) {
                    offsets.push(f_n - root);
                }
            }
            if !offsets.is_empty() {
                offsets.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
                rescaled[5] = offsets[offsets.len() / 2];
            }
        }
    }

    // shape-aware simplex steps: transit times move fractionally (the bulk
    // far less, since it tilts the whole comb), ratios and offset absolutely
    let base_steps = |a: &[F; 6]| -> [F; 6] {
        [
            a[0] * F::c(0.02),
            (a[1] * F::c(0.3)).max(F::c(1e-14)),
            a[2] * F::c(2e-5),
            (a[3].abs() + F::one()) * F::c(0.03),
            (a[4].abs() + F::one()) * F::c(0.03),
            measured.fsr_mean * F::c(0.02),
        ]
    };

    let mut evaluations = 0usize;
    let mut best: Option<(F, [F; 6])> = None;
    for start in [rescaled, raw] {
        let steps = base_steps(&start);
        let steps: Vec<F> = steps
            .iter()
            .zip(&constraints.pinned)
            .map(|(&s, pin)| if pin.is_some() { F::c(1e-30) } else { s })
            .collect();
        let r = nelder_mead(
            objective,
            &start,
            &steps,
            &NmOptions { max_evaluations: 3000, ..Default::default() },
        );
        evaluations += r.evaluations;
        let arr = [r.params[0], r.params[1], r.params[2], r.params[3], r.params[4], r.params[5]];
        if best.map(|(v, _)| r.value < v).unwrap_or(true) {
            best = Some((r.value, arr));
        }
    }
    let (_, mut current) = best.ok_or(StackFitError::NonConvergence)?;

    // damped least-squares refinement of the index-matched residual vector,
    // parameters scaled to O(1) around a reference point; `extra_pins` adds
    // per-call parameter freezes on top of the caller constraints
    let n_meas = measured.modes.len();
    let lm_refine = |start: &[F; 6],
                     extra_pins: [Option<F>; 6],
                     iters: usize,
                     evals: &mut usize|
     -> [F; 6] {
        let scale_ref = *start;
        let merge = move |mut a: [F; 6]| -> [F; 6] {
            for (v, pin) in a.iter_mut().zip(&extra_pins) {
                if let Some(p) = pin {
                    *v = *p;
                }
            }
            a
        };
        let lm_residual = |p: &[F], out: &mut [F]| {
            let arr = merge(apply_pins([
                p[0] * scale_ref[0],
                p[1] * scale_ref[1],
                p[2] * scale_ref[2],
                p[3] * scale_ref[3],
                p[4] * scale_ref[4],
                p[5] * measured.fsr_mean,
            ]));
            let params = ReducedStackParams::from_array(arr);
            match comb_residuals(measured, &params) {
                Ok((res, _)) => {
                    let kept: Vec<F> = res.iter().filter_map(|r| *r).collect();
                    let delta =
                        if kept.is_empty() { F::zero() } else { huber_threshold(&kept) };
                    for (o, r) in out.iter_mut().zip(&res) {
                        *o = match r {
                            Some(v) => {
                                let a = v.abs();
                                if delta > F::zero() && a > delta {
                                    // sqrt of the Huber loss, sign preserved
                                    v.signum() * (delta * (F::c(2.0) * a - delta)).sqrt()
                                } else {
                                    *v
                                }
                            }
                            None => F::zero(),
                        };
                    }
                }
                Err(_) => out.iter_mut().for_each(|o| *o = F::c(1e9)),
            }
        };
        let x0 = vec![
            F::one(),
            F::one(),
            F::one(),
            F::one(),
            F::one(),
            start[5] / measured.fsr_mean,
        ];
        match crate::optim::levenberg_marquardt(
            lm_residual,
            &x0,
            n_meas,
            &crate::optim::LmOptions {
                max_iterations: iters,
                jacobian_step: F::c(3e-5),
                ..Default::default()
            },
        ) {
            Ok(fit) => {
                *evals += fit.iterations * (8 * n_meas);
                merge(apply_pins([
                    fit.params[0] * scale_ref[0],
                    fit.params[1] * scale_ref[1],
                    fit.params[2] * scale_ref[2],
                    fit.params[3] * scale_ref[3],
                    fit.params[4] * scale_ref[4],
                    fit.params[5] * measured.fsr_mean,
                ]))
            }
            Err(_) => *start,
        }
    };
    let no_pins: [Option<F>; 6] = [None; 6];

    // To first order in its transit phase, the interlayer imprints the comb
    // through a single combination of (β_D, Z_P/Z_D, Z_B/Z_D), leaving a
    // canyon of near-minima that strands plain descent. Profile it out:
    // freeze β_D on a shrinking grid, relax the remaining parameters (a
    // well-conditioned problem), and walk the profile to its minimum.
    if constraints.pinned[1].is_none() && current[1] > F::zero() {
        let mut profile_pass = |grid: &[F], iters: usize, current: &mut [F; 6]| {
            let center = *current;
            let mut best_profile: Option<(F, [F; 6])> = None;
            for &beta_d in grid {
                let mut start = center;
                start[1] = beta_d;
                let mut pins = no_pins;
                pins[1] = Some(beta_d);
                let refined = lm_refine(&start, pins, iters, &mut evaluations);
                let value = objective(&refined);
                if best_profile.map(|(v, _)| value < v).unwrap_or(true) {
                    best_profile = Some((value, refined));
                }
            }
            if let Some((value, refined)) = best_profile {
                if value <= objective(current) {
                    *current = refined;
                }
            }
        };

        // wide first pass around both the simplex result and the rescaled
        // initialization (the simplex may have wandered off in β_D)
        let mut grid = Vec::new();
        for center in [current[1], rescaled[1]] {
            for i in 0..7 {
                let t = F::c(-0.15 + 0.05 * i as f64);
                let v = center * (F::one() + t);
                if v > F::zero() {
                    grid.push(v);
                }
            }
        }
        grid.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        grid.dedup_by(|b, a| (*b - *a).abs() < *a * F::c(1e-3));
        profile_pass(&grid, 35, &mut current);

        // shrinking recentered passes walk the profile to its minimum
        for (half_width, points, iters) in
            [(0.04, 9usize, 35usize), (0.008, 9, 40), (0.0015, 7, 50)]
        {
            let center = current[1];
            let grid: Vec<F> = (0..points)
                .map(|i| {
                    center
                        * (F::one()
                            + F::c(-half_width
                                + 2.0 * half_width * i as f64 / (points - 1) as f64))
                })
                .filter(|&v| v > F::zero())
                .collect();
            profile_pass(&grid, iters, &mut current);
        }
    }

    // full six-parameter descent from the profile minimum
    for _ in 0..3 {
        let refined = lm_refine(&current, no_pins, 120, &mut evaluations);
        if objective(&refined) < objective(&current) {
            current = refined;
        } else {
            break;
        }
    }

    let final_arr = apply_pins(current);
    let params = ReducedStackParams::from_array(final_arr);
    let fit = matching_error(measured, &params)?;

    // 1σ from the local quadratic model ε ≈ ε* + ½ΔθᵀHΔθ, cov = 2s²H⁻¹
    let h_steps = base_steps(&final_arr).map(|s| s * F::c(1e-2));
    let mut hessian = vec![vec![F::zero(); 6]; 6];
    let eps0 = fit.error;
    let probe = |a: [F; 6]| -> F { objective(&a) };
    for i in 0..6 {
        for j in i..6 {
            let mut app = final_arr;
            let mut amm = final_arr;
            let mut apm = final_arr;
            let mut amp = final_arr;
            app[i] += h_steps[i];
            app[j] += h_steps[j];
            amm[i] -= h_steps[i];
            amm[j] -= h_steps[j];
            apm[i] += h_steps[i];
            apm[j] -= h_steps[j];
            amp[i] -= h_steps[i];
            amp[j] += h_steps[j];
            let val = if i == j {
                let mut ap = final_arr;
                let mut am = final_arr;
                ap[i] += h_steps[i];
                am[i] -= h_steps[i];
                (probe(ap) - F::c(2.0) * eps0 + probe(am)) / (h_steps[i] * h_steps[i])
            } else {
                (probe(app) - probe(apm) - probe(amp) + probe(amm))
                    / (F::c(4.0) * h_steps[i] * h_steps[j])
            };
            hessian[i][j] = val;
            hessian[j][i] = val;
        }
    }
    let dof = fit.matched.saturating_sub(6).max(1);
    let s2 = eps0 / F::c(dof as f64);
    let (eigvals, eigvecs) = jacobi_eigen(&hessian);
    let max_eig = eigvals.iter().fold(F::zero(), |a, &v| a.max(v.abs()));
    let mut sigma = [F::zero(); 6];
    for (i, s) in sigma.iter_mut().enumerate() {
        if constraints.pinned[i].is_some() {
            continue;
        }
        let mut var = F::zero();
        let mut degenerate = false;
        for k in 0..6 {
            let coupling = eigvecs[i][k] * eigvecs[i][k];
            if eigvals[k] <= max_eig * F::c(1e-12) {
                if coupling > F::c(1e-10) {
                    degenerate = true;
                }
                continue;
            }
            var += coupling / eigvals[k];
        }
        *s = if degenerate { F::infinity() } else { (F::c(2.0) * s2 * var).sqrt() };
    }

    Ok(StackFitResult { params, sigma, epsilon: eps0, matched: fit.matched, evaluations })
}

/// One mode's inputs for a loss-tangent regression.
#[derive(Debug, Clone)]
pub struct LossDatum<F> {
    pub mode: ModeSolution<F>,
    pub participation: ParticipationRecord<F>,
    /// Measured total internal loss 1/Q_i.
    pub q_inv: F,
}

/// Result of the absorption-tangent regression.
#[derive(Debug, Clone, Serialize)]
pub struct AbsorptionFit<F> {
    /// Fitted per-layer 1/Q_{X,mech}, non-negative.
    pub tangents: Vec<F>,
    /// 1σ from the unconstrained covariance.
    pub sigma: Vec<F>,
    /// Per-layer lower bounds on Q_{X,mech}: all residual loss attributed to
    /// that single layer.
    pub min_q: Vec<F>,
    /// Condition number of the participation design matrix.
    pub condition: F,
    pub residual_rms: F,
}

fn design_condition<F: Float>(a: &[Vec<F>]) -> F {
    let cols = a[0].len();
    let mut ata = vec![vec![F::zero(); cols]; cols];
    for row in a {
        for i in 0..cols {
            for j in 0..cols {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let (eig, _) = jacobi_eigen(&ata);
    let max = eig.iter().fold(F::zero(), |m, &v| m.max(v));
    let min = eig.iter().fold(F::infinity(), |m, &v| m.min(v.max(F::zero())));
    if min > F::zero() {
        (max / min).sqrt()
    } else {
        F::infinity()
    }
}

/// Regress measured residual loss `1/Q_i − 1/Q_σ` against the total-energy
/// participation columns with a non-negativity constraint, and report the
/// single-layer attribution bounds.
pub fn fit_absorption_tangents<F: Float>(
    data: &[LossDatum<F>],
    scattering_q_inv: &[F],
) -> Result<AbsorptionFit<F>, StackFitError> {
    let n_modes = data.len();
    if n_modes != scattering_q_inv.len() {
        return Err(StackFitError::ShapeMismatch);
    }
    let n_layers = data
        .first()
        .map(|d| d.participation.total.len())
        .ok_or(StackFitError::TooFewModes { need: 1, got: 0 })?;
    if n_modes < 3 * n_layers {
        return Err(StackFitError::TooFewModes { need: 3 * n_layers, got: n_modes });
    }

    let a: Vec<Vec<F>> = data.iter().map(|d| d.participation.total.clone()).collect();
    let y: Vec<F> = data
        .iter()
        .zip(scattering_q_inv)
        .map(|(d, &s)| d.q_inv - s)
        .collect();

    let fit = nnls(&a, &y)?;
    let condition = design_condition(&a);

    // unconstrained covariance for the uncertainty report; conditioning
    // inflates these naturally
    let dof = n_modes.saturating_sub(n_layers).max(1);
    let s2 = fit.residual_norm * fit.residual_norm / F::c(dof as f64);
    let mut ata = vec![vec![F::zero(); n_layers]; n_layers];
    for row in &a {
        for i in 0..n_layers {
            for j in 0..n_layers {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let sigma = match crate::optim::invert(&ata) {
        Ok(inv) => (0..n_layers).map(|i| (inv[i][i] * s2).max(F::zero()).sqrt()).collect(),
        Err(_) => vec![F::infinity(); n_layers],
    };

    // single-layer attribution: q_X = Σ p_X y / Σ p_X², floored at zero
    let mut min_q = Vec::with_capacity(n_layers);
    for layer in 0..n_layers {
        let mut num = F::zero();
        let mut den = F::zero();
        for (row, &yi) in a.iter().zip(&y) {
            num += row[layer] * yi;
            den += row[layer] * row[layer];
        }
        let tangent = (num / den).max(F::zero());
        min_q.push(if tangent > F::zero() { tangent.recip() } else { F::infinity() });
    }

    Ok(AbsorptionFit {
        tangents: fit.coefficients,
        sigma,
        min_q,
        condition,
        residual_rms: fit.residual_norm / F::c((n_modes as f64).sqrt()),
    })
}

/// Result of the TLS-tangent regression.
#[derive(Debug, Clone, Serialize)]
pub struct TlsTangentFit<F> {
    /// Fitted per-layer 1/Q_{X,TLS}; pinned layers report zero.
    pub tangents: Vec<F>,
    pub sigma: Vec<F>,
    pub condition: F,
    pub residual_rms: F,
}

/// Regress measured TLS tangents against the potential-energy participation
/// columns, non-negatively, with selected layers pinned to zero (by default
/// the crystalline bulk hosts no TLS).
pub fn fit_tls_tangents<F: Float>(
    rows: &[(Vec<F>, F)],
    pinned_zero: &[usize],
) -> Result<TlsTangentFit<F>, StackFitError> {
    let n_modes = rows.len();
    let n_layers = rows
        .first()
        .map(|r| r.0.len())
        .ok_or(StackFitError::TooFewModes { need: 1, got: 0 })?;
    let free: Vec<usize> = (0..n_layers).filter(|i| !pinned_zero.contains(i)).collect();
    if n_modes < 3 * free.len() {
        return Err(StackFitError::TooFewModes { need: 3 * free.len(), got: n_modes });
    }

    let a: Vec<Vec<F>> = rows
        .iter()
        .map(|(p, _)| free.iter().map(|&i| p[i]).collect())
        .collect();
    let y: Vec<F> = rows.iter().map(|&(_, v)| v).collect();
    let fit = nnls(&a, &y)?;
    let condition = design_condition(&a);

    let dof = n_modes.saturating_sub(free.len()).max(1);
    let s2 = fit.residual_norm * fit.residual_norm / F::c(dof as f64);
    let mut ata = vec![vec![F::zero(); free.len()]; free.len()];
    for row in &a {
        for i in 0..free.len() {
            for j in 0..free.len() {
                ata[i][j] += row[i] * row[j];
            }
        }
    }
    let sigma_free: Vec<F> = match crate::optim::invert(&ata) {
        Ok(inv) => (0..free.len()).map(|i| (inv[i][i] * s2).max(F::zero()).sqrt()).collect(),
        Err(_) => vec![F::infinity(); free.len()],
    };

    let mut tangents = vec![F::zero(); n_layers];
    let mut sigma = vec![F::zero(); n_layers];
    for (k, &i) in free.iter().enumerate() {
        tangents[i] = fit.coefficients[k];
        sigma[i] = sigma_free[k];
    }
    Ok(TlsTangentFit {
        tangents,
        sigma,
        condition,
        residual_rms: fit.residual_norm / F::c((n_modes as f64).sqrt()),
    })
}

/// Dissipative TLS tangent from single-phonon vs high-power loss:
/// `1/Q_TLS,diss = 1/Q_i(single) − 1/Q_i(high)`, floored at zero. The flag
/// reports a negative difference (measurement noise).
pub fn tls_dissipative_tangent<F: Float>(
    q_inv_single_phonon: F,
    q_inv_high_power: F,
) -> (F, bool) {
    let d = q_inv_single_phonon - q_inv_high_power;
    if d < F::zero() {
        (F::zero(), true)
    } else {
        (d, false)
    }
}

/// Straight-line regression helper re-exported for loss-correlation checks.
pub fn regress_line<F: Float>(x: &[F], y: &[F]) -> Result<LineFit<F>, StackFitError> {
    Ok(linear_fit(x, y)?)
}
