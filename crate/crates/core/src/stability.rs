//! Frequency-stability statistics for mode-frequency time series: noise
//! power spectral density, overlapping Allan deviation, power-law fits, and
//! the temperature coefficient of frequency.

use crate::optim::{linear_fit, OptimError};
use crate::scalar::{two_pi, Float};
use rustfft::{num_complex::Complex as FftComplex, FftNum, FftPlanner};
use serde::Serialize;
use thiserror::Error;

/// Default logarithmic τ grid density.
const TAU_POINTS_PER_DECADE: f64 = 10.0;
/// Largest τ as a fraction of the record length.
const MAX_TAU_FRACTION: f64 = 1.0 / 3.0;

#[derive(Debug, Error)]
pub enum StabilityError {
    #[error("series needs at least 32 samples, got {0}")]
    TooFewSamples(usize),
    #[error("sampling is not uniform: spacing deviates by {deviation:.2}% (max 1%)")]
    NonUniformSampling { deviation: f64 },
    #[error("temperatures must be strictly monotone (violation at sample {0})")]
    NonMonotoneTemperature(usize),
    #[error("power-law fit needs at least 4 points, got {0}")]
    TooFewPoints(usize),
    #[error(transparent)]
    Fit(#[from] OptimError),
}

/// Uniformly sampled fractional-frequency series y_k = Δf/f.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencySeries<F> {
    dt: F,
    values: Vec<F>,
}

impl<F: Float> FrequencySeries<F> {
    /// Build from an explicit sample interval.
    pub fn from_dt(dt: F, values: Vec<F>) -> Result<Self, StabilityError> {
        if values.len() < 32 {
            return Err(StabilityError::TooFewSamples(values.len()));
        }
        Ok(Self { dt, values })
    }

    /// Build from timestamps, checking spacing uniformity to 1%.
    pub fn from_timestamps(timestamps: &[F], values: Vec<F>) -> Result<Self, StabilityError> {
        if timestamps.len() < 32 || timestamps.len() != values.len() {
            return Err(StabilityError::TooFewSamples(timestamps.len().min(values.len())));
        }
        let n = timestamps.len();
        let mean_dt = (timestamps[n - 1] - timestamps[0]) / F::c((n - 1) as f64);
        let mut worst = F::zero();
        for w in timestamps.windows(2) {
            let dev = ((w[1] - w[0]) - mean_dt).abs() / mean_dt;
            worst = worst.max(dev);
        }
        if worst > F::c(0.01) {
            return Err(StabilityError::NonUniformSampling {
                deviation: (worst * F::c(100.0)).to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(Self { dt: mean_dt, values })
    }

    pub fn dt(&self) -> F {
        self.dt
    }

    pub fn values(&self) -> &[F] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn span(&self) -> F {
        self.dt * F::c(self.len() as f64)
    }
}

/// Taper applied before the periodogram.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Window {
    /// Hann taper; controls leakage for steep spectra (default).
    Hann,
    /// No taper.
    Rectangular,
}

/// One-sided noise power spectral density by windowed periodogram.
///
/// The mean is removed, the window is applied, and the density is normalized
/// by the window power so that `Σ S(f)·Δf` equals the window-weighted
/// variance exactly (Parseval). The DC bin is retained (it carries residual
/// leakage of the removed mean for non-rectangular windows).
pub fn psd<F: Float + FftNum>(
    series: &FrequencySeries<F>,
    window: Window,
) -> (Vec<F>, Vec<F>) {
    let n = series.len();
    let nf = F::c(n as f64);
    let mean = series.values.iter().fold(F::zero(), |a, &v| a + v) / nf;

    let w: Vec<F> = match window {
        Window::Hann => (0..n)
            .map(|j| {
                F::c(0.5) * (F::one() - (two_pi::<F>() * F::c(j as f64) / nf).cos())
            })
            .collect(),
        Window::Rectangular => vec![F::one(); n],
    };
    let wsq = w.iter().fold(F::zero(), |a, &v| a + v * v);

    let mut buf: Vec<FftComplex<F>> = series
        .values
        .iter()
        .zip(&w)
        .map(|(&v, &wj)| FftComplex::new((v - mean) * wj, F::zero()))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let n_bins = n / 2 + 1;
    let scale = F::c(2.0) * series.dt / wsq;
    let mut freqs = Vec::with_capacity(n_bins);
    let mut density = Vec::with_capacity(n_bins);
    for (k, item) in buf.iter().enumerate().take(n_bins) {
        let mut s = scale * item.norm_sqr();
        if k == 0 || (n.is_multiple_of(2) && k == n / 2) {
            s *= F::c(0.5); // one-sided folding does not double DC/Nyquist
        }
        freqs.push(F::c(k as f64) / (nf * series.dt));
        density.push(s);
    }
    (freqs, density)
}

/// One σ(τ) sample of the Allan deviation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AllanPoint<F> {
    pub tau: F,
    pub sigma: F,
    /// Averaging factor m = τ/dt actually used.
    pub m: usize,
}

/// Result of an Allan-deviation evaluation, with any τ values that were too
/// large for the record.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AllanDeviation<F> {
    pub points: Vec<AllanPoint<F>>,
    pub skipped: Vec<F>,
}

/// Overlapping Allan deviation of fractional-frequency data over the given
/// averaging times (each rounded to a multiple of dt; τ beyond a third of the
/// record is skipped and reported).
pub fn allan_deviation<F: Float>(
    series: &FrequencySeries<F>,
    taus: &[F],
) -> AllanDeviation<F> {
    let n = series.len();
    // prefix sums for O(1) window averages
    let mut cumsum = Vec::with_capacity(n + 1);
    cumsum.push(F::zero());
    for &v in &series.values {
        let last = *cumsum.last().unwrap();
        cumsum.push(last + v);
    }

    let mut points = Vec::new();
    let mut skipped = Vec::new();
    for &tau in taus {
        let m = (tau / series.dt).round().to_f64().unwrap_or(0.0) as usize;
        let m = m.max(1);
        let too_long = F::c(m as f64) * series.dt > series.span() * F::c(MAX_TAU_FRACTION);
        if too_long || 2 * m >= n {
            skipped.push(tau);
            continue;
        }
        let count = n - 2 * m + 1;
        let mut acc = F::zero();
        for j in 0..count {
            let first = cumsum[j + m] - cumsum[j];
            let second = cumsum[j + 2 * m] - cumsum[j + m];
            let d = second - first;
            acc += d * d;
        }
        let mf = F::c(m as f64);
        let avar = acc / (F::c(2.0) * mf * mf * F::c(count as f64));
        points.push(AllanPoint { tau: mf * series.dt, sigma: avar.sqrt(), m });
    }
    AllanDeviation { points, skipped }
}

/// Logarithmic τ grid (10 points per decade) from dt to a third of the span.
pub fn default_tau_grid<F: Float>(series: &FrequencySeries<F>) -> Vec<F> {
    let dt = series.dt.to_f64().unwrap_or(1.0);
    let max_tau = series.span().to_f64().unwrap_or(1.0) * MAX_TAU_FRACTION;
    let mut taus = Vec::new();
    let mut last_m = 0usize;
    let decades = (max_tau / dt).log10();
    let steps = (decades * TAU_POINTS_PER_DECADE).ceil() as usize;
    for i in 0..=steps {
        let tau = dt * 10f64.powf(i as f64 / TAU_POINTS_PER_DECADE);
        let m = (tau / dt).round() as usize;
        if m > last_m && tau <= max_tau {
            taus.push(F::c(m as f64 * dt));
            last_m = m;
        }
    }
    taus
}

/// Power-law fit `y = amplitude · x^exponent` by least squares in log-log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PowerLawFit<F> {
    pub amplitude: F,
    pub exponent: F,
    pub sigma_exponent: F,
}

pub fn fit_power_law<F: Float>(x: &[F], y: &[F]) -> Result<PowerLawFit<F>, StabilityError> {
    if x.len() < 4 || x.len() != y.len() {
        return Err(StabilityError::TooFewPoints(x.len().min(y.len())));
    }
    let lx: Vec<F> = x.iter().map(|&v| v.ln()).collect();
    let ly: Vec<F> = y.iter().map(|&v| v.ln()).collect();
    let fit = linear_fit(&lx, &ly)?;
    Ok(PowerLawFit {
        amplitude: fit.intercept.exp(),
        exponent: fit.slope,
        sigma_exponent: fit.sigma_slope,
    })
}

/// Temperature coefficient of frequency at the interior sample points.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TcfResult<F> {
    /// (T, TCF) pairs, 1/K.
    pub tcf: Vec<(F, F)>,
    /// Power-law fit of |TCF| against T, when requested and well-posed.
    pub power_law: Option<PowerLawFit<F>>,
}

/// TCF(T) = (1/f)·df/dT via three-point finite differences on a (possibly
/// non-uniform) strictly monotone temperature grid; endpoints use one-sided
/// differences.
pub fn tcf<F: Float>(
    samples: &[(F, F)],
    fit_power: bool,
) -> Result<TcfResult<F>, StabilityError> {
    let n = samples.len();
    if n < 5 {
        return Err(StabilityError::TooFewPoints(n));
    }
    let increasing = samples[1].0 > samples[0].0;
    for i in 1..n {
        let ok = if increasing {
            samples[i].0 > samples[i - 1].0
        } else {
            samples[i].0 < samples[i - 1].0
        };
        if !ok {
            return Err(StabilityError::NonMonotoneTemperature(i));
        }
    }

    let deriv = |i: usize| -> F {
        if i == 0 {
            (samples[1].1 - samples[0].1) / (samples[1].0 - samples[0].0)
        } else if i == n - 1 {
            (samples[n - 1].1 - samples[n - 2].1) / (samples[n - 1].0 - samples[n - 2].0)
        } else {
            // second-order three-point formula on a non-uniform grid
            let h0 = samples[i].0 - samples[i - 1].0;
            let h1 = samples[i + 1].0 - samples[i].0;
            let (f0, f1, f2) = (samples[i - 1].1, samples[i].1, samples[i + 1].1);
            -h1 / (h0 * (h0 + h1)) * f0 + (h1 - h0) / (h0 * h1) * f1
                + h0 / (h1 * (h0 + h1)) * f2
        }
    };

    let tcf: Vec<(F, F)> = (0..n).map(|i| (samples[i].0, deriv(i) / samples[i].1)).collect();

    let power_law = if fit_power {
        // interior points only: the one-sided endpoint differences are a
        // full order less accurate and would bias the slope
        let pts: Vec<(F, F)> = tcf[1..n - 1]
            .iter()
            .filter(|(t, v)| *t > F::zero() && v.abs() > F::zero())
            .map(|&(t, v)| (t, v.abs()))
            .collect();
        if pts.len() >= 4 {
            let xs: Vec<F> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<F> = pts.iter().map(|p| p.1).collect();
            fit_power_law(&xs, &ys).ok()
        } else {
            None
        }
    } else {
        None
    };

    Ok(TcfResult { tcf, power_law })
}
