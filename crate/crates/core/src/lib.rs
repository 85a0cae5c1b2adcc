//! Modeling and data-analysis toolkit for composite bulk acoustic resonators.
//!
//! A layered crystal (piezoelectric film, optional defect interlayer, bulk
//! substrate) supports a comb of longitudinal standing-wave overtones. This
//! crate models that comb with a one-dimensional acoustic transmission line,
//! decomposes per-mode dissipation into analytic channels (surface scattering,
//! mechanical absorption, two-level-system loss, diffraction, phonon-phonon),
//! and fits measured microwave spectroscopy data to extract material loss
//! parameters:
//!
//! * [`stack`] — layer stack, characteristic equation, mode solving
//! * [`participation`] — per-layer acoustic energy participation ratios
//! * [`loss`] — analytic loss channels and budget composition
//! * [`tls`] — two-level-system saturation, dispersive shift, loss tangents
//! * [`resonance`] — complex reflection traces and resonance fitting
//! * [`stack_fit`] — mode-comb fitting and loss-tangent extraction
//! * [`stability`] — PSD, Allan deviation, power-law fits, TCF
//! * [`cqad`] — qubit-phonon figures of merit
//!
//! All numerics are generic over the scalar type via [`scalar::Float`];
//! concrete `f64` aliases are exported at the crate root.

// dense kernels index small matrices directly, and validators negate
// comparisons to reject NaN; both read better than the lint alternatives
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod cqad;
pub mod io;
pub mod loss;
pub mod optim;
pub mod participation;
pub mod resonance;
pub mod scalar;
pub mod special;
pub mod stability;
pub mod stack;
pub mod stack_fit;
pub mod tls;

pub use scalar::Float;

/// Default scalar type for the concrete aliases below.
pub type Real = f64;

pub type Layer = stack::Layer<Real>;
pub type StackModel = stack::StackModel<Real>;
pub type ModeSolution = stack::ModeSolution<Real>;
pub type ParticipationRecord = participation::ParticipationRecord<Real>;
pub type LossBudget = loss::LossBudget<Real>;
pub type DomeGeometry = loss::DomeGeometry<Real>;
pub type ThermalLossParams = loss::ThermalLossParams<Real>;
pub type TlsParams = tls::TlsParams<Real>;
pub type ComplexTrace = resonance::ComplexTrace<Real>;
pub type ResonanceFit = resonance::ResonanceFit<Real>;
pub type ReducedStackParams = stack_fit::ReducedStackParams<Real>;
pub type ModeComb = stack_fit::ModeComb<Real>;
pub type FrequencySeries = stability::FrequencySeries<Real>;
pub type CqadParams = cqad::CqadParams<Real>;
