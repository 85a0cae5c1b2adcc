//! Physical constants (CODATA, exact by definition since the 2019 SI).

use crate::scalar::Float;

/// Planck constant, J·s.
pub const PLANCK: f64 = 6.626_070_15e-34;
/// Boltzmann constant, J/K.
pub const BOLTZMANN: f64 = 1.380_649e-23;
/// Reduced Planck constant, J·s.
pub const HBAR: f64 = PLANCK / (2.0 * std::f64::consts::PI);

/// Constant set threaded through the few formulas that need `h` and `k_B`.
///
/// The default is CODATA; overriding is supported for testing only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhysicalConstants<F> {
    pub planck: F,
    pub boltzmann: F,
}

impl<F: Float> Default for PhysicalConstants<F> {
    fn default() -> Self {
        Self { planck: F::c(PLANCK), boltzmann: F::c(BOLTZMANN) }
    }
}

impl<F: Float> PhysicalConstants<F> {
    pub fn hbar(&self) -> F {
        self.planck / crate::scalar::two_pi()
    }
}
