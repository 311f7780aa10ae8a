//! Physical constants (CODATA 2018), SI units.

/// Boltzmann constant, J/K. Exact in the 2019 SI: 1.38064900e-23.
pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Bohr magneton, J/T: 9.27401008e-24.
pub const BOHR_MAGNETON: f64 = 9.274_010_078_3e-24;

/// Excited-state lifetime of the Er 1.5 um transition used as the
/// default `T1` for three-pulse echoes, s.
pub const ER_EXCITED_LIFETIME: f64 = 11e-3;
