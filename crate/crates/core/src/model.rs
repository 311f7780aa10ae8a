//! Closed-form linewidth physics: thermal spectral-diffusion law, TLS
//! rate/energy distribution, Er spin flip-flop rate and the coherence
//! lifetime with spectral diffusion.
//!
//! Units are SI throughout: Hz, T, K, J, s.

use serde::{Deserialize, Serialize};

use crate::constants::{BOHR_MAGNETON, BOLTZMANN};
use crate::error::{Error, Result};
use crate::real::{coth, sech2, Real};

/// Below this value of `Γ_SD·R / (π Γ_h²)` the coherence time is taken from
/// its second-order series.
pub const SERIES_THRESHOLD: f64 = 1e-8;

/// Magnetic field and temperature seen by the probed ions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Environment<F> {
    /// Applied field, T.
    pub field: F,
    /// Sample temperature, K.
    pub temperature: F,
}

impl<F: Real> Environment<F> {
    pub fn new(field: F, temperature: F) -> Result<Self> {
        let env = Self { field, temperature };
        env.validate()?;
        Ok(env)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.field >= F::zero()) || !self.field.is_finite() {
            return Err(Error::InvalidParameter {
                name: "field",
                reason: format!("must be finite and >= 0, got {}", self.field),
            });
        }
        check_temperature(self.temperature)
    }

    /// Thermal energy `kT`, J.
    pub fn thermal_energy(&self) -> F {
        F::lit(BOLTZMANN) * self.temperature
    }
}

fn check_temperature<F: Real>(temperature: F) -> Result<()> {
    if temperature > F::zero() && temperature.is_finite() {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "temperature must be positive and finite, got {temperature}"
        )))
    }
}

/// Parameters of the linewidth model `Γ_eff(B, T)`.
///
/// The spectral-diffusion amplitude only ever enters through the product
/// `Γ_SD · R`, so the Er–Er and Er–TLS flip-flop couplings are stored
/// premultiplied by `Γ_max`: `c1 = Γ_max·α1` and `c2 = Γ_max·α2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelParams<F> {
    /// Homogeneous linewidth at zero temperature, Hz.
    pub gamma0: F,
    /// Elastic-TLS dephasing coefficient, Hz/K^n.
    pub alpha0: F,
    /// Temperature exponent.
    pub n: F,
    /// Effective g-value of the environmental spins.
    pub g_env: F,
    /// `Γ_max·α1`, Hz^3.
    pub c1: F,
    /// `Γ_max·α2`, Hz^2/(T·K).
    pub c2: F,
    /// Zero-field inhomogeneous spin linewidth, Hz.
    pub gamma_s0: F,
    /// Field broadening of the spin linewidth, Hz/T.
    pub gamma_s_slope: F,
}

/// Default zero-field spin linewidth, Hz.
pub const SPIN_LINEWIDTH_ZERO_FIELD: f64 = 1.5e9;
/// Default spin-linewidth broadening, Hz/T.
pub const SPIN_LINEWIDTH_SLOPE: f64 = 150e9;

impl<F: Real> ModelParams<F> {
    /// Checks the physical ranges of every parameter.
    pub fn validate(&self) -> Result<()> {
        fn bad<F: Real>(name: &'static str, v: F, what: &str) -> Error {
            Error::InvalidParameter {
                name,
                reason: format!("{what}, got {v}"),
            }
        }
        let zero = F::zero();
        let all = [
            self.gamma0,
            self.alpha0,
            self.n,
            self.g_env,
            self.c1,
            self.c2,
            self.gamma_s0,
            self.gamma_s_slope,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "params",
                reason: "all parameters must be finite".into(),
            });
        }
        if self.gamma0 < zero {
            return Err(bad("gamma0", self.gamma0, "must be >= 0"));
        }
        if self.alpha0 < zero {
            return Err(bad("alpha0", self.alpha0, "must be >= 0"));
        }
        if self.n < F::one() || self.n > F::lit(1.5) {
            return Err(bad("n", self.n, "must lie in [1, 1.5]"));
        }
        if self.g_env < zero || self.g_env > F::lit(18.0) {
            return Err(bad("g_env", self.g_env, "must lie in [0, 18]"));
        }
        if self.c1 < zero {
            return Err(bad("c1", self.c1, "must be >= 0"));
        }
        if self.c2 < zero {
            return Err(bad("c2", self.c2, "must be >= 0"));
        }
        if self.gamma_s0 <= zero {
            return Err(bad("gamma_s0", self.gamma_s0, "must be > 0"));
        }
        if self.gamma_s_slope < zero {
            return Err(bad("gamma_s_slope", self.gamma_s_slope, "must be >= 0"));
        }
        Ok(())
    }

    /// Linewidth without spectral diffusion, `Γ0 + α0·T^n`.
    pub fn homogeneous_linewidth(&self, temperature: F) -> F {
        self.gamma0 + self.alpha0 * temperature.powf(self.n)
    }

    /// Published fit values with the spectral-diffusion products built from
    /// the published ratios and the given `Γ_max`.
    pub fn table_one(gamma_max: F) -> Self {
        let (c1, c2) = SpectralDiffusionRatios::table_one().to_products(gamma_max);
        Self {
            gamma0: F::zero(),
            alpha0: F::lit(1.1e6),
            n: F::lit(1.1),
            g_env: F::lit(14.4),
            c1,
            c2,
            gamma_s0: F::lit(SPIN_LINEWIDTH_ZERO_FIELD),
            gamma_s_slope: F::lit(SPIN_LINEWIDTH_SLOPE),
        }
    }

    /// Table-I parameters with `Γ_max` set to [`TABLE_ONE_GAMMA_MAX`].
    pub fn table_one_calibrated() -> Self {
        Self::table_one(F::lit(TABLE_ONE_GAMMA_MAX))
    }
}

/// Flip-flop couplings reported as ratios to the spectral-diffusion
/// amplitude: `α1/Γ_max` (Hz) and `α2/Γ_max` (1/(T·K)).
///
/// Conversion assumption: `Γ_max` is a linewidth in Hz and `α1`, `α2` are
/// the rate coefficients of the flip-flop law, so that `α1/(Γ_S0 + γ_S B)`
/// and `α2·B·T` are rates in Hz. Under that reading
/// `c1 = Γ_max·α1 = (α1/Γ_max)·Γ_max²` and likewise for `c2`; the ratios
/// fix `c1/c2`, and `Γ_max` remains a single free overall scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpectralDiffusionRatios<F> {
    /// `α1/Γ_max`, Hz.
    pub er_er: F,
    /// `α2/Γ_max`, 1/(T·K).
    pub er_tls: F,
}

impl<F: Real> SpectralDiffusionRatios<F> {
    /// 11 GHz and 348 (T·K)^-1.
    pub fn table_one() -> Self {
        Self {
            er_er: F::lit(11e9),
            er_tls: F::lit(348.0),
        }
    }

    /// Returns `(c1, c2)` for the given `Γ_max` (Hz).
    pub fn to_products(&self, gamma_max: F) -> (F, F) {
        let g2 = gamma_max * gamma_max;
        (self.er_er * g2, self.er_tls * g2)
    }
}

/// `Γ_max` (Hz) for the Table-I ratios, fixed by requiring the Er-spin
/// contribution to `Γ_eff` at 0.1 T and 0.7 K to equal 0.7 MHz.
/// Reproduce with [`calibrate_table_one_gamma_max`].
pub const TABLE_ONE_GAMMA_MAX: f64 = 893_300.615_807_7;

/// Solves for the `Γ_max` at which the spectral-diffusion excess
/// `Γ_eff − Γ_h` at `env` equals `excess` (Hz), with all other parameters
/// taken from [`ModelParams::table_one`].
pub fn calibrate_table_one_gamma_max<F: Real>(env: &Environment<F>, excess: F) -> Result<F> {
    let base = ModelParams::<F>::table_one(F::one());
    let target = base.homogeneous_linewidth(env.temperature) + excess;
    calibrate_gamma_max(
        |g| ModelParams::table_one(g),
        env,
        target,
    )
}

/// Finds `Γ_max` such that `effective_linewidth(env, make(Γ_max)) = target`.
///
/// `Γ_eff` grows monotonically with `Γ_max`, so the root is bracketed on a
/// logarithmic interval `[1 Hz, 1 THz]` and refined by bisection.
pub fn calibrate_gamma_max<F: Real>(
    make: impl Fn(F) -> ModelParams<F>,
    env: &Environment<F>,
    target: F,
) -> Result<F> {
    let eval = |log_g: F| -> Result<F> {
        effective_linewidth(env, &make(log_g.exp())).map(|v| v - target)
    };
    let mut lo = F::zero();
    let mut hi = F::lit(1e12).ln();
    let f_lo = eval(lo)?;
    let f_hi = eval(hi)?;
    if f_lo > F::zero() || f_hi < F::zero() {
        return Err(Error::Domain(format!(
            "target linewidth {target} Hz not reachable by varying gamma_max"
        )));
    }
    for _ in 0..200 {
        let mid = (lo + hi) / F::lit(2.0);
        if eval(mid)? < F::zero() {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= F::epsilon() * F::lit(4.0) * hi.abs() {
            break;
        }
    }
    Ok(((lo + hi) / F::lit(2.0)).exp())
}

/// Integration domain of the TLS rate/energy distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TlsDistribution<F> {
    /// Lower rate cutoff, Hz.
    pub r_min: F,
    /// Prefactor of `R_max(E) = r_max_coeff · E³ coth(E/2kT)`, Hz/J³.
    pub r_max_coeff: F,
    /// Upper energy bound in units of `kT`.
    pub e_max_factor: F,
    /// Renormalize the distribution to unit weight over the domain.
    pub normalize: bool,
}

impl<F: Real> Default for TlsDistribution<F> {
    /// `r_min` = 1 Hz, `r_max_coeff` = 1e77 Hz/J³ (`R_max(kT)` ≈ 5.7e8 Hz at
    /// 1 K), `e_max_factor` = 20, normalized.
    fn default() -> Self {
        Self {
            r_min: F::one(),
            r_max_coeff: F::lit(1e77),
            e_max_factor: F::lit(20.0),
            normalize: true,
        }
    }
}

impl<F: Real> TlsDistribution<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.r_min > F::zero()) || !self.r_min.is_finite() {
            return Err(Error::InvalidParameter {
                name: "r_min",
                reason: format!("must be > 0, got {}", self.r_min),
            });
        }
        if !(self.r_max_coeff > F::zero()) || !self.r_max_coeff.is_finite() {
            return Err(Error::InvalidParameter {
                name: "r_max_coeff",
                reason: format!("must be > 0, got {}", self.r_max_coeff),
            });
        }
        if !(self.e_max_factor >= F::lit(5.0)) || !self.e_max_factor.is_finite() {
            return Err(Error::InvalidParameter {
                name: "e_max_factor",
                reason: format!("must be >= 5, got {}", self.e_max_factor),
            });
        }
        Ok(())
    }
}

/// Thermal spectral-diffusion linewidth `Γ_max·sech²(E/2kT)`.
pub fn gamma_sd<F: Real>(e_split: F, temperature: F, gamma_max: F) -> Result<F> {
    check_temperature(temperature)?;
    if !(gamma_max >= F::zero()) {
        return Err(Error::Domain(format!("gamma_max must be >= 0, got {gamma_max}")));
    }
    let x = e_split / (F::lit(2.0 * BOLTZMANN) * temperature);
    Ok(gamma_max * sech2(x))
}

/// `x·coth(x)` with the removable singularity at zero handled.
fn x_coth_x<F: Real>(x: F) -> F {
    if x.abs() < F::lit(1e-4) {
        F::one() + x * x / F::lit(3.0)
    } else {
        x * coth(x)
    }
}

/// Upper rate cutoff `R_max(E) = r_max_coeff · E³ coth(E/2kT)`.
pub fn r_max<F: Real>(e_split: F, temperature: F, dist: &TlsDistribution<F>) -> Result<F> {
    check_temperature(temperature)?;
    if !(e_split >= F::zero()) {
        return Err(Error::Domain(format!("energy must be >= 0, got {e_split}")));
    }
    let two_kt = F::lit(2.0 * BOLTZMANN) * temperature;
    // E³ coth(E/2kT) = E² · 2kT · (x coth x)
    Ok(dist.r_max_coeff * e_split * e_split * two_kt * x_coth_x(e_split / two_kt))
}

/// Unnormalized TLS density `1 / (R·sqrt(1 − R/R_max(E)))` on `0 < R < R_max`.
///
/// Normalization over the integration domain is applied by
/// [`crate::quadrature::integrate_tls`] when `dist.normalize` is set.
pub fn tls_density<F: Real>(
    rate: F,
    e_split: F,
    dist: &TlsDistribution<F>,
    temperature: F,
) -> Result<F> {
    let rmax = r_max(e_split, temperature, dist)?;
    if !(rate > F::zero() && rate < rmax) {
        return Err(Error::Domain(format!(
            "rate {rate} Hz outside (0, R_max = {rmax} Hz)"
        )));
    }
    Ok(F::one() / (rate * (F::one() - rate / rmax).sqrt()))
}

/// Zeeman argument `g_env μ_B B / 2kT` shared by both sech² factors.
fn zeeman_argument<F: Real>(env: &Environment<F>, p: &ModelParams<F>) -> F {
    p.g_env * F::lit(BOHR_MAGNETON) * env.field / (F::lit(2.0 * BOLTZMANN) * env.temperature)
}

/// Er spin flip rate weighted by `Γ_max` (Hz²):
///
/// `c1/(Γ_S0 + γ_S B) · sech²(g μ_B B / 2kT) + c2·B·T`.
///
/// With `c1 = Γ_max·α1`, `c2 = Γ_max·α2` this is `Γ_max·R(B, T)`.
pub fn flip_rate<F: Real>(env: &Environment<F>, p: &ModelParams<F>) -> F {
    let s = sech2(zeeman_argument(env, p));
    let er_er = p.c1 / (p.gamma_s0 + p.gamma_s_slope * env.field) * s;
    let er_tls = p.c2 * env.field * env.temperature;
    er_er + er_tls
}

/// `Γ_SD·R` (Hz²), with `Γ_SD` evaluated at `E = g_env μ_B B`.
pub fn spectral_diffusion_product<F: Real>(env: &Environment<F>, p: &ModelParams<F>) -> F {
    sech2(zeeman_argument(env, p)) * flip_rate(env, p)
}

/// Coherence lifetime `T2` (s) with spectral diffusion,
///
/// `T2 = 2Γh/(Γ_SD R) · (sqrt(1 + Γ_SD R/(π Γh²)) − 1)`, `Γh = Γ0 + α0 T^n`.
///
/// Evaluated as `2 / (π (sqrt(Γh² + Γ_SD R/π) + Γh))`, the same expression
/// with the subtraction rationalized away; below [`SERIES_THRESHOLD`] the
/// second-order series of the bracket is used.
pub fn coherence_time<F: Real>(env: &Environment<F>, p: &ModelParams<F>) -> Result<F> {
    env.validate()?;
    let h = p.homogeneous_linewidth(env.temperature);
    let x_sd = spectral_diffusion_product(env, p);
    if !(h >= F::zero()) || !(x_sd >= F::zero()) {
        return Err(Error::Domain(format!(
            "negative dephasing rate (Γh = {h}, Γ_SD·R = {x_sd})"
        )));
    }
    if h == F::zero() && x_sd == F::zero() {
        return Err(Error::InfiniteCoherence);
    }
    let pi = F::PI();
    if h > F::zero() {
        let ratio = x_sd / (pi * h * h);
        if ratio < F::lit(SERIES_THRESHOLD) {
            let bracket = F::one() - ratio / F::lit(4.0) + ratio * ratio / F::lit(8.0);
            return Ok(bracket / (pi * h));
        }
    }
    Ok(F::lit(2.0) / (pi * ((h * h + x_sd / pi).sqrt() + h)))
}

/// Effective homogeneous linewidth `1/(π T2)`, Hz.
pub fn effective_linewidth<F: Real>(env: &Environment<F>, p: &ModelParams<F>) -> Result<F> {
    Ok(F::one() / (F::PI() * coherence_time(env, p)?))
}
