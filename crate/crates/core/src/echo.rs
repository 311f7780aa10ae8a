//! Forward models for two- and three-pulse photon echo intensities.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::{BOLTZMANN, ER_EXCITED_LIFETIME};
use crate::error::{Error, Result};
use crate::model::{Environment, ModelParams, TlsDistribution};
use crate::quadrature::{integrate_tls, IntegrationPlan};
use crate::real::{sech2, Real};

/// Relative distance `|T_Z − T_1|/T_1` below which the population term uses
/// its coincident-lifetime limit.
pub const COINCIDENT_LIFETIME_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EchoKind {
    /// Delays are pulse separations `t12`.
    TwoPulse,
    /// Delays are waiting times `t23` at fixed `t12`.
    ThreePulse,
}

/// Echo intensity sampled at a list of delays.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EchoTrace<F> {
    pub kind: EchoKind,
    /// Delays in seconds, strictly increasing.
    pub delays: Vec<F>,
    pub intensities: Vec<F>,
    /// One-sigma uncertainty of each intensity, when known.
    pub stderr: Option<Vec<F>>,
    pub env: Option<Environment<F>>,
    /// Pulse separation of a three-pulse trace, s.
    pub t12_fixed: Option<F>,
}

impl<F: Real> EchoTrace<F> {
    pub fn two_pulse(delays: Vec<F>, intensities: Vec<F>) -> Result<Self> {
        let t = Self {
            kind: EchoKind::TwoPulse,
            delays,
            intensities,
            stderr: None,
            env: None,
            t12_fixed: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn three_pulse(t12: F, delays: Vec<F>, intensities: Vec<F>) -> Result<Self> {
        let t = Self {
            kind: EchoKind::ThreePulse,
            delays,
            intensities,
            stderr: None,
            env: None,
            t12_fixed: Some(t12),
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_env(mut self, env: Environment<F>) -> Self {
        self.env = Some(env);
        self
    }

    pub fn with_stderr(mut self, stderr: Vec<F>) -> Result<Self> {
        self.stderr = Some(stderr);
        self.validate()?;
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.delays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.delays.is_empty()
    }

    /// Delays must be strictly increasing and non-negative (positive for
    /// three-pulse traces); intensities non-negative; lengths equal.
    pub fn validate(&self) -> Result<()> {
        if self.delays.len() != self.intensities.len() {
            return Err(Error::InvalidParameter {
                name: "intensities",
                reason: format!(
                    "{} delays but {} intensities",
                    self.delays.len(),
                    self.intensities.len()
                ),
            });
        }
        if let Some(se) = &self.stderr {
            if se.len() != self.delays.len() {
                return Err(Error::InvalidParameter {
                    name: "stderr",
                    reason: "length differs from delays".into(),
                });
            }
        }
        check_delays(&self.delays, self.kind == EchoKind::ThreePulse)?;
        if let Some(i) = self.intensities.iter().position(|v| !(*v >= F::zero()) || !v.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "intensities",
                reason: format!("entry {i} is negative or not finite"),
            });
        }
        if self.kind == EchoKind::ThreePulse {
            match self.t12_fixed {
                Some(t) if t > F::zero() => {}
                _ => {
                    return Err(Error::InvalidParameter {
                        name: "t12_fixed",
                        reason: "three-pulse trace needs a positive t12".into(),
                    })
                }
            }
        }
        Ok(())
    }
}

fn check_delays<F: Real>(delays: &[F], strictly_positive: bool) -> Result<()> {
    for (i, &d) in delays.iter().enumerate() {
        let ok = if strictly_positive { d > F::zero() } else { d >= F::zero() };
        if !ok || !d.is_finite() {
            return Err(Error::InvalidParameter {
                name: "delays",
                reason: format!("entry {i} = {d} is out of range"),
            });
        }
        if i > 0 && !(d > delays[i - 1]) {
            return Err(Error::InvalidParameter {
                name: "delays",
                reason: format!("not strictly increasing at entry {i}"),
            });
        }
    }
    Ok(())
}

/// Two-pulse echo of a single homogeneous linewidth:
/// `I = I0 exp(−4π Γh t12)`.
pub fn simulate_2ppe_exponential<F: Real>(delays: &[F], gamma_h: F, i0: F) -> Result<EchoTrace<F>> {
    if !(gamma_h >= F::zero()) {
        return Err(Error::Domain(format!("gamma_h must be >= 0, got {gamma_h}")));
    }
    let k = F::lit(4.0) * F::PI() * gamma_h;
    let intensities = delays.iter().map(|&t| i0 * (-k * t).exp()).collect();
    EchoTrace::two_pulse(delays.to_vec(), intensities)
}

/// Analytic two-pulse echo for a single TLS class of rate `rate` and
/// spectral-diffusion width `gamma_sd`:
/// `I0 exp(−4π [Γh + Γ_SD (1 − e^{−R t12})] t12)`.
pub fn single_channel_intensity<F: Real>(t12: F, gamma_h: F, gamma_sd: F, rate: F, i0: F) -> F {
    let saturation = -(-rate * t12).exp_m1();
    i0 * (-F::lit(4.0) * F::PI() * (gamma_h + gamma_sd * saturation) * t12).exp()
}

/// One spectral-diffusion channel: amplitude `Γ_max` over a TLS
/// distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiffusionChannel<F> {
    pub gamma_max: F,
    pub dist: TlsDistribution<F>,
}

/// Two-pulse echo averaged over the TLS rate/energy distribution:
///
/// `I(t) = I0 ∬ exp(−4π [Γh(T) + Γ_SD(E, T)(1 − e^{−R t})] t) P(R, E) dR dE`,
/// with `Γh(T) = Γ0 + α0 T^n` from `p` and `P` normalized over its domain.
pub fn simulate_2ppe_integral<F: Real>(
    delays: &[F],
    p: &ModelParams<F>,
    dist: &TlsDistribution<F>,
    env: &Environment<F>,
    gamma_max: F,
    plan: &IntegrationPlan<F>,
    i0: F,
) -> Result<EchoTrace<F>> {
    simulate_2ppe_channels(
        delays,
        p,
        &[DiffusionChannel {
            gamma_max,
            dist: *dist,
        }],
        env,
        plan,
        i0,
    )
}

/// Several independent spectral-diffusion channels. Independent perturber
/// populations multiply their echo attenuations, so each channel is
/// averaged over its own distribution and the factors are combined.
pub fn simulate_2ppe_channels<F: Real>(
    delays: &[F],
    p: &ModelParams<F>,
    channels: &[DiffusionChannel<F>],
    env: &Environment<F>,
    plan: &IntegrationPlan<F>,
    i0: F,
) -> Result<EchoTrace<F>> {
    env.validate()?;
    plan.validate()?;
    check_delays(delays, false)?;
    for ch in channels {
        ch.dist.validate()?;
        if !(ch.gamma_max >= F::zero()) {
            return Err(Error::Domain(format!(
                "gamma_max must be >= 0, got {}",
                ch.gamma_max
            )));
        }
    }
    let temperature = env.temperature;
    let gamma_h = p.homogeneous_linewidth(temperature);
    let four_pi = F::lit(4.0) * F::PI();
    let two_kt = F::lit(2.0 * BOLTZMANN) * temperature;

    let intensities = delays
        .par_iter()
        .map(|&t| -> Result<F> {
            let mut value = i0 * (-four_pi * gamma_h * t).exp();
            if t == F::zero() {
                return Ok(value);
            }
            for ch in channels.iter().filter(|c| c.gamma_max > F::zero()) {
                let dist = TlsDistribution {
                    normalize: true,
                    ..ch.dist
                };
                let gmax = ch.gamma_max;
                let q = integrate_tls(
                    |rate, e| {
                        let sd = gmax * sech2(e / two_kt);
                        let saturation = -(-rate * t).exp_m1();
                        (-four_pi * sd * saturation * t).exp()
                    },
                    &dist,
                    temperature,
                    plan,
                )?;
                value *= q.value;
            }
            Ok(value)
        })
        .collect::<Result<Vec<F>>>()?;
    Ok(EchoTrace::two_pulse(delays.to_vec(), intensities)?.with_env(*env))
}

/// Population and spectral-diffusion parameters of a three-pulse echo.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThreePulseConfig<F> {
    /// Excited-state lifetime `T1`, s.
    pub t1_excited: F,
    /// Zeeman sublevel lifetime `T_Z`, s.
    pub tz_zeeman: F,
    /// Branching ratio into the other Zeeman sublevel.
    pub beta_branch: F,
    /// Effective linewidth at the reference time, Hz.
    pub gamma_t0: F,
    /// Logarithmic spectral-diffusion coefficient, Hz per decade.
    pub gamma_log: F,
    /// Reference time `t0`, s. `None` means `t12` plus the shortest `t23`
    /// of the trace.
    pub t0_ref: Option<F>,
}

impl<F: Real> ThreePulseConfig<F> {
    /// `T1` = 11 ms and otherwise neutral values.
    pub fn new(tz_zeeman: F, beta_branch: F, gamma_t0: F, gamma_log: F) -> Self {
        Self {
            t1_excited: F::lit(ER_EXCITED_LIFETIME),
            tz_zeeman,
            beta_branch,
            gamma_t0,
            gamma_log,
            t0_ref: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let pos = |name: &'static str, v: F| {
            if v > F::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be > 0, got {v}"),
                })
            }
        };
        let nonneg = |name: &'static str, v: F| {
            if v >= F::zero() && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter {
                    name,
                    reason: format!("must be >= 0, got {v}"),
                })
            }
        };
        pos("t1_excited", self.t1_excited)?;
        pos("tz_zeeman", self.tz_zeeman)?;
        nonneg("gamma_t0", self.gamma_t0)?;
        nonneg("gamma_log", self.gamma_log)?;
        if !(self.beta_branch >= F::zero() && self.beta_branch <= F::one()) {
            return Err(Error::InvalidParameter {
                name: "beta_branch",
                reason: format!("must lie in [0, 1], got {}", self.beta_branch),
            });
        }
        if let Some(t0) = self.t0_ref {
            pos("t0_ref", t0)?;
        }
        Ok(())
    }

    /// Reference time for a trace with pulse separation `t12` and shortest
    /// waiting time `t23_min`.
    pub fn reference_time(&self, t12: F, t23_min: F) -> F {
        self.t0_ref.unwrap_or(t12 + t23_min)
    }
}

/// Bracketed population term
/// `e^{−t/T1} + (β/2) T_Z/(T_Z − T1) (e^{−t/T_Z} − e^{−t/T1})`,
/// switching to `(β/2)(t/T1) e^{−t/T1}` for the second part when the two
/// lifetimes coincide.
pub fn population_term<F: Real>(t23: F, cfg: &ThreePulseConfig<F>) -> F {
    let t1 = cfg.t1_excited;
    let tz = cfg.tz_zeeman;
    let e1 = (-t23 / t1).exp();
    let half_beta = cfg.beta_branch / F::lit(2.0);
    let transfer = if ((tz - t1) / t1).abs() < F::lit(COINCIDENT_LIFETIME_TOL) {
        t23 / t1 * e1
    } else {
        // e^{-t/Tz} - e^{-t/T1} = e^{-t/T1} (e^{t/T1 - t/Tz} - 1)
        let diff = e1 * (t23 / t1 - t23 / tz).exp_m1();
        tz / (tz - t1) * diff
    };
    e1 + half_beta * transfer
}

/// Effective linewidth `Γ(t0) + γ log10(t23/t0)`.
pub fn log_diffusion_linewidth<F: Real>(t23: F, t0: F, cfg: &ThreePulseConfig<F>) -> F {
    cfg.gamma_t0 + cfg.gamma_log * (t23 / t0).log10()
}

/// Three-pulse echo intensity at a single waiting time.
pub fn three_pulse_intensity<F: Real>(t23: F, t12: F, t0: F, cfg: &ThreePulseConfig<F>, i0: F) -> F {
    let pop = population_term(t23, cfg);
    let gamma = log_diffusion_linewidth(t23, t0, cfg);
    i0 * pop * pop * (-F::lit(4.0) * F::PI() * t12 * gamma).exp()
}

/// Three-pulse echo over waiting times `t23_list`.
///
/// In `strict` mode a waiting time shorter than the reference time is a
/// domain error, since the logarithmic term would narrow the line below
/// `Γ(t0)`. Otherwise the logarithm is evaluated as written, failing only
/// if the resulting linewidth turns negative.
pub fn simulate_3ppe<F: Real>(
    t23_list: &[F],
    t12: F,
    cfg: &ThreePulseConfig<F>,
    i0: F,
    strict: bool,
) -> Result<EchoTrace<F>> {
    cfg.validate()?;
    if !(t12 > F::zero()) {
        return Err(Error::Domain(format!("t12 must be > 0, got {t12}")));
    }
    check_delays(t23_list, true)?;
    let Some(&t23_min) = t23_list.first() else {
        return Err(Error::InsufficientData("empty t23 list".into()));
    };
    let t0 = cfg.reference_time(t12, t23_min);
    let mut intensities = Vec::with_capacity(t23_list.len());
    for &t23 in t23_list {
        if strict && t23 < t0 {
            return Err(Error::Domain(format!(
                "t23 = {t23} s is below the reference time t0 = {t0} s"
            )));
        }
        if log_diffusion_linewidth(t23, t0, cfg) < F::zero() {
            return Err(Error::Domain(format!(
                "effective linewidth negative at t23 = {t23} s"
            )));
        }
        intensities.push(three_pulse_intensity(t23, t12, t0, cfg, i0));
    }
    EchoTrace::three_pulse(t12, t23_list.to_vec(), intensities)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    #[test]
    fn exponential_examples() {
        let gamma = 1.0 / (PI * 247e-9);
        assert_relative_eq!(gamma, 1.288_70e6, max_relative = 1e-5);
        let tr = simulate_2ppe_exponential(&[0.0, 247e-9 / 4.0], gamma, 2.0).unwrap();
        assert_eq!(tr.intensities[0], 2.0);
        assert_relative_eq!(tr.intensities[1], 2.0 / std::f64::consts::E, max_relative = 1e-14);

        let step = 2f64.ln() * 247e-9 / 4.0;
        let d: Vec<f64> = (0..6).map(|i| i as f64 * step).collect();
        let tr = simulate_2ppe_exponential(&d, gamma, 1.0).unwrap();
        for w in tr.intensities.windows(2) {
            assert_relative_eq!(w[1] / w[0], 0.5, max_relative = 1e-12);
        }
        assert!(simulate_2ppe_exponential(&[0.0], -1.0, 1.0).is_err());
    }

    #[test]
    fn trace_validation() {
        assert!(EchoTrace::two_pulse(vec![0.0, 1.0], vec![1.0]).is_err());
        assert!(EchoTrace::two_pulse(vec![1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(EchoTrace::two_pulse(vec![-1.0, 1.0], vec![1.0, 1.0]).is_err());
        assert!(EchoTrace::two_pulse(vec![0.0, 1.0], vec![1.0, -1.0]).is_err());
        assert!(EchoTrace::three_pulse(0.0, vec![1.0], vec![1.0]).is_err());
        assert!(EchoTrace::three_pulse(1.0, vec![0.0], vec![1.0]).is_err());
    }

    fn cfg(beta: f64, tz: f64, gamma_log: f64) -> ThreePulseConfig<f64> {
        ThreePulseConfig::new(tz, beta, 1e6, gamma_log)
    }

    #[test]
    fn three_pulse_pure_excited_decay() {
        let c = cfg(0.0, 0.1, 0.0);
        let t12 = 50e-9;
        let t23: Vec<f64> = (1..20).map(|i| i as f64 * 1e-3).collect();
        let tr = simulate_3ppe(&t23, t12, &c, 1.0, false).unwrap();
        for (t, i) in t23.iter().zip(&tr.intensities) {
            let expect = (-2.0 * t / 11e-3).exp() * (-4.0 * PI * t12 * 1e6).exp();
            assert_relative_eq!(*i, expect, max_relative = 1e-12);
        }
    }

    #[test]
    fn three_pulse_reference_and_decade() {
        let mut c = cfg(0.3, 0.2, 0.376e6);
        c.t0_ref = Some(1e-6);
        assert_eq!(log_diffusion_linewidth(1e-6, 1e-6, &c), c.gamma_t0);
        let t12 = 50e-9;
        let a = three_pulse_intensity(1e-5, t12, 1e-6, &c, 1.0) / population_term(1e-5, &c).powi(2);
        let b = three_pulse_intensity(1e-4, t12, 1e-6, &c, 1.0) / population_term(1e-4, &c).powi(2);
        // exp(-4π · 50 ns · 0.376 MHz) = exp(-0.236248)
        assert_relative_eq!(b / a, (-4.0 * PI * 50e-9 * 0.376e6f64).exp(), max_relative = 1e-12);
        assert_relative_eq!(b / a, 0.789_585, max_relative = 1e-5);
        // population term is one at t23 = 0
        assert_eq!(population_term(0.0, &c), 1.0);
    }

    #[test]
    fn strict_mode_rejects_short_waits() {
        let c = cfg(0.3, 0.2, 0.376e6);
        let t23 = [1e-6, 1e-5];
        assert!(simulate_3ppe(&t23, 50e-9, &c, 1.0, true).is_err());
        assert!(simulate_3ppe(&t23, 50e-9, &c, 1.0, false).is_ok());
    }

    #[test]
    fn coincident_lifetimes_are_continuous() {
        let t1 = 11e-3;
        let limit = cfg(0.8, t1, 0.0);
        for &t in &[1e-4, 5e-3, 2e-2] {
            let at = population_term(t, &limit);
            for &d in &[1e-5, -1e-5, 2e-6] {
                let near = population_term(t, &cfg(0.8, t1 * (1.0 + d), 0.0));
                assert_relative_eq!(at, near, max_relative = 1e-4);
            }
        }
    }

    #[test]
    fn integral_without_diffusion_is_exponential() {
        let p = ModelParams::<f64>::table_one(1e6);
        let env = Environment::new(0.1, 0.7).unwrap();
        let d: Vec<f64> = (0..10).map(|i| i as f64 * 1e-7).collect();
        let tr = simulate_2ppe_integral(&d, &p, &TlsDistribution::default(), &env, 0.0, &IntegrationPlan::default(), 1.0).unwrap();
        let ex = simulate_2ppe_exponential(&d, p.homogeneous_linewidth(0.7), 1.0).unwrap();
        assert_eq!(tr.intensities, ex.intensities);
    }
}
