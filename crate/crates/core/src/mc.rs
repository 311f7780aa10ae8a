//! Monte-Carlo sudden-jump model of spectral diffusion.
//!
//! Every probed ion sees a set of two-state perturbers. Each perturber
//! flips at Poisson times (a telegraph process obeying detailed balance at
//! the sample temperature) and shifts the ion's optical frequency while in
//! its upper state. The phase accumulated before the rephasing pulse is
//! subtracted from the phase accumulated after it; the echo intensity is
//! `|⟨e^{iφ}⟩|²` over the ensemble.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::constants::BOLTZMANN;
use crate::echo::EchoTrace;
use crate::error::{Error, Result};
use crate::fit::{fit_exponential_decay, FitResult};
use crate::real::Real;

/// Ions per deterministic work unit. Partial sums are formed per chunk and
/// combined in chunk order, so results do not depend on the thread count.
const CHUNK: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerturberClass<F> {
    /// Total relaxation rate `R = k_up + k_down`, Hz.
    pub flip_rate: F,
    /// Energy splitting, J.
    pub e_split: F,
    /// Frequency shift of the probe while the perturber is excited, Hz.
    pub shift: F,
    /// Perturbers of this class per ion.
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McEnsembleConfig<F> {
    pub classes: Vec<PerturberClass<F>>,
    pub n_ions: usize,
    pub seed: u64,
    /// K.
    pub temperature: F,
}

impl<F: Real> McEnsembleConfig<F> {
    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::InvalidParameter {
                name: "classes",
                reason: "at least one perturber class is required".into(),
            });
        }
        if self.n_ions < 1 {
            return Err(Error::InvalidParameter {
                name: "n_ions",
                reason: "must be >= 1".into(),
            });
        }
        if !(self.temperature > F::zero()) {
            return Err(Error::Domain(format!(
                "temperature must be > 0, got {}",
                self.temperature
            )));
        }
        for c in &self.classes {
            if !(c.flip_rate > F::zero()) || !c.flip_rate.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "flip_rate",
                    reason: format!("must be > 0, got {}", c.flip_rate),
                });
            }
            if c.count < 1 {
                return Err(Error::InvalidParameter {
                    name: "count",
                    reason: "must be >= 1".into(),
                });
            }
            if !c.shift.is_finite() || !c.e_split.is_finite() {
                return Err(Error::InvalidParameter {
                    name: "shift",
                    reason: "shift and e_split must be finite".into(),
                });
            }
        }
        Ok(())
    }
}

/// Thermal probability of the upper state, `1/(1 + e^{E/kT})`.
pub fn upper_state_probability<F: Real>(e_split: F, temperature: F) -> F {
    let x = e_split / (F::lit(BOLTZMANN) * temperature);
    F::one() / (F::one() + x.exp())
}

/// One realization of a telegraph process on `[0, duration]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TelegraphPath<F> {
    pub initial_up: bool,
    /// Flip times, increasing.
    pub flips: Vec<F>,
    // time spent in the upper state before each flip
    cumulative: Vec<F>,
}

impl<F: Real> TelegraphPath<F> {
    fn new(initial_up: bool, flips: Vec<F>) -> Self {
        let mut cumulative = Vec::with_capacity(flips.len());
        let mut acc = F::zero();
        let mut last = F::zero();
        let mut up = initial_up;
        for &t in &flips {
            if up {
                acc += t - last;
            }
            cumulative.push(acc);
            last = t;
            up = !up;
        }
        Self {
            initial_up,
            flips,
            cumulative,
        }
    }

    /// State at time `t`.
    pub fn is_up(&self, t: F) -> bool {
        let k = self.flips.partition_point(|&f| f <= t);
        self.initial_up ^ (k % 2 == 1)
    }

    /// Time spent in the upper state during `[0, t]`, integrated exactly
    /// over the piecewise-constant path.
    pub fn occupation(&self, t: F) -> F {
        let k = self.flips.partition_point(|&f| f <= t);
        if k == 0 {
            return if self.initial_up { t } else { F::zero() };
        }
        let up = self.initial_up ^ (k % 2 == 1);
        let base = self.cumulative[k - 1];
        if up {
            base + (t - self.flips[k - 1])
        } else {
            base
        }
    }
}

fn exponential<F: Real, R: Rng>(rng: &mut R, rate: F) -> F {
    // 1 - u lies in (0, 1]
    let u: f64 = rng.random();
    -F::lit((1.0 - u).ln()) / rate
}

/// Samples a stationary telegraph path. Upward and downward rates are
/// `R·p_up` and `R·(1 − p_up)`, so their ratio is the Boltzmann factor and
/// their sum the class flip rate.
pub fn sample_telegraph<F: Real, R: Rng>(
    rng: &mut R,
    class: &PerturberClass<F>,
    temperature: F,
    duration: F,
) -> TelegraphPath<F> {
    let p_up = upper_state_probability(class.e_split, temperature);
    let k_up = class.flip_rate * p_up;
    let k_down = class.flip_rate * (F::one() - p_up);
    let initial_up = rng.random::<f64>() < p_up.to_f64_lossy();
    let mut up = initial_up;
    let mut t = F::zero();
    let mut flips = Vec::new();
    loop {
        let rate = if up { k_down } else { k_up };
        if !(rate > F::zero()) {
            break;
        }
        t += exponential(rng, rate);
        if t > duration {
            break;
        }
        flips.push(t);
        up = !up;
    }
    TelegraphPath::new(initial_up, flips)
}

/// Per-ion random stream derived from the ensemble seed and ion index.
pub fn ion_rng(seed: u64, ion: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(ion);
    rng
}

#[derive(Clone, Copy, Default)]
struct Moments<F> {
    cos: F,
    sin: F,
    cos2: F,
    sin2: F,
    cross: F,
}

/// Echo phase for every delay for one ion.
fn ion_phases<F: Real>(cfg: &McEnsembleConfig<F>, delays: &[F], ion: u64) -> Vec<F> {
    let mut rng = ion_rng(cfg.seed, ion);
    let horizon = delays.last().copied().unwrap_or_else(F::zero) * F::lit(2.0);
    let two_pi = F::lit(2.0) * F::PI();
    let mut phases = vec![F::zero(); delays.len()];
    for class in &cfg.classes {
        for _ in 0..class.count {
            let path = sample_telegraph(&mut rng, class, cfg.temperature, horizon);
            if class.shift == F::zero() {
                continue;
            }
            for (phi, &tau) in phases.iter_mut().zip(delays) {
                // +∫_0^τ before the rephasing pulse, −∫_τ^{2τ} after it
                let first = path.occupation(tau);
                let total = path.occupation(tau + tau);
                *phi += two_pi * class.shift * (first + first - total);
            }
        }
    }
    phases
}

/// Ensemble-averaged two-pulse echo of the sudden-jump model.
///
/// Returns the intensity `|⟨e^{iφ}⟩|²` with the `O(1/N)` bias of the
/// squared sample mean removed (clamped at zero), and a delta-method
/// standard error in [`EchoTrace::stderr`].
pub fn mc_echo_2ppe<F: Real>(delays: &[F], cfg: &McEnsembleConfig<F>) -> Result<EchoTrace<F>> {
    cfg.validate()?;
    let n_delays = delays.len();
    let n_chunks = cfg.n_ions.div_ceil(CHUNK);
    let chunk_sums: Vec<Vec<Moments<F>>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut sums = vec![Moments::default(); n_delays];
            let start = c * CHUNK;
            let end = (start + CHUNK).min(cfg.n_ions);
            for ion in start..end {
                let phases = ion_phases(cfg, delays, ion as u64);
                for (m, phi) in sums.iter_mut().zip(phases) {
                    let (s, co) = phi.sin_cos();
                    m.cos += co;
                    m.sin += s;
                    m.cos2 += co * co;
                    m.sin2 += s * s;
                    m.cross += co * s;
                }
            }
            sums
        })
        .collect();

    let mut totals = vec![Moments::<F>::default(); n_delays];
    for chunk in &chunk_sums {
        for (t, m) in totals.iter_mut().zip(chunk) {
            t.cos += m.cos;
            t.sin += m.sin;
            t.cos2 += m.cos2;
            t.sin2 += m.sin2;
            t.cross += m.cross;
        }
    }

    let n = F::from_usize(cfg.n_ions).unwrap();
    let mut intensities = Vec::with_capacity(n_delays);
    let mut stderr = Vec::with_capacity(n_delays);
    for m in &totals {
        let c = m.cos / n;
        let s = m.sin / n;
        let (var_c, var_s, cov) = if cfg.n_ions > 1 {
            let bessel = n / (n - F::one());
            (
                ((m.cos2 / n - c * c) * bessel).max(F::zero()),
                ((m.sin2 / n - s * s) * bessel).max(F::zero()),
                (m.cross / n - c * s) * bessel,
            )
        } else {
            (F::zero(), F::zero(), F::zero())
        };
        let raw = c * c + s * s;
        let intensity = (raw - (var_c + var_s) / n).max(F::zero());
        let four = F::lit(4.0);
        let first_order = four * (c * c * var_c + s * s * var_s + F::lit(2.0) * c * s * cov) / n;
        let second_order = F::lit(2.0) * (var_c * var_c + var_s * var_s) / (n * n);
        intensities.push(intensity);
        stderr.push((first_order.max(F::zero()) + second_order).sqrt());
    }
    EchoTrace::two_pulse(delays.to_vec(), intensities)?.with_stderr(stderr)
}

/// Linewidth extracted from the Monte-Carlo echo by a single-exponential
/// fit over the first decade of the decay.
#[derive(Debug, Clone, PartialEq)]
pub struct McLinewidth<F> {
    pub linewidth: F,
    pub uncertainty: Option<F>,
    pub trace: EchoTrace<F>,
    pub fit: FitResult<F>,
}

pub fn mc_linewidth<F: Real>(delays: &[F], cfg: &McEnsembleConfig<F>) -> Result<McLinewidth<F>> {
    let trace = mc_echo_2ppe(delays, cfg)?;
    linewidth_from_trace(trace)
}

/// Applies the first-decade exponential fit to an existing echo trace.
pub fn linewidth_from_trace<F: Real>(trace: EchoTrace<F>) -> Result<McLinewidth<F>> {
    let first = trace.intensities.first().copied().unwrap_or_else(F::zero);
    let last = trace.intensities.iter().copied().fold(F::infinity(), F::min);
    if !(first > F::zero()) || last > first / F::lit(std::f64::consts::E) {
        return Err(Error::NoDecay(
            "echo does not fall below 1/e of its initial value within the sampled delays".into(),
        ));
    }
    let fit = fit_exponential_decay(&trace, true)?;
    let gamma = fit.param("gamma").expect("decay fit reports gamma");
    Ok(McLinewidth {
        linewidth: gamma.value,
        uncertainty: gamma.uncertainty,
        trace,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn class(rate: f64, shift: f64) -> PerturberClass<f64> {
        PerturberClass {
            flip_rate: rate,
            e_split: 0.0,
            shift,
            count: 1,
        }
    }

    fn cfg(classes: Vec<PerturberClass<f64>>, n: usize) -> McEnsembleConfig<f64> {
        McEnsembleConfig {
            classes,
            n_ions: n,
            seed: 7,
            temperature: 0.7,
        }
    }

    #[test]
    fn occupation_integrates_path() {
        let p = TelegraphPath::new(true, vec![1.0, 3.0, 4.5]);
        assert_eq!(p.occupation(0.5), 0.5);
        assert_eq!(p.occupation(2.0), 1.0);
        assert_eq!(p.occupation(3.5), 1.5);
        assert_eq!(p.occupation(5.0), 2.5);
        assert!(p.is_up(0.1) && !p.is_up(2.0) && p.is_up(3.2) && !p.is_up(6.0));
        let q = TelegraphPath::new(false, vec![]);
        assert_eq!(q.occupation(10.0), 0.0);
    }

    #[test]
    fn zero_shift_never_dephases() {
        let d = [1e-7, 5e-7, 1e-6];
        let tr = mc_echo_2ppe(&d, &cfg(vec![class(1e6, 0.0)], 500)).unwrap();
        assert!(tr.intensities.iter().all(|&i| i == 1.0));
    }

    #[test]
    fn frozen_perturbers_rephase() {
        let d = [1e-7, 5e-7, 1e-6];
        let tr = mc_echo_2ppe(&d, &cfg(vec![class(1e-6, 5e6)], 2000)).unwrap();
        for &i in &tr.intensities {
            assert_relative_eq!(i, 1.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn seeded_runs_are_reproducible() {
        let d = [1e-7, 3e-7];
        let c = cfg(vec![class(3e6, 1e6)], 700);
        let a = mc_echo_2ppe(&d, &c).unwrap();
        let b = mc_echo_2ppe(&d, &c).unwrap();
        assert_eq!(a, b);
        let single = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let s = single.install(|| mc_echo_2ppe(&d, &c).unwrap());
        assert_eq!(a, s);
    }

    #[test]
    fn thermal_occupation_at_zero_splitting() {
        let c = class(1e3, 0.0);
        let mut rng = ion_rng(11, 0);
        let duration = 1e3;
        let path = sample_telegraph(&mut rng, &c, 0.7, duration);
        let frac = path.occupation(duration) / duration;
        assert!((frac - 0.5).abs() < 0.01, "fraction {frac}");
    }

    #[test]
    fn thermal_occupation_follows_boltzmann() {
        let t = 0.7;
        let e = BOLTZMANN * t * 1.5;
        let c = PerturberClass { flip_rate: 1e3, e_split: e, shift: 0.0, count: 1 };
        let mut rng = ion_rng(3, 1);
        let duration = 2e3;
        let path = sample_telegraph(&mut rng, &c, t, duration);
        let frac = path.occupation(duration) / duration;
        let expect = 1.0 / (1.0 + 1.5f64.exp());
        assert!((frac - expect).abs() < 0.01, "fraction {frac} vs {expect}");
    }

    #[test]
    fn config_validation() {
        assert!(cfg(vec![], 10).validate().is_err());
        assert!(cfg(vec![class(0.0, 1.0)], 10).validate().is_err());
        assert!(cfg(vec![class(1.0, 1.0)], 0).validate().is_err());
        let mut c = cfg(vec![class(1.0, 1.0)], 1);
        c.classes[0].count = 0;
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_shift_linewidth_is_an_error() {
        let d: Vec<f64> = (1..10).map(|i| i as f64 * 1e-7).collect();
        let r = mc_linewidth(&d, &cfg(vec![class(1e6, 0.0)], 100));
        assert!(matches!(r, Err(Error::NoDecay(_))));
    }
}
