mod common;

use approx::assert_relative_eq;
use common::{lin_grid, log_grid};
use glassecho::fit::minimize::{minimize, MinimizeOptions};
use glassecho::{
    effective_linewidth, fit_3ppe_diffusion, fit_exponential_decay, fit_linewidth_surface,
    simulate_2ppe_exponential, simulate_2ppe_integral, simulate_3ppe, EchoTrace, Environment,
    FitStatus, IntegrationPlan, LinewidthPoint, ModelParams, ParamName, SurfaceBounds,
    ThreePulseConfig, ThreePulseParam, TlsDistribution,
};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use std::f64::consts::PI;

fn table_grid(p: &ModelParams<f64>) -> Vec<LinewidthPoint<f64>> {
    let mut out = Vec::new();
    for &b in &log_grid(0.02, 2.0, 12) {
        for &t in &lin_grid(0.6, 1.3, 8) {
            let env = Environment::new(b, t).unwrap();
            let g = effective_linewidth(&env, p).unwrap();
            out.push(LinewidthPoint { env, linewidth: g, sigma: 0.05 * g });
        }
    }
    out
}

fn perturbed(p: &ModelParams<f64>) -> ModelParams<f64> {
    ModelParams {
        alpha0: p.alpha0 * 1.2,
        n: p.n * 1.2,
        g_env: p.g_env * 0.8,
        c1: p.c1 * 1.2,
        c2: p.c2 * 0.8,
        ..*p
    }
}

#[test]
fn decay_round_trip_396ns() {
    let gamma = 1.0 / (PI * 396e-9);
    let delays = lin_grid(0.0, 1.2e-6, 30);
    let tr = simulate_2ppe_exponential(&delays, gamma, 0.7).unwrap();
    for first in [false, true] {
        let fit = fit_exponential_decay(&tr, first).unwrap();
        assert_relative_eq!(fit.value("t2").unwrap(), 396e-9, max_relative = 1e-6);
    }
}

#[test]
fn decay_fit_is_scale_invariant() {
    let delays = lin_grid(0.0, 1e-6, 25);
    let tr = simulate_2ppe_integral(
        &delays,
        &ModelParams::table_one_calibrated(),
        &TlsDistribution::default(),
        &Environment::new(0.05, 0.7).unwrap(),
        3e6,
        &IntegrationPlan::default(),
        1.0,
    )
    .unwrap();
    let base = fit_exponential_decay(&tr, true).unwrap();
    let scaled = |c: f64| EchoTrace {
        intensities: tr.intensities.iter().map(|i| i * c).collect(),
        ..tr.clone()
    };
    for &c in &[0.25, 8.0, 1024.0] {
        let f = fit_exponential_decay(&scaled(c), true).unwrap();
        assert_eq!(f.value("gamma"), base.value("gamma"));
        assert_relative_eq!(f.value("i0").unwrap(), c * base.value("i0").unwrap(), max_relative = 1e-14);
    }
    let f = fit_exponential_decay(&scaled(3.7), true).unwrap();
    assert_relative_eq!(f.value("gamma").unwrap(), base.value("gamma").unwrap(), max_relative = 1e-12);
}

#[test]
fn first_decade_fit_is_faster_than_full_range() {
    let delays = lin_grid(0.0, 3e-6, 60);
    let tr = simulate_2ppe_integral(
        &delays,
        &ModelParams::table_one_calibrated(),
        &TlsDistribution::default(),
        &Environment::new(0.05, 0.7).unwrap(),
        5e6,
        &IntegrationPlan::default(),
        1.0,
    )
    .unwrap();
    let first = fit_exponential_decay(&tr, true).unwrap().value("gamma").unwrap();
    let full = fit_exponential_decay(&tr, false).unwrap().value("gamma").unwrap();
    assert!(first > full, "first decade {first}, full {full}");
}

#[test]
fn surface_round_trip() {
    let truth = ModelParams::table_one_calibrated();
    let data = table_grid(&truth);
    let fit = fit_linewidth_surface(&data, &perturbed(&truth), &ParamName::DEFAULT_FIXED, &SurfaceBounds::default()).unwrap();
    assert!(fit.converged, "{:?}", fit.status);
    for name in [ParamName::Alpha0, ParamName::N, ParamName::GEnv, ParamName::C1, ParamName::C2] {
        let got = fit.value(name.as_str()).unwrap();
        let want = name.get(&truth);
        assert!((got / want - 1.0).abs() < 1e-3, "{name}: {got} vs {want}");
    }
    // the true zero-temperature width sits on its bound
    assert!(fit.value("gamma0").unwrap() < 1e3);
    assert_eq!(fit.param("gamma_s0").unwrap().uncertainty, Some(0.0));
}

#[test]
fn surface_reports_bound_saturation() {
    let truth = ModelParams::table_one_calibrated();
    let data = table_grid(&truth);
    let mut b = SurfaceBounds::default();
    b.set(ParamName::GEnv, 0.0, 12.0);
    let mut p0 = perturbed(&truth);
    p0.g_env = 11.0;
    let fit = fit_linewidth_surface(&data, &p0, &ParamName::DEFAULT_FIXED, &b).unwrap();
    assert_eq!(fit.status, FitStatus::ConvergedAtBound);
    assert!(fit.active_bounds.iter().any(|n| n == "g_env"));
    assert!(fit.value("g_env").unwrap() <= 12.0);
}

fn three_pulse_trace(gamma_log: f64, noise: Option<(f64, u64)>) -> (EchoTrace<f64>, ThreePulseConfig<f64>) {
    let mut cfg = ThreePulseConfig::new(0.1, 0.5, 0.6e6, gamma_log);
    cfg.t0_ref = None;
    let t23 = log_grid(1e-6, 35e-3, 60);
    let mut tr = simulate_3ppe(&t23, 50e-9, &cfg, 1.0, false).unwrap();
    if let Some((rel, seed)) = noise {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = Normal::new(0.0, rel).unwrap();
        for i in tr.intensities.iter_mut() {
            *i *= 1.0 + n.sample(&mut rng);
        }
        tr.stderr = Some(tr.intensities.iter().map(|i| i * rel).collect());
    }
    (tr, cfg)
}

fn start_from(cfg: &ThreePulseConfig<f64>) -> ThreePulseConfig<f64> {
    ThreePulseConfig {
        tz_zeeman: cfg.tz_zeeman * 1.2,
        beta_branch: cfg.beta_branch * 0.8,
        gamma_log: cfg.gamma_log * 1.2,
        ..*cfg
    }
}

#[test]
fn three_pulse_round_trip_reference_gammas() {
    for &g in &[0.376e6, 0.410e6] {
        let (tr, cfg) = three_pulse_trace(g, None);
        let fit = fit_3ppe_diffusion(&[tr], &start_from(&cfg), &ThreePulseParam::DEFAULT_FIXED).unwrap();
        assert!((fit.value("gamma_log").unwrap() / g - 1.0).abs() < 1e-4);
        assert!((fit.value("tz").unwrap() / 0.1 - 1.0).abs() < 1e-4);
        assert!((fit.value("beta").unwrap() / 0.5 - 1.0).abs() < 1e-4);
    }
}

#[test]
fn three_pulse_noisy_gamma_within_two_percent() {
    let (tr, cfg) = three_pulse_trace(0.410e6, Some((0.02, 17)));
    let fit = fit_3ppe_diffusion(&[tr], &start_from(&cfg), &ThreePulseParam::DEFAULT_FIXED).unwrap();
    let g = fit.value("gamma_log").unwrap();
    assert!((g / 0.410e6 - 1.0).abs() < 0.02, "gamma_log {g}");
}

#[test]
fn three_pulse_null_branching_recovered() {
    let mut cfg = ThreePulseConfig::new(0.1, 0.0, 0.6e6, 0.376e6);
    cfg.t0_ref = None;
    let t23 = log_grid(1e-6, 35e-3, 60);
    let mut tr = simulate_3ppe(&t23, 50e-9, &cfg, 1.0, false).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let n = Normal::new(0.0, 0.01).unwrap();
    for i in tr.intensities.iter_mut() {
        *i *= 1.0 + n.sample(&mut rng);
    }
    let start = ThreePulseConfig { beta_branch: 0.2, ..cfg };
    let fixed = [ThreePulseParam::T1, ThreePulseParam::GammaT0, ThreePulseParam::Tz];
    let fit = fit_3ppe_diffusion(&[tr], &start, &fixed).unwrap();
    let beta = fit.param("beta").unwrap();
    let u = beta.uncertainty.unwrap_or(0.0);
    assert!(beta.value <= 2.0 * u + 1e-9, "beta {} ± {u}", beta.value);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn bounded_minimizer_stays_inside(lo in -2.0..0.5f64, width in 0.1..3.0f64, c in -3.0..3.0f64) {
        let hi = lo + width;
        let f = |p: &[f64]| vec![p[0] - c, 0.3 * (p[1] + c), p[0] * p[1] - c * 0.5];
        let m = minimize(f, &[lo, hi], &[lo, lo], &[hi, hi], &MinimizeOptions::default()).unwrap();
        for &v in &m.params {
            prop_assert!(v >= lo && v <= hi);
        }
    }

    #[test]
    fn exponential_round_trip(t2 in 50e-9..2e-6f64, i0 in 1e-3..1e3f64) {
        let delays = lin_grid(0.0, 2.0 * t2, 20);
        let tr = simulate_2ppe_exponential(&delays, 1.0 / (PI * t2), i0).unwrap();
        let fit = fit_exponential_decay(&tr, false).unwrap();
        prop_assert!((fit.value("t2").unwrap() / t2 - 1.0).abs() < 1e-6);
        prop_assert!((fit.value("i0").unwrap() / i0 - 1.0).abs() < 1e-6);
    }
}
