use approx::assert_relative_eq;
use glassecho::constants::BOLTZMANN;
use glassecho::real::sech2;
use glassecho::{
    coherence_time, effective_linewidth, flip_rate, gamma_sd, r_max, Environment, ModelParams,
    TlsDistribution,
};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = ModelParams<f64>> {
    (
        0.0..2e6f64,
        0.0..3e6f64,
        1.0..=1.5f64,
        0.0..=18.0f64,
        0.0..1e22f64,
        0.0..1e15f64,
    )
        .prop_map(|(gamma0, alpha0, n, g_env, c1, c2)| ModelParams {
            gamma0,
            alpha0,
            n,
            g_env,
            c1,
            c2,
            ..ModelParams::table_one_calibrated()
        })
}

fn env() -> impl Strategy<Value = Environment<f64>> {
    (0.0..5.0f64, 0.05..5.0f64).prop_map(|(b, t)| Environment::new(b, t).unwrap())
}

#[test]
fn sech2_matches_series_oracle() {
    // sech²(1) from 1/cosh² with cosh summed as a power series
    let cosh: f64 = (0..30)
        .map(|k| 1.0 / (1..=2 * k).map(|i| i as f64).product::<f64>())
        .sum();
    assert_relative_eq!(sech2(1.0f64), 1.0 / (cosh * cosh), max_relative = 1e-15);
    let kt = BOLTZMANN * 0.7;
    assert_relative_eq!(
        gamma_sd(2.0 * kt, 0.7, 1e6).unwrap(),
        0.419_974_341_614_026_1e6,
        max_relative = 1e-12
    );
}

#[test]
fn strong_field_without_tls_term_returns_homogeneous_width() {
    let mut p = ModelParams::table_one_calibrated();
    p.c2 = 0.0;
    let t = 0.9;
    let g = effective_linewidth(&Environment::new(50.0, t).unwrap(), &p).unwrap();
    assert_relative_eq!(g, p.homogeneous_linewidth(t), max_relative = 1e-12);
}

proptest! {
    #[test]
    fn gamma_sd_even_and_decreasing(e in 0.0..1e-21f64, de in 1e-26..1e-22f64, t in 0.05..5.0f64) {
        let a = gamma_sd(e, t, 1e6).unwrap();
        prop_assert_eq!(a, gamma_sd(-e, t, 1e6).unwrap());
        prop_assert!(gamma_sd(e + de, t, 1e6).unwrap() <= a);
        prop_assert!((0.0..=1e6).contains(&a));
    }

    #[test]
    fn coherence_time_and_linewidth_are_reciprocal(p in params(), env in env()) {
        prop_assume!(p.homogeneous_linewidth(env.temperature) > 0.0);
        let t2 = coherence_time(&env, &p).unwrap();
        let g = effective_linewidth(&env, &p).unwrap();
        prop_assert!((t2 * std::f64::consts::PI * g - 1.0).abs() < 4.0 * f64::EPSILON);
    }

    #[test]
    fn spectral_diffusion_only_broadens(p in params(), env in env()) {
        prop_assume!(p.homogeneous_linewidth(env.temperature) > 0.0);
        let g = effective_linewidth(&env, &p).unwrap();
        prop_assert!(g >= p.homogeneous_linewidth(env.temperature) * (1.0 - 1e-12));
    }

    #[test]
    fn zero_field_rate_ignores_tls_term(p in params(), t in 0.05..5.0f64, c2 in 0.0..1e16f64) {
        let env = Environment::new(0.0, t).unwrap();
        let mut q = p;
        q.c2 = c2;
        prop_assert_eq!(flip_rate(&env, &p), flip_rate(&env, &q));
    }

    #[test]
    fn r_max_increasing_in_energy(e in 1e-26..1e-21f64, f in 1.001..10.0f64, t in 0.05..5.0f64) {
        let d = TlsDistribution::default();
        prop_assert!(r_max(e * f, t, &d).unwrap() > r_max(e, t, &d).unwrap());
    }

    #[test]
    fn f32_tracks_f64(p in params(), env in env()) {
        prop_assume!(p.homogeneous_linewidth(env.temperature) > 1e3);
        let g64 = effective_linewidth(&env, &p).unwrap();
        let p32 = ModelParams::<f32> {
            gamma0: p.gamma0 as f32,
            alpha0: p.alpha0 as f32,
            n: p.n as f32,
            g_env: p.g_env as f32,
            c1: p.c1 as f32,
            c2: p.c2 as f32,
            gamma_s0: p.gamma_s0 as f32,
            gamma_s_slope: p.gamma_s_slope as f32,
        };
        let e32 = Environment::new(env.field as f32, env.temperature as f32).unwrap();
        let g32 = effective_linewidth(&e32, &p32).unwrap() as f64;
        prop_assert!((g32 / g64 - 1.0).abs() < 1e-4, "{} vs {}", g32, g64);
    }
}
