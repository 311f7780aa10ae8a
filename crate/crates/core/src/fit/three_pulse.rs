use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::echo::{three_pulse_intensity, EchoKind, EchoTrace, ThreePulseConfig};
use crate::error::{Error, Result};
use crate::fit::minimize::{minimize, scaled_condition, weakest_direction, MinimizeOptions};
use crate::fit::FitResult;
use crate::real::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ThreePulseParam {
    I0,
    Beta,
    Tz,
    GammaLog,
    GammaT0,
    T1,
}

impl ThreePulseParam {
    pub const ALL: [ThreePulseParam; 6] = [
        ThreePulseParam::I0,
        ThreePulseParam::Beta,
        ThreePulseParam::Tz,
        ThreePulseParam::GammaLog,
        ThreePulseParam::GammaT0,
        ThreePulseParam::T1,
    ];

    /// `T1` and `Γ(t0)` are usually known from other measurements.
    pub const DEFAULT_FIXED: [ThreePulseParam; 2] = [ThreePulseParam::T1, ThreePulseParam::GammaT0];

    pub fn as_str(self) -> &'static str {
        match self {
            ThreePulseParam::I0 => "i0",
            ThreePulseParam::Beta => "beta",
            ThreePulseParam::Tz => "tz",
            ThreePulseParam::GammaLog => "gamma_log",
            ThreePulseParam::GammaT0 => "gamma_t0",
            ThreePulseParam::T1 => "t1",
        }
    }

    fn index(self) -> usize {
        ThreePulseParam::ALL.iter().position(|&p| p == self).unwrap()
    }
}

impl fmt::Display for ThreePulseParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ThreePulseParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ThreePulseParam::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "param",
                reason: format!("unknown three-pulse parameter '{s}'"),
            })
    }
}

// i0, beta, tz, gamma_log, gamma_t0, t1
fn unpack(cfg0: &ThreePulseConfig<f64>, x: &[f64; 6]) -> (ThreePulseConfig<f64>, f64) {
    let cfg = ThreePulseConfig {
        beta_branch: x[1],
        tz_zeeman: x[2],
        gamma_log: x[3],
        gamma_t0: x[4],
        t1_excited: x[5],
        t0_ref: cfg0.t0_ref,
    };
    (cfg, x[0])
}

/// Joint fit of three-pulse traces sharing one population and diffusion
/// model, with residuals in log intensity.
///
/// `cfg0` supplies starting values and the values of fixed parameters;
/// the starting `i0` is estimated from the first point of the first trace.
/// Each trace uses its own reference time unless `cfg0.t0_ref` is set.
pub fn fit_3ppe_diffusion<F: Real>(
    traces: &[EchoTrace<F>],
    cfg0: &ThreePulseConfig<F>,
    fixed: &[ThreePulseParam],
) -> Result<FitResult<F>> {
    cfg0.validate()?;
    if traces.is_empty() {
        return Err(Error::InsufficientData("no traces".into()));
    }
    let to = |v: F| v.to_f64_lossy();
    let c0 = ThreePulseConfig {
        t1_excited: to(cfg0.t1_excited),
        tz_zeeman: to(cfg0.tz_zeeman),
        beta_branch: to(cfg0.beta_branch),
        gamma_t0: to(cfg0.gamma_t0),
        gamma_log: to(cfg0.gamma_log),
        t0_ref: cfg0.t0_ref.map(to),
    };

    struct Series {
        t12: f64,
        t0: f64,
        t23: Vec<f64>,
        log_i: Vec<f64>,
        w: Vec<f64>,
    }
    let mut series = Vec::with_capacity(traces.len());
    let mut widest = 0.0f64;
    for (k, tr) in traces.iter().enumerate() {
        tr.validate()?;
        if tr.kind != EchoKind::ThreePulse {
            return Err(Error::InvalidParameter {
                name: "traces",
                reason: format!("trace {k} is not a three-pulse trace"),
            });
        }
        let t12 = to(tr.t12_fixed.expect("validated three-pulse trace"));
        let t23: Vec<f64> = tr.delays.iter().map(|&v| to(v)).collect();
        if t23.is_empty() {
            return Err(Error::InsufficientData(format!("trace {k} is empty")));
        }
        widest = widest.max((t23[t23.len() - 1] / t23[0]).log10());
        let mut log_i = Vec::with_capacity(t23.len());
        let mut w = Vec::with_capacity(t23.len());
        for (i, &v) in tr.intensities.iter().enumerate() {
            let v = to(v);
            if !(v > 0.0) {
                return Err(Error::InvalidParameter {
                    name: "intensities",
                    reason: format!("trace {k} entry {i} is not positive"),
                });
            }
            log_i.push(v.ln());
            let sigma = match &tr.stderr {
                Some(se) => (to(se[i]) / v).max(1e-12),
                None => 1.0,
            };
            w.push(1.0 / sigma);
        }
        let t0 = c0.reference_time(t12, t23[0]);
        series.push(Series { t12, t0, t23, log_i, w });
    }
    let free: Vec<ThreePulseParam> = ThreePulseParam::ALL
        .iter()
        .copied()
        .filter(|p| !fixed.contains(p))
        .collect();
    if widest < 1.0 && free.contains(&ThreePulseParam::GammaLog) {
        return Err(Error::Unidentifiable {
            params: "gamma_log".into(),
            reason: format!("waiting times span {widest:.2} decades, at least 1 is needed"),
        });
    }
    let n_points: usize = series.iter().map(|s| s.t23.len()).sum();
    if n_points < free.len() {
        return Err(Error::InsufficientData(format!(
            "{n_points} points for {} free parameters",
            free.len()
        )));
    }

    let first = &series[0];
    let unit = three_pulse_intensity(first.t23[0], first.t12, first.t0, &c0, 1.0);
    let i0_start = first.log_i[0].exp() / unit;
    if !(i0_start.is_finite() && i0_start > 0.0) {
        return Err(Error::NonFiniteObjective);
    }
    let base = [
        i0_start,
        c0.beta_branch,
        c0.tz_zeeman,
        c0.gamma_log,
        c0.gamma_t0,
        c0.t1_excited,
    ];
    let lo_all = [1e-300, 0.0, 1e-12, 0.0, 0.0, 1e-12];
    let hi_all = [f64::INFINITY, 1.0, f64::INFINITY, f64::INFINITY, f64::INFINITY, f64::INFINITY];
    // natural magnitudes for parameters starting at zero
    let gamma_scale = 1.0 / (4.0 * std::f64::consts::PI * first.t12);
    let typ_all = [i0_start, 0.5, c0.tz_zeeman, gamma_scale, gamma_scale, c0.t1_excited];

    let idx: Vec<usize> = free.iter().map(|p| p.index()).collect();
    let start: Vec<f64> = idx.iter().map(|&j| base[j]).collect();
    let lower: Vec<f64> = idx.iter().map(|&j| lo_all[j]).collect();
    let upper: Vec<f64> = idx.iter().map(|&j| hi_all[j]).collect();
    let typical: Vec<f64> = idx.iter().map(|&j| typ_all[j]).collect();

    let full = |x: &[f64]| -> [f64; 6] {
        let mut v = base;
        for (k, &j) in idx.iter().enumerate() {
            v[j] = x[k];
        }
        v
    };
    let resid = |x: &[f64]| -> Vec<f64> {
        let (cfg, i0) = unpack(&c0, &full(x));
        let mut r = Vec::with_capacity(n_points);
        for s in &series {
            for k in 0..s.t23.len() {
                let model = three_pulse_intensity(s.t23[k], s.t12, s.t0, &cfg, i0);
                let v = if model > 0.0 { model.ln() - s.log_i[k] } else { f64::NAN };
                r.push(v * s.w[k]);
            }
        }
        r
    };
    let opts = MinimizeOptions {
        typical,
        ..Default::default()
    };
    let m = minimize(resid, &start, &lower, &upper, &opts)?;

    let inner: Vec<usize> = (0..idx.len()).filter(|j| !m.active_bounds.contains(j)).collect();
    if scaled_condition(&m.jacobian, &inner) > opts.cond_limit {
        let v = weakest_direction(&m.jacobian, &inner);
        let vmax = v.iter().fold(0.0f64, |a, b| a.max(b.abs()));
        let names: Vec<&str> = inner
            .iter()
            .zip(&v)
            .filter(|(_, c)| c.abs() >= 0.1 * vmax)
            .map(|(&j, _)| free[j].as_str())
            .collect();
        return Err(Error::Unidentifiable {
            params: names.join(", "),
            reason: "the Jacobian is singular along this parameter combination".into(),
        });
    }

    let names: Vec<&str> = ThreePulseParam::ALL.iter().map(|p| p.as_str()).collect();
    let values = full(&m.params);
    Ok(FitResult::assemble(&names, &values, &idx, &m, n_points))
}
