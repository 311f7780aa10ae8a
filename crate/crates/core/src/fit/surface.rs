use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fit::minimize::{minimize, scaled_condition, weakest_direction, MinimizeOptions};
use crate::fit::FitResult;
use crate::model::{effective_linewidth, Environment, ModelParams};
use crate::real::Real;

/// Names of the linewidth-model parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamName {
    Gamma0,
    Alpha0,
    N,
    GEnv,
    C1,
    C2,
    GammaS0,
    GammaSSlope,
}

impl ParamName {
    pub const ALL: [ParamName; 8] = [
        ParamName::Gamma0,
        ParamName::Alpha0,
        ParamName::N,
        ParamName::GEnv,
        ParamName::C1,
        ParamName::C2,
        ParamName::GammaS0,
        ParamName::GammaSSlope,
    ];

    /// Held fixed unless the caller says otherwise.
    pub const DEFAULT_FIXED: [ParamName; 2] = [ParamName::GammaS0, ParamName::GammaSSlope];

    pub fn as_str(self) -> &'static str {
        match self {
            ParamName::Gamma0 => "gamma0",
            ParamName::Alpha0 => "alpha0",
            ParamName::N => "n",
            ParamName::GEnv => "g_env",
            ParamName::C1 => "c1",
            ParamName::C2 => "c2",
            ParamName::GammaS0 => "gamma_s0",
            ParamName::GammaSSlope => "gamma_s_slope",
        }
    }

    fn index(self) -> usize {
        ParamName::ALL.iter().position(|&p| p == self).unwrap()
    }

    pub fn get<F: Copy>(self, p: &ModelParams<F>) -> F {
        match self {
            ParamName::Gamma0 => p.gamma0,
            ParamName::Alpha0 => p.alpha0,
            ParamName::N => p.n,
            ParamName::GEnv => p.g_env,
            ParamName::C1 => p.c1,
            ParamName::C2 => p.c2,
            ParamName::GammaS0 => p.gamma_s0,
            ParamName::GammaSSlope => p.gamma_s_slope,
        }
    }

    pub fn set<F>(self, p: &mut ModelParams<F>, v: F) {
        match self {
            ParamName::Gamma0 => p.gamma0 = v,
            ParamName::Alpha0 => p.alpha0 = v,
            ParamName::N => p.n = v,
            ParamName::GEnv => p.g_env = v,
            ParamName::C1 => p.c1 = v,
            ParamName::C2 => p.c2 = v,
            ParamName::GammaS0 => p.gamma_s0 = v,
            ParamName::GammaSSlope => p.gamma_s_slope = v,
        }
    }
}

impl fmt::Display for ParamName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ParamName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ParamName::ALL
            .iter()
            .copied()
            .find(|p| p.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter {
                name: "param",
                reason: format!("unknown model parameter '{s}'"),
            })
    }
}

/// Per-parameter closed intervals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurfaceBounds<F> {
    pub lower: [F; 8],
    pub upper: [F; 8],
}

impl<F: Real> Default for SurfaceBounds<F> {
    /// `1 ≤ n ≤ 1.5`, `0 ≤ g_env ≤ 18`, everything else `[0, ∞)`.
    fn default() -> Self {
        let mut b = Self {
            lower: [F::zero(); 8],
            upper: [F::infinity(); 8],
        };
        b.set(ParamName::N, F::one(), F::lit(1.5));
        b.set(ParamName::GEnv, F::zero(), F::lit(18.0));
        b
    }
}

impl<F: Real> SurfaceBounds<F> {
    pub fn set(&mut self, name: ParamName, lower: F, upper: F) {
        self.lower[name.index()] = lower;
        self.upper[name.index()] = upper;
    }

    pub fn get(&self, name: ParamName) -> (F, F) {
        (self.lower[name.index()], self.upper[name.index()])
    }
}

/// One measured effective linewidth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LinewidthPoint<F> {
    pub env: Environment<F>,
    /// Hz.
    pub linewidth: F,
    /// One-sigma uncertainty, Hz.
    pub sigma: F,
}

fn distinct<F: Real>(v: impl Iterator<Item = F>) -> usize {
    let mut xs: Vec<F> = v.collect();
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs.dedup();
    xs.len()
}

/// Weighted least-squares fit of `Γ_eff(B, T)` to measured linewidths.
///
/// Parameters named in `fixed` keep their `p0` values. Parameters pinned at
/// a bound at the optimum give [`FitStatus::ConvergedAtBound`] and are
/// listed in `active_bounds`.
///
/// [`FitStatus::ConvergedAtBound`]: crate::fit::FitStatus::ConvergedAtBound
pub fn fit_linewidth_surface<F: Real>(
    data: &[LinewidthPoint<F>],
    p0: &ModelParams<F>,
    fixed: &[ParamName],
    bounds: &SurfaceBounds<F>,
) -> Result<FitResult<F>> {
    let free: Vec<ParamName> = ParamName::ALL
        .iter()
        .copied()
        .filter(|p| !fixed.contains(p))
        .collect();
    for pt in data {
        pt.env.validate()?;
        if !(pt.sigma > F::zero()) || !pt.linewidth.is_finite() {
            return Err(Error::InvalidParameter {
                name: "data",
                reason: "every point needs a finite linewidth and positive sigma".into(),
            });
        }
    }
    let n_b = distinct(data.iter().map(|d| d.env.field));
    let n_t = distinct(data.iter().map(|d| d.env.temperature));
    let named = |set: &[ParamName]| -> Vec<&'static str> {
        set.iter().filter(|p| free.contains(p)).map(|p| p.as_str()).collect()
    };
    if n_t < 2 {
        let bad = named(&[ParamName::Alpha0, ParamName::N]);
        if !bad.is_empty() {
            return Err(Error::Unidentifiable {
                params: "alpha0, n".into(),
                reason: "data cover a single temperature, so the temperature law cannot be separated from its prefactor".into(),
            });
        }
    }
    if n_b < 2 {
        let bad = named(&[ParamName::GEnv, ParamName::C1, ParamName::C2]);
        if !bad.is_empty() {
            return Err(Error::Unidentifiable {
                params: bad.join(", "),
                reason: "data cover a single field value".into(),
            });
        }
    }
    if data.len() < free.len() {
        return Err(Error::InsufficientData(format!(
            "{} points for {} free parameters",
            data.len(),
            free.len()
        )));
    }
    for &p in &ParamName::ALL {
        let v = p.get(p0);
        let (lo, hi) = bounds.get(p);
        if !(v >= lo && v <= hi) {
            return Err(Error::InvalidParameter {
                name: "p0",
                reason: format!("{p} = {v} lies outside [{lo}, {hi}]"),
            });
        }
    }

    let to = |v: F| v.to_f64_lossy();
    let lit = |v: f64| F::from_f64(v).unwrap_or_else(F::nan);
    let scale_hint = {
        let mut w: Vec<f64> = data.iter().map(|d| to(d.linewidth).abs()).collect();
        w.sort_by(f64::total_cmp);
        w[w.len() / 2]
    };
    let start: Vec<f64> = free.iter().map(|&p| to(p.get(p0))).collect();
    let lower: Vec<f64> = free.iter().map(|&p| to(bounds.get(p).0)).collect();
    let upper: Vec<f64> = free.iter().map(|&p| to(bounds.get(p).1)).collect();
    let typical: Vec<f64> = free
        .iter()
        .zip(&start)
        .map(|(&p, &v)| match p {
            ParamName::Gamma0 => v.abs().max(scale_hint),
            _ => v.abs(),
        })
        .collect();

    let build = |x: &[f64]| {
        let mut p = *p0;
        for (k, &name) in free.iter().enumerate() {
            name.set(&mut p, lit(x[k]));
        }
        p
    };
    let resid = |x: &[f64]| -> Vec<f64> {
        let p = build(x);
        data.iter()
            .map(|d| match effective_linewidth(&d.env, &p) {
                Ok(g) => to((g - d.linewidth) / d.sigma),
                Err(_) => f64::NAN,
            })
            .collect()
    };
    let opts = MinimizeOptions {
        typical,
        ..Default::default()
    };
    let m = minimize(resid, &start, &lower, &upper, &opts)?;

    let inner: Vec<usize> = (0..free.len()).filter(|j| !m.active_bounds.contains(j)).collect();
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

    let names: Vec<&str> = ParamName::ALL.iter().map(|p| p.as_str()).collect();
    let fitted = build(&m.params);
    let values: Vec<f64> = ParamName::ALL.iter().map(|p| to(p.get(&fitted))).collect();
    let free_idx: Vec<usize> = free.iter().map(|p| p.index()).collect();
    Ok(FitResult::assemble(&names, &values, &free_idx, &m, data.len()))
}
