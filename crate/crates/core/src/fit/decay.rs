use std::f64::consts::PI;

use crate::echo::EchoTrace;
use crate::error::{Error, Result};
use crate::fit::minimize::{minimize, MinimizeOptions};
use crate::fit::{FitParam, FitResult};
use crate::real::Real;

/// Fits `I = I0 exp(−4π Γ t)` to a two-pulse trace in log-intensity space.
///
/// Intensities are divided by their maximum before taking logarithms, so
/// rescaling a trace only moves `i0`. With `first_decade_only`, points
/// below a tenth of the maximum are dropped. Log residuals are weighted by
/// the relative intensity error `σ_I / I` when the trace carries one.
///
/// Reports `i0` and `gamma` (Hz) plus the derived `t2 = 1/(πΓ)`.
pub fn fit_exponential_decay<F: Real>(trace: &EchoTrace<F>, first_decade_only: bool) -> Result<FitResult<F>> {
    trace.validate()?;
    let to = |v: F| v.to_f64_lossy();
    let imax = trace
        .intensities
        .iter()
        .map(|&v| to(v))
        .fold(0.0f64, f64::max);
    if !(imax > 0.0) {
        return Err(Error::NoDecay("trace has no positive intensity".into()));
    }
    let mut t = Vec::new();
    let mut y = Vec::new();
    let mut w = Vec::new();
    for k in 0..trace.len() {
        let i = to(trace.intensities[k]);
        if first_decade_only && i < imax / 10.0 {
            continue;
        }
        if !(i > 0.0) {
            return Err(Error::InvalidParameter {
                name: "intensities",
                reason: format!("log-space fit needs positive intensities, entry {k} is {i}"),
            });
        }
        let sigma = match &trace.stderr {
            Some(se) => (to(se[k]) / i).max(1e-12),
            None => 1.0,
        };
        t.push(to(trace.delays[k]));
        y.push((i / imax).ln());
        w.push(1.0 / sigma);
    }
    if t.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "exponential fit needs at least 4 points, {} available",
            t.len()
        )));
    }
    if y.iter().all(|&v| v == y[0]) {
        return Err(Error::NoDecay("intensity is constant over the fitted range".into()));
    }

    // start from the endpoint slope
    let n = t.len();
    let span = t[n - 1] - t[0];
    let slope = (y[n - 1] - y[0]) / span;
    let g0 = (-slope / (4.0 * PI)).abs().max(1.0 / span);
    let a0 = y[0] + 4.0 * PI * g0 * t[0];
    let resid = |p: &[f64]| -> Vec<f64> {
        (0..n)
            .map(|k| (p[0] - 4.0 * PI * p[1] * t[k] - y[k]) * w[k])
            .collect()
    };
    let opts = MinimizeOptions {
        typical: vec![1.0, g0],
        ..Default::default()
    };
    let inf = f64::INFINITY;
    let m = minimize(resid, &[a0, g0], &[-inf, -inf], &[inf, inf], &opts)?;
    let (a, gamma) = (m.params[0], m.params[1]);
    if !(gamma > 0.0) {
        return Err(Error::NoDecay(format!(
            "fitted decay rate {gamma:e} Hz is not positive"
        )));
    }
    let values = [imax * a.exp(), gamma];
    let mut res = FitResult::<F>::assemble(&["i0", "gamma"], &values, &[0, 1], &m, n);
    // i0 = imax·e^a, so σ_i0 = i0·σ_a
    if let Some(u) = res.params[0].uncertainty {
        res.params[0].uncertainty = Some(u * res.params[0].value);
    }
    let lit = |v: f64| F::from_f64(v).unwrap_or_else(F::nan);
    res.derived.push(FitParam {
        name: "t2".into(),
        value: lit(1.0 / (PI * gamma)),
        uncertainty: res.params[1]
            .uncertainty
            .map(|u| u / (F::PI() * lit(gamma) * lit(gamma))),
        fixed: false,
    });
    Ok(res)
}
