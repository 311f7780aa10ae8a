//! Least-squares fitting: a general bounded minimizer and the echo-specific
//! procedures built on it.

mod decay;
pub mod minimize;
mod surface;
mod three_pulse;

use serde::{Deserialize, Serialize};

pub use decay::fit_exponential_decay;
pub use minimize::{minimize, FitStatus, Method, MinimizeOptions, Minimum};
pub use surface::{fit_linewidth_surface, LinewidthPoint, ParamName, SurfaceBounds};
pub use three_pulse::{fit_3ppe_diffusion, ThreePulseParam};

use crate::real::Real;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitParam<F> {
    pub name: String,
    pub value: F,
    /// One-sigma uncertainty; `None` when the covariance is unavailable.
    /// Zero for fixed parameters.
    pub uncertainty: Option<F>,
    pub fixed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult<F> {
    pub params: Vec<FitParam<F>>,
    /// Quantities computed from the fitted parameters, such as `T2`.
    pub derived: Vec<FitParam<F>>,
    pub fixed: Vec<String>,
    /// Root-mean-square residual, in units of the data uncertainty when
    /// one was supplied.
    pub residual_rms: F,
    pub n_points: usize,
    pub n_iterations: usize,
    pub converged: bool,
    pub status: FitStatus,
    pub method: Method,
    /// Names of the free parameters, in covariance order.
    pub free: Vec<String>,
    /// Covariance over the free parameters, empty when unavailable.
    pub covariance: Vec<Vec<F>>,
    pub active_bounds: Vec<String>,
}

impl<F: Real> FitResult<F> {
    pub fn param(&self, name: &str) -> Option<&FitParam<F>> {
        self.params
            .iter()
            .chain(self.derived.iter())
            .find(|p| p.name == name)
    }

    pub fn value(&self, name: &str) -> Option<F> {
        self.param(name).map(|p| p.value)
    }

    /// Assembles a result from a minimizer outcome. `names` and `values`
    /// cover every parameter; `free_idx` maps the minimizer's vector into
    /// them.
    pub(crate) fn assemble(
        names: &[&str],
        values: &[f64],
        free_idx: &[usize],
        min: &Minimum,
        n_points: usize,
    ) -> Self {
        let lit = |v: f64| F::from_f64(v).unwrap_or_else(F::nan);
        let mut params = Vec::with_capacity(names.len());
        for (k, name) in names.iter().enumerate() {
            let pos = free_idx.iter().position(|&j| j == k);
            let uncertainty = match pos {
                None => Some(F::zero()),
                Some(p) => min
                    .covariance
                    .as_ref()
                    .map(|c| lit(c[(p, p)].max(0.0).sqrt())),
            };
            params.push(FitParam {
                name: (*name).to_string(),
                value: lit(values[k]),
                uncertainty,
                fixed: pos.is_none(),
            });
        }
        let fixed = params
            .iter()
            .filter(|p| p.fixed)
            .map(|p| p.name.clone())
            .collect();
        let free: Vec<String> = free_idx.iter().map(|&j| names[j].to_string()).collect();
        let covariance = min
            .covariance
            .as_ref()
            .map(|c| {
                (0..c.nrows())
                    .map(|a| (0..c.ncols()).map(|b| lit(c[(a, b)])).collect())
                    .collect()
            })
            .unwrap_or_default();
        let active_bounds = min
            .active_bounds
            .iter()
            .map(|&p| names[free_idx[p]].to_string())
            .collect();
        let rms = if n_points > 0 {
            (min.cost / n_points as f64).sqrt()
        } else {
            0.0
        };
        Self {
            params,
            derived: Vec::new(),
            fixed,
            residual_rms: lit(rms),
            n_points,
            n_iterations: min.n_iterations,
            converged: min.converged(),
            status: min.status,
            method: min.method,
            free,
            covariance,
            active_bounds,
        }
    }
}
