//! Bounded damped least squares with a simplex fallback.
//!
//! Works in `f64` regardless of the caller's scalar type.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct MinimizeOptions {
    pub max_iterations: usize,
    /// Relative step size below which the iteration stops.
    pub xtol: f64,
    /// Relative cost decrease below which the iteration stops.
    pub ftol: f64,
    /// Largest scaled gradient component accepted as stationary.
    pub gtol: f64,
    /// Condition number of the column-scaled Jacobian above which the
    /// simplex method takes over.
    pub cond_limit: f64,
    /// Per-parameter magnitude used for finite-difference steps and simplex
    /// scaling when the current value is near zero. Empty means none.
    pub typical: Vec<f64>,
}

impl Default for MinimizeOptions {
    fn default() -> Self {
        Self {
            max_iterations: 500,
            xtol: 1e-10,
            ftol: 1e-12,
            gtol: 1e-6,
            cond_limit: 1e12,
            typical: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    LevenbergMarquardt,
    NelderMead,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitStatus {
    Converged,
    /// Converged with at least one parameter held by its bound.
    ConvergedAtBound,
    MaxIterations,
    /// The step or cost criterion fired but the gradient is not small.
    Stalled,
}

#[derive(Debug, Clone)]
pub struct Minimum {
    pub params: Vec<f64>,
    /// Sum of squared residuals.
    pub cost: f64,
    pub residuals: Vec<f64>,
    pub jacobian: DMatrix<f64>,
    /// `(JᵀJ)⁻¹` scaled by the reduced chi-square, when `J` has full rank.
    pub covariance: Option<DMatrix<f64>>,
    pub n_iterations: usize,
    pub n_evaluations: usize,
    pub status: FitStatus,
    pub method: Method,
    /// Indices of parameters sitting on a bound.
    pub active_bounds: Vec<usize>,
}

impl Minimum {
    pub fn converged(&self) -> bool {
        matches!(self.status, FitStatus::Converged | FitStatus::ConvergedAtBound)
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|x| x * x).sum()
}

struct Problem<'a, R> {
    f: R,
    lower: &'a [f64],
    upper: &'a [f64],
    typical: Vec<f64>,
    evals: usize,
}

impl<R: Fn(&[f64]) -> Vec<f64>> Problem<'_, R> {
    fn eval(&mut self, x: &[f64]) -> (Vec<f64>, f64) {
        self.evals += 1;
        let r = (self.f)(x);
        let c = sum_sq(&r);
        let c = if c.is_finite() { c } else { f64::INFINITY };
        (r, c)
    }

    fn clamp(&self, x: &mut [f64]) {
        for (j, v) in x.iter_mut().enumerate() {
            *v = v.max(self.lower[j]).min(self.upper[j]);
        }
    }

    fn step(&self, x: f64, j: usize) -> f64 {
        (1e-6 * x.abs().max(self.typical[j])).max(1e-12)
    }

    /// Central differences, one-sided where a bound is within one step.
    fn jacobian(&mut self, x: &[f64], r0: &[f64]) -> DMatrix<f64> {
        let m = r0.len();
        let n = x.len();
        let mut jac = DMatrix::zeros(m, n);
        let mut xp = x.to_vec();
        for j in 0..n {
            let h = self.step(x[j], j);
            let up_ok = x[j] + h <= self.upper[j];
            let down_ok = x[j] - h >= self.lower[j];
            let col: Vec<f64> = if up_ok && down_ok {
                xp[j] = x[j] + h;
                let rp = self.eval(&xp).0;
                xp[j] = x[j] - h;
                let rm = self.eval(&xp).0;
                let dx = (x[j] + h) - (x[j] - h);
                rp.iter().zip(&rm).map(|(a, b)| (a - b) / dx).collect()
            } else if up_ok {
                xp[j] = x[j] + h;
                let rp = self.eval(&xp).0;
                let dx = (x[j] + h) - x[j];
                rp.iter().zip(r0).map(|(a, b)| (a - b) / dx).collect()
            } else {
                xp[j] = x[j] - h;
                let rm = self.eval(&xp).0;
                let dx = x[j] - (x[j] - h);
                r0.iter().zip(&rm).map(|(a, b)| (a - b) / dx).collect()
            };
            xp[j] = x[j];
            for (i, v) in col.into_iter().enumerate() {
                jac[(i, j)] = if v.is_finite() { v } else { 0.0 };
            }
        }
        jac
    }
}

/// Column norms of `j`, with zero columns mapped to one.
fn column_scales(j: &DMatrix<f64>) -> Vec<f64> {
    (0..j.ncols())
        .map(|c| {
            let s = j.column(c).norm();
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect()
}

/// Condition number of the column-scaled Jacobian restricted to `cols`.
pub fn scaled_condition(j: &DMatrix<f64>, cols: &[usize]) -> f64 {
    if cols.is_empty() {
        return 1.0;
    }
    let sub = j.select_columns(cols);
    let scales = column_scales(&sub);
    let mut scaled = sub.clone();
    for (c, s) in scales.iter().enumerate() {
        scaled.column_mut(c).scale_mut(1.0 / s);
    }
    let sv = scaled.singular_values();
    let max = sv.max();
    let min = sv.min();
    if sub.nrows() < cols.len() || min <= 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

/// Right singular vector of the column-scaled Jacobian belonging to its
/// smallest singular value, mapped back to the columns `cols`.
pub fn weakest_direction(j: &DMatrix<f64>, cols: &[usize]) -> Vec<f64> {
    let sub = j.select_columns(cols);
    let scales = column_scales(&sub);
    let mut scaled = sub.clone();
    for (c, s) in scales.iter().enumerate() {
        scaled.column_mut(c).scale_mut(1.0 / s);
    }
    let n = cols.len();
    let jtj = scaled.transpose() * &scaled;
    let eig = jtj.symmetric_eigen();
    let (k, _) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .fold((0, f64::INFINITY), |acc, (i, &v)| if v < acc.1 { (i, v) } else { acc });
    (0..n).map(|i| eig.eigenvectors[(i, k)]).collect()
}

fn covariance(j: &DMatrix<f64>, cost: f64) -> Option<DMatrix<f64>> {
    let (m, n) = j.shape();
    if n == 0 {
        return Some(DMatrix::zeros(0, 0));
    }
    if m < n {
        return None;
    }
    let scales = column_scales(j);
    let mut scaled = j.clone();
    for (c, s) in scales.iter().enumerate() {
        scaled.column_mut(c).scale_mut(1.0 / s);
    }
    let svd = scaled.svd(false, true);
    let sv = &svd.singular_values;
    let smax = sv.max();
    if !(sv.min() > smax * 1e-12) {
        return None;
    }
    let vt = svd.v_t.as_ref()?;
    let mut inner = DMatrix::<f64>::zeros(n, n);
    for k in 0..n {
        let w = 1.0 / (sv[k] * sv[k]);
        for a in 0..n {
            for b in 0..n {
                inner[(a, b)] += vt[(k, a)] * w * vt[(k, b)];
            }
        }
    }
    let dof = m - n;
    let s2 = if dof > 0 { cost / dof as f64 } else { 1.0 };
    let mut cov = DMatrix::<f64>::zeros(n, n);
    for a in 0..n {
        for b in 0..n {
            cov[(a, b)] = inner[(a, b)] / (scales[a] * scales[b]) * s2;
        }
    }
    // exact symmetry
    let cov = (&cov + cov.transpose()) * 0.5;
    Some(cov)
}

/// Bound-constrained least squares.
///
/// `residuals` maps a parameter vector to the residual vector; the cost is
/// its squared norm. Parameters are projected onto `[lower, upper]`
/// throughout. Hitting the iteration cap returns a result with status
/// [`FitStatus::MaxIterations`] rather than an error.
pub fn minimize<R>(
    residuals: R,
    p0: &[f64],
    lower: &[f64],
    upper: &[f64],
    opts: &MinimizeOptions,
) -> Result<Minimum>
where
    R: Fn(&[f64]) -> Vec<f64>,
{
    let n = p0.len();
    if lower.len() != n || upper.len() != n {
        return Err(Error::InvalidParameter {
            name: "bounds",
            reason: "bound vectors must match the parameter count".into(),
        });
    }
    if let Some(j) = (0..n).find(|&j| !(lower[j] <= upper[j])) {
        return Err(Error::InvalidParameter {
            name: "bounds",
            reason: format!("empty interval for parameter {j}"),
        });
    }
    let typical = if opts.typical.len() == n {
        opts.typical.iter().map(|t| t.abs()).collect()
    } else {
        vec![0.0; n]
    };
    let mut prob = Problem {
        f: residuals,
        lower,
        upper,
        typical,
        evals: 0,
    };
    let mut x = p0.to_vec();
    prob.clamp(&mut x);
    let (mut r, mut cost) = prob.eval(&x);
    if !cost.is_finite() || r.is_empty() {
        return Err(Error::NonFiniteObjective);
    }
    let floor = cost * 1e-30;
    // once steps stop making progress, a residual this far below the start
    // is taken as converged even if the angle test is noisy
    let stuck_floor = cost * 1e-20;

    let mut lambda = 1e-3;
    let mut nu = 2.0;
    let mut iter = 0;
    let mut jac = prob.jacobian(&x, &r);
    let mut stop_reason: Option<bool> = None; // Some(gradient_ok)

    while iter < opts.max_iterations {
        iter += 1;
        let grad = jac.transpose() * DVector::from_column_slice(&r);
        let free: Vec<usize> = (0..n)
            .filter(|&j| {
                let at_lo = x[j] <= lower[j] && grad[j] > 0.0;
                let at_hi = x[j] >= upper[j] && grad[j] < 0.0;
                !(at_lo || at_hi)
            })
            .collect();

        if gradient_small(&jac, &r, &grad, &free, opts.gtol, floor) {
            stop_reason = Some(true);
            break;
        }
        if free.is_empty() {
            stop_reason = Some(true);
            break;
        }
        if scaled_condition(&jac, &free) > opts.cond_limit {
            return nelder_mead(prob, x, opts, iter);
        }

        let jf = jac.select_columns(&free);
        let a = jf.transpose() * &jf;
        let g: DVector<f64> = DVector::from_iterator(free.len(), free.iter().map(|&j| grad[j]));
        let diag: Vec<f64> = (0..free.len()).map(|k| a[(k, k)].max(1e-300)).collect();

        // Attempt 0 is the undamped Gauss-Newton step, kept only when the
        // linear model predicts its decrease well. Later attempts raise the
        // damping until the step lowers the cost.
        let mut accepted = false;
        for attempt in 0..61 {
            let damping = if attempt == 0 { 0.0 } else { lambda };
            let mut m = a.clone();
            for k in 0..free.len() {
                m[(k, k)] += damping * diag[k];
            }
            let delta = match m.clone().cholesky() {
                Some(ch) => ch.solve(&(-&g)),
                None => match m.lu().solve(&(-&g)) {
                    Some(d) => d,
                    None => {
                        if attempt > 0 {
                            lambda *= nu;
                            nu *= 2.0;
                        }
                        continue;
                    }
                },
            };
            let mut xn = x.clone();
            for (k, &j) in free.iter().enumerate() {
                xn[j] += delta[k];
            }
            prob.clamp(&mut xn);
            let (rn, cn) = prob.eval(&xn);
            // predicted reduction of the linearized model
            let mut dfull = vec![0.0; n];
            for j in 0..n {
                dfull[j] = xn[j] - x[j];
            }
            let dv = DVector::from_vec(dfull);
            let jd = &jac * &dv;
            let lin: f64 = r
                .iter()
                .zip(jd.iter())
                .map(|(ri, di)| (ri + di) * (ri + di))
                .sum();
            let predicted = cost - lin;
            let rho = if predicted > 0.0 { (cost - cn) / predicted } else { 0.0 };
            if attempt == 0 && !(cn < cost && rho > 0.75) {
                continue;
            }
            if cn < cost {
                lambda *= f64::max(1.0 / 3.0, 1.0 - (2.0 * rho - 1.0).powi(3));
                nu = 2.0;
                let small_step = (0..n).all(|j| {
                    (xn[j] - x[j]).abs() <= opts.xtol * (x[j].abs() + opts.xtol)
                });
                let small_cost = (cost - cn) <= opts.ftol * cost;
                x = xn;
                r = rn;
                cost = cn;
                jac = prob.jacobian(&x, &r);
                accepted = true;
                if small_step || small_cost || cost == 0.0 {
                    let grad = jac.transpose() * DVector::from_column_slice(&r);
                    let free: Vec<usize> = (0..n)
                        .filter(|&j| {
                            !((x[j] <= lower[j] && grad[j] > 0.0)
                                || (x[j] >= upper[j] && grad[j] < 0.0))
                        })
                        .collect();
                    stop_reason = Some(gradient_small(&jac, &r, &grad, &free, opts.gtol, stuck_floor));
                }
                break;
            }
            // no progress possible at this damping
            let tiny = (0..n).all(|j| (xn[j] - x[j]).abs() <= opts.xtol * (x[j].abs() + opts.xtol));
            if tiny && lambda > 1e10 {
                let grad = jac.transpose() * DVector::from_column_slice(&r);
                stop_reason = Some(gradient_small(&jac, &r, &grad, &free, opts.gtol, stuck_floor));
                break;
            }
            lambda *= nu;
            nu *= 2.0;
        }
        if stop_reason.is_some() {
            break;
        }
        if !accepted {
            let grad = jac.transpose() * DVector::from_column_slice(&r);
            stop_reason = Some(gradient_small(&jac, &r, &grad, &free, opts.gtol, stuck_floor));
            break;
        }
    }

    Ok(finish(
        &mut prob,
        x,
        r,
        cost,
        Some(jac),
        iter,
        stop_reason,
        Method::LevenbergMarquardt,
    ))
}

/// Scaled gradient test: `|J_jᵀ r| ≤ gtol · ‖J_j‖ · ‖r‖` for free `j`.
///
/// A cost below `floor` counts as stationary: once the residual is at
/// rounding level its direction is noise and the angle test is meaningless.
fn gradient_small(
    jac: &DMatrix<f64>,
    r: &[f64],
    grad: &DVector<f64>,
    free: &[usize],
    gtol: f64,
    floor: f64,
) -> bool {
    let cost = sum_sq(r);
    if cost <= floor {
        return true;
    }
    let rn = cost.sqrt();
    free.iter().all(|&j| {
        let cn = jac.column(j).norm();
        cn == 0.0 || grad[j].abs() <= gtol * cn * rn
    })
}

#[allow(clippy::too_many_arguments)]
fn finish<R: Fn(&[f64]) -> Vec<f64>>(
    prob: &mut Problem<'_, R>,
    x: Vec<f64>,
    r: Vec<f64>,
    cost: f64,
    jac: Option<DMatrix<f64>>,
    iter: usize,
    stop: Option<bool>,
    method: Method,
) -> Minimum {
    let jac = jac.unwrap_or_else(|| prob.jacobian(&x, &r));
    let n = x.len();
    let grad = jac.transpose() * DVector::from_column_slice(&r);
    let active: Vec<usize> = (0..n)
        .filter(|&j| {
            (x[j] <= prob.lower[j] && grad[j] >= 0.0) || (x[j] >= prob.upper[j] && grad[j] <= 0.0)
        })
        .filter(|&j| prob.lower[j] < prob.upper[j])
        .collect();
    let status = match stop {
        Some(true) if active.is_empty() => FitStatus::Converged,
        Some(true) => FitStatus::ConvergedAtBound,
        Some(false) => FitStatus::Stalled,
        None => FitStatus::MaxIterations,
    };
    let free: Vec<usize> = (0..n).filter(|j| !active.contains(j)).collect();
    let covariance = covariance(&jac.select_columns(&free), cost).map(|c| {
        let mut full = DMatrix::zeros(n, n);
        for (a, &ja) in free.iter().enumerate() {
            for (b, &jb) in free.iter().enumerate() {
                full[(ja, jb)] = c[(a, b)];
            }
        }
        full
    });
    Minimum {
        params: x,
        cost,
        residuals: r,
        jacobian: jac,
        covariance,
        n_iterations: iter,
        n_evaluations: prob.evals,
        status,
        method,
        active_bounds: active,
    }
}

/// Derivative-free simplex descent on the projected cost, in coordinates
/// scaled by each parameter's magnitude.
fn nelder_mead<R: Fn(&[f64]) -> Vec<f64>>(
    mut prob: Problem<'_, R>,
    x0: Vec<f64>,
    opts: &MinimizeOptions,
    start_iter: usize,
) -> Result<Minimum> {
    let n = x0.len();
    let scale: Vec<f64> = (0..n)
        .map(|j| {
            let s = x0[j].abs().max(prob.typical[j]);
            if s > 0.0 {
                s
            } else {
                1.0
            }
        })
        .collect();
    let to_x = |u: &[f64], prob: &Problem<'_, R>| -> Vec<f64> {
        let mut x: Vec<f64> = u.iter().zip(&scale).map(|(a, s)| a * s).collect();
        prob.clamp(&mut x);
        x
    };
    let u0: Vec<f64> = x0.iter().zip(&scale).map(|(a, s)| a / s).collect();
    let mut simplex: Vec<(Vec<f64>, f64)> = Vec::with_capacity(n + 1);
    let c0 = prob.eval(&to_x(&u0, &prob)).1;
    simplex.push((u0.clone(), c0));
    for j in 0..n {
        let mut u = u0.clone();
        u[j] += if u[j] != 0.0 { 0.05 * u[j].signum() } else { 0.05 };
        let mut x = to_x(&u, &prob);
        if x[j] == x0[j] {
            // bounded in that direction, try the other way
            u[j] = u0[j] - 0.05;
            x = to_x(&u, &prob);
        }
        let c = prob.eval(&x).1;
        simplex.push((u, c));
    }

    let budget = opts.max_iterations.saturating_mul(20).max(200 * n);
    let mut iter = start_iter;
    let mut converged = false;
    let mut it = 0;
    while it < budget {
        it += 1;
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let diameter = simplex
            .iter()
            .skip(1)
            .map(|(u, _)| {
                u.iter()
                    .zip(&simplex[0].0)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max);
        if (worst - best).abs() <= opts.ftol * best.abs() + 1e-300 && diameter <= 1e-8 {
            converged = true;
            break;
        }
        let mut centroid = vec![0.0; n];
        for (u, _) in simplex.iter().take(n) {
            for k in 0..n {
                centroid[k] += u[k] / n as f64;
            }
        }
        let along = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|k| centroid[k] + t * (simplex[n].0[k] - centroid[k]))
                .collect()
        };
        let ur = along(-1.0);
        let cr = prob.eval(&to_x(&ur, &prob)).1;
        if cr < simplex[0].1 {
            let ue = along(-2.0);
            let ce = prob.eval(&to_x(&ue, &prob)).1;
            simplex[n] = if ce < cr { (ue, ce) } else { (ur, cr) };
        } else if cr < simplex[n - 1].1 {
            simplex[n] = (ur, cr);
        } else {
            let (uc, cc) = if cr < simplex[n].1 {
                let u = along(-0.5);
                let c = prob.eval(&to_x(&u, &prob)).1;
                (u, c)
            } else {
                let u = along(0.5);
                let c = prob.eval(&to_x(&u, &prob)).1;
                (u, c)
            };
            if cc < simplex[n].1.min(cr) {
                simplex[n] = (uc, cc);
            } else {
                let b = simplex[0].0.clone();
                for v in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        v.0[k] = b[k] + 0.5 * (v.0[k] - b[k]);
                    }
                    v.1 = prob.eval(&to_x(&v.0, &prob)).1;
                }
            }
        }
    }
    iter += it;
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let x = to_x(&simplex[0].0, &prob);
    let (r, cost) = prob.eval(&x);
    let stop = if converged { Some(true) } else { None };
    Ok(finish(&mut prob, x, r, cost, None, iter, stop, Method::NelderMead))
}
