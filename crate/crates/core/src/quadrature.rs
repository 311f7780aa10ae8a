//! Adaptive Gauss–Kronrod quadrature and the nested integral over the TLS
//! rate/energy distribution.

use serde::{Deserialize, Serialize};

use crate::constants::BOLTZMANN;
use crate::error::{Error, Result};
use crate::model::{r_max, TlsDistribution};
use crate::real::Real;

/// How the inner rate integral is sampled after the `R = R_max sin²θ`
/// substitution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum RGridKind {
    /// Adaptive in `u = ln tan(θ/2)`; the measure `P dR` becomes `2 du`,
    /// which spaces nodes logarithmically in `R` near `r_min`.
    #[default]
    LogSpaced,
    /// Adaptive directly in `θ`; the measure is `2 dθ / sin θ`.
    SingularityMapped,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegrationPlan<F> {
    pub rel_tol: F,
    pub abs_tol: F,
    /// Bisection budget of each adaptive 1-D integration.
    pub max_subdivisions: usize,
    pub r_grid_kind: RGridKind,
    /// Initial number of equal panels of the outer energy integral.
    pub e_grid_points: usize,
}

impl<F: Real> Default for IntegrationPlan<F> {
    fn default() -> Self {
        Self {
            rel_tol: F::lit(1e-6),
            abs_tol: F::zero(),
            max_subdivisions: 1000,
            r_grid_kind: RGridKind::LogSpaced,
            e_grid_points: 16,
        }
    }
}

impl<F: Real> IntegrationPlan<F> {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > F::zero()) {
            return Err(Error::InvalidParameter {
                name: "rel_tol",
                reason: format!("must be > 0, got {}", self.rel_tol),
            });
        }
        if !(self.abs_tol >= F::zero()) {
            return Err(Error::InvalidParameter {
                name: "abs_tol",
                reason: format!("must be >= 0, got {}", self.abs_tol),
            });
        }
        if self.max_subdivisions < 1 {
            return Err(Error::InvalidParameter {
                name: "max_subdivisions",
                reason: "must be >= 1".into(),
            });
        }
        if self.e_grid_points < 8 {
            return Err(Error::InvalidParameter {
                name: "e_grid_points",
                reason: format!("must be >= 8, got {}", self.e_grid_points),
            });
        }
        Ok(())
    }

    fn tolerance(&self, value: F) -> F {
        self.abs_tol.max(self.rel_tol * value.abs())
    }
}

/// Integral estimate with its absolute error estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrature<F> {
    pub value: F,
    pub error: F,
    /// Number of bisections performed.
    pub subdivisions: usize,
}

// 15-point Kronrod abscissae and weights with the embedded 7-point Gauss rule.
const XGK: [f64; 8] = [
    0.991_455_371_120_812_639_206_854_697_526_329,
    0.949_107_912_342_758_524_526_189_684_047_851,
    0.864_864_423_359_769_072_789_712_788_640_926,
    0.741_531_185_599_394_439_863_864_773_280_788,
    0.586_087_235_467_691_130_294_144_845_693_013,
    0.405_845_151_377_397_166_906_606_412_076_961,
    0.207_784_955_007_898_467_600_689_403_773_245,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_224_963_732_008_058_970,
    0.063_092_092_629_978_553_290_700_663_189_204,
    0.104_790_010_322_250_183_839_876_322_541_518,
    0.140_653_259_715_525_918_745_189_590_510_238,
    0.169_004_726_639_267_902_826_583_426_598_550,
    0.190_350_578_064_785_409_913_256_402_421_014,
    0.204_432_940_075_298_892_414_161_999_234_649,
    0.209_482_141_084_727_828_012_999_174_891_714,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_693_270_611_432_679_082,
    0.279_705_391_489_276_667_901_467_771_423_780,
    0.381_830_050_505_118_944_950_369_775_488_975,
    0.417_959_183_673_469_387_755_102_040_816_327,
];

#[derive(Debug, Clone, Copy)]
struct Panel<F> {
    a: F,
    b: F,
    value: F,
    error: F,
    // companion integral carried along with the same nodes
    aux: F,
}

/// One G7–K15 evaluation on `[a, b]`. The integrand returns a value and a
/// non-negative companion quantity that is integrated with the Kronrod
/// weights but not error-controlled.
fn gk15<F, G>(f: &mut G, a: F, b: F) -> Result<Panel<F>>
where
    F: Real,
    G: FnMut(F) -> Result<(F, F)>,
{
    let two = F::lit(2.0);
    let center = (a + b) / two;
    let half = (b - a) / two;
    let (fc, auxc) = f(center)?;
    let mut kronrod = fc * F::lit(WGK[7]);
    let mut gauss = fc * F::lit(WG[3]);
    let mut res_abs = fc.abs() * F::lit(WGK[7]);
    let mut aux = auxc * F::lit(WGK[7]);
    let mut fv1 = [F::zero(); 7];
    let mut fv2 = [F::zero(); 7];
    for j in 0..7 {
        let dx = half * F::lit(XGK[j]);
        let (f1, a1) = f(center - dx)?;
        let (f2, a2) = f(center + dx)?;
        fv1[j] = f1;
        fv2[j] = f2;
        let w = F::lit(WGK[j]);
        kronrod += w * (f1 + f2);
        res_abs += w * (f1.abs() + f2.abs());
        aux += w * (a1 + a2);
        if j % 2 == 1 {
            gauss += F::lit(WG[j / 2]) * (f1 + f2);
        }
    }
    let mean = kronrod / two;
    let mut res_asc = F::lit(WGK[7]) * (fc - mean).abs();
    for j in 0..7 {
        res_asc += F::lit(WGK[j]) * ((fv1[j] - mean).abs() + (fv2[j] - mean).abs());
    }
    let abs_half = half.abs();
    let value = kronrod * half;
    let res_abs = res_abs * abs_half;
    let res_asc = res_asc * abs_half;
    let mut err = ((kronrod - gauss) * half).abs();
    if res_asc != F::zero() && err != F::zero() {
        let scale = (F::lit(200.0) * err / res_asc).powf(F::lit(1.5));
        err = if scale < F::one() { res_asc * scale } else { res_asc };
    }
    let round_off = F::lit(50.0) * F::epsilon() * res_abs;
    if round_off > err {
        err = round_off;
    }
    if !value.is_finite() || !err.is_finite() {
        return Err(Error::Domain(format!(
            "integrand not finite on [{a}, {b}]"
        )));
    }
    Ok(Panel {
        a,
        b,
        value,
        error: err,
        aux: aux * abs_half,
    })
}

struct Adaptive<F> {
    value: F,
    error: F,
    aux: F,
    subdivisions: usize,
}

/// Globally adaptive bisection, always splitting the panel with the
/// largest error. Sums are re-accumulated in panel order so the result
/// depends only on the plan and the integrand.
fn adaptive<F, G>(
    f: &mut G,
    a: F,
    b: F,
    panels: usize,
    plan: &IntegrationPlan<F>,
) -> Result<Adaptive<F>>
where
    F: Real,
    G: FnMut(F) -> Result<(F, F)>,
{
    let panels = panels.max(1);
    let width = (b - a) / F::from_usize(panels).unwrap();
    let mut list = Vec::with_capacity(panels + plan.max_subdivisions);
    for i in 0..panels {
        let lo = a + width * F::from_usize(i).unwrap();
        let hi = if i + 1 == panels { b } else { lo + width };
        list.push(gk15(f, lo, hi)?);
    }
    let totals = |list: &[Panel<F>]| {
        let mut v = F::zero();
        let mut e = F::zero();
        let mut x = F::zero();
        for p in list {
            v += p.value;
            e += p.error;
            x += p.aux;
        }
        (v, e, x)
    };
    let mut subdivisions = 0;
    loop {
        let (value, error, aux) = totals(&list);
        if error <= plan.tolerance(value) {
            return Ok(Adaptive {
                value,
                error,
                aux,
                subdivisions,
            });
        }
        if subdivisions >= plan.max_subdivisions {
            return Err(Error::Convergence {
                value: value.to_f64_lossy(),
                error: error.to_f64_lossy(),
            });
        }
        let (worst, _) = list
            .iter()
            .enumerate()
            .fold((0, F::neg_infinity()), |acc, (i, p)| {
                if p.error > acc.1 {
                    (i, p.error)
                } else {
                    acc
                }
            });
        let p = list[worst];
        let mid = (p.a + p.b) / F::lit(2.0);
        if !(mid > p.a && mid < p.b) {
            // panel can no longer be split in this precision
            return Err(Error::Convergence {
                value: value.to_f64_lossy(),
                error: error.to_f64_lossy(),
            });
        }
        let left = gk15(f, p.a, mid)?;
        let right = gk15(f, mid, p.b)?;
        list[worst] = left;
        list.insert(worst + 1, right);
        subdivisions += 1;
    }
}

/// Adaptive integral of `f` over `[a, b]`.
///
/// Integrable endpoint singularities are fine: the rule never samples the
/// endpoints. Fails with [`Error::Convergence`] (carrying the best
/// estimate) when the bisection budget runs out.
pub fn integrate_1d<F, G>(f: G, a: F, b: F, plan: &IntegrationPlan<F>) -> Result<Quadrature<F>>
where
    F: Real,
    G: Fn(F) -> F,
{
    integrate_1d_panels(f, a, b, 1, plan)
}

/// Like [`integrate_1d`], starting from `panels` equal sub-intervals.
pub fn integrate_1d_panels<F, G>(
    f: G,
    a: F,
    b: F,
    panels: usize,
    plan: &IntegrationPlan<F>,
) -> Result<Quadrature<F>>
where
    F: Real,
    G: Fn(F) -> F,
{
    plan.validate()?;
    if !(a < b) {
        return Err(Error::Domain(format!("need a < b, got [{a}, {b}]")));
    }
    let mut g = |x: F| Ok((f(x), F::zero()));
    let r = adaptive(&mut g, a, b, panels, plan)?;
    Ok(Quadrature {
        value: r.value,
        error: r.error,
        subdivisions: r.subdivisions,
    })
}

/// `∫_{r_min}^{R_max} dR / (R sqrt(1 − R/R_max))` written in the stable form
/// `2 ln(1 + sqrt(1 − q)) − ln q`, `q = r_min/R_max`.
pub fn rate_measure<F: Real>(r_min: F, r_max: F) -> F {
    let q = r_min / r_max;
    if q >= F::one() {
        return F::zero();
    }
    F::lit(2.0) * (F::one() + (F::one() - q).sqrt()).ln() - q.ln()
}

/// Smallest energy whose `R_max(E)` reaches `r_min`, or zero if every
/// positive energy qualifies down to ~e^-200 of `e_hi`.
fn energy_threshold<F: Real>(dist: &TlsDistribution<F>, temperature: F, e_hi: F) -> Result<F> {
    let rm = |e: F| r_max(e, temperature, dist);
    if rm(e_hi)? <= dist.r_min {
        return Err(Error::DegenerateDomain(format!(
            "R_max(E) <= r_min = {} Hz for every E up to {} kT",
            dist.r_min, dist.e_max_factor
        )));
    }
    let mut hi = e_hi.ln();
    let mut lo = hi - F::lit(200.0);
    if rm(lo.exp())? >= dist.r_min {
        return Ok(F::zero());
    }
    for _ in 0..200 {
        let mid = (lo + hi) / F::lit(2.0);
        if rm(mid.exp())? < dist.r_min {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= F::epsilon() * hi.abs().max(F::one()) {
            break;
        }
    }
    Ok(hi.exp())
}

/// Unnormalized rate integral `∫ g(R) dR / (R sqrt(1 − R/R_max(E)))` over
/// `[r_min, R_max(E))` at a single energy, using the substitution of
/// `plan.r_grid_kind`. Zero when `R_max(E) ≤ r_min`.
pub fn integrate_rate_slice<F, G>(
    g: G,
    e_split: F,
    dist: &TlsDistribution<F>,
    temperature: F,
    plan: &IntegrationPlan<F>,
) -> Result<Quadrature<F>>
where
    F: Real,
    G: Fn(F) -> F,
{
    plan.validate()?;
    dist.validate()?;
    rate_slice(g, e_split, dist, temperature, plan)
}

fn rate_slice<F, G>(
    f: G,
    e: F,
    dist: &TlsDistribution<F>,
    temperature: F,
    plan: &IntegrationPlan<F>,
) -> Result<Quadrature<F>>
where
    F: Real,
    G: Fn(F) -> F,
{
    let two = F::lit(2.0);
    let rmax = r_max(e, temperature, dist)?;
    if rmax <= dist.r_min {
        return Ok(Quadrature {
            value: F::zero(),
            error: F::zero(),
            subdivisions: 0,
        });
    }
    let theta_min = (dist.r_min / rmax).sqrt().asin();
    let r = match plan.r_grid_kind {
        RGridKind::LogSpaced => {
            // u = ln tan(θ/2), dθ/sinθ = du
            let u_min = (theta_min / two).tan().ln();
            let mut g = |u: F| {
                let theta = two * u.exp().atan();
                let s = theta.sin();
                Ok((two * f(rmax * s * s), F::zero()))
            };
            adaptive(&mut g, u_min, F::zero(), 4, plan)?
        }
        RGridKind::SingularityMapped => {
            let mut g = |theta: F| {
                let s = theta.sin();
                Ok((two * f(rmax * s * s) / s, F::zero()))
            };
            adaptive(&mut g, theta_min, F::FRAC_PI_2(), 4, plan)?
        }
    };
    Ok(Quadrature {
        value: r.value,
        error: r.error,
        subdivisions: r.subdivisions,
    })
}

/// Integral of `f(R, E)·P(R, E)` over `R ∈ [r_min, R_max(E))`,
/// `E ∈ [0, e_max_factor·kT]`.
///
/// The inner rate integral uses `R = R_max sin²θ`, which removes the
/// inverse square-root singularity at `R_max`; the `1/R` divergence at small
/// rates is cut at `r_min`. Energies with `R_max(E) < r_min` carry no
/// weight. Inner error estimates are integrated over `E` and added to the
/// outer estimate.
///
/// With `dist.normalize` the result is divided by the weight of the
/// domain, computed from the closed-form rate integral.
pub fn integrate_tls<F, G>(
    f: G,
    dist: &TlsDistribution<F>,
    temperature: F,
    plan: &IntegrationPlan<F>,
) -> Result<Quadrature<F>>
where
    F: Real,
    G: Fn(F, F) -> F,
{
    plan.validate()?;
    dist.validate()?;
    if !(temperature > F::zero()) {
        return Err(Error::Domain(format!("temperature must be > 0, got {temperature}")));
    }
    let kt = F::lit(BOLTZMANN) * temperature;
    let e_hi = dist.e_max_factor * kt;
    let e_lo = energy_threshold(dist, temperature, e_hi)?;
    let inner_plan = IntegrationPlan {
        rel_tol: plan.rel_tol / F::lit(4.0),
        abs_tol: F::zero(),
        ..*plan
    };
    let mut outer = |e: F| -> Result<(F, F)> {
        let inner = rate_slice(|r| f(r, e), e, dist, temperature, &inner_plan)?;
        Ok((inner.value, inner.error))
    };
    let res = adaptive(&mut outer, e_lo, e_hi, plan.e_grid_points, plan)?;
    let mut value = res.value;
    let mut error = res.error + res.aux;

    if dist.normalize {
        let mut weight = |e: F| -> Result<(F, F)> {
            let rmax = r_max(e, temperature, dist)?;
            Ok((rate_measure(dist.r_min, rmax), F::zero()))
        };
        let z = adaptive(&mut weight, e_lo, e_hi, plan.e_grid_points, plan)?;
        if !(z.value > F::zero()) {
            return Err(Error::DegenerateDomain("distribution has zero weight".into()));
        }
        error = error / z.value + value.abs() * z.error / (z.value * z.value);
        value /= z.value;
    }
    if error > plan.tolerance(value) * F::lit(2.0) {
        // nested estimates are additive and conservative; only flag gross misses
        return Err(Error::Convergence {
            value: value.to_f64_lossy(),
            error: error.to_f64_lossy(),
        });
    }
    Ok(Quadrature {
        value,
        error,
        subdivisions: res.subdivisions,
    })
}
