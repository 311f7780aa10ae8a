//! Photon-echo decoherence of erbium ions in glass: closed-form linewidth
//! model with spectral diffusion, TLS rate/energy quadrature, echo forward
//! models, a Monte-Carlo sudden-jump oracle and least-squares fitting.
//!
//! Everything numerical is generic over [`Real`] (`f32` or `f64`). Aliases
//! such as [`ModelParamsF64`] name the common concrete instantiations.
//!
//! Units are SI throughout except that linewidths and rates are in Hz.

pub mod constants;
pub mod echo;
pub mod error;
pub mod fit;
pub mod mc;
pub mod model;
pub mod quadrature;
pub mod real;

pub use echo::{
    simulate_2ppe_channels, simulate_2ppe_exponential, simulate_2ppe_integral, simulate_3ppe,
    DiffusionChannel, EchoKind, EchoTrace, ThreePulseConfig,
};
pub use error::{Error, Result};
pub use fit::{
    fit_3ppe_diffusion, fit_exponential_decay, fit_linewidth_surface, minimize, FitParam,
    FitResult, FitStatus, LinewidthPoint, MinimizeOptions, ParamName, SurfaceBounds,
    ThreePulseParam,
};
pub use mc::{mc_echo_2ppe, mc_linewidth, McEnsembleConfig, McLinewidth, PerturberClass};
pub use model::{
    coherence_time, effective_linewidth, flip_rate, gamma_sd, r_max, spectral_diffusion_product,
    tls_density, Environment, ModelParams, SpectralDiffusionRatios, TlsDistribution,
    TABLE_ONE_GAMMA_MAX,
};
pub use quadrature::{integrate_1d, integrate_rate_slice, integrate_tls, IntegrationPlan, Quadrature, RGridKind};
pub use real::Real;

pub type EnvironmentF64 = Environment<f64>;
pub type ModelParamsF64 = ModelParams<f64>;
pub type TlsDistributionF64 = TlsDistribution<f64>;
pub type IntegrationPlanF64 = IntegrationPlan<f64>;
pub type EchoTraceF64 = EchoTrace<f64>;
pub type ThreePulseConfigF64 = ThreePulseConfig<f64>;
pub type McEnsembleConfigF64 = McEnsembleConfig<f64>;
pub type FitResultF64 = FitResult<f64>;

pub type EnvironmentF32 = Environment<f32>;
pub type ModelParamsF32 = ModelParams<f32>;
pub type TlsDistributionF32 = TlsDistribution<f32>;
pub type IntegrationPlanF32 = IntegrationPlan<f32>;
pub type EchoTraceF32 = EchoTrace<f32>;
pub type ThreePulseConfigF32 = ThreePulseConfig<f32>;
pub type McEnsembleConfigF32 = McEnsembleConfig<f32>;
pub type FitResultF32 = FitResult<f32>;
