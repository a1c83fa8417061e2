//! Optimal periodic dividends with capital injection for spectrally positive
//! Lévy surplus processes observed at Poisson times.
//!
//! The analytic modules are generic over the scalar type ([`Real`]); the
//! aliases below fix it to `f64`. The Monte Carlo oracle works in `f64` only.

pub mod barrier_optimizer;
pub mod barrier_valuation;
pub mod error;
pub mod expsum;
pub mod fluctuation_kernels;
pub mod levy_model;
pub mod mc_oracle;
pub mod quadrature;
pub mod regime_solver;
pub mod scalar;
pub mod scale_engine;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Model = levy_model::SpectrallyPositiveModel<f64>;
pub type Jumps = levy_model::JumpSpec<f64>;
pub type Scale = scale_engine::ScaleEngine<f64>;
pub type Kernels = fluctuation_kernels::KernelParams<f64>;
pub type Payoff = barrier_valuation::PayoffFunction<f64>;
pub type Valuation = barrier_valuation::ValuationContext<f64>;
pub type Measure = barrier_valuation::PotentialMeasure<f64>;
pub type SearchConfig = barrier_optimizer::BarrierSearchConfig<f64>;
pub type Regime = regime_solver::RegimeModel<f64>;
pub type Switch = regime_solver::SwitchJump<f64>;
pub type Grid = regime_solver::GridFunction<f64>;
pub type FixedPoint = regime_solver::FixedPointConfig<f64>;
