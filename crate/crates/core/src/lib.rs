//! Write-pulse allocation for multi-bit MRAM words.
//!
//! Each bit of a `B`-bit word is written with its own normalized current
//! `i_b` and duration `t_b`. A failed write of bit `b` costs `4^b` in squared
//! error, so more significant bits deserve stronger pulses. Given an energy
//! budget `sum_b i_b^2 t_b <= E`, the crate minimizes
//! `c sum_b 4^b exp(-2(i_b - 1) t_b)` by alternate convex search: durations and
//! currents are updated in turn, each by a closed-form water-filling step
//! whose energy multiplier is found by bisection.
//!
//! The numerical core is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix it to `f64`. The [`oracle`] module, used for
//! verification, works in `f64` only.
//!
//! ```
//! use pulseopt::{acs, model, Budget, DeviceParams, SolverConfig};
//!
//! let params = DeviceParams::default();
//! let report = acs::solve(&params, 8, Budget::new(300.0).unwrap(), &SolverConfig::default()).unwrap();
//! assert!(report.fast_path);
//! let psnr = model::psnr(&params, report.final_allocation()).unwrap();
//! assert!(psnr > 60.0);
//! ```

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acs;
pub mod analytic;
pub mod error;
pub mod lambertw;
pub mod model;
pub mod oracle;
pub mod scalar;
pub mod steps;

pub use error::{Error, InfeasibleCondition, Result};
pub use scalar::Scalar;

pub type DeviceParams<T = f64> = model::DeviceParams<T>;
pub type Budget<T = f64> = model::Budget<T>;
pub type PulseAllocation<T = f64> = model::PulseAllocation<T>;
pub type SolverConfig<T = f64> = acs::SolverConfig<T>;
pub type SolveReport<T = f64> = acs::SolveReport<T>;
pub type Start<T = f64> = acs::Start<T>;
pub type StopRule<T = f64> = acs::StopRule<T>;
pub type DualSolve<T = f64> = steps::DualSolve<T>;

pub type DeviceParamsF32 = model::DeviceParams<f32>;
pub type BudgetF32 = model::Budget<f32>;
pub type PulseAllocationF32 = model::PulseAllocation<f32>;
pub type SolverConfigF32 = acs::SolverConfig<f32>;
pub type SolveReportF32 = acs::SolveReport<f32>;

pub use acs::Termination;
pub use oracle::McEstimate;
