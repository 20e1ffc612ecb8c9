//! Alternate convex search over durations and currents.
//!
//! Each outer iteration solves the duration problem for the current currents,
//! then the current problem for the new durations. Both are exact convex
//! solves, so the MSE trace never increases. From `(2, ..., 2)` the first
//! duration solve is already a fixed point whenever it leaves every bit with
//! a positive duration, which [`one_step_fast_path`] exploits.

use serde::Serialize;

use crate::analytic::{energy_threshold, mse_closed_forms};
use crate::error::{Error, Result};
use crate::model::{energy, mse, saturated_bits, Budget, DeviceParams, PulseAllocation};
use crate::scalar::{weight, Scalar};
use crate::steps::{solve_currents, solve_durations};

pub const DEFAULT_MAX_OUTER_ITERS: usize = 100;
pub const DEFAULT_ENERGY_TOL: f64 = 1e-9;
pub const DEFAULT_RELATIVE_MSE_TOL: f64 = 1e-12;

/// Starting currents `i^(0)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Start<T> {
    AllTwos,
    AllOnesPlusEps,
    Custom(Vec<T>),
}

impl<T: Scalar> Start<T> {
    pub fn currents(&self, params: &DeviceParams<T>, bits: usize) -> Result<Vec<T>> {
        let currents = match self {
            Start::AllTwos => vec![T::lit(2.0); bits],
            Start::AllOnesPlusEps => vec![params.min_current(); bits],
            Start::Custom(v) => {
                if v.len() != bits {
                    return Err(Error::InvalidInput(format!(
                        "custom start has {} currents for a {bits}-bit word",
                        v.len()
                    )));
                }
                if let Some(b) = v.iter().position(|&i| !(i >= params.min_current()) || !i.is_finite()) {
                    return Err(Error::InvalidInput(format!(
                        "custom start current of bit {b} is {}, below 1 + epsilon",
                        v[b]
                    )));
                }
                v.clone()
            }
        };
        Ok(currents)
    }
}

/// Stopping rules; a solve stops as soon as any configured rule fires.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum StopRule<T> {
    /// Largest absolute change of any current or duration.
    IterateDelta(T),
    /// Absolute change of the MSE.
    MseDelta(T),
    /// Change of the MSE relative to the starting MSE.
    RelativeMseDelta(T),
    /// Number of outer iterations.
    MaxIters(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverConfig<T> {
    pub start: Start<T>,
    pub stop: Vec<StopRule<T>>,
    /// Energy tolerance of the dual searches, relative to the budget.
    pub energy_tol: T,
    pub max_outer_iters: usize,
    /// Take the one-step shortcut from the all-twos start when it applies.
    pub fast_path: bool,
}

impl<T: Scalar> Default for SolverConfig<T> {
    fn default() -> Self {
        Self {
            start: Start::AllTwos,
            stop: vec![StopRule::RelativeMseDelta(T::lit(DEFAULT_RELATIVE_MSE_TOL))],
            energy_tol: T::lit(DEFAULT_ENERGY_TOL),
            max_outer_iters: DEFAULT_MAX_OUTER_ITERS,
            fast_path: true,
        }
    }
}

impl<T: Scalar> SolverConfig<T> {
    pub fn with_start(mut self, start: Start<T>) -> Self {
        self.start = start;
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.energy_tol > T::zero()) {
            return Err(Error::InvalidInput("energy_tol must be positive".into()));
        }
        for rule in &self.stop {
            let ok = match *rule {
                StopRule::IterateDelta(x) | StopRule::MseDelta(x) | StopRule::RelativeMseDelta(x) => x > T::zero(),
                StopRule::MaxIters(n) => n > 0,
            };
            if !ok {
                return Err(Error::InvalidInput(format!(
                    "stopping rule {rule:?} needs a positive threshold"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Termination {
    FastPath,
    IterateDelta,
    MseDelta,
    MaxIters,
    /// `max_outer_iters` reached without any rule firing.
    IterationCap,
}

/// Multipliers of one outer iteration. In a fast-path report `nu_prime` is
/// the value the current step's optimality conditions imply, not a solve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IterationDuals<T> {
    pub nu: T,
    pub nu_prime: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport<T> {
    pub bits: usize,
    pub budget: T,
    /// `(i^(k), t^(k))`; entry 0 holds the start with the uniform durations
    /// `E / sum_b i_b^2`.
    pub iterates: Vec<PulseAllocation<T>>,
    pub mse_trace: Vec<T>,
    pub energy_trace: Vec<T>,
    /// One entry per outer iteration, i.e. `iterates.len() - 1` entries.
    pub duals: Vec<IterationDuals<T>>,
    pub termination: Termination,
    pub fast_path: bool,
    /// Relative excess of the final MSE over the all-twos closed form, when
    /// that closed form applies and is not reached.
    pub gap_to_alltwos: Option<T>,
    /// Bits of the final allocation whose approximate failure probability
    /// exceeds one.
    pub saturated_bits: Vec<usize>,
}

impl<T: Scalar> SolveReport<T> {
    pub fn final_allocation(&self) -> &PulseAllocation<T> {
        self.iterates.last().expect("report always holds the start")
    }

    pub fn final_mse(&self) -> T {
        *self.mse_trace.last().expect("report always holds the start")
    }

    pub fn outer_iterations(&self) -> usize {
        self.iterates.len() - 1
    }
}

/// Runs the alternate search.
pub fn solve<T: Scalar>(
    params: &DeviceParams<T>,
    bits: usize,
    budget: Budget<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    if bits == 0 {
        return Err(Error::InvalidInput("word width must be at least 1".into()));
    }
    config.validate()?;
    if config.fast_path && config.start == Start::AllTwos {
        return one_step_fast_path(params, bits, budget, config);
    }
    general_loop(params, bits, budget, config)
}

/// One duration solve from `(2, ..., 2)`. If every resulting duration is
/// positive the pair is returned as the converged point; otherwise the general
/// loop runs.
pub fn one_step_fast_path<T: Scalar>(
    params: &DeviceParams<T>,
    bits: usize,
    budget: Budget<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    if config.start != Start::AllTwos {
        return Err(Error::InvalidInput("the fast path needs the all-twos start".into()));
    }
    if bits == 0 {
        return Err(Error::InvalidInput("word width must be at least 1".into()));
    }
    config.validate()?;
    let tol = config.energy_tol * budget.energy();
    let mut report = initial_report(params, bits, budget, vec![T::lit(2.0); bits]);
    let currents = report.iterates[0].currents.clone();
    let (durations, dual) = solve_durations(params, &currents, budget, tol)?;
    if durations.iter().any(|&t| !(t > T::zero())) {
        return general_loop(params, bits, budget, config);
    }
    // nu' = 4^b e^{-2 t_b} / 2, identical for every bit
    let nu_prime = weight::<T>(0) * (T::lit(-2.0) * durations[0]).exp() / T::lit(2.0);
    let alloc = PulseAllocation { currents, durations };
    push_iterate(
        &mut report,
        params,
        alloc,
        IterationDuals {
            nu: dual.value,
            nu_prime,
        },
    );
    report.termination = Termination::FastPath;
    report.fast_path = true;
    finish(params, budget, &mut report);
    Ok(report)
}

fn initial_report<T: Scalar>(
    params: &DeviceParams<T>,
    bits: usize,
    budget: Budget<T>,
    currents: Vec<T>,
) -> SolveReport<T> {
    let sum_sq = currents.iter().fold(T::zero(), |acc, &i| acc + i * i);
    let start = PulseAllocation {
        durations: vec![budget.energy() / sum_sq; bits],
        currents,
    };
    SolveReport {
        bits,
        budget: budget.energy(),
        mse_trace: vec![mse(params, &start)],
        energy_trace: vec![energy(&start)],
        iterates: vec![start],
        duals: Vec::new(),
        termination: Termination::IterationCap,
        fast_path: false,
        gap_to_alltwos: None,
        saturated_bits: Vec::new(),
    }
}

fn push_iterate<T: Scalar>(
    report: &mut SolveReport<T>,
    params: &DeviceParams<T>,
    alloc: PulseAllocation<T>,
    duals: IterationDuals<T>,
) {
    report.mse_trace.push(mse(params, &alloc));
    report.energy_trace.push(energy(&alloc));
    report.iterates.push(alloc);
    report.duals.push(duals);
}

fn general_loop<T: Scalar>(
    params: &DeviceParams<T>,
    bits: usize,
    budget: Budget<T>,
    config: &SolverConfig<T>,
) -> Result<SolveReport<T>> {
    let tol = config.energy_tol * budget.energy();
    let currents = config.start.currents(params, bits)?;
    let mut report = initial_report(params, bits, budget, currents);
    let initial_mse = report.mse_trace[0];

    for k in 1..=config.max_outer_iters {
        let previous = report.final_allocation().clone();
        let (durations, d1) = solve_durations(params, &previous.currents, budget, tol)?;
        let (currents, d2) = solve_currents(params, &durations, budget, tol)?;
        let alloc = PulseAllocation { currents, durations };
        let prev_mse = report.final_mse();
        push_iterate(
            &mut report,
            params,
            alloc,
            IterationDuals {
                nu: d1.value,
                nu_prime: d2.value,
            },
        );

        let current = report.final_allocation();
        let mse_delta = (report.final_mse() - prev_mse).abs();
        let fired = config.stop.iter().find_map(|rule| match *rule {
            StopRule::IterateDelta(tol) => {
                (max_abs_delta(&previous, current) <= tol).then_some(Termination::IterateDelta)
            }
            StopRule::MseDelta(tol) => (mse_delta <= tol).then_some(Termination::MseDelta),
            StopRule::RelativeMseDelta(tol) => (mse_delta <= tol * initial_mse).then_some(Termination::MseDelta),
            StopRule::MaxIters(n) => (k >= n).then_some(Termination::MaxIters),
        });
        if let Some(reason) = fired {
            report.termination = reason;
            break;
        }
    }
    finish(params, budget, &mut report);
    Ok(report)
}

fn finish<T: Scalar>(params: &DeviceParams<T>, budget: Budget<T>, report: &mut SolveReport<T>) {
    report.saturated_bits = saturated_bits(params, report.final_allocation());
    if budget.energy() > energy_threshold::<T>(report.bits) {
        if let Ok(forms) = mse_closed_forms(params, report.bits, budget) {
            let gap = (report.final_mse() - forms.optimized) / forms.optimized;
            if gap > T::lit(1e-9) {
                report.gap_to_alltwos = Some(gap);
            }
        }
    }
}

fn max_abs_delta<T: Scalar>(a: &PulseAllocation<T>, b: &PulseAllocation<T>) -> T {
    let currents = a.currents.iter().zip(&b.currents);
    let durations = a.durations.iter().zip(&b.durations);
    currents
        .chain(durations)
        .fold(T::zero(), |acc, (&x, &y)| acc.max((x - y).abs()))
}
