//! Write-failure probability and the word-level metrics.
//!
//! All currents and durations are normalized: `i = I / I_c` and `t = T / T_c`,
//! where `I_c` is the critical switching current and `T_c` the characteristic
//! relaxation time of the cell. Neither constant enters any computation.
//!
//! Bits are indexed by significance, `b = 0` being the least significant bit.
//! The MSE weights bit `b` by `4^b`.

use serde::Serialize;

use crate::error::{domain, Error, Result};
use crate::scalar::{weight, Scalar};

pub const DEFAULT_DELTA: f64 = 60.0;
pub const DEFAULT_EPSILON: f64 = 1e-3;

/// Device constants in normalized units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DeviceParams<T> {
    delta: T,
    epsilon: T,
}

impl<T: Scalar> DeviceParams<T> {
    /// `delta` is the thermal stability factor; `epsilon` keeps every current
    /// at or above `1 + epsilon`.
    pub fn new(delta: T, epsilon: T) -> Result<Self> {
        if !(delta > T::zero()) || !delta.is_finite() {
            return Err(Error::InvalidInput(format!(
                "delta must be positive and finite, got {delta}"
            )));
        }
        if !(epsilon > T::zero() && epsilon < T::one()) {
            return Err(Error::InvalidInput(format!(
                "epsilon must lie in (0, 1), got {epsilon}"
            )));
        }
        Ok(Self { delta, epsilon })
    }

    pub fn delta(&self) -> T {
        self.delta
    }

    pub fn epsilon(&self) -> T {
        self.epsilon
    }

    /// Failure-probability prefactor `c = delta * pi^2 / 4`.
    pub fn c(&self) -> T {
        self.delta * T::PI() * T::PI() / T::lit(4.0)
    }

    /// Smallest admissible current, `1 + epsilon`.
    pub fn min_current(&self) -> T {
        T::one() + self.epsilon
    }
}

impl<T: Scalar> Default for DeviceParams<T> {
    fn default() -> Self {
        Self {
            delta: T::lit(DEFAULT_DELTA),
            epsilon: T::lit(DEFAULT_EPSILON),
        }
    }
}

/// Normalized write-energy budget.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize)]
#[serde(transparent)]
pub struct Budget<T>(T);

impl<T: Scalar> Budget<T> {
    pub fn new(energy: T) -> Result<Self> {
        if !(energy > T::zero()) || !energy.is_finite() {
            return Err(Error::InvalidInput(format!(
                "energy budget must be positive and finite, got {energy}"
            )));
        }
        Ok(Self(energy))
    }

    pub fn energy(&self) -> T {
        self.0
    }
}

/// Per-bit write pulses, LSB first.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PulseAllocation<T> {
    pub currents: Vec<T>,
    pub durations: Vec<T>,
}

impl<T: Scalar> PulseAllocation<T> {
    /// Checks shape and sign only; see [`PulseAllocation::check_feasible`] for
    /// the current floor and the budget.
    pub fn new(currents: Vec<T>, durations: Vec<T>) -> Result<Self> {
        if currents.is_empty() {
            return Err(Error::InvalidInput("allocation needs at least one bit".into()));
        }
        if currents.len() != durations.len() {
            return Err(Error::InvalidInput(format!(
                "{} currents but {} durations",
                currents.len(),
                durations.len()
            )));
        }
        if let Some(b) = durations.iter().position(|t| !(*t >= T::zero()) || !t.is_finite()) {
            return Err(Error::InvalidInput(format!("duration of bit {b} is {}", durations[b])));
        }
        if let Some(b) = currents.iter().position(|i| !i.is_finite()) {
            return Err(Error::InvalidInput(format!("current of bit {b} is {}", currents[b])));
        }
        Ok(Self { currents, durations })
    }

    /// Uniform pulse `(current, duration)` on every bit.
    pub fn uniform(bits: usize, current: T, duration: T) -> Result<Self> {
        Self::new(vec![current; bits], vec![duration; bits])
    }

    pub fn bits(&self) -> usize {
        self.currents.len()
    }

    /// Every current at or above `1 + epsilon` (up to `slack`) and the energy
    /// within `energy_tol` of the budget or below it.
    pub fn check_feasible(&self, params: &DeviceParams<T>, budget: Budget<T>, energy_tol: T) -> Result<()> {
        let floor = params.min_current();
        let slack = floor * T::epsilon() * T::lit(4.0);
        if let Some(b) = self.currents.iter().position(|&i| i < floor - slack) {
            return Err(Error::InvalidInput(format!(
                "current of bit {b} is {} below the floor {floor}",
                self.currents[b]
            )));
        }
        let e = energy(self);
        if e > budget.energy() + energy_tol {
            return Err(Error::InvalidInput(format!(
                "energy {e} exceeds budget {} by more than {energy_tol}",
                budget.energy()
            )));
        }
        Ok(())
    }
}

/// Exact write-failure probability of a single pulse,
/// `1 - exp(-c (i-1) / (i exp(2(i-1)t) - 1))`.
///
/// Evaluated as `-expm1(-x)` with `x = c (i-1) e^{-a} / ((i-1) - expm1(-a))`,
/// `a = 2(i-1)t`, which avoids overflow for long pulses and cancellation near
/// `i = 1`.
pub fn failure_prob_exact<T: Scalar>(params: &DeviceParams<T>, current: T, duration: T) -> Result<T> {
    if !(current > T::one()) {
        return Err(domain(
            "failure_prob_exact",
            format!("current must exceed 1, got {current}"),
        ));
    }
    if !(duration >= T::zero()) {
        return Err(domain(
            "failure_prob_exact",
            format!("duration must be nonnegative, got {duration}"),
        ));
    }
    let excess = current - T::one();
    let a = T::lit(2.0) * excess * duration;
    let decay = (-a).exp();
    let denom = excess - (-a).exp_m1();
    let x = params.c() * excess * decay / denom;
    Ok(-(-x).exp_m1())
}

/// Approximate failure probability `c exp(-2(i-1)t)`.
///
/// Deliberately unclamped: it can exceed one when `(i-1)t` is small.
pub fn failure_prob_approx<T: Scalar>(params: &DeviceParams<T>, current: T, duration: T) -> T {
    params.c() * (T::lit(-2.0) * (current - T::one()) * duration).exp()
}

/// `sum_b i_b^2 t_b`.
pub fn energy<T: Scalar>(alloc: &PulseAllocation<T>) -> T {
    alloc
        .currents
        .iter()
        .zip(&alloc.durations)
        .fold(T::zero(), |acc, (&i, &t)| acc + i * i * t)
}

/// Longest pulse of the word.
pub fn latency<T: Scalar>(alloc: &PulseAllocation<T>) -> T {
    alloc.durations.iter().fold(T::zero(), |acc, &t| acc.max(t))
}

/// `c sum_b 4^b exp(-2(i_b-1)t_b)`.
pub fn mse<T: Scalar>(params: &DeviceParams<T>, alloc: &PulseAllocation<T>) -> T {
    let kernel = alloc
        .currents
        .iter()
        .zip(&alloc.durations)
        .enumerate()
        .fold(T::zero(), |acc, (b, (&i, &t))| {
            acc + weight::<T>(b) * (T::lit(-2.0) * (i - T::one()) * t).exp()
        });
    params.c() * kernel
}

/// `10 log10((2^B - 1)^2 / mse)`.
pub fn psnr_from_mse<T: Scalar>(bits: usize, mse: T) -> Result<T> {
    if !(mse > T::zero()) {
        return Err(domain("psnr", format!("MSE must be positive, got {mse}")));
    }
    let peak = T::lit(2.0f64.powi(bits as i32) - 1.0);
    Ok(T::lit(10.0) * (peak * peak / mse).log10())
}

/// PSNR of the word written with `alloc`; the word width is `alloc.bits()`.
pub fn psnr<T: Scalar>(params: &DeviceParams<T>, alloc: &PulseAllocation<T>) -> Result<T> {
    psnr_from_mse(alloc.bits(), mse(params, alloc))
}

/// Bits whose approximate failure probability exceeds one.
pub fn saturated_bits<T: Scalar>(params: &DeviceParams<T>, alloc: &PulseAllocation<T>) -> Vec<usize> {
    alloc
        .currents
        .iter()
        .zip(&alloc.durations)
        .enumerate()
        .filter(|(_, (&i, &t))| failure_prob_approx(params, i, t) > T::one())
        .map(|(b, _)| b)
        .collect()
}
