//! Closed forms for the all-twos starting point.
//!
//! With every current at 2 and `E > 2B(B-1) ln 2`, one duration solve gives
//! `t_b = E/(4B) + (b - (B-1)/2) ln 2`, which is already a fixed point of the
//! alternate search. These expressions double as fast paths and as test
//! oracles for the iterative solver.

use num_bigint::BigInt;
use num_rational::BigRational;
use serde::Serialize;

use crate::error::{InfeasibleCondition, Result};
use crate::model::{Budget, DeviceParams};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SingleBitOptimum<T> {
    pub current: T,
    pub duration: T,
    pub failure_prob: T,
}

/// Minimizer of `c exp(-2(i-1)t)` subject to `i^2 t <= E`: `i = 2`, `t = E/4`.
pub fn single_bit_optimum<T: Scalar>(params: &DeviceParams<T>, budget: Budget<T>) -> SingleBitOptimum<T> {
    let e = budget.energy();
    SingleBitOptimum {
        current: T::lit(2.0),
        duration: e / T::lit(4.0),
        failure_prob: params.c() * (-e / T::lit(2.0)).exp(),
    }
}

/// `2B(B-1) ln 2`, the budget above which every all-twos duration is positive.
pub fn energy_threshold<T: Scalar>(bits: usize) -> T {
    let b = T::from_usize_lossy(bits);
    T::lit(2.0) * b * (b - T::one()) * T::LN_2()
}

fn condition<T: Scalar>(bits: usize, budget: Budget<T>) -> InfeasibleCondition {
    InfeasibleCondition {
        bits,
        energy: budget.energy().to_f64_lossy(),
        threshold: energy_threshold::<T>(bits).to_f64_lossy(),
    }
}

/// Durations `E/(4B) + (b - (B-1)/2) ln 2` for currents `(2, ..., 2)`.
pub fn alltwos_durations<T: Scalar>(bits: usize, budget: Budget<T>) -> Result<Vec<T>, InfeasibleCondition> {
    if bits == 0 || !(budget.energy() > energy_threshold::<T>(bits)) {
        return Err(condition(bits, budget));
    }
    let b = T::from_usize_lossy(bits);
    let base = budget.energy() / (T::lit(4.0) * b);
    let centre = (b - T::one()) / T::lit(2.0);
    Ok((0..bits)
        .map(|k| base + (T::from_usize_lossy(k) - centre) * T::LN_2())
        .collect())
}

/// Uniform durations `E/(4B)` for currents `(2, ..., 2)`.
pub fn uniform_durations<T: Scalar>(bits: usize, budget: Budget<T>) -> Vec<T> {
    vec![budget.energy() / (T::lit(4.0) * T::from_usize_lossy(bits)); bits]
}

/// Optimized vs. uniform MSE at currents `(2, ..., 2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MseClosedForms<T> {
    /// `c (B/2) 2^B exp(-E/(2B))`
    pub optimized: T,
    /// `c ((4^B - 1)/3) exp(-E/(2B))`
    pub uniform: T,
    /// `(3B/2) 2^B / (4^B - 1)`
    pub gamma: T,
    /// `(3B/2) 2^-B`
    pub gamma_approx: T,
}

pub fn mse_closed_forms<T: Scalar>(
    params: &DeviceParams<T>,
    bits: usize,
    budget: Budget<T>,
) -> Result<MseClosedForms<T>> {
    if bits == 0 || !(budget.energy() > energy_threshold::<T>(bits)) {
        return Err(condition(bits, budget).into());
    }
    Ok(MseClosedForms {
        optimized: mse_optimized_unchecked(params, bits, budget),
        uniform: mse_uniform(params, bits, budget),
        gamma: gamma(bits),
        gamma_approx: gamma_approx(bits),
    })
}

fn mse_optimized_unchecked<T: Scalar>(params: &DeviceParams<T>, bits: usize, budget: Budget<T>) -> T {
    let b = T::from_usize_lossy(bits);
    params.c() * b / T::lit(2.0) * T::lit(2.0).powi(bits as i32) * (-budget.energy() / (T::lit(2.0) * b)).exp()
}

/// MSE of the uniform allocation `(2, E/(4B))` on every bit. Valid for any
/// budget.
pub fn mse_uniform<T: Scalar>(params: &DeviceParams<T>, bits: usize, budget: Budget<T>) -> T {
    let b = T::from_usize_lossy(bits);
    let geometric = (T::lit(4.0).powi(bits as i32) - T::one()) / T::lit(3.0);
    params.c() * geometric * (-budget.energy() / (T::lit(2.0) * b)).exp()
}

/// MSE reduction ratio `(3B/2) 2^B / (4^B - 1)`, evaluated as
/// `(3B/2) / (2^B - 2^-B)` to stay finite for wide words.
pub fn gamma<T: Scalar>(bits: usize) -> T {
    let b = T::from_usize_lossy(bits);
    let two_b = T::lit(2.0).powi(bits as i32);
    T::lit(1.5) * b / (two_b - two_b.recip())
}

/// `(3B/2) 2^-B`.
pub fn gamma_approx<T: Scalar>(bits: usize) -> T {
    T::lit(1.5) * T::from_usize_lossy(bits) * T::lit(2.0).powi(-(bits as i32))
}

/// `gamma` as an exact rational.
pub fn gamma_rational(bits: usize) -> BigRational {
    let two_b = BigInt::from(1u8) << bits;
    let four_b = BigInt::from(1u8) << (2 * bits);
    BigRational::new(BigInt::from(3 * bits) * two_b, BigInt::from(2u8) * (four_b - 1u8))
}

/// Energy multiplier `2^(B-2) exp(-E/(2B))` of the all-twos duration solve.
///
/// Valid for `E >= 2B(B-1) ln 2`; at equality the LSB duration is exactly
/// zero and the multiplier is exactly one half.
pub fn dual_closed_form<T: Scalar>(bits: usize, budget: Budget<T>) -> Result<T> {
    if bits == 0 || budget.energy() < energy_threshold::<T>(bits) {
        return Err(condition(bits, budget).into());
    }
    let b = T::from_usize_lossy(bits);
    Ok(T::lit(2.0).powi(bits as i32 - 2) * (-budget.energy() / (T::lit(2.0) * b)).exp())
}
