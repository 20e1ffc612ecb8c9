//! The two inner convex solves of the alternate search.
//!
//! With the currents fixed, the optimal durations are a water-filling over the
//! bit positions; with the durations fixed, the optimal currents come out of a
//! Lambert W expression. In both cases every bit's value is a closed-form
//! function of the energy multiplier, and the multiplier is found by bisection
//! on its logarithm so that the energy constraint is tight.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::lambertw::lambert_w0_ln;
use crate::model::{Budget, DeviceParams};
use crate::scalar::{ln_weight, Scalar};

/// Bisection cap for the dual search.
pub const MAX_BISECTIONS: usize = 200;

const TOL_FLOOR_ULPS: f64 = 64.0;
const MAX_BRACKET_EXPANSIONS: usize = 64;
const MAX_POLISH_STEPS: usize = 4;

/// Result of a dual search.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSolve<T> {
    /// The multiplier. Underflows to zero for very large budgets; `ln_value`
    /// stays exact.
    pub value: T,
    pub ln_value: T,
    pub iterations: usize,
    /// `|achieved energy - budget|`.
    pub residual: T,
    /// Bits sitting at their lower bound (`t = 0`, or `i = 1 + epsilon`).
    pub inactive: Vec<usize>,
}

/// `ln` of the duration thresholds `2 4^b (i_b - 1) / i_b^2`: bit `b` gets a
/// positive duration iff the multiplier lies below its threshold.
pub fn duration_thresholds_ln<T: Scalar>(currents: &[T]) -> Vec<T> {
    currents
        .iter()
        .enumerate()
        .map(|(b, &i)| T::LN_2() + ln_weight::<T>(b) + (i - T::one()).ln() - T::lit(2.0) * i.ln())
        .collect()
}

/// Optimal durations for fixed currents at a given `ln(nu)`.
pub fn durations_at_dual<T: Scalar>(currents: &[T], ln_nu: T) -> Vec<T> {
    duration_thresholds_ln(currents)
        .into_iter()
        .zip(currents)
        .map(|(ln_thr, &i)| {
            if ln_nu >= ln_thr {
                T::zero()
            } else {
                (ln_thr - ln_nu) / (T::lit(2.0) * (i - T::one()))
            }
        })
        .collect()
}

/// `ln` of the current thresholds `4^b e^{-2 t_b eps} / (1 + eps)`; `None`
/// for bits with zero duration.
pub fn current_thresholds_ln<T: Scalar>(params: &DeviceParams<T>, durations: &[T]) -> Vec<Option<T>> {
    let eps = params.epsilon();
    durations
        .iter()
        .enumerate()
        .map(|(b, &t)| (t > T::zero()).then(|| ln_weight::<T>(b) - params.min_current().ln() - T::lit(2.0) * t * eps))
        .collect()
}

/// Optimal currents for fixed durations at a given `ln(nu')`.
pub fn currents_at_dual<T: Scalar>(params: &DeviceParams<T>, durations: &[T], ln_nu: T) -> Vec<T> {
    current_terms(params, durations, ln_nu)
        .into_iter()
        .map(|(i, _)| i)
        .collect()
}

/// Per-bit current and, for bits on the Lambert branch, `z = 2 t_b i_b`.
fn current_terms<T: Scalar>(params: &DeviceParams<T>, durations: &[T], ln_nu: T) -> Vec<(T, Option<T>)> {
    let floor = params.min_current();
    let two = T::lit(2.0);
    current_thresholds_ln(params, durations)
        .into_iter()
        .zip(durations)
        .enumerate()
        .map(|(b, (thr, &t))| match thr {
            Some(ln_thr) if ln_nu < ln_thr => {
                let ln_arg = (two * t).ln() + ln_weight::<T>(b) + two * t - ln_nu;
                let z = lambert_w0_ln(ln_arg);
                ((z / (two * t)).max(floor), Some(z))
            }
            _ => (floor, None),
        })
        .collect()
}

/// Water-filling durations for fixed currents.
///
/// `tol` is an absolute tolerance on `|sum i_b^2 t_b - budget|`, floored at
/// a few ulps of the budget.
pub fn solve_durations<T: Scalar>(
    params: &DeviceParams<T>,
    currents: &[T],
    budget: Budget<T>,
    tol: T,
) -> Result<(Vec<T>, DualSolve<T>)> {
    check_tol(tol)?;
    if currents.is_empty() {
        return Err(Error::InvalidInput("no bits".into()));
    }
    let floor = params.min_current() * (T::one() - T::epsilon() * T::lit(64.0));
    if let Some(b) = currents.iter().position(|&i| !(i >= floor) || !i.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "current of bit {b} is {}, below 1 + epsilon",
            currents[b]
        )));
    }
    let thresholds = duration_thresholds_ln(currents);
    let eval = |ln_nu: T| {
        let mut energy = T::zero();
        let mut slope = T::zero();
        for (&ln_thr, &i) in thresholds.iter().zip(currents) {
            if ln_nu < ln_thr {
                let k = i * i / (T::lit(2.0) * (i - T::one()));
                energy = energy + k * (ln_thr - ln_nu);
                slope = slope - k;
            }
        }
        (energy, slope)
    };
    let ln_hi = fold_max(thresholds.iter().copied());
    let ln_lo = fold_min(thresholds.iter().copied()) - T::lit(16.0) * T::LN_10();
    let (ln_nu, iterations, residual) = search_dual("solve_durations", eval, ln_lo, ln_hi, budget.energy(), tol)?;
    let durations = durations_at_dual(currents, ln_nu);
    let inactive = zero_positions(&durations);
    Ok((
        durations,
        DualSolve {
            value: ln_nu.exp(),
            ln_value: ln_nu,
            iterations,
            residual,
            inactive,
        },
    ))
}

/// Lambert-W currents for fixed durations.
///
/// Bits with zero duration affect neither objective nor energy; they are
/// pinned to `1 + epsilon` and reported inactive. If every duration is zero
/// the constraint cannot bind, the multiplier is zero and `residual` equals
/// the full budget.
pub fn solve_currents<T: Scalar>(
    params: &DeviceParams<T>,
    durations: &[T],
    budget: Budget<T>,
    tol: T,
) -> Result<(Vec<T>, DualSolve<T>)> {
    check_tol(tol)?;
    if durations.is_empty() {
        return Err(Error::InvalidInput("no bits".into()));
    }
    if let Some(b) = durations.iter().position(|&t| !(t >= T::zero()) || !t.is_finite()) {
        return Err(Error::InvalidInput(format!("duration of bit {b} is {}", durations[b])));
    }
    let floor = params.min_current();
    let target = budget.energy();
    let thresholds = current_thresholds_ln(params, durations);
    let ln_hi = fold_max(thresholds.iter().flatten().copied());
    if ln_hi == T::neg_infinity() {
        return Ok((
            vec![floor; durations.len()],
            DualSolve {
                value: T::zero(),
                ln_value: T::neg_infinity(),
                iterations: 0,
                residual: target,
                inactive: (0..durations.len()).collect(),
            },
        ));
    }
    let min_energy = durations.iter().fold(T::zero(), |acc, &t| acc + floor * floor * t);
    if min_energy > target + tol {
        return Err(Error::Infeasible {
            stage: "solve_currents",
            min_energy: min_energy.to_f64_lossy(),
            budget: target.to_f64_lossy(),
        });
    }
    let eval = |ln_nu: T| {
        let mut energy = T::zero();
        let mut slope = T::zero();
        for ((i, z), &t) in current_terms(params, durations, ln_nu).into_iter().zip(durations) {
            energy = energy + i * i * t;
            if let Some(z) = z {
                slope = slope - i * z / (T::one() + z);
            }
        }
        (energy, slope)
    };
    let (ln_nu, iterations, residual) = if min_energy >= target - tol {
        (ln_hi, 0, (min_energy - target).abs())
    } else {
        let ln_lo = fold_min(thresholds.iter().flatten().copied()) - T::lit(16.0) * T::LN_10();
        search_dual("solve_currents", eval, ln_lo, ln_hi, target, tol)?
    };
    let currents = currents_at_dual(params, durations, ln_nu);
    let inactive = current_thresholds_ln(params, durations)
        .iter()
        .enumerate()
        .filter(|(_, thr)| thr.is_none_or(|ln_thr| ln_nu >= ln_thr))
        .map(|(b, _)| b)
        .collect();
    Ok((
        currents,
        DualSolve {
            value: ln_nu.exp(),
            ln_value: ln_nu,
            iterations,
            residual,
            inactive,
        },
    ))
}

/// Bisection on `ln(nu)` for `energy(ln nu) = target`, where `energy` is
/// nonincreasing with `energy(ln_hi) <= target`. The lower end is pushed down
/// geometrically until it brackets the root. Once the residual is within
/// `tol`, a few safeguarded Newton steps polish the root.
fn search_dual<T: Scalar>(
    stage: &'static str,
    eval: impl Fn(T) -> (T, T),
    mut ln_lo: T,
    mut ln_hi: T,
    target: T,
    tol: T,
) -> Result<(T, usize, T)> {
    let tol = tol.max(T::lit(TOL_FLOOR_ULPS) * T::epsilon() * target);
    let mut expansions = 0;
    while eval(ln_lo).0 < target {
        if expansions == MAX_BRACKET_EXPANSIONS {
            return Err(Error::NonConvergence {
                stage,
                iterations: 0,
                residual: (eval(ln_lo).0 - target).to_f64_lossy(),
            });
        }
        let gap = (ln_hi - ln_lo).max(T::one());
        ln_lo = ln_hi - gap * T::lit(2.0);
        expansions += 1;
    }

    let half = T::lit(0.5);
    let mut ln_nu = ln_lo;
    let mut residual = (eval(ln_lo).0 - target).abs();
    let mut iterations = 0;
    while residual > tol {
        if iterations == MAX_BISECTIONS {
            return Err(Error::NonConvergence {
                stage,
                iterations,
                residual: residual.to_f64_lossy(),
            });
        }
        iterations += 1;
        let mid = (ln_lo + ln_hi) * half;
        let (e, _) = eval(mid);
        ln_nu = mid;
        residual = (e - target).abs();
        if e > target {
            ln_lo = mid;
        } else {
            ln_hi = mid;
        }
    }

    for _ in 0..MAX_POLISH_STEPS {
        let (e, slope) = eval(ln_nu);
        if slope == T::zero() || e == target {
            break;
        }
        let candidate = ln_nu - (e - target) / slope;
        if !(candidate.is_finite()) {
            break;
        }
        let r = (eval(candidate).0 - target).abs();
        if r < residual {
            ln_nu = candidate;
            residual = r;
        } else {
            break;
        }
    }
    Ok((ln_nu, iterations, residual))
}

fn check_tol<T: Scalar>(tol: T) -> Result<()> {
    if !(tol > T::zero()) {
        return Err(Error::InvalidInput(format!("tolerance must be positive, got {tol}")));
    }
    Ok(())
}

fn fold_max<T: Scalar>(it: impl Iterator<Item = T>) -> T {
    it.fold(T::neg_infinity(), T::max)
}

fn fold_min<T: Scalar>(it: impl Iterator<Item = T>) -> T {
    it.fold(T::infinity(), T::min)
}

fn zero_positions<T: Scalar>(v: &[T]) -> Vec<usize> {
    v.iter()
        .enumerate()
        .filter(|(_, &x)| x == T::zero())
        .map(|(b, _)| b)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{energy, mse, PulseAllocation};
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use std::f64::consts::LN_2;

    fn p60() -> DeviceParams<f64> {
        DeviceParams::default()
    }

    fn budget(e: f64) -> Budget<f64> {
        Budget::new(e).unwrap()
    }

    fn energy_of(i: &[f64], t: &[f64]) -> f64 {
        i.iter().zip(t).map(|(i, t)| i * i * t).sum()
    }

    #[test]
    fn all_twos_durations_follow_log2_ladder() {
        let (bits, e) = (8usize, 300.0);
        let (t, dual) = solve_durations(&p60(), &vec![2.0; bits], budget(e), 1e-9 * e).unwrap();
        for (b, &tb) in t.iter().enumerate() {
            let expected = e / (4.0 * bits as f64) + (b as f64 - (bits as f64 - 1.0) / 2.0) * LN_2;
            assert_relative_eq!(tb, expected, max_relative = 1e-12);
            assert!(tb > 0.0);
        }
        assert!(dual.residual <= 1e-9 * e);
        assert!(dual.inactive.is_empty());
    }

    #[test]
    fn single_bit_duration_takes_whole_budget() {
        for &e in &[0.5, 4.0, 40.0, 1e4] {
            let (t, _) = solve_durations(&p60(), &[2.0], budget(e), 1e-9 * e).unwrap();
            assert_relative_eq!(t[0], e / 4.0, max_relative = 1e-12);
        }
    }

    #[test]
    fn durations_reject_bad_currents() {
        assert!(solve_durations(&p60(), &[1.0, 2.0], budget(10.0), 1e-6).is_err());
        assert!(solve_durations(&p60(), &[], budget(10.0), 1e-6).is_err());
        assert!(solve_durations(&p60(), &[2.0], budget(10.0), 0.0).is_err());
    }

    #[test]
    fn small_budget_leaves_low_bits_dark() {
        let (t, dual) = solve_durations(&p60(), &[2.0; 8], budget(10.0), 1e-8).unwrap();
        assert!(t[0] == 0.0 && t[7] > 0.0);
        assert!(!dual.inactive.is_empty());
        assert!((energy_of(&[2.0; 8], &t) - 10.0).abs() <= 1e-8);
    }

    #[test]
    fn currents_from_ladder_durations_are_twos() {
        let (bits, e) = (8usize, 300.0);
        let (t, _) = solve_durations(&p60(), &vec![2.0; bits], budget(e), 1e-9 * e).unwrap();
        let (i, dual) = solve_currents(&p60(), &t, budget(e), 1e-9 * e).unwrap();
        for &ib in &i {
            assert_relative_eq!(ib, 2.0, max_relative = 1e-10);
        }
        // nu' = 4^b e^{-2 t_b} / 2 is the same for every bit.
        for (b, &tb) in t.iter().enumerate() {
            assert_relative_eq!(
                dual.value,
                4f64.powi(b as i32) * (-2.0 * tb).exp() / 2.0,
                max_relative = 1e-9
            );
        }
    }

    #[test]
    fn single_bit_current_is_two() {
        for &big_t in &[0.5, 3.0, 25.0, 400.0] {
            let (i, _) = solve_currents(&p60(), &[big_t], budget(4.0 * big_t), 1e-10 * big_t).unwrap();
            assert_relative_eq!(i[0], 2.0, max_relative = 1e-9);
        }
    }

    #[test]
    fn zero_duration_bits_are_pinned() {
        let p = p60();
        let (i, dual) = solve_currents(&p, &[0.0, 5.0, 0.0, 9.0], budget(80.0), 1e-9).unwrap();
        assert_eq!(i[0], p.min_current());
        assert_eq!(i[2], p.min_current());
        assert!(dual.inactive.contains(&0) && dual.inactive.contains(&2));
        assert!((energy_of(&i, &[0.0, 5.0, 0.0, 9.0]) - 80.0).abs() <= 1e-9);

        let (i, dual) = solve_currents(&p, &[0.0; 3], budget(10.0), 1e-9).unwrap();
        assert!(i.iter().all(|&x| x == p.min_current()));
        assert_eq!(dual.value, 0.0);
    }

    #[test]
    fn currents_infeasible_when_floor_exceeds_budget() {
        let err = solve_currents(&p60(), &[10.0, 10.0], budget(5.0), 1e-9).unwrap_err();
        assert!(matches!(err, Error::Infeasible { .. }));
    }

    #[test]
    fn long_durations_do_not_overflow() {
        let t = [300.0, 350.0, 400.0];
        let e = 1.2 * energy_of(&[1.001; 3], &t);
        let (i, dual) = solve_currents(&p60(), &t, budget(e), 1e-9 * e).unwrap();
        assert!(i.iter().all(|x| x.is_finite()));
        assert!(dual.residual <= 1e-9 * e);
    }

    #[test]
    fn branch_continuity_at_thresholds() {
        let p = p60();
        let currents = [1.3, 1.7, 2.2, 3.0];
        for (b, &ln_thr) in duration_thresholds_ln(&currents).iter().enumerate() {
            let below = durations_at_dual(&currents, ln_thr - 1e-9)[b];
            let at = durations_at_dual(&currents, ln_thr)[b];
            assert_eq!(at, 0.0);
            assert!(below > 0.0 && below < 1e-8);
        }
        let durations = [0.7, 1.5, 4.0, 9.0];
        for (b, thr) in current_thresholds_ln(&p, &durations).iter().enumerate() {
            let ln_thr = thr.unwrap();
            let below = currents_at_dual(&p, &durations, ln_thr - 1e-9)[b];
            assert!((below - p.min_current()).abs() < 1e-8);
        }
    }

    #[test]
    fn f32_steps() {
        let p = DeviceParams::<f32>::default();
        let b = Budget::new(300.0f32).unwrap();
        let (t, _) = solve_durations(&p, &[2.0f32; 8], b, 1e-3).unwrap();
        assert!((t[7] - (300.0 / 32.0 + 3.5 * std::f32::consts::LN_2)).abs() < 1e-3);
        let (i, _) = solve_currents(&p, &t, b, 1e-3).unwrap();
        assert!(i.iter().all(|x| (x - 2.0).abs() < 1e-3));
    }

    fn instance() -> impl Strategy<Value = (Vec<f64>, f64)> {
        (1usize..=8).prop_flat_map(|bits| (proptest::collection::vec(1.001f64..4.0, bits), 1.0f64..400.0))
    }

    proptest! {
        #[test]
        fn durations_are_tight_and_optimal((currents, e) in instance()) {
            let p = p60();
            let (t, dual) = solve_durations(&p, &currents, budget(e), 1e-9 * e).unwrap();
            prop_assert!(dual.residual <= 1e-9 * e);
            prop_assert!((energy_of(&currents, &t) - e).abs() <= 1e-9 * e);
            // no worse than the uniform-duration allocation of equal energy
            let uniform = e / currents.iter().map(|i| i * i).sum::<f64>();
            let opt = PulseAllocation::new(currents.clone(), t).unwrap();
            let base = PulseAllocation::new(currents.clone(), vec![uniform; currents.len()]).unwrap();
            prop_assert!(mse(&p, &opt) <= mse(&p, &base) * (1.0 + 1e-12));
        }

        #[test]
        fn currents_are_tight_and_improve((durations, e) in (1usize..=8).prop_flat_map(|bits| (proptest::collection::vec(0.0f64..40.0, bits), 1.05f64..3.0))) {
            let p = p60();
            prop_assume!(durations.iter().any(|&t| t > 0.0));
            // budget = energy of a feasible reference allocation
            let reference: Vec<f64> = vec![e; durations.len()];
            let energy_ref = energy_of(&reference, &durations);
            let (i, dual) = solve_currents(&p, &durations, budget(energy_ref), 1e-9 * energy_ref).unwrap();
            prop_assert!(dual.residual <= 1e-9 * energy_ref);
            prop_assert!(i.iter().all(|&x| x >= p.min_current()));
            let opt = PulseAllocation::new(i, durations.clone()).unwrap();
            let base = PulseAllocation::new(reference, durations).unwrap();
            prop_assert!(mse(&p, &opt) <= mse(&p, &base) * (1.0 + 1e-12));
            prop_assert!((energy(&opt) - energy_ref).abs() <= 1e-9 * energy_ref);
        }

        #[test]
        fn uniform_currents_give_nondecreasing_durations(i in 1.001f64..4.0, bits in 1usize..=8, e in 1.0f64..400.0) {
            let (t, _) = solve_durations(&p60(), &vec![i; bits], budget(e), 1e-9 * e).unwrap();
            prop_assert!(t.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn uniform_durations_give_nondecreasing_currents(t in 0.1f64..40.0, bits in 1usize..=8, scale in 1.05f64..3.0) {
            let e = scale * scale * t * bits as f64;
            let (i, _) = solve_currents(&p60(), &vec![t; bits], budget(e), 1e-9 * e).unwrap();
            prop_assert!(i.windows(2).all(|w| w[1] >= w[0] - 1e-12));
        }

        #[test]
        fn energy_strictly_decreasing_in_dual((currents, _e) in instance(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let thr = duration_thresholds_ln(&currents);
            let hi = thr.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let (x, y) = (hi - 30.0 * a.max(b) - 1e-3, hi - 30.0 * a.min(b));
            prop_assume!(x < y - 1e-9);
            let ex = energy_of(&currents, &durations_at_dual(&currents, x));
            let ey = energy_of(&currents, &durations_at_dual(&currents, y));
            prop_assert!(ex > ey);
        }
    }
}
