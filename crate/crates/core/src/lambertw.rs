//! Principal branch of the Lambert W function on the nonnegative reals.

use crate::error::{domain, Result};
use crate::scalar::Scalar;

const MAX_ITERATIONS: usize = 100;

/// Above this log-argument `lambert_w0_ln` uses the asymptotic start and the
/// `w + ln w = L` form instead of exponentiating.
const LN_SWITCH: f64 = 20.0;

/// `W0(x)` for `x >= 0`: the `w >= 0` with `w e^w = x`.
///
/// Halley iteration from `ln(1 + x)`.
pub fn lambert_w0<T: Scalar>(x: T) -> Result<T> {
    if x.is_nan() || x < T::zero() {
        return Err(domain("lambert_w0", format!("argument must be nonnegative, got {x}")));
    }
    if x == T::zero() {
        return Ok(T::zero());
    }
    if x.is_infinite() {
        return Ok(x);
    }
    let one = T::one();
    let two = T::lit(2.0);
    let tol = T::epsilon() * T::lit(4.0);
    let mut w = x.ln_1p();
    for _ in 0..MAX_ITERATIONS {
        // Halley on w e^w - x, divided through by e^w to avoid overflow
        let r = w - x * (-w).exp();
        let wp1 = w + one;
        let step = r / (wp1 - (w + two) * r / (two * wp1));
        w = w - step;
        if step.abs() <= tol * (one + w.abs()) {
            break;
        }
    }
    Ok(w)
}

/// `W0(e^ln_x)`, usable when `e^ln_x` overflows.
///
/// Large arguments start from `L - ln L + ln L / L` and are refined by Newton
/// on `w + ln w = L`.
pub fn lambert_w0_ln<T: Scalar>(ln_x: T) -> T {
    if ln_x.is_nan() {
        return ln_x;
    }
    if ln_x <= T::lit(LN_SWITCH) {
        // e^ln_x is finite and nonnegative here
        return lambert_w0(ln_x.exp()).unwrap_or_else(|_| T::zero());
    }
    if ln_x.is_infinite() {
        return ln_x;
    }
    let one = T::one();
    let ll = ln_x.ln();
    let mut w = ln_x - ll + ll / ln_x;
    let tol = T::epsilon() * T::lit(4.0);
    for _ in 0..MAX_ITERATIONS {
        let g = w + w.ln() - ln_x;
        let step = g / (one + one / w);
        w = w - step;
        if step.abs() <= tol * w {
            break;
        }
    }
    w
}
