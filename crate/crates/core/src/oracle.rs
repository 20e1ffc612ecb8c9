//! Independent verification engines.
//!
//! Nothing here uses the closed forms: the single-bit optimum is located by
//! brute force along the budget curve, the inner problems are solved by a
//! generic spectral projected-gradient method, and the MSE is estimated by
//! simulating word writes.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Geometric};
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{failure_prob_approx, Budget, DeviceParams, PulseAllocation};

/// Upper end of the current grid searched along `i^2 t = E`.
pub const GRID_MAX_CURRENT: f64 = 6.0;

/// Trials per Monte Carlo chunk. Each chunk has its own RNG stream, so the
/// estimate does not depend on how chunks are spread over threads.
pub const MC_CHUNK: u64 = 1 << 16;

const Z_95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    pub current: f64,
    pub duration: f64,
    pub failure_prob: f64,
}

/// Approximate failure probability along `i^2 t = E` for `density` currents
/// evenly spaced over `[1 + epsilon, GRID_MAX_CURRENT]`.
pub fn single_bit_curve(params: &DeviceParams<f64>, budget: Budget<f64>, density: usize) -> Result<Vec<CurvePoint>> {
    if density < 10 {
        return Err(Error::InvalidInput(format!(
            "grid density must be at least 10, got {density}"
        )));
    }
    let lo = params.min_current();
    let step = (GRID_MAX_CURRENT - lo) / (density - 1) as f64;
    Ok((0..density)
        .map(|k| {
            let current = lo + step * k as f64;
            let duration = budget.energy() / (current * current);
            CurvePoint {
                current,
                duration,
                failure_prob: failure_prob_approx(params, current, duration),
            }
        })
        .collect())
}

/// Grid minimizer of the failure probability along the budget curve.
pub fn grid_search_single_bit(params: &DeviceParams<f64>, budget: Budget<f64>, density: usize) -> Result<CurvePoint> {
    let curve = single_bit_curve(params, budget, density)?;
    Ok(curve
        .into_iter()
        .min_by(|a, b| a.failure_prob.total_cmp(&b.failure_prob))
        .expect("density >= 10"))
}

/// Duration subproblem solved by projected descent.
pub fn convex_solve_durations(
    _params: &DeviceParams<f64>,
    currents: &[f64],
    budget: Budget<f64>,
    tol: f64,
) -> Result<Vec<f64>> {
    if currents.iter().any(|&i| !(i > 1.0)) {
        return Err(Error::InvalidInput("currents must exceed 1".into()));
    }
    let bits = currents.len();
    let e = budget.energy();
    let q: Vec<f64> = currents.iter().map(|i| i * i).collect();
    let slope: Vec<f64> = currents.iter().map(|i| 2.0 * (i - 1.0)).collect();
    let w: Vec<f64> = (0..bits).map(|b| 4f64.powi(b as i32)).collect();
    let start = project_weighted_simplex(&vec![e / q.iter().sum::<f64>(); bits], &q, e);
    let scale = 1.0 / objective_t(&start, &w, &slope);
    let f = |t: &[f64]| {
        let mut val = 0.0;
        let grad = t
            .iter()
            .enumerate()
            .map(|(b, &tb)| {
                let term = scale * w[b] * (-slope[b] * tb).exp();
                val += term;
                -slope[b] * term
            })
            .collect();
        (val, grad)
    };
    let project = |y: &[f64]| project_weighted_simplex(y, &q, e);
    spg("convex_solve_durations", start, f, project, tol)
}

fn objective_t(t: &[f64], w: &[f64], slope: &[f64]) -> f64 {
    t.iter().enumerate().map(|(b, &tb)| w[b] * (-slope[b] * tb).exp()).sum()
}

/// Euclidean projection onto `{t >= 0, sum q_b t_b <= e}`.
fn project_weighted_simplex(y: &[f64], q: &[f64], e: f64) -> Vec<f64> {
    let clipped: Vec<f64> = y.iter().map(|v| v.max(0.0)).collect();
    if clipped.iter().zip(q).map(|(t, q)| t * q).sum::<f64>() <= e {
        return clipped;
    }
    // t_b = max(0, y_b - tau q_b); breakpoints at y_b / q_b
    let mut order: Vec<usize> = (0..y.len()).filter(|&b| y[b] > 0.0).collect();
    order.sort_by(|&a, &b| (y[b] / q[b]).total_cmp(&(y[a] / q[a])));
    let (mut qy, mut qq) = (0.0, 0.0);
    let mut tau = 0.0;
    for (k, &b) in order.iter().enumerate() {
        qy += q[b] * y[b];
        qq += q[b] * q[b];
        tau = (qy - e) / qq;
        let next = order.get(k + 1).map_or(f64::NEG_INFINITY, |&n| y[n] / q[n]);
        if tau >= next {
            break;
        }
    }
    y.iter().zip(q).map(|(&yb, &qb)| (yb - tau * qb).max(0.0)).collect()
}

/// Current subproblem solved by projected descent. Bits with zero duration
/// are returned at `1 + epsilon`.
pub fn convex_solve_currents(
    params: &DeviceParams<f64>,
    durations: &[f64],
    budget: Budget<f64>,
    tol: f64,
) -> Result<Vec<f64>> {
    let lo = params.min_current();
    let e = budget.energy();
    let active: Vec<usize> = (0..durations.len()).filter(|&b| durations[b] > 0.0).collect();
    let mut out = vec![lo; durations.len()];
    if active.is_empty() {
        return Ok(out);
    }
    let t: Vec<f64> = active.iter().map(|&b| durations[b]).collect();
    let w: Vec<f64> = active.iter().map(|&b| 4f64.powi(b as i32)).collect();
    if t.iter().map(|t| lo * lo * t).sum::<f64>() > e {
        return Err(Error::Infeasible {
            stage: "convex_solve_currents",
            min_energy: t.iter().map(|t| lo * lo * t).sum(),
            budget: e,
        });
    }
    let start = vec![(e / t.iter().sum::<f64>()).sqrt().max(lo); t.len()];
    let start = project_ellipsoid_box(&start, &t, lo, e);
    let scale = 1.0
        / t.iter()
            .zip(&w)
            .zip(&start)
            .map(|((t, w), i)| w * (-2.0 * (i - 1.0) * t).exp())
            .sum::<f64>();
    let f = |i: &[f64]| {
        let mut val = 0.0;
        let grad = i
            .iter()
            .enumerate()
            .map(|(k, &ik)| {
                let term = scale * w[k] * (-2.0 * (ik - 1.0) * t[k]).exp();
                val += term;
                -2.0 * t[k] * term
            })
            .collect();
        (val, grad)
    };
    let project = |y: &[f64]| project_ellipsoid_box(y, &t, lo, e);
    let solved = spg("convex_solve_currents", start, f, project, tol)?;
    for (k, &b) in active.iter().enumerate() {
        out[b] = solved[k];
    }
    Ok(out)
}

/// Euclidean projection onto `{i >= lo, sum t_b i_b^2 <= e}`:
/// `i_b = max(lo, y_b / (1 + 2 mu t_b))` with `mu >= 0` found by bisection.
fn project_ellipsoid_box(y: &[f64], t: &[f64], lo: f64, e: f64) -> Vec<f64> {
    let at = |mu: f64| -> Vec<f64> {
        y.iter()
            .zip(t)
            .map(|(&yb, &tb)| (yb / (1.0 + 2.0 * mu * tb)).max(lo))
            .collect()
    };
    let energy = |v: &[f64]| v.iter().zip(t).map(|(i, t)| i * i * t).sum::<f64>();
    let base = at(0.0);
    if energy(&base) <= e {
        return base;
    }
    let mut hi = 1.0;
    while energy(&at(hi)) > e {
        hi *= 2.0;
    }
    let mut lo_mu = 0.0;
    for _ in 0..200 {
        let mid = 0.5 * (lo_mu + hi);
        if mid <= lo_mu || mid >= hi {
            break;
        }
        if energy(&at(mid)) > e {
            lo_mu = mid;
        } else {
            hi = mid;
        }
    }
    at(hi)
}

const SPG_MAX_ITERS: usize = 200_000;
const SPG_MEMORY: usize = 10;
const SPG_STALL: usize = 25;
const SPG_MAX_STEP: f64 = 1e4;

/// Nonmonotone spectral projected gradient with Barzilai-Borwein steps.
/// Stops once the relative objective change stays below `tol` for several
/// consecutive iterations, or the projected step vanishes.
fn spg(
    stage: &'static str,
    x0: Vec<f64>,
    f: impl Fn(&[f64]) -> (f64, Vec<f64>),
    project: impl Fn(&[f64]) -> Vec<f64>,
    tol: f64,
) -> Result<Vec<f64>> {
    let (lambda_min, lambda_max) = (1e-30, 1e30);
    let mut x = project(&x0);
    let (mut fx, mut g) = f(&x);
    let mut history = vec![fx];
    let mut lambda = {
        let trial: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - g).collect();
        let d = inf_norm_diff(&project(&trial), &x);
        if d > 0.0 {
            (1.0 / d).clamp(lambda_min, lambda_max)
        } else {
            1.0
        }
    };
    let mut quiet = 0;
    for _ in 0..SPG_MAX_ITERS {
        // huge trial points lose the budget to cancellation inside the projection
        let g_max = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let x_max = x.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        let step = if g_max > 0.0 {
            lambda.min(SPG_MAX_STEP * x_max / g_max)
        } else {
            lambda
        };
        let trial: Vec<f64> = x.iter().zip(&g).map(|(x, g)| x - step * g).collect();
        let d: Vec<f64> = project(&trial).iter().zip(&x).map(|(p, x)| p - x).collect();
        let gd: f64 = g.iter().zip(&d).map(|(g, d)| g * d).sum();
        if d.iter().all(|v| *v == 0.0) || gd >= 0.0 {
            return Ok(x);
        }
        let reference = history.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut alpha = 1.0;
        let (x_new, f_new, g_new) = loop {
            let cand: Vec<f64> = x.iter().zip(&d).map(|(x, d)| x + alpha * d).collect();
            let (fc, gc) = f(&cand);
            if fc <= reference + 1e-4 * alpha * gd || alpha < 1e-20 {
                break (cand, fc, gc);
            }
            alpha *= 0.5;
        };
        let s: Vec<f64> = x_new.iter().zip(&x).map(|(a, b)| a - b).collect();
        let yv: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sty: f64 = s.iter().zip(&yv).map(|(a, b)| a * b).sum();
        let sts: f64 = s.iter().map(|a| a * a).sum();
        lambda = if sty > 0.0 {
            (sts / sty).clamp(lambda_min, lambda_max)
        } else {
            lambda_max.min(lambda * 10.0)
        };

        let change = (fx - f_new).abs() / f_new.abs().max(f64::MIN_POSITIVE);
        quiet = if change < tol { quiet + 1 } else { 0 };
        x = x_new;
        fx = f_new;
        g = g_new;
        history.push(fx);
        if history.len() > SPG_MEMORY {
            history.remove(0);
        }
        if quiet >= SPG_STALL {
            return Ok(x);
        }
    }
    Err(Error::Stalled {
        stage,
        iterations: SPG_MAX_ITERS,
    })
}

fn inf_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Monte Carlo estimate of the MSE.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub mean: f64,
    /// Normal-approximation 95% half-width; infinite for a single trial.
    pub half_width: f64,
    pub trials: u64,
    pub seed: u64,
}

impl McEstimate {
    pub fn contains(&self, value: f64) -> bool {
        (value - self.mean).abs() <= self.half_width
    }
}

/// Simulates `trials` word writes. Bit `b` fails independently with
/// probability `min(1, c exp(-2(i_b-1)t_b))` and a failure adds `4^b` to the
/// squared error of that word.
///
/// Failures are drawn by geometric skipping, so the cost scales with the
/// number of failures rather than `trials * B`. Deterministic given `seed`.
pub fn monte_carlo_mse(
    params: &DeviceParams<f64>,
    alloc: &PulseAllocation<f64>,
    trials: u64,
    seed: u64,
) -> Result<McEstimate> {
    if trials == 0 {
        return Err(Error::InvalidInput("at least one trial is required".into()));
    }
    let probs: Vec<f64> = alloc
        .currents
        .iter()
        .zip(&alloc.durations)
        .map(|(&i, &t)| failure_prob_approx(params, i, t).clamp(0.0, 1.0))
        .collect();
    let chunks = trials.div_ceil(MC_CHUNK);
    let partials: Vec<(f64, f64)> = (0..chunks)
        .into_par_iter()
        .map(|k| {
            let len = MC_CHUNK.min(trials - k * MC_CHUNK);
            simulate_chunk(&probs, len, seed, k)
        })
        .collect();
    let (sum, sum_sq) = partials.iter().fold((0.0, 0.0), |(a, b), (x, y)| (a + x, b + y));
    let n = trials as f64;
    let mean = sum / n;
    let half_width = if trials > 1 {
        let var = ((sum_sq - n * mean * mean) / (n - 1.0)).max(0.0);
        Z_95 * (var / n).sqrt()
    } else {
        f64::INFINITY
    };
    Ok(McEstimate {
        mean,
        half_width,
        trials,
        seed,
    })
}

/// Returns `(sum of errors, sum of squared errors)` over one chunk.
fn simulate_chunk(probs: &[f64], len: u64, seed: u64, chunk: u64) -> (f64, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(chunk);
    let mut hits: Vec<(u64, f64)> = Vec::new();
    for (b, &p) in probs.iter().enumerate() {
        let w = 4f64.powi(b as i32);
        if p <= 0.0 {
            continue;
        }
        if p >= 1.0 {
            hits.extend((0..len).map(|j| (j, w)));
            continue;
        }
        let gap = Geometric::new(p).expect("0 < p < 1");
        let mut j = gap.sample(&mut rng);
        while j < len {
            hits.push((j, w));
            j = j.saturating_add(1).saturating_add(gap.sample(&mut rng));
        }
    }
    hits.sort_unstable_by_key(|h| h.0);
    let (mut sum, mut sum_sq) = (0.0, 0.0);
    let mut k = 0;
    while k < hits.len() {
        let trial = hits[k].0;
        let mut err = 0.0;
        while k < hits.len() && hits[k].0 == trial {
            err += hits[k].1;
            k += 1;
        }
        sum += err;
        sum_sq += err * err;
    }
    (sum, sum_sq)
}
