//! Acceptance suite. Runs every criterion, prints one line per criterion and
//! exits nonzero if any fails.

use std::process::ExitCode;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use pulseopt::acs::{one_step_fast_path, solve};
use pulseopt::analytic::{alltwos_durations, dual_closed_form, energy_threshold, gamma, mse_closed_forms};
use pulseopt::model::{failure_prob_approx, failure_prob_exact, mse, psnr};
use pulseopt::oracle::{convex_solve_currents, convex_solve_durations, grid_search_single_bit, monte_carlo_mse};
use pulseopt::steps::{solve_currents, solve_durations};
use pulseopt::{Budget, DeviceParams, PulseAllocation, SolverConfig, Start};

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn budget(e: f64) -> Budget {
    Budget::new(e).unwrap()
}

fn round_sig(x: f64, digits: i32) -> f64 {
    let scale = 10f64.powi(digits - 1 - x.abs().log10().floor() as i32);
    (x * scale).round() / scale
}

fn gamma_reproduction() -> Outcome {
    let cases = [(8usize, 0.0469), (16, 3.66e-4), (32, 1.12e-8)];
    let mut ok = true;
    let mut parts = Vec::new();
    for (bits, reported) in cases {
        let g: f64 = gamma(bits);
        let matches = (round_sig(g, 3) - reported).abs() <= 1e-12 * reported;
        ok &= matches;
        parts.push(format!("B={bits}: {g:.4e} vs {reported:e}"));
    }
    outcome(ok, parts.join(", "))
}

fn one_step_convergence() -> Outcome {
    let p = DeviceParams::default();
    let b = budget(300.0);
    let general = SolverConfig {
        fast_path: false,
        ..Default::default()
    };
    let loop_report = solve(&p, 8, b, &general).unwrap();
    if loop_report.iterates.len() < 3 {
        return outcome(
            false,
            format!("loop stopped after {} iterations", loop_report.outer_iterations()),
        );
    }
    let (k1, k2) = (&loop_report.iterates[1], &loop_report.iterates[2]);
    let delta = k1
        .currents
        .iter()
        .zip(&k2.currents)
        .chain(k1.durations.iter().zip(&k2.durations))
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let fast = one_step_fast_path(&p, 8, b, &SolverConfig::default()).unwrap();
    let default = solve(&p, 8, b, &SolverConfig::default()).unwrap();
    let identical = fast.final_allocation() == default.final_allocation();
    let fast_vs_loop = fast
        .final_allocation()
        .currents
        .iter()
        .zip(&k1.currents)
        .chain(fast.final_allocation().durations.iter().zip(&k1.durations))
        .fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    outcome(
        delta <= 1e-9 && identical && fast.fast_path && fast_vs_loop <= 1e-9,
        format!("max |k2-k1| = {delta:.2e} (<= 1e-9), fast path identical to solve: {identical}, |fast-k1| = {fast_vs_loop:.2e}"),
    )
}

fn dual_agreement() -> Outcome {
    let p = DeviceParams::default();
    let mut worst = 0.0f64;
    let mut count = 0;
    for bits in 1..=10usize {
        let thr: f64 = energy_threshold(bits);
        for factor in [1.05, 3.0] {
            let e = if thr > 0.0 { thr * factor } else { 5.0 * factor };
            let (_, dual) = solve_durations(&p, &vec![2.0; bits], budget(e), 1e-9 * e).unwrap();
            let closed = dual_closed_form(bits, budget(e)).unwrap();
            worst = worst.max((dual.value - closed).abs() / closed);
            count += 1;
        }
    }
    outcome(
        count >= 20 && worst <= 1e-8,
        format!("{count} pairs, worst relative error {worst:.2e} (<= 1e-8)"),
    )
}

fn oracle_equivalence() -> Outcome {
    let p = DeviceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    let instances = 50;
    for _ in 0..instances {
        let bits = rng.random_range(1..=8usize);
        let currents: Vec<f64> = (0..bits).map(|_| rng.random_range(1.1..4.0)).collect();
        let e = rng.random_range(10.0..400.0);
        let (closed, _) = solve_durations(&p, &currents, budget(e), 1e-9 * e).unwrap();
        let oracle = convex_solve_durations(&p, &currents, budget(e), 1e-14).unwrap();
        let a = mse(&p, &PulseAllocation::new(currents.clone(), closed).unwrap());
        let o = mse(&p, &PulseAllocation::new(currents, oracle).unwrap());
        worst = worst.max((a - o).abs() / a);

        let durations: Vec<f64> = (0..bits).map(|_| rng.random_range(0.5..40.0)).collect();
        let scale: f64 = rng.random_range(1.1..3.0);
        let e = scale * scale * durations.iter().sum::<f64>();
        let (closed, _) = solve_currents(&p, &durations, budget(e), 1e-9 * e).unwrap();
        let oracle = convex_solve_currents(&p, &durations, budget(e), 1e-14).unwrap();
        let a = mse(&p, &PulseAllocation::new(closed, durations.clone()).unwrap());
        let o = mse(&p, &PulseAllocation::new(oracle, durations).unwrap());
        worst = worst.max((a - o).abs() / a);
    }
    outcome(
        worst <= 1e-6,
        format!(
            "{instances} duration + {instances} current instances, worst relative objective gap {worst:.2e} (<= 1e-6)"
        ),
    )
}

fn single_bit_optimum() -> Outcome {
    let p = DeviceParams::default();
    let mut ok = true;
    let mut parts = Vec::new();
    for e in [20.0, 40.0, 60.0] {
        let best = grid_search_single_bit(&p, budget(e), 10_000).unwrap();
        ok &= (best.current - 2.0).abs() <= 1e-3;
        parts.push(format!("E={e}: i={:.5}", best.current));
    }
    outcome(ok, format!("{} (within 1e-3 of 2)", parts.join(", ")))
}

fn monotone_mse() -> Outcome {
    let p = DeviceParams::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut worst = 0.0f64;
    let mut violations = 0;
    for _ in 0..100 {
        let bits = rng.random_range(1..=8usize);
        let start: Vec<f64> = (0..bits).map(|_| rng.random_range(p.min_current()..4.0)).collect();
        let e = rng.random_range(5.0..500.0);
        let config = SolverConfig::default().with_start(Start::Custom(start));
        let report = solve(&p, bits, budget(e), &config).unwrap();
        for w in report.mse_trace.windows(2) {
            let rise = w[1] - w[0];
            worst = worst.max(rise / w[0]);
            if rise > 1e-12 * w[0] {
                violations += 1;
            }
        }
    }
    outcome(
        violations == 0,
        format!("100 traces, {violations} rises beyond 1e-12 relative slack, largest relative rise {worst:.2e}"),
    )
}

/// Budget at which the PSNR curve crosses `target`, by linear interpolation
/// over an increasing sweep.
fn crossing(energies: &[f64], psnr: &[f64], target: f64) -> Option<f64> {
    energies.windows(2).zip(psnr.windows(2)).find_map(|(e, q)| {
        (q[0] <= target && q[1] >= target).then(|| e[0] + (target - q[0]) * (e[1] - e[0]) / (q[1] - q[0]))
    })
}

fn energy_saving() -> Outcome {
    let p = DeviceParams::default();
    let bits = 8;
    let energies: Vec<f64> = (0..=800).map(|k| 100.0 + 0.5 * k as f64).collect();
    let mut uniform = Vec::new();
    let mut optimized = Vec::new();
    for &e in &energies {
        let u = PulseAllocation::uniform(bits, 2.0, e / (4.0 * bits as f64)).unwrap();
        uniform.push(psnr(&p, &u).unwrap());
        let r = solve(&p, bits, budget(e), &SolverConfig::default()).unwrap();
        optimized.push(psnr(&p, r.final_allocation()).unwrap());
    }
    match (
        crossing(&energies, &uniform, 40.0),
        crossing(&energies, &optimized, 40.0),
    ) {
        (Some(eu), Some(eo)) => {
            let saving = (eu - eo) / eu;
            outcome(
                (saving - 0.24).abs() <= 0.02,
                format!(
                    "E_uniform={eu:.2}, E_optimized={eo:.2}, saving {:.2}% (24 +/- 2)",
                    100.0 * saving
                ),
            )
        }
        _ => outcome(false, "40 dB not reached inside the sweep"),
    }
}

fn approximation_band() -> Outcome {
    let p = DeviceParams::default();
    let mut worst = 0.0f64;
    let mut worst_at = (0.0, 0.0);
    let mut samples = 0;
    for a in 0..=56 {
        let i = 1.2 + 0.05 * a as f64;
        for k in 0..100 {
            let t = 10f64.powf(2.0 * k as f64 / 99.0);
            let exact = failure_prob_exact(&p, i, t).unwrap();
            if exact > 1e-2 || exact == 0.0 {
                continue;
            }
            samples += 1;
            let rel = (failure_prob_approx(&p, i, t) - exact).abs() / exact;
            if rel > worst {
                worst = rel;
                worst_at = (i, t);
            }
        }
    }
    outcome(
        samples > 0 && worst <= 0.1,
        format!(
            "{samples} low-p samples, max relative error {worst:.3} at i={:.2}, t={:.2} (<= 0.1)",
            worst_at.0, worst_at.1
        ),
    )
}

fn monte_carlo_consistency() -> Outcome {
    let p = DeviceParams::default();
    let t = alltwos_durations(8, budget(300.0)).unwrap();
    let alloc = PulseAllocation::new(vec![2.0; 8], t).unwrap();
    let analytic = mse(&p, &alloc);
    let closed = mse_closed_forms(&p, 8, budget(300.0)).unwrap().optimized;
    let successes = (0..20u64)
        .filter(|&seed| {
            monte_carlo_mse(&p, &alloc, 10_000_000, seed)
                .unwrap()
                .contains(analytic)
        })
        .count();
    outcome(
        successes >= 17 && (analytic - closed).abs() <= 1e-10 * closed,
        format!("analytic MSE {analytic:.4e} inside the 95% interval for {successes}/20 seeds (>= 17)"),
    )
}

fn starting_point_comparison() -> Outcome {
    let p = DeviceParams::default();
    let b = budget(300.0);
    let twos = solve(&p, 8, b, &SolverConfig::default()).unwrap();
    let ones = solve(&p, 8, b, &SolverConfig::default().with_start(Start::AllOnesPlusEps)).unwrap();
    let rel = (ones.final_mse() - twos.final_mse()).abs() / twos.final_mse();
    let monotone = ones.mse_trace.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let more = ones.outer_iterations() > twos.outer_iterations();
    outcome(
        rel <= 1e-3 && monotone && more && ones.outer_iterations() <= 100,
        format!(
            "all-ones final MSE {:.4e} vs all-twos {:.4e} (relative gap {rel:.3e}, <= 1e-3); iterations {} vs {}; nonincreasing: {monotone}",
            ones.final_mse(),
            twos.final_mse(),
            ones.outer_iterations(),
            twos.outer_iterations()
        ),
    )
}

type Criterion = (&'static str, Duration, fn() -> Outcome);

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("gamma reproduction", Duration::from_secs(1), gamma_reproduction),
        ("one-step convergence", Duration::from_secs(1), one_step_convergence),
        ("closed-form vs bisection dual", Duration::from_secs(1), dual_agreement),
        ("oracle equivalence", Duration::from_secs(30), oracle_equivalence),
        ("single-bit optimum", Duration::from_secs(1), single_bit_optimum),
        ("monotone MSE", Duration::from_secs(10), monotone_mse),
        ("energy saving at 40 dB", Duration::from_secs(5), energy_saving),
        ("approximation band", Duration::from_secs(1), approximation_band),
        (
            "Monte Carlo consistency",
            Duration::from_secs(60),
            monte_carlo_consistency,
        ),
        (
            "starting-point comparison",
            Duration::from_secs(5),
            starting_point_comparison,
        ),
    ];
    let mut failures = 0;
    for (k, (name, limit, run)) in criteria.iter().enumerate() {
        let started = Instant::now();
        let result = run();
        let elapsed = started.elapsed();
        let in_time = elapsed <= *limit;
        let passed = result.passed && in_time;
        if !passed {
            failures += 1;
        }
        println!(
            "[{}] {:>2}. {name}: {} [{:.3}s, limit {}s]",
            if passed { "PASS" } else { "FAIL" },
            k + 1,
            result.detail,
            elapsed.as_secs_f64(),
            limit.as_secs()
        );
    }
    println!("acceptance: {} passed, {failures} failed", criteria.len() - failures);
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
