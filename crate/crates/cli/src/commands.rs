//! One function per subcommand.

use num_traits::ToPrimitive;
use rayon::prelude::*;
use serde::Serialize;

use pulseopt::acs::solve;
use pulseopt::analytic::{
    dual_closed_form, energy_threshold, gamma_approx, gamma_rational, mse_closed_forms, mse_uniform,
};
use pulseopt::model::{energy, failure_prob_approx, failure_prob_exact, latency, mse, psnr_from_mse};
use pulseopt::oracle::{convex_solve_currents, convex_solve_durations, grid_search_single_bit, monte_carlo_mse};
use pulseopt::steps::{solve_currents, solve_durations};
use pulseopt::{Budget, DeviceParams, PulseAllocation, SolveReport, Start};

use crate::report::{Cell, Report, Table};
use crate::spec::{Command, RunSpec};
use crate::CliError;

const GRID_DENSITY: usize = 10_000;
const ENERGY_TIGHTNESS: f64 = 1e-9;
const CLOSED_FORM_MSE_TOL: f64 = 1e-10;
const DUAL_TOL: f64 = 1e-8;
const SINGLE_BIT_TOL: f64 = 1e-3;
const ORACLE_TOL: f64 = 1e-6;
const ORACLE_STOP: f64 = 1e-14;
const APPROX_BAND: f64 = 0.1;

pub fn run(spec: &RunSpec) -> Result<Report, CliError> {
    match spec.command {
        Command::Solve => cmd_solve(spec),
        Command::SweepEnergy => cmd_sweep_energy(spec),
        Command::SweepWidth => cmd_sweep_width(spec),
        Command::Trace => cmd_trace(spec),
        Command::Verify => cmd_verify(spec),
        Command::ApproxCheck => cmd_approx_check(spec),
    }
}

fn params(spec: &RunSpec) -> Result<DeviceParams, CliError> {
    DeviceParams::new(spec.delta, spec.epsilon).map_err(|e| CliError::compute("model", e))
}

fn budget(e: f64) -> Result<Budget, CliError> {
    Budget::new(e).map_err(|e| CliError::compute("model", e))
}

/// PSNR in dB; infinite once the MSE underflows to zero.
pub fn psnr_or_inf(bits: usize, mse: f64) -> f64 {
    psnr_from_mse(bits, mse).unwrap_or(f64::INFINITY)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn cmd_solve(spec: &RunSpec) -> Result<Report, CliError> {
    let p = params(spec)?;
    let e = spec.single_energy()?;
    let report =
        solve(&p, spec.bits, budget(e)?, &spec.solver_config()).map_err(|err| CliError::compute("acs", err))?;
    let alloc = report.final_allocation();

    let mut table = Table::new(["bit", "current", "duration", "failure_prob"]);
    for (b, (&i, &t)) in alloc.currents.iter().zip(&alloc.durations).enumerate() {
        table.push(vec![b.into(), i.into(), t.into(), failure_prob_approx(&p, i, t).into()]);
    }
    let final_mse = report.final_mse();
    let summary = SolveSummary {
        mse: final_mse,
        psnr: psnr_or_inf(spec.bits, final_mse),
        energy: energy(alloc),
        latency: latency(alloc),
        iterations: report.outer_iterations(),
        fast_path: report.fast_path,
        closed_form_mse: mse_closed_forms(&p, spec.bits, budget(e)?).ok().map(|f| f.optimized),
    };
    let mut out = Report::new(table);
    out.note(format!("mse        {:.10e}", summary.mse));
    out.note(format!("psnr       {:.6} dB", summary.psnr));
    out.note(format!("energy     {:.10e} (budget {e})", summary.energy));
    out.note(format!("latency    {:.10e}", summary.latency));
    out.note(format!("iterations {} ({:?})", summary.iterations, report.termination));
    out.note(format!("fast path  {}", summary.fast_path));
    if let Some(c) = summary.closed_form_mse {
        out.note(format!(
            "closed-form mse {c:.10e} (relative difference {:.3e})",
            relative(final_mse, c)
        ));
    }
    if !report.saturated_bits.is_empty() {
        out.note(format!("bits at the current floor: {:?}", report.saturated_bits));
    }
    out.attach("summary", &summary);
    out.attach("report", &report);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct SolveSummary {
    mse: f64,
    psnr: f64,
    energy: f64,
    latency: f64,
    iterations: usize,
    fast_path: bool,
    closed_form_mse: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyRow {
    pub energy: f64,
    pub mse_uniform: f64,
    pub mse_optimized: f64,
    pub psnr_uniform: f64,
    pub psnr_optimized: f64,
    pub gamma: f64,
    pub below_threshold: bool,
    pub iterations: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Crossing {
    pub psnr_target: f64,
    pub energy_uniform: f64,
    pub energy_optimized: f64,
    /// `(E_uniform - E_optimized) / E_uniform`.
    pub saving: f64,
}

/// First budget at which `psnr` reaches `target`, linearly interpolated
/// between sweep points. `None` if the sweep never reaches it.
pub fn psnr_crossing(energies: &[f64], psnr: &[f64], target: f64) -> Option<f64> {
    if psnr.first().is_some_and(|&q| q >= target) {
        return energies.first().copied();
    }
    energies.windows(2).zip(psnr.windows(2)).find_map(|(e, q)| {
        (q[0] < target && q[1] >= target).then(|| {
            if q[1].is_finite() {
                e[0] + (target - q[0]) * (e[1] - e[0]) / (q[1] - q[0])
            } else {
                e[1]
            }
        })
    })
}

pub fn energy_crossing(rows: &[EnergyRow], target: f64) -> Option<Crossing> {
    let energies: Vec<f64> = rows.iter().map(|r| r.energy).collect();
    let uni: Vec<f64> = rows.iter().map(|r| r.psnr_uniform).collect();
    let opt: Vec<f64> = rows.iter().map(|r| r.psnr_optimized).collect();
    let eu = psnr_crossing(&energies, &uni, target)?;
    let eo = psnr_crossing(&energies, &opt, target)?;
    Some(Crossing {
        psnr_target: target,
        energy_uniform: eu,
        energy_optimized: eo,
        saving: (eu - eo) / eu,
    })
}

fn cmd_sweep_energy(spec: &RunSpec) -> Result<Report, CliError> {
    let p = params(spec)?;
    let range = spec.energy_range()?;
    let bits = spec.bits;
    let config = spec.solver_config();
    let threshold: f64 = energy_threshold(bits);
    let rows = range
        .points()
        .into_par_iter()
        .map(|e| {
            let b = budget(e)?;
            let report = solve(&p, bits, b, &config).map_err(|err| CliError::compute("acs", err))?;
            let mse_u = mse_uniform(&p, bits, b);
            let mse_o = report.final_mse();
            Ok(EnergyRow {
                energy: e,
                mse_uniform: mse_u,
                mse_optimized: mse_o,
                psnr_uniform: psnr_or_inf(bits, mse_u),
                psnr_optimized: psnr_or_inf(bits, mse_o),
                gamma: mse_o / mse_u,
                below_threshold: !(e > threshold),
                iterations: report.outer_iterations(),
            })
        })
        .collect::<Result<Vec<_>, CliError>>()?;

    let mut table = Table::new([
        "energy",
        "mse_uniform",
        "mse_optimized",
        "psnr_uniform",
        "psnr_optimized",
        "gamma",
        "below_threshold",
        "iterations",
    ]);
    for r in &rows {
        table.push(vec![
            r.energy.into(),
            r.mse_uniform.into(),
            r.mse_optimized.into(),
            r.psnr_uniform.into(),
            r.psnr_optimized.into(),
            r.gamma.into(),
            r.below_threshold.into(),
            r.iterations.into(),
        ]);
    }
    let mut out = Report::new(table);
    let below = rows.iter().filter(|r| r.below_threshold).count();
    if below > 0 {
        out.note(format!(
            "{below} budgets at or below {threshold:.6} used the iterative solver instead of the closed form"
        ));
    }
    let crossing = energy_crossing(&rows, spec.psnr_target);
    match &crossing {
        Some(c) => out.note(format!(
            "{} dB reached at E={:.4} (uniform) and E={:.4} (optimized): {:.2}% less energy",
            c.psnr_target,
            c.energy_uniform,
            c.energy_optimized,
            100.0 * c.saving
        )),
        None => out.note(format!(
            "{} dB is not reached by both curves inside the sweep",
            spec.psnr_target
        )),
    }
    out.attach("crossing", &crossing);
    Ok(out)
}

fn cmd_sweep_width(spec: &RunSpec) -> Result<Report, CliError> {
    let mut table = Table::new(["bits", "gamma_exact", "gamma_approx"]);
    for bits in spec.bits_range.min..=spec.bits_range.max {
        let exact = gamma_rational(bits).to_f64().unwrap_or(0.0);
        table.push(vec![bits.into(), exact.into(), gamma_approx::<f64>(bits).into()]);
    }
    Ok(Report::new(table))
}

fn cmd_trace(spec: &RunSpec) -> Result<Report, CliError> {
    let p = params(spec)?;
    let e = spec.single_energy()?;
    let mut config = spec.solver_config();
    config.fast_path = false;
    let report: SolveReport = solve(&p, spec.bits, budget(e)?, &config).map_err(|err| CliError::compute("acs", err))?;
    let bits = spec.bits;
    let mut columns = vec!["k".to_string()];
    columns.extend((0..bits).map(|b| format!("i_{b}")));
    columns.extend((0..bits).map(|b| format!("t_{b}")));
    columns.extend(["mse".to_string(), "energy".to_string()]);
    let mut table = Table::new(columns);
    for (k, alloc) in report.iterates.iter().enumerate() {
        let mut row: Vec<Cell> = vec![k.into()];
        row.extend(alloc.currents.iter().map(|&i| Cell::from(i)));
        row.extend(alloc.durations.iter().map(|&t| Cell::from(t)));
        row.push(report.mse_trace[k].into());
        row.push(report.energy_trace[k].into());
        table.push(row);
    }
    let mut out = Report::new(table);
    out.note(format!(
        "{} outer iterations, stopped by {:?}, final mse {:.10e}",
        report.outer_iterations(),
        report.termination,
        report.final_mse()
    ));
    out.attach("report", &report);
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: String,
    pub achieved: f64,
    pub allowed: f64,
    pub pass: bool,
}

impl Check {
    fn at_most(name: &str, achieved: f64, allowed: f64) -> Self {
        Check {
            name: name.to_string(),
            achieved,
            allowed,
            pass: achieved <= allowed,
        }
    }
}

fn cmd_verify(spec: &RunSpec) -> Result<Report, CliError> {
    let p = params(spec)?;
    let e = spec.single_energy()?;
    let b = budget(e)?;
    let bits = spec.bits;
    let config = spec.solver_config();
    let report = solve(&p, bits, b, &config).map_err(|err| CliError::compute("acs", err))?;
    let mut alloc = report.final_allocation().clone();
    if let Some(f) = spec.scale_durations {
        alloc.durations.iter_mut().for_each(|t| *t *= f);
    }
    let objective = |i: &[f64], t: &[f64]| -> Result<f64, CliError> {
        let a = PulseAllocation::new(i.to_vec(), t.to_vec()).map_err(|err| CliError::compute("model", err))?;
        Ok(mse(&p, &a))
    };
    let mut checks = Vec::new();

    checks.push(Check::at_most(
        "energy tightness (relative)",
        relative(energy(&alloc), e),
        ENERGY_TIGHTNESS,
    ));
    let floor_gap = alloc.currents.iter().fold(0.0f64, |m, &i| m.max(p.min_current() - i));
    checks.push(Check::at_most("current floor violation", floor_gap, 0.0));

    let above = e > energy_threshold::<f64>(bits);
    if above && config.start == Start::AllTwos {
        let closed = mse_closed_forms(&p, bits, b).map_err(|err| CliError::compute("analytic", err))?;
        checks.push(Check::at_most(
            "mse vs closed form (relative)",
            relative(mse(&p, &alloc), closed.optimized),
            CLOSED_FORM_MSE_TOL,
        ));
    }
    if above {
        let (_, dual) = solve_durations(&p, &vec![2.0; bits], b, config.energy_tol * e)
            .map_err(|err| CliError::compute("steps", err))?;
        let closed = dual_closed_form(bits, b).map_err(|err| CliError::compute("analytic", err))?;
        checks.push(Check::at_most(
            "duration multiplier vs closed form (relative)",
            relative(dual.value, closed),
            DUAL_TOL,
        ));
    }

    let single = grid_search_single_bit(&p, budget(e / bits as f64)?, GRID_DENSITY)
        .map_err(|err| CliError::compute("oracle", err))?;
    checks.push(Check::at_most(
        "single-bit grid argmin |i - 2|",
        (single.current - 2.0).abs(),
        SINGLE_BIT_TOL,
    ));

    let tol = config.energy_tol * e;
    let (t_closed, _) = solve_durations(&p, &alloc.currents, b, tol).map_err(|err| CliError::compute("steps", err))?;
    let t_oracle =
        convex_solve_durations(&p, &alloc.currents, b, ORACLE_STOP).map_err(|err| CliError::compute("oracle", err))?;
    let closed = objective(&alloc.currents, &t_closed)?;
    checks.push(Check::at_most(
        "duration step vs projected descent (relative objective)",
        relative(objective(&alloc.currents, &t_oracle)?, closed),
        ORACLE_TOL,
    ));

    let (i_closed, _) = solve_currents(&p, &alloc.durations, b, tol).map_err(|err| CliError::compute("steps", err))?;
    let i_oracle =
        convex_solve_currents(&p, &alloc.durations, b, ORACLE_STOP).map_err(|err| CliError::compute("oracle", err))?;
    let closed = objective(&i_closed, &alloc.durations)?;
    checks.push(Check::at_most(
        "current step vs projected descent (relative objective)",
        relative(objective(&i_oracle, &alloc.durations)?, closed),
        ORACLE_TOL,
    ));

    let analytic = mse(&p, &alloc);
    let mc = monte_carlo_mse(&p, &alloc, spec.trials, spec.seed).map_err(|err| CliError::compute("oracle", err))?;
    checks.push(Check::at_most(
        "Monte Carlo |mean - mse| within 95% half-width",
        (mc.mean - analytic).abs(),
        mc.half_width,
    ));

    let mut table = Table::new(["check", "achieved", "allowed", "pass"]);
    for c in &checks {
        table.push(vec![
            c.name.as_str().into(),
            c.achieved.into(),
            c.allowed.into(),
            c.pass.into(),
        ]);
    }
    let mut out = Report::new(table);
    let failed = checks.iter().filter(|c| !c.pass).count();
    out.ok = failed == 0;
    out.note(format!(
        "{} of {} checks passed (Monte Carlo: mean {:.6e}, analytic {:.6e}, {} trials, seed {})",
        checks.len() - failed,
        checks.len(),
        mc.mean,
        analytic,
        mc.trials,
        mc.seed
    ));
    out.attach("monte_carlo", &mc);
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ApproxSummary {
    pub low_p: f64,
    pub samples: usize,
    pub max_rel_err: f64,
    pub at_current: f64,
    pub at_duration: f64,
    pub within_band: bool,
}

fn cmd_approx_check(spec: &RunSpec) -> Result<Report, CliError> {
    let p = params(spec)?;
    if !(spec.currents.min > 1.0) {
        return Err(CliError::Usage("--currents must stay above 1".into()));
    }
    if spec.durations.min < 0.0 {
        return Err(CliError::Usage("--durations must be nonnegative".into()));
    }
    let mut table = Table::new(["current", "duration", "p_exact", "p_approx", "rel_err"]);
    let mut worst = ApproxSummary {
        low_p: spec.low_p,
        samples: 0,
        max_rel_err: 0.0,
        at_current: f64::NAN,
        at_duration: f64::NAN,
        within_band: true,
    };
    for i in spec.currents.points() {
        for t in spec.durations.points() {
            let exact = failure_prob_exact(&p, i, t).map_err(|err| CliError::compute("model", err))?;
            let approx = failure_prob_approx(&p, i, t);
            let rel = (approx - exact).abs() / exact;
            if exact <= spec.low_p {
                worst.samples += 1;
                if rel > worst.max_rel_err || worst.at_current.is_nan() {
                    worst.max_rel_err = rel;
                    worst.at_current = i;
                    worst.at_duration = t;
                }
            }
            table.push(vec![i.into(), t.into(), exact.into(), approx.into(), rel.into()]);
        }
    }
    worst.within_band = worst.max_rel_err <= APPROX_BAND;
    let mut out = Report::new(table);
    if worst.samples == 0 {
        out.note(format!("no grid point has exact probability <= {}", spec.low_p));
    } else {
        out.note(format!(
            "max relative error where p_exact <= {}: {:.4} at i={}, t={} over {} points ({} the {APPROX_BAND} band)",
            spec.low_p,
            worst.max_rel_err,
            worst.at_current,
            worst.at_duration,
            worst.samples,
            if worst.within_band { "within" } else { "outside" }
        ));
    }
    out.attach("low_p_summary", &worst);
    Ok(out)
}
