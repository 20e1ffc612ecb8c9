use proptest::prelude::*;

use pulseopt::acs::solve;
use pulseopt::analytic::{energy_threshold, mse_closed_forms};
use pulseopt::model::energy;
use pulseopt::{Budget, BudgetF32, DeviceParams, DeviceParamsF32, SolverConfig, SolverConfigF32, Start};

fn start_and_budget() -> impl Strategy<Value = (Vec<f64>, f64)> {
    (1usize..=8).prop_flat_map(|bits| (prop::collection::vec(1.001f64..4.0, bits), 5.0f64..500.0))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn every_iterate_is_feasible_and_tight((start, e) in start_and_budget()) {
        let p = DeviceParams::default();
        let b = Budget::new(e).unwrap();
        let report = solve(&p, start.len(), b, &SolverConfig::default().with_start(Start::Custom(start))).unwrap();
        for alloc in &report.iterates[1..] {
            prop_assert!(alloc.check_feasible(&p, b, 1e-8 * e).is_ok());
            prop_assert!((energy(alloc) - e).abs() <= 1e-8 * e);
        }
        for w in report.mse_trace.windows(2) {
            prop_assert!(w[1] <= w[0] * (1.0 + 1e-12));
        }
    }

    #[test]
    fn alltwos_solution_matches_closed_form(bits in 1usize..=12, extra in 0.5f64..400.0) {
        let p = DeviceParams::default();
        let e = energy_threshold::<f64>(bits) + extra;
        let b = Budget::new(e).unwrap();
        let report = solve(&p, bits, b, &SolverConfig::default()).unwrap();
        let closed = mse_closed_forms(&p, bits, b).unwrap().optimized;
        prop_assert!(report.fast_path);
        prop_assert!((report.final_mse() - closed).abs() <= 1e-9 * closed);
    }

    #[test]
    fn single_precision_tracks_double(bits in 1usize..=8, extra in 1.0f64..200.0) {
        let e = energy_threshold::<f64>(bits) + extra;
        let wide = solve(&DeviceParams::default(), bits, Budget::new(e).unwrap(), &SolverConfig::default()).unwrap();
        let narrow = solve(
            &DeviceParamsF32::default(),
            bits,
            BudgetF32::new(e as f32).unwrap(),
            &SolverConfigF32::default(),
        )
        .unwrap();
        for (a, b) in wide.final_allocation().durations.iter().zip(&narrow.final_allocation().durations) {
            prop_assert!((a - f64::from(*b)).abs() <= 1e-4 * a.max(1.0));
        }
    }
}
