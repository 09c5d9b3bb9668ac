use std::f64::consts::TAU;

use num_complex::Complex64;
use proptest::prelude::*;

use tvspline::admm::{self, solve_discrete, AdmmParams};
use tvspline::bspline::{bspline_eval, synthesize, GridSpec, SplineCoefficients, SystemMatrix};
use tvspline::experiments::{self, format_g, ExperimentConfig};
use tvspline::fourier::{apply_adjoint, measure_innovation, MeasurementVector, PeriodicSpline, ZeroMeanMeasure};
use tvspline::frank_wolfe::{fw_solve, FwParams};

fn measure_from(raw: &[(f64, f64)]) -> ZeroMeanMeasure {
    let mean = raw.iter().map(|a| a.1).sum::<f64>() / raw.len() as f64;
    ZeroMeanMeasure::new(raw.iter().map(|&(x, w)| (x, w - mean))).unwrap()
}

fn coeff_strategy(cutoff: usize) -> impl Strategy<Value = MeasurementVector> {
    (-1.0..1.0f64, proptest::collection::vec((-1.0..1.0f64, -1.0..1.0f64), cutoff))
        .prop_map(|(m, c)| MeasurementVector::new(m, c.into_iter().map(|(re, im)| Complex64::new(re, im)).collect()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn adjoint_pairs_with_forward(
        raw in proptest::collection::vec((0.0..TAU, -2.0..2.0f64), 2..6),
        z in coeff_strategy(4),
        order in 1u32..4,
    ) {
        let w = measure_from(&raw);
        let z = z.without_mean();
        let lhs = w.pair(&apply_adjoint(&z, order));
        let rhs = measure_innovation(&w, order, 4).dot(&z);
        prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs()));
    }

    #[test]
    fn shifting_atoms_rotates_measurements(
        raw in proptest::collection::vec((0.0..TAU, -2.0..2.0f64), 2..6),
        x0 in 0.0..TAU,
        order in 1u32..4,
    ) {
        let w = measure_from(&raw);
        let moved = ZeroMeanMeasure::new(w.atoms().iter().map(|a| (a.location + x0, a.weight))).unwrap();
        let expected = measure_innovation(&w, order, 5).shifted(x0);
        let got = measure_innovation(&moved, order, 5);
        prop_assert!((&got - &expected).norm() <= 1e-12 * (1.0 + expected.norm()));
    }

    #[test]
    fn bspline_support_and_positivity(order in 1u32..5, p in 8usize..40, x in 0.0..TAU) {
        let grid = GridSpec::new(order, p, 3).unwrap();
        let v = bspline_eval(&grid, x);
        prop_assert!(v >= -1e-15);
        if x > order as f64 * grid.spacing() + 1e-12 {
            prop_assert_eq!(v, 0.0);
        }
    }

    #[test]
    fn system_matrix_matches_synthesized_measurements(
        order in 1u32..5,
        c in proptest::collection::vec(-1.0..1.0f64, 16),
    ) {
        let grid = GridSpec::new(order, 16, 5).unwrap();
        let coeffs = SplineCoefficients::new(grid, c.clone()).unwrap();
        let hc = SystemMatrix::new(grid).apply(&c).unwrap();
        let direct = synthesize(&coeffs).measure(5);
        prop_assert!((&hc - &direct).norm() <= 1e-9 * (1.0 + direct.norm()));
    }

    #[test]
    fn measure_is_linear_in_weights(
        raw in proptest::collection::vec((0.0..TAU, -2.0..2.0f64), 2..5),
        s in -3.0..3.0f64,
    ) {
        let w = measure_from(&raw);
        let a = measure_innovation(&w.scaled(s), 2, 3);
        let b = measure_innovation(&w, 2, 3).scaled(s);
        prop_assert!((&a - &b).norm() <= 1e-12 * (1.0 + b.norm()));
    }

    #[test]
    fn g_format_round_trips(x in -1e6..1e6f64) {
        let parsed: f64 = format_g(x, 12).parse().unwrap();
        prop_assert!((parsed - x).abs() <= 1e-11 * x.abs().max(1e-300));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn admm_preserves_the_mean_and_is_rotation_equivariant(
        y in coeff_strategy(3),
        order in 1u32..4,
        shift in 1usize..8,
    ) {
        let grid = GridSpec::new(order, 32, 3).unwrap();
        let lambda = 0.02;
        let res = solve_discrete(&y, &grid, lambda, &AdmmParams::default(), None).unwrap();
        prop_assert!((synthesize(&res.c_star).mean() - y.mean()).abs() <= 1e-6);

        // shifting the data by whole grid steps shifts the coefficients
        let x0 = shift as f64 * grid.spacing();
        let moved = solve_discrete(&y.shifted(x0), &grid, lambda, &AdmmParams::default(), None).unwrap();
        prop_assert!((moved.objective - res.objective).abs() <= 1e-8 * res.objective.max(1e-12));
        let m0 = admm::solution_measurement(&res).shifted(x0);
        let m1 = admm::solution_measurement(&moved);
        prop_assert!((&m0 - &m1).norm() <= 1e-6 * (1.0 + m0.norm()));
    }

    #[test]
    fn frank_wolfe_iterates_stay_feasible(
        y in coeff_strategy(3),
        order in 1u32..4,
        log_lambda in -3.0..-1.0f64,
    ) {
        let lambda = 10f64.powf(log_lambda);
        let (spline, state) = fw_solve(&y, lambda, order, &FwParams::default()).unwrap();
        prop_assert!(state.w.total_mass().abs() <= 1e-12 * state.w.tv_norm().max(1.0));
        prop_assert!(state.w.tv_norm() <= state.t * (1.0 + 1e-12) + 1e-15);
        prop_assert!(state.t <= state.bound_m * (1.0 + 1e-12));
        for pair in state.history.windows(2) {
            prop_assert!(pair[1].objective <= pair[0].objective + 1e-12 * pair[0].objective.abs().max(1.0));
        }
        prop_assert_eq!(spline.mean(), y.mean());
        if state.converged {
            prop_assert!(state.w.len() <= 2 * y.cutoff());
        }
    }
}

#[test]
fn experiment_data_is_deterministic() {
    let cfg = ExperimentConfig { n_knots: 4, seed: 17, ..ExperimentConfig::default() };
    for trial in 0..3 {
        let (f_a, clean_a, noisy_a) = experiments::trial_data(&cfg, trial).unwrap();
        let (f_b, clean_b, noisy_b) = experiments::trial_data(&cfg, trial).unwrap();
        assert_eq!(f_a, f_b);
        assert_eq!(clean_a, clean_b);
        assert_eq!(noisy_a, noisy_b);
    }
    let (f0, _, _) = experiments::trial_data(&cfg, 0).unwrap();
    let (f1, _, _) = experiments::trial_data(&cfg, 1).unwrap();
    assert_ne!(f0.knots(), f1.knots());
}

#[test]
fn reconstruction_reproduces_the_data() {
    let cfg = ExperimentConfig { grid_points: vec![64], ..ExperimentConfig::default() };
    let (_, clean, _) = experiments::trial_data(&cfg, 0).unwrap();
    let rec = experiments::reconstruct(&clean, 2, 64, cfg.lambda, cfg.solver).unwrap();
    let m = rec.spline.measure(cfg.cutoff);
    assert!((&m - &clean).norm() <= 1e-3 * clean.norm());
}

#[test]
fn two_knots_merge_to_two_clusters_at_fine_grids() {
    let cfg = ExperimentConfig { grid_points: vec![512], seed: 3, ..ExperimentConfig::default() };
    let run = experiments::run_single(&cfg).unwrap();
    assert_eq!(run.reconstruction.merged.len(), 2);
    assert!(run.reconstruction.raw_knots >= 2);
}

#[test]
fn ground_truth_has_one_knot_per_arc() {
    let f: PeriodicSpline = experiments::generate_ground_truth(2, 5, 9).unwrap();
    assert_eq!(f.n_knots(), 5);
    for (n, &x) in f.knots().iter().enumerate() {
        let arc = TAU / 5.0;
        assert!(x >= n as f64 * arc && x < (n + 1) as f64 * arc);
    }
    assert!(f.innovation().total_mass().abs() < 1e-12);
}
