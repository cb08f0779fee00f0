mod common;

use irpe::kalman::{solve_dare, steady_state_gain, DareOptions, SteadyStatePredictor};
use irpe::statespace::{
    numerical_rank, observability_matrix, simulate_trajectory, spectral_radius, ModelFamily,
};
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::Rng;

#[test]
fn scalar_gain_matches_closed_form() {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    let p = common::scalar_riccati_root(0.9, 1.0, 1.0);
    let pred = SteadyStatePredictor::from_model(&s(0.9), &s(1.0), &s(1.0), &s(1.0), DareOptions::default()).unwrap();
    assert!((pred.g[(0, 0)] - 0.9 * p / (p + 1.0)).abs() < 1e-10);
    assert!((pred.f[(0, 0)] - 0.9 / (p + 1.0)).abs() < 1e-10);
}

#[test]
fn deadbeat_gain_without_measurement_noise() {
    let s = |v: f64| DMatrix::from_element(1, 1, v);
    let (g, f) = steady_state_gain(&s(0.7), &s(1.0), &s(2.0), &s(0.0)).unwrap();
    assert!((g[(0, 0)] - 0.7).abs() < 1e-15);
    assert!(f[(0, 0)].abs() < 1e-15);
}

/// The steady-state gain minimises the mean squared innovation: every gain
/// perturbed by a matrix of Frobenius norm 0.1 does worse on 10⁴ samples.
#[test]
fn steady_state_gain_beats_perturbed_gains() {
    for seed in 0..3u64 {
        let model = common::random_family(1, 3, 2, 1, 50 + seed);
        let x = [0.5];
        let traj = simulate_trajectory(&model, &x, 10_000, 60 + seed).unwrap();
        let d = model.transition(0, &x);
        let h = model.observation(0);
        let pred = SteadyStatePredictor::from_model(&d, &h, &model.process_cov(0, &x), &model.measurement_cov(0), DareOptions::default()).unwrap();
        let mse = |g: &DMatrix<f64>| {
            let f = &d - g * &h;
            let mut phi = DVector::zeros(3);
            let mut total = 0.0;
            for r in &traj.measurements[0] {
                total += (r - &h * &phi).norm_squared();
                phi = &f * &phi + g * r;
            }
            total / traj.measurements[0].len() as f64
        };
        let best = mse(&pred.g);
        let mut rng = common::rng(70 + seed);
        for _ in 0..10 {
            let delta = DMatrix::from_fn(3, 2, |_, _| rng.random_range(-1.0..1.0));
            let delta = &delta * (0.1 / delta.norm());
            let other = mse(&(&pred.g + delta));
            assert!(best <= other, "seed {seed}: optimal {best} vs perturbed {other}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dare_solution_is_a_fixed_point(seed in 0u64..10_000, q in 1usize..=5, p in 1usize..=3, x in 0.0f64..1.0) {
        let model = common::random_family(1, q, p, 1, seed);
        let (d, h, qc, r) = (model.transition(0, &[x]), model.observation(0), model.process_cov(0, &[x]), model.measurement_cov(0));
        let opts = DareOptions::default();
        let sol = solve_dare(&d, &h, &qc, &r, opts).unwrap();
        let change = (common::riccati_oracle(&d, &h, &qc, &r, &sol.p) - &sol.p).amax();
        prop_assert!(change < 10.0 * opts.tol * sol.p.amax().max(1.0), "change {}", change);
    }

    #[test]
    fn predictor_is_stable_for_stable_observable_models(seed in 0u64..10_000, q in 1usize..=5, p in 1usize..=2, x in 0.0f64..1.0) {
        let model = common::random_family(1, q, p, 1, seed);
        let (d, h) = (model.transition(0, &[x]), model.observation(0));
        prop_assume!(spectral_radius(&d).unwrap() < 1.0);
        prop_assume!(numerical_rank(&observability_matrix(&d, &h)) == q);
        let pred = SteadyStatePredictor::from_model(&d, &h, &model.process_cov(0, &[x]), &model.measurement_cov(0), DareOptions::default()).unwrap();
        prop_assert!(spectral_radius(&pred.f).unwrap() < 1.0);
    }
}
