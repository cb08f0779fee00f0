use irpe::estimators::{irpe_cycle, IrpeState, SensorPredictor, StepSchedule};
use irpe::gradients::{DerivativeOptions, PredictorGradientState};
use irpe::lifted::{equivalence_report, lift_sensor, lifted_rpe_run, unit_block_vector};
use irpe::statespace::{simulate_trajectory, AffineFamily, ModelFamily, RandomFamilySpec};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

#[test]
fn shift_identities_hold() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (m, q, p) = (4, 3, 2);
    let d = random_matrix(&mut rng, q, q);
    let g = random_matrix(&mut rng, q, p);
    let h = random_matrix(&mut rng, p, q);
    let lifted = lift_sensor(&d, &g, &h, m).unwrap();
    for j in 1..=m {
        let u = unit_block_vector(q, m, j).unwrap();
        let shifted = &lifted.transition * &u;
        let expect = if j == 1 {
            unit_block_vector(q, m, m).unwrap() * &d
        } else {
            unit_block_vector(q, m, j - 1).unwrap()
        };
        assert!((shifted - expect).amax() < 1e-15);
        let seen = &lifted.observation * &u;
        let expect = if j == 1 { h.clone() } else { DMatrix::zeros(p, q) };
        assert_eq!(seen, expect);
    }
    assert_eq!(lifted.gain, unit_block_vector(q, m, m).unwrap() * &g);
}

#[test]
fn lifted_predictor_has_shift_structure() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (m, q) = (3, 2);
    let d = random_matrix(&mut rng, q, q);
    let g = random_matrix(&mut rng, q, 1);
    let h = random_matrix(&mut rng, 1, q);
    let lifted_d = lift_sensor(&d, &g, &h, m).unwrap();
    let f = &d - &g * &h;
    let lifted_f = lift_sensor(&f, &g, &h, m).unwrap();
    let direct = &lifted_d.transition - &lifted_d.gain * &lifted_d.observation;
    assert!((direct - lifted_f.transition).amax() < 1e-15);
}

/// The lifted system reproduces each sensor's measurements at its own turn
/// and zeros elsewhere when driven by the correspondingly interleaved noise.
#[test]
fn lifted_state_reproduces_sensor_outputs() {
    for m in 1..=4 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + m as u64);
        let (q, p, slots) = (2, 1, 20);
        for i in 1..=m {
            let d = random_matrix(&mut rng, q, q) * 0.5;
            let h = random_matrix(&mut rng, p, q);
            let lifted = lift_sensor(&d, &DMatrix::zeros(q, p), &h, m).unwrap();
            let theta1 = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
            let w: Vec<DVector<f64>> = (0..=slots).map(|_| DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0))).collect();
            let v: Vec<DVector<f64>> = (0..=slots).map(|_| DVector::from_fn(p, |_, _| rng.random_range(-1.0..1.0))).collect();

            // Per-sensor system: θ(k+1) = D θ(k) + w(k), r(k) = H θ(k) + v(k), from θ(1).
            let mut theta = vec![theta1.clone()];
            for k in 1..=slots {
                let next = &d * &theta[k - 1] + &w[k];
                theta.push(next);
            }
            let r: Vec<DVector<f64>> = (0..=slots).map(|k| &h * &theta[k] + &v[k]).collect();

            let ui = unit_block_vector(q, m, i).unwrap();
            let um = unit_block_vector(q, m, m).unwrap();
            let mut big = &ui * &theta1;
            for n in 1..=m * slots {
                let k = (n - 1) / m;
                let j = n - m * k;
                let out_noise = if j == i { v[k].clone() } else { DVector::zeros(p) };
                let out = &lifted.observation * &big + out_noise;
                let expect = if j == i { r[k].clone() } else { DVector::zeros(p) };
                assert_eq!(out, expect, "m={m} i={i} n={n}");
                let drive = if j == i { &um * &w[k + 1] } else { DVector::zeros(m * q) };
                big = &lifted.transition * &big + drive;
            }
        }
    }
}

fn run_instance(m: usize, q: usize, d: usize, seed: u64, cycles: usize, ring: Vec<usize>, seeded_states: bool) -> f64 {
    let model = AffineFamily::random(
        RandomFamilySpec {
            sensors: m,
            state_dim: q,
            obs_dim: 1,
            param_dim: d,
        },
        seed,
    );
    let truth = vec![0.7; d];
    let traj = simulate_trajectory(&model, &truth, cycles, seed + 1).unwrap();
    let sources = SensorPredictor::all(&model, DerivativeOptions::default());
    let schedule = StepSchedule::new(0.5, 5).unwrap();
    let x_start = DVector::from_element(d, 0.3);
    let bounds = model.feasible_box().clone();

    let mut irpe = IrpeState::new(x_start.clone(), &sources, ring.clone()).unwrap();
    if seeded_states {
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 2);
        for (i, st) in irpe.sensors.iter_mut().enumerate() {
            let psi = DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0));
            let chi = (0..d).map(|_| DVector::from_fn(q, |_, _| rng.random_range(-1.0..1.0))).collect();
            *st = PredictorGradientState::new(psi, chi, &model.observation(i)).unwrap();
        }
    }
    let initial: Vec<_> = ring.iter().map(|&i| irpe.sensors[i].clone()).collect();

    let mut irpe_trace = Vec::new();
    for k in 0..cycles {
        let rec = irpe_cycle(&mut irpe, &sources, &traj.slot(k), schedule.alpha(k as u64 + 1), &bounds).unwrap();
        irpe_trace.extend(rec.substeps.into_iter().map(|s| s.z));
    }

    let ordered: Vec<_> = ring.iter().map(|&i| sources[i]).collect();
    let slots: Vec<Vec<DVector<f64>>> = (0..cycles)
        .map(|k| ring.iter().map(|&i| traj.measurements[i][k].clone()).collect())
        .collect();
    let lifted = lifted_rpe_run(&ordered, &slots, schedule, x_start, &initial, &bounds).unwrap();
    assert_eq!(lifted.iterates.len(), m * cycles);
    for x in &lifted.iterates {
        assert!(bounds.contains(x.as_slice()));
    }
    let report = equivalence_report(&irpe_trace, &lifted.iterates, 1e-9).unwrap();
    assert_eq!(report.first_divergence_index, None, "{report:?}");
    report.max_rel_dev
}

#[test]
fn lifted_rpe_matches_irpe_trace() {
    let dev = run_instance(3, 2, 2, 42, 50, vec![0, 1, 2], false);
    assert!(dev <= 1e-9, "max relative deviation {dev}");
}

#[test]
fn lifted_rpe_matches_irpe_with_ring_and_initial_states() {
    let dev = run_instance(4, 2, 1, 7, 30, vec![2, 0, 3, 1], true);
    assert!(dev <= 1e-9, "max relative deviation {dev}");
}

#[test]
fn single_sensor_lifting_is_plain_rpe() {
    let dev = run_instance(1, 2, 2, 5, 40, vec![0], false);
    assert_eq!(dev, 0.0);
}

/// Diagnostic: at a fixed parameter the lifted predictor's summed squared
/// innovations over the interleaved stream equal the sensors' total.
#[test]
fn lifted_cost_equals_sensor_cost() {
    use irpe::estimators::{empirical_cost, PredictorSource};
    use irpe::lifted::{interleave, LiftedSource};

    let (m, cycles) = (3, 60);
    let model = AffineFamily::random(
        RandomFamilySpec {
            sensors: m,
            state_dim: 2,
            obs_dim: 1,
            param_dim: 2,
        },
        21,
    );
    let traj = simulate_trajectory(&model, &[0.6, 0.4], cycles, 22).unwrap();
    let sources = SensorPredictor::all(&model, DerivativeOptions::default());
    let lifted = LiftedSource::new(&sources).unwrap();
    for x in [[0.6, 0.4], [0.1, 0.9]] {
        let bundle = lifted.bundle(&x).unwrap();
        let slots: Vec<Vec<DVector<f64>>> = (0..cycles).map(|k| traj.slot(k)).collect();
        let mut phi = DVector::zeros(lifted.state_dim());
        let mut total = 0.0;
        for r in interleave(&slots, m).unwrap() {
            total += (&r - &bundle.h * &phi).norm_squared();
            phi = &bundle.f * &phi + &bundle.g * &r;
        }
        let direct = empirical_cost(&model, &traj, &x, DerivativeOptions::default()).unwrap() * cycles as f64;
        println!("x = {x:?}: lifted {total:.12e}, per sensor {direct:.12e}");
        assert!((total - direct).abs() <= 1e-10 * direct);
    }
}
