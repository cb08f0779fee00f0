//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use irpe::estimators::{PredictorSource, SensorPredictor};
use irpe::gradients::{extended_step, DerivativeOptions, PredictorGradientState};
use irpe::statespace::{AffineFamily, ModelFamily, RandomFamilySpec};
use nalgebra::{Complex, DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `[1, c1, …, cn]` with `det(λI − A) = λⁿ + c1 λⁿ⁻¹ + … + cn` (Faddeev–LeVerrier).
pub fn characteristic_polynomial(a: &DMatrix<f64>) -> Vec<f64> {
    let n = a.nrows();
    let mut c = vec![1.0];
    let mut m = DMatrix::zeros(n, n);
    for k in 1..=n {
        m = a * &m + DMatrix::identity(n, n) * c[k - 1];
        c.push(-(a * &m).trace() / k as f64);
    }
    c
}

/// Roots of a monic polynomial by Durand–Kerner iteration.
pub fn polynomial_roots(c: &[f64]) -> Vec<Complex<f64>> {
    let n = c.len() - 1;
    let eval = |z: Complex<f64>| c.iter().fold(Complex::new(0.0, 0.0), |acc, &ck| acc * z + ck);
    let bound = 1.0 + c[1..].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let seed = Complex::new(0.4, 0.9);
    let mut z: Vec<Complex<f64>> = (0..n).map(|k| seed.powu(k as u32) * bound).collect();
    for _ in 0..10_000 {
        let mut moved = 0.0f64;
        for i in 0..n {
            let denom = (0..n)
                .filter(|&j| j != i)
                .fold(Complex::new(1.0, 0.0), |acc, j| acc * (z[i] - z[j]));
            let step = eval(z[i]) / denom;
            z[i] -= step;
            moved = moved.max(step.norm());
        }
        if moved < 1e-15 * bound {
            break;
        }
    }
    z
}

pub fn radius_oracle(a: &DMatrix<f64>) -> f64 {
    polynomial_roots(&characteristic_polynomial(a))
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max)
}

/// `D P Dᵀ − D P Hᵀ (H P Hᵀ + R)⁻¹ H P Dᵀ + Q` with an explicit inverse.
pub fn riccati_oracle(
    d: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> DMatrix<f64> {
    let s = h * p * h.transpose() + r;
    let s_inv = s.try_inverse().expect("invertible innovation covariance");
    d * p * d.transpose() - d * p * h.transpose() * s_inv * h * p * d.transpose() + q
}

/// Positive root of the scalar Riccati equation `P = a²P − a²P²/(P + r) + q`,
/// i.e. of `P² + (r − a²r − q) P − q r = 0`, in a cancellation-free form.
pub fn scalar_riccati_root(a: f64, q: f64, r: f64) -> f64 {
    let b = r - a * a * r - q;
    let disc = (b * b + 4.0 * q * r).sqrt();
    if b <= 0.0 {
        (disc - b) / 2.0
    } else {
        2.0 * q * r / (b + disc)
    }
}

pub fn random_family(sensors: usize, state_dim: usize, obs_dim: usize, param_dim: usize, seed: u64) -> AffineFamily {
    AffineFamily::random(
        RandomFamilySpec {
            sensors,
            state_dim,
            obs_dim,
            param_dim,
        },
        seed,
    )
}

pub fn random_vector(rng: &mut ChaCha8Rng, n: usize, lo: f64, hi: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(lo..hi))
}

/// Output `H φ_{N+1}` of sensor `sensor`'s predictor at `x` after consuming `rs` from `φ = 0`,
/// with the gain recomputed by plain Riccati iteration and an explicit inverse.
pub fn filter_output(model: &dyn ModelFamily, sensor: usize, x: &[f64], rs: &[DVector<f64>]) -> DVector<f64> {
    let d = model.transition(sensor, x);
    let h = model.observation(sensor);
    let q = model.process_cov(sensor, x);
    let r = model.measurement_cov(sensor);
    let mut p = q.clone();
    for _ in 0..100_000 {
        let next = riccati_oracle(&d, &h, &q, &r, &p);
        let done = (&next - &p).amax() <= 1e-15 * p.amax().max(1.0);
        p = next;
        if done {
            break;
        }
    }
    let s_inv = (&h * &p * h.transpose() + &r).try_inverse().expect("invertible innovation covariance");
    let g = &d * &p * h.transpose() * s_inv;
    let f = &d - &g * &h;
    let mut phi = DVector::zeros(d.nrows());
    for y in rs {
        phi = &f * &phi + &g * y;
    }
    h * phi
}

/// Largest deviation between the frozen-`x` recursion's `ξ` after consuming
/// `rs` and central differences of [`filter_output`], and the allowed error
/// `max(1e−4, 1e−3 ‖g‖)`.
pub fn gradient_fidelity(model: &dyn ModelFamily, sensor: usize, x: &[f64], rs: &[DVector<f64>]) -> (f64, f64) {
    let source = SensorPredictor::new(model, sensor, DerivativeOptions::default());
    let bundle = source.bundle(x).unwrap();
    let mut state = PredictorGradientState::zeros(source.state_dim(), source.param_dim(), &source.observation());
    for y in rs {
        state = extended_step(&state, &bundle.f, &bundle.g, &bundle.h, &bundle.derivs, y).unwrap();
    }
    let g = filter_output(model, sensor, x, rs);
    let mut worst = 0.0f64;
    for l in 0..x.len() {
        let step = 1e-4 * x[l].abs().max(1.0);
        let shifted = |off: f64| {
            let mut xp = x.to_vec();
            xp[l] += off;
            filter_output(model, sensor, &xp, rs)
        };
        let fd = (shifted(step) - shifted(-step)) / (2.0 * step);
        worst = worst.max((&state.xi[l] - fd).amax());
    }
    (worst, 1e-4f64.max(1e-3 * g.norm()))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

