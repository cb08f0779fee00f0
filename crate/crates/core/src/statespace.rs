//! Parametrized per-sensor linear state-space models and ground-truth simulation.
//!
//! Every sensor `i` observes its own process
//!
//! ```text
//! θ_i(k+1) = D_i(x) θ_i(k) + w_i(k)        Cov w_i = Q_i(x)
//! r_i(k+1) = H_i θ_i(k+1) + v_i(k+1)       Cov v_i = R_i
//! ```
//!
//! where `x` is the unknown parameter, confined to a box.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::MatrixDerivatives;

/// Eigenvalues of a covariance may dip this far below zero and still count as PSD.
pub const PSD_TOLERANCE: f64 = 1e-10;
/// Margin below one required of the spectral radius for a model to count as stable.
pub const STABILITY_MARGIN: f64 = 1e-9;
/// Rank tolerance relative to the largest singular value.
pub const RANK_TOLERANCE: f64 = 1e-8;

/// Closed convex feasible set: a product of intervals, possibly unbounded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamBox {
    pub lo: Vec<f64>,
    pub hi: Vec<f64>,
}

impl ParamBox {
    pub fn new(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() {
            return Err(Error::DimensionMismatch(format!(
                "box bounds have lengths {} and {}",
                lo.len(),
                hi.len()
            )));
        }
        for (l, h) in lo.iter().zip(&hi) {
            if l.is_nan() || h.is_nan() || l > h {
                return Err(Error::InvalidInput(format!("invalid box interval [{l}, {h}]")));
            }
        }
        Ok(Self { lo, hi })
    }

    pub fn unbounded(dim: usize) -> Self {
        Self {
            lo: vec![f64::NEG_INFINITY; dim],
            hi: vec![f64::INFINITY; dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn contains(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x
                .iter()
                .zip(self.lo.iter().zip(&self.hi))
                .all(|(v, (l, h))| *v >= *l && *v <= *h)
    }

    /// Midpoint of the box; unbounded sides fall back to the finite bound or zero.
    pub fn centroid(&self) -> Vec<f64> {
        self.lo
            .iter()
            .zip(&self.hi)
            .map(|(&l, &h)| match (l.is_finite(), h.is_finite()) {
                (true, true) => 0.5 * (l + h),
                (true, false) => l,
                (false, true) => h,
                (false, false) => 0.0,
            })
            .collect()
    }
}

/// A family of per-sensor linear state-space models indexed by a parameter `x`.
///
/// `D_i`, `Q_i` may depend on `x`; `H_i`, `R_i` may not. All sensors share the
/// state dimension; observation dimensions may differ between sensors (cluster
/// models stack several measurements).
pub trait ModelFamily: Send + Sync {
    fn sensor_count(&self) -> usize;
    fn state_dim(&self) -> usize;
    fn obs_dim(&self, sensor: usize) -> usize;
    fn param_dim(&self) -> usize;

    fn transition(&self, sensor: usize, x: &[f64]) -> DMatrix<f64>;
    fn observation(&self, sensor: usize) -> DMatrix<f64>;
    fn process_cov(&self, sensor: usize, x: &[f64]) -> DMatrix<f64>;
    fn measurement_cov(&self, sensor: usize) -> DMatrix<f64>;

    fn feasible_box(&self) -> &ParamBox;

    /// Initial true state `θ_i(0)`; zero unless the model says otherwise.
    fn initial_state(&self, sensor: usize) -> DVector<f64> {
        let _ = sensor;
        DVector::zeros(self.state_dim())
    }

    /// Analytic `∂F/∂x`, `∂G/∂x`, when the model knows them in closed form.
    fn gain_derivatives(&self, sensor: usize, x: &[f64]) -> Option<Result<MatrixDerivatives>> {
        let _ = (sensor, x);
        None
    }

    /// Checks every matrix dimension at `x`.
    fn validate_at(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.param_dim() {
            return Err(Error::DimensionMismatch(format!(
                "parameter has length {}, model expects {}",
                x.len(),
                self.param_dim()
            )));
        }
        if self.feasible_box().dim() != self.param_dim() {
            return Err(Error::DimensionMismatch("feasible box dimension".into()));
        }
        let q = self.state_dim();
        for i in 0..self.sensor_count() {
            let p = self.obs_dim(i);
            check_shape("D", &self.transition(i, x), q, q)?;
            check_shape("H", &self.observation(i), p, q)?;
            check_shape("Q", &self.process_cov(i, x), q, q)?;
            check_shape("R", &self.measurement_cov(i), p, p)?;
        }
        Ok(())
    }
}

pub(crate) fn check_shape(name: &str, m: &DMatrix<f64>, rows: usize, cols: usize) -> Result<()> {
    if m.shape() != (rows, cols) {
        return Err(Error::DimensionMismatch(format!(
            "{name} is {}x{}, expected {rows}x{cols}",
            m.nrows(),
            m.ncols()
        )));
    }
    Ok(())
}

/// Family whose transition and process covariance are affine in `x`:
/// `D(x) = D0 + Σ x_ℓ D_ℓ`, `Q(x) = Q0 + Σ x_ℓ Q_ℓ`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineSensor {
    pub transition_base: DMatrix<f64>,
    pub transition_terms: Vec<DMatrix<f64>>,
    pub observation: DMatrix<f64>,
    pub process_base: DMatrix<f64>,
    pub process_terms: Vec<DMatrix<f64>>,
    pub measurement_cov: DMatrix<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AffineFamily {
    pub sensors: Vec<AffineSensor>,
    pub bounds: ParamBox,
}

/// Shape of a randomly drawn [`AffineFamily`].
#[derive(Debug, Clone, Copy)]
pub struct RandomFamilySpec {
    pub sensors: usize,
    pub state_dim: usize,
    pub obs_dim: usize,
    pub param_dim: usize,
}

impl AffineFamily {
    pub fn new(sensors: Vec<AffineSensor>, bounds: ParamBox) -> Result<Self> {
        if sensors.is_empty() {
            return Err(Error::InvalidInput("model needs at least one sensor".into()));
        }
        let d = bounds.dim();
        let q = sensors[0].transition_base.nrows();
        for (i, s) in sensors.iter().enumerate() {
            let p = s.observation.nrows();
            check_shape("D0", &s.transition_base, q, q)?;
            check_shape("H", &s.observation, p, q)?;
            check_shape("Q0", &s.process_base, q, q)?;
            check_shape("R", &s.measurement_cov, p, p)?;
            if s.transition_terms.len() != d || s.process_terms.len() != d {
                return Err(Error::DimensionMismatch(format!(
                    "sensor {i}: expected {d} parameter terms"
                )));
            }
            for t in s.transition_terms.iter().chain(&s.process_terms) {
                check_shape("parameter term", t, q, q)?;
            }
            noise_factor(&s.measurement_cov, "R")?;
        }
        Ok(Self { sensors, bounds })
    }

    /// Scalar family `D(x) = x`, `H = 1`, constant `Q`, `R`.
    pub fn scalar_ar1(q: f64, r: f64, bounds: ParamBox) -> Result<Self> {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        Self::new(
            vec![AffineSensor {
                transition_base: one(0.0),
                transition_terms: vec![one(1.0)],
                observation: one(1.0),
                process_base: one(q),
                process_terms: vec![one(0.0)],
                measurement_cov: one(r),
            }],
            bounds,
        )
    }

    /// Random admissible family on the box `[0, 1]^d`.
    ///
    /// `‖D(x)‖₂ ≤ 0.75` everywhere on the box, so every member is stable;
    /// `Q(x) ⪰ 0.1 I` and `R ⪰ 0.1 I`.
    pub fn random(spec: RandomFamilySpec, seed: u64) -> Self {
        let RandomFamilySpec {
            sensors: m,
            state_dim: q,
            obs_dim: p,
            param_dim: d,
        } = spec;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut gauss = |r: usize, c: usize| {
            DMatrix::from_fn(r, c, |_, _| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
        };
        let scaled = |a: DMatrix<f64>, target: f64| {
            let n = spectral_norm(&a);
            if n > 0.0 {
                a * (target / n)
            } else {
                a
            }
        };
        let mut out = Vec::with_capacity(m);
        for _ in 0..m {
            let transition_base = scaled(gauss(q, q), 0.45);
            let transition_terms = (0..d).map(|_| scaled(gauss(q, q), 0.3 / d as f64)).collect();
            let observation = gauss(p, q);
            let b = gauss(q, q);
            let process_base = &b * b.transpose() * (0.5 / q as f64) + DMatrix::identity(q, q) * 0.1;
            let process_terms = (0..d)
                .map(|_| {
                    let c = gauss(q, 1);
                    &c * c.transpose() * 0.2
                })
                .collect();
            let e = gauss(p, p);
            let measurement_cov = &e * e.transpose() * (0.2 / p as f64) + DMatrix::identity(p, p) * 0.1;
            out.push(AffineSensor {
                transition_base,
                transition_terms,
                observation,
                process_base,
                process_terms,
                measurement_cov,
            });
        }
        Self {
            sensors: out,
            bounds: ParamBox {
                lo: vec![0.0; d],
                hi: vec![1.0; d],
            },
        }
    }

    fn affine(base: &DMatrix<f64>, terms: &[DMatrix<f64>], x: &[f64]) -> DMatrix<f64> {
        let mut out = base.clone();
        for (t, &xl) in terms.iter().zip(x) {
            if xl != 0.0 {
                out += t * xl;
            }
        }
        out
    }
}

impl ModelFamily for AffineFamily {
    fn sensor_count(&self) -> usize {
        self.sensors.len()
    }
    fn state_dim(&self) -> usize {
        self.sensors[0].transition_base.nrows()
    }
    fn obs_dim(&self, sensor: usize) -> usize {
        self.sensors[sensor].observation.nrows()
    }
    fn param_dim(&self) -> usize {
        self.bounds.dim()
    }
    fn transition(&self, sensor: usize, x: &[f64]) -> DMatrix<f64> {
        let s = &self.sensors[sensor];
        Self::affine(&s.transition_base, &s.transition_terms, x)
    }
    fn observation(&self, sensor: usize) -> DMatrix<f64> {
        self.sensors[sensor].observation.clone()
    }
    fn process_cov(&self, sensor: usize, x: &[f64]) -> DMatrix<f64> {
        let s = &self.sensors[sensor];
        Self::affine(&s.process_base, &s.process_terms, x)
    }
    fn measurement_cov(&self, sensor: usize) -> DMatrix<f64> {
        self.sensors[sensor].measurement_cov.clone()
    }
    fn feasible_box(&self) -> &ParamBox {
        &self.bounds
    }
}

/// Measurements (and optionally true states) for every sensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `measurements[i][k]` is `r_i(k+1)`.
    pub measurements: Vec<Vec<DVector<f64>>>,
    /// `states[i][k]` is `θ_i(k)`, for `k = 0..=N`.
    pub states: Option<Vec<Vec<DVector<f64>>>>,
    pub seed: u64,
}

impl Trajectory {
    pub fn sensor_count(&self) -> usize {
        self.measurements.len()
    }

    pub fn horizon(&self) -> usize {
        self.measurements.first().map_or(0, Vec::len)
    }

    /// All sensors' measurements for slot `t + 1`.
    pub fn slot(&self, t: usize) -> Vec<DVector<f64>> {
        self.measurements.iter().map(|m| m[t].clone()).collect()
    }

    /// Stacks the measurements of each group into one vector per group.
    pub fn stack_groups(&self, groups: &[Vec<usize>]) -> Trajectory {
        let n = self.horizon();
        let measurements = groups
            .iter()
            .map(|g| {
                (0..n)
                    .map(|k| {
                        let parts: Vec<f64> = g
                            .iter()
                            .flat_map(|&i| self.measurements[i][k].iter().copied())
                            .collect();
                        DVector::from_vec(parts)
                    })
                    .collect()
            })
            .collect();
        Trajectory {
            measurements,
            states: None,
            seed: self.seed,
        }
    }
}

/// Symmetrizes `cov` and returns `L` with `L Lᵀ = cov`.
///
/// Uses Cholesky when possible and falls back to an eigendecomposition with
/// negative eigenvalues clipped to zero. Rejects eigenvalues below `-PSD_TOLERANCE`.
pub fn noise_factor(cov: &DMatrix<f64>, what: &str) -> Result<DMatrix<f64>> {
    if !cov.is_square() {
        return Err(Error::NonSquare {
            rows: cov.nrows(),
            cols: cov.ncols(),
        });
    }
    let sym = (cov + cov.transpose()) * 0.5;
    let eig = sym.clone().symmetric_eigen();
    let min = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if sym.nrows() > 0 && min < -PSD_TOLERANCE {
        return Err(Error::NotPsd {
            what: what.to_string(),
            min_eigenvalue: min,
        });
    }
    if let Some(ch) = sym.clone().cholesky() {
        return Ok(ch.l());
    }
    let sqrt = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    Ok(&eig.eigenvectors * DMatrix::from_diagonal(&sqrt))
}

fn standard_normal(rng: &mut ChaCha8Rng, n: usize) -> DVector<f64> {
    DVector::from_fn(n, |_, _| StandardNormal.sample(rng))
}

/// Simulates `N` slots of every sensor's process at `x_true`.
///
/// Noise is Gaussian with covariances `Q_i(x_true)`, `R_i`; all draws come
/// from one ChaCha8 stream seeded by `seed`, so the output is a pure function
/// of its arguments.
pub fn simulate_trajectory(
    model: &dyn ModelFamily,
    x_true: &[f64],
    horizon: usize,
    seed: u64,
) -> Result<Trajectory> {
    model.validate_at(x_true)?;
    if !model.feasible_box().contains(x_true) {
        return Err(Error::InvalidInput("true parameter lies outside the feasible box".into()));
    }
    if horizon == 0 {
        return Err(Error::InvalidInput("horizon must be at least 1".into()));
    }
    let m = model.sensor_count();
    let q = model.state_dim();
    let mut sensors = Vec::with_capacity(m);
    for i in 0..m {
        let d = model.transition(i, x_true);
        let h = model.observation(i);
        let lw = noise_factor(&model.process_cov(i, x_true), "Q")?;
        let lv = noise_factor(&model.measurement_cov(i), "R")?;
        let theta0 = model.initial_state(i);
        if theta0.len() != q {
            return Err(Error::DimensionMismatch("initial state".into()));
        }
        sensors.push((d, h, lw, lv, theta0));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut states: Vec<Vec<DVector<f64>>> = sensors.iter().map(|s| vec![s.4.clone()]).collect();
    let mut measurements: Vec<Vec<DVector<f64>>> = vec![Vec::with_capacity(horizon); m];
    for _ in 0..horizon {
        for (i, (d, h, lw, lv, _)) in sensors.iter().enumerate() {
            let w = lw * standard_normal(&mut rng, lw.ncols());
            let v = lv * standard_normal(&mut rng, lv.ncols());
            let next = d * states[i].last().unwrap() + w;
            measurements[i].push(h * &next + v);
            states[i].push(next);
        }
    }
    Ok(Trajectory {
        measurements,
        states: Some(states),
        seed,
    })
}

/// Largest eigenvalue modulus.
pub fn spectral_radius(a: &DMatrix<f64>) -> Result<f64> {
    if !a.is_square() {
        return Err(Error::NonSquare {
            rows: a.nrows(),
            cols: a.ncols(),
        });
    }
    if a.nrows() == 0 {
        return Ok(0.0);
    }
    Ok(a
        .complex_eigenvalues()
        .iter()
        .map(|z| z.norm())
        .fold(0.0, f64::max))
}

pub(crate) fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.singular_values().iter().copied().fold(0.0, f64::max)
}

/// Numerical rank with tolerance `RANK_TOLERANCE · σ_max`.
pub fn numerical_rank(a: &DMatrix<f64>) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.singular_values();
    let max = sv.iter().copied().fold(0.0, f64::max);
    if max == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > RANK_TOLERANCE * max).count()
}

/// `[H; H D; …; H D^{q-1}]`.
pub fn observability_matrix(d: &DMatrix<f64>, h: &DMatrix<f64>) -> DMatrix<f64> {
    let q = d.nrows();
    let p = h.nrows();
    let mut out = DMatrix::zeros(p * q, q);
    let mut block = h.clone();
    for k in 0..q {
        out.view_mut((k * p, 0), (p, q)).copy_from(&block);
        block = &block * d;
    }
    out
}

/// `[B, D B, …, D^{q-1} B]`.
pub fn controllability_matrix(d: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let q = d.nrows();
    let c = b.ncols();
    let mut out = DMatrix::zeros(q, c * q);
    let mut block = b.clone();
    for k in 0..q {
        out.view_mut((0, k * c), (q, c)).copy_from(&block);
        block = d * &block;
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Admissibility {
    pub stable: bool,
    pub observable: bool,
    pub controllable: bool,
}

impl Admissibility {
    pub fn all(&self) -> bool {
        self.stable && self.observable && self.controllable
    }
}

/// Per-sensor stability, observability of `(D, H)` and controllability of
/// `(D, Q^{1/2})` at `x`. Reports only; callers decide whether to abort.
pub fn check_model_admissible(model: &dyn ModelFamily, x: &[f64]) -> Result<Vec<Admissibility>> {
    model.validate_at(x)?;
    let q = model.state_dim();
    (0..model.sensor_count())
        .map(|i| {
            let d = model.transition(i, x);
            let h = model.observation(i);
            let lw = noise_factor(&model.process_cov(i, x), "Q")?;
            Ok(Admissibility {
                stable: spectral_radius(&d)? < 1.0 - STABILITY_MARGIN,
                observable: numerical_rank(&observability_matrix(&d, &h)) == q,
                controllable: numerical_rank(&controllability_matrix(&d, &lw)) == q,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar(d: f64, q: f64, r: f64) -> AffineFamily {
        let one = |v: f64| DMatrix::from_element(1, 1, v);
        AffineFamily::new(
            vec![AffineSensor {
                transition_base: one(d),
                transition_terms: vec![],
                observation: one(1.0),
                process_base: one(q),
                process_terms: vec![],
                measurement_cov: one(r),
            }],
            ParamBox::new(vec![], vec![]).unwrap(),
        )
        .unwrap()
    }

    struct WithInitial(AffineFamily, f64);

    impl ModelFamily for WithInitial {
        fn sensor_count(&self) -> usize {
            self.0.sensor_count()
        }
        fn state_dim(&self) -> usize {
            self.0.state_dim()
        }
        fn obs_dim(&self, s: usize) -> usize {
            self.0.obs_dim(s)
        }
        fn param_dim(&self) -> usize {
            self.0.param_dim()
        }
        fn transition(&self, s: usize, x: &[f64]) -> DMatrix<f64> {
            self.0.transition(s, x)
        }
        fn observation(&self, s: usize) -> DMatrix<f64> {
            self.0.observation(s)
        }
        fn process_cov(&self, s: usize, x: &[f64]) -> DMatrix<f64> {
            self.0.process_cov(s, x)
        }
        fn measurement_cov(&self, s: usize) -> DMatrix<f64> {
            self.0.measurement_cov(s)
        }
        fn feasible_box(&self) -> &ParamBox {
            self.0.feasible_box()
        }
        fn initial_state(&self, _: usize) -> DVector<f64> {
            DVector::from_element(1, self.1)
        }
    }

    #[test]
    fn noise_free_geometric_decay() {
        let model = WithInitial(scalar(0.5, 0.0, 0.0), 1.0);
        let traj = simulate_trajectory(&model, &[], 30, 3).unwrap();
        for (k, r) in traj.measurements[0].iter().enumerate() {
            assert_eq!(r[0], 0.5f64.powi(k as i32 + 1));
        }
    }

    #[test]
    fn same_seed_same_trajectory() {
        let model = AffineFamily::random(
            RandomFamilySpec {
                sensors: 3,
                state_dim: 2,
                obs_dim: 1,
                param_dim: 2,
            },
            5,
        );
        let a = simulate_trajectory(&model, &[0.3, 0.6], 200, 9).unwrap();
        let b = simulate_trajectory(&model, &[0.3, 0.6], 200, 9).unwrap();
        assert_eq!(a, b);
        let c = simulate_trajectory(&model, &[0.3, 0.6], 200, 10).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn white_noise_variance() {
        let model = scalar(0.0, 1.0, 0.0);
        let traj = simulate_trajectory(&model, &[], 100_000, 1).unwrap();
        let r = &traj.measurements[0];
        let n = r.len() as f64;
        let mean = r.iter().map(|v| v[0]).sum::<f64>() / n;
        let var = r.iter().map(|v| (v[0] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert!((var - 1.0).abs() < 0.03, "sample variance {var}");
    }

    #[test]
    fn rejects_indefinite_covariance() {
        let bad = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-6]);
        assert!(matches!(noise_factor(&bad, "Q"), Err(Error::NotPsd { .. })));
        let ok = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1e-12]);
        let l = noise_factor(&ok, "Q").unwrap();
        assert!((&l * l.transpose() - DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, 0.0])).amax() < 1e-9);
    }

    #[test]
    fn semidefinite_factor_reconstructs() {
        let v = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, -1.0]);
        let cov = &v * v.transpose();
        let l = noise_factor(&cov, "Q").unwrap();
        assert!((&l * l.transpose() - cov).amax() < 1e-12);
    }

    #[test]
    fn spectral_radius_examples() {
        assert!((spectral_radius(&DMatrix::identity(3, 3)).unwrap() - 1.0).abs() < 1e-12);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.2]));
        assert!((spectral_radius(&d).unwrap() - 0.5).abs() < 1e-12);
        let rot = DMatrix::from_row_slice(2, 2, &[0.0, -0.8, 0.8, 0.0]);
        assert!((spectral_radius(&rot).unwrap() - 0.8).abs() < 1e-12);
        assert!(matches!(
            spectral_radius(&DMatrix::zeros(2, 3)),
            Err(Error::NonSquare { .. })
        ));
    }

    #[test]
    fn admissibility_scalar_cases() {
        let ok = check_model_admissible(&scalar(0.5, 1.0, 1.0), &[]).unwrap();
        assert!(ok[0].all());
        let unit = check_model_admissible(&scalar(1.0, 1.0, 1.0), &[]).unwrap();
        assert!(!unit[0].stable);
        assert!(unit[0].observable && unit[0].controllable);
        let noiseless = check_model_admissible(&scalar(0.5, 0.0, 1.0), &[]).unwrap();
        assert!(!noiseless[0].controllable);
    }

    #[test]
    fn random_family_is_stable_on_box_corners() {
        let model = AffineFamily::random(
            RandomFamilySpec {
                sensors: 4,
                state_dim: 3,
                obs_dim: 2,
                param_dim: 2,
            },
            17,
        );
        for x in [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [1.0, 1.0]] {
            for i in 0..4 {
                assert!(spectral_radius(&model.transition(i, &x)).unwrap() < 0.8);
            }
        }
    }

    #[test]
    fn stacking_groups_concatenates() {
        let traj = Trajectory {
            measurements: vec![
                vec![DVector::from_vec(vec![1.0]), DVector::from_vec(vec![2.0])],
                vec![DVector::from_vec(vec![3.0]), DVector::from_vec(vec![4.0])],
            ],
            states: None,
            seed: 0,
        };
        let stacked = traj.stack_groups(&[vec![1, 0]]);
        assert_eq!(stacked.measurements[0][1].as_slice(), &[4.0, 2.0]);
    }

    #[test]
    fn box_checks() {
        assert!(ParamBox::new(vec![1.0], vec![0.0]).is_err());
        let b = ParamBox::new(vec![0.0, 0.0], vec![100.0, 100.0]).unwrap();
        assert!(b.contains(&[37.0, 48.0]));
        assert_eq!(b.centroid(), vec![50.0, 50.0]);
    }
}
