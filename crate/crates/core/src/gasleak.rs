//! Gas leak in a rectangular warehouse with insulated walls.
//!
//! A point source at `x` releases gas at a piecewise-constant intensity
//! `I(k)` that follows `I(k+1) = ρ I(k) + S(k)`. Expanding the diffusion
//! Green's function in cosine modes and truncating to `n̄1 × n̄2` modes gives a
//! finite state-space model shared by all sensors:
//!
//! ```text
//! θ = [Θ'_0, Θ'_{1,1}, …, Θ'_{1,n̄2}, Θ'_{2,1}, …, Θ'_{n̄1,n̄2}, I]
//! θ(k+1) = [D' ρB'(x); 0 ρ] θ(k) + [B'(x); 1] S(k)
//! r_s(k+1) = [1 P(s,1,1) … P(s,n̄1,n̄2) 0] θ(k+1) + N_s(k+1)
//! ```
//!
//! Mode `(n1, n2)` sits at state index `1 + (n1−1)·n̄2 + (n2−1)`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statespace::{ModelFamily, ParamBox, Trajectory};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WarehouseScenario {
    /// Side lengths `(l1, l2)`.
    pub size: [f64; 2],
    pub diffusivity: f64,
    /// AR(1) coefficient of the intensity.
    pub intensity_ar: f64,
    /// Variance of the intensity innovation `S(k)`.
    pub intensity_noise_var: f64,
    /// Variance of each sensor's measurement noise.
    pub measurement_noise_var: f64,
    pub sample_interval: f64,
    /// Retained cosine modes per axis `(n̄1, n̄2)`.
    pub modes: [usize; 2],
    /// True source location.
    pub source: [f64; 2],
    pub initial_intensity: f64,
}

impl WarehouseScenario {
    /// The full-scale numerical example: 100×100 room, 15×15 modes.
    pub fn reference() -> Self {
        Self {
            size: [100.0, 100.0],
            diffusivity: 1.0,
            intensity_ar: 0.99,
            intensity_noise_var: 10.0,
            measurement_noise_var: 0.1,
            sample_interval: 10.0,
            modes: [15, 15],
            source: [37.0, 48.0],
            initial_intensity: 100.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidInput(msg));
        if !self.size.iter().all(|&l| l > 0.0 && l.is_finite()) {
            return bad(format!("warehouse size {:?} must be positive", self.size));
        }
        if !(self.diffusivity >= 0.0 && self.diffusivity.is_finite()) {
            return bad("diffusivity must be nonnegative".into());
        }
        if !(self.intensity_ar > 0.0 && self.intensity_ar <= 1.0) {
            return bad(format!("intensity AR coefficient {} outside (0, 1]", self.intensity_ar));
        }
        if !(self.intensity_noise_var >= 0.0 && self.measurement_noise_var >= 0.0) {
            return bad("noise variances must be nonnegative".into());
        }
        if !(self.sample_interval > 0.0 && self.sample_interval.is_finite()) {
            return bad("sample interval must be positive".into());
        }
        if self.modes.contains(&0) {
            return bad("mode truncation must be at least 1 per axis".into());
        }
        if !(0..2).all(|a| self.source[a] > 0.0 && self.source[a] < self.size[a]) {
            return bad(format!("source {:?} outside the open warehouse", self.source));
        }
        if !self.initial_intensity.is_finite() {
            return bad("initial intensity must be finite".into());
        }
        Ok(())
    }

    pub fn bounds(&self) -> ParamBox {
        ParamBox {
            lo: vec![0.0, 0.0],
            hi: self.size.to_vec(),
        }
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (0..2).all(|a| p[a] >= 0.0 && p[a] <= self.size[a])
    }

    /// `Δ / (l1 l2)`: contribution of one unit of intensity to the mean concentration.
    fn uniform_gain(&self) -> f64 {
        self.sample_interval / (self.size[0] * self.size[1])
    }
}

/// `β_{n1,n2} = exp(−ν π² (n1²/l1² + n2²/l2²))`.
pub fn beta(n1: usize, n2: usize, nu: f64, l1: f64, l2: f64) -> f64 {
    log_beta(n1, n2, nu, l1, l2).exp()
}

fn log_beta(n1: usize, n2: usize, nu: f64, l1: f64, l2: f64) -> f64 {
    let (a, b) = (n1 as f64 / l1, n2 as f64 / l2);
    -nu * PI * PI * (a * a + b * b)
}

/// `∫₀^Δ β^{Δ−τ} dτ = (β^Δ − 1)/ln β`, with limit `Δ` as `ln β → 0`.
fn interval_integral(log_beta: f64, dt: f64) -> f64 {
    if log_beta == 0.0 {
        dt
    } else {
        (log_beta * dt).exp_m1() / log_beta
    }
}

fn cos_product(p: [f64; 2], n: (usize, usize), size: [f64; 2]) -> f64 {
    (n.0 as f64 * PI * p[0] / size[0]).cos() * (n.1 as f64 * PI * p[1] / size[1]).cos()
}

#[derive(Debug, Clone)]
struct Mode {
    n: (usize, usize),
    /// `β^Δ`.
    decay: f64,
    /// `(β^Δ − 1)/ln β`.
    integral: f64,
}

fn mode_table(s: &WarehouseScenario, modes: [usize; 2]) -> Vec<Mode> {
    let mut out = Vec::with_capacity(modes[0] * modes[1]);
    for n1 in 1..=modes[0] {
        for n2 in 1..=modes[1] {
            let lb = log_beta(n1, n2, s.diffusivity, s.size[0], s.size[1]);
            out.push(Mode {
                n: (n1, n2),
                decay: (lb * s.sample_interval).exp(),
                integral: interval_integral(lb, s.sample_interval),
            });
        }
    }
    out
}

/// Concentration `C(y, kΔ; x)` from the truncated Green's series, where
/// `intensity[j−1]` is the intensity `I(j)` held over slot `j` and
/// `k = intensity.len()`.
pub fn greens_concentration(
    scenario: &WarehouseScenario,
    y: [f64; 2],
    x: [f64; 2],
    intensity: &[f64],
    modes: [usize; 2],
) -> f64 {
    let kernel = greens_kernel(scenario, y, x, modes, intensity.len());
    let k = intensity.len();
    intensity.iter().enumerate().map(|(j, &i)| i * kernel[k - 1 - j]).sum()
}

/// Response at `y` after `lag` further slots to one slot of unit intensity at `x`.
fn greens_kernel(scenario: &WarehouseScenario, y: [f64; 2], x: [f64; 2], modes: [usize; 2], lags: usize) -> Vec<f64> {
    let area = scenario.size[0] * scenario.size[1];
    let table = mode_table(scenario, modes);
    let weights: Vec<f64> = table
        .iter()
        .map(|m| 4.0 / area * cos_product(y, m.n, scenario.size) * cos_product(x, m.n, scenario.size) * m.integral)
        .collect();
    let mut powers: Vec<f64> = vec![1.0; table.len()];
    (0..lags)
        .map(|_| {
            let v = scenario.uniform_gain() + weights.iter().zip(&powers).map(|(w, p)| w * p).sum::<f64>();
            for (p, m) in powers.iter_mut().zip(&table) {
                *p *= m.decay;
            }
            v
        })
        .collect()
}

/// Noise-free concentrations at every position for slots `1..=intensity.len()`,
/// evaluated directly from the Green's series. `out[s][k]` is `C(y_s, (k+1)Δ)`.
pub fn greens_measurements(
    scenario: &WarehouseScenario,
    positions: &[[f64; 2]],
    x: [f64; 2],
    intensity: &[f64],
) -> Vec<Vec<f64>> {
    let n = intensity.len();
    positions
        .iter()
        .map(|&y| {
            let kernel = greens_kernel(scenario, y, x, scenario.modes, n);
            (1..=n)
                .map(|k| (0..k).map(|j| intensity[j] * kernel[k - 1 - j]).sum())
                .collect()
        })
        .collect()
}

/// The truncated state-space family. Each "sensor" of the family is a group of
/// physical sensors whose measurements are stacked; by default every group is
/// a single sensor.
#[derive(Debug, Clone)]
pub struct GasLeakModel {
    scenario: WarehouseScenario,
    positions: Vec<[f64; 2]>,
    groups: Vec<Vec<usize>>,
    modes: Vec<Mode>,
    /// Observation row `[1, P(s, ·)…, 0]` of each physical sensor.
    rows: Vec<DVector<f64>>,
    bounds: ParamBox,
}

pub fn build_gasleak_model(scenario: WarehouseScenario, positions: Vec<[f64; 2]>) -> Result<GasLeakModel> {
    GasLeakModel::new(scenario, positions)
}

impl GasLeakModel {
    pub fn new(scenario: WarehouseScenario, positions: Vec<[f64; 2]>) -> Result<Self> {
        scenario.validate()?;
        if positions.is_empty() {
            return Err(Error::InvalidInput("gas-leak model needs at least one sensor".into()));
        }
        if let Some(p) = positions.iter().find(|p| !scenario.contains(**p)) {
            return Err(Error::InvalidInput(format!("sensor position {p:?} outside the warehouse")));
        }
        let modes = mode_table(&scenario, scenario.modes);
        let q = modes.len() + 2;
        let rows = positions
            .iter()
            .map(|&s| {
                let mut row = DVector::zeros(q);
                row[0] = 1.0;
                for (g, m) in modes.iter().enumerate() {
                    row[g + 1] = cos_product(s, m.n, scenario.size);
                }
                row
            })
            .collect();
        Ok(Self {
            groups: (0..positions.len()).map(|i| vec![i]).collect(),
            bounds: scenario.bounds(),
            scenario,
            positions,
            modes,
            rows,
        })
    }

    pub fn scenario(&self) -> &WarehouseScenario {
        &self.scenario
    }

    pub fn positions(&self) -> &[[f64; 2]] {
        &self.positions
    }

    /// Physical sensors behind each family sensor.
    pub fn groups(&self) -> &[Vec<usize>] {
        &self.groups
    }

    /// State index of mode `(n1, n2)`, both 1-based.
    pub fn mode_index(&self, n1: usize, n2: usize) -> usize {
        1 + (n1 - 1) * self.scenario.modes[1] + (n2 - 1)
    }

    /// `B'(x)`: response of `Θ'` to one slot of intensity.
    pub fn input_vector(&self, x: &[f64]) -> DVector<f64> {
        let area = self.scenario.size[0] * self.scenario.size[1];
        let src = [x[0], x[1]];
        let mut b = DVector::zeros(self.modes.len() + 1);
        b[0] = self.scenario.uniform_gain();
        for (g, m) in self.modes.iter().enumerate() {
            b[g + 1] = 4.0 / area * cos_product(src, m.n, self.scenario.size) * m.integral;
        }
        b
    }

    /// `∂B'/∂x^(ℓ)` for `ℓ = 1, 2`.
    pub fn input_vector_derivative(&self, x: &[f64]) -> [DVector<f64>; 2] {
        let [l1, l2] = self.scenario.size;
        let area = l1 * l2;
        let mut out = [DVector::zeros(self.modes.len() + 1), DVector::zeros(self.modes.len() + 1)];
        for (g, m) in self.modes.iter().enumerate() {
            let (k1, k2) = (m.n.0 as f64 * PI / l1, m.n.1 as f64 * PI / l2);
            let scale = 4.0 / area * m.integral;
            out[0][g + 1] = -scale * k1 * (k1 * x[0]).sin() * (k2 * x[1]).cos();
            out[1][g + 1] = -scale * (k1 * x[0]).cos() * k2 * (k2 * x[1]).sin();
        }
        out
    }

    /// Noise input column `[B'(x); 1]`.
    fn noise_column(&self, x: &[f64]) -> DVector<f64> {
        let b = self.input_vector(x);
        let mut col = DVector::zeros(b.len() + 1);
        col.rows_mut(0, b.len()).copy_from(&b);
        col[b.len()] = 1.0;
        col
    }

    fn mode_decays(&self) -> DVector<f64> {
        let mut d = DVector::zeros(self.modes.len() + 1);
        d[0] = 1.0;
        for (g, m) in self.modes.iter().enumerate() {
            d[g + 1] = m.decay;
        }
        d
    }
}

impl ModelFamily for GasLeakModel {
    fn sensor_count(&self) -> usize {
        self.groups.len()
    }
    fn state_dim(&self) -> usize {
        self.modes.len() + 2
    }
    fn obs_dim(&self, sensor: usize) -> usize {
        self.groups[sensor].len()
    }
    fn param_dim(&self) -> usize {
        2
    }
    fn transition(&self, _sensor: usize, x: &[f64]) -> DMatrix<f64> {
        let q = self.state_dim();
        let rho = self.scenario.intensity_ar;
        let mut d = DMatrix::zeros(q, q);
        for (g, v) in self.mode_decays().iter().enumerate() {
            d[(g, g)] = *v;
        }
        let b = self.input_vector(x);
        for (g, v) in b.iter().enumerate() {
            d[(g, q - 1)] = rho * v;
        }
        d[(q - 1, q - 1)] = rho;
        d
    }
    fn observation(&self, sensor: usize) -> DMatrix<f64> {
        let rows: Vec<_> = self.groups[sensor].iter().map(|&i| self.rows[i].transpose()).collect();
        DMatrix::from_rows(&rows)
    }
    fn process_cov(&self, _sensor: usize, x: &[f64]) -> DMatrix<f64> {
        let col = self.noise_column(x);
        &col * col.transpose() * self.scenario.intensity_noise_var
    }
    fn measurement_cov(&self, sensor: usize) -> DMatrix<f64> {
        let p = self.groups[sensor].len();
        DMatrix::identity(p, p) * self.scenario.measurement_noise_var
    }
    fn feasible_box(&self) -> &ParamBox {
        &self.bounds
    }
    fn initial_state(&self, _sensor: usize) -> DVector<f64> {
        let mut s = DVector::zeros(self.state_dim());
        s[self.state_dim() - 1] = self.scenario.initial_intensity;
        s
    }
}

/// Regroups the family's sensors: cluster `c` observes the stacked
/// measurements of every sensor listed in `clusters[c]`.
pub fn cluster_stack(model: &GasLeakModel, clusters: &[Vec<usize>]) -> Result<GasLeakModel> {
    let m = model.sensor_count();
    let mut seen = vec![false; m];
    for c in clusters {
        if c.is_empty() {
            return Err(Error::InvalidInput("empty cluster".into()));
        }
        for &i in c {
            if i >= m || std::mem::replace(&mut seen[i], true) {
                return Err(Error::InvalidInput(format!("clusters do not partition 0..{m}")));
            }
        }
    }
    if seen.iter().any(|s| !s) {
        return Err(Error::InvalidInput(format!("clusters do not cover 0..{m}")));
    }
    let mut out = model.clone();
    out.groups = clusters
        .iter()
        .map(|c| c.iter().flat_map(|&i| model.groups[i].iter().copied()).collect())
        .collect();
    Ok(out)
}

/// Output of a leak simulation.
#[derive(Debug, Clone)]
pub struct LeakRun {
    /// Measurements grouped like the model's sensors.
    pub trajectory: Trajectory,
    /// Noise-free concentrations per physical sensor, `[s][k]` at slot `k+1`.
    pub clean: Vec<Vec<f64>>,
    /// `I(0..=N)`.
    pub intensity: Vec<f64>,
    /// `θ(0..=N)`.
    pub states: Vec<DVector<f64>>,
}

/// Simulates the leak at the scenario's true source through the state-space
/// recursion. Each slot draws `S(k)` first, then one noise sample per physical
/// sensor in index order.
pub fn simulate_leak(model: &GasLeakModel, horizon: usize, seed: u64) -> Result<LeakRun> {
    let s = &model.scenario;
    let x = s.source.to_vec();
    let b = model.input_vector(&x);
    let decays = model.mode_decays();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (sig_s, sig_n) = (s.intensity_noise_var.sqrt(), s.measurement_noise_var.sqrt());

    let mut theta = DVector::zeros(b.len());
    let mut level = s.initial_intensity;
    let mut intensity = vec![level];
    let mut states = vec![model.initial_state(0)];
    let np = model.positions.len();
    let mut raw = vec![Vec::with_capacity(horizon); np];
    let mut clean = vec![Vec::with_capacity(horizon); np];
    for _ in 0..horizon {
        let shock: f64 = StandardNormal.sample(&mut rng);
        level = s.intensity_ar * level + sig_s * shock;
        theta = theta.component_mul(&decays) + &b * level;
        for (i, row) in model.rows.iter().enumerate() {
            let c = row.rows(0, theta.len()).dot(&theta);
            let noise: f64 = StandardNormal.sample(&mut rng);
            clean[i].push(c);
            raw[i].push(DVector::from_element(1, c + sig_n * noise));
        }
        intensity.push(level);
        let mut full = DVector::zeros(theta.len() + 1);
        full.rows_mut(0, theta.len()).copy_from(&theta);
        full[theta.len()] = level;
        states.push(full);
    }
    let single = Trajectory {
        measurements: raw,
        states: None,
        seed,
    };
    Ok(LeakRun {
        trajectory: single.stack_groups(&model.groups),
        clean,
        intensity,
        states,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid_positions(n: usize, size: f64) -> Vec<[f64; 2]> {
        let step = size / n as f64;
        let mut out = Vec::new();
        for i in 0..n {
            for j in 0..n {
                out.push([step * (i as f64 + 0.5), step * (j as f64 + 0.5)]);
            }
        }
        out
    }

    fn small() -> WarehouseScenario {
        WarehouseScenario {
            modes: [5, 5],
            ..WarehouseScenario::reference()
        }
    }

    #[test]
    fn beta_examples() {
        assert_eq!(beta(3, 4, 0.0, 100.0, 100.0), 1.0);
        assert!((beta(1, 1, 1.0, PI, PI) - (-2.0f64).exp()).abs() < 1e-15);
        let expect = (-2.0 * PI * PI * 1e-4).exp();
        assert!((beta(1, 1, 1.0, 100.0, 100.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn interval_integral_limits() {
        assert_eq!(interval_integral(0.0, 10.0), 10.0);
        let lb = -1e-12;
        assert!((interval_integral(lb, 10.0) - 10.0).abs() < 1e-9);
        let lb = -0.3;
        let direct = ((lb * 2.0f64).exp() - 1.0) / lb;
        assert!((interval_integral(lb, 2.0) - direct).abs() < 1e-14);
    }

    #[test]
    fn reference_dimensions() {
        let model = GasLeakModel::new(WarehouseScenario::reference(), vec![[10.0, 10.0]]).unwrap();
        assert_eq!(model.state_dim(), 227);
        let d = model.transition(0, &[37.0, 48.0]);
        assert_eq!(d[(0, 0)], 1.0);
        let g = model.mode_index(2, 3);
        assert_eq!(g, 1 + 15 + 2);
        assert!((d[(g, g)] - beta(2, 3, 1.0, 100.0, 100.0).powf(10.0)).abs() < 1e-14);
        assert_eq!(d[(226, 226)], 0.99);
    }

    #[test]
    fn centre_source_kills_odd_modes() {
        let model = GasLeakModel::new(small(), vec![[10.0, 10.0]]).unwrap();
        let b = model.input_vector(&[50.0, 50.0]);
        for n1 in (1..=5).step_by(2) {
            for n2 in 1..=5 {
                assert!(b[model.mode_index(n1, n2)].abs() < 1e-13 * b.amax());
            }
        }
    }

    #[test]
    fn zero_time_gives_zero_concentration() {
        assert_eq!(greens_concentration(&small(), [10.0, 20.0], [37.0, 48.0], &[], [5, 5]), 0.0);
    }

    #[test]
    fn fast_diffusion_spreads_mass_uniformly() {
        let s = WarehouseScenario {
            diffusivity: 50.0,
            ..small()
        };
        let mut intensity = vec![0.0; 200];
        intensity[0] = 1.0;
        let uniform = s.sample_interval / (s.size[0] * s.size[1]);
        for y in [[5.0, 5.0], [50.0, 50.0], [90.0, 20.0]] {
            let c = greens_concentration(&s, y, [37.0, 48.0], &intensity, [5, 5]);
            assert!(((c - uniform) / uniform).abs() < 0.01, "{c} vs {uniform}");
        }
    }

    #[test]
    fn integrated_concentration_equals_injected_mass() {
        let s = small();
        let intensity: Vec<f64> = (0..10).map(|k| 100.0 * 0.99f64.powi(k)).collect();
        let cells = 100;
        let h = s.size[0] / cells as f64;
        let mut total = 0.0;
        for i in 0..cells {
            for j in 0..cells {
                let y = [h * (i as f64 + 0.5), h * (j as f64 + 0.5)];
                total += greens_concentration(&s, y, s.source, &intensity, s.modes) * h * h;
            }
        }
        let mass = s.sample_interval * intensity.iter().sum::<f64>();
        assert!(((total - mass) / mass).abs() < 5e-3, "{total} vs {mass}");
    }

    #[test]
    fn dual_generators_agree() {
        let s = WarehouseScenario {
            intensity_noise_var: 0.0,
            measurement_noise_var: 0.0,
            intensity_ar: 1.0,
            ..small()
        };
        let model = GasLeakModel::new(s.clone(), grid_positions(3, 100.0)).unwrap();
        let run = simulate_leak(&model, 100, 1).unwrap();
        assert!(run.intensity.iter().all(|&i| i == 100.0));
        let direct = greens_measurements(&s, model.positions(), s.source, &run.intensity[1..]);
        for (a, b) in run.clean.iter().zip(&direct) {
            for (u, v) in a.iter().zip(b) {
                assert!((u - v).abs() <= 1e-6 * v.abs().max(1e-12), "{u} vs {v}");
            }
        }
    }

    #[test]
    fn silent_source_gives_zero_measurements() {
        let s = WarehouseScenario {
            intensity_noise_var: 0.0,
            measurement_noise_var: 0.0,
            initial_intensity: 0.0,
            ..small()
        };
        let model = GasLeakModel::new(s, grid_positions(2, 100.0)).unwrap();
        let run = simulate_leak(&model, 50, 3).unwrap();
        assert!(run.trajectory.measurements.iter().flatten().all(|r| r[0] == 0.0));
    }

    #[test]
    fn intensity_is_ar1() {
        let s = WarehouseScenario {
            initial_intensity: 0.0,
            ..small()
        };
        let model = GasLeakModel::new(s.clone(), vec![[1.0, 1.0]]).unwrap();
        let finals: Vec<f64> = (0..200)
            .map(|seed| *simulate_leak(&model, 1000, seed).unwrap().intensity.last().unwrap())
            .collect();
        let rho2 = s.intensity_ar * s.intensity_ar;
        let var = s.intensity_noise_var * (1.0 - rho2.powi(1000)) / (1.0 - rho2);
        let mean = finals.iter().sum::<f64>() / finals.len() as f64;
        let sample_var = finals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (finals.len() - 1) as f64;
        assert!(mean.abs() < 4.0 * (var / 200.0).sqrt(), "mean {mean}");
        assert!((sample_var / var - 1.0).abs() < 0.3, "variance {sample_var} vs {var}");
    }

    #[test]
    fn simulation_is_reproducible() {
        let model = GasLeakModel::new(small(), grid_positions(2, 100.0)).unwrap();
        let a = simulate_leak(&model, 30, 9).unwrap();
        let b = simulate_leak(&model, 30, 9).unwrap();
        assert_eq!(a.trajectory, b.trajectory);
    }

    #[test]
    fn state_space_matches_model_matrices() {
        let model = GasLeakModel::new(small(), grid_positions(2, 100.0)).unwrap();
        let run = simulate_leak(&model, 20, 5).unwrap();
        let d = model.transition(0, &model.scenario().source);
        let col = model.noise_column(&model.scenario().source);
        for k in 0..20 {
            let shock = run.intensity[k + 1] - model.scenario().intensity_ar * run.intensity[k];
            let next = &d * &run.states[k] + &col * shock;
            assert!((next - &run.states[k + 1]).amax() < 1e-9);
        }
    }

    #[test]
    fn clusters_stack_rows() {
        let model = GasLeakModel::new(small(), grid_positions(3, 100.0)).unwrap();
        let clusters: Vec<Vec<usize>> = (0..3).map(|c| vec![3 * c, 3 * c + 1, 3 * c + 2]).collect();
        let stacked = cluster_stack(&model, &clusters).unwrap();
        assert_eq!(stacked.sensor_count(), 3);
        assert_eq!(stacked.obs_dim(1), 3);
        let h = stacked.observation(1);
        assert_eq!(h.row(2), model.observation(5).row(0));
        assert_eq!(stacked.measurement_cov(0), DMatrix::identity(3, 3) * 0.1);

        let singletons: Vec<Vec<usize>> = (0..9).map(|i| vec![i]).collect();
        let same = cluster_stack(&model, &singletons).unwrap();
        assert_eq!(same.observation(4), model.observation(4));

        assert!(cluster_stack(&model, &[vec![0, 1], vec![1, 2]]).is_err());
        assert!(cluster_stack(&model, &[vec![0, 1]]).is_err());
    }

    #[test]
    fn twenty_seven_sensors_in_nine_clusters() {
        let mut positions = Vec::new();
        let mut clusters = Vec::new();
        for (c, p) in grid_positions(3, 100.0).into_iter().enumerate() {
            positions.extend([p, [p[0] + 3.0, p[1]], [p[0], p[1] - 3.0]]);
            clusters.push(vec![3 * c, 3 * c + 1, 3 * c + 2]);
        }
        let model = GasLeakModel::new(small(), positions).unwrap();
        let stacked = cluster_stack(&model, &clusters).unwrap();
        assert_eq!(stacked.sensor_count(), 9);
        assert!((0..9).all(|c| stacked.obs_dim(c) == 3));
    }

    #[test]
    fn input_derivative_matches_differences() {
        let model = GasLeakModel::new(small(), vec![[1.0, 1.0]]).unwrap();
        let x = [37.0, 48.0];
        let analytic = model.input_vector_derivative(&x);
        for l in 0..2 {
            let h = 1e-5;
            let mut up = x;
            let mut down = x;
            up[l] += h;
            down[l] -= h;
            let fd = (model.input_vector(&up) - model.input_vector(&down)) / (2.0 * h);
            assert!((fd - &analytic[l]).amax() < 1e-6);
        }
    }

    #[test]
    fn rejects_bad_scenarios() {
        let bad = WarehouseScenario {
            intensity_ar: 1.5,
            ..small()
        };
        assert!(GasLeakModel::new(bad, vec![[1.0, 1.0]]).is_err());
        assert!(GasLeakModel::new(small(), vec![[101.0, 1.0]]).is_err());
        assert!(GasLeakModel::new(small(), vec![]).is_err());
    }
}
