//! Projected recursive estimators: the centralized recursive prediction error
//! (RPE) method, the generic incremental gradient method and its combination,
//! incremental RPE (IRPE), where the iterate travels around a ring of sensors
//! once per time slot.
//!
//! Sign convention: with innovation `ε = r − h`, every update is
//! `x ← P_X[x + α (ξ^(ℓ))ᵀ ε]`, a descent step on `‖ε‖²` with the factor 2
//! absorbed into `α`.

pub mod lms;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gradients::{
    extended_step, finite_difference_derivatives, predictor_at, DerivativeOptions, MatrixDerivatives,
    PredictorGradientState,
};
use crate::statespace::{ModelFamily, ParamBox, Trajectory};

/// Euclidean projection onto a box (componentwise clamp).
pub fn project(x: &DVector<f64>, bounds: &ParamBox) -> DVector<f64> {
    DVector::from_iterator(
        x.len(),
        x.iter()
            .zip(bounds.lo.iter().zip(&bounds.hi))
            .map(|(&v, (&lo, &hi))| v.max(lo).min(hi)),
    )
}

/// `α_k = μ / (k + k0)`, so `k α_k → μ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub mu: f64,
    #[serde(default)]
    pub k0: u64,
}

impl StepSchedule {
    pub fn new(mu: f64, k0: u64) -> Result<Self> {
        if !(mu > 0.0 && mu.is_finite()) {
            return Err(Error::InvalidInput(format!("step constant must be positive, got {mu}")));
        }
        Ok(Self { mu, k0 })
    }

    /// Step size for iteration `k ≥ 1`.
    pub fn alpha(&self, k: u64) -> f64 {
        debug_assert!(k >= 1);
        self.mu / (k + self.k0) as f64
    }
}

/// One cycle of the projected incremental gradient method with exact gradients:
/// `z_i = P_X[z_{i−1} − α ∇f_i(z_{i−1})]` for `i = 1..m`; returns `z_m`.
pub fn incremental_gradient_step<F>(x: &DVector<f64>, grads: &[F], alpha: f64, bounds: &ParamBox) -> DVector<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    grads
        .iter()
        .fold(x.clone(), |z, grad| project(&(&z - grad(&z) * alpha), bounds))
}

/// Predictor matrices and their parameter derivatives at one point.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorBundle {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub derivs: MatrixDerivatives,
}

/// Anything that can produce a predictor bundle at a parameter value.
pub trait PredictorSource {
    fn state_dim(&self) -> usize;
    fn obs_dim(&self) -> usize;
    fn param_dim(&self) -> usize;
    fn observation(&self) -> DMatrix<f64>;
    fn bundle(&self, x: &[f64]) -> Result<PredictorBundle>;
}

/// The predictor family of one sensor of a [`ModelFamily`].
#[derive(Clone, Copy)]
pub struct SensorPredictor<'a> {
    pub model: &'a dyn ModelFamily,
    pub sensor: usize,
    pub opts: DerivativeOptions,
}

impl<'a> SensorPredictor<'a> {
    pub fn new(model: &'a dyn ModelFamily, sensor: usize, opts: DerivativeOptions) -> Self {
        Self { model, sensor, opts }
    }

    /// One source per sensor, in sensor index order.
    pub fn all(model: &'a dyn ModelFamily, opts: DerivativeOptions) -> Vec<Self> {
        (0..model.sensor_count()).map(|i| Self::new(model, i, opts)).collect()
    }
}

impl PredictorSource for SensorPredictor<'_> {
    fn state_dim(&self) -> usize {
        self.model.state_dim()
    }
    fn obs_dim(&self) -> usize {
        self.model.obs_dim(self.sensor)
    }
    fn param_dim(&self) -> usize {
        self.model.param_dim()
    }
    fn observation(&self) -> DMatrix<f64> {
        self.model.observation(self.sensor)
    }
    fn bundle(&self, x: &[f64]) -> Result<PredictorBundle> {
        let pred = predictor_at(self.model, self.sensor, x, self.opts.dare)?;
        let derivs = match self.model.gain_derivatives(self.sensor, x) {
            Some(d) => d?,
            None => finite_difference_derivatives(self.model, self.sensor, x, Some(&pred), self.opts)?,
        };
        Ok(PredictorBundle {
            f: pred.f,
            g: pred.g,
            h: pred.h,
            derivs,
        })
    }
}

/// Several sources with independent states observed jointly: predictor
/// matrices are block-diagonal and the measurement is the stacked vector.
pub struct JointSource<'a, S> {
    parts: &'a [S],
}

impl<'a, S: PredictorSource> JointSource<'a, S> {
    pub fn new(parts: &'a [S]) -> Result<Self> {
        let d = parts
            .first()
            .ok_or_else(|| Error::InvalidInput("joint source needs parts".into()))?
            .param_dim();
        if parts.iter().any(|p| p.param_dim() != d) {
            return Err(Error::DimensionMismatch("joint source parameter dimensions".into()));
        }
        Ok(Self { parts })
    }
}

pub(crate) fn block_diagonal(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let (mut r, mut c) = (0, 0);
    for b in blocks {
        out.view_mut((r, c), b.shape()).copy_from(b);
        r += b.nrows();
        c += b.ncols();
    }
    out
}

impl<S: PredictorSource> PredictorSource for JointSource<'_, S> {
    fn state_dim(&self) -> usize {
        self.parts.iter().map(|p| p.state_dim()).sum()
    }
    fn obs_dim(&self) -> usize {
        self.parts.iter().map(|p| p.obs_dim()).sum()
    }
    fn param_dim(&self) -> usize {
        self.parts[0].param_dim()
    }
    fn observation(&self) -> DMatrix<f64> {
        let blocks: Vec<_> = self.parts.iter().map(|p| p.observation()).collect();
        block_diagonal(&blocks)
    }
    fn bundle(&self, x: &[f64]) -> Result<PredictorBundle> {
        let bundles = self
            .parts
            .iter()
            .enumerate()
            .map(|(i, p)| p.bundle(x).map_err(|e| Error::for_sensor(i, e)))
            .collect::<Result<Vec<_>>>()?;
        let collect = |pick: &dyn Fn(&PredictorBundle) -> &DMatrix<f64>| {
            block_diagonal(&bundles.iter().map(|b| pick(b).clone()).collect::<Vec<_>>())
        };
        let d = self.param_dim();
        Ok(PredictorBundle {
            f: collect(&|b| &b.f),
            g: collect(&|b| &b.g),
            h: collect(&|b| &b.h),
            derivs: MatrixDerivatives {
                df: (0..d).map(|l| collect(&|b| &b.derivs.df[l])).collect(),
                dg: (0..d).map(|l| collect(&|b| &b.derivs.dg[l])).collect(),
            },
        })
    }
}

/// Output of one prediction-error correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Correction {
    pub x: DVector<f64>,
    pub innovation: DVector<f64>,
}

/// `ε = r − h`, `x' = P_X[x + α ξᵀ ε]`, using outputs already held in `state`.
pub fn correct(
    x: &DVector<f64>,
    state: &PredictorGradientState,
    r: &DVector<f64>,
    alpha: f64,
    bounds: &ParamBox,
) -> Result<Correction> {
    if r.len() != state.h.len() || x.len() != state.param_dim() {
        return Err(Error::DimensionMismatch(format!(
            "correction with measurement {} (expected {}) and parameter {} (expected {})",
            r.len(),
            state.h.len(),
            x.len(),
            state.param_dim()
        )));
    }
    let innovation = r - &state.h;
    let raw = DVector::from_iterator(
        x.len(),
        x.iter()
            .zip(&state.xi)
            .map(|(&xl, xi)| xl + alpha * xi.dot(&innovation)),
    );
    Ok(Correction {
        x: project(&raw, bounds),
        innovation,
    })
}

/// Advances `(ψ, χ)` with the bundle evaluated at the freshly projected iterate.
pub fn advance(
    state: &PredictorGradientState,
    bundle: &PredictorBundle,
    r: &DVector<f64>,
) -> Result<PredictorGradientState> {
    extended_step(state, &bundle.f, &bundle.g, &bundle.h, &bundle.derivs, r)
}

/// Centralized RPE state.
#[derive(Debug, Clone, PartialEq)]
pub struct RpeState {
    pub x: DVector<f64>,
    pub grad: PredictorGradientState,
    pub step: u64,
}

impl RpeState {
    /// `x_0 = x_start`, `ψ_1 = 0`, `χ_1 = 0`.
    pub fn new(x_start: DVector<f64>, source: &dyn PredictorSource) -> Self {
        let grad = PredictorGradientState::zeros(source.state_dim(), source.param_dim(), &source.observation());
        Self {
            x: x_start,
            grad,
            step: 0,
        }
    }
}

/// One RPE step driven by `r(k+1)`; returns `‖ε_{k+1}‖²`.
///
/// Ordering: outputs `(h, ξ)` from the stored state are consumed first, the
/// iterate is corrected and projected, and only then is `(ψ, χ)` advanced with
/// matrices at the new iterate.
pub fn rpe_step(
    state: &mut RpeState,
    source: &dyn PredictorSource,
    r: &DVector<f64>,
    alpha: f64,
    bounds: &ParamBox,
) -> Result<f64> {
    let c = correct(&state.x, &state.grad, r, alpha, bounds)?;
    let bundle = source.bundle(c.x.as_slice())?;
    state.grad = advance(&state.grad, &bundle, r)?;
    state.x = c.x;
    state.step += 1;
    Ok(c.innovation.norm_squared())
}

/// Record of one sensor's update within a cycle.
#[derive(Debug, Clone, PartialEq)]
pub struct SubStep {
    pub sensor: usize,
    pub z: DVector<f64>,
    pub innovation_sq: f64,
    /// Whether the predictor bundle was rebuilt at `z` (false only with refresh stride > 1).
    pub refreshed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleRecord {
    pub cycle: u64,
    pub alpha: f64,
    pub substeps: Vec<SubStep>,
}

/// IRPE state: the circulating iterate and every sensor's private recursion.
#[derive(Debug, Clone)]
pub struct IrpeState {
    pub x: DVector<f64>,
    pub sensors: Vec<PredictorGradientState>,
    pub cycle: u64,
    pub ring: Vec<usize>,
    pub refresh_stride: usize,
    cache: Vec<Option<(PredictorBundle, usize)>>,
}

impl IrpeState {
    /// `x_0 = x_start`; every sensor starts from `ψ = 0`, `χ = 0`.
    pub fn new<S: PredictorSource>(x_start: DVector<f64>, sources: &[S], ring: Vec<usize>) -> Result<Self> {
        let m = sources.len();
        let mut seen = vec![false; m];
        if ring.len() != m || ring.iter().any(|&i| i >= m || std::mem::replace(&mut seen[i], true)) {
            return Err(Error::InvalidInput(format!("ring {ring:?} is not a permutation of 0..{m}")));
        }
        let sensors = sources
            .iter()
            .map(|s| PredictorGradientState::zeros(s.state_dim(), s.param_dim(), &s.observation()))
            .collect();
        Ok(Self {
            x: x_start,
            sensors,
            cycle: 0,
            ring,
            refresh_stride: 1,
            cache: vec![None; m],
        })
    }

    pub fn with_refresh_stride(mut self, stride: usize) -> Self {
        self.refresh_stride = stride.max(1);
        self
    }
}

/// One IRPE cycle for slot `k+1`: the iterate visits every sensor in ring
/// order, each correcting it with its own innovation and then advancing its
/// own `(ψ, χ)` at the corrected iterate. `measurements[i]` is `r_i(k+1)`.
pub fn irpe_cycle<S: PredictorSource>(
    state: &mut IrpeState,
    sources: &[S],
    measurements: &[DVector<f64>],
    alpha: f64,
    bounds: &ParamBox,
) -> Result<CycleRecord> {
    if measurements.len() != sources.len() || state.sensors.len() != sources.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} measurements for {} sensors",
            measurements.len(),
            sources.len()
        )));
    }
    let mut z = state.x.clone();
    let mut substeps = Vec::with_capacity(sources.len());
    for &i in &state.ring {
        let r = &measurements[i];
        let c = correct(&z, &state.sensors[i], r, alpha, bounds).map_err(|e| Error::for_sensor(i, e))?;
        let cached = match state.cache[i].take() {
            Some((b, age)) if age + 1 < state.refresh_stride => {
                state.cache[i] = Some((b.clone(), age + 1));
                Some(b)
            }
            _ => None,
        };
        let (bundle, refreshed) = match cached {
            Some(b) => (b, false),
            None => {
                let b = sources[i].bundle(c.x.as_slice()).map_err(|e| Error::for_sensor(i, e))?;
                if state.refresh_stride > 1 {
                    state.cache[i] = Some((b.clone(), 0));
                }
                (b, true)
            }
        };
        state.sensors[i] = advance(&state.sensors[i], &bundle, r).map_err(|e| Error::for_sensor(i, e))?;
        z = c.x;
        substeps.push(SubStep {
            sensor: i,
            z: z.clone(),
            innovation_sq: c.innovation.norm_squared(),
            refreshed,
        });
    }
    state.x = z;
    state.cycle += 1;
    Ok(CycleRecord {
        cycle: state.cycle,
        alpha,
        substeps,
    })
}

/// Empirical cost `f_N(x) = (1/N) Σ_k Σ_i ‖r_i(k) − g_{i,k}(x)‖²`, with each
/// sensor's predictor re-run from `φ_{i,1} = 0`.
pub fn empirical_cost(
    model: &dyn ModelFamily,
    trajectory: &Trajectory,
    x: &[f64],
    opts: DerivativeOptions,
) -> Result<f64> {
    let zeros: Vec<DVector<f64>> = (0..model.sensor_count())
        .map(|_| DVector::zeros(model.state_dim()))
        .collect();
    empirical_cost_from(model, trajectory, x, &zeros, opts)
}

/// [`empirical_cost`] with explicit initial predictor states `φ_{i,1}`.
pub fn empirical_cost_from(
    model: &dyn ModelFamily,
    trajectory: &Trajectory,
    x: &[f64],
    initial: &[DVector<f64>],
    opts: DerivativeOptions,
) -> Result<f64> {
    if trajectory.sensor_count() != model.sensor_count() || initial.len() != model.sensor_count() {
        return Err(Error::DimensionMismatch("trajectory does not match model".into()));
    }
    let n = trajectory.horizon();
    if n == 0 {
        return Err(Error::InvalidInput("empty trajectory".into()));
    }
    let mut total = 0.0;
    for (i, phi0) in initial.iter().enumerate() {
        let pred = predictor_at(model, i, x, opts.dare).map_err(|e| Error::for_sensor(i, e))?;
        let mut phi = phi0.clone();
        for r in &trajectory.measurements[i] {
            total += (r - &pred.h * &phi).norm_squared();
            phi = &pred.f * &phi + &pred.g * r;
        }
    }
    Ok(total / n as f64)
}
