//! Parameter derivatives of the steady-state predictor and the extended
//! `(ψ, χ)` recursion that propagates them alongside the predictor state.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kalman::{DareOptions, SteadyStatePredictor};
use crate::statespace::ModelFamily;

/// `∂F/∂x^(ℓ)` and `∂G/∂x^(ℓ)` for `ℓ = 1..d`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixDerivatives {
    pub df: Vec<DMatrix<f64>>,
    pub dg: Vec<DMatrix<f64>>,
}

impl MatrixDerivatives {
    pub fn zeros(d: usize, q: usize, p: usize) -> Self {
        Self {
            df: vec![DMatrix::zeros(q, q); d],
            dg: vec![DMatrix::zeros(q, p); d],
        }
    }

    pub fn param_dim(&self) -> usize {
        self.df.len()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerivativeOptions {
    /// Finite-difference step is `rel_step · max(1, |x^(ℓ)|)`.
    pub rel_step: f64,
    pub dare: DareOptions,
}

impl Default for DerivativeOptions {
    fn default() -> Self {
        Self {
            rel_step: 1e-6,
            dare: DareOptions::default(),
        }
    }
}

/// Solves the DARE for sensor `sensor` at `x` and builds its predictor.
pub fn predictor_at(
    model: &dyn ModelFamily,
    sensor: usize,
    x: &[f64],
    dare: DareOptions,
) -> Result<SteadyStatePredictor> {
    SteadyStatePredictor::from_model(
        &model.transition(sensor, x),
        &model.observation(sensor),
        &model.process_cov(sensor, x),
        &model.measurement_cov(sensor),
        dare,
    )
    .map_err(|e| Error::at_point(x, e))
}

/// Derivatives of `(F, G)` at `x`.
///
/// Uses the model's analytic derivatives when it has them. Otherwise each
/// coordinate is differenced through the whole `x ↦ DARE ↦ gain` pipeline:
/// central differences in the interior, one-sided within one step of a bound.
pub fn matrix_derivatives(
    model: &dyn ModelFamily,
    sensor: usize,
    x: &[f64],
    opts: DerivativeOptions,
) -> Result<MatrixDerivatives> {
    if let Some(analytic) = model.gain_derivatives(sensor, x) {
        return analytic;
    }
    finite_difference_derivatives(model, sensor, x, None, opts)
}

/// Finite-difference derivatives, reusing `center` when the caller already
/// holds the predictor at `x`.
pub fn finite_difference_derivatives(
    model: &dyn ModelFamily,
    sensor: usize,
    x: &[f64],
    center: Option<&SteadyStatePredictor>,
    opts: DerivativeOptions,
) -> Result<MatrixDerivatives> {
    let bounds = model.feasible_box();
    let mut df = Vec::with_capacity(x.len());
    let mut dg = Vec::with_capacity(x.len());
    let mut center_cache: Option<SteadyStatePredictor> = None;
    for l in 0..x.len() {
        let h = opts.rel_step * x[l].abs().max(1.0);
        let up_ok = x[l] + h <= bounds.hi[l];
        let down_ok = x[l] - h >= bounds.lo[l];
        let at = |offset: f64| -> Result<SteadyStatePredictor> {
            let mut xp = x.to_vec();
            xp[l] += offset;
            predictor_at(model, sensor, &xp, opts.dare)
        };
        let mut centre = || -> Result<SteadyStatePredictor> {
            if let Some(c) = center {
                return Ok(c.clone());
            }
            if center_cache.is_none() {
                center_cache = Some(predictor_at(model, sensor, x, opts.dare)?);
            }
            Ok(center_cache.clone().unwrap())
        };
        let (f_l, g_l) = if up_ok == down_ok {
            // Interior, or a box narrower than two steps: difference symmetrically.
            let plus = at(h)?;
            let minus = at(-h)?;
            (
                (&plus.f - &minus.f) / (2.0 * h),
                (&plus.g - &minus.g) / (2.0 * h),
            )
        } else if up_ok {
            let plus = at(h)?;
            let c = centre()?;
            ((&plus.f - &c.f) / h, (&plus.g - &c.g) / h)
        } else {
            let minus = at(-h)?;
            let c = centre()?;
            ((&c.f - &minus.f) / h, (&c.g - &minus.g) / h)
        };
        df.push(f_l);
        dg.push(g_l);
    }
    Ok(MatrixDerivatives { df, dg })
}

/// `(ψ, χ^(1..d))` and their outputs `h = Hψ`, `ξ^(ℓ) = Hχ^(ℓ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorGradientState {
    pub psi: DVector<f64>,
    pub chi: Vec<DVector<f64>>,
    pub h: DVector<f64>,
    pub xi: Vec<DVector<f64>>,
}

impl PredictorGradientState {
    /// State with outputs computed through `obs`.
    pub fn new(psi: DVector<f64>, chi: Vec<DVector<f64>>, obs: &DMatrix<f64>) -> Result<Self> {
        if obs.ncols() != psi.len() || chi.iter().any(|c| c.len() != psi.len()) {
            return Err(Error::DimensionMismatch("predictor gradient state".into()));
        }
        let h = obs * &psi;
        let xi = chi.iter().map(|c| obs * c).collect();
        Ok(Self { psi, chi, h, xi })
    }

    /// All-zero state: `ψ = μ(x) = 0` and `χ = ∂μ/∂x = 0`.
    pub fn zeros(state_dim: usize, param_dim: usize, obs: &DMatrix<f64>) -> Self {
        Self::new(
            DVector::zeros(state_dim),
            vec![DVector::zeros(state_dim); param_dim],
            obs,
        )
        .expect("consistent zero state")
    }

    pub fn param_dim(&self) -> usize {
        self.chi.len()
    }
}

/// One step of the extended recursion:
///
/// ```text
/// ψ'      = F ψ + G r
/// χ'^(ℓ)  = ∇^(ℓ)F ψ + F χ^(ℓ) + ∇^(ℓ)G r
/// h'      = H ψ',  ξ'^(ℓ) = H χ'^(ℓ)
/// ```
pub fn extended_step(
    state: &PredictorGradientState,
    f: &DMatrix<f64>,
    g: &DMatrix<f64>,
    h: &DMatrix<f64>,
    derivs: &MatrixDerivatives,
    r: &DVector<f64>,
) -> Result<PredictorGradientState> {
    let q = state.psi.len();
    if f.shape() != (q, q)
        || g.shape() != (q, r.len())
        || h.ncols() != q
        || derivs.param_dim() != state.param_dim()
    {
        return Err(Error::DimensionMismatch("extended step".into()));
    }
    let psi = f * &state.psi + g * r;
    let chi: Vec<DVector<f64>> = state
        .chi
        .iter()
        .zip(derivs.df.iter().zip(&derivs.dg))
        .map(|(c, (df, dg))| df * &state.psi + f * c + dg * r)
        .collect();
    let out_h = h * &psi;
    let xi = chi.iter().map(|c| h * c).collect();
    Ok(PredictorGradientState {
        psi,
        chi,
        h: out_h,
        xi,
    })
}

/// Instantaneous gradient of `‖r − g(x)‖²`: component `ℓ` is `−2 (ξ^(ℓ))ᵀ ε`.
pub fn empirical_gradient(xi: &[DVector<f64>], innovation: &DVector<f64>) -> DVector<f64> {
    DVector::from_iterator(xi.len(), xi.iter().map(|x| -2.0 * x.dot(innovation)))
}
