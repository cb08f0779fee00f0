//! Linear-regression special case.
//!
//! Sensor `i` observes `r_i(k+1) = A_i(x) r_i(k) + w_i(k)` with
//! `A_i(x) = Σ_ℓ x_ℓ A_{i,ℓ}`, i.e. a state-space model with `D = A_i(x)`,
//! `H = I`, `R = 0`. Its steady-state predictor is deadbeat (`G = A_i(x)`,
//! `F = 0`), so `h = U_i(k) x` with regressor `U_i(k) = [A_{i,1} r_i(k) … A_{i,d} r_i(k)]`
//! and the prediction-error update becomes an LMS update.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::gradients::MatrixDerivatives;
use crate::statespace::{ModelFamily, ParamBox, Trajectory};

#[derive(Debug, Clone)]
pub struct RegressionFamily {
    /// `regressors[i][ℓ]` is `A_{i,ℓ}` (p×p).
    pub regressors: Vec<Vec<DMatrix<f64>>>,
    pub noise_var: f64,
    pub bounds: ParamBox,
}

impl RegressionFamily {
    pub fn new(regressors: Vec<Vec<DMatrix<f64>>>, noise_var: f64, bounds: ParamBox) -> Result<Self> {
        let d = bounds.dim();
        let p = regressors
            .first()
            .and_then(|r| r.first())
            .map(|a| a.nrows())
            .ok_or_else(|| Error::InvalidInput("regression family needs sensors and parameters".into()))?;
        for r in &regressors {
            if r.len() != d || r.iter().any(|a| a.shape() != (p, p)) {
                return Err(Error::DimensionMismatch("regressor matrices".into()));
            }
        }
        if noise_var.is_nan() || noise_var <= 0.0 {
            return Err(Error::InvalidInput("noise variance must be positive".into()));
        }
        Ok(Self {
            regressors,
            noise_var,
            bounds,
        })
    }

    /// Regressor matrix `U_i = [A_{i,1} r … A_{i,d} r]` (p×d).
    pub fn regressor(&self, sensor: usize, previous: &DVector<f64>) -> DMatrix<f64> {
        let cols: Vec<DVector<f64>> = self.regressors[sensor].iter().map(|a| a * previous).collect();
        DMatrix::from_columns(&cols)
    }
}

impl ModelFamily for RegressionFamily {
    fn sensor_count(&self) -> usize {
        self.regressors.len()
    }
    fn state_dim(&self) -> usize {
        self.regressors[0][0].nrows()
    }
    fn obs_dim(&self, _sensor: usize) -> usize {
        self.state_dim()
    }
    fn param_dim(&self) -> usize {
        self.bounds.dim()
    }
    fn transition(&self, sensor: usize, x: &[f64]) -> DMatrix<f64> {
        let p = self.state_dim();
        self.regressors[sensor]
            .iter()
            .zip(x)
            .fold(DMatrix::zeros(p, p), |acc, (a, &xl)| acc + a * xl)
    }
    fn observation(&self, _sensor: usize) -> DMatrix<f64> {
        DMatrix::identity(self.state_dim(), self.state_dim())
    }
    fn process_cov(&self, _sensor: usize, _x: &[f64]) -> DMatrix<f64> {
        DMatrix::identity(self.state_dim(), self.state_dim()) * self.noise_var
    }
    fn measurement_cov(&self, _sensor: usize) -> DMatrix<f64> {
        DMatrix::zeros(self.state_dim(), self.state_dim())
    }
    fn feasible_box(&self) -> &ParamBox {
        &self.bounds
    }
    fn gain_derivatives(&self, sensor: usize, _x: &[f64]) -> Option<Result<MatrixDerivatives>> {
        let p = self.state_dim();
        Some(Ok(MatrixDerivatives {
            df: vec![DMatrix::zeros(p, p); self.param_dim()],
            dg: self.regressors[sensor].clone(),
        }))
    }
}

/// Regressors and targets of one slot: `U_i(k)` built from `r_i(k)` (zero for
/// `k = 0`) and target `r_i(k+1)`.
pub fn slot_regression(
    family: &RegressionFamily,
    trajectory: &Trajectory,
    t: usize,
) -> (Vec<DMatrix<f64>>, Vec<DVector<f64>>) {
    let p = family.state_dim();
    (0..family.sensor_count())
        .map(|i| {
            let prev = if t == 0 {
                DVector::zeros(p)
            } else {
                trajectory.measurements[i][t - 1].clone()
            };
            (family.regressor(i, &prev), trajectory.measurements[i][t].clone())
        })
        .unzip()
}

/// Textbook incremental LMS cycle: each sensor corrects the incoming iterate
/// with the a-priori error formed at that same incoming iterate.
pub fn incremental_lms_cycle(
    w: &DVector<f64>,
    regressors: &[DMatrix<f64>],
    targets: &[DVector<f64>],
    alpha: f64,
) -> Vec<DVector<f64>> {
    let mut z = w.clone();
    regressors
        .iter()
        .zip(targets)
        .map(|(u, d)| {
            let err = d - u * &z;
            z = &z + u.transpose() * err * alpha;
            z.clone()
        })
        .collect()
}

/// Incremental LMS in which sensor `i` predicts with `held[i]`, the iterate it
/// emitted in the previous cycle, but corrects the incoming iterate. This is
/// the form the prediction-error recursion takes on [`RegressionFamily`]
/// when more than one sensor shares the iterate. `held` is updated in place.
pub fn held_prediction_lms_cycle(
    w: &DVector<f64>,
    held: &mut [DVector<f64>],
    regressors: &[DMatrix<f64>],
    targets: &[DVector<f64>],
    alpha: f64,
) -> Vec<DVector<f64>> {
    let mut z = w.clone();
    let mut out = Vec::with_capacity(regressors.len());
    for ((u, d), hold) in regressors.iter().zip(targets).zip(held.iter_mut()) {
        let err = d - u * &*hold;
        z = &z + u.transpose() * err * alpha;
        *hold = z.clone();
        out.push(z.clone());
    }
    out
}

/// Least-squares fit of `r_i(k+1) ≈ U_i(k) x` over all sensors and slots `k ≥ 1`.
pub fn least_squares(family: &RegressionFamily, trajectory: &Trajectory) -> Result<DVector<f64>> {
    let d = family.param_dim();
    let mut normal = DMatrix::<f64>::zeros(d, d);
    let mut rhs = DVector::<f64>::zeros(d);
    for t in 1..trajectory.horizon() {
        let (us, ys) = slot_regression(family, trajectory, t);
        for (u, y) in us.iter().zip(&ys) {
            normal += u.transpose() * u;
            rhs += u.transpose() * y;
        }
    }
    normal
        .cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::InvalidInput("regression normal equations are singular".into()))
}
