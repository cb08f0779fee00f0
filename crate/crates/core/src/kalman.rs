//! Steady-state Kalman prediction.
//!
//! The prediction covariance `P` is the fixed point of the Riccati map
//!
//! ```text
//! P ← D P Dᵀ − D P Hᵀ (H P Hᵀ + R)⁻¹ H P Dᵀ + Q
//! ```
//!
//! started from `P₀ = Q`. When `R` is invertible the iteration is advanced by
//! doubling: step `j` of the doubling recursion yields the Riccati iterate
//! after `2^j − 1` plain steps, so the same fixed-point sequence is sampled at
//! exponentially spaced indices. With singular `R` the plain iteration is used.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::statespace::check_shape;

/// Reciprocal condition number below which an innovation covariance is rejected.
pub const INNOVATION_RCOND: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DareOptions {
    /// Stop once successive iterates differ by less than `tol · max(1, ‖P‖max)`.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for DareOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            max_iter: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DareSolution {
    pub p: DMatrix<f64>,
    /// `‖Ric(P) − P‖max`.
    pub residual: f64,
    pub iterations: usize,
}

/// One application of the Riccati map.
pub fn riccati_map(
    d: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    p: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let hp = h * p;
    let s = &hp * h.transpose() + r;
    let chol = innovation_cholesky(&s)?;
    let hpdt = &hp * d.transpose();
    let next = d * p * d.transpose() - hpdt.transpose() * chol.solve(&hpdt) + q;
    Ok(symmetrize(next))
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn innovation_cholesky(s: &DMatrix<f64>) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
    let s = symmetrize(s.clone());
    let chol = s.clone().cholesky().ok_or(Error::SingularInnovation)?;
    let diag = chol.l_dirty().diagonal();
    let (lo, hi) = diag
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), v| (lo.min(v.abs()), hi.max(v.abs())));
    // cond(S) ≥ (max L_ii / min L_ii)², a cheap lower bound that catches the
    // near-singular cases we care about.
    if s.nrows() > 0 && (lo == 0.0 || (lo / hi).powi(2) < INNOVATION_RCOND) {
        return Err(Error::SingularInnovation);
    }
    Ok(chol)
}

fn check_dims(d: &DMatrix<f64>, h: &DMatrix<f64>, q: &DMatrix<f64>, r: &DMatrix<f64>) -> Result<()> {
    if !d.is_square() {
        return Err(Error::NonSquare {
            rows: d.nrows(),
            cols: d.ncols(),
        });
    }
    let n = d.nrows();
    let p = h.nrows();
    check_shape("H", h, p, n)?;
    check_shape("Q", q, n, n)?;
    check_shape("R", r, p, p)?;
    Ok(())
}

/// Solves the filtering DARE for the steady-state one-step prediction covariance.
pub fn solve_dare(
    d: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: DareOptions,
) -> Result<DareSolution> {
    check_dims(d, h, q, r)?;
    let q = symmetrize(q.clone());
    let (p, iterations) = match symmetrize(r.clone()).cholesky() {
        Some(rc) if well_conditioned(&rc) => doubling(d, h, &q, &rc, opts)?,
        _ => fixed_point(d, h, &q, r, opts)?,
    };
    let residual = (riccati_map(d, h, &q, r, &p)? - &p).amax();
    let scale = p.amax().max(1.0);
    if !residual.is_finite() || residual > 1e3 * opts.tol * scale {
        return Err(Error::NoConvergence { iterations, residual });
    }
    Ok(DareSolution {
        p,
        residual,
        iterations,
    })
}

fn well_conditioned(rc: &nalgebra::Cholesky<f64, nalgebra::Dyn>) -> bool {
    let diag = rc.l_dirty().diagonal();
    let lo = diag.iter().fold(f64::INFINITY, |a, v| a.min(v.abs()));
    let hi = diag.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    diag.is_empty() || (lo > 0.0 && (lo / hi).powi(2) > 1e-10)
}

fn fixed_point(
    d: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    r: &DMatrix<f64>,
    opts: DareOptions,
) -> Result<(DMatrix<f64>, usize)> {
    let mut p = q.clone();
    let mut delta = f64::INFINITY;
    for it in 1..=opts.max_iter {
        let next = riccati_map(d, h, q, r, &p)?;
        delta = (&next - &p).amax();
        p = next;
        if !delta.is_finite() {
            break;
        }
        if delta < opts.tol * p.amax().max(1.0) {
            return Ok((p, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: opts.max_iter,
        residual: delta,
    })
}

/// Structure-preserving doubling on the dual (control-form) equation with
/// `A = Dᵀ`, `B = Hᵀ`.
fn doubling(
    d: &DMatrix<f64>,
    h: &DMatrix<f64>,
    q: &DMatrix<f64>,
    rc: &nalgebra::Cholesky<f64, nalgebra::Dyn>,
    opts: DareOptions,
) -> Result<(DMatrix<f64>, usize)> {
    let n = d.nrows();
    let eye = DMatrix::<f64>::identity(n, n);
    let mut a = d.transpose();
    let mut g = symmetrize(h.transpose() * rc.solve(h));
    let mut x = q.clone();
    // Doubling converges quadratically; 200 steps cover any iteration count
    // the plain recursion could reach.
    let limit = opts.max_iter.min(200);
    let mut delta = f64::INFINITY;
    for it in 1..=limit {
        let w = &eye + &g * &x;
        let lu = w.lu();
        let w_inv_a = lu.solve(&a).ok_or(Error::SingularInnovation)?;
        let w_inv_g = lu.solve(&g).ok_or(Error::SingularInnovation)?;
        let x_next = symmetrize(&x + a.transpose() * &x * &w_inv_a);
        let g_next = symmetrize(&g + &a * &w_inv_g * a.transpose());
        let a_next = &a * &w_inv_a;
        delta = (&x_next - &x).amax();
        x = x_next;
        g = g_next;
        a = a_next;
        if !delta.is_finite() {
            break;
        }
        if delta < opts.tol * x.amax().max(1.0) {
            return Ok((x, it));
        }
    }
    Err(Error::NoConvergence {
        iterations: limit,
        residual: delta,
    })
}

/// `G = D P Hᵀ (H P Hᵀ + R)⁻¹`, `F = D − G H`.
pub fn steady_state_gain(
    d: &DMatrix<f64>,
    h: &DMatrix<f64>,
    p: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
    check_dims(d, h, p, r)?;
    let hp = h * p;
    let s = &hp * h.transpose() + r;
    let chol = innovation_cholesky(&s)?;
    let gain = chol.solve(&(hp * d.transpose())).transpose();
    let f = d - &gain * h;
    Ok((gain, f))
}

/// Time-invariant one-step predictor `φ' = F φ + G r`, `g' = H φ'`.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadyStatePredictor {
    pub f: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub dare_residual: f64,
}

impl SteadyStatePredictor {
    pub fn from_model(
        d: &DMatrix<f64>,
        h: &DMatrix<f64>,
        q: &DMatrix<f64>,
        r: &DMatrix<f64>,
        opts: DareOptions,
    ) -> Result<Self> {
        let sol = solve_dare(d, h, q, r, opts)?;
        let (g, f) = steady_state_gain(d, h, &sol.p, r)?;
        Ok(Self {
            f,
            g,
            h: h.clone(),
            p: sol.p,
            dare_residual: sol.residual,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn obs_dim(&self) -> usize {
        self.h.nrows()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PredictorState {
    pub phi: DVector<f64>,
    pub g: DVector<f64>,
}

pub fn predictor_step(
    pred: &SteadyStatePredictor,
    phi: &DVector<f64>,
    r: &DVector<f64>,
) -> Result<PredictorState> {
    if phi.len() != pred.state_dim() || r.len() != pred.g.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "predictor step with state {} and measurement {}",
            phi.len(),
            r.len()
        )));
    }
    let phi = &pred.f * phi + &pred.g * r;
    let g = &pred.h * &phi;
    Ok(PredictorState { phi, g })
}
