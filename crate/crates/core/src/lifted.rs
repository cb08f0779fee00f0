//! Centralized lifted system whose plain RPE iterates coincide with the IRPE
//! sub-iterates.
//!
//! Time is refined so that one slot of `m` sensors becomes `m` lifted steps.
//! At lifted time `n = mk + j` the fusion centre sees `r̃(n) = U^p_j r_j(k+1)`,
//! and each sensor's state is carried in a length-`m` block vector that is
//! shifted up one block per step, so sensor `j`'s dynamics act only at its own
//! turn. Block indices in this module are 1-based, matching `U^a_b`.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{block_diagonal, rpe_step, PredictorBundle, PredictorSource, RpeState, StepSchedule};
use crate::gradients::{MatrixDerivatives, PredictorGradientState};
use crate::statespace::ParamBox;

/// `U^a_b`: the `(a·m)×a` block column with identity in block `b` (1-based).
pub fn unit_block_vector(a: usize, m: usize, b: usize) -> Result<DMatrix<f64>> {
    if b == 0 || b > m {
        return Err(Error::InvalidInput(format!("block index {b} outside 1..={m}")));
    }
    let mut u = DMatrix::zeros(a * m, a);
    for r in 0..a {
        u[((b - 1) * a + r, r)] = 1.0;
    }
    Ok(u)
}

/// Block-shift matrix with `base` in the bottom-left block and, when
/// `with_shift` is set, identities on the block superdiagonal.
///
/// With `with_shift = false` this is the derivative of the lifted matrix,
/// since the shift blocks do not depend on the parameter.
pub fn shift_lift(base: &DMatrix<f64>, m: usize, with_shift: bool) -> DMatrix<f64> {
    let q = base.nrows();
    let mut out = DMatrix::zeros(m * q, m * q);
    if with_shift {
        for b in 0..m.saturating_sub(1) {
            out.view_mut((b * q, (b + 1) * q), (q, q)).fill_with_identity();
        }
    }
    let mut corner = out.view_mut(((m - 1) * q, 0), (q, q));
    corner += base;
    out
}

/// Lifted matrices of one sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedSensor {
    /// `D̄_i` (or `F̄_i`): `mq × mq`.
    pub transition: DMatrix<f64>,
    /// `Ḡ_i = U^q_m G_i`: `mq × p`.
    pub gain: DMatrix<f64>,
    /// `H̄_i = H_i (U^q_1)ᵀ`: `p × mq`.
    pub observation: DMatrix<f64>,
}

pub fn lift_sensor(base: &DMatrix<f64>, gain: &DMatrix<f64>, obs: &DMatrix<f64>, m: usize) -> Result<LiftedSensor> {
    let q = base.nrows();
    if m == 0 {
        return Err(Error::InvalidInput("lifting needs m ≥ 1".into()));
    }
    if !base.is_square() || gain.nrows() != q || obs.ncols() != q {
        return Err(Error::DimensionMismatch("lift_sensor".into()));
    }
    Ok(LiftedSensor {
        transition: shift_lift(base, m, true),
        gain: unit_block_vector(q, m, m)? * gain,
        observation: obs * unit_block_vector(q, m, 1)?.transpose(),
    })
}

/// Interleaves per-slot measurements into the lifted stream:
/// `r̃(mk+j) = U^p_j r_j(k+1)`. `slots[k][i]` is `r_i(k+1)`.
pub fn interleave(slots: &[Vec<DVector<f64>>], m: usize) -> Result<Vec<DVector<f64>>> {
    let mut out = Vec::with_capacity(slots.len() * m);
    for slot in slots {
        if slot.len() != m {
            return Err(Error::DimensionMismatch(format!("slot has {} measurements, expected {m}", slot.len())));
        }
        let p = slot[0].len();
        for (j, r) in slot.iter().enumerate() {
            if r.len() != p {
                return Err(Error::DimensionMismatch("unequal measurement dimensions".into()));
            }
            out.push(unit_block_vector(p, m, j + 1)? * r);
        }
    }
    Ok(out)
}

/// Predictor family of the lifted system, assembled block-diagonally from the
/// per-sensor predictors at each parameter value. Sensors appear in the order
/// they are visited within a cycle.
pub struct LiftedSource<'a, S> {
    sensors: &'a [S],
    q: usize,
    p: usize,
    d: usize,
}

impl<'a, S: PredictorSource> LiftedSource<'a, S> {
    pub fn new(sensors: &'a [S]) -> Result<Self> {
        let first = sensors
            .first()
            .ok_or_else(|| Error::InvalidInput("lifted system needs sensors".into()))?;
        let (q, p, d) = (first.state_dim(), first.obs_dim(), first.param_dim());
        if sensors
            .iter()
            .any(|s| s.state_dim() != q || s.obs_dim() != p || s.param_dim() != d)
        {
            return Err(Error::DimensionMismatch("lifting requires identical sensor dimensions".into()));
        }
        Ok(Self { sensors, q, p, d })
    }

    pub fn sensor_count(&self) -> usize {
        self.sensors.len()
    }

    /// Lifted initial state: block `i` of sensor `i` carries its `(ψ, χ)`.
    pub fn lift_initial(&self, initial: &[PredictorGradientState]) -> Result<PredictorGradientState> {
        let m = self.sensors.len();
        if initial.len() != m {
            return Err(Error::DimensionMismatch("one initial state per sensor".into()));
        }
        let mut psi = Vec::with_capacity(m);
        let mut chi = vec![Vec::with_capacity(m); self.d];
        for (i, st) in initial.iter().enumerate() {
            let u = unit_block_vector(self.q, m, i + 1)?;
            psi.push(&u * &st.psi);
            for (l, c) in st.chi.iter().enumerate() {
                chi[l].push(&u * c);
            }
        }
        let stack = |parts: &[DVector<f64>]| {
            DVector::from_iterator(parts.iter().map(|v| v.len()).sum(), parts.iter().flat_map(|v| v.iter().copied()))
        };
        PredictorGradientState::new(stack(&psi), chi.iter().map(|c| stack(c)).collect(), &self.observation())
    }
}

impl<S: PredictorSource> PredictorSource for LiftedSource<'_, S> {
    fn state_dim(&self) -> usize {
        let m = self.sensors.len();
        m * m * self.q
    }
    fn obs_dim(&self) -> usize {
        self.sensors.len() * self.p
    }
    fn param_dim(&self) -> usize {
        self.d
    }
    fn observation(&self) -> DMatrix<f64> {
        let m = self.sensors.len();
        let u1 = unit_block_vector(self.q, m, 1).expect("m ≥ 1").transpose();
        let blocks: Vec<_> = self.sensors.iter().map(|s| s.observation() * &u1).collect();
        block_diagonal(&blocks)
    }
    fn bundle(&self, x: &[f64]) -> Result<PredictorBundle> {
        let m = self.sensors.len();
        let um = unit_block_vector(self.q, m, m)?;
        let u1t = unit_block_vector(self.q, m, 1)?.transpose();
        let mut f = Vec::with_capacity(m);
        let mut g = Vec::with_capacity(m);
        let mut h = Vec::with_capacity(m);
        let mut df = vec![Vec::with_capacity(m); self.d];
        let mut dg = vec![Vec::with_capacity(m); self.d];
        for (i, s) in self.sensors.iter().enumerate() {
            let b = s.bundle(x).map_err(|e| Error::for_sensor(i, e))?;
            f.push(shift_lift(&b.f, m, true));
            g.push(&um * &b.g);
            h.push(&b.h * &u1t);
            for l in 0..self.d {
                df[l].push(shift_lift(&b.derivs.df[l], m, false));
                dg[l].push(&um * &b.derivs.dg[l]);
            }
        }
        Ok(PredictorBundle {
            f: block_diagonal(&f),
            g: block_diagonal(&g),
            h: block_diagonal(&h),
            derivs: MatrixDerivatives {
                df: df.iter().map(|b| block_diagonal(b)).collect(),
                dg: dg.iter().map(|b| block_diagonal(b)).collect(),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LiftedTrace {
    /// `x̃_n` for `n = 1..mK`.
    pub iterates: Vec<DVector<f64>>,
    pub innovation_sq: Vec<f64>,
}

/// Runs centralized RPE on the lifted system over `slots`, holding the step
/// size at `α_{k+1}` for all `m` lifted steps of slot `k+1`.
pub fn lifted_rpe_run<S: PredictorSource>(
    sensors: &[S],
    slots: &[Vec<DVector<f64>>],
    schedule: StepSchedule,
    x_start: DVector<f64>,
    initial: &[PredictorGradientState],
    bounds: &ParamBox,
) -> Result<LiftedTrace> {
    let source = LiftedSource::new(sensors)?;
    let m = source.sensor_count();
    let stream = interleave(slots, m)?;
    let mut state = RpeState::new(x_start, &source);
    state.grad = source.lift_initial(initial)?;
    let mut iterates = Vec::with_capacity(stream.len());
    let mut innovation_sq = Vec::with_capacity(stream.len());
    for (n, r) in stream.iter().enumerate() {
        let alpha = schedule.alpha((n / m) as u64 + 1);
        innovation_sq.push(rpe_step(&mut state, &source, r, alpha, bounds)?);
        iterates.push(state.x.clone());
    }
    Ok(LiftedTrace {
        iterates,
        innovation_sq,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EquivalenceReport {
    pub compared: usize,
    pub max_abs_dev: f64,
    pub max_rel_dev: f64,
    /// First lifted index `n` (1-based) whose relative deviation exceeds the threshold.
    pub first_divergence_index: Option<usize>,
}

/// Compares IRPE sub-iterates `z_{j,k+1}` (flattened in visiting order) with
/// lifted iterates `x̃_{mk+j}`; the two sequences share the index map directly.
pub fn equivalence_report(
    irpe_trace: &[DVector<f64>],
    lifted_trace: &[DVector<f64>],
    threshold: f64,
) -> Result<EquivalenceReport> {
    if irpe_trace.len() != lifted_trace.len() {
        return Err(Error::DimensionMismatch(format!(
            "traces have lengths {} and {}",
            irpe_trace.len(),
            lifted_trace.len()
        )));
    }
    let mut report = EquivalenceReport {
        compared: irpe_trace.len(),
        max_abs_dev: 0.0,
        max_rel_dev: 0.0,
        first_divergence_index: None,
    };
    for (n, (a, b)) in irpe_trace.iter().zip(lifted_trace).enumerate() {
        if a.len() != b.len() {
            return Err(Error::DimensionMismatch(format!("iterate {} dimensions differ", n + 1)));
        }
        for (&u, &v) in a.iter().zip(b.iter()) {
            let abs = (u - v).abs();
            let scale = u.abs().max(v.abs());
            let rel = if abs == 0.0 { 0.0 } else if scale > 0.0 { abs / scale } else { f64::INFINITY };
            report.max_abs_dev = report.max_abs_dev.max(abs);
            report.max_rel_dev = report.max_rel_dev.max(rel);
            if (rel > threshold || rel.is_nan()) && report.first_divergence_index.is_none() {
                report.first_divergence_index = Some(n + 1);
            }
        }
    }
    Ok(report)
}
