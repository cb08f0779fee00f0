//! Incremental recursive prediction error (IRPE) estimation of parameters of
//! linear state-space models observed by a ring of sensors.
//!
//! ```
//! use irpe::estimators::{irpe_cycle, IrpeState, SensorPredictor, StepSchedule};
//! use irpe::gradients::DerivativeOptions;
//! use irpe::statespace::{simulate_trajectory, AffineFamily, ModelFamily, RandomFamilySpec};
//! use nalgebra::DVector;
//!
//! # fn main() -> irpe::Result<()> {
//! let model = AffineFamily::random(RandomFamilySpec { sensors: 4, state_dim: 2, obs_dim: 1, param_dim: 2 }, 1);
//! let data = simulate_trajectory(&model, &[0.7, 0.2], 500, 2)?;
//! let sources = SensorPredictor::all(&model, DerivativeOptions::default());
//! let schedule = StepSchedule::new(0.5, 5)?;
//! let mut state = IrpeState::new(DVector::from_vec(vec![0.5, 0.5]), &sources, vec![0, 1, 2, 3])?;
//! for k in 0..500 {
//!     irpe_cycle(&mut state, &sources, &data.slot(k), schedule.alpha(k as u64 + 1), model.feasible_box())?;
//! }
//! assert!(model.feasible_box().contains(state.x.as_slice()));
//! # Ok(())
//! # }
//! ```

pub mod error;
pub mod estimators;
pub mod gasleak;
pub mod gradients;
pub mod harness;
pub mod kalman;
pub mod lifted;
pub mod statespace;

pub use error::{Error, Result};
pub use estimators::{
    irpe_cycle, rpe_step, CycleRecord, IrpeState, PredictorBundle, PredictorSource, RpeState, SensorPredictor,
    StepSchedule,
};
pub use statespace::{ModelFamily, ParamBox, Trajectory};
