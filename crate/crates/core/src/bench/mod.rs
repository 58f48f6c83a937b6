//! Training, evaluation, noise sweeps, and parameter/FLOPs accounting.

pub mod eval;
pub mod flops;
pub mod inputs;
pub mod report;
pub mod run;
pub mod train;

pub use eval::{evaluate, noise_sweep, Corruption, EvalResult, SweepRow};
pub use train::{fit, train_step, BatchItem, FitOptions, MetricsLog, StepStats};

use crate::error::Result;
use crate::model::{Classifier, InputShapes, Mode};

/// Trainable scalars; frozen parameters are not counted.
pub fn count_params(model: &dyn Classifier) -> usize {
    model.params().trainable_count()
}

/// FLOPs of one forward pass on inputs of `shapes`.
pub fn count_model_flops(model: &dyn Classifier, shapes: &InputShapes, mode: Mode) -> Result<u64> {
    flops::count_flops(&model.flop_profile(shapes, mode)?)
}
