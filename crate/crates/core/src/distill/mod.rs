//! Knowledge distillation: the blended loss, frozen teachers, and the
//! single-modality distillation step.

pub mod loss;
pub mod teacher;

pub use loss::{kd_loss, KdConfig, KlDirection};
pub use teacher::{Teacher, TeacherKind};

use crate::bench::train::{train_step, BatchItem, StepStats};
use crate::error::{Error, Result};
use crate::model::{Classifier, Mode, ModelKind};
use crate::numerics::{AdamState, Tensor};

/// Student mode a teacher model can serve, if it is a teacher at all.
pub fn teacher_mode(kind: ModelKind) -> Option<Mode> {
    match kind {
        ModelKind::AudioTeacher => Some(Mode::A),
        ModelKind::VideoTeacher => Some(Mode::V),
        _ => None,
    }
}

pub fn check_pairing(teacher: ModelKind, mode: Mode) -> Result<()> {
    if teacher_mode(teacher) == Some(mode) {
        Ok(())
    } else {
        Err(Error::config(format!("{teacher} cannot distil into a {mode}-mode student")))
    }
}

/// Teacher logits `[1, 4]` from the full-resolution input.
pub fn teacher_logits(teacher: &dyn Classifier, input: &crate::model::ModelInput) -> Result<Tensor> {
    let mode = teacher_mode(teacher.kind()).ok_or_else(|| Error::config(format!("{} is not a teacher", teacher.kind())))?;
    Ok(Tensor::new([1, crate::label::NUM_CLASSES], teacher.infer(input, mode)?.logits)?)
}

/// One optimiser step of `student` against `teacher` in `mode`. The teacher
/// only supplies logits; no gradient reaches it.
pub fn distill_step(
    student: &mut dyn Classifier,
    adam: &mut AdamState,
    teacher: &dyn Classifier,
    batch: &mut [BatchItem],
    mode: Mode,
    cfg: &KdConfig,
) -> Result<StepStats> {
    check_pairing(teacher.kind(), mode)?;
    for item in batch.iter_mut() {
        item.mode = mode;
        if item.teacher_logits.is_none() {
            let t_input = item
                .teacher_input
                .as_ref()
                .ok_or_else(|| Error::Contract("distillation batch item without teacher input".into()))?;
            item.teacher_logits = Some(teacher_logits(teacher, t_input)?);
        }
    }
    train_step(student, adam, batch, Some(cfg))
}
