//! Turning prepared examples into model inputs.

use crate::data::Example;
use crate::dsp::simpf::simpf_pool;
use crate::dsp::{MelFeature, SpecAugment};
use crate::error::Result;
use crate::model::{InputShapes, InputSpec, Mode, ModelConfig, ModelInput};
use crate::numerics::Tensor;
use crate::rng::Rng;
use crate::video::{corrupt_frames, sample_frames, FrameStack, VideoClip, VisualCorruption};

/// `n` frame indices spread evenly over `total`, used whenever sampling must
/// not depend on an RNG.
pub fn even_indices(total: usize, n: usize) -> Vec<usize> {
    (0..n).map(|i| (2 * i + 1) * total / (2 * n)).collect()
}

/// Mel tensor the model sees, after optional masking and spectral pooling.
pub fn audio_tensor(mel: &MelFeature, spec: &InputSpec, augment: Option<(&SpecAugment, &mut Rng)>) -> Result<Tensor> {
    let masked;
    let mel = match augment {
        Some((a, rng)) if a.time_masks + a.freq_masks > 0 => {
            masked = a.apply(mel, rng)?;
            &masked
        }
        _ => mel,
    };
    Ok(match spec.simpf_k {
        Some(k) if k < 1.0 => simpf_pool(mel, k)?.values,
        _ => mel.values.clone(),
    })
}

/// Frames the model sees: random when `rng` is given, evenly spaced otherwise.
pub fn video_tensor(clip: &VideoClip, spec: &InputSpec, rng: Option<&mut Rng>, visual: Option<(&VisualCorruption, &mut Rng)>) -> Result<Tensor> {
    let stack: FrameStack = match (spec.sampled_frames, rng) {
        (None, _) => clip.all_frames(),
        (Some(n), Some(r)) => sample_frames(clip, n, r)?,
        (Some(n), None) => clip.select(&even_indices(clip.frames(), n))?,
    };
    Ok(match visual {
        Some((c, r)) if !c.is_identity() => corrupt_frames(&stack, c, r)?.frames,
        _ => stack.frames,
    })
}

/// Inputs for `mode` with clean audio and evenly spaced frames.
pub fn clean_input(ex: &Example, spec: &InputSpec, mode: Mode) -> Result<ModelInput> {
    Ok(ModelInput {
        audio: if mode.uses_audio() { Some(audio_tensor(&ex.mel, spec, None)?) } else { None },
        video: if mode.uses_video() { Some(video_tensor(&ex.video, spec, None, None)?) } else { None },
    })
}

/// Shapes of one raw clip as consumed by a model with `spec`.
pub fn clip_shapes(cfg: &ModelConfig, spec: &InputSpec) -> InputShapes {
    InputShapes {
        mel_frames: cfg.mel_frames,
        mel_bins: cfg.mel_bins,
        frames: spec.sampled_frames.unwrap_or(cfg.native_frames),
        image: cfg.image,
    }
}
