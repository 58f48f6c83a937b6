//! Each mode reads only its own modalities and trains only its own head.

use uffia_core::model::{build_model, Mode, ModelInput, ModelKind};
use uffia_core::numerics::Graph;
use uffia_core::Error;

mod common;
use common::{full_input, student_input, tiny_cfg, uniform};

#[test]
fn single_modality_modes_ignore_the_other_input() {
    let cfg = tiny_cfg();
    let m = build_model(ModelKind::Uffia, &cfg, 0).unwrap();
    let base = student_input(&cfg, 1);
    let audio_only = ModelInput { audio: base.audio.clone(), video: None };
    let other_video = ModelInput {
        audio: base.audio.clone(),
        video: Some(uniform(&[cfg.frames, 3, cfg.image, cfg.image], 0.0, 1.0, 99)),
    };
    let a = m.infer(&base, Mode::A).unwrap();
    assert_eq!(a.logits, m.infer(&audio_only, Mode::A).unwrap().logits);
    assert_eq!(a.logits, m.infer(&other_video, Mode::A).unwrap().logits);

    let video_only = ModelInput { audio: None, video: base.video.clone() };
    let v = m.infer(&base, Mode::V).unwrap();
    assert_eq!(v.logits, m.infer(&video_only, Mode::V).unwrap().logits);
}

#[test]
fn modes_produce_different_outputs() {
    let cfg = tiny_cfg();
    let m = build_model(ModelKind::Uffia, &cfg, 0).unwrap();
    let x = student_input(&cfg, 2);
    let outs: Vec<_> = Mode::ALL.iter().map(|&mode| m.infer(&x, mode).unwrap().logits).collect();
    assert_ne!(outs[0], outs[1]);
    assert_ne!(outs[1], outs[2]);
    assert_ne!(outs[0], outs[2]);
}

#[test]
fn missing_inputs_are_contract_errors() {
    let cfg = tiny_cfg();
    let m = build_model(ModelKind::Uffia, &cfg, 0).unwrap();
    let base = student_input(&cfg, 3);
    let no_video = ModelInput { audio: base.audio.clone(), video: None };
    assert!(matches!(m.infer(&no_video, Mode::AV), Err(Error::Contract(_))));
    assert!(matches!(m.infer(&no_video, Mode::V), Err(Error::Contract(_))));
}

#[test]
fn unsupported_modes_rejected() {
    let cfg = tiny_cfg();
    let x = student_input(&cfg, 4);
    let a = build_model(ModelKind::AudioBaseline, &cfg, 0).unwrap();
    assert_eq!(a.modes(), &[Mode::A]);
    assert!(matches!(a.infer(&x, Mode::V), Err(Error::Contract(_))));
    let f = build_model(ModelKind::FusionSelf, &cfg, 0).unwrap();
    assert!(matches!(f.infer(&full_input(&cfg, 4), Mode::A), Err(Error::Contract(_))));
}

#[test]
fn gradients_stay_inside_the_active_branch() {
    let cfg = tiny_cfg();
    let m = build_model(ModelKind::Uffia, &cfg, 0).unwrap();
    let x = student_input(&cfg, 5);
    let touched = |mode: Mode| -> Vec<String> {
        let mut g = Graph::new();
        let out = m.forward(&mut g, &x, mode).unwrap();
        let l = g.cross_entropy(out.logits, &[1]).unwrap();
        let grads = g.backward(l).unwrap().param_grads(&g, m.params());
        m.params()
            .iter()
            .filter(|(id, _)| grads.get(*id).is_some_and(|t| t.data().iter().any(|&v| v != 0.0)))
            .map(|(_, p)| p.name.clone())
            .collect()
    };
    let a = touched(Mode::A);
    let v = touched(Mode::V);
    let av = touched(Mode::AV);
    let shared = |n: &String| n.starts_with("encoder");
    assert!(a.iter().any(shared) && v.iter().any(shared) && av.iter().any(shared));
    let owned = |names: &[String], prefixes: &[&str]| names.iter().all(|n| n.starts_with("encoder") || prefixes.iter().any(|p| n.starts_with(p)));
    assert!(owned(&a, &["audio.", "cls.a", "head.a."]), "{a:?}");
    assert!(owned(&v, &["video.", "cls.v", "head.v."]), "{v:?}");
    assert!(owned(&av, &["audio.", "cls.a", "video.", "cls.av", "av_block.", "head.av."]), "{av:?}");
    assert!(av.iter().any(|n| n.starts_with("av_block.")) && av.iter().any(|n| n.starts_with("audio.")));
}
