//! Finite-difference checks of every op, every block and every model.

use uffia_core::distill::{kd_loss, KdConfig, KlDirection};
use uffia_core::fusion::{
    cross_attention_layer, mha, AttentionParams, AvFusionBlock, BottleneckLayer, Encoder, FeedForward, LayerNorm, Linear,
    Mlp,
};
use uffia_core::model::{build_model, Mode, ModelKind};
use uffia_core::numerics::gradcheck::{check_gradients, check_param_gradients};
use uffia_core::numerics::graph::PoolKind;
use uffia_core::numerics::{Graph, ParamStore, Tensor, Var};
use uffia_core::rng;
use uffia_core::Result;

mod common;
use common::grad::{model_check, project, TOL};
use common::{full_input, student_input, tiny_cfg, uniform};

fn check<F>(name: &str, inputs: &[Tensor], f: F)
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let r = check_gradients(inputs, |g, v| {
        let out = f(g, v)?;
        project(g, out, 99)
    })
    .unwrap();
    assert!(r.checked > 0);
    assert!(r.max_rel_error < TOL, "{name}: rel error {:e} at input {} index {}", r.max_rel_error, r.worst_input, r.worst_index);
}

fn u(shape: &[usize], seed: u64) -> Tensor {
    uniform(shape, -1.0, 1.0, seed)
}

#[test]
fn matrix_ops() {
    check("matmul", &[u(&[3, 4], 1), u(&[4, 2], 2)], |g, v| g.matmul(v[0], v[1]));
    check("matmul_nt", &[u(&[3, 4], 1), u(&[5, 4], 2)], |g, v| g.matmul_nt(v[0], v[1]));
    check("transpose", &[u(&[3, 4], 1)], |g, v| g.transpose(v[0]));
    check("add_bias", &[u(&[3, 4], 1), u(&[4], 2)], |g, v| g.add_bias(v[0], v[1]));
}

#[test]
fn elementwise_ops() {
    let (a, b) = (u(&[2, 5], 3), u(&[2, 5], 4));
    check("add", &[a.clone(), b.clone()], |g, v| g.add(v[0], v[1]));
    check("sub", &[a.clone(), b.clone()], |g, v| g.sub(v[0], v[1]));
    check("mul", &[a.clone(), b.clone()], |g, v| g.mul(v[0], v[1]));
    check("scale", &[a.clone()], |g, v| Ok(g.scale(v[0], -1.7)));
    check("relu", &[a.clone()], |g, v| Ok(g.relu(v[0])));
    check("gelu", &[uniform(&[2, 5], -3.0, 3.0, 5)], |g, v| Ok(g.gelu(v[0])));
}

#[test]
fn normalisation_and_losses() {
    let x = uniform(&[3, 5], -2.0, 2.0, 6);
    check("softmax rows", &[x.clone()], |g, v| g.softmax(v[0], 1));
    check("softmax cols", &[x.clone()], |g, v| g.softmax(v[0], 0));
    check("log_softmax", &[x.clone()], |g, v| g.log_softmax(v[0]));
    check("layer_norm", &[x.clone(), u(&[5], 7), u(&[5], 8)], |g, v| g.layer_norm(v[0], v[1], v[2]));
    let r = check_gradients(&[x.clone()], |g, v| g.cross_entropy(v[0], &[0, 3, 4])).unwrap();
    assert!(r.max_rel_error < TOL, "cross_entropy {:e}", r.max_rel_error);
}

#[test]
fn reductions_and_reshapes() {
    let x = u(&[4, 6], 9);
    check("sum", &[x.clone()], |g, v| Ok(g.sum(v[0])));
    check("mean", &[x.clone()], |g, v| Ok(g.mean(v[0])));
    check("mean_rows", &[x.clone()], |g, v| g.mean_rows(v[0]));
    check("mean_last", &[x.clone()], |g, v| g.mean_last(v[0]));
    check("concat_rows", &[x.clone(), u(&[2, 6], 10)], |g, v| g.concat_rows(&[v[0], v[1]]));
    check("slice_rows", &[x.clone()], |g, v| g.slice_rows(v[0], 1, 2));
    check("concat_cols", &[x.clone(), u(&[4, 3], 11)], |g, v| g.concat_cols(&[v[0], v[1]]));
    check("slice_cols", &[x.clone()], |g, v| g.slice_cols(v[0], 2, 3));
    check("reshape", &[x.clone()], |g, v| g.reshape(v[0], &[3, 8]));
}

#[test]
fn convolution_and_pooling() {
    let x = u(&[2, 3, 5, 4], 12);
    check("conv3d", &[x.clone(), u(&[3, 2, 2, 3, 3], 13), u(&[3], 14)], |g, v| g.conv3d(v[0], v[1], v[2], [0, 1, 1]));
    check("conv3d temporal", &[x.clone(), u(&[2, 2, 3, 1, 1], 15), u(&[2], 16)], |g, v| g.conv3d(v[0], v[1], v[2], [1, 0, 0]));
    check("avg pool", &[x.clone()], |g, v| g.pool3d(v[0], [1, 2, 2], PoolKind::Avg));
    check("max pool", &[x.clone()], |g, v| g.pool3d(v[0], [3, 2, 2], PoolKind::Max));
    check("window_max_mean", &[u(&[3, 7], 17)], |g, v| g.window_max_mean(v[0], 3));
}

fn param_check<F>(name: &str, ps: &ParamStore, f: F)
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let r = check_param_gradients(ps, 6, |g, ps| {
        let out = f(g, ps)?;
        project(g, out, 77)
    })
    .unwrap();
    assert!(r.checked > 0);
    assert!(r.max_rel_error < TOL, "{name}: rel error {:e} at param {} index {}", r.max_rel_error, r.worst_input, r.worst_index);
}

#[test]
fn layers_and_blocks() {
    let d = 8;
    let x = u(&[3, d], 20);
    let a = u(&[4, d], 21);
    let mut r = rng::seeded(3);

    let mut ps = ParamStore::new();
    let lin = Linear::new(&mut ps, "lin", d, 5, true, &mut r).unwrap();
    let ln = LayerNorm::new(&mut ps, "ln", d, &mut r).unwrap();
    let ff = FeedForward::new(&mut ps, "ff", d, 12, &mut r).unwrap();
    let mlp = Mlp::new(&mut ps, "mlp", d, 6, 4, &mut r).unwrap();
    param_check("linear", &ps, |g, ps| {
        let x = g.input(x.clone());
        lin.forward(g, ps, x)
    });
    param_check("layer norm + ffn + mlp", &ps, |g, ps| {
        let x = g.input(x.clone());
        let h = ln.forward(g, ps, x)?;
        let h = ff.forward(g, ps, h)?;
        mlp.forward(g, ps, h)
    });

    let mut ps = ParamStore::new();
    let att = AttentionParams::new(&mut ps, "att", d, 2, &mut r).unwrap();
    param_check("self attention", &ps, |g, ps| {
        let x = g.input(x.clone());
        Ok(mha(g, ps, &att, x, x, x)?.out)
    });
    param_check("cross attention", &ps, |g, ps| {
        let (x, a) = (g.input(x.clone()), g.input(a.clone()));
        Ok(cross_attention_layer(g, ps, &att, x, a)?.out)
    });
    check("attention inputs", &[x.clone(), a.clone()], |g, v| Ok(mha(g, &ps, &att, v[0], v[1], v[1])?.out));

    let mut ps = ParamStore::new();
    let enc = Encoder::new(&mut ps, "enc", d, 2, 12, 2, &mut r).unwrap();
    param_check("encoder", &ps, |g, ps| {
        let x = g.input(x.clone());
        enc.forward(g, ps, x)
    });

    let mut ps = ParamStore::new();
    let av = AvFusionBlock::new(&mut ps, "av", d, 2, &mut r).unwrap();
    param_check("av block", &ps, |g, ps| {
        let (x, a) = (g.input(x.clone()), g.input(a.clone()));
        av.forward(g, ps, x, a)
    });
    check("av block inputs", &[x.clone(), a.clone()], |g, v| av.forward(g, &ps, v[0], v[1]));

    let mut ps = ParamStore::new();
    let bn = BottleneckLayer::new(&mut ps, "bn", d, 2, 12, &mut r).unwrap();
    let zf = u(&[2, d], 22);
    param_check("bottleneck", &ps, |g, ps| {
        let (x, a, f) = (g.input(x.clone()), g.input(a.clone()), g.input(zf.clone()));
        let o = bn.forward(g, ps, x, a, f, None)?;
        let va = g.concat_rows(&[o.video, o.audio])?;
        g.concat_rows(&[va, o.fused])
    });
}

#[test]
fn unified_model_in_every_mode() {
    let cfg = tiny_cfg();
    let input = student_input(&cfg, 40);
    for mode in Mode::ALL {
        let mut m = build_model(ModelKind::Uffia, &cfg, 1).unwrap();
        let e = model_check(m.as_mut(), &input, mode, 4);
        assert!(e < TOL, "uffia {mode}: {e:e}");
    }
}

#[test]
fn single_modality_baselines() {
    let cfg = tiny_cfg();
    let input = student_input(&cfg, 41);
    for (kind, mode) in [(ModelKind::AudioBaseline, Mode::A), (ModelKind::VideoBaseline, Mode::V)] {
        let mut m = build_model(kind, &cfg, 2).unwrap();
        let e = model_check(m.as_mut(), &input, mode, 4);
        assert!(e < TOL, "{kind}: {e:e}");
    }
}

#[test]
fn fusion_baselines() {
    let cfg = tiny_cfg();
    let input = full_input(&cfg, 42);
    for kind in [ModelKind::FusionSelf, ModelKind::FusionCross, ModelKind::FusionBottleneck] {
        let mut m = build_model(kind, &cfg, 3).unwrap();
        let e = model_check(m.as_mut(), &input, Mode::AV, 4);
        assert!(e < TOL, "{kind}: {e:e}");
    }
}

#[test]
fn teachers() {
    let cfg = tiny_cfg();
    let input = full_input(&cfg, 43);
    for (kind, mode) in [(ModelKind::AudioTeacher, Mode::A), (ModelKind::VideoTeacher, Mode::V)] {
        let mut m = build_model(kind, &cfg, 4).unwrap();
        let e = model_check(m.as_mut(), &input, mode, 4);
        assert!(e < TOL, "{kind}: {e:e}");
    }
}

#[test]
fn distillation_loss_wrt_student_logits() {
    let teacher = uniform(&[1, 4], -3.0, 3.0, 50);
    for direction in [KlDirection::StudentTeacher, KlDirection::TeacherStudent] {
        for (lambda, tau) in [(0.5, 2.5), (0.0, 1.0), (0.9, 4.0)] {
            let cfg = KdConfig { lambda, tau, direction };
            let r = check_gradients(&[uniform(&[1, 4], -3.0, 3.0, 51)], |g, v| kd_loss(g, v[0], &teacher, &[1], &cfg)).unwrap();
            assert!(r.max_rel_error < TOL, "{direction:?} λ={lambda} τ={tau}: {:e}", r.max_rel_error);
        }
    }
}
