//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any fails. `UFFIA_ACCEPTANCE=1,2,9` runs a subset.

use std::panic::{self, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::Instant;

use rand::Rng as _;
use uffia_core::bench::eval::noise_sweep;
use uffia_core::bench::inputs::clip_shapes;
use uffia_core::bench::report::METRICS_CSV;
use uffia_core::bench::run::{self, MODEL_CKPT};
use uffia_core::bench::{count_model_flops, SweepRow};
use uffia_core::bench::flops::count_flops;
use uffia_core::config::{DataConfig, RunConfig};
use uffia_core::data::{synth_record, Dataset, Origin, Split, SynthConfig, SynthParams};
use uffia_core::distill::{kd_loss, KdConfig};
use uffia_core::dsp::simpf::simpf_pool;
use uffia_core::dsp::MelFeature;
use uffia_core::fusion::{check_bottleneck_tokens, mha, AttentionParams, AvFusionBlock, BottleneckLayer, Encoder};
use uffia_core::model::{apply_modality_dropout, build_model, Classifier, DropoutConfig, Mode, ModelConfig, ModelInput, ModelKind, UffiaModel, Variant};
use uffia_core::numerics::gradcheck::{check_gradients, check_param_gradients};
use uffia_core::numerics::graph::PoolKind;
use uffia_core::numerics::{Graph, ParamStore, Real, Tensor, Var};
use uffia_core::{parallel, rng};

mod common;
use common::grad::{model_check, project};
use common::spectral::oracle;
use common::{student_input, tiny_cfg, uniform};

type Outcome = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- 1: gradients ------------------------------------------------------------

fn op_error(inputs: &[Tensor], f: impl Fn(&mut Graph, &[Var]) -> uffia_core::Result<Var>) -> Real {
    check_gradients(inputs, |g, v| {
        let out = f(g, v)?;
        project(g, out, 5)
    })
    .unwrap()
    .max_rel_error
}

fn block_error(ps: &ParamStore, f: impl Fn(&mut Graph, &ParamStore) -> uffia_core::Result<Var>) -> Real {
    check_param_gradients(ps, 6, |g, ps| {
        let out = f(g, ps)?;
        project(g, out, 6)
    })
    .unwrap()
    .max_rel_error
}

fn criterion_gradients() -> Outcome {
    let start = Instant::now();
    let u = |s: &[usize], seed| uniform(s, -1.0, 1.0, seed);
    let mut errs: Vec<(&str, Real)> = vec![
        ("matmul", op_error(&[u(&[3, 4], 1), u(&[4, 2], 2)], |g, v| g.matmul(v[0], v[1]))),
        ("matmul_nt", op_error(&[u(&[3, 4], 1), u(&[5, 4], 2)], |g, v| g.matmul_nt(v[0], v[1]))),
        ("transpose", op_error(&[u(&[3, 4], 1)], |g, v| g.transpose(v[0]))),
        ("add", op_error(&[u(&[2, 3], 1), u(&[2, 3], 2)], |g, v| g.add(v[0], v[1]))),
        ("sub", op_error(&[u(&[2, 3], 1), u(&[2, 3], 2)], |g, v| g.sub(v[0], v[1]))),
        ("mul", op_error(&[u(&[2, 3], 1), u(&[2, 3], 2)], |g, v| g.mul(v[0], v[1]))),
        ("scale", op_error(&[u(&[2, 3], 1)], |g, v| Ok(g.scale(v[0], 0.3)))),
        ("add_bias", op_error(&[u(&[2, 3], 1), u(&[3], 2)], |g, v| g.add_bias(v[0], v[1]))),
        ("relu", op_error(&[u(&[2, 5], 3)], |g, v| Ok(g.relu(v[0])))),
        ("gelu", op_error(&[u(&[2, 5], 3)], |g, v| Ok(g.gelu(v[0])))),
        ("softmax", op_error(&[u(&[3, 4], 4)], |g, v| g.softmax(v[0], 1))),
        ("softmax axis 0", op_error(&[u(&[3, 4], 4)], |g, v| g.softmax(v[0], 0))),
        ("log_softmax", op_error(&[u(&[3, 4], 4)], |g, v| g.log_softmax(v[0]))),
        ("layer_norm", op_error(&[u(&[3, 4], 4), u(&[4], 5), u(&[4], 6)], |g, v| g.layer_norm(v[0], v[1], v[2]))),
        ("cross_entropy", check_gradients(&[u(&[2, 4], 7)], |g, v| g.cross_entropy(v[0], &[1, 3])).unwrap().max_rel_error),
        ("sum", op_error(&[u(&[2, 3], 1)], |g, v| Ok(g.sum(v[0])))),
        ("mean", op_error(&[u(&[2, 3], 1)], |g, v| Ok(g.mean(v[0])))),
        ("mean_rows", op_error(&[u(&[4, 3], 1)], |g, v| g.mean_rows(v[0]))),
        ("mean_last", op_error(&[u(&[4, 3], 1)], |g, v| g.mean_last(v[0]))),
        ("concat_rows", op_error(&[u(&[2, 3], 1), u(&[1, 3], 2)], |g, v| g.concat_rows(&[v[0], v[1]]))),
        ("slice_rows", op_error(&[u(&[4, 3], 1)], |g, v| g.slice_rows(v[0], 1, 2))),
        ("concat_cols", op_error(&[u(&[2, 3], 1), u(&[2, 2], 2)], |g, v| g.concat_cols(&[v[0], v[1]]))),
        ("slice_cols", op_error(&[u(&[2, 5], 1)], |g, v| g.slice_cols(v[0], 1, 3))),
        ("reshape", op_error(&[u(&[2, 6], 1)], |g, v| g.reshape(v[0], &[3, 4]))),
        ("conv3d", op_error(&[u(&[2, 3, 4, 4], 8), u(&[2, 2, 3, 3, 3], 9), u(&[2], 10)], |g, v| g.conv3d(v[0], v[1], v[2], [1, 1, 1]))),
        ("avg pool", op_error(&[u(&[2, 2, 4, 4], 8)], |g, v| g.pool3d(v[0], [1, 2, 2], PoolKind::Avg))),
        ("max pool", op_error(&[u(&[2, 2, 4, 4], 8)], |g, v| g.pool3d(v[0], [2, 2, 2], PoolKind::Max))),
        ("window_max_mean", op_error(&[u(&[2, 7], 8)], |g, v| g.window_max_mean(v[0], 3))),
    ];

    let d = 8;
    let (x, a, zf) = (u(&[3, d], 11), u(&[4, d], 12), u(&[2, d], 13));
    let mut r = rng::seeded(1);
    let mut ps = ParamStore::new();
    let att = AttentionParams::new(&mut ps, "att", d, 2, &mut r).unwrap();
    errs.push(("attention", block_error(&ps, |g, ps| {
        let (x, a) = (g.input(x.clone()), g.input(a.clone()));
        Ok(mha(g, ps, &att, x, a, a)?.out)
    })));
    let mut ps = ParamStore::new();
    let enc = Encoder::new(&mut ps, "enc", d, 2, 12, 1, &mut r).unwrap();
    errs.push(("encoder layer", block_error(&ps, |g, ps| {
        let x = g.input(x.clone());
        enc.forward(g, ps, x)
    })));
    let mut ps = ParamStore::new();
    let bn = BottleneckLayer::new(&mut ps, "bn", d, 2, 12, &mut r).unwrap();
    errs.push(("bottleneck layer", block_error(&ps, |g, ps| {
        let (x, a, f) = (g.input(x.clone()), g.input(a.clone()), g.input(zf.clone()));
        let o = bn.forward(g, ps, x, a, f, None)?;
        g.concat_rows(&[o.video, o.audio, o.fused])
    })));
    let mut ps = ParamStore::new();
    let av = AvFusionBlock::new(&mut ps, "av", d, 2, &mut r).unwrap();
    errs.push(("av fusion block", block_error(&ps, |g, ps| {
        let (x, a) = (g.input(x.clone()), g.input(a.clone()));
        av.forward(g, ps, x, a)
    })));

    let cfg = tiny_cfg();
    let input = student_input(&cfg, 20);
    let mode_names = ["tiny model A", "tiny model V", "tiny model AV"];
    for (mode, name) in Mode::ALL.into_iter().zip(mode_names) {
        let mut m = build_model(ModelKind::Uffia, &cfg, 3).unwrap();
        errs.push((name, model_check(m.as_mut(), &input, mode, 4)));
    }

    let secs = start.elapsed().as_secs_f64();
    let (worst_name, worst) = errs.iter().cloned().fold(("", 0.0), |acc, e| if e.1 > acc.1 { e } else { acc });
    ensure(worst < 1e-4, || format!("{worst_name} rel error {worst:e}"))?;
    ensure(secs < 120.0, || format!("took {secs:.1}s"))?;
    Ok(format!("{} checks, max rel error {worst:.1e} ({worst_name}), {secs:.1}s", errs.len()))
}

// ---- 2: spectral pooling -------------------------------------------------------

fn criterion_simpf() -> Outcome {
    let mut r = rng::seeded(99);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    while checked < 200 {
        let t = r.random_range(2..64);
        let m = r.random_range(1..8);
        let k: f64 = r.random_range(0.05..=1.0);
        let n = (k * t as f64).floor() as usize;
        if n == 0 {
            continue;
        }
        let values = Tensor::from_fn([t, m], |_| r.random_range(-20.0..20.0)).unwrap();
        let mel = MelFeature { values, compression: 1.0 };
        let got = simpf_pool(&mel, k).map_err(|e| e.to_string())?;
        ensure(got.values.shape() == [n, m], || format!("k={k}, T={t}: shape {:?}", got.values.shape()))?;
        worst = worst.max(got.values.max_abs_diff(&oracle(&mel.values, n)));
        checked += 1;
    }
    ensure(worst < 1e-9, || format!("max deviation {worst:e}"))?;

    let values = Tensor::from_fn([128, 128], |_| r.random_range(-10.0..5.0)).unwrap();
    let mel = MelFeature { values: values.clone(), compression: 1.0 };
    let id = simpf_pool(&mel, 1.0).unwrap().values.max_abs_diff(&values);
    ensure(id < 1e-9, || format!("k=1 deviates by {id:e}"))?;
    let half = simpf_pool(&mel, 0.5).unwrap();
    ensure(half.values.shape() == [64, 128], || format!("128 frames pooled to {:?}", half.values.shape()))?;
    Ok(format!("200 matrices, max deviation {worst:.1e}; k=1 identity; 128x128 -> 64x128"))
}

// ---- 3: attention ----------------------------------------------------------------

fn criterion_attention() -> Outcome {
    let mut worst_row: Real = 0.0;
    let mut worst_perm: Real = 0.0;
    for seed in 0..50u64 {
        let heads = [1, 2, 4][seed as usize % 3];
        let (nq, nk) = (1 + seed as usize % 5, 2 + seed as usize % 6);
        let mut ps = ParamStore::new();
        let p = AttentionParams::new(&mut ps, "a", 8, heads, &mut rng::seeded(seed)).unwrap();
        let q = uniform(&[nq, 8], -3.0, 3.0, seed + 100);
        let kv = uniform(&[nk, 8], -3.0, 3.0, seed + 200);
        let rows: Vec<Vec<Real>> = (0..nk).map(|i| kv.row((i + 1) % nk).to_vec()).collect();
        let kv_p = Tensor::from_rows(&rows).unwrap();
        let run = |kv: &Tensor| {
            let mut g = Graph::new();
            let (qv, kvv) = (g.input(q.clone()), g.input(kv.clone()));
            let o = mha(&mut g, &ps, &p, qv, kvv, kvv).unwrap();
            let sums: Vec<Real> = o.weights.iter().flat_map(|w| (0..nq).map(|i| g.value(*w).row(i).iter().sum::<Real>()).collect::<Vec<_>>()).collect();
            (g.value(o.out).clone(), sums)
        };
        let (out, sums) = run(&kv);
        worst_row = sums.iter().fold(worst_row, |m, s| m.max((s - 1.0).abs()));
        worst_perm = worst_perm.max(out.max_abs_diff(&run(&kv_p).0));
    }
    ensure(worst_row < 1e-6, || format!("row sums off by {worst_row:e}"))?;
    ensure(worst_perm < 1e-10, || format!("permutation changed output by {worst_perm:e}"))?;

    let d = 16;
    let mut ps = ParamStore::new();
    let layer = BottleneckLayer::new(&mut ps, "bn", d, 4, 32, &mut rng::seeded(7)).unwrap();
    let (za, zf, frozen) = (uniform(&[5, d], -1.0, 1.0, 1), uniform(&[2, d], -1.0, 1.0, 2), uniform(&[2, d], -1.0, 1.0, 3));
    let audio_path = |video_seed: u64| {
        let mut g = Graph::new();
        let zv = g.input(uniform(&[6, d], -1.0, 1.0, video_seed));
        let (a, f, fz) = (g.input(za.clone()), g.input(zf.clone()), g.input(frozen.clone()));
        let o = layer.forward(&mut g, &ps, zv, a, f, Some(fz)).unwrap();
        (g.value(o.audio).clone(), g.value(o.fused).clone())
    };
    ensure(audio_path(10) == audio_path(11), || "audio path depends on video with frozen bottleneck".into())?;

    check_bottleneck_tokens(2).map_err(|e| e.to_string())?;
    let canonical = ModelConfig::canonical();
    canonical.validate().map_err(|e| e.to_string())?;
    let mut ps = ParamStore::new();
    let big = BottleneckLayer::new(&mut ps, "bn", canonical.d, canonical.heads, canonical.ffn, &mut rng::seeded(8)).unwrap();
    let mut g = Graph::new();
    let zv = g.input(uniform(&[4, 768], -1.0, 1.0, 4));
    let a = g.input(uniform(&[3, 768], -1.0, 1.0, 5));
    let f = g.input(uniform(&[2, 768], -1.0, 1.0, 6));
    let o = big.forward(&mut g, &ps, zv, a, f, None).map_err(|e| e.to_string())?;
    ensure(g.shape(o.fused) == [2, 768], || format!("fused tokens {:?}", g.shape(o.fused)))?;
    Ok(format!("row sums within {worst_row:.0e}, permutation drift {worst_perm:.0e}, bottleneck isolation bitwise, B=2 d=768 ok"))
}

// ---- 4: modality dropout ------------------------------------------------------------

fn criterion_dropout() -> Outcome {
    let mut report = Vec::new();
    for (i, p) in [[0.7, 0.15, 0.15], [0.5, 0.25, 0.25], [0.4, 0.2, 0.4]].into_iter().enumerate() {
        let cfg = DropoutConfig::new(p[0], p[1], p[2]).map_err(|e| e.to_string())?;
        let mut r = rng::seeded(i as u64);
        let mut c = [0usize; 3];
        for _ in 0..100_000 {
            c[match cfg.draw(&mut r) {
                Mode::AV => 0,
                Mode::A => 1,
                Mode::V => 2,
            }] += 1;
        }
        let f = c.map(|n| n as f64 / 1e5);
        let dev = (0..3).map(|k| (f[k] - p[k]).abs()).fold(0.0, f64::max);
        ensure(dev <= 0.01, || format!("{p:?}: observed {f:?}"))?;
        report.push(format!("{dev:.4}"));
    }
    let cfg = tiny_cfg();
    let input = student_input(&cfg, 3);
    let mut r = rng::seeded(4);
    for _ in 0..100 {
        let (out, mode) = apply_modality_dropout(&input, &DropoutConfig::default(), &mut r).unwrap();
        let masked = match mode {
            Mode::A => out.video,
            Mode::V => out.audio,
            Mode::AV => continue,
        };
        ensure(masked.unwrap().data().iter().all(|&v| v == 0.0), || format!("{mode}: masked block not zero"))?;
    }
    Ok(format!("max frequency deviation {} over 1e5 draws; masked blocks exactly zero", report.join(" / ")))
}

// ---- 5: mode isolation -------------------------------------------------------------

fn criterion_isolation() -> Outcome {
    let cfg = tiny_cfg();
    let m = build_model(ModelKind::Uffia, &cfg, 0).unwrap();
    let base = student_input(&cfg, 1);
    for seed in 0..10 {
        let v2 = ModelInput { audio: base.audio.clone(), video: Some(uniform(base.video.as_ref().unwrap().shape(), 0.0, 1.0, 50 + seed)) };
        let a2 = ModelInput { audio: Some(uniform(base.audio.as_ref().unwrap().shape(), -3.0, 3.0, 70 + seed)), video: base.video.clone() };
        ensure(m.infer(&base, Mode::A).unwrap().logits == m.infer(&v2, Mode::A).unwrap().logits, || "A mode saw video".into())?;
        ensure(m.infer(&base, Mode::V).unwrap().logits == m.infer(&a2, Mode::V).unwrap().logits, || "V mode saw audio".into())?;
    }
    let t = trained();
    let rows = sweep(t, Mode::V)?;
    let accs: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    ensure(accs.iter().all(|&a| a == accs[0]), || format!("V accuracy varies with audio SNR: {accs:?}"))?;
    Ok(format!("bitwise invariance over 10 perturbations; V accuracy {:.3} at every SNR", accs[0]))
}

// ---- 6: distillation loss -------------------------------------------------------------

fn kd_value(zs: &Tensor, zt: &Tensor, y: &[usize], cfg: &KdConfig) -> Real {
    let mut g = Graph::new();
    let s = g.input(zs.clone());
    let l = kd_loss(&mut g, s, zt, y, cfg).unwrap();
    g.value(l).data()[0]
}

fn criterion_kd() -> Outcome {
    let mut worst_ce: Real = 0.0;
    let mut worst_kl: Real = 0.0;
    for seed in 0..50 {
        let zs = uniform(&[3, 4], -4.0, 4.0, seed);
        let zt = uniform(&[3, 4], -4.0, 4.0, seed + 1000);
        let y = [0, 2, 3];
        let mut g = Graph::new();
        let s = g.input(zs.clone());
        let ce = g.cross_entropy(s, &y).unwrap();
        let ce = g.value(ce).data()[0];
        worst_ce = worst_ce.max((kd_value(&zs, &zt, &y, &KdConfig { lambda: 1.0, ..KdConfig::default() }) - ce).abs());
        let tau = 2.5;
        let matched = zt.map(|v| v / tau);
        worst_kl = worst_kl.max(kd_value(&matched, &zt, &y, &KdConfig { lambda: 0.0, tau, ..KdConfig::default() }).abs());
    }
    ensure(worst_ce < 1e-12, || format!("λ=1 differs from CE by {worst_ce:e}"))?;
    ensure(worst_kl < 1e-12, || format!("matched logits leave KL {worst_kl:e}"))?;

    let ps1 = 1.0 / (1.0 + (-1.0f64).exp());
    let pt1 = 1.0 / (1.0 + (-0.8f64).exp());
    let expect = 0.5 * -ps1.ln() + 0.5 * (ps1 * (ps1 / pt1).ln() + (1.0 - ps1) * ((1.0 - ps1) / (1.0 - pt1)).ln());
    let got = kd_value(&Tensor::new([1, 2], vec![1.0, 0.0]).unwrap(), &Tensor::new([1, 2], vec![2.0, 0.0]).unwrap(), &[0], &KdConfig::default());
    ensure((got - expect).abs() <= 1e-6, || format!("2-class case {got} against {expect}"))?;
    Ok(format!("λ=1 vs CE {worst_ce:.0e}, matched KL {worst_kl:.0e}, 2-class case {got:.6}"))
}

// ---- 7 and 8: synthetic end-to-end ----------------------------------------------------

const SEEDS: [u64; 3] = [0, 1, 2];
const EPOCHS: usize = 50;

struct Run {
    seed: u64,
    cfg: RunConfig,
    ds: Dataset,
    model: Box<dyn Classifier>,
    acc: [f64; 3],
    secs: f64,
}

struct Trained {
    runs: Vec<Run>,
    oracle_agreement: f64,
}

static TRAINED: OnceLock<Trained> = OnceLock::new();

fn trained() -> &'static Trained {
    TRAINED.get_or_init(|| {
        let p = SynthParams::default();
        let agree: usize = parallel::map_indexed(1000, |i| {
            let r = synth_record(&p, 0, i).unwrap();
            let Origin::Synthetic { class, .. } = r.origin else { unreachable!() };
            usize::from(class == r.label)
        })
        .into_iter()
        .sum();
        let runs = SEEDS
            .iter()
            .map(|&seed| {
                let start = Instant::now();
                let mut cfg = RunConfig { seed, ..RunConfig::default() };
                cfg.optim.epochs = EPOCHS;
                let ds = run::load_dataset(&cfg).unwrap();
                let out = run::train(&cfg, &ds, None).unwrap();
                let acc = [Mode::AV, Mode::A, Mode::V].map(|m| out.log.test_accuracy(m).unwrap());
                let secs = start.elapsed().as_secs_f64();
                println!("    seed {seed}: AV {:.3}  A {:.3}  V {:.3}  best epoch {}  {secs:.0}s", acc[0], acc[1], acc[2], out.log.best_epoch);
                Run { seed, cfg, ds, model: out.model, acc, secs }
            })
            .collect();
        Trained { runs, oracle_agreement: agree as f64 / 1000.0 }
    })
}

fn criterion_end_to_end() -> Outcome {
    let t = trained();
    ensure(t.oracle_agreement >= 0.99, || format!("oracle agreement {:.3}", t.oracle_agreement))?;
    let counts = t.runs[0].ds.counts();
    ensure(counts == [800, 100, 100], || format!("split sizes {counts:?}"))?;
    for r in &t.runs {
        let [av, a, v] = r.acc;
        ensure(av >= 0.9, || format!("seed {}: AV {av:.3} < 0.90", r.seed))?;
        ensure(a >= 0.8, || format!("seed {}: A {a:.3} < 0.80", r.seed))?;
        ensure(v >= 0.8, || format!("seed {}: V {v:.3} < 0.80", r.seed))?;
        ensure(av >= a.max(v) - 0.01, || format!("seed {}: AV {av:.3} below max(A, V) - 0.01", r.seed))?;
        ensure(r.secs < 1800.0, || format!("seed {} took {:.0}s", r.seed, r.secs))?;
    }
    let mean = |k: usize| t.runs.iter().map(|r| r.acc[k]).sum::<f64>() / t.runs.len() as f64;
    Ok(format!(
        "{} seeds x {EPOCHS} epochs: mean AV {:.3}, A {:.3}, V {:.3}; oracle agreement {:.3}",
        t.runs.len(),
        mean(0),
        mean(1),
        mean(2),
        t.oracle_agreement
    ))
}

fn sweep(t: &Trained, mode: Mode) -> Result<Vec<SweepRow>, String> {
    let r = &t.runs[0];
    let c = &r.cfg.corruption;
    let test = r.ds.split(Split::Test);
    noise_sweep(r.model.as_ref(), &r.ds, &test, mode, c.noise, &c.snrs, c.visual, r.cfg.seed).map_err(|e| e.to_string())
}

fn criterion_noise_trend() -> Outcome {
    let t = trained();
    let rows = sweep(t, Mode::AV)?;
    let acc: Vec<f64> = rows.iter().map(|r| r.accuracy).collect();
    let (lo, hi) = (acc[0], acc[acc.len() - 1]);
    ensure(rows[0].snr_db < rows[rows.len() - 1].snr_db, || "SNRs must be ascending".into())?;
    ensure(hi >= lo, || format!("{hi:.3} at {} dB below {lo:.3} at {} dB", rows[rows.len() - 1].snr_db, rows[0].snr_db))?;
    let inversions: Vec<f64> = acc.windows(2).filter(|w| w[1] < w[0]).map(|w| w[0] - w[1]).collect();
    ensure(inversions.len() <= 1 && inversions.iter().all(|&d| d <= 0.02 + 1e-12), || format!("inversions {inversions:?}"))?;
    let curve: Vec<String> = rows.iter().map(|r| format!("{}dB {:.3}", r.snr_db, r.accuracy)).collect();
    Ok(curve.join(", "))
}

// ---- 9: efficiency ------------------------------------------------------------------------

fn criterion_efficiency() -> Outcome {
    let cfg = ModelConfig::canonical();
    let flops = |kind: ModelKind| -> Result<u64, String> {
        let m = build_model(kind, &cfg, 0).map_err(|e| e.to_string())?;
        count_model_flops(m.as_ref(), &clip_shapes(&cfg, &m.input_spec()), Mode::AV).map_err(|e| e.to_string())
    };
    let student = flops(ModelKind::Uffia)?;
    let self_fusion = flops(ModelKind::FusionSelf)?;
    ensure(student < self_fusion, || format!("student {student} >= self-attention fusion {self_fusion}"))?;

    let m = UffiaModel::new(&cfg, Variant::AudioOnly, &mut rng::seeded(0)).map_err(|e| e.to_string())?;
    let pooled = count_flops(&m.audio_frontend_profile(128, 128, 0.5).unwrap()).unwrap() as f64;
    let full = count_flops(&m.audio_frontend_profile(128, 128, 1.0).unwrap()).unwrap() as f64;
    let ratio = pooled / full;
    ensure((0.475..=0.525).contains(&ratio), || format!("audio-path ratio {ratio:.4}"))?;
    Ok(format!(
        "student {:.2} GFLOPs < self-attention fusion {:.2} GFLOPs; frontend-dependent audio path at k=0.5 is {ratio:.3} of k=1",
        student as f64 / 1e9,
        self_fusion as f64 / 1e9
    ))
}

// ---- 10: determinism ----------------------------------------------------------------------

fn criterion_determinism() -> Outcome {
    let mut cfg = RunConfig::default();
    cfg.data = DataConfig::Synthetic(SynthConfig { clips: 40, fractions: [0.6, 0.2, 0.2], ..SynthConfig::default() });
    cfg.optim.epochs = 2;
    cfg.optim.batch_size = 8;
    cfg.corruption.snrs = vec![-5.0, 10.0];
    let once = || -> Vec<Vec<u8>> {
        parallel::with_threads(1, || {
            let dir = tempfile::tempdir().unwrap();
            let ds = run::load_dataset(&cfg).unwrap();
            run::train(&cfg, &ds, Some(dir.path())).unwrap();
            let sweep_dir = dir.path().join("sweep");
            run::sweep_checkpoint(&cfg, &ds, &dir.path().join(MODEL_CKPT), None, Some(&sweep_dir)).unwrap();
            [dir.path().join(MODEL_CKPT), dir.path().join(METRICS_CSV), sweep_dir.join("sweep.csv")]
                .iter()
                .map(|p| std::fs::read(p).unwrap())
                .collect()
        })
    };
    let (a, b) = (once(), once());
    let names = ["checkpoint", "metrics csv", "sweep csv"];
    for ((x, y), name) in a.iter().zip(&b).zip(names) {
        ensure(x == y, || format!("{name} differs between runs"))?;
    }
    Ok(format!("checkpoint ({} bytes), metrics and sweep CSVs byte-identical at 1 thread", a[0].len()))
}

fn main() {
    let criteria: [(usize, &str, fn() -> Outcome); 10] = [
        (1, "gradient suite", criterion_gradients),
        (2, "spectral pooling oracle", criterion_simpf),
        (3, "attention invariants", criterion_attention),
        (4, "modality dropout", criterion_dropout),
        (5, "mode isolation", criterion_isolation),
        (6, "distillation loss", criterion_kd),
        (7, "synthetic end-to-end", criterion_end_to_end),
        (8, "noise robustness trend", criterion_noise_trend),
        (9, "efficiency ordering", criterion_efficiency),
        (10, "determinism", criterion_determinism),
    ];
    let only: Option<Vec<usize>> = std::env::var("UFFIA_ACCEPTANCE")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect());
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (n, name, f) in criteria {
        if only.as_ref().is_some_and(|o| !o.contains(&n)) {
            continue;
        }
        let start = Instant::now();
        let outcome = panic::catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("criterion {n} ({name}): PASS [{secs:.1}s] {msg}"),
            Err(msg) => {
                failed += 1;
                println!("criterion {n} ({name}): FAIL [{secs:.1}s] {msg}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
