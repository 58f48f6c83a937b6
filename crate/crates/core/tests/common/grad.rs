use uffia_core::model::{Classifier, Mode, ModelInput};
use uffia_core::numerics::gradcheck::{rel_error, STEP};
use uffia_core::numerics::{Graph, Real, Var};
use uffia_core::Result;

use super::uniform;

pub const TOL: Real = 1e-5;

/// Random projection to a scalar, so that no output element has a trivial
/// upstream gradient.
pub fn project(g: &mut Graph, v: Var, seed: u64) -> Result<Var> {
    let w = g.input(uniform(g.shape(v), -1.0, 1.0, seed));
    let p = g.mul(v, w)?;
    Ok(g.sum(p))
}

/// Central differences over the model's own parameter store.
pub fn model_check(model: &mut dyn Classifier, input: &ModelInput, mode: Mode, per_param: usize) -> Real {
    let label = [2usize];
    let loss_of = |m: &dyn Classifier| -> Real {
        let mut g = Graph::new();
        let out = m.forward(&mut g, input, mode).unwrap();
        let l = g.cross_entropy(out.logits, &label).unwrap();
        g.value(l).data()[0]
    };
    let mut g = Graph::new();
    let out = model.forward(&mut g, input, mode).unwrap();
    let l = g.cross_entropy(out.logits, &label).unwrap();
    let grads = g.backward(l).unwrap().param_grads(&g, model.params());
    let ids: Vec<_> = model.params().iter().filter(|(_, p)| p.trainable).map(|(id, p)| (id, p.value.len())).collect();
    let mut worst: Real = 0.0;
    let mut touched = 0;
    for (id, n) in ids {
        let stride = (n / per_param).max(1);
        for j in (0..n).step_by(stride) {
            let orig = model.params().value(id).data()[j];
            model.params_mut().value_mut(id).data_mut()[j] = orig + STEP;
            let up = loss_of(model);
            model.params_mut().value_mut(id).data_mut()[j] = orig - STEP;
            let down = loss_of(model);
            model.params_mut().value_mut(id).data_mut()[j] = orig;
            let analytic = grads.get(id).map_or(0.0, |t| t.data()[j]);
            if analytic != 0.0 {
                touched += 1;
            }
            worst = worst.max(rel_error(analytic, (up - down) / (2.0 * STEP)));
        }
    }
    assert!(touched > 0, "no parameter received gradient");
    worst
}

