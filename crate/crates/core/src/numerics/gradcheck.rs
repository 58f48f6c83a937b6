//! Central finite-difference gradient checks.
//!
//! The finite-difference side only ever evaluates forward values, so it is
//! independent of every backward rule it verifies. Relative error is
//! `|analytic − numeric| / max(|analytic|, |numeric|, 1e-3)`; the floor keeps
//! near-zero partials from turning rounding noise into large ratios.

use crate::error::Result;
use crate::numerics::{Graph, ParamStore, Real, Tensor, Var};

pub const STEP: Real = 1e-5;
const FLOOR: Real = 1e-3;

#[derive(Clone, Debug)]
pub struct GradReport {
    pub max_rel_error: Real,
    pub worst_input: usize,
    pub worst_index: usize,
    pub checked: usize,
}

pub fn rel_error(analytic: Real, numeric: Real) -> Real {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

pub fn max_rel_error(analytic: &[Real], numeric: &[Real]) -> Real {
    analytic
        .iter()
        .zip(numeric)
        .map(|(&a, &n)| rel_error(a, n))
        .fold(0.0, Real::max)
}

fn scalar(g: &Graph, v: Var) -> Real {
    g.value(v).data()[0]
}

/// Checks `f` with respect to every element of every input tensor.
pub fn check_gradients<F>(inputs: &[Tensor], f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &[Var]) -> Result<Var>,
{
    let mut g = Graph::new();
    let vars: Vec<Var> = inputs.iter().map(|t| g.leaf(t.clone())).collect();
    let loss = f(&mut g, &vars)?;
    let grads = g.backward(loss)?;

    let eval = |perturbed: &[Tensor]| -> Result<Real> {
        let mut g = Graph::new();
        let vars: Vec<Var> = perturbed.iter().map(|t| g.input(t.clone())).collect();
        let loss = f(&mut g, &vars)?;
        Ok(scalar(&g, loss))
    };

    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        checked: 0,
    };
    let mut work: Vec<Tensor> = inputs.to_vec();
    for (ii, v) in vars.iter().enumerate() {
        let zero = inputs[ii].zeros_like();
        let analytic = grads.wrt(*v).unwrap_or(&zero).clone();
        for j in 0..inputs[ii].len() {
            let orig = inputs[ii].data()[j];
            work[ii].data_mut()[j] = orig + STEP;
            let up = eval(&work)?;
            work[ii].data_mut()[j] = orig - STEP;
            let down = eval(&work)?;
            work[ii].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let e = rel_error(analytic.data()[j], numeric);
            report.checked += 1;
            if e > report.max_rel_error {
                report.max_rel_error = e;
                report.worst_input = ii;
                report.worst_index = j;
            }
        }
    }
    Ok(report)
}

/// Checks `f` with respect to the trainable parameters of `store`. At most
/// `per_param` evenly spaced elements of each parameter are probed.
pub fn check_param_gradients<F>(store: &ParamStore, per_param: usize, f: F) -> Result<GradReport>
where
    F: Fn(&mut Graph, &ParamStore) -> Result<Var>,
{
    let mut g = Graph::new();
    let loss = f(&mut g, store)?;
    let pg = g.backward(loss)?.param_grads(&g, store);

    let mut work = store.clone();
    let mut report = GradReport {
        max_rel_error: 0.0,
        worst_input: 0,
        worst_index: 0,
        checked: 0,
    };
    let eval = |s: &ParamStore| -> Result<Real> {
        let mut g = Graph::new();
        let l = f(&mut g, s)?;
        Ok(scalar(&g, l))
    };
    for (id, p) in store.iter() {
        if !p.trainable {
            continue;
        }
        let n = p.value.len();
        let stride = (n / per_param.max(1)).max(1);
        for j in (0..n).step_by(stride) {
            let analytic = pg.get(id).map_or(0.0, |t| t.data()[j]);
            let orig = p.value.data()[j];
            work.value_mut(id).data_mut()[j] = orig + STEP;
            let up = eval(&work)?;
            work.value_mut(id).data_mut()[j] = orig - STEP;
            let down = eval(&work)?;
            work.value_mut(id).data_mut()[j] = orig;
            let e = rel_error(analytic, (up - down) / (2.0 * STEP));
            report.checked += 1;
            if e > report.max_rel_error {
                report.max_rel_error = e;
                report.worst_input = id.index();
                report.worst_index = j;
            }
        }
    }
    Ok(report)
}
