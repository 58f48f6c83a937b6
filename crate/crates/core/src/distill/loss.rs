use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Graph, Real, Tensor, Var};

/// Which way round the divergence between student and softened teacher is taken.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KlDirection {
    /// `KL(softmax(Z_s) ‖ softmax(Z_t/τ))`.
    #[default]
    StudentTeacher,
    /// `KL(softmax(Z_t/τ) ‖ softmax(Z_s))`, the usual distillation form.
    TeacherStudent,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct KdConfig {
    pub lambda: f64,
    pub tau: f64,
    pub direction: KlDirection,
}

impl Default for KdConfig {
    fn default() -> Self {
        Self { lambda: 0.5, tau: 2.5, direction: KlDirection::StudentTeacher }
    }
}

impl KdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::config(format!("temperature must be positive, got {}", self.tau)));
        }
        if !(0.0..=1.0).contains(&self.lambda) {
            return Err(Error::config(format!("lambda must lie in [0, 1], got {}", self.lambda)));
        }
        Ok(())
    }
}

/// Row-wise softmax of `logits / tau` and its logarithm, as plain tensors.
fn softened(logits: &Tensor, tau: f64) -> Result<(Tensor, Tensor)> {
    let (_, c) = logits.dims2()?;
    let mut p = logits.map(|v| v / tau as Real);
    let mut logp = p.clone();
    for (pr, lr) in p.data_mut().chunks_mut(c).zip(logp.data_mut().chunks_mut(c)) {
        let mx = pr.iter().copied().fold(Real::NEG_INFINITY, Real::max);
        let lse = mx + pr.iter().map(|v| (v - mx).exp()).sum::<Real>().ln();
        for (a, b) in pr.iter_mut().zip(lr.iter_mut()) {
            *b = *a - lse;
            *a = b.exp();
        }
    }
    Ok((p, logp))
}

/// `λ·CE(Z_s, y) + (1 − λ)·KL`, averaged over the batch. The temperature
/// divides the teacher logits only and there is no `τ²` factor.
pub fn kd_loss(g: &mut Graph, student: Var, teacher: &Tensor, labels: &[usize], cfg: &KdConfig) -> Result<Var> {
    cfg.validate()?;
    if g.shape(student) != teacher.shape() {
        return Err(Error::dim(format!("student {:?} against teacher {:?} logits", g.shape(student), teacher.shape())));
    }
    if !teacher.all_finite() {
        return Err(Error::Numeric("non-finite teacher logits".into()));
    }
    let batch = teacher.dims2()?.0 as Real;
    let ce = g.cross_entropy(student, labels)?;
    let (pt, log_pt) = softened(teacher, cfg.tau)?;
    let log_ps = g.log_softmax(student)?;
    let terms = match cfg.direction {
        KlDirection::StudentTeacher => {
            let ps = g.softmax(student, 1)?;
            let log_pt = g.input(log_pt);
            let diff = g.sub(log_ps, log_pt)?;
            g.mul(ps, diff)?
        }
        KlDirection::TeacherStudent => {
            let pt_v = g.input(pt);
            let log_pt = g.input(log_pt);
            let diff = g.sub(log_pt, log_ps)?;
            g.mul(pt_v, diff)?
        }
    };
    let kl = g.sum(terms);
    let kl = g.scale(kl, 1.0 / batch);
    let a = g.scale(ce, cfg.lambda as Real);
    let b = g.scale(kl, (1.0 - cfg.lambda) as Real);
    g.add(a, b)
}
