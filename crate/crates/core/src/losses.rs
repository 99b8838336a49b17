//! Training objectives over `(m+1)`-wide logits whose last column is the
//! reservation (abstention) output.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};

/// Validates a logits node against a label batch; returns `(batch, m)`.
fn check_batch(g: &Graph, z: Var, labels: &[usize]) -> Result<(usize, usize)> {
    let shape = g.value(z).shape();
    let &[b, width] = shape else {
        return Err(Error::ShapeMismatch {
            op: "loss",
            left: shape.to_vec(),
            right: vec![labels.len()],
        });
    };
    if width < 2 {
        return Err(Error::invalid(
            "logits need at least one class plus the reservation column",
        ));
    }
    if b != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "loss",
            left: shape.to_vec(),
            right: vec![labels.len()],
        });
    }
    let m = width - 1;
    if let Some(&bad) = labels.iter().find(|&&y| y >= m) {
        return Err(Error::invalid(format!("label {bad} outside [0, {m})")));
    }
    Ok((b, m))
}

/// Gambler's loss: `-mean ln(p̂_y + p̂_{m+1} / o)` with `p̂ = softmax(z)` over
/// all `m+1` columns.
///
/// Evaluated as `lse(z_y, z_{m+1} - ln o) - lse(z)` so no probability is
/// ever materialized.
pub fn gambler_loss(g: &mut Graph, z: Var, labels: &[usize], o: f64) -> Result<Var> {
    if !(o > 1.0) {
        return Err(Error::PayoffTooSmall(o));
    }
    let (b, m) = check_batch(g, z, labels)?;
    if b == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let log_p = g.log_softmax(z)?;
    let gain = g.gather_rows(log_p, labels)?;
    let reserve = g.gather_rows(log_p, &vec![m; b])?;
    let reserve = g.add_scalar(reserve, -o.ln());
    let rate = g.log_add_exp(gain, reserve)?;
    let mean = g.mean(rate);
    Ok(g.scale(mean, -1.0))
}

/// Cross-entropy over the first `m` columns; the reservation logit is ignored.
pub fn cross_entropy_loss(g: &mut Graph, z: Var, labels: &[usize]) -> Result<Var> {
    let (b, m) = check_batch(g, z, labels)?;
    if b == 0 {
        return Err(Error::invalid("empty batch"));
    }
    let classes = g.slice_cols(z, 0, m)?;
    let log_p = g.log_softmax(classes)?;
    let picked = g.gather_rows(log_p, labels)?;
    let mean = g.mean(picked);
    Ok(g.scale(mean, -1.0))
}

/// Cross-entropy warm-up followed by the gambler's loss.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossSchedule {
    pub pretrain_epochs: usize,
    pub payoff: f64,
}

impl LossSchedule {
    pub fn new(pretrain_epochs: usize, payoff: f64) -> Result<Self> {
        if !(payoff > 1.0) {
            return Err(Error::PayoffTooSmall(payoff));
        }
        Ok(Self {
            pretrain_epochs,
            payoff,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum LossKind {
    CrossEntropy,
    Gambler { payoff: f64 },
}

impl LossKind {
    pub fn apply(self, g: &mut Graph, z: Var, labels: &[usize]) -> Result<Var> {
        match self {
            LossKind::CrossEntropy => cross_entropy_loss(g, z, labels),
            LossKind::Gambler { payoff } => gambler_loss(g, z, labels, payoff),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            LossKind::CrossEntropy => "cross_entropy",
            LossKind::Gambler { .. } => "gambler",
        }
    }
}

/// Cross-entropy strictly before `pretrain_epochs`, gambler's loss from then on.
pub fn select_loss(epoch: usize, schedule: &LossSchedule) -> LossKind {
    if epoch < schedule.pretrain_epochs {
        LossKind::CrossEntropy
    } else {
        LossKind::Gambler {
            payoff: schedule.payoff,
        }
    }
}
