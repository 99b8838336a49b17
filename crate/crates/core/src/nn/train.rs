use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{argmax, Mlp, Sgd};
use crate::autodiff::{log_sum_exp, Graph, Tensor};
use crate::data::{Dataset, OOD_LABEL};
use crate::error::{Error, Result};
use crate::losses::{select_loss, LossKind, LossSchedule};

/// Mean reservation probability at or above which a finished gambler-loss
/// run is reported as having collapsed onto "always abstain".
pub const COLLAPSE_RESERVATION: f64 = 0.99;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub seed: u64,
    /// Epochs of cross-entropy before switching to the gambler's loss.
    pub pretrain_epochs: usize,
    /// Payoff `o` of the gambler's loss.
    pub payoff: f64,
    /// Epochs at which the learning rate is multiplied by `lr_decay`.
    #[serde(default)]
    pub lr_milestones: Vec<usize>,
    #[serde(default = "default_decay")]
    pub lr_decay: f64,
}

fn default_decay() -> f64 {
    0.5
}

impl TrainConfig {
    pub fn synthetic() -> Self {
        Self {
            epochs: 200,
            batch_size: 100,
            learning_rate: 0.05,
            momentum: 0.9,
            seed: 0,
            pretrain_epochs: 0,
            payoff: 1.5,
            lr_milestones: vec![100, 150],
            lr_decay: 0.5,
        }
    }

    pub fn mnist() -> Self {
        Self {
            epochs: 15,
            batch_size: 64,
            learning_rate: 0.01,
            momentum: 0.9,
            seed: 0,
            pretrain_epochs: 2,
            payoff: 2.2,
            lr_milestones: vec![8, 12],
            lr_decay: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.payoff > 1.0) {
            return Err(Error::PayoffTooSmall(self.payoff));
        }
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::invalid("epochs and batch size must be positive"));
        }
        if self.pretrain_epochs > self.epochs {
            return Err(Error::invalid(format!(
                "pretrain epochs ({}) exceed total epochs ({})",
                self.pretrain_epochs, self.epochs
            )));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::invalid("learning rate must be positive"));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::invalid("momentum must lie in [0, 1)"));
        }
        if !(self.lr_decay > 0.0) {
            return Err(Error::invalid("lr decay must be positive"));
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<LossSchedule> {
        LossSchedule::new(self.pretrain_epochs, self.payoff)
    }

    pub fn learning_rate_at(&self, epoch: usize) -> f64 {
        let passed = self.lr_milestones.iter().filter(|&&m| m <= epoch).count();
        self.learning_rate * self.lr_decay.powi(passed as i32)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub loss_kind: String,
    /// Example-weighted mean training loss over the epoch.
    pub loss: f64,
    pub train_acc: f64,
    /// Mean softmax mass on the reservation output.
    pub mean_reservation: f64,
}

#[derive(Clone, Debug)]
pub struct Trained {
    pub model: Mlp,
    pub log: Vec<EpochLog>,
}

/// Minibatch SGD; cross-entropy for the first `pretrain_epochs`, then the
/// gambler's loss. Deterministic given `cfg.seed`.
pub fn train(mut model: Mlp, data: &Dataset, cfg: &TrainConfig) -> Result<Trained> {
    cfg.validate()?;
    let schedule = cfg.schedule()?;
    if data.is_empty() {
        return Err(Error::invalid("training set is empty"));
    }
    if data.dim() != model.spec.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: model.spec.input_dim(),
            got: data.dim(),
        });
    }
    let m = model.spec.classes();
    if let Some(&bad) = data.labels.iter().find(|&&y| y >= m) {
        let what = if bad == OOD_LABEL {
            "out-of-distribution".to_string()
        } else {
            bad.to_string()
        };
        return Err(Error::invalid(format!("training label {what} outside [0, {m})")));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opt = Sgd::new(cfg.learning_rate, cfg.momentum);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let d = data.dim();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        opt.lr = cfg.learning_rate_at(epoch);
        let kind = select_loss(epoch, &schedule);
        order.shuffle(&mut rng);

        let (mut loss_sum, mut correct, mut reserve_sum) = (0.0, 0usize, 0.0);
        for (batch, idx) in order.chunks(cfg.batch_size).enumerate() {
            let mut xs = Vec::with_capacity(idx.len() * d);
            for &i in idx {
                xs.extend_from_slice(data.features.row(i));
            }
            let labels: Vec<usize> = idx.iter().map(|&i| data.labels[i]).collect();

            let mut g = Graph::new();
            let x = g.leaf(Tensor::matrix(idx.len(), d, xs)?);
            let (z, params) = model.forward(&mut g, x)?;
            let loss = kind.apply(&mut g, z, &labels)?;
            let value = g.value(loss).item();
            if !value.is_finite() {
                return Err(Error::NonFiniteLoss {
                    epoch,
                    batch,
                    loss: value,
                });
            }
            g.backward(loss)?;

            loss_sum += value * idx.len() as f64;
            for (row, &y) in g.value(z).data().chunks_exact(m + 1).zip(&labels) {
                if argmax(&row[..m]) == y {
                    correct += 1;
                }
                reserve_sum += (row[m] - log_sum_exp(row)).exp();
            }

            let grads: Vec<&Tensor> = params.iter().map(|&p| g.grad(p)).collect();
            opt.step(&mut model.parameters_mut(), &grads)
                .map_err(|_| Error::NonFiniteGradient { epoch, batch })?;
        }

        let n = data.len() as f64;
        log.push(EpochLog {
            epoch,
            loss_kind: kind.name().to_string(),
            loss: loss_sum / n,
            train_acc: correct as f64 / n,
            mean_reservation: reserve_sum / n,
        });
    }

    let last = log.last().expect("at least one epoch");
    if matches!(select_loss(last.epoch, &schedule), LossKind::Gambler { .. })
        && last.mean_reservation >= COLLAPSE_RESERVATION
    {
        return Err(Error::TrivialCollapse {
            epoch: last.epoch,
            mean_reservation: last.mean_reservation,
        });
    }
    Ok(Trained { model, log })
}
