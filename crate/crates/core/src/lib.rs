//! Reservation-augmented classifiers trained with the gambler's loss, plus the
//! portfolio math behind them and the selective-classification evaluation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod data;
pub mod error;
pub mod gambling;
pub mod losses;
pub mod nn;
pub mod selective;

pub use autodiff::{Graph, Tensor, Var};
pub use data::{Dataset, OOD_LABEL};
pub use error::{Error, Result};
pub use gambling::{RaceSpec, ReservationBet, Simplex};
pub use losses::{LossKind, LossSchedule};
pub use nn::{Checkpoint, Mlp, ModelSpec, TrainConfig, Trained};
pub use selective::{RiskCoverageCurve, SelectiveResult, Selector, SelectorScores};
