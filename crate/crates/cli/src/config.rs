use std::fs;
use std::path::{Path, PathBuf};

use dg_core::nn::{ModelSpec, TrainConfig};
use dg_core::selective::Selector;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::args::{DatasetKind, RunArgs, SweepArgs};
use crate::error::{io_err, CliError, CliResult};

/// Everything a command needs, after merging defaults, the config file and flags.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetKind,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub selectors: Vec<Selector>,
    pub coverages: Vec<f64>,
    pub out_dir: PathBuf,
    pub data_dir: Option<PathBuf>,
    /// Seed for generating the synthetic data.
    pub data_seed: u64,
    /// Share of the test set held out for threshold calibration.
    pub validation_fraction: f64,
    pub split_seed: u64,
    pub sweep: SweepGrid,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepGrid {
    pub o_min: f64,
    pub o_max: f64,
    pub o_step: f64,
}

impl SweepGrid {
    pub fn validate(&self) -> CliResult<()> {
        if !(self.o_step > 0.0) {
            return Err(CliError::config(format!(
                "o_step must be positive, got {}",
                self.o_step
            )));
        }
        if !(self.o_min > 1.0) {
            return Err(CliError::config(format!("o_min must exceed 1, got {}", self.o_min)));
        }
        if self.o_max < self.o_min {
            return Err(CliError::config(format!(
                "o_max {} is below o_min {}",
                self.o_max, self.o_min
            )));
        }
        Ok(())
    }

    /// `o_min, o_min + step, …` up to `o_max` inclusive, rounded to 1e-9.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.o_max - self.o_min) / self.o_step + 1e-9).floor() as usize + 1;
        (0..n)
            .map(|i| ((self.o_min + i as f64 * self.o_step) * 1e9).round() / 1e9)
            .collect()
    }
}

impl RunConfig {
    pub fn defaults(dataset: DatasetKind) -> Self {
        let (model, train, sweep) = match dataset {
            DatasetKind::Synthetic => (
                ModelSpec::synthetic(),
                TrainConfig::synthetic(),
                SweepGrid {
                    o_min: 1.2,
                    o_max: 2.0,
                    o_step: 0.2,
                },
            ),
            DatasetKind::Mnist => (
                ModelSpec::mnist(),
                TrainConfig::mnist(),
                SweepGrid {
                    o_min: 1.6,
                    o_max: 3.0,
                    o_step: 0.2,
                },
            ),
        };
        Self {
            dataset,
            model,
            train,
            selectors: Selector::ALL.to_vec(),
            coverages: vec![1.0, 0.95, 0.9, 0.85, 0.8],
            out_dir: PathBuf::from("out"),
            data_dir: None,
            data_seed: 0,
            validation_fraction: 0.2,
            split_seed: 0,
            sweep,
        }
    }

    pub fn resolve(args: &RunArgs) -> CliResult<Self> {
        let file = args.config.as_deref().map(read_json).transpose()?;
        let file_dataset = match file.as_ref().and_then(|v| v.get("dataset")) {
            Some(d) => Some(
                serde_json::from_value::<DatasetKind>(d.clone())
                    .map_err(|e| CliError::config(format!("dataset: {e}")))?,
            ),
            None => None,
        };
        let dataset = args.dataset.or(file_dataset).unwrap_or(DatasetKind::Synthetic);
        let mut merged = serde_json::to_value(Self::defaults(dataset)).expect("config serializes");
        if let Some(file) = file {
            merge(&mut merged, file);
        }
        merged["dataset"] = serde_json::to_value(dataset).expect("dataset serializes");
        let mut cfg: RunConfig =
            serde_json::from_value(merged).map_err(|e| CliError::config(format!("config file: {e}")))?;

        let t = &mut cfg.train;
        if let Some(v) = args.payoff {
            t.payoff = v;
        }
        if let Some(v) = args.epochs {
            t.epochs = v;
        }
        if let Some(v) = args.pretrain_epochs {
            t.pretrain_epochs = v;
        }
        if let Some(v) = args.seed {
            t.seed = v;
        }
        if let Some(v) = args.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = args.learning_rate {
            t.learning_rate = v;
        }
        if !args.coverages.is_empty() {
            cfg.coverages = args.coverages.clone();
        }
        if !args.selectors.is_empty() {
            cfg.selectors = args.selectors.clone();
        }
        if let Some(v) = &args.out_dir {
            cfg.out_dir = v.clone();
        }
        if let Some(v) = &args.data_dir {
            cfg.data_dir = Some(v.clone());
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn resolve_sweep(args: &SweepArgs) -> CliResult<Self> {
        let mut cfg = Self::resolve(&args.run)?;
        if let Some(v) = args.o_min {
            cfg.sweep.o_min = v;
        }
        if let Some(v) = args.o_max {
            cfg.sweep.o_max = v;
        }
        if let Some(v) = args.o_step {
            cfg.sweep.o_step = v;
        }
        cfg.sweep.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> CliResult<()> {
        self.model.validate()?;
        self.train.validate()?;
        if let Some(&c) = self.coverages.iter().find(|&&c| !(c > 0.0 && c <= 1.0)) {
            return Err(CliError::config(format!("coverage {c} outside (0, 1]")));
        }
        if self.coverages.is_empty() || self.selectors.is_empty() {
            return Err(CliError::config("need at least one coverage and one selector"));
        }
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return Err(CliError::config(format!(
                "validation_fraction {} outside (0, 1)",
                self.validation_fraction
            )));
        }
        Ok(())
    }

    pub fn mnist_dir(&self) -> PathBuf {
        self.data_dir.clone().unwrap_or_else(|| PathBuf::from("data/mnist"))
    }

    pub fn checkpoint_path(&self, explicit: Option<&Path>) -> PathBuf {
        explicit.map_or_else(|| self.out_dir.join("checkpoint.json"), Path::to_path_buf)
    }
}

fn read_json(path: &Path) -> CliResult<Value> {
    let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Recursively overlays `patch` onto `base`; arrays and scalars are replaced.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn grid_values() {
        let g = SweepGrid {
            o_min: 1.2,
            o_max: 2.0,
            o_step: 0.2,
        };
        assert_eq!(g.values(), vec![1.2, 1.4, 1.6, 1.8, 2.0]);
        let single = SweepGrid {
            o_min: 1.5,
            o_max: 1.5,
            o_step: 0.2,
        };
        assert_eq!(single.values(), vec![1.5]);
        assert!(SweepGrid {
            o_min: 1.0,
            o_max: 2.0,
            o_step: 0.2
        }
        .validate()
        .is_err());
        assert!(SweepGrid {
            o_min: 1.2,
            o_max: 2.0,
            o_step: 0.0
        }
        .validate()
        .is_err());
    }

    #[test]
    fn merge_overlays_nested_objects() {
        let mut base = json!({"train": {"epochs": 200, "seed": 0}, "coverages": [1.0, 0.9]});
        merge(&mut base, json!({"train": {"epochs": 5}, "coverages": [0.8]}));
        assert_eq!(base, json!({"train": {"epochs": 5, "seed": 0}, "coverages": [0.8]}));
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"train": {"epochs": 7, "payoff": 1.8}, "split_seed": 3}"#).unwrap();
        let args = RunArgs {
            config: Some(path),
            epochs: Some(2),
            ..Default::default()
        };
        let cfg = RunConfig::resolve(&args).unwrap();
        assert_eq!(cfg.train.epochs, 2);
        assert_eq!(cfg.train.payoff, 1.8);
        assert_eq!(cfg.split_seed, 3);
        assert_eq!(cfg.dataset, DatasetKind::Synthetic);
    }

    #[test]
    fn payoff_at_most_one_is_a_config_error() {
        let args = RunArgs {
            payoff: Some(0.9),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&args), Err(CliError::Config(_))));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cfg.json");
        fs::write(&path, r#"{"epochz": 3}"#).unwrap();
        let args = RunArgs {
            config: Some(path),
            ..Default::default()
        };
        assert!(matches!(RunConfig::resolve(&args), Err(CliError::Config(_))));
    }
}
