//! Run settings: defaults, then a `key = value` file, then flags.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use graphssl_core::augment::{AugmentKind, AugmentPool, AugmentSpec};
use graphssl_core::encoder::EncoderConfig;
use graphssl_core::eval::ProbeConfig;
use graphssl_core::losses::{LossKind, LossParams};
use graphssl_core::trainer::{AdamConfig, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("{}:{line}: {detail}", path.display())]
    Malformed {
        path: PathBuf,
        line: usize,
        detail: String,
    },
    #[error("unknown setting '{0}'")]
    UnknownKey(String),
    #[error("bad value '{value}' for {key}: {detail}")]
    BadValue {
        key: String,
        value: String,
        detail: String,
    },
    #[error("could not read config {}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Settings {
    pub dataset: String,
    pub data_dir: PathBuf,
    pub loss: LossKind,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub seed: u64,
    pub layers: usize,
    pub hidden_dim: usize,
    pub projector_dim: usize,
    pub lambda: f64,
    pub mu: f64,
    pub nu: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub p: f64,
    pub temperature: f64,
    pub lambda_bt: f64,
    pub aug_a: AugmentKind,
    pub aug_b: AugmentKind,
    pub ratio: f64,
    pub folds: usize,
    pub repeats: usize,
    pub probe_epochs: usize,
    pub probe_lr: f64,
    pub l2: f64,
}

impl Default for Settings {
    fn default() -> Self {
        let train = TrainConfig::default();
        let loss = LossParams::default();
        let enc = EncoderConfig::default();
        let probe = ProbeConfig::default();
        Self {
            dataset: "MUTAG".into(),
            data_dir: "data".into(),
            loss: train.loss,
            epochs: train.epochs,
            batch_size: train.batch_size,
            learning_rate: train.adam.learning_rate,
            seed: 0,
            layers: enc.num_layers,
            hidden_dim: enc.hidden_dim,
            projector_dim: enc.projector_dim,
            lambda: loss.lambda,
            mu: loss.mu,
            nu: loss.nu,
            gamma: loss.gamma,
            epsilon: loss.epsilon,
            p: loss.p,
            temperature: loss.temperature,
            lambda_bt: loss.lambda_bt,
            aug_a: AugmentKind::NodeDrop,
            aug_b: AugmentKind::Subgraph,
            ratio: 0.2,
            folds: probe.folds,
            repeats: probe.repeats,
            probe_epochs: probe.epochs,
            probe_lr: probe.learning_rate,
            l2: probe.l2,
        }
    }
}

/// Every accepted key, in the spelling used by flags.
pub const KEYS: &[&str] = &[
    "dataset", "data-dir", "loss", "epochs", "batch-size", "lr", "seed", "layers", "hidden-dim",
    "projector-dim", "lambda", "mu", "nu", "gamma", "epsilon", "p", "temperature", "lambda-bt",
    "aug-a", "aug-b", "ratio", "folds", "repeats", "probe-epochs", "probe-lr", "l2",
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.parse().map_err(|e: T::Err| ConfigError::BadValue {
        key: key.to_owned(),
        value: value.to_owned(),
        detail: e.to_string(),
    })
}

impl Settings {
    /// Sets one value. Keys may use `-` or `_`.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let key = key.trim().replace('_', "-");
        let v = value.trim();
        let k = key.as_str();
        match k {
            "dataset" => self.dataset = v.to_owned(),
            "data-dir" => self.data_dir = v.into(),
            "loss" => self.loss = parse(k, v)?,
            "epochs" => self.epochs = parse(k, v)?,
            "batch-size" => self.batch_size = parse(k, v)?,
            "lr" | "learning-rate" => self.learning_rate = parse(k, v)?,
            "seed" => self.seed = parse(k, v)?,
            "layers" => self.layers = parse(k, v)?,
            "hidden-dim" => self.hidden_dim = parse(k, v)?,
            "projector-dim" => self.projector_dim = parse(k, v)?,
            "lambda" => self.lambda = parse(k, v)?,
            "mu" => self.mu = parse(k, v)?,
            "nu" => self.nu = parse(k, v)?,
            "gamma" => self.gamma = parse(k, v)?,
            "epsilon" => self.epsilon = parse(k, v)?,
            "p" => self.p = parse(k, v)?,
            "temperature" => self.temperature = parse(k, v)?,
            "lambda-bt" => self.lambda_bt = parse(k, v)?,
            "aug-a" => self.aug_a = parse(k, v)?,
            "aug-b" => self.aug_b = parse(k, v)?,
            "ratio" => self.ratio = parse(k, v)?,
            "folds" => self.folds = parse(k, v)?,
            "repeats" => self.repeats = parse(k, v)?,
            "probe-epochs" => self.probe_epochs = parse(k, v)?,
            "probe-lr" => self.probe_lr = parse(k, v)?,
            "l2" => self.l2 = parse(k, v)?,
            _ => return Err(ConfigError::UnknownKey(key)),
        }
        Ok(())
    }

    /// Every setting as `(key, value)` text that [`Settings::set`] reads back.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        vec![
            ("dataset", self.dataset.clone()),
            ("data-dir", self.data_dir.display().to_string()),
            ("loss", self.loss.name().to_owned()),
            ("epochs", self.epochs.to_string()),
            ("batch-size", self.batch_size.to_string()),
            ("lr", self.learning_rate.to_string()),
            ("seed", self.seed.to_string()),
            ("layers", self.layers.to_string()),
            ("hidden-dim", self.hidden_dim.to_string()),
            ("projector-dim", self.projector_dim.to_string()),
            ("lambda", self.lambda.to_string()),
            ("mu", self.mu.to_string()),
            ("nu", self.nu.to_string()),
            ("gamma", self.gamma.to_string()),
            ("epsilon", self.epsilon.to_string()),
            ("p", self.p.to_string()),
            ("temperature", self.temperature.to_string()),
            ("lambda-bt", self.lambda_bt.to_string()),
            ("aug-a", self.aug_a.name().to_owned()),
            ("aug-b", self.aug_b.name().to_owned()),
            ("ratio", self.ratio.to_string()),
            ("folds", self.folds.to_string()),
            ("repeats", self.repeats.to_string()),
            ("probe-epochs", self.probe_epochs.to_string()),
            ("probe-lr", self.probe_lr.to_string()),
            ("l2", self.l2.to_string()),
        ]
    }

    /// Applies a config file. Blank lines and `#` comments are skipped.
    pub fn apply_file(&mut self, path: &Path) -> Result<(), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let malformed = |detail: String| ConfigError::Malformed {
                path: path.to_path_buf(),
                line: i + 1,
                detail,
            };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| malformed(format!("expected 'key = value', found '{line}'")))?;
            self.set(key, value).map_err(|e| malformed(e.to_string()))?;
        }
        Ok(())
    }

    pub fn pool(&self) -> graphssl_core::Result<AugmentPool> {
        AugmentPool::new(vec![
            AugmentSpec::new(self.aug_a, self.ratio)?,
            AugmentSpec::new(self.aug_b, self.ratio)?,
        ])
    }

    pub fn train_config(&self) -> graphssl_core::Result<TrainConfig> {
        let cfg = TrainConfig {
            epochs: self.epochs,
            batch_size: self.batch_size,
            adam: AdamConfig {
                learning_rate: self.learning_rate,
                ..AdamConfig::default()
            },
            seed: self.seed,
            loss: self.loss,
            loss_params: LossParams {
                lambda: self.lambda,
                mu: self.mu,
                nu: self.nu,
                gamma: self.gamma,
                epsilon: self.epsilon,
                p: self.p,
                temperature: self.temperature,
                lambda_bt: self.lambda_bt,
                ..LossParams::default()
            },
            pool: self.pool()?,
            encoder: EncoderConfig {
                num_layers: self.layers,
                hidden_dim: self.hidden_dim,
                projector_dim: self.projector_dim,
            },
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn probe_config(&self) -> graphssl_core::Result<ProbeConfig> {
        let cfg = ProbeConfig {
            folds: self.folds,
            repeats: self.repeats,
            epochs: self.probe_epochs,
            learning_rate: self.probe_lr,
            l2: self.l2,
            seed: self.seed,
            ..ProbeConfig::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }
}
