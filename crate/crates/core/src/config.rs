//! `key = value` run configuration.
//!
//! Blank lines and lines starting with `#` are ignored. Relative paths in a
//! config file are resolved against the file's directory.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use thiserror::Error;

use crate::dragonfly::DaConfig;
use crate::neuralnet::TrainConfig;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: expected `key = value`, got {text:?}")]
    Syntax { line: usize, text: String },
    #[error("unknown config key `{0}`")]
    UnknownKey(String),
    #[error("bad value {value:?} for `{key}`: {reason}")]
    BadValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("config is missing `{0}`")]
    Missing(&'static str),
}

pub type Result<T, E = ConfigError> = std::result::Result<T, E>;

/// What the perceptron consumes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputMode {
    /// The normalized 128x128 image, flattened row-major (16384 inputs).
    #[default]
    Flat,
    /// The 64 wavelet statistics.
    Features,
}

impl InputMode {
    pub fn input_dim(self) -> usize {
        match self {
            InputMode::Flat => crate::IMAGE_SIDE * crate::IMAGE_SIDE,
            InputMode::Features => crate::wavelet::FEATURE_LEN,
        }
    }

    pub fn from_input_dim(dim: usize) -> Option<Self> {
        [InputMode::Flat, InputMode::Features]
            .into_iter()
            .find(|m| m.input_dim() == dim)
    }
}

impl FromStr for InputMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "flat" => Ok(InputMode::Flat),
            "features" => Ok(InputMode::Features),
            other => Err(format!("expected `flat` or `features`, got `{other}`")),
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            InputMode::Flat => "flat",
            InputMode::Features => "features",
        })
    }
}

/// Search space and budget for hyperparameter tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct TuneConfig {
    pub pop: usize,
    pub max_iter: usize,
    /// Epochs per candidate evaluation.
    pub epochs: usize,
    pub lr_min: f64,
    pub lr_max: f64,
    pub hidden_min: f64,
    pub hidden_max: f64,
}

impl Default for TuneConfig {
    fn default() -> Self {
        let da = DaConfig::<f64>::tuning(1);
        Self {
            pop: da.pop,
            max_iter: da.max_iter,
            epochs: 10,
            lr_min: da.lb[0],
            lr_max: da.ub[0],
            hidden_min: da.lb[1],
            hidden_max: da.ub[1],
        }
    }
}

impl TuneConfig {
    pub fn da_config(&self, seed: u64) -> DaConfig<f64> {
        DaConfig {
            dim: 2,
            lb: vec![self.lr_min, self.hidden_min],
            ub: vec![self.lr_max, self.hidden_max],
            pop: self.pop,
            max_iter: self.max_iter,
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub input_mode: InputMode,
    /// `train.seed` is the run seed: it also drives splitting, init and tuning.
    pub train: TrainConfig,
    pub hidden_dim: usize,
    pub train_ratio: f64,
    /// Fraction of the training split held out as the validation set.
    pub val_ratio: f64,
    pub tune: TuneConfig,
    pub skip_tuning: bool,
    pub data_root: Option<PathBuf>,
    pub output_dir: PathBuf,
    /// When set, Canny stage images are written here for every image.
    pub debug_dir: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            input_mode: InputMode::default(),
            train: TrainConfig::default(),
            hidden_dim: 100,
            train_ratio: 0.7,
            val_ratio: 0.2,
            tune: TuneConfig::default(),
            skip_tuning: false,
            data_root: None,
            output_dir: PathBuf::from("out"),
            debug_dir: None,
        }
    }
}

/// Every recognized key with a one-line description.
pub const KEYS: &[(&str, &str)] = &[
    ("input_mode", "flat | features"),
    ("learning_rate", "SGD step size (0.01)"),
    ("batch_size", "mini-batch size (256)"),
    ("epochs", "training epochs (100)"),
    ("seed", "run seed for split, init, shuffling and tuning (1)"),
    ("l2", "L2 penalty on weights (0)"),
    (
        "early_stop_patience",
        "epochs without validation gain before stopping (off)",
    ),
    ("hidden_dim", "hidden units before tuning (100)"),
    (
        "train_ratio",
        "training share of the stratified split (0.7)",
    ),
    (
        "val_ratio",
        "share of the training split held out for validation (0.2)",
    ),
    ("tune_pop", "tuning swarm size (10)"),
    ("tune_max_iter", "tuning iterations (2)"),
    ("tune_epochs", "epochs per tuning candidate (10)"),
    ("tune_lr_min", "learning-rate lower bound (0.0001)"),
    ("tune_lr_max", "learning-rate upper bound (0.1)"),
    ("tune_hidden_min", "hidden-width lower bound (10)"),
    ("tune_hidden_max", "hidden-width upper bound (200)"),
    (
        "skip_tuning",
        "true to evaluate the initial model without tuning (false)",
    ),
    (
        "data_root",
        "dataset directory with benign/malignant/normal",
    ),
    ("output_dir", "where artifacts are written (out)"),
    ("debug_dir", "directory for Canny stage images (off)"),
];

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .trim()
        .parse()
        .map_err(|e: T::Err| ConfigError::BadValue {
            key: key.to_string(),
            value: value.to_string(),
            reason: e.to_string(),
        })
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim().to_ascii_lowercase().as_str() {
        "true" | "yes" | "1" | "on" => Ok(true),
        "false" | "no" | "0" | "off" => Ok(false),
        _ => Err(ConfigError::BadValue {
            key: key.into(),
            value: value.into(),
            reason: "expected true or false".into(),
        }),
    }
}

fn optional_count(key: &str, value: &str) -> Result<Option<usize>> {
    match value.trim().to_ascii_lowercase().as_str() {
        "" | "off" | "none" | "0" => Ok(None),
        v => parse(key, v).map(Some),
    }
}

impl RunConfig {
    /// Sets one key. Relative paths are joined onto `base` when given.
    pub fn set(&mut self, key: &str, value: &str, base: Option<&Path>) -> Result<()> {
        let path = |v: &str| {
            let p = PathBuf::from(v.trim());
            match base {
                Some(b) if p.is_relative() => b.join(p),
                _ => p,
            }
        };
        match key {
            "input_mode" => {
                self.input_mode = value.parse().map_err(|reason| ConfigError::BadValue {
                    key: key.into(),
                    value: value.into(),
                    reason,
                })?
            }
            "learning_rate" => self.train.learning_rate = parse(key, value)?,
            "batch_size" => self.train.batch_size = parse(key, value)?,
            "epochs" => self.train.epochs = parse(key, value)?,
            "seed" => self.train.seed = parse(key, value)?,
            "l2" => self.train.l2 = parse(key, value)?,
            "early_stop_patience" => self.train.early_stop_patience = optional_count(key, value)?,
            "hidden_dim" => self.hidden_dim = parse(key, value)?,
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "val_ratio" => self.val_ratio = parse(key, value)?,
            "tune_pop" => self.tune.pop = parse(key, value)?,
            "tune_max_iter" => self.tune.max_iter = parse(key, value)?,
            "tune_epochs" => self.tune.epochs = parse(key, value)?,
            "tune_lr_min" => self.tune.lr_min = parse(key, value)?,
            "tune_lr_max" => self.tune.lr_max = parse(key, value)?,
            "tune_hidden_min" => self.tune.hidden_min = parse(key, value)?,
            "tune_hidden_max" => self.tune.hidden_max = parse(key, value)?,
            "skip_tuning" => self.skip_tuning = parse_bool(key, value)?,
            "data_root" => self.data_root = Some(path(value)),
            "output_dir" => self.output_dir = path(value),
            "debug_dir" => self.debug_dir = Some(path(value)),
            other => return Err(ConfigError::UnknownKey(other.to_string())),
        }
        Ok(())
    }

    pub fn parse_str(text: &str, base: Option<&Path>) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: n + 1,
                text: raw.to_string(),
            })?;
            cfg.set(key.trim(), value.trim(), base)?;
        }
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse_str(&text, path.parent())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |key: &str, value: String, reason: &str| ConfigError::BadValue {
            key: key.into(),
            value,
            reason: reason.into(),
        };
        self.train
            .validate()
            .map_err(|e| bad("train", format!("{:?}", self.train), &e.to_string()))?;
        if self.hidden_dim == 0 {
            return Err(bad("hidden_dim", "0".into(), "must be positive"));
        }
        for (key, r) in [
            ("train_ratio", self.train_ratio),
            ("val_ratio", self.val_ratio),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(bad(key, r.to_string(), "must lie strictly between 0 and 1"));
            }
        }
        if self.tune.epochs == 0 {
            return Err(bad("tune_epochs", "0".into(), "must be positive"));
        }
        self.tune
            .da_config(self.train.seed)
            .validate()
            .map_err(|e| bad("tune", format!("{:?}", self.tune), &e.to_string()))?;
        Ok(())
    }

    /// Renders the config back into `key = value` lines.
    pub fn to_text(&self) -> String {
        let opt_path = |p: &Option<PathBuf>| {
            p.as_ref()
                .map(|p| p.display().to_string())
                .unwrap_or_default()
        };
        let lines = [
            ("input_mode", self.input_mode.to_string()),
            ("learning_rate", self.train.learning_rate.to_string()),
            ("batch_size", self.train.batch_size.to_string()),
            ("epochs", self.train.epochs.to_string()),
            ("seed", self.train.seed.to_string()),
            ("l2", self.train.l2.to_string()),
            (
                "early_stop_patience",
                self.train
                    .early_stop_patience
                    .map(|p| p.to_string())
                    .unwrap_or_else(|| "off".into()),
            ),
            ("hidden_dim", self.hidden_dim.to_string()),
            ("train_ratio", self.train_ratio.to_string()),
            ("val_ratio", self.val_ratio.to_string()),
            ("tune_pop", self.tune.pop.to_string()),
            ("tune_max_iter", self.tune.max_iter.to_string()),
            ("tune_epochs", self.tune.epochs.to_string()),
            ("tune_lr_min", self.tune.lr_min.to_string()),
            ("tune_lr_max", self.tune.lr_max.to_string()),
            ("tune_hidden_min", self.tune.hidden_min.to_string()),
            ("tune_hidden_max", self.tune.hidden_max.to_string()),
            ("skip_tuning", self.skip_tuning.to_string()),
            ("data_root", opt_path(&self.data_root)),
            ("output_dir", self.output_dir.display().to_string()),
            ("debug_dir", opt_path(&self.debug_dir)),
        ];
        lines
            .iter()
            .filter(|(_, v)| !v.is_empty())
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_follow_the_reference_setup() {
        let c = RunConfig::default();
        assert_eq!(c.train.learning_rate, 0.01);
        assert_eq!(c.train.batch_size, 256);
        assert_eq!(c.train.epochs, 100);
        assert_eq!(c.train.seed, 1);
        assert_eq!(c.hidden_dim, 100);
        assert_eq!(c.train_ratio, 0.7);
        assert_eq!((c.tune.pop, c.tune.max_iter), (10, 2));
        assert_eq!((c.tune.lr_min, c.tune.lr_max), (0.0001, 0.1));
        assert_eq!((c.tune.hidden_min, c.tune.hidden_max), (10.0, 200.0));
        c.validate().unwrap();
    }

    #[test]
    fn parses_and_roundtrips() {
        let text = "# run\ninput_mode = features\nepochs=30\n\nearly_stop_patience = 5\ndata_root = data\n";
        let c = RunConfig::parse_str(text, Some(Path::new("/cfg"))).unwrap();
        assert_eq!(c.input_mode, InputMode::Features);
        assert_eq!(c.train.epochs, 30);
        assert_eq!(c.train.early_stop_patience, Some(5));
        assert_eq!(c.data_root, Some(PathBuf::from("/cfg/data")));
        assert_eq!(RunConfig::parse_str(&c.to_text(), None).unwrap(), c);
    }

    #[test]
    fn reports_errors() {
        assert!(matches!(
            RunConfig::parse_str("nonsense", None),
            Err(ConfigError::Syntax { line: 1, .. })
        ));
        assert!(matches!(
            RunConfig::parse_str("colour = red", None),
            Err(ConfigError::UnknownKey(_))
        ));
        assert!(matches!(
            RunConfig::parse_str("epochs = many", None),
            Err(ConfigError::BadValue { .. })
        ));
        let c = RunConfig::parse_str("train_ratio = 1.5", None).unwrap();
        assert!(c.validate().is_err());
    }

    #[test]
    fn every_key_is_settable() {
        let mut c = RunConfig::default();
        for (k, _) in KEYS {
            let v = match *k {
                "input_mode" => "features",
                "skip_tuning" => "true",
                "data_root" | "output_dir" | "debug_dir" => "x",
                "train_ratio" | "val_ratio" | "learning_rate" | "l2" | "tune_lr_min"
                | "tune_lr_max" => "0.5",
                _ => "3",
            };
            c.set(k, v, None).unwrap();
        }
    }
}
