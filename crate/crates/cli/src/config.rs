//! Run configuration: a plain `key = value` file, overridable key by key from
//! the command line.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use qvc_core::circuit::Architecture;
use qvc_core::data::{CsvSchema, ExperimentSetup, LabelColumn};
use qvc_core::experiments::{NoiseDistribution, NoiseTarget};
use qvc_core::gradient::{GradientMode, ParityConfig};
use qvc_core::model::EstimatorMode;
use qvc_core::training::TrainConfig;

use crate::CliError;

/// Every recognised key with its default value.
const DEFAULTS: &[(&str, &str)] = &[
    ("data", ""),
    ("test_data", ""),
    ("model", ""),
    ("label_column", "last"),
    ("delimiter", ","),
    ("header", "false"),
    ("feature_columns", ""),
    ("input_dim", ""),
    ("n_qubits", ""),
    ("ranges", "1"),
    ("final_gate", "true"),
    ("pad_value", "0"),
    ("copies", "1"),
    ("learning_rate", "0.1"),
    ("epochs", "50"),
    ("seed", "0"),
    ("momentum", "0"),
    ("dropout_interval", "10"),
    ("dropout_include_none", "true"),
    ("lr_decay", "1"),
    ("l2", "0"),
    ("estimator", "exact"),
    ("gradient", "exact"),
    ("folds", "5"),
    ("repetitions", "1"),
    ("threads", "0"),
    ("out", "out"),
    ("noise_levels", "0.001,0.01,0.1"),
    ("noise_trials", "20"),
    ("noise_target", "parameters"),
    ("noise_distribution", "uniform"),
    ("bound_delta", "0.001"),
    ("bound_trials", "100"),
    ("gradcheck_instances", "100"),
    ("gradcheck_min_qubits", "2"),
    ("gradcheck_max_qubits", "6"),
    ("gradcheck_max_blocks", "2"),
    ("gradcheck_h", "1e-5"),
    ("gradcheck_rel_tol", "1e-6"),
    ("gradcheck_abs_floor", "1e-8"),
    ("gradcheck_inject_sign_flip", "false"),
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    values: BTreeMap<String, String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            values: DEFAULTS.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect(),
        }
    }
}

fn bad(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}

impl RunConfig {
    /// Parse `key = value` lines; `#` starts a comment. Relative paths stay
    /// relative to the working directory.
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| bad(format!("config line {}: expected key = value", n + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| bad(format!("config line {}: {e}", n + 1)))?;
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| bad(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let key = key.replace('-', "_");
        if !self.values.contains_key(&key) {
            return Err(bad(format!("unknown key {key:?}")));
        }
        self.values.insert(key, value.to_string());
        Ok(())
    }

    /// Apply `--key value` / `--key=value` pairs.
    pub fn apply_overrides(&mut self, args: &[String]) -> Result<(), CliError> {
        let mut it = args.iter();
        while let Some(arg) = it.next() {
            let stripped = arg
                .strip_prefix("--")
                .ok_or_else(|| bad(format!("unexpected argument {arg:?}")))?;
            match stripped.split_once('=') {
                Some((k, v)) => self.set(k, v)?,
                None => {
                    let v = it.next().ok_or_else(|| bad(format!("--{stripped} needs a value")))?;
                    self.set(stripped, v)?
                }
            }
        }
        Ok(())
    }

    pub fn get(&self, key: &str) -> &str {
        self.values.get(key).map(String::as_str).unwrap_or("")
    }

    fn parse_as<T: std::str::FromStr>(&self, key: &str) -> Result<T, CliError> {
        let v = self.get(key);
        v.parse().map_err(|_| bad(format!("{key}: cannot parse {v:?}")))
    }

    fn flag(&self, key: &str) -> Result<bool, CliError> {
        match self.get(key) {
            "true" | "yes" | "1" => Ok(true),
            "false" | "no" | "0" => Ok(false),
            v => Err(bad(format!("{key}: expected true or false, got {v:?}"))),
        }
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>, CliError> {
        self.get(key)
            .split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| bad(format!("{key}: cannot parse {s:?}"))))
            .collect()
    }

    fn path(&self, key: &str) -> Result<PathBuf, CliError> {
        match self.get(key) {
            "" => Err(bad(format!("{key} is not set"))),
            p => Ok(PathBuf::from(p)),
        }
    }

    pub fn data_path(&self) -> Result<PathBuf, CliError> {
        self.path("data")
    }

    pub fn test_data_path(&self) -> Option<PathBuf> {
        self.path("test_data").ok()
    }

    pub fn out_dir(&self) -> PathBuf {
        PathBuf::from(self.get("out"))
    }

    /// Model file path; defaults to `<out>/model.json`.
    pub fn model_path(&self) -> PathBuf {
        self.path("model").unwrap_or_else(|_| self.out_dir().join("model.json"))
    }

    /// Feature count to describe when no data file is given.
    pub fn input_dim(&self) -> Result<Option<usize>, CliError> {
        match self.get("input_dim") {
            "" => Ok(None),
            _ => self.parse_as("input_dim").map(Some),
        }
    }

    pub fn seed(&self) -> Result<u64, CliError> {
        self.parse_as("seed")
    }

    pub fn threads(&self) -> Result<usize, CliError> {
        self.parse_as("threads")
    }

    pub fn schema(&self) -> Result<CsvSchema, CliError> {
        let label_column = match self.get("label_column") {
            "first" => LabelColumn::First,
            "last" => LabelColumn::Last,
            v => LabelColumn::Index(v.parse().map_err(|_| bad(format!("label_column: cannot parse {v:?}")))?),
        };
        let delimiter = match self.get("delimiter") {
            "tab" | "\\t" => b'\t',
            "space" => b' ',
            "semicolon" => b';',
            d if d.len() == 1 => d.as_bytes()[0],
            d => return Err(bad(format!("delimiter: unsupported {d:?}"))),
        };
        let feature_columns = match self.get("feature_columns") {
            "" => None,
            spec => Some(parse_columns(spec)?),
        };
        Ok(CsvSchema {
            label_column,
            delimiter,
            header: self.flag("header")?,
            feature_columns,
        })
    }

    /// Architecture for data with `input_dim` features. The qubit count comes
    /// from `n_qubits` when set, else from the encoding.
    pub fn architecture(&self, input_dim: usize) -> Result<Architecture, CliError> {
        let n = match self.get("n_qubits") {
            "" => self.preprocessor_qubits(input_dim)?,
            _ => self.parse_as("n_qubits")?,
        };
        Ok(Architecture::new(n, self.list("ranges")?, self.flag("final_gate")?))
    }

    fn preprocessor_qubits(&self, input_dim: usize) -> Result<usize, CliError> {
        let p = qvc_core::encoding::Preprocessor::new(input_dim, self.parse_as("pad_value")?, self.parse_as("copies")?)
            .map_err(|e| bad(e.to_string()))?;
        Ok(p.n_qubits())
    }

    pub fn estimator(&self) -> Result<EstimatorMode, CliError> {
        match parse_mode(self.get("estimator"), "estimator")? {
            None => Ok(EstimatorMode::Exact),
            Some(shots) => Ok(EstimatorMode::Shots {
                shots,
                seed: qvc_core::seed::derive(self.seed()?, &[0xE5]),
            }),
        }
    }

    pub fn gradient(&self) -> Result<GradientMode, CliError> {
        if self.get("gradient") == "oracle" {
            return Ok(GradientMode::DirectOracle);
        }
        match parse_mode(self.get("gradient"), "gradient")? {
            None => Ok(GradientMode::ExactLCU),
            Some(shots) => Ok(GradientMode::HadamardShots {
                shots,
                seed: qvc_core::seed::derive(self.seed()?, &[0x6D]),
            }),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            learning_rate: self.parse_as("learning_rate")?,
            epochs: self.parse_as("epochs")?,
            seed: self.seed()?,
            momentum: self.parse_as("momentum")?,
            dropout_interval: self.parse_as("dropout_interval")?,
            dropout_include_none: self.flag("dropout_include_none")?,
            estimator: self.estimator()?,
            gradient: self.gradient()?,
            lr_decay: self.parse_as("lr_decay")?,
            l2: self.parse_as("l2")?,
        };
        cfg.validate().map_err(|e| bad(e.to_string()))?;
        Ok(cfg)
    }

    pub fn setup(&self, input_dim: usize) -> Result<ExperimentSetup, CliError> {
        let setup = ExperimentSetup {
            architecture: self.architecture(input_dim)?,
            pad_value: self.parse_as("pad_value")?,
            copies: self.parse_as("copies")?,
            train: self.train_config()?,
            evaluation: self.estimator()?,
        };
        setup.preprocessor(input_dim).map_err(|e| bad(e.to_string()))?;
        Ok(setup)
    }

    pub fn folds(&self) -> Result<(usize, usize), CliError> {
        Ok((self.parse_as("folds")?, self.parse_as("repetitions")?))
    }

    pub fn noise_levels(&self) -> Result<Vec<f64>, CliError> {
        self.list("noise_levels")
    }

    pub fn noise_trials(&self) -> Result<usize, CliError> {
        self.parse_as("noise_trials")
    }

    pub fn noise_target(&self) -> Result<NoiseTarget, CliError> {
        match self.get("noise_target") {
            "parameters" => Ok(NoiseTarget::Parameters),
            "inputs" => Ok(NoiseTarget::Inputs),
            v => Err(bad(format!("noise_target: expected parameters or inputs, got {v:?}"))),
        }
    }

    pub fn noise_distribution(&self) -> Result<NoiseDistribution, CliError> {
        match self.get("noise_distribution") {
            "uniform" => Ok(NoiseDistribution::Uniform),
            "gaussian" => Ok(NoiseDistribution::Gaussian),
            v => Err(bad(format!("noise_distribution: expected uniform or gaussian, got {v:?}"))),
        }
    }

    pub fn bound(&self) -> Result<(f64, usize), CliError> {
        Ok((self.parse_as("bound_delta")?, self.parse_as("bound_trials")?))
    }

    pub fn parity_config(&self) -> Result<ParityConfig, CliError> {
        Ok(ParityConfig {
            instances: self.parse_as("gradcheck_instances")?,
            min_qubits: self.parse_as("gradcheck_min_qubits")?,
            max_qubits: self.parse_as("gradcheck_max_qubits")?,
            max_blocks: self.parse_as("gradcheck_max_blocks")?,
            seed: self.seed()?,
            h: self.parse_as("gradcheck_h")?,
            rel_tol: self.parse_as("gradcheck_rel_tol")?,
            abs_floor: self.parse_as("gradcheck_abs_floor")?,
            mode: self.gradient()?,
            inject_sign_flip: self.flag("gradcheck_inject_sign_flip")?,
        })
    }

    /// Canonical text of the effective configuration, leaving out keys that
    /// cannot change results (output location, thread count).
    pub fn canonical(&self) -> String {
        self.values
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "out" | "threads" | "model"))
            .map(|(k, v)| format!("{k}={v}\n"))
            .collect()
    }

    /// SHA-256 of the canonical text, hex encoded.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical().as_bytes()))
    }
}

/// `exact` or `shots:S`.
fn parse_mode(v: &str, key: &str) -> Result<Option<u64>, CliError> {
    if v == "exact" {
        return Ok(None);
    }
    let shots = v
        .strip_prefix("shots:")
        .and_then(|s| s.parse::<u64>().ok())
        .filter(|&s| s > 0)
        .ok_or_else(|| bad(format!("{key}: expected exact or shots:S, got {v:?}")))?;
    Ok(Some(shots))
}

/// Comma-separated column indices and inclusive ranges, e.g. `2-31,33`.
fn parse_columns(spec: &str) -> Result<Vec<usize>, CliError> {
    let mut cols = Vec::new();
    for part in spec.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let num = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|_| bad(format!("feature_columns: cannot parse {s:?}")))
        };
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if b < a {
                    return Err(bad(format!("feature_columns: empty range {part:?}")));
                }
                cols.extend(a..=b);
            }
            None => cols.push(num(part)?),
        }
    }
    Ok(cols)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_override() {
        let mut cfg = RunConfig::parse("# comment\nepochs = 7\nranges=1,3 # trailing\n").unwrap();
        assert_eq!(cfg.get("epochs"), "7");
        cfg.apply_overrides(&["--epochs".into(), "9".into(), "--learning-rate=0.5".into()])
            .unwrap();
        assert_eq!(cfg.train_config().unwrap().epochs, 9);
        assert_eq!(cfg.train_config().unwrap().learning_rate, 0.5);
        assert_eq!(cfg.architecture(256).unwrap(), Architecture::new(8, vec![1, 3], true));
        assert!(RunConfig::parse("nonsense = 1").is_err());
        assert!(RunConfig::parse("epochs").is_err());
        assert!(cfg.apply_overrides(&["--epochs".into()]).is_err());
    }

    #[test]
    fn modes() {
        let mut cfg = RunConfig::default();
        assert_eq!(cfg.estimator().unwrap(), EstimatorMode::Exact);
        cfg.set("estimator", "shots:100").unwrap();
        assert!(matches!(cfg.estimator().unwrap(), EstimatorMode::Shots { shots: 100, .. }));
        cfg.set("gradient", "shots:0").unwrap();
        assert!(cfg.gradient().is_err());
        cfg.set("gradient", "oracle").unwrap();
        assert_eq!(cfg.gradient().unwrap(), GradientMode::DirectOracle);
    }

    #[test]
    fn columns_and_schema() {
        assert_eq!(parse_columns("2-4, 7").unwrap(), vec![2, 3, 4, 7]);
        assert!(parse_columns("4-2").is_err());
        let mut cfg = RunConfig::default();
        cfg.set("label_column", "1").unwrap();
        cfg.set("delimiter", "tab").unwrap();
        let s = cfg.schema().unwrap();
        assert_eq!((s.label_column, s.delimiter), (LabelColumn::Index(1), b'\t'));
    }

    #[test]
    fn hash_tracks_content() {
        let a = RunConfig::default();
        let mut b = RunConfig::default();
        assert_eq!(a.hash(), b.hash());
        b.set("out", "elsewhere").unwrap();
        assert_eq!(a.hash(), b.hash());
        b.set("seed", "1").unwrap();
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 64);
    }
}
