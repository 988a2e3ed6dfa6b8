//! Plain-text `key = value` experiment configuration.
//!
//! Blank lines and lines starting with `#` are ignored; lists are
//! comma-separated. Every key is optional. See the README for the full schema.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use crate::characterize::ScoreMethod;
use crate::data::SynthConfig;
use crate::error::{Error, Result};
use crate::select::{Policy, SelectOptions};
use crate::trainer::TrainConfig;

/// Recognized keys.
pub const KEYS: &[&str] = &[
    "name",
    "data.train",
    "data.test",
    "synth.n",
    "synth.n_test",
    "synth.dim",
    "synth.classes",
    "synth.rho",
    "synth.rho_test",
    "synth.core_sep",
    "synth.spur_sep",
    "synth.noise_sigma",
    "synth.seed",
    "methods",
    "policies",
    "rates",
    "seeds",
    "surrogate.short_epochs",
    "surrogate.long_epochs",
    "surrogate.learning_rate",
    "surrogate.momentum",
    "surrogate.batch_size",
    "surrogate.weight_decay",
    "surrogate.hidden_units",
    "train.base_epochs",
    "train.learning_rate",
    "train.momentum",
    "train.batch_size",
    "train.weight_decay",
    "train.hidden_units",
    "train.record_dynamics",
    "select.bins",
    "select.trim",
    "select.policy",
    "select.rate",
    "score.method",
    "selfsup.k",
    "ap.trials",
    "input.scores",
    "input.embeddings",
    "input.coreset",
    "input.model",
    "input.dynamics",
    "input.results",
    "out",
];

pub const DEFAULT_RATES: [f64; 8] = [0.02, 0.05, 0.1, 0.2, 0.4, 0.6, 0.8, 1.0];

/// Raw key/value pairs, validated against [`KEYS`].
#[derive(Debug, Clone, Default, PartialEq)]
pub struct KeyValues {
    entries: BTreeMap<String, String>,
}

impl KeyValues {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| {
                Error::InvalidConfig(format!("line {}: expected `key = value`", lineno + 1))
            })?;
            let k = k.trim();
            if !KEYS.contains(&k) {
                return Err(Error::InvalidConfig(format!(
                    "line {}: unknown key {k:?}",
                    lineno + 1
                )));
            }
            let v = v.split(" #").next().unwrap_or("").trim();
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "line {}: duplicate key {k:?}",
                    lineno + 1
                )));
            }
        }
        Ok(Self { entries })
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        Self::parse(&text)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.entries.insert(key.to_string(), value.into());
    }

    pub fn raw(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>> {
        self.raw(key)
            .map(|v| {
                v.parse::<T>()
                    .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {v:?}")))
            })
            .transpose()
    }

    pub fn get_or<T: FromStr>(&self, key: &str, default: T) -> Result<T> {
        Ok(self.get(key)?.unwrap_or(default))
    }

    pub fn list<T: FromStr>(&self, key: &str) -> Result<Option<Vec<T>>> {
        self.raw(key)
            .map(|v| {
                v.split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| {
                        s.parse::<T>()
                            .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {s:?}")))
                    })
                    .collect()
            })
            .transpose()
    }

    pub fn path(&self, key: &str) -> Option<PathBuf> {
        self.raw(key).filter(|s| !s.is_empty()).map(PathBuf::from)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum DataSource {
    /// Train and test splits drawn from the generator; the test split uses
    /// its own correlation strength.
    Synthetic {
        train: SynthConfig,
        n_test: usize,
        rho_test: f64,
    },
    /// Dataset CSV files.
    Files { train: PathBuf, test: PathBuf },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub name: String,
    pub data: DataSource,
    pub methods: Vec<ScoreMethod>,
    pub policies: Vec<Policy>,
    pub rates: Vec<f64>,
    pub seeds: Vec<u64>,
    /// Optimizer settings for surrogate models; `base_epochs` is replaced by
    /// the short or long budget.
    pub surrogate: TrainConfig,
    /// Surrogate epochs for EL2N and Uncertainty (and learned embeddings).
    pub short_epochs: usize,
    /// Surrogate epochs for Forgetting.
    pub long_epochs: usize,
    pub downstream: TrainConfig,
    pub select: SelectOptions,
    /// k for SelfSup; defaults to the class count.
    pub selfsup_k: Option<usize>,
    /// Precomputed SSF scores, used in place of surrogate scoring.
    pub scores_file: Option<PathBuf>,
    /// Precomputed EMB embeddings for embedding-based scores.
    pub embeddings_file: Option<PathBuf>,
    pub ap_trials: usize,
    #[serde(skip)]
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let train = SynthConfig::default();
        Self {
            name: "synthetic".into(),
            data: DataSource::Synthetic {
                rho_test: 1.0 / f64::from(train.num_classes),
                train,
                n_test: 2000,
            },
            methods: vec![ScoreMethod::El2n],
            policies: vec![
                Policy::Rand,
                Policy::RGbal,
                Policy::Diff,
                Policy::Strat,
                Policy::Med,
                Policy::Eas,
            ],
            rates: DEFAULT_RATES.to_vec(),
            seeds: vec![0, 1, 2],
            surrogate: TrainConfig::default(),
            short_epochs: 20,
            long_epochs: 200,
            downstream: TrainConfig::default(),
            select: SelectOptions::default(),
            selfsup_k: None,
            scores_file: None,
            embeddings_file: None,
            ap_trials: 1000,
            out: PathBuf::from("corekit-out"),
        }
    }
}

fn trainer_from(kv: &KeyValues, prefix: &str, base: TrainConfig) -> Result<TrainConfig> {
    let key = |k: &str| format!("{prefix}.{k}");
    Ok(TrainConfig {
        base_epochs: kv.get_or(&key("base_epochs"), base.base_epochs)?,
        learning_rate: kv.get_or(&key("learning_rate"), base.learning_rate)?,
        momentum: kv.get_or(&key("momentum"), base.momentum)?,
        batch_size: kv.get_or(&key("batch_size"), base.batch_size)?,
        weight_decay: kv.get_or(&key("weight_decay"), base.weight_decay)?,
        hidden_units: kv.get_or(&key("hidden_units"), base.hidden_units)?,
        record_dynamics: kv.get_or(&key("record_dynamics"), base.record_dynamics)?,
        ..base
    })
}

impl ExperimentConfig {
    pub fn from_kv(kv: &KeyValues) -> Result<Self> {
        let d = Self::default();
        let sd = SynthConfig::default();
        let data = match (kv.path("data.train"), kv.path("data.test")) {
            (Some(train), Some(test)) => DataSource::Files { train, test },
            (None, None) => {
                let train = SynthConfig {
                    n: kv.get_or("synth.n", sd.n)?,
                    dim: kv.get_or("synth.dim", sd.dim)?,
                    num_classes: kv.get_or("synth.classes", sd.num_classes)?,
                    rho: kv.get_or("synth.rho", sd.rho)?,
                    core_sep: kv.get_or("synth.core_sep", sd.core_sep)?,
                    spur_sep: kv.get_or("synth.spur_sep", sd.spur_sep)?,
                    noise_sigma: kv.get_or("synth.noise_sigma", sd.noise_sigma)?,
                    seed: kv.get_or("synth.seed", sd.seed)?,
                };
                let rho_test =
                    kv.get_or("synth.rho_test", 1.0 / f64::from(train.num_classes.max(1)))?;
                DataSource::Synthetic {
                    train,
                    n_test: kv.get_or("synth.n_test", 2000)?,
                    rho_test,
                }
            }
            _ => {
                return Err(Error::InvalidConfig(
                    "data.train and data.test must be given together".into(),
                ))
            }
        };
        let cfg = Self {
            name: kv.get_or("name", d.name)?,
            data,
            methods: kv.list("methods")?.unwrap_or(d.methods),
            policies: kv.list("policies")?.unwrap_or(d.policies),
            rates: kv.list("rates")?.unwrap_or(d.rates),
            seeds: kv.list("seeds")?.unwrap_or(d.seeds),
            surrogate: trainer_from(kv, "surrogate", d.surrogate)?,
            short_epochs: kv.get_or("surrogate.short_epochs", d.short_epochs)?,
            long_epochs: kv.get_or("surrogate.long_epochs", d.long_epochs)?,
            downstream: trainer_from(kv, "train", d.downstream)?,
            select: SelectOptions {
                bins: kv.get_or("select.bins", d.select.bins)?,
                trim: kv.get_or("select.trim", d.select.trim)?,
            },
            selfsup_k: kv.get("selfsup.k")?,
            scores_file: kv.path("input.scores"),
            embeddings_file: kv.path("input.embeddings"),
            ap_trials: kv.get_or("ap.trials", d.ap_trials)?,
            out: kv.path("out").unwrap_or(d.out),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn parse(text: &str) -> Result<Self> {
        Self::from_kv(&KeyValues::parse(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if self.methods.is_empty() {
            return bad("methods must not be empty");
        }
        if self.policies.is_empty() {
            return bad("policies must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.rates.is_empty() {
            return bad("rates must not be empty");
        }
        if let Some(r) = self.rates.iter().find(|r| !(**r > 0.0 && **r <= 1.0)) {
            return Err(Error::InvalidConfig(format!("rate {r} must lie in (0, 1]")));
        }
        if self.short_epochs == 0 || self.long_epochs < 2 {
            return bad("surrogate epochs: short >= 1 and long >= 2 required");
        }
        if self.ap_trials == 0 {
            return bad("ap.trials must be at least 1");
        }
        if self.selfsup_k == Some(0) {
            return bad("selfsup.k must be at least 1");
        }
        if let DataSource::Synthetic {
            train,
            n_test,
            rho_test,
        } = &self.data
        {
            train.validate()?;
            if *n_test == 0 {
                return bad("synth.n_test must be at least 1");
            }
            SynthConfig {
                rho: *rho_test,
                ..train.clone()
            }
            .validate()?;
        }
        self.surrogate.validate()?;
        self.downstream.validate()?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_lists_and_comments() {
        let cfg = ExperimentConfig::parse(
            "# sweep\nmethods = el2n, uncertainty\npolicies = rand, diff\nrates = 0.1, 1.0 # tail\nseeds = 3\nsynth.rho = 0.9\n",
        )
        .unwrap();
        assert_eq!(
            cfg.methods,
            vec![ScoreMethod::El2n, ScoreMethod::Uncertainty]
        );
        assert_eq!(cfg.policies, vec![Policy::Rand, Policy::Diff]);
        assert_eq!(cfg.rates, vec![0.1, 1.0]);
        assert_eq!(cfg.seeds, vec![3]);
        match cfg.data {
            DataSource::Synthetic { train, .. } => assert_eq!(train.rho, 0.9),
            _ => panic!("expected synthetic data"),
        }
    }

    #[test]
    fn rejects_unknown_and_invalid() {
        assert!(ExperimentConfig::parse("bogus = 1").is_err());
        assert!(ExperimentConfig::parse("rates = 0.0").is_err());
        assert!(ExperimentConfig::parse("methods =").is_err());
        assert!(ExperimentConfig::parse("data.train = a.csv").is_err());
        assert!(ExperimentConfig::parse("seeds = 1\nseeds = 2").is_err());
        assert!(ExperimentConfig::parse("no equals sign").is_err());
    }
}
