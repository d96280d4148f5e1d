//! TOML configuration files.
//!
//! Every key is optional; absent keys keep their defaults. Unknown sections
//! or keys are rejected with an error naming them. See `pursuit.example.toml`
//! at the repository root for the annotated list of keys.

use std::path::{Path, PathBuf};

use toml::{Table, Value};

use crate::analysis::SlipGridOptions;
use crate::error::{Error, Result};
use crate::policy::{ActorRule, HeadKind};
use crate::trainer::{CorpusSource, TrainConfig};

/// Evaluation settings shared by the analysis subcommands.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalConfig {
    pub pairs_per_condition: usize,
    pub seed: u64,
    /// Independent training runs (seeds `seed, seed+1, …`) averaged in reports.
    pub trials: usize,
    pub fit_threshold: f64,
    pub holdout: CorpusSource,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            pairs_per_condition: 50,
            seed: 5,
            trials: 3,
            fit_threshold: 0.3,
            holdout: TrainConfig::default().holdout_corpus,
        }
    }
}

impl EvalConfig {
    pub fn slip_grid_options(&self, max_accel: f64) -> SlipGridOptions {
        SlipGridOptions {
            pairs_per_condition: self.pairs_per_condition,
            max_accel,
            seed: self.seed,
            ..SlipGridOptions::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    pub train: TrainConfig,
    pub eval: EvalConfig,
}

impl Config {
    /// The fast profile used by `smoke`.
    pub fn smoke() -> Self {
        let train = TrainConfig::smoke();
        Config {
            eval: EvalConfig {
                pairs_per_condition: 10,
                trials: 1,
                holdout: train.holdout_corpus.clone(),
                ..EvalConfig::default()
            },
            train,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        if self.eval.pairs_per_condition == 0 {
            return Err(Error::config("eval.pairs_per_condition", "must be at least 1"));
        }
        if self.eval.trials == 0 {
            return Err(Error::config("eval.trials", "must be at least 1"));
        }
        Ok(())
    }

    /// Parse `text` on top of `self`.
    pub fn apply_toml(&mut self, text: &str) -> Result<()> {
        let table: Table = text.parse().map_err(|e: toml::de::Error| Error::Parse {
            offset: e.span().map(|s| s.start).unwrap_or(0),
            message: e.message().to_string(),
        })?;
        for (key, value) in &table {
            match value {
                Value::Table(section) => {
                    for (k, v) in section {
                        self.set(&format!("{key}.{k}"), v)?;
                    }
                }
                v => self.set(key, v)?,
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut c = Config::default();
        c.apply_toml(&text)?;
        Ok(c)
    }

    /// Set one dotted key, as in a config file.
    pub fn set(&mut self, key: &str, v: &Value) -> Result<()> {
        let t = &mut self.train;
        match key {
            "seed" => t.seed = uint(key, v)?,
            "train.total_frames" => t.total_frames = uint(key, v)?,
            "train.checkpoint_every" => t.checkpoint_every = uint(key, v)?,
            "train.log_every" => t.log_every = uint(key, v)?,
            "train.check_energy" => t.check_energy = boolean(key, v)?,
            "env.episode_frames" => t.env.episode_frames = uint(key, v)?,
            "env.max_speed" => t.env.max_speed = float(key, v)?,
            "env.max_accel" => t.env.max_accel = float(key, v)?,
            "corpus.train_dir" => t.train_corpus = CorpusSource::Directory(path(key, v)?),
            "corpus.train_seed" => {
                let n = uint(key, v)?;
                set_synth(key, &mut t.train_corpus, |s| s.0 = n)?
            },
            "corpus.train_count" => {
                let n = uint(key, v)?;
                set_synth(key, &mut t.train_corpus, |s| s.1 = n)?
            },
            "corpus.texture_size" => {
                let n = uint(key, v)?;
                set_synth(key, &mut t.train_corpus, |s| s.2 = n)?;
                set_synth(key, &mut t.holdout_corpus, |s| s.2 = n)?;
            }
            "corpus.holdout_dir" => t.holdout_corpus = CorpusSource::Directory(path(key, v)?),
            "corpus.holdout_seed" => {
                let n = uint(key, v)?;
                set_synth(key, &mut t.holdout_corpus, |s| s.0 = n)?
            },
            "corpus.holdout_count" => {
                let n = uint(key, v)?;
                set_synth(key, &mut t.holdout_corpus, |s| s.1 = n)?
            },
            "dictionary.atoms" => t.dictionary.atoms = uint(key, v)?,
            "dictionary.kmax" => t.dictionary.mp.kmax = uint(key, v)?,
            "dictionary.tol" => t.dictionary.mp.tol = float(key, v)?,
            "dictionary.lr" => t.dictionary.lr.initial = float(key, v)?,
            "dictionary.lr_decay_frames" => t.dictionary.lr.decay_frames = float(key, v)?,
            "dictionary.patch_grid" => t.dictionary.grid.count = uint(key, v)?,
            "dictionary.patch_stride" => t.dictionary.grid.stride = uint(key, v)?,
            "policy.head" => {
                let s = string(key, v)?;
                t.policy.head =
                    HeadKind::parse(&s).ok_or_else(|| Error::config(key, format!("unknown head {s:?}")))?;
            }
            "policy.actions" => t.policy.actions = uint(key, v)?,
            "policy.temperature" => t.policy.temperature = float(key, v)?,
            "policy.temperature_decay" => t.policy.temperature_decay = float(key, v)?,
            "policy.min_temperature" => t.policy.min_temperature = float(key, v)?,
            "policy.hidden" => t.policy.hidden = uint(key, v)?,
            "policy.sigma" => t.policy.sigma = float(key, v)?,
            "policy.init_scale" => t.policy.init_scale = float(key, v)?,
            "policy.divisive_norm" => t.policy.divisive_norm = boolean(key, v)?,
            "nac.gamma" => t.nac.gamma = float(key, v)?,
            "nac.lambda" => t.nac.lambda = float(key, v)?,
            "nac.alpha_v" => t.nac.alpha_v = float(key, v)?,
            "nac.alpha_w" => t.nac.alpha_w = float(key, v)?,
            "nac.alpha_theta" => t.nac.alpha_theta = float(key, v)?,
            "nac.rule" => {
                let s = string(key, v)?;
                t.nac.rule =
                    ActorRule::parse(&s).ok_or_else(|| Error::config(key, format!("unknown actor rule {s:?}")))?;
            }
            "eval.pairs_per_condition" => self.eval.pairs_per_condition = uint(key, v)?,
            "eval.seed" => self.eval.seed = uint(key, v)?,
            "eval.trials" => self.eval.trials = uint(key, v)?,
            "eval.fit_threshold" => self.eval.fit_threshold = float(key, v)?,
            _ => return Err(Error::config(key, "unknown configuration key")),
        }
        if key.starts_with("corpus.holdout") || key == "corpus.texture_size" {
            self.eval.holdout = self.train.holdout_corpus.clone();
        }
        Ok(())
    }

    /// Set a string-valued key verbatim.
    pub fn set_string(&mut self, key: &str, s: &str) -> Result<()> {
        self.set(key, &Value::String(s.to_string()))
    }

    /// Set a key from a command-line string, parsed as a TOML value.
    /// Bare words are taken as strings.
    pub fn set_str(&mut self, key: &str, raw: &str) -> Result<()> {
        let value = format!("x = {raw}")
            .parse::<Table>()
            .ok()
            .and_then(|mut t| t.remove("x"))
            .unwrap_or_else(|| Value::String(raw.to_string()));
        self.set(key, &value)
    }
}

/// Every key accepted by [`Config::set`], with a short description.
pub const KEYS: &[(&str, &str)] = &[
    ("seed", "master seed for all random streams"),
    ("train.total_frames", "frames to train"),
    ("train.checkpoint_every", "checkpoint cadence in frames"),
    ("train.log_every", "telemetry cadence in frames"),
    ("train.check_energy", "abort when the coding energy identity fails"),
    ("env.episode_frames", "frames per target-motion episode"),
    ("env.max_speed", "target speed bound, px/frame"),
    ("env.max_accel", "eye acceleration bound, px/frame^2"),
    ("corpus.train_dir", "directory of training PGM textures"),
    ("corpus.train_seed", "seed of synthetic training textures"),
    ("corpus.train_count", "number of synthetic training textures"),
    ("corpus.texture_size", "side of synthetic textures in px"),
    ("corpus.holdout_dir", "directory of held-out PGM textures"),
    ("corpus.holdout_seed", "seed of synthetic held-out textures"),
    ("corpus.holdout_count", "number of synthetic held-out textures"),
    ("dictionary.atoms", "number of atoms"),
    ("dictionary.kmax", "matching-pursuit nonzeros per patch"),
    ("dictionary.tol", "matching-pursuit residual tolerance"),
    ("dictionary.lr", "initial dictionary learning rate"),
    ("dictionary.lr_decay_frames", "learning-rate decay constant in frames"),
    ("dictionary.patch_grid", "patches per side of the fovea"),
    ("dictionary.patch_stride", "patch stride in px"),
    ("policy.head", "softmax or gaussian"),
    ("policy.actions", "discrete commands per axis (softmax)"),
    ("policy.temperature", "softmax temperature"),
    ("policy.temperature_decay", "per-frame temperature factor"),
    ("policy.min_temperature", "temperature floor"),
    ("policy.hidden", "hidden units (gaussian)"),
    ("policy.sigma", "exploration std. dev., px/frame^2 (gaussian)"),
    ("policy.init_scale", "initial weight range"),
    ("policy.divisive_norm", "divide features by their sum"),
    ("nac.gamma", "discount factor"),
    ("nac.lambda", "eligibility trace decay"),
    ("nac.alpha_v", "critic step size"),
    ("nac.alpha_w", "advantage-weight step size"),
    ("nac.alpha_theta", "actor step size"),
    ("nac.rule", "natural or vanilla actor update"),
    ("eval.pairs_per_condition", "image pairs per slip condition"),
    ("eval.seed", "seed for evaluation sampling"),
    ("eval.trials", "training runs per report"),
    ("eval.fit_threshold", "Gabor fit error threshold for histograms"),
];

type Synth = (u64, usize, usize);

fn set_synth(key: &str, src: &mut CorpusSource, f: impl FnOnce(&mut Synth)) -> Result<()> {
    match src {
        CorpusSource::Synthetic { base_seed, count, size } => {
            let mut s = (*base_seed, *count, *size);
            f(&mut s);
            (*base_seed, *count, *size) = s;
            Ok(())
        }
        CorpusSource::Directory(_) => Err(Error::config(key, "not applicable to a directory corpus")),
    }
}

fn uint<T: TryFrom<i64>>(key: &str, v: &Value) -> Result<T> {
    v.as_integer()
        .filter(|i| *i >= 0)
        .and_then(|i| T::try_from(i).ok())
        .ok_or_else(|| Error::config(key, format!("expected a non-negative integer, got {v}")))
}

fn float(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Float(f) => Ok(*f),
        Value::Integer(i) => Ok(*i as f64),
        _ => Err(Error::config(key, format!("expected a number, got {v}"))),
    }
}

fn boolean(key: &str, v: &Value) -> Result<bool> {
    v.as_bool()
        .ok_or_else(|| Error::config(key, format!("expected true or false, got {v}")))
}

fn string(key: &str, v: &Value) -> Result<String> {
    v.as_str()
        .map(str::to_string)
        .ok_or_else(|| Error::config(key, format!("expected a string, got {v}")))
}

fn path(key: &str, v: &Value) -> Result<PathBuf> {
    string(key, v).map(PathBuf::from)
}
