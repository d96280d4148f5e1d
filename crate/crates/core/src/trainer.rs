//! The closed perception/action learning loop.
//!
//! Each frame, in this order:
//!
//! 1. render the frame pair for the transition that just happened
//! 2. extract patches and code them against the current dictionary
//! 3. reward = −(normalized reconstruction error)
//! 4. pool complex-cell features
//! 5. actor-critic update for the previous frame's choice
//! 6. sample the next choice and step the environment
//! 7. update the dictionary from this frame's codes
//!
//! The reward at frame t therefore scores the action chosen at frame t−1,
//! and coding at frame t uses the dictionary produced at frame t−1.

use std::fmt::Write as _;
use std::path::PathBuf;

use rand_chacha::ChaCha8Rng;

use crate::checkpoint::{Checkpoint, PendingTransition};
use crate::environment::{Action, EnvParams, EnvState, Vec2};
use crate::error::{Error, Result};
use crate::features::{pool_features, FeatureVector};
use crate::imagery::Corpus;
use crate::policy::{nac_update, CriticState, GaussianPolicy, HeadKind, NacParams, Policy, SoftmaxPolicy};
use crate::rng::{stream_rng, RngState, Stream};
use crate::sparsecode::{extract_patches, Dictionary, Encoder, LrSchedule, MpParams, PatchGrid, PATCH_DIM};

/// Where textures come from.
#[derive(Debug, Clone, PartialEq)]
pub enum CorpusSource {
    Synthetic { base_seed: u64, count: usize, size: usize },
    Directory(PathBuf),
}

impl CorpusSource {
    pub fn load(&self) -> Result<Corpus> {
        match self {
            CorpusSource::Synthetic { base_seed, count, size } => Corpus::synthetic(*base_seed, *count, *size),
            CorpusSource::Directory(dir) => Corpus::from_dir(dir),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DictionaryConfig {
    pub atoms: usize,
    pub mp: MpParams,
    pub lr: LrSchedule,
    pub grid: PatchGrid,
}

impl Default for DictionaryConfig {
    fn default() -> Self {
        DictionaryConfig {
            atoms: 300,
            mp: MpParams::default(),
            lr: LrSchedule::default(),
            grid: PatchGrid::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PolicyConfig {
    pub head: HeadKind,
    /// Discrete commands per axis (softmax head).
    pub actions: usize,
    pub temperature: f64,
    /// Per-frame multiplicative temperature decay; 1 keeps it constant.
    pub temperature_decay: f64,
    pub min_temperature: f64,
    /// Hidden units (Gaussian head).
    pub hidden: usize,
    pub sigma: f64,
    /// Initial weights are uniform in `[-init_scale, init_scale]`.
    pub init_scale: f64,
    /// Divide features by their sum before they reach the actor and critic.
    pub divisive_norm: bool,
}

impl Default for PolicyConfig {
    fn default() -> Self {
        PolicyConfig {
            head: HeadKind::Gaussian,
            actions: 11,
            temperature: 1.0,
            temperature_decay: 1.0,
            min_temperature: 1e-3,
            hidden: 5,
            sigma: 2.0,
            init_scale: 0.01,
            divisive_norm: false,
        }
    }
}

impl PolicyConfig {
    pub fn temperature_at(&self, frame: u64) -> f64 {
        (self.temperature * self.temperature_decay.powf(frame as f64)).max(self.min_temperature)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub seed: u64,
    pub total_frames: u64,
    pub train_corpus: CorpusSource,
    pub holdout_corpus: CorpusSource,
    pub dictionary: DictionaryConfig,
    pub policy: PolicyConfig,
    pub nac: NacParams,
    pub env: EnvParams,
    pub checkpoint_every: u64,
    pub log_every: u64,
    /// Abort if a matching-pursuit step violates the energy identity beyond 1e-9.
    pub check_energy: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            seed: 1,
            total_frames: 200_000,
            train_corpus: CorpusSource::Synthetic {
                base_seed: 1000,
                count: 20,
                size: 256,
            },
            holdout_corpus: CorpusSource::Synthetic {
                base_seed: 9000,
                count: 10,
                size: 256,
            },
            dictionary: DictionaryConfig::default(),
            policy: PolicyConfig::default(),
            nac: NacParams::default(),
            env: EnvParams::default(),
            checkpoint_every: 20_000,
            log_every: 1,
            check_energy: false,
        }
    }
}

pub const ENERGY_TOL: f64 = 1e-9;

impl TrainConfig {
    /// Small and fast: 64 atoms, a 5×5 patch grid, 10⁴ frames.
    pub fn smoke() -> Self {
        let mut c = TrainConfig::default();
        c.total_frames = 10_000;
        c.dictionary.atoms = 64;
        c.dictionary.grid = PatchGrid {
            count: 5,
            stride: 10,
        };
        c.train_corpus = CorpusSource::Synthetic {
            base_seed: 1000,
            count: 20,
            size: 128,
        };
        c.holdout_corpus = CorpusSource::Synthetic {
            base_seed: 9000,
            count: 4,
            size: 128,
        };
        c.checkpoint_every = 5_000;
        c.log_every = 10;
        c
    }

    pub fn validate(&self) -> Result<()> {
        if self.checkpoint_every == 0 {
            return Err(Error::config("train.checkpoint_every", "must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(Error::config("train.log_every", "must be at least 1"));
        }
        if self.dictionary.atoms == 0 {
            return Err(Error::config("dictionary.atoms", "must be at least 1"));
        }
        if self.dictionary.mp.kmax == 0 {
            return Err(Error::config("dictionary.kmax", "must be at least 1"));
        }
        if !(self.dictionary.mp.tol >= 0.0) {
            return Err(Error::config("dictionary.tol", "must be non-negative"));
        }
        if !(self.dictionary.lr.initial >= 0.0 && self.dictionary.lr.decay_frames > 0.0) {
            return Err(Error::config("dictionary.lr", "rate must be >= 0 and decay > 0"));
        }
        if !(self.policy.temperature_decay > 0.0 && self.policy.temperature_decay <= 1.0) {
            return Err(Error::config("policy.temperature_decay", "must lie in (0, 1]"));
        }
        if !(self.policy.min_temperature > 0.0) {
            return Err(Error::config("policy.min_temperature", "must be positive"));
        }
        self.dictionary.grid.validate()?;
        self.env.validate()?;
        self.nac.validate()?;
        Ok(())
    }

    /// Fingerprint of every setting that influences the learned state.
    /// Run length and cadences are excluded so a run can be resumed and extended.
    pub fn fingerprint(&self) -> u32 {
        let mut s = String::new();
        let _ = write!(
            s,
            "{}|{:?}|{:?}|{:?}|{:?}|{:?}",
            self.seed, self.train_corpus, self.dictionary, self.policy, self.nac, self.env
        );
        crc32fast::hash(s.as_bytes())
    }
}

/// One telemetry row; `reward` scores the previous frame's action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TelemetryRow {
    pub frame: u64,
    pub recon_error: f64,
    pub reward: f64,
    pub slip: Vec2,
    pub eye_velocity: Vec2,
    pub action: Action,
}

pub const TELEMETRY_HEADER: &str = "frame,recon_error,reward,slip_x,slip_y,eye_vx,eye_vy,action_x,action_y";

impl TelemetryRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.frame,
            self.recon_error,
            self.reward,
            self.slip.x,
            self.slip.y,
            self.eye_velocity.x,
            self.eye_velocity.y,
            self.action.accel.x,
            self.action.accel.y
        )
    }
}

pub fn telemetry_csv(rows: &[TelemetryRow]) -> String {
    let mut out = String::with_capacity(64 * (rows.len() + 1));
    out.push_str(TELEMETRY_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv());
        out.push('\n');
    }
    out
}

pub fn build_policy(config: &PolicyConfig, features: usize, max_accel: f64) -> Result<Policy> {
    Ok(match config.head {
        HeadKind::Softmax => Policy::Softmax(SoftmaxPolicy::new(
            config.actions,
            features,
            config.temperature,
            max_accel,
        )?),
        HeadKind::Gaussian => Policy::Gaussian(GaussianPolicy::new(config.hidden, features, config.sigma, max_accel)?),
    })
}

/// Features as seen by the actor and critic.
pub fn policy_input(f: FeatureVector, divisive_norm: bool) -> FeatureVector {
    if divisive_norm {
        f.divisively_normalized()
    } else {
        f
    }
}

/// Mutable learning state plus the corpus it runs on.
pub struct Trainer {
    config: TrainConfig,
    corpus: Corpus,
    pub dictionary: Dictionary,
    pub policy: Policy,
    pub critic: CriticState,
    pub env: EnvState,
    policy_rng: ChaCha8Rng,
    frame: u64,
    pending: Option<PendingTransition>,
    max_energy_violation: f64,
}

impl Trainer {
    pub fn new(config: TrainConfig) -> Result<Self> {
        config.validate()?;
        let corpus = config.train_corpus.load()?;
        Trainer::with_corpus(config, corpus)
    }

    pub fn with_corpus(config: TrainConfig, corpus: Corpus) -> Result<Self> {
        config.validate()?;
        let n = config.dictionary.atoms;
        let dictionary = Dictionary::random(n, PATCH_DIM, &mut stream_rng(config.seed, Stream::DictionaryInit));
        let mut policy = build_policy(&config.policy, n, config.env.max_accel)?;
        policy.randomize(config.policy.init_scale, &mut stream_rng(config.seed, Stream::PolicyInit));
        let critic = CriticState::new(n, policy.param_count(), config.nac);
        let mut env = EnvState::reset(config.seed, &corpus, config.env)?;
        env.step(&corpus, Action::default());
        Ok(Trainer {
            policy_rng: stream_rng(config.seed, Stream::Policy),
            config,
            corpus,
            dictionary,
            policy,
            critic,
            env,
            frame: 0,
            pending: None,
            max_energy_violation: 0.0,
        })
    }

    /// Continue from a checkpoint. The configuration must match the one it was written with.
    pub fn resume(config: TrainConfig, ckpt: &Checkpoint) -> Result<Self> {
        config.validate()?;
        if ckpt.config_hash != config.fingerprint() {
            return Err(Error::Checkpoint(format!(
                "checkpoint was written by config {:08x}, current config is {:08x}",
                ckpt.config_hash,
                config.fingerprint()
            )));
        }
        let corpus = config.train_corpus.load()?;
        Ok(Trainer {
            policy_rng: ckpt.policy_rng.restore(),
            corpus,
            dictionary: ckpt.dictionary.clone(),
            policy: ckpt.policy.clone(),
            critic: ckpt.critic.clone(),
            env: ckpt.env.clone(),
            frame: ckpt.frame,
            pending: ckpt.pending.clone(),
            max_energy_violation: 0.0,
            config,
        })
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn max_energy_violation(&self) -> f64 {
        self.max_energy_violation
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            frame: self.frame,
            config_hash: self.config.fingerprint(),
            dictionary: self.dictionary.clone(),
            policy: self.policy.clone(),
            critic: self.critic.clone(),
            env: self.env.clone(),
            policy_rng: RngState::capture(&self.policy_rng),
            pending: self.pending.clone(),
        }
    }

    /// Run one frame of the loop.
    pub fn step(&mut self) -> Result<TelemetryRow> {
        let frame = self.frame;
        let cfg = &self.config;
        let pair = self.env.render(&self.corpus);
        let slip = self.env.slip();
        let eye_velocity = self.env.eye.velocity;

        let batch = extract_patches(&pair, cfg.dictionary.grid);
        let encoding = Encoder::new(&self.dictionary)
            .map_err(|e| numeric(frame, e))?
            .encode(&batch, cfg.dictionary.mp);
        if cfg.check_energy && encoding.max_energy_violation > ENERGY_TOL {
            return Err(Error::Numeric {
                frame,
                message: format!(
                    "matching pursuit energy identity violated by {:e}",
                    encoding.max_energy_violation
                ),
            });
        }
        self.max_energy_violation = self.max_energy_violation.max(encoding.max_energy_violation);
        let recon_error = encoding.reconstruction_error(&batch);
        let reward = -recon_error;
        let features = policy_input(
            pool_features(&encoding.codes, batch.len(), self.dictionary.len()),
            cfg.policy.divisive_norm,
        );

        if let Policy::Softmax(p) = &mut self.policy {
            p.temperature = cfg.policy.temperature_at(frame);
        }
        if let Some(prev) = self.pending.take() {
            nac_update(
                &mut self.critic,
                &mut self.policy,
                &prev.features,
                prev.choice,
                reward,
                &features,
            )
            .map_err(|e| numeric(frame, e))?;
        }

        let choice = self
            .policy
            .sample(&features, &mut self.policy_rng)
            .map_err(|e| numeric(frame, e))?;
        let action = self.policy.action_of(choice);
        self.env.step(&self.corpus, action);

        self.dictionary
            .apply_update(&encoding.codes, &encoding.residuals, cfg.dictionary.lr.at(frame));

        self.pending = Some(PendingTransition { features, choice });
        self.frame += 1;
        Ok(TelemetryRow {
            frame,
            recon_error,
            reward,
            slip,
            eye_velocity,
            action,
        })
    }
}

fn numeric(frame: u64, e: Error) -> Error {
    match e {
        Error::Numeric { message, .. } => Error::Numeric { frame, message },
        other => Error::Numeric {
            frame,
            message: other.to_string(),
        },
    }
}

pub struct TrainOutcome {
    pub final_checkpoint: Checkpoint,
    pub telemetry: Vec<TelemetryRow>,
    pub max_energy_violation: f64,
}

/// Run `trainer` until its frame counter reaches `until`, logging at the
/// configured cadence and handing out checkpoints at the checkpoint cadence.
/// A checkpoint is always emitted for the starting state and the final state.
pub fn run(
    trainer: &mut Trainer,
    until: u64,
    mut on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    let log_every = trainer.config.log_every;
    let ckpt_every = trainer.config.checkpoint_every;
    let mut telemetry = Vec::new();
    on_checkpoint(&trainer.checkpoint())?;
    while trainer.frame < until {
        let row = trainer.step()?;
        if row.frame % log_every == 0 {
            telemetry.push(row);
        }
        if trainer.frame % ckpt_every == 0 && trainer.frame < until {
            on_checkpoint(&trainer.checkpoint())?;
        }
    }
    let final_checkpoint = trainer.checkpoint();
    if final_checkpoint.frame > 0 || until == 0 {
        on_checkpoint(&final_checkpoint)?;
    }
    Ok(TrainOutcome {
        final_checkpoint,
        telemetry,
        max_energy_violation: trainer.max_energy_violation,
    })
}

/// Train from scratch for `config.total_frames` frames.
pub fn train(config: &TrainConfig, on_checkpoint: impl FnMut(&Checkpoint) -> Result<()>) -> Result<TrainOutcome> {
    let mut trainer = Trainer::new(config.clone())?;
    run(&mut trainer, config.total_frames, on_checkpoint)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny() -> TrainConfig {
        let mut c = TrainConfig::smoke();
        c.train_corpus = CorpusSource::Synthetic {
            base_seed: 3,
            count: 3,
            size: 64,
        };
        c.dictionary.atoms = 16;
        c.total_frames = 40;
        c.log_every = 1;
        c.checkpoint_every = 10;
        c
    }

    #[test]
    fn zero_frames_gives_initial_checkpoint_only() {
        let mut c = tiny();
        c.total_frames = 0;
        let mut seen = Vec::new();
        let out = train(&c, |ck| {
            seen.push(ck.frame);
            Ok(())
        })
        .unwrap();
        assert!(out.telemetry.is_empty());
        assert_eq!(out.final_checkpoint.frame, 0);
        assert!(seen.iter().all(|&f| f == 0));
    }

    #[test]
    fn rewards_bounded_and_checkpoints_at_cadence() {
        let c = tiny();
        let mut seen = Vec::new();
        let out = train(&c, |ck| {
            seen.push(ck.frame);
            Ok(())
        })
        .unwrap();
        assert_eq!(out.telemetry.len(), 40);
        assert!(out.telemetry.iter().all(|r| (-1.0..=0.0).contains(&r.reward)));
        assert_eq!(seen, vec![0, 10, 20, 30, 40]);
    }

    #[test]
    fn invalid_cadence_rejected() {
        let mut c = tiny();
        c.log_every = 0;
        assert!(matches!(Trainer::new(c), Err(Error::Config { .. })));
    }

    #[test]
    fn temperature_schedule() {
        let p = PolicyConfig {
            temperature: 2.0,
            temperature_decay: 0.5,
            min_temperature: 0.3,
            ..PolicyConfig::default()
        };
        assert_eq!(p.temperature_at(0), 2.0);
        assert_eq!(p.temperature_at(1), 1.0);
        assert_eq!(p.temperature_at(5), 0.3);
    }
}
