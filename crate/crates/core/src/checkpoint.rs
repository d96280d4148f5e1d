//! Checkpoint container.
//!
//! Layout:
//!
//! ```text
//! pursuit-checkpoint\n
//! key = value\n            text header, `[section]` lines group keys
//! ...
//! end_header\n
//! <payload>                little-endian IEEE-754 binary64 values
//! <crc32>                  4 bytes, little-endian, over everything before it
//! ```
//!
//! Payload order: dictionary atoms (row-major, `atoms × dim`), policy
//! parameters, critic value weights, value bias, advantage weights, value
//! trace, value-bias trace, advantage trace, and finally the pending
//! feature vector when `pending.present = 1`.
//!
//! Scalars in the header are written with Rust's shortest round-trip float
//! formatting, so every field reloads bit-exactly.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use ndarray::Array2;

use crate::environment::{EnvParams, EnvState, EyeState, TargetState, Vec2};
use crate::error::{Error, Result};
use crate::features::FeatureVector;
use crate::policy::{ActorRule, Choice, CriticState, GaussianPolicy, HeadKind, NacParams, Policy, SoftmaxPolicy};
use crate::rng::RngState;
use crate::sparsecode::Dictionary;

pub const MAGIC: &str = "pursuit-checkpoint";
pub const FORMAT_VERSION: u32 = 1;
const END_HEADER: &str = "end_header\n";

/// Features and choice of the last frame, awaiting their reward.
#[derive(Debug, Clone, PartialEq)]
pub struct PendingTransition {
    pub features: FeatureVector,
    pub choice: Choice,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub frame: u64,
    pub config_hash: u32,
    pub dictionary: Dictionary,
    pub policy: Policy,
    pub critic: CriticState,
    pub env: EnvState,
    pub policy_rng: RngState,
    pub pending: Option<PendingTransition>,
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().fold(String::new(), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn unhex32(s: &str) -> Option<[u8; 32]> {
    if s.len() != 64 {
        return None;
    }
    let mut out = [0u8; 32];
    for (i, o) in out.iter_mut().enumerate() {
        *o = u8::from_str_radix(&s[2 * i..2 * i + 2], 16).ok()?;
    }
    Some(out)
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut h = String::new();
        let kv = |h: &mut String, k: &str, v: String| {
            let _ = writeln!(h, "{k} = {v}");
        };
        h.push_str(MAGIC);
        h.push('\n');
        kv(&mut h, "format_version", FORMAT_VERSION.to_string());
        kv(&mut h, "float", "f64le".into());
        kv(&mut h, "frame", self.frame.to_string());
        kv(&mut h, "config_hash", format!("{:08x}", self.config_hash));

        h.push_str("[dictionary]\n");
        kv(&mut h, "dictionary.atoms", self.dictionary.len().to_string());
        kv(&mut h, "dictionary.dim", self.dictionary.dim().to_string());
        kv(&mut h, "dictionary.generation", self.dictionary.generation().to_string());

        h.push_str("[policy]\n");
        kv(&mut h, "policy.head", self.policy.kind().name().into());
        match &self.policy {
            Policy::Softmax(p) => {
                kv(&mut h, "policy.features", p.features().to_string());
                kv(&mut h, "policy.actions", p.actions().to_string());
                kv(&mut h, "policy.temperature", p.temperature.to_string());
                kv(&mut h, "policy.max_accel", p.max_accel.to_string());
            }
            Policy::Gaussian(p) => {
                kv(&mut h, "policy.features", p.features().to_string());
                kv(&mut h, "policy.hidden", p.hidden().to_string());
                kv(&mut h, "policy.sigma", p.sigma.to_string());
                kv(&mut h, "policy.max_accel", p.max_accel.to_string());
            }
        }
        kv(&mut h, "policy.params", self.policy.param_count().to_string());

        h.push_str("[critic]\n");
        let n = &self.critic.params;
        kv(&mut h, "critic.gamma", n.gamma.to_string());
        kv(&mut h, "critic.lambda", n.lambda.to_string());
        kv(&mut h, "critic.alpha_v", n.alpha_v.to_string());
        kv(&mut h, "critic.alpha_w", n.alpha_w.to_string());
        kv(&mut h, "critic.alpha_theta", n.alpha_theta.to_string());
        kv(&mut h, "critic.rule", n.rule.name().into());
        kv(&mut h, "critic.features", self.critic.v.len().to_string());

        h.push_str("[env]\n");
        let e = &self.env;
        kv(&mut h, "env.frame_index", e.frame_index.to_string());
        kv(&mut h, "env.episode_frames", e.params.episode_frames.to_string());
        kv(&mut h, "env.max_speed", e.params.max_speed.to_string());
        kv(&mut h, "env.max_accel", e.params.max_accel.to_string());
        kv(&mut h, "env.texture_id", e.target.texture_id.to_string());
        kv(&mut h, "env.phase", e.target.phase.to_string());
        kv(&mut h, "env.target_velocity", vec2(e.target.velocity));
        kv(&mut h, "env.target_position", vec2(e.target.position));
        kv(&mut h, "env.eye_velocity", vec2(e.eye.velocity));
        kv(&mut h, "env.eye_position", vec2(e.eye.position));
        let er = e.rng_state();
        kv(&mut h, "env.rng_seed", hex(&er.seed));
        kv(&mut h, "env.rng_stream", er.stream.to_string());
        kv(&mut h, "env.rng_word_pos", er.word_pos.to_string());

        h.push_str("[policy_rng]\n");
        kv(&mut h, "policy_rng.seed", hex(&self.policy_rng.seed));
        kv(&mut h, "policy_rng.stream", self.policy_rng.stream.to_string());
        kv(&mut h, "policy_rng.word_pos", self.policy_rng.word_pos.to_string());

        h.push_str("[pending]\n");
        match &self.pending {
            None => kv(&mut h, "pending.present", "0".into()),
            Some(p) => {
                kv(&mut h, "pending.present", "1".into());
                let choice = match p.choice {
                    Choice::Discrete([a, b]) => format!("discrete {a} {b}"),
                    Choice::Continuous([a, b]) => format!("continuous {a} {b}"),
                };
                kv(&mut h, "pending.choice", choice);
                kv(&mut h, "pending.features", p.features.len().to_string());
            }
        }

        let mut payload: Vec<f64> = Vec::new();
        payload.extend(self.dictionary.atoms().iter());
        payload.extend_from_slice(self.policy.params());
        payload.extend_from_slice(&self.critic.v);
        payload.push(self.critic.v_bias);
        payload.extend_from_slice(&self.critic.w);
        payload.extend_from_slice(&self.critic.trace_v);
        payload.push(self.critic.trace_v_bias);
        payload.extend_from_slice(&self.critic.trace_w);
        if let Some(p) = &self.pending {
            payload.extend_from_slice(p.features.as_slice());
        }
        kv(&mut h, "payload_values", payload.len().to_string());
        h.push_str(END_HEADER);

        let mut out = h.into_bytes();
        out.reserve(payload.len() * 8 + 4);
        for v in payload {
            out.extend_from_slice(&v.to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint> {
        let end = find(bytes, END_HEADER.as_bytes())
            .ok_or_else(|| Error::Checkpoint("truncated file: header terminator missing".into()))?;
        let header_len = end + END_HEADER.len();
        let text = std::str::from_utf8(&bytes[..end])
            .map_err(|_| Error::Checkpoint("header is not valid UTF-8".into()))?;
        let mut lines = text.lines();
        if lines.next() != Some(MAGIC) {
            return Err(Error::Checkpoint("not a checkpoint file (bad magic)".into()));
        }
        let mut map = BTreeMap::new();
        for line in lines {
            if line.starts_with('[') || line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once(" = ")
                .ok_or_else(|| Error::Checkpoint(format!("malformed header line `{line}`")))?;
            map.insert(k.to_string(), v.to_string());
        }
        let h = Header(map);

        let version: u32 = h.parse("format_version")?;
        if version != FORMAT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported format version {version}, expected {FORMAT_VERSION}"
            )));
        }
        if h.get("float")? != "f64le" {
            return Err(Error::Checkpoint(format!("unsupported float encoding `{}`", h.get("float")?)));
        }
        let count: usize = h.parse("payload_values")?;
        let expected = header_len + count * 8 + 4;
        if bytes.len() < expected {
            return Err(Error::Checkpoint(format!(
                "truncated file: {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        if bytes.len() > expected {
            return Err(Error::Checkpoint(format!(
                "trailing data: {} bytes, expected {expected}",
                bytes.len()
            )));
        }
        let stored = u32::from_le_bytes(bytes[expected - 4..].try_into().expect("4 bytes"));
        if crc32fast::hash(&bytes[..expected - 4]) != stored {
            return Err(Error::Checkpoint("checksum mismatch: file is corrupted".into()));
        }
        let mut values = bytes[header_len..expected - 4]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")));
        let mut take = |n: usize| -> Result<Vec<f64>> {
            let v: Vec<f64> = values.by_ref().take(n).collect();
            if v.len() != n {
                return Err(Error::Checkpoint("payload shorter than the header declares".into()));
            }
            Ok(v)
        };

        let atoms: usize = h.parse("dictionary.atoms")?;
        let dim: usize = h.parse("dictionary.dim")?;
        let atoms_arr = Array2::from_shape_vec((atoms, dim), take(atoms * dim)?)
            .map_err(|e| Error::Checkpoint(e.to_string()))?;
        let dictionary = Dictionary::from_atoms(atoms_arr, h.parse("dictionary.generation")?)?;

        let head = h.get("policy.head")?;
        let max_accel: f64 = h.parse("policy.max_accel")?;
        let features: usize = h.parse("policy.features")?;
        let mut policy = match HeadKind::parse(head) {
            Some(HeadKind::Softmax) => Policy::Softmax(SoftmaxPolicy::new(
                h.parse("policy.actions")?,
                features,
                h.parse("policy.temperature")?,
                max_accel,
            )?),
            Some(HeadKind::Gaussian) => Policy::Gaussian(GaussianPolicy::new(
                h.parse("policy.hidden")?,
                features,
                h.parse("policy.sigma")?,
                max_accel,
            )?),
            None => return Err(Error::Checkpoint(format!("unknown policy head `{head}`"))),
        };
        let pcount: usize = h.parse("policy.params")?;
        if pcount != policy.param_count() {
            return Err(Error::Checkpoint(format!(
                "policy declares {pcount} parameters but its shape implies {}",
                policy.param_count()
            )));
        }
        policy.params_mut().copy_from_slice(&take(pcount)?);

        let rule = h.get("critic.rule")?;
        let nac = NacParams {
            gamma: h.parse("critic.gamma")?,
            lambda: h.parse("critic.lambda")?,
            alpha_v: h.parse("critic.alpha_v")?,
            alpha_w: h.parse("critic.alpha_w")?,
            alpha_theta: h.parse("critic.alpha_theta")?,
            rule: ActorRule::parse(rule).ok_or_else(|| Error::Checkpoint(format!("unknown actor rule `{rule}`")))?,
        };
        let cf: usize = h.parse("critic.features")?;
        let v = take(cf)?;
        let v_bias = take(1)?[0];
        let w = take(pcount)?;
        let trace_v = take(cf)?;
        let trace_v_bias = take(1)?[0];
        let trace_w = take(pcount)?;
        let critic = CriticState {
            params: nac,
            v,
            v_bias,
            w,
            trace_v,
            trace_v_bias,
            trace_w,
        };

        let env_params = EnvParams {
            episode_frames: h.parse("env.episode_frames")?,
            max_speed: h.parse("env.max_speed")?,
            max_accel: h.parse("env.max_accel")?,
        };
        let env = EnvState::restore(
            TargetState {
                texture_id: h.parse("env.texture_id")?,
                velocity: h.vec2("env.target_velocity")?,
                phase: h.parse("env.phase")?,
                position: h.vec2("env.target_position")?,
            },
            EyeState {
                velocity: h.vec2("env.eye_velocity")?,
                position: h.vec2("env.eye_position")?,
            },
            h.parse("env.frame_index")?,
            env_params,
            h.rng("env.rng_seed", "env.rng_stream", "env.rng_word_pos")?,
        );
        let policy_rng = h.rng("policy_rng.seed", "policy_rng.stream", "policy_rng.word_pos")?;

        let pending = if h.parse::<u8>("pending.present")? == 1 {
            let spec = h.get("pending.choice")?;
            let parts: Vec<&str> = spec.split_whitespace().collect();
            let bad = || Error::Checkpoint(format!("malformed pending choice `{spec}`"));
            if parts.len() != 3 {
                return Err(bad());
            }
            let choice = match parts[0] {
                "discrete" => Choice::Discrete([
                    parts[1].parse().map_err(|_| bad())?,
                    parts[2].parse().map_err(|_| bad())?,
                ]),
                "continuous" => Choice::Continuous([
                    parts[1].parse().map_err(|_| bad())?,
                    parts[2].parse().map_err(|_| bad())?,
                ]),
                _ => return Err(bad()),
            };
            let nf: usize = h.parse("pending.features")?;
            Some(PendingTransition {
                features: FeatureVector(take(nf)?),
                choice,
            })
        } else {
            None
        };

        let config_hash = u32::from_str_radix(h.get("config_hash")?, 16)
            .map_err(|_| Error::Checkpoint("malformed config_hash".into()))?;

        Ok(Checkpoint {
            frame: h.parse("frame")?,
            config_hash,
            dictionary,
            policy,
            critic,
            env,
            policy_rng,
            pending,
        })
    }

    /// Write atomically: a temporary sibling is renamed over the target.
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, self.to_bytes()).map_err(|e| Error::io(&tmp, e))?;
        fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Checkpoint> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn vec2(v: Vec2) -> String {
    format!("{} {}", v.x, v.y)
}

fn find(haystack: &[u8], needle: &[u8]) -> Option<usize> {
    haystack.windows(needle.len()).position(|w| w == needle)
}

struct Header(BTreeMap<String, String>);

impl Header {
    fn get(&self, key: &str) -> Result<&str> {
        self.0
            .get(key)
            .map(String::as_str)
            .ok_or_else(|| Error::Checkpoint(format!("missing header key `{key}`")))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        let v = self.get(key)?;
        v.parse()
            .map_err(|_| Error::Checkpoint(format!("malformed value `{v}` for `{key}`")))
    }

    fn vec2(&self, key: &str) -> Result<Vec2> {
        let v = self.get(key)?;
        let mut it = v.split_whitespace().map(str::parse::<f64>);
        match (it.next(), it.next(), it.next()) {
            (Some(Ok(x)), Some(Ok(y)), None) => Ok(Vec2::new(x, y)),
            _ => Err(Error::Checkpoint(format!("malformed vector `{v}` for `{key}`"))),
        }
    }

    fn rng(&self, seed: &str, stream: &str, pos: &str) -> Result<RngState> {
        Ok(RngState {
            seed: unhex32(self.get(seed)?).ok_or_else(|| Error::Checkpoint(format!("malformed `{seed}`")))?,
            stream: self.parse(stream)?,
            word_pos: self.parse(pos)?,
        })
    }
}
