//! Policy accuracy against the one-step ideal controller on a 9×9 grid of
//! retinal slips, using held-out textures.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::environment::{ideal_action, Action, Vec2};
use crate::error::{Error, Result};
use crate::features::pool_features;
use crate::imagery::{sample_window, Corpus, FramePair, GrayImage};
use crate::policy::Policy;
use crate::sparsecode::{extract_patches, Dictionary, Encoder, MpParams, PatchGrid};
use crate::trainer::policy_input;

/// Something that maps a frame pair to an action. The slip is passed so
/// oracle controllers can be evaluated through the same harness.
pub trait Controller: Sync {
    fn act(&self, pair: &FramePair, slip: Vec2) -> Result<Action>;
}

/// The ideal smooth-pursuit controller.
pub struct IdealController {
    pub max_accel: f64,
}

impl Controller for IdealController {
    fn act(&self, _pair: &FramePair, slip: Vec2) -> Result<Action> {
        Ok(ideal_action(slip, self.max_accel))
    }
}

/// Greedy action of a learned policy on top of its dictionary.
pub struct LearnedController<'a> {
    policy: &'a Policy,
    dictionary: &'a Dictionary,
    encoder: Encoder<'a>,
    grid: PatchGrid,
    mp: MpParams,
    divisive_norm: bool,
}

impl<'a> LearnedController<'a> {
    pub fn new(
        policy: &'a Policy,
        dictionary: &'a Dictionary,
        grid: PatchGrid,
        mp: MpParams,
        divisive_norm: bool,
    ) -> Result<Self> {
        Ok(LearnedController {
            policy,
            dictionary,
            encoder: Encoder::new(dictionary)?,
            grid,
            mp,
            divisive_norm,
        })
    }
}

impl Controller for LearnedController<'_> {
    fn act(&self, pair: &FramePair, _slip: Vec2) -> Result<Action> {
        let batch = extract_patches(pair, self.grid);
        let enc = self.encoder.encode(&batch, self.mp);
        let f = policy_input(
            pool_features(&enc.codes, batch.len(), self.dictionary.len()),
            self.divisive_norm,
        );
        self.policy.greedy(&f)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlipGridOptions {
    pub pairs_per_condition: usize,
    /// Slips run over `-range..=range` px/frame per axis in unit steps.
    pub range: i32,
    pub max_accel: f64,
    pub seed: u64,
}

impl Default for SlipGridOptions {
    fn default() -> Self {
        SlipGridOptions {
            pairs_per_condition: 50,
            range: 4,
            max_accel: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConditionResult {
    pub slip: Vec2,
    pub ideal: Action,
    pub mean_action: Vec2,
    /// Mean over pairs and trials of `‖greedy − ideal‖²`.
    pub sq_error: f64,
}

impl ConditionResult {
    /// The mean action reduces slip: positive projection on the ideal action.
    pub fn points_to_origin(&self) -> bool {
        self.mean_action.dot(self.ideal.accel) > 0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MagnitudeBucket {
    pub magnitude: u32,
    pub conditions: usize,
    pub mse: f64,
    /// Standard deviation of the bucket MSE across trials.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SlipGridResult {
    pub conditions: Vec<ConditionResult>,
    /// Mean of the per-condition squared errors.
    pub mse: f64,
    pub trial_mse: Vec<f64>,
    pub mse_std: f64,
    pub by_magnitude: Vec<MagnitudeBucket>,
}

impl SlipGridResult {
    pub fn conditions_toward_origin(&self) -> usize {
        self.conditions.iter().filter(|c| c.points_to_origin()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("slip_x,slip_y,ideal_x,ideal_y,mean_action_x,mean_action_y,sq_error\n");
        for c in &self.conditions {
            s.push_str(&format!(
                "{},{},{},{},{},{},{}\n",
                c.slip.x, c.slip.y, c.ideal.accel.x, c.ideal.accel.y, c.mean_action.x, c.mean_action.y, c.sq_error
            ));
        }
        s
    }

    pub fn magnitude_csv(&self) -> String {
        let mut s = String::from("magnitude,conditions,mse,std\n");
        for b in &self.by_magnitude {
            s.push_str(&format!("{},{},{},{}\n", b.magnitude, b.conditions, b.mse, b.std));
        }
        s
    }
}

/// Stable identity of an image, independent of where it sits in a corpus.
fn image_key(img: &GrayImage) -> u64 {
    let mut h = crc32fast::Hasher::new();
    h.update(&(img.width() as u64).to_le_bytes());
    h.update(&(img.height() as u64).to_le_bytes());
    for p in img.pixels() {
        h.update(&p.to_le_bytes());
    }
    h.finalize() as u64
}

/// Pair sampling sites `(image, x, y)`, shared by every condition.
///
/// Images are put in a canonical order first, so the sites depend on the
/// set of held-out images and not on their listing order.
fn sampling_sites(holdout: &Corpus, count: usize, seed: u64) -> Vec<(usize, f64, f64)> {
    let mut order: Vec<(u64, usize)> = holdout
        .textures()
        .iter()
        .enumerate()
        .map(|(i, img)| (image_key(img), i))
        .collect();
    order.sort();
    (0..count)
        .map(|j| {
            let (key, idx) = order[j % order.len()];
            let img = holdout.get(idx);
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ key.rotate_left(17) ^ (j as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15));
            (
                idx,
                rng.random_range(0.0..img.width() as f64).floor(),
                rng.random_range(0.0..img.height() as f64).floor(),
            )
        })
        .collect()
}

/// Frame pair whose content moves by `slip` between the two frames.
pub fn translated_pair(img: &GrayImage, x: f64, y: f64, slip: Vec2) -> FramePair {
    FramePair {
        previous: sample_window(img, x, y, 0),
        current: sample_window(img, x - slip.x, y - slip.y, 1),
    }
}

fn grid_slips(range: i32) -> Vec<Vec2> {
    let mut out = Vec::new();
    for sy in -range..=range {
        for sx in -range..=range {
            out.push(Vec2::new(sx as f64, sy as f64));
        }
    }
    out
}

/// Evaluate one or more trained controllers (trials) on the slip grid.
pub fn eval_slip_grid(
    trials: &[&dyn Controller],
    holdout: &Corpus,
    opts: SlipGridOptions,
) -> Result<SlipGridResult> {
    if holdout.is_empty() {
        return Err(Error::config("holdout", "held-out corpus is empty"));
    }
    if trials.is_empty() {
        return Err(Error::Argument("no trials to evaluate".into()));
    }
    if opts.pairs_per_condition == 0 {
        return Err(Error::config("eval.pairs_per_condition", "must be at least 1"));
    }
    let sites = sampling_sites(holdout, opts.pairs_per_condition, opts.seed);
    let slips = grid_slips(opts.range);

    // per_trial[t][c] = (sum of actions, mean squared error)
    let per_trial: Vec<Vec<(Vec2, f64)>> = trials
        .iter()
        .map(|ctrl| {
            slips
                .par_iter()
                .map(|&slip| {
                    let ideal = ideal_action(slip, opts.max_accel);
                    let mut sum = Vec2::ZERO;
                    let mut sq = 0.0;
                    for &(idx, x, y) in &sites {
                        let pair = translated_pair(holdout.get(idx), x, y, slip);
                        let a = ctrl.act(&pair, slip)?;
                        sum = sum + a.accel;
                        sq += (a.accel - ideal.accel).norm_sq();
                    }
                    Ok((sum, sq / sites.len() as f64))
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    let n_trials = trials.len() as f64;
    let n_pairs = sites.len() as f64;
    let conditions: Vec<ConditionResult> = slips
        .iter()
        .enumerate()
        .map(|(c, &slip)| {
            let mut sum = Vec2::ZERO;
            let mut sq = 0.0;
            for t in &per_trial {
                sum = sum + t[c].0;
                sq += t[c].1;
            }
            ConditionResult {
                slip,
                ideal: ideal_action(slip, opts.max_accel),
                mean_action: sum * (1.0 / (n_pairs * n_trials)),
                sq_error: sq / n_trials,
            }
        })
        .collect();

    let trial_mse: Vec<f64> = per_trial
        .iter()
        .map(|t| t.iter().map(|c| c.1).sum::<f64>() / t.len() as f64)
        .collect();
    let mse = conditions.iter().map(|c| c.sq_error).sum::<f64>() / conditions.len() as f64;

    let max_mag = slips.iter().map(|s| magnitude_bucket(*s)).max().unwrap_or(0);
    let by_magnitude = (0..=max_mag)
        .filter_map(|m| {
            let idx: Vec<usize> = (0..slips.len()).filter(|&c| magnitude_bucket(slips[c]) == m).collect();
            if idx.is_empty() {
                return None;
            }
            let per: Vec<f64> = per_trial
                .iter()
                .map(|t| idx.iter().map(|&c| t[c].1).sum::<f64>() / idx.len() as f64)
                .collect();
            let (mean, std) = mean_std(&per);
            Some(MagnitudeBucket {
                magnitude: m,
                conditions: idx.len(),
                mse: mean,
                std,
            })
        })
        .collect();
    let (_, mse_std) = mean_std(&trial_mse);

    Ok(SlipGridResult {
        conditions,
        mse,
        trial_mse,
        mse_std,
        by_magnitude,
    })
}

/// Euclidean slip magnitude rounded to the nearest pixel.
pub fn magnitude_bucket(slip: Vec2) -> u32 {
    slip.norm_sq().sqrt().round() as u32
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Expected MSE of a controller that always outputs zero:
/// the grid average of `‖ideal(s)‖²`.
pub fn zero_action_mse(range: i32, max_accel: f64) -> f64 {
    let slips = grid_slips(range);
    slips
        .iter()
        .map(|&s| ideal_action(s, max_accel).accel.norm_sq())
        .sum::<f64>()
        / slips.len() as f64
}
