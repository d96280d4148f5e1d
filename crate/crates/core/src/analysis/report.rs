//! Evaluation of checkpoints: MSE training curves, dictionary-wide fits and
//! atom renderings.

use ndarray::Axis;
use rayon::prelude::*;

use crate::checkpoint::Checkpoint;
use crate::error::{Error, Result};
use crate::imagery::{Corpus, GrayImage};
use crate::sparsecode::{Dictionary, MpParams, PatchGrid, PATCH_PX};

use super::gabor::{fit_gabor, preferred_velocity, GaborFit};
use super::slip_grid::{eval_slip_grid, mean_std, Controller, LearnedController, SlipGridOptions, SlipGridResult};

/// Encoder settings a checkpoint was trained with.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalSettings {
    pub grid: PatchGrid,
    pub mp: MpParams,
    pub divisive_norm: bool,
    pub slip_grid: SlipGridOptions,
}

/// Evaluate several trials, each represented by one checkpoint, on the slip grid.
pub fn eval_checkpoints(trials: &[&Checkpoint], holdout: &Corpus, settings: EvalSettings) -> Result<SlipGridResult> {
    let controllers = trials
        .iter()
        .map(|c| LearnedController::new(&c.policy, &c.dictionary, settings.grid, settings.mp, settings.divisive_norm))
        .collect::<Result<Vec<_>>>()?;
    let refs: Vec<&dyn Controller> = controllers.iter().map(|c| c as &dyn Controller).collect();
    eval_slip_grid(&refs, holdout, settings.slip_grid)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CurvePoint {
    pub frame: u64,
    pub mse: f64,
    /// Standard deviation across trials; `None` for a single trial.
    pub std: Option<f64>,
    pub toward_origin: usize,
}

/// Slip-grid MSE along training. `trials[t]` is the ordered checkpoint list of
/// trial `t`; points are matched by position and must share frame numbers.
pub fn mse_training_curve(trials: &[Vec<Checkpoint>], holdout: &Corpus, settings: EvalSettings) -> Result<Vec<CurvePoint>> {
    let Some(first) = trials.first() else {
        return Err(Error::Argument("no trials supplied".into()));
    };
    for t in trials {
        if t.len() != first.len() || t.iter().zip(first).any(|(a, b)| a.frame != b.frame) {
            return Err(Error::Argument("trials must have checkpoints at the same frames".into()));
        }
    }
    (0..first.len())
        .map(|i| {
            let cps: Vec<&Checkpoint> = trials.iter().map(|t| &t[i]).collect();
            let r = eval_checkpoints(&cps, holdout, settings)?;
            Ok(CurvePoint {
                frame: first[i].frame,
                mse: r.mse,
                std: (trials.len() > 1).then(|| mean_std(&r.trial_mse).1),
                toward_origin: r.conditions_toward_origin(),
            })
        })
        .collect()
}

pub fn curve_csv(points: &[CurvePoint]) -> String {
    let mut s = String::from("frame,mse,std,toward_origin\n");
    for p in points {
        let std = p.std.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", p.frame, p.mse, std, p.toward_origin));
    }
    s
}

/// Fit every atom of a dictionary.
pub fn fit_dictionary(dict: &Dictionary) -> Vec<GaborFit> {
    let atoms: Vec<_> = dict.atoms().axis_iter(Axis(0)).collect();
    atoms.par_iter().map(|a| fit_gabor(*a)).collect()
}

/// Median fit error over fitted atoms, `None` if none could be fit.
pub fn median_fit_error(fits: &[GaborFit]) -> Option<f64> {
    let mut e: Vec<f64> = fits.iter().filter_map(|f| f.error()).collect();
    if e.is_empty() {
        return None;
    }
    e.sort_by(f64::total_cmp);
    let n = e.len();
    Some(if n % 2 == 1 {
        e[n / 2]
    } else {
        0.5 * (e[n / 2 - 1] + e[n / 2])
    })
}

pub fn fit_table_csv(fits: &[GaborFit]) -> String {
    let mut s = String::from(
        "atom,status,fit_error,x0,y0,orientation_deg,wavelength,sigma_u,sigma_w,phase_prev,phase_curr,amplitude,phase_shift,velocity\n",
    );
    for (i, f) in fits.iter().enumerate() {
        match f {
            GaborFit::Fit { params: p, error } => s.push_str(&format!(
                "{i},fit,{error},{},{},{},{},{},{},{},{},{},{},{}\n",
                p.x0,
                p.y0,
                p.orientation.to_degrees(),
                p.wavelength,
                p.sigma_u,
                p.sigma_w,
                p.phase_prev,
                p.phase_curr,
                p.amplitude,
                p.phase_shift(),
                preferred_velocity(p)
            )),
            GaborFit::Unfit => s.push_str(&format!("{i},unfit,,,,,,,,,,,,\n")),
        }
    }
    s
}

/// Tile atoms as 10-wide by 20-tall tiles (previous frame above current),
/// `per_row` tiles per row with a one-pixel mid-grey border.
/// Each tile is scaled so its largest magnitude maps to black or white.
pub fn render_atoms(dict: &Dictionary, per_row: usize) -> Result<GrayImage> {
    if per_row == 0 || dict.is_empty() {
        return Err(Error::Argument("nothing to render".into()));
    }
    let rows = dict.len().div_ceil(per_row);
    let tile_w = PATCH_PX + 1;
    let tile_h = 2 * PATCH_PX + 1;
    let width = per_row * tile_w + 1;
    let height = rows * tile_h + 1;
    let mut px = vec![0.5; width * height];
    for (n, atom) in dict.atoms().axis_iter(Axis(0)).enumerate() {
        let scale = atom.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let ox = 1 + (n % per_row) * tile_w;
        let oy = 1 + (n / per_row) * tile_h;
        for (i, v) in atom.iter().enumerate() {
            let h = i / (PATCH_PX * PATCH_PX);
            let r = (i / PATCH_PX) % PATCH_PX;
            let c = i % PATCH_PX;
            let val = if scale > 0.0 { 0.5 + 0.5 * v / scale } else { 0.5 };
            px[(oy + h * PATCH_PX + r) * width + ox + c] = val;
        }
    }
    GrayImage::new(width, height, px)
}
