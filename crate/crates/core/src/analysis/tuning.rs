//! Direction and velocity tuning of atoms to drifting cosine gratings.
//!
//! A grating with wave direction `α`, wavelength `λ` and speed `v` shows
//! `cos(k·(x cosα + y sinα) − φ)` in the previous frame and the same pattern
//! displaced by `v` along `α` in the current frame. Each half is mean-removed,
//! as patches are before coding. The response of an atom is its squared
//! correlation with the grating, maximized over `φ`; that is the squared norm
//! of the atom's projection onto the span of the cosine and sine gratings,
//! divided by the atom's squared norm.

use std::f64::consts::TAU;

use ndarray::ArrayView1;

use crate::sparsecode::{PATCH_DIM, PATCH_PX, ZERO_NORM_EPS};

pub const DIRECTIONS: usize = 24;
pub const SPEED_STEP: f64 = 0.25;
pub const MAX_SPEED: f64 = 4.0;
/// Coarse wavelength grid in px; the best value is then refined locally.
pub const COARSE_WAVELENGTHS: [f64; 12] = [2.5, 3.0, 3.5, 4.0, 5.0, 6.0, 7.0, 8.0, 10.0, 12.0, 16.0, 20.0];
const REFINE_STEPS: usize = 10;
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TuningCurve {
    /// Optimal grating found by the search.
    pub wavelength: f64,
    /// Wave direction in degrees, in `[0, 360)`.
    pub direction_deg: f64,
    pub speed: f64,
    /// `(direction in degrees, response)` for the 24 directions.
    pub direction_curve: Vec<(f64, f64)>,
    /// `(signed speed along the optimal direction, response)`.
    pub velocity_curve: Vec<(f64, f64)>,
    pub direction_peak_deg: f64,
    pub velocity_peak: f64,
}

impl TuningCurve {
    /// Velocity peak expressed as a signed speed along wave direction `theta` (radians).
    pub fn velocity_peak_along(&self, theta: f64) -> f64 {
        if (self.direction_deg.to_radians() - theta).cos() < 0.0 {
            -self.velocity_peak
        } else {
            self.velocity_peak
        }
    }
}

fn mean_removed(mut v: Vec<f64>) -> Vec<f64> {
    let half = PATCH_PX * PATCH_PX;
    for h in 0..2 {
        let part = &mut v[h * half..(h + 1) * half];
        let m = part.iter().sum::<f64>() / half as f64;
        part.iter_mut().for_each(|x| *x -= m);
    }
    v
}

/// Cosine and sine gratings (both halves) for one stimulus.
pub fn grating_pair(direction: f64, wavelength: f64, speed: f64) -> (Vec<f64>, Vec<f64>) {
    let (s, c) = direction.sin_cos();
    let k = TAU / wavelength;
    let centre = (PATCH_PX as f64 - 1.0) / 2.0;
    let mut cos_g = vec![0.0; PATCH_DIM];
    let mut sin_g = vec![0.0; PATCH_DIM];
    for h in 0..2 {
        let shift = if h == 0 { 0.0 } else { speed };
        for row in 0..PATCH_PX {
            for col in 0..PATCH_PX {
                let z = k * ((col as f64 - centre) * c + (row as f64 - centre) * s - shift);
                let i = h * PATCH_PX * PATCH_PX + row * PATCH_PX + col;
                cos_g[i] = z.cos();
                sin_g[i] = z.sin();
            }
        }
    }
    (mean_removed(cos_g), mean_removed(sin_g))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Squared correlation of `atom` with the grating, maximized over phase. In `[0, 1]`.
pub fn grating_response(atom: &[f64], direction: f64, wavelength: f64, speed: f64) -> f64 {
    let aa = dot(atom, atom);
    if aa <= 0.0 {
        return 0.0;
    }
    let (cg, sg) = grating_pair(direction, wavelength, speed);
    let (cc, cs, ss) = (dot(&cg, &cg), dot(&cg, &sg), dot(&sg, &sg));
    let (ac, as_) = (dot(atom, &cg), dot(atom, &sg));
    let det = cc * ss - cs * cs;
    let proj = if det > 1e-10 * (cc * ss).max(1e-300) {
        (ss * ac * ac - 2.0 * cs * ac * as_ + cc * as_ * as_) / det
    } else {
        // The two gratings are (nearly) parallel: project on the larger one.
        let (n, p) = if cc >= ss { (cc, ac) } else { (ss, as_) };
        if n > 0.0 {
            p * p / n
        } else {
            0.0
        }
    };
    (proj / aa).clamp(0.0, 1.0)
}

fn speeds(signed: bool) -> Vec<f64> {
    let n = (MAX_SPEED / SPEED_STEP).round() as i64;
    let lo = if signed { -n } else { 0 };
    (lo..=n).map(|i| i as f64 * SPEED_STEP).collect()
}

fn direction(i: usize) -> f64 {
    i as f64 * TAU / DIRECTIONS as f64
}

/// Best `(response, direction index, speed)` at one wavelength.
/// Ties prefer the smaller speed, then the lower direction.
fn best_at(atom: &[f64], wavelength: f64) -> (f64, usize, f64) {
    let mut best = (f64::NEG_INFINITY, 0, 0.0);
    for v in speeds(false) {
        for d in 0..DIRECTIONS {
            let r = grating_response(atom, direction(d), wavelength, v);
            if r > best.0 + TIE_EPS {
                best = (r, d, v);
            }
        }
    }
    best
}

/// Index of the maximum; ties prefer the smallest `|x|`, then positive `x`.
fn peak(curve: &[(f64, f64)]) -> f64 {
    let mut best = curve[0];
    for &(x, r) in &curve[1..] {
        let better = r > best.1 + TIE_EPS
            || ((r - best.1).abs() <= TIE_EPS
                && (x.abs() < best.0.abs() || (x.abs() == best.0.abs() && x > best.0)));
        if better {
            best = (x, r);
        }
    }
    best.0
}

/// Tuning curves of an atom, or `None` for a degenerate atom.
pub fn tuning_curves(atom: ArrayView1<f64>) -> Option<TuningCurve> {
    assert_eq!(atom.len(), PATCH_DIM, "atom must have {PATCH_DIM} entries");
    let a: Vec<f64> = atom.iter().copied().collect();
    let norm = dot(&a, &a).sqrt();
    if !(norm >= ZERO_NORM_EPS) || !norm.is_finite() {
        return None;
    }

    let mut best = (f64::NEG_INFINITY, 0, 0.0, 0.0);
    let mut best_idx = 0;
    for (i, &l) in COARSE_WAVELENGTHS.iter().enumerate() {
        let (r, d, v) = best_at(&a, l);
        if r > best.0 + TIE_EPS {
            best = (r, d, v, l);
            best_idx = i;
        }
    }
    let lo = COARSE_WAVELENGTHS[best_idx.saturating_sub(1)];
    let hi = COARSE_WAVELENGTHS[(best_idx + 1).min(COARSE_WAVELENGTHS.len() - 1)];
    for s in 0..=REFINE_STEPS {
        let l = lo + (hi - lo) * s as f64 / REFINE_STEPS as f64;
        let (r, d, v) = best_at(&a, l);
        if r > best.0 + TIE_EPS {
            best = (r, d, v, l);
        }
    }
    let (_, d_opt, v_opt, l_opt) = best;
    let alpha = direction(d_opt);

    let direction_curve: Vec<(f64, f64)> = (0..DIRECTIONS)
        .map(|d| (direction(d).to_degrees(), grating_response(&a, direction(d), l_opt, v_opt)))
        .collect();
    let velocity_curve: Vec<(f64, f64)> = speeds(true)
        .into_iter()
        .map(|v| (v, grating_response(&a, alpha, l_opt, v)))
        .collect();
    let mut direction_peak = direction_curve[0];
    for &p in &direction_curve[1..] {
        if p.1 > direction_peak.1 + TIE_EPS {
            direction_peak = p;
        }
    }
    Some(TuningCurve {
        wavelength: l_opt,
        direction_deg: alpha.to_degrees(),
        speed: v_opt,
        velocity_peak: peak(&velocity_curve),
        direction_peak_deg: direction_peak.0,
        direction_curve,
        velocity_curve,
    })
}

/// Angular distance in degrees between two directions.
pub fn angle_diff_deg(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    d.min(360.0 - d)
}

/// The atom a drifting grating produces, windowed by a Gaussian, unit norm.
pub fn drifting_grating_atom(direction: f64, wavelength: f64, speed: f64, sigma: f64) -> Vec<f64> {
    let (cg, _) = grating_pair(direction, wavelength, speed);
    let centre = (PATCH_PX as f64 - 1.0) / 2.0;
    let mut v: Vec<f64> = cg
        .iter()
        .enumerate()
        .map(|(i, g)| {
            let pix = i % (PATCH_PX * PATCH_PX);
            let (r, c) = ((pix / PATCH_PX) as f64 - centre, (pix % PATCH_PX) as f64 - centre);
            g * (-(r * r + c * c) / (2.0 * sigma * sigma)).exp()
        })
        .collect();
    v = mean_removed(v);
    let n = dot(&v, &v).sqrt();
    v.iter_mut().for_each(|x| *x /= n);
    v
}
