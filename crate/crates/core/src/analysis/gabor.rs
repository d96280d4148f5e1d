//! Two-frame spatial Gabor model of an atom and its least-squares fit.
//!
//! Both halves of an atom share centre, orientation, wavelength, envelope and
//! amplitude; only the carrier phase differs:
//!
//! ```text
//! u = (x−x0)cosθ + (y−y0)sinθ        w = −(x−x0)sinθ + (y−y0)cosθ
//! g_h(x, y) = A·exp(−u²/2σu² − w²/2σw²)·cos(2πu/λ − φ_h)
//! ```
//!
//! `x` is the column and `y` the row inside the 10×10 patch. Content that
//! moves by `v` pixels along `(cosθ, sinθ)` between frames advances the phase
//! by `2πv/λ`, so the preferred velocity is `Δφ·λ/(2π)`.

use std::f64::consts::{PI, TAU};

use nalgebra::{SMatrix, SVector};
use ndarray::ArrayView1;

use crate::sparsecode::{PATCH_DIM, PATCH_PX, ZERO_NORM_EPS};

const N_PARAMS: usize = 9;
const LAMBDA_RANGE: (f64, f64) = (2.0, 40.0);
const SIGMA_RANGE: (f64, f64) = (0.5, 20.0);
const CENTER_RANGE: (f64, f64) = (-3.0, PATCH_PX as f64 + 2.0);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaborParams {
    pub x0: f64,
    pub y0: f64,
    /// Direction of the wave vector in radians, canonicalized to `[0, π)`.
    pub orientation: f64,
    pub wavelength: f64,
    /// Envelope width along the wave vector.
    pub sigma_u: f64,
    /// Envelope width along the stripes.
    pub sigma_w: f64,
    pub phase_prev: f64,
    pub phase_curr: f64,
    pub amplitude: f64,
}

impl GaborParams {
    fn from_array(p: [f64; N_PARAMS]) -> Self {
        GaborParams {
            x0: p[0],
            y0: p[1],
            orientation: p[2],
            wavelength: p[3],
            sigma_u: p[4],
            sigma_w: p[5],
            phase_prev: p[6],
            phase_curr: p[7],
            amplitude: p[8],
        }
    }

    /// Same function with `A > 0`, `θ ∈ [0, π)` and phases in `(−π, π]`.
    pub fn canonical(self) -> Self {
        let mut g = self;
        if g.amplitude < 0.0 {
            g.amplitude = -g.amplitude;
            g.phase_prev += PI;
            g.phase_curr += PI;
        }
        let turns = (g.orientation / PI).floor();
        g.orientation -= turns * PI;
        if g.orientation >= PI {
            g.orientation -= PI;
        }
        if (turns as i64).rem_euclid(2) == 1 {
            // θ + π flips u, which negates the phases.
            g.phase_prev = -g.phase_prev;
            g.phase_curr = -g.phase_curr;
        }
        g.phase_prev = wrap_phase(g.phase_prev);
        g.phase_curr = wrap_phase(g.phase_curr);
        g
    }

    /// Phase advance from the previous to the current frame, in `(−π, π]`.
    pub fn phase_shift(&self) -> f64 {
        wrap_phase(self.phase_curr - self.phase_prev)
    }

    /// Render as a 200-vector, previous half first.
    pub fn render(&self) -> Vec<f64> {
        let mut out = vec![0.0; PATCH_DIM];
        let (s, c) = self.orientation.sin_cos();
        let k = TAU / self.wavelength;
        for h in 0..2 {
            let phase = if h == 0 { self.phase_prev } else { self.phase_curr };
            for row in 0..PATCH_PX {
                for col in 0..PATCH_PX {
                    let dx = col as f64 - self.x0;
                    let dy = row as f64 - self.y0;
                    let u = dx * c + dy * s;
                    let w = -dx * s + dy * c;
                    let env = (-u * u / (2.0 * self.sigma_u.powi(2)) - w * w / (2.0 * self.sigma_w.powi(2))).exp();
                    out[h * PATCH_PX * PATCH_PX + row * PATCH_PX + col] =
                        self.amplitude * env * (k * u - phase).cos();
                }
            }
        }
        out
    }
}

/// Wrap an angle to `(−π, π]`.
pub fn wrap_phase(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GaborFit {
    Fit {
        params: GaborParams,
        /// `‖atom − model‖² / ‖atom‖²`.
        error: f64,
    },
    /// The atom had (near) zero norm.
    Unfit,
}

impl GaborFit {
    pub fn params(&self) -> Option<&GaborParams> {
        match self {
            GaborFit::Fit { params, .. } => Some(params),
            GaborFit::Unfit => None,
        }
    }

    pub fn error(&self) -> Option<f64> {
        match self {
            GaborFit::Fit { error, .. } => Some(*error),
            GaborFit::Unfit => None,
        }
    }

    pub fn is_fit(&self) -> bool {
        matches!(self, GaborFit::Fit { .. })
    }
}

/// Signed speed in px/frame along the fit's wave vector.
pub fn preferred_velocity(params: &GaborParams) -> f64 {
    params.phase_shift() * params.wavelength / TAU
}

/// Model values and Jacobian rows for every pixel of both halves.
fn evaluate(p: &[f64; N_PARAMS], jac: Option<&mut Vec<[f64; N_PARAMS]>>) -> Vec<f64> {
    let [x0, y0, theta, lambda, su, sw, phi_p, phi_c, amp] = *p;
    let (s, c) = theta.sin_cos();
    let k = TAU / lambda;
    let mut out = vec![0.0; PATCH_DIM];
    let mut rows = jac;
    if let Some(j) = rows.as_deref_mut() {
        j.clear();
        j.resize(PATCH_DIM, [0.0; N_PARAMS]);
    }
    for h in 0..2 {
        let phi = if h == 0 { phi_p } else { phi_c };
        for row in 0..PATCH_PX {
            for col in 0..PATCH_PX {
                let idx = h * PATCH_PX * PATCH_PX + row * PATCH_PX + col;
                let dx = col as f64 - x0;
                let dy = row as f64 - y0;
                let u = dx * c + dy * s;
                let w = -dx * s + dy * c;
                let env = (-u * u / (2.0 * su * su) - w * w / (2.0 * sw * sw)).exp();
                let arg = k * u - phi;
                let (sa, ca) = arg.sin_cos();
                let g = amp * env * ca;
                out[idx] = g;
                if let Some(j) = rows.as_deref_mut() {
                    let ae = amp * env;
                    let dg_du = ae * (-u / (su * su) * ca - k * sa);
                    let dg_dw = ae * (-w / (sw * sw) * ca);
                    let r = &mut j[idx];
                    r[0] = dg_du * -c + dg_dw * s;
                    r[1] = dg_du * -s + dg_dw * -c;
                    r[2] = dg_du * w + dg_dw * -u;
                    r[3] = ae * sa * TAU * u / (lambda * lambda);
                    r[4] = g * u * u / (su * su * su);
                    r[5] = g * w * w / (sw * sw * sw);
                    r[6] = if h == 0 { ae * sa } else { 0.0 };
                    r[7] = if h == 1 { ae * sa } else { 0.0 };
                    r[8] = env * ca;
                }
            }
        }
    }
    out
}

fn sq_residual(atom: &[f64], model: &[f64]) -> f64 {
    atom.iter().zip(model).map(|(a, m)| (a - m).powi(2)).sum()
}

/// Least-squares amplitude for fixed shape; returns `(amplitude, residual)`.
fn best_amplitude(atom: &[f64], mut p: [f64; N_PARAMS]) -> ([f64; N_PARAMS], f64) {
    p[8] = 1.0;
    let unit = evaluate(&p, None);
    let gg: f64 = unit.iter().map(|v| v * v).sum();
    let ag: f64 = unit.iter().zip(atom).map(|(u, a)| u * a).sum();
    p[8] = if gg > 0.0 { ag / gg } else { 0.0 };
    let aa: f64 = atom.iter().map(|v| v * v).sum();
    (p, aa - if gg > 0.0 { ag * ag / gg } else { 0.0 })
}

fn clamp_params(p: &mut [f64; N_PARAMS]) {
    p[0] = p[0].clamp(CENTER_RANGE.0, CENTER_RANGE.1);
    p[1] = p[1].clamp(CENTER_RANGE.0, CENTER_RANGE.1);
    p[3] = p[3].clamp(LAMBDA_RANGE.0, LAMBDA_RANGE.1);
    p[4] = p[4].clamp(SIGMA_RANGE.0, SIGMA_RANGE.1);
    p[5] = p[5].clamp(SIGMA_RANGE.0, SIGMA_RANGE.1);
}

/// Solve the symmetric positive definite system `a·x = b`.
fn cholesky_solve(a: &[[f64; N_PARAMS]; N_PARAMS], b: &[f64; N_PARAMS]) -> Option<[f64; N_PARAMS]> {
    let m = SMatrix::<f64, N_PARAMS, N_PARAMS>::from_fn(|i, j| a[i][j]);
    let x = m.cholesky()?.solve(&SVector::<f64, N_PARAMS>::from_column_slice(b));
    Some(x.into())
}

/// Levenberg–Marquardt refinement; returns the parameters and squared residual.
fn refine(atom: &[f64], start: [f64; N_PARAMS], max_iter: usize) -> ([f64; N_PARAMS], f64) {
    let mut p = start;
    let mut jac = Vec::with_capacity(PATCH_DIM);
    let mut model = evaluate(&p, Some(&mut jac));
    let mut cost = sq_residual(atom, &model);
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        let mut jtj = [[0.0; N_PARAMS]; N_PARAMS];
        let mut jtr = [0.0; N_PARAMS];
        for (i, row) in jac.iter().enumerate() {
            let r = atom[i] - model[i];
            for a in 0..N_PARAMS {
                jtr[a] += row[a] * r;
                for b in 0..=a {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        for a in 0..N_PARAMS {
            for b in 0..a {
                jtj[b][a] = jtj[a][b];
            }
        }
        let mut improved = false;
        while mu < 1e10 {
            let mut damped = jtj;
            for (a, row) in damped.iter_mut().enumerate() {
                row[a] += mu * (jtj[a][a] + 1e-12);
            }
            let Some(step) = cholesky_solve(&damped, &jtr) else {
                mu *= 10.0;
                continue;
            };
            let mut trial = p;
            for a in 0..N_PARAMS {
                trial[a] += step[a];
            }
            clamp_params(&mut trial);
            let trial_model = evaluate(&trial, None);
            let trial_cost = sq_residual(atom, &trial_model);
            if trial_cost < cost {
                let gain = cost - trial_cost;
                p = trial;
                cost = trial_cost;
                model = evaluate(&p, Some(&mut jac));
                mu = (mu * 0.3).max(1e-12);
                improved = true;
                if gain <= 1e-14 * cost.max(1e-300) + 1e-18 {
                    return (p, cost);
                }
                break;
            }
            mu *= 10.0;
        }
        if !improved {
            break;
        }
    }
    (p, cost)
}

/// Orientation × wavelength × phase grid of starting points.
pub const START_ORIENTATIONS: usize = 8;
pub const START_WAVELENGTHS: [f64; 4] = [3.0, 5.0, 8.0, 14.0];
pub const START_PHASES: usize = 4;
/// Number of best starts that are refined.
const REFINED_STARTS: usize = 3;
const MAX_ITER: usize = 200;

/// Fit the two-frame Gabor model to a 200-dimensional atom.
pub fn fit_gabor(atom: ArrayView1<f64>) -> GaborFit {
    assert_eq!(atom.len(), PATCH_DIM, "atom must have {PATCH_DIM} entries");
    let a: Vec<f64> = atom.iter().copied().collect();
    let energy: f64 = a.iter().map(|v| v * v).sum();
    if !(energy.sqrt() >= ZERO_NORM_EPS) || !energy.is_finite() {
        return GaborFit::Unfit;
    }

    // Centre the starts on the atom's energy centroid.
    let (mut cx, mut cy) = (0.0, 0.0);
    for (i, v) in a.iter().enumerate() {
        let pix = i % (PATCH_PX * PATCH_PX);
        cx += v * v * (pix % PATCH_PX) as f64;
        cy += v * v * (pix / PATCH_PX) as f64;
    }
    cx /= energy;
    cy /= energy;

    let mut starts = Vec::with_capacity(START_ORIENTATIONS * START_WAVELENGTHS.len() * START_PHASES);
    for o in 0..START_ORIENTATIONS {
        let theta = o as f64 * PI / START_ORIENTATIONS as f64;
        for &lambda in &START_WAVELENGTHS {
            for ph in 0..START_PHASES {
                let phi = ph as f64 * TAU / START_PHASES as f64;
                let p = [cx, cy, theta, lambda, 2.5, 2.5, phi, phi, 1.0];
                starts.push(best_amplitude(&a, p));
            }
        }
    }
    starts.sort_by(|x, y| x.1.total_cmp(&y.1));

    let mut best: Option<([f64; N_PARAMS], f64)> = None;
    for &(p, _) in starts.iter().take(REFINED_STARTS) {
        let r = refine(&a, p, MAX_ITER);
        if best.is_none_or(|b| r.1 < b.1) {
            best = Some(r);
        }
    }
    let (p, cost) = best.expect("at least one start");
    GaborFit::Fit {
        params: GaborParams::from_array(p).canonical(),
        error: (cost / energy).max(0.0),
    }
}
