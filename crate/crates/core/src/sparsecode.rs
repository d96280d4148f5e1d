//! Spatio-temporal patch coding with matching pursuit over a shared,
//! online-learned dictionary of unit-norm atoms.
//!
//! A patch vector stacks a 10×10 block of the previous frame followed by the
//! co-located block of the current frame (200 values, row-major within each
//! half). Each frame half has its mean removed before coding.

use ndarray::{s, Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::imagery::{FramePair, FOVEA_PX};

pub const PATCH_PX: usize = 10;
pub const PATCH_DIM: usize = 2 * PATCH_PX * PATCH_PX;

/// Patches with a smaller pre-coding norm are left uncoded and excluded
/// from the error average.
pub const ZERO_NORM_EPS: f64 = 1e-8;

/// Allowed deviation of an atom norm from 1.
pub const UNIT_NORM_TOL: f64 = 1e-6;

/// Pursuit stops once the residual norm falls below this fraction of the
/// input norm, so rounding noise is never coded.
pub const RESIDUAL_FLOOR: f64 = 1e-12;

/// Layout of patches inside the fovea: `count × count` patches whose
/// top-left corners lie `stride` pixels apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PatchGrid {
    pub count: usize,
    pub stride: usize,
}

impl Default for PatchGrid {
    fn default() -> Self {
        PatchGrid {
            count: 10,
            stride: 5,
        }
    }
}

impl PatchGrid {
    pub fn patches(&self) -> usize {
        self.count * self.count
    }

    pub fn validate(&self) -> Result<()> {
        if self.count == 0 || self.stride == 0 {
            return Err(Error::config("sparse.grid", "patch count and stride must be positive"));
        }
        if (self.count - 1) * self.stride + PATCH_PX > FOVEA_PX {
            return Err(Error::config(
                "sparse.grid",
                format!(
                    "{} patches at stride {} do not fit a {FOVEA_PX}px fovea",
                    self.count, self.stride
                ),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PatchBatch {
    /// One patch per row, `P × 200`.
    pub vectors: Array2<f64>,
    /// Euclidean norm of each row.
    pub norms: Vec<f64>,
}

impl PatchBatch {
    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn is_coded(&self, i: usize) -> bool {
        self.norms[i] >= ZERO_NORM_EPS
    }
}

/// Cut the frame pair into overlapping two-frame patches, row-major over the grid.
pub fn extract_patches(frames: &FramePair, grid: PatchGrid) -> PatchBatch {
    let half = PATCH_PX * PATCH_PX;
    let mut vectors = Array2::<f64>::zeros((grid.patches(), PATCH_DIM));
    let mut norms = Vec::with_capacity(grid.patches());
    for (i, mut row) in vectors.axis_iter_mut(Axis(0)).enumerate() {
        let top = (i / grid.count) * grid.stride;
        let left = (i % grid.count) * grid.stride;
        for (h, frame) in [&frames.previous, &frames.current].into_iter().enumerate() {
            let mut part = row.slice_mut(s![h * half..(h + 1) * half]);
            for r in 0..PATCH_PX {
                for c in 0..PATCH_PX {
                    part[r * PATCH_PX + c] = frame.at(top + r, left + c);
                }
            }
            let mean = part.sum() / half as f64;
            part.mapv_inplace(|v| v - mean);
        }
        norms.push(row.dot(&row).sqrt());
    }
    PatchBatch { vectors, norms }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    atoms: Array2<f64>,
    generation: u64,
}

impl Dictionary {
    /// Isotropic Gaussian atoms, normalized.
    pub fn random<R: Rng + ?Sized>(size: usize, dim: usize, rng: &mut R) -> Dictionary {
        let mut atoms = Array2::<f64>::zeros((size, dim));
        for v in atoms.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        for mut row in atoms.axis_iter_mut(Axis(0)) {
            let n = row.dot(&row).sqrt();
            row /= n;
        }
        Dictionary {
            atoms,
            generation: 0,
        }
    }

    /// Wrap existing atoms, which must already be unit norm.
    pub fn from_atoms(atoms: Array2<f64>, generation: u64) -> Result<Dictionary> {
        let d = Dictionary { atoms, generation };
        d.check_unit_norm()?;
        Ok(d)
    }

    pub fn len(&self) -> usize {
        self.atoms.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.atoms.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.atoms.ncols()
    }

    pub fn generation(&self) -> u64 {
        self.generation
    }

    pub fn atoms(&self) -> &Array2<f64> {
        &self.atoms
    }

    pub fn atom(&self, n: usize) -> ArrayView1<'_, f64> {
        self.atoms.row(n)
    }

    pub fn check_unit_norm(&self) -> Result<()> {
        for (n, row) in self.atoms.axis_iter(Axis(0)).enumerate() {
            let norm = row.dot(&row).sqrt();
            if !((norm - 1.0).abs() <= UNIT_NORM_TOL) {
                return Err(Error::Contract(format!("atom {n} has norm {norm}, expected 1")));
            }
        }
        Ok(())
    }
}

/// `(atom index, coefficient)` pairs with distinct indices, in first-selection order.
pub type PatchCode = Vec<(usize, f64)>;

#[derive(Debug, Clone, PartialEq)]
pub struct SparseCode {
    pub patches: Vec<PatchCode>,
}

impl SparseCode {
    pub fn empty(patches: usize) -> Self {
        SparseCode {
            patches: vec![Vec::new(); patches],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MpParams {
    /// Maximum number of distinct nonzero coefficients per patch.
    pub kmax: usize,
    /// Stop once `‖residual‖ ≤ tol·‖x‖`.
    pub tol: f64,
}

impl Default for MpParams {
    fn default() -> Self {
        MpParams { kmax: 10, tol: 0.0 }
    }
}

impl MpParams {
    /// Hard cap on pursuit iterations; re-selecting an atom does not add a nonzero.
    pub fn max_iterations(&self) -> usize {
        4 * self.kmax
    }
}

/// Index of the largest |value|, lowest index on ties.
#[inline]
fn argmax_abs(values: &[f64]) -> (usize, f64) {
    let mut best = 0;
    let mut best_abs = f64::NEG_INFINITY;
    for (n, v) in values.iter().enumerate() {
        let a = v.abs();
        if a > best_abs {
            best_abs = a;
            best = n;
        }
    }
    (best, best_abs)
}

fn accumulate(code: &mut PatchCode, index: usize, coef: f64) {
    match code.iter_mut().find(|(n, _)| *n == index) {
        Some(entry) => entry.1 += coef,
        None => code.push((index, coef)),
    }
}

/// Plain matching pursuit of one vector.
///
/// Every iteration correlates the current residual with all atoms, picks the
/// largest |correlation| and subtracts that projection.
pub fn matching_pursuit(x: ArrayView1<f64>, dict: &Dictionary, params: MpParams) -> Result<PatchCode> {
    dict.check_unit_norm()?;
    if x.len() != dict.dim() {
        return Err(Error::Argument(format!(
            "vector has dimension {}, dictionary atoms have {}",
            x.len(),
            dict.dim()
        )));
    }
    let mut code = PatchCode::new();
    let x_norm = x.dot(&x).sqrt();
    if x_norm == 0.0 || dict.is_empty() {
        return Ok(code);
    }
    let mut residual = x.to_owned();
    for _ in 0..params.max_iterations() {
        if code.len() >= params.kmax || residual.dot(&residual).sqrt() <= params.tol.max(RESIDUAL_FLOOR) * x_norm {
            break;
        }
        let corr = dict.atoms.dot(&residual);
        let (n, best) = argmax_abs(corr.as_slice().expect("contiguous"));
        if best == 0.0 {
            break;
        }
        let c = corr[n];
        residual.scaled_add(-c, &dict.atom(n));
        accumulate(&mut code, n, c);
    }
    Ok(code)
}

/// Result of coding a whole batch.
#[derive(Debug, Clone)]
pub struct Encoding {
    pub codes: SparseCode,
    /// `x_i - x̂_i`, one row per patch.
    pub residuals: Array2<f64>,
    /// Largest relative violation of `‖r_before‖² = ‖r_after‖² + c²` over all steps.
    pub max_energy_violation: f64,
}

impl Encoding {
    /// Average normalized squared reconstruction error over coded patches.
    pub fn reconstruction_error(&self, batch: &PatchBatch) -> f64 {
        let mut sum = 0.0;
        let mut count = 0usize;
        for (i, r) in self.residuals.axis_iter(Axis(0)).enumerate() {
            if batch.is_coded(i) {
                sum += r.dot(&r) / (batch.norms[i] * batch.norms[i]);
                count += 1;
            }
        }
        if count == 0 {
            0.0
        } else {
            sum / count as f64
        }
    }
}

/// Batch encoder bound to one dictionary snapshot.
///
/// Correlations are updated through the atom Gram matrix instead of being
/// recomputed from the residual, which is what makes per-frame coding of 100
/// patches against 300 atoms cheap. Coefficients are still taken as exact
/// inner products with the explicit residual.
pub struct Encoder<'a> {
    dict: &'a Dictionary,
    gram: Array2<f64>,
}

impl<'a> Encoder<'a> {
    pub fn new(dict: &'a Dictionary) -> Result<Self> {
        dict.check_unit_norm()?;
        let gram = dict.atoms.dot(&dict.atoms.t());
        Ok(Encoder { dict, gram })
    }

    pub fn encode(&self, batch: &PatchBatch, params: MpParams) -> Encoding {
        let p = batch.len();
        let n_atoms = self.dict.len();
        let mut codes = SparseCode::empty(p);
        let mut residuals = batch.vectors.clone();
        let mut max_violation = 0.0f64;
        if n_atoms == 0 {
            return Encoding {
                codes,
                residuals,
                max_energy_violation: 0.0,
            };
        }
        let initial = batch.vectors.dot(&self.dict.atoms.t());
        let mut corr = Array1::<f64>::zeros(n_atoms);

        for i in 0..p {
            if !batch.is_coded(i) {
                continue;
            }
            corr.assign(&initial.row(i));
            let mut residual = residuals.row_mut(i);
            let code = &mut codes.patches[i];
            let stop_norm = params.tol.max(RESIDUAL_FLOOR) * batch.norms[i];
            let mut energy = residual.dot(&residual);
            for _ in 0..params.max_iterations() {
                if code.len() >= params.kmax || energy.sqrt() <= stop_norm {
                    break;
                }
                let (n, best) = argmax_abs(corr.as_slice().expect("contiguous"));
                if best == 0.0 {
                    break;
                }
                let atom = self.dict.atom(n);
                let c = residual.dot(&atom);
                residual.scaled_add(-c, &atom);
                corr.scaled_add(-c, &self.gram.row(n));
                let after = residual.dot(&residual);
                if energy > 0.0 {
                    max_violation = max_violation.max((energy - after - c * c).abs() / energy);
                }
                energy = after;
                accumulate(code, n, c);
            }
        }
        Encoding {
            codes,
            residuals,
            max_energy_violation: max_violation,
        }
    }
}

/// Convenience wrapper: build an encoder for `dict` and code `batch`.
pub fn encode_batch(batch: &PatchBatch, dict: &Dictionary, params: MpParams) -> Result<Encoding> {
    Ok(Encoder::new(dict)?.encode(batch, params))
}

fn residuals_of(batch: &PatchBatch, codes: &SparseCode, dict: &Dictionary) -> Array2<f64> {
    let mut residuals = batch.vectors.clone();
    for (i, code) in codes.patches.iter().enumerate() {
        let mut r = residuals.row_mut(i);
        for &(n, a) in code {
            r.scaled_add(-a, &dict.atom(n));
        }
    }
    residuals
}

/// Average over coded patches of `‖x_i - Σ a_in φ_n‖² / ‖x_i‖²`.
pub fn reconstruction_error(batch: &PatchBatch, codes: &SparseCode, dict: &Dictionary) -> f64 {
    let residuals = residuals_of(batch, codes, dict);
    Encoding {
        codes: codes.clone(),
        residuals,
        max_energy_violation: 0.0,
    }
    .reconstruction_error(batch)
}

/// One gradient step on the summed squared residual with coefficients fixed,
/// pooled over patches, followed by renormalization of the touched atoms.
pub fn update_dictionary(dict: &Dictionary, batch: &PatchBatch, codes: &SparseCode, lr: f64) -> Dictionary {
    let residuals = residuals_of(batch, codes, dict);
    let mut next = dict.clone();
    next.apply_update(codes, &residuals, lr);
    next
}

impl Dictionary {
    /// In-place form of [`update_dictionary`] given precomputed residuals.
    pub fn apply_update(&mut self, codes: &SparseCode, residuals: &Array2<f64>, lr: f64) {
        let p = codes.patches.len();
        self.generation += 1;
        if p == 0 || lr == 0.0 {
            return;
        }
        let scale = lr / p as f64;
        let mut touched = vec![false; self.len()];
        for (i, code) in codes.patches.iter().enumerate() {
            let r = residuals.row(i);
            for &(n, a) in code {
                self.atoms.row_mut(n).scaled_add(scale * a, &r);
                touched[n] = true;
            }
        }
        for (n, t) in touched.into_iter().enumerate() {
            if t {
                let mut row = self.atoms.row_mut(n);
                let norm = row.dot(&row).sqrt();
                if norm > 0.0 {
                    row /= norm;
                }
            }
        }
    }
}

/// Learning-rate schedule `lr0 / (1 + t/τ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LrSchedule {
    pub initial: f64,
    pub decay_frames: f64,
}

impl Default for LrSchedule {
    fn default() -> Self {
        LrSchedule {
            initial: 0.05,
            decay_frames: 1e5,
        }
    }
}

impl LrSchedule {
    pub fn at(&self, frame: u64) -> f64 {
        self.initial / (1.0 + frame as f64 / self.decay_frames)
    }
}
