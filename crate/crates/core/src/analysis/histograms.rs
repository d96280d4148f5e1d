//! Histograms of preferred orientation and velocity over well-fit atoms.

use std::f64::consts::PI;

use super::gabor::{preferred_velocity, GaborFit};

pub const DEFAULT_THRESHOLD: f64 = 0.3;
pub const ORIENTATION_BINS: usize = 12;
pub const VELOCITY_BIN_WIDTH: f64 = 0.5;
/// Velocity bins are centred on `-4, -3.5, …, 4` px/frame.
pub const VELOCITY_BINS: usize = 17;
const VELOCITY_MIN_CENTRE: f64 = -4.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PreferenceHistograms {
    pub threshold: f64,
    /// Atoms with fit error below the threshold.
    pub qualifying: usize,
    /// Counts over wave orientation in `[0°, 180°)`, 15° bins.
    pub orientation: Vec<usize>,
    /// Counts over preferred velocity, bins of width 0.5 centred on −4…4.
    pub velocity: Vec<usize>,
    /// Qualifying atoms whose velocity falls outside the velocity bins.
    pub velocity_out_of_range: usize,
    /// Preferred velocities of every qualifying atom.
    pub velocities: Vec<f64>,
}

impl PreferenceHistograms {
    pub fn is_empty(&self) -> bool {
        self.qualifying == 0
    }

    /// Fraction of qualifying atoms with `|v| < 1` px/frame; 0 with none.
    pub fn slow_fraction(&self) -> f64 {
        if self.velocities.is_empty() {
            return 0.0;
        }
        self.velocities.iter().filter(|v| v.abs() < 1.0).count() as f64 / self.velocities.len() as f64
    }

    /// Largest share of qualifying atoms in a single orientation bin.
    pub fn max_orientation_share(&self) -> f64 {
        if self.qualifying == 0 {
            return 0.0;
        }
        *self.orientation.iter().max().unwrap_or(&0) as f64 / self.qualifying as f64
    }

    pub fn velocity_bin_centre(i: usize) -> f64 {
        VELOCITY_MIN_CENTRE + i as f64 * VELOCITY_BIN_WIDTH
    }

    pub fn orientation_bin_start_deg(i: usize) -> f64 {
        i as f64 * 180.0 / ORIENTATION_BINS as f64
    }

    /// Index of the most populated velocity bin (lowest index on ties).
    pub fn velocity_mode_bin(&self) -> Option<usize> {
        if self.qualifying == 0 {
            return None;
        }
        let max = *self.velocity.iter().max()?;
        self.velocity.iter().position(|&c| c == max)
    }

    pub fn orientation_csv(&self) -> String {
        let mut s = String::from("orientation_start_deg,orientation_end_deg,count\n");
        let w = 180.0 / ORIENTATION_BINS as f64;
        for (i, c) in self.orientation.iter().enumerate() {
            let a = Self::orientation_bin_start_deg(i);
            s.push_str(&format!("{},{},{}\n", a, a + w, c));
        }
        s
    }

    pub fn velocity_csv(&self) -> String {
        let mut s = String::from("velocity_centre,count\n");
        for (i, c) in self.velocity.iter().enumerate() {
            s.push_str(&format!("{},{}\n", Self::velocity_bin_centre(i), c));
        }
        s
    }
}

/// Bin atoms whose fit error is below `threshold`.
pub fn preference_histograms(fits: &[GaborFit], threshold: f64) -> PreferenceHistograms {
    let mut h = PreferenceHistograms {
        threshold,
        qualifying: 0,
        orientation: vec![0; ORIENTATION_BINS],
        velocity: vec![0; VELOCITY_BINS],
        velocity_out_of_range: 0,
        velocities: Vec::new(),
    };
    for fit in fits {
        let GaborFit::Fit { params, error } = fit else {
            continue;
        };
        if !(*error < threshold) {
            continue;
        }
        h.qualifying += 1;
        let o = ((params.orientation.rem_euclid(PI) / PI) * ORIENTATION_BINS as f64).floor() as usize;
        h.orientation[o.min(ORIENTATION_BINS - 1)] += 1;
        let v = preferred_velocity(params);
        h.velocities.push(v);
        let b = ((v - VELOCITY_MIN_CENTRE) / VELOCITY_BIN_WIDTH + 0.5).floor();
        if b >= 0.0 && (b as usize) < VELOCITY_BINS {
            h.velocity[b as usize] += 1;
        } else {
            h.velocity_out_of_range += 1;
        }
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::analysis::gabor::GaborParams;

    fn fit(orientation_deg: f64, wavelength: f64, dphi: f64, error: f64) -> GaborFit {
        GaborFit::Fit {
            params: GaborParams {
                x0: 4.5,
                y0: 4.5,
                orientation: orientation_deg.to_radians(),
                wavelength,
                sigma_u: 2.0,
                sigma_w: 2.0,
                phase_prev: 0.0,
                phase_curr: dphi,
                amplitude: 1.0,
            },
            error,
        }
    }

    #[test]
    fn exact_counts() {
        let fits = [
            fit(10.0, 4.0, 0.0, 0.1),          // orientation bin 0, v = 0
            fit(100.0, 4.0, PI / 2.0, 0.05),   // bin 6, v = 1
            fit(179.0, 8.0, -PI / 2.0, 0.2),   // bin 11, v = -2
            fit(50.0, 8.0, 0.0, 0.5),          // rejected
            GaborFit::Unfit,
        ];
        let h = preference_histograms(&fits, DEFAULT_THRESHOLD);
        assert_eq!(h.qualifying, 3);
        let mut o = vec![0; 12];
        o[0] = 1;
        o[6] = 1;
        o[11] = 1;
        assert_eq!(h.orientation, o);
        let mut v = vec![0; 17];
        v[8] = 1;
        v[10] = 1;
        v[4] = 1;
        assert_eq!(h.velocity, v);
        assert!((h.slow_fraction() - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn all_above_threshold_is_empty() {
        let h = preference_histograms(&[fit(10.0, 4.0, 0.0, 0.9)], DEFAULT_THRESHOLD);
        assert!(h.is_empty());
        assert_eq!(h.orientation.iter().sum::<usize>(), 0);
        assert_eq!(h.velocity.iter().sum::<usize>(), 0);
        assert_eq!(h.slow_fraction(), 0.0);
    }
}
