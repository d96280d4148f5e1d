//! Evaluation of trained models: policy accuracy on a slip grid, Gabor
//! fits, velocity and orientation preferences, and tuning curves.

pub mod gabor;
pub mod histograms;
pub mod report;
pub mod slip_grid;
pub mod tuning;

pub use gabor::{fit_gabor, preferred_velocity, wrap_phase, GaborFit, GaborParams};
pub use histograms::{preference_histograms, PreferenceHistograms, DEFAULT_THRESHOLD};
pub use report::{
    curve_csv, eval_checkpoints, fit_dictionary, fit_table_csv, median_fit_error, mse_training_curve, render_atoms,
    CurvePoint, EvalSettings,
};
pub use slip_grid::{
    eval_slip_grid, magnitude_bucket, mean_std, translated_pair, zero_action_mse, ConditionResult, Controller,
    IdealController, LearnedController, MagnitudeBucket, SlipGridOptions, SlipGridResult,
};
pub use tuning::{tuning_curves, TuningCurve};
