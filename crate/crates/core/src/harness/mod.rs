//! Leave-one-out evaluation, psychometric fits and the information-loss report.

pub mod config;
mod eval;
pub mod psychometric;
mod report;

pub use config::{Config, CONFIG_ENV};
pub use eval::{leave_one_out_eval, ConditionCounts, EvalSpec};
pub use psychometric::{fit_psychometric, srt, srt_gap, PsychPoint, PsychometricFit};
pub use report::{
    above_chance, bounds_at, bounds_model, build_report, human_rows, pc_lower_limit,
    plugin_mi_allowance, SweepReport, SweepRow, CSV_HEADER, HUMAN,
};
