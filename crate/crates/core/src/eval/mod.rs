//! Accuracy and timing evaluation: per-axis RMSE, synthetic ground-truth
//! scenes, single-pair registration runs and benchmark tables.

mod bench;
mod rmse;
mod run;
mod synth;

pub use bench::{
    csv_fields, render_match_overlay, run_benchmark, summary_row, write_match_overlay, write_report_csv,
    write_report_json, BenchmarkCell, BenchmarkSuite, DatasetSpec, REPORT_COLUMNS,
};
pub use rmse::{rmse_xy, ControlPointSet};
pub use run::{
    detect_and_match, detect_features, run_registration, Algorithm, RegistrationArtifacts, RegistrationConfig,
    RegistrationInput, RegistrationOutcome, RegistrationReport, StageTimes, Status,
};
pub use synth::{generate_synthetic_pair, RadiometricMode, SceneParams, SyntheticPair};
