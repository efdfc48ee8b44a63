//! Synthetic data, base-to-new protocol, metrics and study harnesses.

mod data;
mod metrics;
mod report;
mod studies;

pub use data::{
    base_new_split, generate_task, DomainTransform, Example, FewShotTask, Split, SyntheticWorld,
    TaskConfig, WorldConfig,
};
pub use metrics::{harmonic_mean, mean, sample_std};
pub use report::{
    checks_text, fingerprint, fingerprint_fields, reports_csv, reports_table, variance_csv,
    variance_table, DirectionalCheck, EvalReport, SeedResult, VarianceRow, REPORTS_CSV_HEADER,
    VARIANCE_CSV_HEADER,
};
pub use studies::{
    ablation_grid, domain_study, run_config, run_seed, shot_sweep, text_rpo_comparison,
    text_rpo_run, variance_study, zero_shot_report, zero_shot_study, AblationGrid, Bench,
    StudyOutput, TaskSource, TextRpoComparison, VarianceStudy, ABLATION_ROWS, TEXT_RPO_GAP,
};
