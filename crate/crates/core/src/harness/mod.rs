//! Experiment orchestration: demonstrations, training, evaluation and reports.

mod evaluate;
mod fewshot;
mod oracle;
mod outcome;
mod pipeline;
mod seeds;
mod tasks;
mod traversal;

pub use evaluate::{evaluate, expert_stops_behind_lead, run_driver, Driver, Variant};
pub use fewshot::{fewshot_experiment, median, target_tasks, AdaptedRun, FewshotReport, FewshotSeed, FEWSHOT_EPISODES};
pub use oracle::{oracle_episode, oracle_panel, OracleOptions, NOISE_DIMS, ORACLE_GAP, ORACLE_LIGHT, ORACLE_REAR};
pub use outcome::{
    classify_default, classify_outcome, metrics_table, Label, MetricsReport, Rates, TaskOutcome, INERTIA_WINDOW_S,
    STALL_FRACTION,
};
pub use pipeline::{
    collect_demonstrations, encode_panel, evaluate_variant, load_demonstrations, run_pipeline, save_demonstrations,
    select_latent_causes, train_head, train_perception, train_variant, training_frames, write_panel_csv, ArtifactEntry,
    Bundle, Demonstrations, HarnessError, PipelineManifest, PipelineRun, RunConfig, SplitManifest,
};
pub use seeds::derive_seed;
pub use tasks::{task_suite, trial_task, DEFAULT_TIMEOUT};
pub use traversal::{traversal_report, DimVariance, TraversalReport};
