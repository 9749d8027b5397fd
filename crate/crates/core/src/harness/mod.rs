//! Run configuration, evaluation metrics, rollout prediction error and
//! file outputs shared by the command line tool.

mod config;
mod eval;
mod predict;
mod run;

pub use config::RunConfig;
pub use eval::{
    episode_seeds, export_trace, play_episode, read_trace, run_episodes, success_from_trace, worker_threads,
    CollidingController, Controller, EpisodeSummary, Evaluation, MetricsReport, PolicyController, TrackingController,
    ZeroController, TRACE_HEADER,
};
pub use predict::{
    autoregressive_rollout, compare_controllers, median, prediction_mae, reference_positions, rollout_mae,
    ComparisonTable, CoreRow, DEFAULT_H_GRID,
};
pub use run::{
    compare_cores, load_controller, output_dir, trace_file, train, write_evaluation, write_training, TrainOutcome,
    CHECKPOINT_FILE, CONFIG_FILE, METRICS_FILE, TIMING_FILE, TRAINING_LOG_FILE, VALIDATION_LOG_FILE,
};
