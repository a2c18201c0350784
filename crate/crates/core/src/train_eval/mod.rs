//! Training, best-epoch selection, evaluation under corruption, and the
//! category arithmetic used in reports.

mod data;
mod evaluate;
mod metrics;
mod pipeline;
mod report;
mod train;

pub use data::{
    build_graphs, cell_name, corrupt_split, to_samples, Catalog, DatasetSpec, GraphStore,
};
pub use evaluate::{
    accuracy, aggregate_csv, evaluate, metrics_csv, parse_metrics_csv, run_protocol,
    ConstantPredictor, MetricsTable, PerfectPredictor, Predictor, SeedSummary, AGGREGATE_HEADER,
    METRICS_HEADER,
};
pub use metrics::{
    aggregate_categories, category_mean, format_percent, mean, mean_std, round_half_up,
    BenchmarkKind, Category, CategoryMean,
};
pub use pipeline::{epoch_log, write_text, Experiment, CHECKPOINT_FILE, EPOCH_LOG_FILE};
pub use report::render_markdown;
pub use train::{
    init_rng, select_best, train, train_rng, EpochRecord, EpochState, RunConfig, TrainOutcome,
};
