//! Training loop, inference, ensembling and dataset bookkeeping.

mod config;
mod dataset;
mod infer;
mod run;
pub mod synthetic;

pub use config::{Aggregation, RunConfig};
pub use dataset::{
    ingest_pseudo_labels, load_case, prepare_image, split_folds, windows_of, CaseRecord, LoadedCase, Manifest, Source,
};
pub use infer::{ensemble_average, foreground_probability, infer_volume, sliding_window_infer, threshold, tile_starts};
pub use run::{load_fold, train, validate, FoldData, LogRow, TrainSummary, BEST_CHECKPOINT, LAST_CHECKPOINT, LOG_FILE};
