//! Experiment orchestration: run configuration, artifact layout, the
//! generate/train/eval/calibrate/conformal/report commands and their file
//! formats.

mod commands;
mod config;
mod metrics;
mod report;
mod store;
mod tensor;

pub use commands::{
    HorizonCounts, LoadedPipeline, Manifest, PipelineModels, Run, SplitManifest, StoredCalibrator,
};
pub use config::{
    stage, ConformalSection, EvaluatorSection, ForecasterSection, MemoSection, MonolithicSection, RunConfig, Split,
    SplitCounts, VaeSection, SEED_BLOCK, SPLIT_BLOCK,
};
pub use metrics::{f1, fpr, Confusion};
pub use report::{collect_rows, f1_series_csv, rows_to_csv, write_report, MetricsRow, REPORT_HEADER};
pub use store::{
    file_hash, load_evaluator, load_forecaster, load_model, load_monolithic, load_vae, read_dataset, read_json,
    read_trajectories, save_model, write_json, Layout, ModelKind, NetSpec, Pipeline, Sidecar,
};
pub use tensor::{TensorData, TensorFile, MAGIC, VERSION};
