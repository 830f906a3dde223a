//! Datasets, experiment configuration, solver races and result export.

mod data;
mod experiment;

pub use data::{
    encode_idx_images, encode_idx_labels, load_csv, load_idx, parse_idx_images, parse_idx_labels,
    read_csv, subsample_binary, synth, write_idx, SynthKind, SynthSpec, Synthetic,
    IDX_IMAGES_MAGIC, IDX_LABELS_MAGIC,
};
pub use experiment::{
    fit_rate, fit_rate_with_reference, reference_objective, run_experiment, thread_limit, DataSpec,
    ExperimentConfig, ProblemSummary, Report, SolverSpec, SolverSummary, REFERENCE_FACTOR,
    THREADS_ENV,
};
