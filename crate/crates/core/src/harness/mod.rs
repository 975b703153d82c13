//! Experiment driver: configuration, the training loop for every method,
//! evaluation, the linear probe and report export.

mod config;
mod probe;
mod report;
mod run;

pub use config::{ExperimentConfig, Method, Task};
pub use probe::{linear_probe, LinearProbe, PROBE_GRAD_TOL, PROBE_MAX_ITER};
pub use report::{
    export_report, read_jsonl, DomainStats, EpochRecord, MetricsReport, WeightRow, JSONL_FILE, SUMMARY_FILE,
    WEIGHTS_FILE,
};
pub use run::{
    build_model, eval_stream, evaluate_rotation, evaluate_vae, load_domains, prepare_split, run_experiment,
    run_on_split, IDX_DOMAINS,
};
