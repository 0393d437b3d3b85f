//! Dataset generation, experiment orchestration, and report emission.

pub mod dataset;
pub mod experiment;
pub mod report;

pub use dataset::{
    load_dataset, make_dataset, nearest_anchor_accuracy, nearest_anchor_label, save_dataset,
    DatasetPair, DatasetParams, SyntheticDataset,
};
pub use experiment::{
    cross_scheme_success, erratum_cells, reference_config, reproduce_erratum, run_experiment,
    AdvSet, AttackOutcome, Cell, CellReport, DatasetSummary, EvalReport, ExperimentConfig,
    Finding, ModelSummary, RunArtifacts, TOOL_VERSION,
};
pub use report::{
    canonical_json, emit_report, load_report, report_to_csv, write_report_csv,
    write_report_json, CSV_HEADER,
};
