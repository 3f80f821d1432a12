//! Training (Adam with decoupled weight decay and halve-on-plateau),
//! evaluation with per-class accuracy, results tables, checkpoints, and the
//! finite-difference gradient suite.

mod checkpoint;
mod eval;
pub mod gradsuite;
mod optim;
mod report;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, sidecar_path, CheckpointMeta};
pub use eval::{evaluate, evaluate_with_loss, predict_all, EvalReport, Premises};
pub use gradsuite::{run_gradient_suite, SuiteCheck};
pub use optim::{adam_step, AdamHyper, AdamState, DecayMode};
pub use report::{report_json, report_table, rows_from_records, EvalRecord, TableRow, COLUMNS};
pub use train::{fit, train, EpochLog, FitOutcome, PlateauConfig, TrainArtifacts, TrainConfig, TrainOptions, TrainPaths};
