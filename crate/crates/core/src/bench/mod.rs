//! The evaluation protocol: observed-prefix truncation, window sampling,
//! validation splits, MASE, leave-one-out orchestration and reports.

mod manifest;
mod metrics;
mod protocol;
mod report;
mod runner;
mod synthetic;
mod windows;

pub use manifest::{derive_seed, BenchmarkManifest, DatasetEntry, Method};
pub use metrics::{compute_mase, MaseScore};
pub use protocol::{
    auxiliary_task_data, split_validation, target_task_data, truncate_for_etsf, validation_count, EtsfTask,
    ValidationSplit,
};
pub use report::{EvalReport, HeadToHead, RowWinner};
pub use runner::{leave_one_out, prepare_target, run_cell, run_manifest, CellResult, LeakageAudit, PreparedTarget};
pub use synthetic::{gen_synthetic, Family, SyntheticSpec};
pub use windows::{make_windows, window_offsets, Sample};
