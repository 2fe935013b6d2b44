//! Datasets, workloads, a sorted-map oracle and timed drivers for `uplif`.

pub mod dataset;
pub mod oracle;
pub mod report;
pub mod runner;
pub mod workload;

pub use dataset::{gen_lognormal, gen_uniform, load_dataset, write_dataset, DatasetError};
pub use oracle::{replay_against_oracle, KvIndex, Mismatch, SortedMapOracle};
pub use report::{emit_report, read_report, ReportRow};
pub use runner::{run_benchmark, run_range_benchmark, run_with_agent, train_agent, BenchError, Metrics, RunLimit};
pub use workload::{generate_workload, OpStream, Workload, WorkloadKind, WorkloadSpec};
