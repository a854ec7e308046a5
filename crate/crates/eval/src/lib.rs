//! Benchmark harness: runs query suites against the agent and reports
//! success rate, precision, pass@k and per-success cost.

pub mod metrics;
pub mod records;
pub mod runner;
pub mod scripts;
pub mod spec;
pub mod table;

pub use metrics::{aggregate, compute_metrics_row, pass_at_k, pass_at_k_exact, DomainError, MetricsRow};
pub use records::{read_records, RecordError, RecordLog, RunRecord};
pub use runner::{run_benchmark, AttemptRef, BenchError, BenchReport, ClientFactory, IncompleteCell, RunOptions};
pub use scripts::{expert_script, fault_script, scripted_client, ScriptKind};
pub use spec::{BenchQuery, BenchmarkSpec, SpecError};
pub use table::{emit_per_query, emit_table, table_rows, Format, TableRow};
