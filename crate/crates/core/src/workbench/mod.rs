//! Instance generation, instance files, benchmark tables and noise audits.

mod audit;
mod bench;
mod generate;

pub use audit::{noise_audit, NoiseAudit};
pub use bench::{
    compute_qal, emit_nodes_table, emit_times_table, instance_seed, read_baseline, read_rows_csv,
    run_benchmark, thread_count, write_rows_csv, BaselineTimes, BenchConfig, BenchRow, BenchTable,
    TimingOracle, THREADS_ENV,
};
pub use generate::{generate, read_instance, write_instance, GenSpec, InstanceFile};
