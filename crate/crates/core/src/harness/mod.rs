//! Problem sampling, file formats and batch experiments.

pub mod experiments;
pub mod problems;
pub mod stats;

pub use experiments::{
    ablate, bench, landscape, local_minima, read_csv, reference_times, run_parallel, tradeoff, write_csv,
    AblationRow, Axis, BenchOutput, BenchSpec, BenchSummary, LandscapeCell, LandscapeSpec, TradeoffRow,
    CSV_SCHEMA_VERSION,
};
pub use problems::{gen, sample_problems, FinalVelocityMode, ProblemFile, ProblemRecord, SamplerSpec};
