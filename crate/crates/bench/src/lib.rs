//! Experiment driver for AMP2 spiking networks: seeded training runs,
//! ablation grids, metrics files and static charts.

pub mod ablation;
pub mod config;
pub mod error;
pub mod experiment;
pub mod plots;

pub use ablation::{run_ablation_grid, AblationTable, GridSpec};
pub use config::{Ablation, ExperimentConfig, Method, NetworkTemplate, OptimizerConfig, Schedule};
pub use error::{BenchError, Result};
pub use experiment::{run_experiment, run_seed_on, EpochMetric, ExperimentResult, RunRecord, Split};
pub use plots::emit_plots;

// Training allocates and frees many multi-megabyte buffers per step; the
// system allocator returns them to the OS each time.
#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;
