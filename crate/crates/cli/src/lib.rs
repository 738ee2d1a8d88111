//! Experiment front-end for the federated MIL simulator: JSON sweep configs,
//! the sweep runner, plot-data emission and kernel inspection.

pub mod config;
pub mod experiment;
pub mod inspect;
pub mod plot;

pub use config::{DatasetSpec, ExperimentConfig, PartitionSpec};
pub use experiment::{run_experiment, RunReport, Summary};
pub use inspect::inspect_kernel;
pub use plot::emit_plot_data;
