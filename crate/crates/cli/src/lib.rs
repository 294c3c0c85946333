//! Experiment configuration, dispatch and reporting for the `rfield` tool.

pub mod config;
pub mod model;
pub mod run;

pub use config::{DomainSource, ExperimentConfig, Outputs, Task, Weights};
pub use model::{LinearSource, ModelSpec};
pub use run::{execute, exit_code, render, run, with_workers, Outcome};
