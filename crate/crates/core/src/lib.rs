//! Monte Carlo simulation of the coevolutionary optional prisoner's dilemma
//! on a periodic square lattice: agents cooperate, defect or abstain, and the
//! weights of the links between them adapt to the utilities they carry.

pub mod cli;
pub mod config;
pub mod draws;
pub mod dynamics;
pub mod experiments;
pub mod lattice;
pub mod metrics;
pub mod model;
pub mod statespace;

pub use dynamics::{Engine, StepRecord};
pub use experiments::{run_replicates, run_simulation, run_sweep, RunOptions, SweepSpec};
pub use lattice::{build_lattice, Grid};
pub use metrics::{Fractions, RunResult};
pub use model::{validate_config, CoevParams, GameParams, SeedingSpec, SimConfig, Strategy};
