//! File formats, scenario configuration and the `gridstor` command-line
//! driver on top of [`gridstor_core`].

pub mod config;
pub mod feeder;
pub mod output;
pub mod qpdump;
pub mod scenario;
pub mod solution;
pub mod tables;

pub use config::{ConfigError, ScenarioConfig};
pub use feeder::{parse_feeder, parse_network, write_network, FeederError, FeederFile};
pub use qpdump::{dump_qp, read_qp, DumpError};
pub use scenario::{run, Command, RunError, RunOptions, Scenario};
pub use solution::{SolutionError, SolutionFile};
pub use tables::{read_profiles, read_schedule, write_profiles, write_schedule, TableError};
