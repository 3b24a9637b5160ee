//! Baselines, an exhaustive optimum, trace generators and the experiment
//! harness behind the `gridroute` command.

pub mod algos;
pub mod config;
pub mod experiment;
pub mod ntg;
pub mod oracle;
pub mod traces;

pub use algos::{run_algo, Algo, AlgoParams};
pub use experiment::{run_experiment, write_csv, Row};
pub use ntg::nearest_to_go;
pub use oracle::{brute_force_opt, OracleLimits, OracleResult};
pub use traces::{generate, TraceGenSpec, TraceKind};
