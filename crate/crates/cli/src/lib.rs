//! Scenario-driven front end for `csm-core`: parses experiment descriptions,
//! runs them into JSON reports, writes CSV sweep tables and verifies the
//! numerical invariants of a scenario's objects.

pub mod error;
pub mod run;
pub mod scenario;
pub mod table;
pub mod verify;

pub use error::ScenarioError;
pub use run::{run_scenario, sweep, to_json, Report, RunOptions, SweepParam};
pub use scenario::{parse_scenario, parse_scenario_str, Scenario};
pub use table::{format_g17, Table};
pub use verify::{verify, Check, VerifyReport};
