//! Simulation harness: identification-data generation, model fitting,
//! closed-loop scenario runs, comparison reports and parameter sweeps.
//!
//! The harness ties the library layers together. [`data`] flies the plant
//! open loop under a persistent excitation and logs the coupling-function
//! samples; [`identify`] fits type-1 and interval models from those logs;
//! [`scenario`] runs the closed-loop tracking scenarios with any of the
//! controller variants and logs states, controls and adaptive parameters;
//! [`report`] renders side-by-side comparisons; [`sweep`] runs controller x
//! disturbance x seed grids in parallel.

pub mod config;
pub mod data;
pub mod identify;
pub mod report;
pub mod scenario;
pub mod sweep;

pub use config::{
    ControllerKind, DisturbanceSpec, GainConfig, IdentConfig, LoopGains, Profile, ReferenceSet,
    ScenarioConfig, ScenarioMode,
};
pub use data::{generate_ident_data, IdentChannel, IdentData};
pub use identify::{
    identify_channel, identify_from_data, run_identification, ChannelModels, IdentResult,
    IdentifiedModels,
};
pub use report::compare_report;
pub use scenario::{run_scenario, run_scenario_observed, RunLog, RunMetrics, StepRecord};
pub use sweep::{run_sweep, SweepConfig, SweepRun};
