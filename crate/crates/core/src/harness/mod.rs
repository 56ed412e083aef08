//! Episode runner, metrics, scenarios, sweeps and configuration files.

pub mod config;
pub mod episode;
pub mod metrics;
pub mod records;
pub mod scenario;
pub mod sweep;

pub use episode::{run_episode, run_scenario, run_trials, FeedbackPolicy, Link, PreparedTrial, TransmissionRecord};
pub use metrics::{mse, psnr};
pub use records::records_to_csv;
pub use scenario::{build_fig6_scenarios, FeedbackMode, ScenarioConfig};
