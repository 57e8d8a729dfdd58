//! Scenario configuration, episode execution, metrics and CSV export.

pub mod batch;
pub mod config;
pub mod export;
pub mod metrics;
pub mod sim;

pub use batch::{map_jobs, run_episodes, Execution};
pub use config::{EstimatorInit, Mode, ScenarioConfig};
pub use export::{export_reports_csv, export_trace_csv, TraceTable};
pub use metrics::{compute_metrics, default_metrics, MetricReport};
pub use sim::{run_episode, Calibration, EpisodeTrace, Simulation, StepRecord};
