//! Configuration, presets, batch execution and export.

pub mod analytics_cmd;
pub mod config;
pub mod export;
pub mod presets;
pub mod scenario;

pub use config::{parse_config, ModelSpec, ScenarioConfig};
pub use export::{export_csv, ResultRow, CSV_HEADER};
pub use presets::{preset, Scale, PRESETS};
pub use scenario::{run_scenario, write_outputs, ScenarioOutput};
