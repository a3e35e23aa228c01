//! Files in and out: datasets, synthetic scenarios, run configuration and
//! run directories.

pub mod config;
pub mod dataset;
pub mod output;
pub mod scenario;

pub use config::{PriorOverride, RunConfig, RunMode};
pub use dataset::{load_dataset, write_dataset};
pub use scenario::{generate_scenario, GeneratedScenario, NoiseModel, ScenarioSpec, SensorLayout};

/// Shortest representation that parses back to the same `f64`.
pub(crate) fn fmt_f64(v: f64) -> String {
    if v.is_finite() {
        ryu::Buffer::new().format_finite(v).to_owned()
    } else if v.is_nan() {
        "NaN".to_owned()
    } else if v > 0.0 {
        "inf".to_owned()
    } else {
        "-inf".to_owned()
    }
}
