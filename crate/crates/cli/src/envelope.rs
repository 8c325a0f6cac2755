use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Summary written for every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultEnvelope {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Resolved arguments, after config file and defaults.
    pub config: Value,
    pub report: Value,
    pub warnings: Vec<String>,
    /// Null when timing is disabled.
    pub wall_clock_seconds: Option<f64>,
    /// CSV files written next to the envelope, by name.
    pub ledgers: Vec<String>,
}

impl ResultEnvelope {
    pub fn new(command: &str, config: Value, report: Value) -> Self {
        ResultEnvelope {
            tool: "certkit".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config,
            report,
            warnings: Vec::new(),
            wall_clock_seconds: None,
            ledgers: Vec::new(),
        }
    }
}
