use serde::{Deserialize, Serialize};

/// Record of one run: enough to repeat it exactly. Only `execution` varies
/// between identical runs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub master_seed: u64,
    pub normal_transform: String,
    pub outputs: Vec<String>,
    pub execution: Execution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub threads: usize,
    pub wall_clock_seconds: f64,
}
