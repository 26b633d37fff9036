use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Conventions that affect reported numbers, echoed into every manifest.
pub fn conventions() -> Value {
    json!({
        "training_gap": "multi-group parity gap averaged over groups present in the batch, unless gap_form = binary",
        "reported_dp_gap": "binary form when exactly groups {0, 1} are present, multi-group form otherwise",
        "external_units": "gaps in percentage points (x100); prule in percent",
        "std": "sample (n - 1)",
        "sign_of_zero": "+1",
        "tie_break": "lowest class id",
    })
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    Ok(Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect())
}

/// Everything needed to reproduce a command, written as `manifest.json`.
#[derive(Serialize)]
pub struct Manifest {
    pub command: &'static str,
    pub version: &'static str,
    pub seed: u64,
    pub config: Value,
    pub inputs: BTreeMap<String, Value>,
    pub outputs: BTreeMap<String, String>,
    pub conventions: Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ingestion: Option<Value>,
}

impl Manifest {
    pub fn new(command: &'static str, seed: u64, config: impl Serialize) -> Self {
        Self {
            command,
            version: VERSION,
            seed,
            config: serde_json::to_value(config).expect("config serializes"),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            conventions: conventions(),
            ingestion: None,
        }
    }

    pub fn input(&mut self, key: &str, value: impl Serialize) {
        self.inputs.insert(
            key.to_string(),
            serde_json::to_value(value).expect("input serializes"),
        );
    }

    /// Records the SHA-256 of a file written under `dir`.
    pub fn output(&mut self, dir: &Path, name: &str) -> Result<(), CliError> {
        let hash = sha256_file(&dir.join(name))?;
        self.outputs.insert(name.to_string(), hash);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<(), CliError> {
        let path = dir.join("manifest.json");
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::Io(path, e))
    }
}
