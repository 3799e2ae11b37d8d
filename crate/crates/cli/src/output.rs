use std::fs;
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use crate::args::OutputFormat;
use crate::error::{CliError, CliResult};

/// Everything needed to rerun a command: embedded in every report.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: &'static str,
    pub tool_version: &'static str,
    pub inputs: Vec<String>,
    pub params: Map<String, Value>,
}

impl RunManifest {
    pub fn new(command: &'static str, inputs: &[&Path], params: Value) -> Self {
        RunManifest {
            command,
            tool_version: env!("CARGO_PKG_VERSION"),
            inputs: inputs.iter().map(|p| p.display().to_string()).collect(),
            params: match params {
                Value::Object(map) => map,
                _ => Map::new(),
            },
        }
    }
}

/// Prints `body` with the manifest: merged into one JSON object, or as a
/// `# manifest` comment line followed by CSV.
pub fn emit(format: OutputFormat, manifest: &RunManifest, body: Value, csv: impl FnOnce() -> String) {
    match format {
        OutputFormat::Json => {
            let mut out = Map::new();
            out.insert(
                "manifest".into(),
                serde_json::to_value(manifest).expect("manifest serializes"),
            );
            if let Value::Object(fields) = body {
                out.extend(fields);
            }
            println!(
                "{}",
                serde_json::to_string_pretty(&Value::Object(out)).expect("report serializes")
            );
        }
        OutputFormat::Csv => {
            println!(
                "# manifest: {}",
                serde_json::to_string(manifest).expect("manifest serializes")
            );
            print!("{}", csv());
        }
    }
}

pub fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.to_owned(),
        source,
    })
}
