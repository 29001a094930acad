use std::path::PathBuf;

use serde_json::json;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Compute(#[from] ruelle_core::Error),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Compute(e) if e.is_convergence() => 3,
            CliError::Compute(e) if e.is_resource_cap() => 4,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Compute(e) if e.is_convergence() => "convergence",
            CliError::Compute(e) if e.is_resource_cap() => "resource_cap",
            CliError::Compute(_) => "compute",
            CliError::Verification(_) => "verification",
        }
    }

    /// Machine-readable error record; solver failures carry their diagnostics.
    pub fn to_json(&self) -> serde_json::Value {
        let mut v = json!({
            "error": self.kind(),
            "exit_code": self.exit_code(),
            "message": self.to_string(),
        });
        if let CliError::Compute(ruelle_core::Error::NotConverged {
            method,
            iterations,
            residual,
        }) = self
        {
            v["diagnostics"] = json!({
                "method": method,
                "iterations": iterations,
                "residual": if residual.is_finite() { json!(residual) } else { json!(residual.to_string()) },
            });
        }
        v
    }
}
