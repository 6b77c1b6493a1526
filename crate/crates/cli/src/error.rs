use std::fmt;
use std::path::Path;

use serde_json::json;

/// Exit code for bad invocations and invalid configurations.
pub const EXIT_USAGE: i32 = 1;
/// Exit code for failures while running.
pub const EXIT_RUNTIME: i32 = 2;

#[derive(Debug)]
pub enum CliError {
    /// Bad arguments or a configuration that violates a constraint.
    Usage(String),
    Io { path: String, detail: String },
    Malformed {
        path: String,
        line: Option<u64>,
        column: Option<usize>,
        detail: String,
    },
    Core(hnko_core::Error),
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: impl fmt::Display) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            detail: e.to_string(),
        }
    }

    pub fn malformed(path: &Path, line: Option<u64>, column: Option<usize>, detail: &str) -> Self {
        CliError::Malformed {
            path: path.display().to_string(),
            line,
            column,
            detail: detail.to_string(),
        }
    }

    pub fn csv(path: &Path, e: csv::Error) -> Self {
        let line = e.position().map(|p| p.line());
        CliError::malformed(path, line, None, &e.to_string())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            _ => EXIT_RUNTIME,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Io { .. } => "io",
            CliError::Malformed { .. } => "malformed_file",
            CliError::Core(_) => "runtime",
            CliError::Runtime(_) => "runtime",
        }
    }

    /// Single-line JSON report for stderr.
    pub fn to_json_line(&self) -> String {
        let v = match self {
            CliError::Malformed {
                path,
                line,
                column,
                detail,
            } => json!({"error": self.kind(), "path": path, "line": line, "column": column, "message": detail}),
            CliError::Io { path, detail } => json!({"error": self.kind(), "path": path, "message": detail}),
            other => json!({"error": other.kind(), "message": other.to_string()}),
        };
        v.to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
            CliError::Io { path, detail } => write!(f, "{path}: {detail}"),
            CliError::Malformed {
                path,
                line,
                column,
                detail,
            } => write!(f, "{path}:{}:{}: {detail}", line.unwrap_or(0), column.unwrap_or(0)),
            CliError::Core(e) => write!(f, "{e}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<hnko_core::Error> for CliError {
    fn from(e: hnko_core::Error) -> Self {
        CliError::Core(e)
    }
}
