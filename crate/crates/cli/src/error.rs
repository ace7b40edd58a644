use std::fmt;

use serde::Serialize;
use serde_json::{json, Value};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

/// Machine-readable failure, printed to stderr as `{code, message, context}`.
#[derive(Debug, Clone, Serialize)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub context: Value,
    #[serde(skip)]
    pub exit_code: i32,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: "usage", message: message.into(), context: json!({}), exit_code: EXIT_USAGE }
    }

    pub fn numerical(message: impl Into<String>) -> Self {
        Self { code: "numerical", message: message.into(), context: json!({}), exit_code: EXIT_NUMERICAL }
    }

    pub fn io(message: impl Into<String>, path: &std::path::Path) -> Self {
        Self {
            code: "io",
            message: message.into(),
            context: json!({ "path": path.display().to_string() }),
            exit_code: EXIT_IO,
        }
    }

    pub fn with_context(mut self, context: Value) -> Self {
        self.context = context;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error objects always serialize")
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for CliError {}

impl From<frepel_core::Error> for CliError {
    fn from(e: frepel_core::Error) -> Self {
        use frepel_core::Error::*;
        let message = e.to_string();
        match e {
            Domain(_) | InvalidPlan(_) | InvalidConfig(_) => Self::usage(message),
            Factorization { minor, pivot } => {
                Self::numerical(message).with_context(json!({ "minor": minor, "pivot": pivot }))
            }
            NegativeEigenvalue { min_eigenvalue } => {
                Self::numerical(message).with_context(json!({ "min_eigenvalue": min_eigenvalue }))
            }
            NoSurvivors { width, replicas } => {
                Self::numerical(message).with_context(json!({ "width": width, "replicas": replicas }))
            }
            IndexOutOfRange { index, len } => {
                Self::numerical(message).with_context(json!({ "index": index, "len": len }))
            }
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

#[cfg(test)]
mod tests {
    use super::*;
    use frepel_core::Error;

    #[test]
    fn core_errors_map_to_exit_codes() {
        let cases = [
            (Error::Domain("x".into()), EXIT_USAGE),
            (Error::InvalidPlan("x".into()), EXIT_USAGE),
            (Error::InvalidConfig("x".into()), EXIT_USAGE),
            (Error::Factorization { minor: 3, pivot: -1e-18 }, EXIT_NUMERICAL),
            (Error::NegativeEigenvalue { min_eigenvalue: -1e-3 }, EXIT_NUMERICAL),
            (Error::NoSurvivors { width: 0.1, replicas: 10 }, EXIT_NUMERICAL),
        ];
        for (e, code) in cases {
            assert_eq!(CliError::from(e).exit_code, code);
        }
        let e = CliError::from(Error::Factorization { minor: 3, pivot: -1e-18 });
        let v: Value = serde_json::from_str(&e.to_json()).unwrap();
        assert_eq!(v["context"]["minor"], 3);
        assert_eq!(v["code"], "numerical");
    }

    #[test]
    fn io_errors_carry_the_path() {
        let e = CliError::io("cannot write", std::path::Path::new("/x/y.csv"));
        assert_eq!(e.exit_code, EXIT_IO);
        assert_eq!(e.context["path"], "/x/y.csv");
    }
}
