use std::fmt;
use std::path::Path;

/// A command failure: a short machine-readable class and a human detail.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Failure {
    pub class: &'static str,
    pub detail: String,
}

impl Failure {
    pub fn new(class: &'static str, detail: impl Into<String>) -> Self {
        Self {
            class,
            detail: detail.into(),
        }
    }

    pub fn config(detail: impl Into<String>) -> Self {
        Self::new("config", detail)
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::new("io", format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            "config" | "hyperparameter" => 2,
            "io" => 3,
            "data" | "format" => 4,
            "numeric" => 5,
            _ => 1,
        }
    }
}

impl fmt::Display for Failure {
    /// Single line: `error[class]: detail`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "error[{}]: {}", self.class, self.detail.replace('\n', " "))
    }
}

impl std::error::Error for Failure {}

impl From<hyperproj::Error> for Failure {
    fn from(e: hyperproj::Error) -> Self {
        Self::new(e.class(), e.to_string())
    }
}
