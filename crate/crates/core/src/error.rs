use std::fmt;

/// A single invariant violation, addressed by its dotted config path.
#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    pub path: String,
    pub message: String,
}

impl Violation {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            path: path.into(),
            message: message.into(),
        }
    }
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.path, self.message)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("validation failed: {}", join(.0))]
    Validation(Vec<Violation>),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
}

fn join(v: &[Violation]) -> String {
    v.iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

impl Error {
    pub fn invalid(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Validation(vec![Violation::new(path, message)])
    }

    /// Offending config paths, empty for non-validation errors.
    pub fn paths(&self) -> Vec<&str> {
        match self {
            Error::Validation(v) => v.iter().map(|x| x.path.as_str()).collect(),
            _ => Vec::new(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;

/// Collects violations and turns them into a single `Error::Validation`.
#[derive(Debug, Default)]
pub struct Validator {
    violations: Vec<Violation>,
}

impl Validator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn positive(&mut self, path: &str, value: f64) {
        if !(value.is_finite() && value > 0.0) {
            self.push(path, format!("must be finite and > 0 (got {value})"));
        }
    }

    pub fn check(&mut self, ok: bool, path: &str, message: impl Into<String>) {
        if !ok {
            self.push(path, message);
        }
    }

    pub fn push(&mut self, path: &str, message: impl Into<String>) {
        self.violations.push(Violation::new(path, message));
    }

    pub fn absorb(&mut self, prefix: &str, result: Result<()>) {
        match result {
            Ok(()) => {}
            Err(Error::Validation(v)) => {
                for x in v {
                    let path = if prefix.is_empty() {
                        x.path
                    } else if x.path.is_empty() {
                        prefix.to_string()
                    } else {
                        format!("{prefix}.{}", x.path)
                    };
                    self.violations.push(Violation::new(path, x.message));
                }
            }
            Err(other) => self.push(prefix, other.to_string()),
        }
    }

    pub fn is_clean(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn finish(self) -> Result<()> {
        if self.violations.is_empty() {
            Ok(())
        } else {
            Err(Error::Validation(self.violations))
        }
    }
}
