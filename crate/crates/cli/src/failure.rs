//! Exit codes and the machine-readable error record written to stderr.

use std::fmt;
use std::io::ErrorKind;
use std::path::PathBuf;

use serde::Serialize;

pub const EXIT_OTHER: u8 = 1;
pub const EXIT_USAGE: u8 = 2;
pub const EXIT_CONFIG: u8 = 3;
pub const EXIT_MISSING_FILE: u8 = 4;
pub const EXIT_INVALID: u8 = 5;

/// CLI-level failures that are not core errors.
#[derive(Debug)]
pub enum Failure {
    Usage(String),
    Config(String),
    MissingFile(PathBuf),
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Usage(m) => write!(f, "usage: {m}"),
            Failure::Config(m) => write!(f, "malformed config: {m}"),
            Failure::MissingFile(p) => write!(f, "missing input file: {}", p.display()),
        }
    }
}

impl std::error::Error for Failure {}

#[derive(Debug, Serialize)]
pub struct ErrorRecord {
    pub format_version: u32,
    pub error: &'static str,
    pub exit_code: u8,
    pub message: String,
}

impl ErrorRecord {
    pub fn new(error: &'static str, exit_code: u8, message: String) -> Self {
        ErrorRecord {
            format_version: chronogem_core::FORMAT_VERSION,
            error,
            exit_code,
            message,
        }
    }

    pub fn emit(&self) {
        eprintln!("error: {}", self.message);
        eprintln!("{}", serde_json::to_string(self).expect("plain record"));
    }
}

fn classify_core(e: &chronogem_core::Error) -> (&'static str, u8) {
    use chronogem_core::Error as E;
    match e {
        E::EnvMismatch { .. } => ("env_mismatch", EXIT_INVALID),
        E::Io(io) if io.kind() == ErrorKind::NotFound => ("missing_file", EXIT_MISSING_FILE),
        E::Io(_) => ("io", EXIT_OTHER),
        E::Numerical(_) | E::DensityFit { .. } | E::LearnerUpdate { .. } => ("run_failed", EXIT_OTHER),
        _ => ("invalid_input", EXIT_INVALID),
    }
}

/// The first recognized cause decides the exit code.
pub fn classify(err: &anyhow::Error) -> ErrorRecord {
    let message = format!("{err:#}");
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            let (kind, code) = match f {
                Failure::Usage(_) => ("usage", EXIT_USAGE),
                Failure::Config(_) => ("malformed_config", EXIT_CONFIG),
                Failure::MissingFile(_) => ("missing_file", EXIT_MISSING_FILE),
            };
            return ErrorRecord::new(kind, code, message);
        }
        if let Some(e) = cause.downcast_ref::<chronogem_core::Error>() {
            let (kind, code) = classify_core(e);
            return ErrorRecord::new(kind, code, message);
        }
        if let Some(io) = cause.downcast_ref::<std::io::Error>() {
            if io.kind() == ErrorKind::NotFound {
                return ErrorRecord::new("missing_file", EXIT_MISSING_FILE, message);
            }
            return ErrorRecord::new("io", EXIT_OTHER, message);
        }
        if cause.downcast_ref::<serde_json::Error>().is_some() {
            return ErrorRecord::new("invalid_input", EXIT_INVALID, message);
        }
    }
    ErrorRecord::new("error", EXIT_OTHER, message)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn codes_follow_the_first_known_cause() {
        let e = anyhow::Error::new(Failure::Config("x".into())).context("loading");
        assert_eq!(classify(&e).exit_code, EXIT_CONFIG);
        let e = anyhow::Error::new(chronogem_core::Error::EnvMismatch {
            expected: "maze".into(),
            got: "chain".into(),
        });
        let r = classify(&e);
        assert_eq!((r.error, r.exit_code), ("env_mismatch", EXIT_INVALID));
        assert!(r.message.contains("env mismatch"));
        let e = anyhow::anyhow!("something else");
        assert_eq!(classify(&e).exit_code, EXIT_OTHER);
    }
}
