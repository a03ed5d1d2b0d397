use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid {name}: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("run needs {slots} slots, above the configured budget of {cap}")]
    SlotBudget { slots: u64, cap: u64 },

    #[error("run produced more than the configured cap of {cap} records")]
    RecordCap { cap: u64 },

    #[error("record {index} has a timestamp earlier than its predecessor")]
    UnsortedStream { index: usize },

    #[error("record {index} has mask {mask:#x}, which does not fit {detectors} detectors")]
    InvalidMask { index: usize, mask: u64, detectors: usize },

    #[error("window of {window} ticks exceeds the gate of {gate} ticks")]
    WindowExceedsGate { window: u64, gate: u64 },

    #[error("unattainable target: {0}")]
    Unattainable(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("{path}:{line}: {message}")]
    Parse { path: String, line: usize, message: String },

    #[error("stage {stage} failed at cell {cell}: {source}")]
    Stage {
        stage: &'static str,
        cell: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Coarse failure class, mapped onto process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Config,
    Io,
    Numerical,
}

impl ErrorClass {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorClass::Config => 2,
            ErrorClass::Io => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

impl Error {
    pub fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn at_stage(self, stage: &'static str, cell: usize) -> Self {
        Error::Stage {
            stage,
            cell,
            source: Box::new(self),
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidParameter { .. }
            | Error::WindowExceedsGate { .. }
            | Error::SlotBudget { .. }
            | Error::RecordCap { .. }
            | Error::Config { .. } => ErrorClass::Config,
            Error::Parse { .. }
            | Error::Io { .. }
            | Error::UnsortedStream { .. }
            | Error::InvalidMask { .. } => ErrorClass::Io,
            Error::Unattainable(_) | Error::Numerical(_) => ErrorClass::Numerical,
            Error::Stage { source, .. } => source.class(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_distinct() {
        assert_eq!(Error::config("sim.duration", "bad").class().exit_code(), 2);
        let io = Error::io("x", std::io::Error::from(std::io::ErrorKind::NotFound));
        assert_eq!(io.class().exit_code(), 3);
        assert_eq!(Error::Numerical("nan".into()).class().exit_code(), 4);
    }

    #[test]
    fn messages_name_the_key() {
        let e = Error::config("detectors.dead_time", "must be >= 0");
        assert!(e.to_string().contains("detectors.dead_time"));
    }
}
