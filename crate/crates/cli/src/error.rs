use std::fmt;

/// Process exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    Usage,
    Data,
    Runtime,
}

impl FailureKind {
    pub fn exit_code(self) -> i32 {
        match self {
            FailureKind::Usage => 1,
            FailureKind::Data => 2,
            FailureKind::Runtime => 3,
        }
    }
}

#[derive(Debug)]
pub struct Failure {
    pub kind: FailureKind,
    pub error: anyhow::Error,
}

impl Failure {
    pub fn usage(msg: impl fmt::Display) -> Failure {
        Failure { kind: FailureKind::Usage, error: anyhow::anyhow!("{msg}") }
    }

    pub fn data(error: impl Into<anyhow::Error>) -> Failure {
        Failure { kind: FailureKind::Data, error: error.into() }
    }

    pub fn runtime(error: impl Into<anyhow::Error>) -> Failure {
        Failure { kind: FailureKind::Runtime, error: error.into() }
    }

    pub fn exit_code(&self) -> i32 {
        self.kind.exit_code()
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.error)
    }
}

/// Attaches a failure class to any error.
pub trait Classify<T> {
    fn data_err(self) -> Result<T, Failure>;
    fn runtime_err(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data_err(self) -> Result<T, Failure> {
        self.map_err(Failure::data)
    }

    fn runtime_err(self) -> Result<T, Failure> {
        self.map_err(Failure::runtime)
    }
}
