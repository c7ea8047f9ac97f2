use std::fmt;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub enum Failure {
    /// Reading or writing a file failed, or an input file is malformed.
    Io(anyhow::Error),
    /// Flags or configuration are invalid.
    Usage(anyhow::Error),
}

impl Failure {
    pub fn code(&self) -> i32 {
        match self {
            Failure::Io(_) => 1,
            Failure::Usage(_) => 2,
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Failure::Io(e) | Failure::Usage(e) => write!(f, "{e:#}"),
        }
    }
}

pub type CmdResult<T = ()> = Result<T, Failure>;

pub trait Classify<T> {
    fn io(self) -> CmdResult<T>;
    fn usage(self) -> CmdResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn io(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Io(e.into()))
    }

    fn usage(self) -> CmdResult<T> {
        self.map_err(|e| Failure::Usage(e.into()))
    }
}

pub fn usage(msg: impl fmt::Display) -> Failure {
    Failure::Usage(anyhow::anyhow!("{msg}"))
}

pub fn io(msg: impl fmt::Display) -> Failure {
    Failure::Io(anyhow::anyhow!("{msg}"))
}
