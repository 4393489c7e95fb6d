use std::fmt;

/// Failure of a command, tagged with a stable class name that is printed
/// as `error[<class>]: <message>` on a single line.
#[derive(Debug, Clone, PartialEq)]
pub struct CliError {
    pub class: &'static str,
    pub message: String,
}

impl CliError {
    pub fn new(class: &'static str, message: impl Into<String>) -> Self {
        Self {
            class,
            message: message.into(),
        }
    }

    pub fn usage(message: impl Into<String>) -> Self {
        Self::new("usage", message)
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new("config", message)
    }

    pub fn format(message: impl Into<String>) -> Self {
        Self::new("format", message)
    }

    pub fn io(path: &std::path::Path, err: std::io::Error) -> Self {
        Self::new("io", format!("{}: {err}", path.display()))
    }

    /// Process exit code for this class.
    pub fn exit_code(&self) -> i32 {
        match self.class {
            "usage" => 2,
            "gradcheck" => 3,
            _ => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Keep it on one line whatever the message contains.
        write!(f, "error[{}]: {}", self.class, self.message.replace('\n', " "))
    }
}

impl std::error::Error for CliError {}

impl From<protolayer::Error> for CliError {
    fn from(e: protolayer::Error) -> Self {
        let message = match &e {
            protolayer::Error::Shape(m)
            | protolayer::Error::Argument(m)
            | protolayer::Error::Config(m)
            | protolayer::Error::Data(m)
            | protolayer::Error::Numeric(m) => m.clone(),
        };
        Self::new(e.class(), message)
    }
}

pub type CliResult<T> = Result<T, CliError>;
