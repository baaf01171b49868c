use std::fmt;
use std::process::ExitCode;

/// Exit status classes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    Config,
    Data,
    Estimation,
}

impl Kind {
    pub fn code(self) -> u8 {
        match self {
            Kind::Config => 2,
            Kind::Data => 3,
            Kind::Estimation => 4,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { kind: Kind::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self { kind: Kind::Data, message: message.into() }
    }

    pub fn exit_code(&self) -> ExitCode {
        ExitCode::from(self.kind.code())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<didpanel::Error> for CliError {
    fn from(e: didpanel::Error) -> Self {
        use didpanel::Error as E;
        let kind = match &e {
            E::Config(_) => Kind::Config,
            E::Estimation(_) => Kind::Estimation,
            E::Data(_) | E::Io(_) | E::Csv(_) | E::Json(_) => Kind::Data,
        };
        Self { kind, message: e.to_string() }
    }
}
