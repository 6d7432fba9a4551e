//! Error codes and exit statuses.

use std::fmt;

use pathshap_core::Error;

/// An error with an explicit code, for failures the core library does not classify.
#[derive(Debug)]
pub struct Failure {
    pub code: &'static str,
    pub message: String,
}

impl Failure {
    pub fn new(code: &'static str, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

pub fn args(message: impl Into<String>) -> anyhow::Error {
    Failure::new("E_ARGS", message).into()
}

fn core_code(err: &Error) -> &'static str {
    match err {
        Error::GraphSyntax { .. }
        | Error::UnknownNodeKind(_)
        | Error::UnknownNode(_)
        | Error::DuplicateNode(_)
        | Error::SelfLoop(_)
        | Error::DuplicateEdge(..)
        | Error::DirectedCycle(_)
        | Error::InvalidGraph(_)
        | Error::InvalidPath(_)
        | Error::PositionOutOfRange { .. }
        | Error::UndirectedEdge(..)
        | Error::IncompleteOrder => "E_GRAPH",
        Error::BudgetExhausted(_) => "E_BUDGET",
        Error::Schema(_) => "E_SCHEMA",
        Error::DataCell { .. }
        | Error::Data(_)
        | Error::SingularDesign { .. }
        | Error::StratumTooSmall { .. }
        | Error::EmptyGroup(_)
        | Error::SingleClassOutcome(_) => "E_DATA",
        Error::MissingOutcome(_) => "E_OUTCOME",
        Error::Training(_) | Error::Dimension { .. } => "E_TRAIN",
        Error::Protocol { .. } | Error::Timeout(_) => "E_PREDICTOR",
        Error::NoPaths => "E_NO_PATHS",
        Error::GuardExceeded { .. } => "E_GUARD",
        Error::InvalidArgument(_) => "E_ARGS",
        Error::Undefined(_) => "E_UNDEFINED",
        Error::UnknownPath(_) | Error::MissingResidual(_) => "E_INTERNAL",
        Error::Io(_) | Error::Json(_) => "E_IO",
    }
}

pub fn exit_status(code: &str) -> u8 {
    match code {
        "E_SCHEMA" | "E_DATA" | "E_GRAPH" | "E_OUTCOME" | "E_ARGS" => 2,
        "E_GUARD" => 3,
        _ => 1,
    }
}

/// Code of the first classified error in the chain, `E_IO` otherwise.
pub fn classify(err: &anyhow::Error) -> &'static str {
    for cause in err.chain() {
        if let Some(f) = cause.downcast_ref::<Failure>() {
            return f.code;
        }
        if let Some(e) = cause.downcast_ref::<Error>() {
            return core_code(e);
        }
    }
    "E_IO"
}

/// One line: `E_CODE: message`.
pub fn render(err: &anyhow::Error) -> String {
    let message = format!("{err:#}").replace(['\n', '\r'], " ");
    format!("{}: {}", classify(err), message)
}
