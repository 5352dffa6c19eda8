use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("pilot sequence is empty; synchronization needs at least one pilot symbol")]
    NoPilots,

    #[error("template shift q = {q}, e = {e} out of range (max shift {max_shift})")]
    ShiftOutOfRange { q: usize, e: f64, max_shift: usize },

    #[error("joint estimation requires fully dependent delays")]
    JointNeedsCommonDelay,

    #[error("CRB undefined at lattice delay (block {block}, fractional delay {e:e})")]
    LatticeDelay { block: usize, e: f64 },

    #[error("singular Fisher information matrix (condition number {condition:e})")]
    SingularFisher { condition: f64 },

    #[error("non-finite MGF integrand at zeta = {zeta}, s = {s}, state {state}")]
    NonFiniteMgf { zeta: f64, s: f64, state: usize },

    #[error("non-monotone mu detected near zeta = {zeta}")]
    NonMonotone { zeta: f64 },

    #[error("no pilot-length candidate fits a block of {nc} channel uses")]
    NoPilotCandidates { nc: usize },

    #[error("target {target:e} unreachable within [{lo_db}, {hi_db}] dB")]
    TargetUnreachable { target: f64, lo_db: f64, hi_db: f64 },

    #[error("{0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
