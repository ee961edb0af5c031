use thiserror::Error;

use crate::ledger::Address;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("malformed public key: {0}")]
    MalformedKey(String),
    #[error("ledger is closed")]
    LedgerClosed,
    #[error("signing failed: {0}")]
    SigningFailure(String),
    #[error("ledger i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("corrupt encoding: {0}")]
    Decode(String),
    #[error("ledger chain invalid at record {0}")]
    ChainInvalid(u64),
    #[error("clock cannot move backwards from {current} to {requested}")]
    ClockRegression { current: u64, requested: u64 },

    #[error("{0} is already registered")]
    AlreadyRegistered(Address),
    #[error("unknown DID {0}")]
    UnknownDid(String),
    #[error("an application for this credential hash is already pending")]
    DuplicateApplication,
    #[error("signer is not authorized for this operation")]
    NotAuthorized,
    #[error("no pending application for {0}")]
    NoPendingApplication(Address),
    #[error("unknown credential {0}")]
    UnknownVc(String),
    #[error("credential body for {0} not found in store")]
    MissingCredentialBody(String),
    #[error("value out of range: {0}")]
    RangeViolation(String),

    #[error("requester has no valid credential")]
    IdentityUnverified,
    #[error("unknown trajectory {0}")]
    UnknownTrajectory(String),
    #[error("callee list is empty")]
    EmptyCallees,
    #[error("caller and callee must differ")]
    SelfCall,

    #[error("not found: {0}")]
    NotFound(String),
    #[error("node {0} is not part of the graph")]
    UnknownNode(String),
    #[error("bad interval [{0}, {1}]")]
    BadInterval(u64, u64),

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("bad input: {0}")]
    BadInput(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}
