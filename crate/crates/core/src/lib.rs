//! Auditable identities, interaction trajectories and risk levels for
//! networks of AI agents, kept on a signed, hash-chained ledger.

pub mod error;
pub mod events;
pub mod graph;
pub mod harness;
pub mod identity;
pub mod ledger;
pub mod load;
pub mod risk;
pub mod trail;
pub mod trajectory;

pub use error::{Error, Result};
pub use graph::{detect_forks, propagation, trace_source, ExportFormat, TrajectoryGraph};
pub use identity::{DidDocument, NodeType, Presentation, RejectReason, Verdict, VerifiableCredential};
pub use ledger::{Address, Hash32, Ledger, LedgerRecord, RecordFilter, RecordKind, Signer};
pub use load::{load_estimate, LoadEstimate};
pub use risk::{AuditFinding, Beta, DiffusionResult, Erl, RiskReport};
pub use trail::{AuditTrail, TrailConfig};
pub use trajectory::{InteractionEvent, ReconciliationReport, TrajectoryId};
