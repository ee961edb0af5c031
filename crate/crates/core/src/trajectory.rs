//! Trajectory ids and on-ledger interaction records.
//!
//! A caller logs one `InteractionLogged` record per callee; the callee answers
//! with a `ReceiptLogged`. Reconciliation pairs the two sides up.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::events::{Event, InteractionBody, ReceiptBody};
use crate::ledger::{Address, Hash32, LedgerRecord, RecordFilter, RecordKind, Signer};
use crate::trail::AuditTrail;

/// CA namespace (first 8 bytes of the CA address) followed by a big-endian
/// sequence number.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TrajectoryId(pub [u8; 16]);

impl TrajectoryId {
    pub fn new(namespace: [u8; 8], sequence: u64) -> Self {
        let mut out = [0u8; 16];
        out[..8].copy_from_slice(&namespace);
        out[8..].copy_from_slice(&sequence.to_be_bytes());
        Self(out)
    }

    pub fn namespace(&self) -> [u8; 8] {
        self.0[..8].try_into().expect("8 bytes")
    }

    pub fn sequence(&self) -> u64 {
        u64::from_be_bytes(self.0[8..].try_into().expect("8 bytes"))
    }

    pub fn to_hex(&self) -> String {
        hex::encode(self.0)
    }
}

impl fmt::Display for TrajectoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl fmt::Debug for TrajectoryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "TrajectoryId({})", self.to_hex())
    }
}

impl FromStr for TrajectoryId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let mut out = [0u8; 16];
        hex::decode_to_slice(s, &mut out)
            .map_err(|_| Error::BadInput(format!("malformed trajectory id {s:?}")))?;
        Ok(Self(out))
    }
}

impl Serialize for TrajectoryId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> Deserialize<'de> for TrajectoryId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// One directed interaction δ(caller, callee).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct InteractionEvent {
    pub caller: Address,
    pub callee: Address,
    pub trajectory_id: TrajectoryId,
    pub action_type: String,
    pub interaction_hash: Hash32,
    pub timestamp: u64,
}

/// An interaction event together with the ledger position that backs it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LoggedEvent {
    pub event: InteractionEvent,
    pub ledger_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Receipt {
    pub callee: Address,
    pub caller: Address,
    pub trajectory_id: TrajectoryId,
    pub interaction_hash: Hash32,
    pub timestamp: u64,
    pub ledger_index: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct MismatchPair {
    pub event_index: u64,
    pub receipt_index: u64,
    pub caller: Address,
    pub callee: Address,
    pub event_hash: Hash32,
    pub receipt_hash: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ReconciliationReport {
    pub matched: usize,
    pub missing_receipt: Vec<InteractionEventRef>,
    pub orphan_receipt: Vec<Receipt>,
    pub hash_mismatch: Vec<MismatchPair>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct InteractionEventRef {
    #[serde(flatten)]
    pub event: InteractionEvent,
    pub ledger_index: u64,
}

impl ReconciliationReport {
    pub fn is_clean(&self) -> bool {
        self.missing_receipt.is_empty() && self.orphan_receipt.is_empty() && self.hash_mismatch.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IssuedTrajectory {
    pub requester: Address,
    pub ledger_index: u64,
    pub issued_at: u64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryState {
    namespace: [u8; 8],
    last_sequence: u64,
    issued: BTreeMap<TrajectoryId, IssuedTrajectory>,
}

impl TrajectoryState {
    pub fn new(ca: Address) -> Self {
        Self {
            namespace: ca.as_bytes()[..8].try_into().expect("8 bytes"),
            last_sequence: 0,
            issued: BTreeMap::new(),
        }
    }

    pub fn next_id(&self) -> TrajectoryId {
        TrajectoryId::new(self.namespace, self.last_sequence + 1)
    }

    pub fn get(&self, id: &TrajectoryId) -> Option<&IssuedTrajectory> {
        self.issued.get(id)
    }

    pub fn is_issued(&self, id: &TrajectoryId) -> bool {
        self.issued.contains_key(id)
    }

    pub fn ids(&self) -> impl Iterator<Item = &TrajectoryId> {
        self.issued.keys()
    }

    pub(crate) fn apply(&mut self, rec: &LedgerRecord, event: &Event) {
        if let Event::TrajectoryIssued { trajectory_id, requester } = event {
            self.last_sequence = trajectory_id.sequence();
            self.issued.insert(
                *trajectory_id,
                IssuedTrajectory {
                    requester: *requester,
                    ledger_index: rec.index,
                    issued_at: rec.timestamp,
                },
            );
        }
    }
}

fn decode_interaction(rec: &LedgerRecord) -> Option<LoggedEvent> {
    match Event::decode(rec.kind, &rec.payload).ok()? {
        Event::InteractionLogged(b) => Some(LoggedEvent {
            event: InteractionEvent {
                caller: b.caller,
                callee: b.callee,
                trajectory_id: b.trajectory_id,
                action_type: b.action_type,
                interaction_hash: b.interaction_hash,
                timestamp: rec.timestamp,
            },
            ledger_index: rec.index,
        }),
        _ => None,
    }
}

fn decode_receipt(rec: &LedgerRecord) -> Option<Receipt> {
    match Event::decode(rec.kind, &rec.payload).ok()? {
        Event::ReceiptLogged(b) => Some(Receipt {
            callee: b.callee,
            caller: b.caller,
            trajectory_id: b.trajectory_id,
            interaction_hash: b.interaction_hash,
            timestamp: rec.timestamp,
            ledger_index: rec.index,
        }),
        _ => None,
    }
}

impl AuditTrail {
    pub(crate) fn validate_trajectory(&self, author: &Address, event: &Event, tick: u64) -> Result<()> {
        match event {
            Event::TrajectoryIssued { trajectory_id, requester } => {
                if *author != self.ca {
                    return Err(Error::NotAuthorized);
                }
                self.identity.doc(requester)?;
                if !self.identity.has_valid_credential(requester, tick) {
                    return Err(Error::IdentityUnverified);
                }
                if *trajectory_id != self.trajectories.next_id() {
                    return Err(Error::BadInput(format!("out-of-sequence trajectory id {trajectory_id}")));
                }
                Ok(())
            }
            Event::InteractionLogged(b) => {
                if b.caller != *author {
                    return Err(Error::NotAuthorized);
                }
                self.identity.doc(&b.caller)?;
                self.identity.doc(&b.callee)?;
                if b.caller == b.callee {
                    return Err(Error::SelfCall);
                }
                if !self.trajectories.is_issued(&b.trajectory_id) {
                    return Err(Error::UnknownTrajectory(b.trajectory_id.to_hex()));
                }
                Ok(())
            }
            Event::ReceiptLogged(b) => {
                if b.callee != *author {
                    return Err(Error::NotAuthorized);
                }
                self.identity.doc(&b.callee)?;
                self.identity.doc(&b.caller)?;
                Ok(())
            }
            _ => Ok(()),
        }
    }

    /// CA issues the next trajectory id to a requester holding a valid credential.
    pub fn issue_trajectory_id(&mut self, ca: &Signer, requester: &Address) -> Result<TrajectoryId> {
        if ca.address() != self.ca {
            return Err(Error::NotAuthorized);
        }
        let trajectory_id = self.trajectories.next_id();
        self.commit(ca, vec![Event::TrajectoryIssued { trajectory_id, requester: *requester }])?;
        Ok(trajectory_id)
    }

    /// Fans a call out to one record per callee, all stamped with one tick.
    pub fn log_interaction(
        &mut self,
        sender: &Signer,
        callees: &[Address],
        trajectory_id: &TrajectoryId,
        action_type: &str,
        interaction_hash: Hash32,
    ) -> Result<Vec<(u64, Hash32)>> {
        if callees.is_empty() {
            return Err(Error::EmptyCallees);
        }
        let events = callees
            .iter()
            .map(|callee| {
                Event::InteractionLogged(InteractionBody {
                    trajectory_id: *trajectory_id,
                    caller: sender.address(),
                    callee: *callee,
                    action_type: action_type.to_string(),
                    interaction_hash,
                })
            })
            .collect();
        self.commit(sender, events)
    }

    pub fn acknowledge(
        &mut self,
        callee: &Signer,
        caller: &Address,
        trajectory_id: &TrajectoryId,
        interaction_hash: Hash32,
    ) -> Result<(u64, Hash32)> {
        let event = Event::ReceiptLogged(ReceiptBody {
            trajectory_id: *trajectory_id,
            callee: callee.address(),
            caller: *caller,
            interaction_hash,
        });
        Ok(self.commit(callee, vec![event])?[0])
    }

    /// Interaction events of one trajectory in (timestamp, ledger index) order.
    pub fn interactions(&self, trajectory_id: &TrajectoryId) -> Vec<LoggedEvent> {
        let filter = RecordFilter {
            kind: Some(RecordKind::InteractionLogged),
            trajectory_id: Some(*trajectory_id),
            ..RecordFilter::default()
        };
        self.ledger.query(&filter).into_iter().filter_map(decode_interaction).collect()
    }

    /// All interaction events with timestamps in `[t0, t1]`.
    pub fn interactions_between(&self, t0: u64, t1: u64) -> Vec<LoggedEvent> {
        let filter = RecordFilter {
            kind: Some(RecordKind::InteractionLogged),
            time_interval: Some((t0, t1)),
            ..RecordFilter::default()
        };
        self.ledger.query(&filter).into_iter().filter_map(decode_interaction).collect()
    }

    pub fn receipts(&self, trajectory_id: &TrajectoryId) -> Vec<Receipt> {
        let filter = RecordFilter {
            kind: Some(RecordKind::ReceiptLogged),
            trajectory_id: Some(*trajectory_id),
            ..RecordFilter::default()
        };
        self.ledger.query(&filter).into_iter().filter_map(decode_receipt).collect()
    }

    /// Pairs every logged event with a receipt on (caller, callee, hash).
    /// Unpaired events whose (caller, callee) still has an unused receipt
    /// are hash mismatches; the rest are missing receipts.
    pub fn reconcile(&self, trajectory_id: &TrajectoryId) -> Result<ReconciliationReport> {
        if !self.trajectories.is_issued(trajectory_id) {
            return Err(Error::UnknownTrajectory(trajectory_id.to_hex()));
        }
        let events = self.interactions(trajectory_id);
        let receipts = self.receipts(trajectory_id);
        let mut used = vec![false; receipts.len()];
        let mut report = ReconciliationReport::default();
        let mut unmatched = Vec::new();

        for ev in &events {
            let e = &ev.event;
            let hit = receipts.iter().enumerate().position(|(i, r)| {
                !used[i]
                    && r.caller == e.caller
                    && r.callee == e.callee
                    && r.interaction_hash == e.interaction_hash
            });
            match hit {
                Some(i) => {
                    used[i] = true;
                    report.matched += 1;
                }
                None => unmatched.push(ev),
            }
        }
        for ev in unmatched {
            let e = &ev.event;
            let partner = receipts
                .iter()
                .enumerate()
                .position(|(i, r)| !used[i] && r.caller == e.caller && r.callee == e.callee);
            match partner {
                Some(i) => {
                    used[i] = true;
                    report.hash_mismatch.push(MismatchPair {
                        event_index: ev.ledger_index,
                        receipt_index: receipts[i].ledger_index,
                        caller: e.caller,
                        callee: e.callee,
                        event_hash: e.interaction_hash,
                        receipt_hash: receipts[i].interaction_hash,
                    });
                }
                None => report.missing_receipt.push(InteractionEventRef {
                    event: e.clone(),
                    ledger_index: ev.ledger_index,
                }),
            }
        }
        report.orphan_receipt = receipts
            .into_iter()
            .zip(used)
            .filter_map(|(r, u)| (!u).then_some(r))
            .collect();
        Ok(report)
    }

    /// JSON lines export of a trajectory's interaction events.
    pub fn export_events(&self, trajectory_id: &TrajectoryId) -> String {
        let mut out = String::new();
        for ev in self.interactions(trajectory_id) {
            out.push_str(&serde_json::to_string(&ev.event).expect("event serializes"));
            out.push('\n');
        }
        out
    }
}
