//! The ledger plus the state materialized from it.
//!
//! Every mutation goes through [`AuditTrail::commit`]: validate the events
//! against current state, append them under one tick, then fold them in.
//! Opening an existing ledger replays the same validate-then-fold path, so a
//! reloaded trail always equals the one that wrote the records.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::events::{Event, Registration};
use crate::identity::{IdentityState, NodeType, NonceRegistry, VerifiableCredential};
use crate::ledger::{Address, Hash32, Ledger, LedgerRecord, RecordKind, Signer};
use crate::risk::{Beta, Erl};
use crate::trajectory::TrajectoryState;

pub const DEFAULT_REPLAY_WINDOW: u64 = 300;
pub const CA_METADATA_URI: &str = "aat:ca";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrailConfig {
    /// Presentation freshness window in logical ticks.
    pub replay_window: u64,
    pub default_erl: Erl,
    pub default_beta: Beta,
}

impl Default for TrailConfig {
    fn default() -> Self {
        Self {
            replay_window: DEFAULT_REPLAY_WINDOW,
            default_erl: Erl::ZERO,
            default_beta: Beta::HALF,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AuditTrail {
    pub(crate) ledger: Ledger,
    pub(crate) config: TrailConfig,
    pub(crate) ca: Address,
    pub(crate) identity: IdentityState,
    pub(crate) trajectories: TrajectoryState,
    /// Off-ledger credential bodies keyed by `vc_uri`.
    pub(crate) credential_store: BTreeMap<String, VerifiableCredential>,
    pub(crate) nonces: NonceRegistry,
}

impl AuditTrail {
    /// Starts a trail on an empty ledger. Record 0 registers the CA, whose
    /// address is thereafter the sole credential issuer and trajectory-id
    /// authority.
    pub fn genesis(ledger: Ledger, ca: &Signer, config: TrailConfig) -> Result<Self> {
        if !ledger.is_empty() {
            return Err(Error::BadInput("genesis requires an empty ledger".into()));
        }
        let mut trail = Self::empty(ledger, ca.address(), config);
        trail.commit(
            ca,
            vec![Event::MetadataRegistered(Registration {
                did: ca.address(),
                node_type: NodeType::AiAgent,
                functionality: "certificate authority".into(),
                owner: ca.address(),
                metadata_uri: CA_METADATA_URI.into(),
                erl: Erl::ZERO,
                beta: config.default_beta,
            })],
        )?;
        Ok(trail)
    }

    /// Rebuilds state from an existing ledger, refusing broken chains.
    pub fn open(ledger: Ledger, config: TrailConfig) -> Result<Self> {
        let report = ledger.verify_chain();
        if let Some(bad) = report.first_bad_index {
            return Err(Error::ChainInvalid(bad));
        }
        let first = ledger
            .records()
            .first()
            .filter(|r| r.kind == RecordKind::MetadataRegistered)
            .ok_or_else(|| Error::BadInput("ledger has no genesis registration".into()))?;
        let mut trail = Self::empty(Ledger::in_memory(), first.author, config);
        for rec in ledger.records() {
            let event = Event::decode(rec.kind, &rec.payload)?;
            trail.validate(&rec.author, &event, rec.timestamp)?;
            trail.apply(rec, &event);
        }
        trail.ledger = ledger;
        Ok(trail)
    }

    fn empty(ledger: Ledger, ca: Address, config: TrailConfig) -> Self {
        Self {
            ledger,
            config,
            ca,
            identity: IdentityState::default(),
            trajectories: TrajectoryState::new(ca),
            credential_store: BTreeMap::new(),
            nonces: NonceRegistry::default(),
        }
    }

    pub fn ledger(&self) -> &Ledger {
        &self.ledger
    }

    pub fn ledger_mut(&mut self) -> &mut Ledger {
        &mut self.ledger
    }

    pub fn config(&self) -> &TrailConfig {
        &self.config
    }

    pub fn ca(&self) -> Address {
        self.ca
    }

    pub fn now(&self) -> u64 {
        self.ledger.now()
    }

    pub fn set_clock(&mut self, t: u64) -> Result<()> {
        self.ledger.set_clock(t)
    }

    pub fn identity(&self) -> &IdentityState {
        &self.identity
    }

    pub fn trajectories(&self) -> &TrajectoryState {
        &self.trajectories
    }

    pub fn nonces(&self) -> &NonceRegistry {
        &self.nonces
    }

    pub fn nonces_mut(&mut self) -> &mut NonceRegistry {
        &mut self.nonces
    }

    pub fn credential_store(&self) -> &BTreeMap<String, VerifiableCredential> {
        &self.credential_store
    }

    /// Replaces the off-ledger credential store, e.g. after loading it from disk.
    pub fn set_credential_store(&mut self, store: BTreeMap<String, VerifiableCredential>) {
        self.credential_store = store;
    }

    /// Validates, appends (one tick for the whole batch) and applies `events`.
    pub(crate) fn commit(&mut self, author: &Signer, events: Vec<Event>) -> Result<Vec<(u64, Hash32)>> {
        let author_addr = author.address();
        let tick = self.ledger.now() + 1;
        for ev in &events {
            self.validate(&author_addr, ev, tick)?;
        }
        let entries = events.iter().map(|e| (e.kind(), e.encode())).collect();
        let out = self.ledger.append_batch(author, entries)?;
        for ((index, _), ev) in out.iter().zip(&events) {
            let rec = self.ledger.get(*index).expect("just appended").clone();
            self.apply(&rec, ev);
        }
        Ok(out)
    }

    fn validate(&self, author: &Address, event: &Event, tick: u64) -> Result<()> {
        match event {
            Event::TrajectoryIssued { .. }
            | Event::InteractionLogged(_)
            | Event::ReceiptLogged(_) => self.validate_trajectory(author, event, tick),
            Event::RiskReportFiled(r) => {
                if r.t0 > r.t1 {
                    return Err(Error::BadInterval(r.t0, r.t1));
                }
                Ok(())
            }
            Event::ErlUpdated { did, .. } => {
                if *author != self.ca {
                    return Err(Error::NotAuthorized);
                }
                self.identity.doc(did).map(|_| ())
            }
            _ => self.identity.validate(author, &self.ca, event),
        }
    }

    fn apply(&mut self, rec: &LedgerRecord, event: &Event) {
        match event {
            Event::TrajectoryIssued { .. } => self.trajectories.apply(rec, event),
            Event::InteractionLogged(_) | Event::ReceiptLogged(_) | Event::RiskReportFiled(_) => {}
            Event::ErlUpdated { .. } => {}
            _ => self.identity.apply(rec, event),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn genesis_registers_ca_first() {
        let ca = Signer::from_seed([1; 32]);
        let trail = AuditTrail::genesis(Ledger::in_memory(), &ca, TrailConfig::default()).unwrap();
        assert_eq!(trail.ledger().len(), 1);
        assert_eq!(trail.ledger().records()[0].author, ca.address());
        assert_eq!(trail.ca(), ca.address());
        assert!(trail.resolve_did(&ca.address()).is_ok());
    }

    #[test]
    fn open_refuses_tampered_chain() {
        let ca = Signer::from_seed([1; 32]);
        let trail = AuditTrail::genesis(Ledger::in_memory(), &ca, TrailConfig::default()).unwrap();
        let mut recs = trail.ledger().records().to_vec();
        recs[0].payload.push(0);
        let err = AuditTrail::open(Ledger::from_records(recs), TrailConfig::default()).unwrap_err();
        assert!(matches!(err, Error::ChainInvalid(0)));
    }

    #[test]
    fn open_refuses_ca_only_records_from_others() {
        let ca = Signer::from_seed([1; 32]);
        let rogue = Signer::from_seed([2; 32]);
        let mut trail = AuditTrail::genesis(Ledger::in_memory(), &ca, TrailConfig::default()).unwrap();
        let did = trail.register_metadata(&rogue, "mem://r").unwrap();
        // bypass the operation layer and append a forged approval directly
        let ev = Event::VcRejected { applicant: did, vc_hash: Hash32([0; 32]) };
        trail.ledger_mut().append(&rogue, ev.kind(), ev.encode()).unwrap();
        let err = AuditTrail::open(trail.ledger().clone(), TrailConfig::default()).unwrap_err();
        assert!(matches!(err, Error::NotAuthorized));
    }
}
