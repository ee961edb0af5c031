//! Entity risk levels, incident audit and risk diffusion.

pub mod diffuse;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

pub use diffuse::{attenuate, diffuse, Diffusion, LevelUpdate};

use crate::error::{Error, Result};
use crate::events::{Event, ReportBody};
use crate::graph::TrajectoryGraph;
use crate::identity::ProfileUpdate;
use crate::ledger::{Address, Signer};
use crate::trail::AuditTrail;
use crate::trajectory::TrajectoryId;

pub const MAX_ERL: u8 = 10;
pub const BETA_SCALE: u16 = 1000;

/// Entity risk level, 0 (no known risk) through 10.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Erl(u8);

impl Erl {
    pub const ZERO: Erl = Erl(0);
    pub const MAX: Erl = Erl(MAX_ERL);

    pub fn new(level: u8) -> Result<Self> {
        if level > MAX_ERL {
            return Err(Error::RangeViolation(format!("ERL {level} exceeds {MAX_ERL}")));
        }
        Ok(Self(level))
    }

    pub fn level(self) -> u8 {
        self.0
    }
}

impl fmt::Display for Erl {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl Serialize for Erl {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.0)
    }
}

impl<'de> Deserialize<'de> for Erl {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Erl::new(u8::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

/// Attenuation factor in thousandths, so 500 means 0.5.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Beta(u16);

impl Beta {
    pub const ZERO: Beta = Beta(0);
    pub const HALF: Beta = Beta(500);
    pub const ONE: Beta = Beta(BETA_SCALE);

    pub fn from_per_mille(v: u16) -> Result<Self> {
        if v > BETA_SCALE {
            return Err(Error::RangeViolation(format!("beta {v}/1000 exceeds 1")));
        }
        Ok(Self(v))
    }

    pub fn per_mille(self) -> u16 {
        self.0
    }
}

impl Serialize for Beta {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u16(self.0)
    }
}

impl<'de> Deserialize<'de> for Beta {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        Beta::from_per_mille(u16::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RiskReport {
    pub interval: (u64, u64),
    #[serde(default)]
    pub trajectory_ids: Option<BTreeSet<TrajectoryId>>,
    #[serde(default)]
    pub suspected: Option<BTreeSet<Address>>,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EvidenceReason {
    InvalidCredential,
    RevokedCredential,
    MissingReceipt,
    HashMismatch,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Evidence {
    pub reason: EvidenceReason,
    pub ledger_indices: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AuditFinding {
    pub v_risk: BTreeSet<Address>,
    pub evidence: BTreeMap<Address, Vec<Evidence>>,
}

impl AuditFinding {
    fn add(&mut self, did: Address, reason: EvidenceReason, ledger_indices: Vec<u64>) {
        self.v_risk.insert(did);
        let list = self.evidence.entry(did).or_default();
        let ev = Evidence { reason, ledger_indices };
        if !list.contains(&ev) {
            list.push(ev);
            list.sort();
        }
    }
}

pub type DiffusionResult = Diffusion<Address>;

/// `{updates: [{did, oldErl, newErl, hops}]}`
pub fn diffusion_json(result: &DiffusionResult) -> serde_json::Value {
    let updates: Vec<_> = result
        .updates
        .iter()
        .map(|(did, u)| {
            serde_json::json!({
                "did": did,
                "oldErl": u.old,
                "newErl": u.new,
                "hops": u.hops,
            })
        })
        .collect();
    serde_json::json!({ "updates": updates })
}

/// Diffusion over `t_merge` treated as undirected.
pub fn erl_diffuse(
    t_merge: &TrajectoryGraph,
    v_risk: &BTreeSet<Address>,
    erl_of: impl Fn(&Address) -> Erl,
    beta_of: impl Fn(&Address) -> Beta,
) -> Result<DiffusionResult> {
    if let Some(missing) = v_risk.iter().find(|d| !t_merge.nodes.contains(d)) {
        return Err(Error::UnknownNode(missing.did()));
    }
    Ok(diffuse(&t_merge.neighbors(), v_risk, erl_of, beta_of))
}

impl AuditTrail {
    pub fn file_report(&mut self, auditor: &Signer, report: &RiskReport) -> Result<u64> {
        let body = ReportBody {
            t0: report.interval.0,
            t1: report.interval.1,
            trajectory_ids: report.trajectory_ids.as_ref().map(|s| s.iter().copied().collect()),
            suspected: report.suspected.as_ref().map(|s| s.iter().copied().collect()),
            description: report.description.clone(),
        };
        Ok(self.commit(auditor, vec![Event::RiskReportFiled(body)])?[0].0)
    }

    /// Builds the merged graph for the report and picks the suspects.
    pub fn mark_suspects(&self, report: &RiskReport) -> Result<(TrajectoryGraph, BTreeSet<Address>)> {
        let (t0, t1) = report.interval;
        let mut graph = self.restore_interval(t0, t1)?;
        if let Some(ids) = &report.trajectory_ids {
            graph = graph.restrict_to(ids);
        }
        let suspects = match &report.suspected {
            Some(s) => s.clone(),
            None => graph.nodes.clone(),
        };
        Ok((graph, suspects))
    }

    /// Whether `did` held an approved, not-yet-revoked, unexpired credential at `tick`.
    fn credential_valid_at(&self, did: &Address, tick: u64) -> bool {
        self.identity.credentials().any(|(_, c)| {
            c.subject == *did
                && c.approved_at <= tick
                && c.revoked.is_none_or(|(at, _)| at > tick)
                && c.expires_at.is_none_or(|exp| tick <= exp)
        })
    }

    /// Reviews each suspect against credential history and trajectory
    /// reconciliation within the interval.
    pub fn audit_suspects(
        &self,
        t_merge: &TrajectoryGraph,
        v_suspect: &BTreeSet<Address>,
        interval: (u64, u64),
    ) -> Result<AuditFinding> {
        let (t0, t1) = interval;
        let in_window = |t: u64| (t0..=t1).contains(&t);
        let mut finding = AuditFinding::default();
        let suspects: BTreeSet<Address> = v_suspect.intersection(&t_merge.nodes).copied().collect();

        for did in &suspects {
            let revocations: Vec<(u64, u64)> = self
                .identity
                .credentials()
                .filter(|(_, c)| c.subject == *did)
                .filter_map(|(_, c)| c.revoked)
                .collect();
            for (at, idx) in &revocations {
                if in_window(*at) {
                    finding.add(*did, EvidenceReason::RevokedCredential, vec![*idx]);
                }
            }
            for edge in t_merge.edges.iter().filter(|e| e.caller == *did || e.callee == *did) {
                if !in_window(edge.timestamp) || self.credential_valid_at(did, edge.timestamp) {
                    continue;
                }
                let prior: Vec<u64> = revocations
                    .iter()
                    .filter(|(at, _)| *at <= edge.timestamp)
                    .map(|(_, idx)| *idx)
                    .collect();
                if prior.is_empty() {
                    finding.add(*did, EvidenceReason::InvalidCredential, vec![edge.ledger_index]);
                } else {
                    let mut idx = prior;
                    idx.push(edge.ledger_index);
                    finding.add(*did, EvidenceReason::RevokedCredential, idx);
                }
            }
        }

        for id in &t_merge.trajectory_ids {
            let report = self.reconcile(id)?;
            for missing in &report.missing_receipt {
                let callee = missing.event.callee;
                if suspects.contains(&callee) && in_window(missing.event.timestamp) {
                    finding.add(callee, EvidenceReason::MissingReceipt, vec![missing.ledger_index]);
                }
            }
            for pair in &report.hash_mismatch {
                let event_ts = self.ledger.get(pair.event_index).map_or(0, |r| r.timestamp);
                if suspects.contains(&pair.callee) && in_window(event_ts) {
                    finding.add(
                        pair.callee,
                        EvidenceReason::HashMismatch,
                        vec![pair.event_index, pair.receipt_index],
                    );
                }
            }
        }
        Ok(finding)
    }

    /// Diffusion using the ERL and β currently recorded in DID documents.
    pub fn erl_diffuse(&self, t_merge: &TrajectoryGraph, v_risk: &BTreeSet<Address>) -> Result<DiffusionResult> {
        let erl_of = |d: &Address| self.identity.doc(d).map_or(Erl::ZERO, |doc| doc.erl);
        let beta_of = |d: &Address| self.identity.doc(d).map_or(Beta::ZERO, |doc| doc.beta);
        erl_diffuse(t_merge, v_risk, erl_of, beta_of)
    }

    /// Writes one `ErlUpdated` record and one profile update per changed DID.
    pub fn apply_updates(&mut self, authority: &Signer, result: &DiffusionResult) -> Result<Vec<u64>> {
        if authority.address() != self.ca {
            return Err(Error::NotAuthorized);
        }
        let mut indices = Vec::new();
        for (did, u) in &result.updates {
            let out = self.commit(
                authority,
                vec![Event::ErlUpdated { did: *did, old: u.old, new: u.new, hops: u.hops }],
            )?;
            indices.push(out[0].0);
            self.update_profile(authority, did, ProfileUpdate { erl: Some(u.new.level()), ..Default::default() })?;
            indices.push(self.ledger.len() as u64 - 1);
        }
        Ok(indices)
    }
}
