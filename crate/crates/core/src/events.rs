//! Typed record bodies. Each ledger [`RecordKind`] has exactly one payload
//! shape, encoded canonically in field order.

use crate::error::{Error, Result};
use crate::identity::NodeType;
use crate::ledger::codec::{Decoder, Encoder};
use crate::ledger::{Address, Hash32, RecordKind};
use crate::risk::{Beta, Erl};
use crate::trajectory::TrajectoryId;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Registration {
    pub did: Address,
    pub node_type: NodeType,
    pub functionality: String,
    pub owner: Address,
    pub metadata_uri: String,
    pub erl: Erl,
    pub beta: Beta,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProfileChange {
    pub did: Address,
    pub version: u64,
    pub erl: Option<Erl>,
    pub beta: Option<Beta>,
    pub functionality: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionBody {
    pub trajectory_id: TrajectoryId,
    pub caller: Address,
    pub callee: Address,
    pub action_type: String,
    pub interaction_hash: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReceiptBody {
    pub trajectory_id: TrajectoryId,
    pub callee: Address,
    pub caller: Address,
    pub interaction_hash: Hash32,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReportBody {
    pub t0: u64,
    pub t1: u64,
    pub trajectory_ids: Option<Vec<TrajectoryId>>,
    pub suspected: Option<Vec<Address>>,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    MetadataRegistered(Registration),
    VcApplied { applicant: Address, vc_hash: Hash32, vc_uri: String },
    VcApproved {
        applicant: Address,
        vc_hash: Hash32,
        vc_uri: String,
        expires_at: Option<u64>,
        issuer_signature: [u8; 64],
    },
    VcRejected { applicant: Address, vc_hash: Hash32 },
    VcRevoked { vc_hash: Hash32, subject: Address },
    TrajectoryIssued { trajectory_id: TrajectoryId, requester: Address },
    InteractionLogged(InteractionBody),
    ReceiptLogged(ReceiptBody),
    ProfileUpdated(ProfileChange),
    RiskReportFiled(ReportBody),
    ErlUpdated { did: Address, old: Erl, new: Erl, hops: u32 },
}

fn put_addr(e: &mut Encoder, a: &Address) {
    e.fixed(a.as_bytes());
}

fn get_addr(d: &mut Decoder<'_>) -> Result<Address> {
    Ok(Address(d.array()?))
}

fn get_erl(d: &mut Decoder<'_>) -> Result<Erl> {
    Erl::new(d.u8()?)
}

fn get_beta(d: &mut Decoder<'_>) -> Result<Beta> {
    Beta::from_per_mille(d.u16()?)
}

fn put_list<T>(e: &mut Encoder, items: &[T], put: impl Fn(&mut Encoder, &T)) {
    e.u32(items.len() as u32);
    for item in items {
        put(e, item);
    }
}

fn get_list<T>(d: &mut Decoder<'_>, get: impl Fn(&mut Decoder<'_>) -> Result<T>) -> Result<Vec<T>> {
    let n = d.u32()?;
    (0..n).map(|_| get(d)).collect()
}

impl Event {
    pub fn kind(&self) -> RecordKind {
        match self {
            Event::MetadataRegistered(_) => RecordKind::MetadataRegistered,
            Event::VcApplied { .. } => RecordKind::VcApplied,
            Event::VcApproved { .. } => RecordKind::VcApproved,
            Event::VcRejected { .. } => RecordKind::VcRejected,
            Event::VcRevoked { .. } => RecordKind::VcRevoked,
            Event::TrajectoryIssued { .. } => RecordKind::TrajectoryIssued,
            Event::InteractionLogged(_) => RecordKind::InteractionLogged,
            Event::ReceiptLogged(_) => RecordKind::ReceiptLogged,
            Event::ProfileUpdated(_) => RecordKind::ProfileUpdated,
            Event::RiskReportFiled(_) => RecordKind::RiskReportFiled,
            Event::ErlUpdated { .. } => RecordKind::ErlUpdated,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut e = Encoder::new();
        match self {
            Event::MetadataRegistered(r) => {
                put_addr(&mut e, &r.did);
                e.u8(r.node_type as u8).text(&r.functionality);
                put_addr(&mut e, &r.owner);
                e.text(&r.metadata_uri).u8(r.erl.level()).u16(r.beta.per_mille());
            }
            Event::VcApplied { applicant, vc_hash, vc_uri } => {
                put_addr(&mut e, applicant);
                e.fixed(vc_hash.as_bytes()).text(vc_uri);
            }
            Event::VcApproved { applicant, vc_hash, vc_uri, expires_at, issuer_signature } => {
                put_addr(&mut e, applicant);
                e.fixed(vc_hash.as_bytes())
                    .text(vc_uri)
                    .option(*expires_at, |e, t| {
                        e.u64(t);
                    })
                    .fixed(issuer_signature);
            }
            Event::VcRejected { applicant, vc_hash } => {
                put_addr(&mut e, applicant);
                e.fixed(vc_hash.as_bytes());
            }
            Event::VcRevoked { vc_hash, subject } => {
                e.fixed(vc_hash.as_bytes());
                put_addr(&mut e, subject);
            }
            Event::TrajectoryIssued { trajectory_id, requester } => {
                e.fixed(&trajectory_id.0);
                put_addr(&mut e, requester);
            }
            Event::InteractionLogged(b) => {
                e.fixed(&b.trajectory_id.0);
                put_addr(&mut e, &b.caller);
                put_addr(&mut e, &b.callee);
                e.text(&b.action_type).fixed(b.interaction_hash.as_bytes());
            }
            Event::ReceiptLogged(b) => {
                e.fixed(&b.trajectory_id.0);
                put_addr(&mut e, &b.callee);
                put_addr(&mut e, &b.caller);
                e.fixed(b.interaction_hash.as_bytes());
            }
            Event::ProfileUpdated(c) => {
                put_addr(&mut e, &c.did);
                e.u64(c.version)
                    .option(c.erl, |e, v| {
                        e.u8(v.level());
                    })
                    .option(c.beta, |e, v| {
                        e.u16(v.per_mille());
                    })
                    .option(c.functionality.as_deref(), |e, v| {
                        e.text(v);
                    });
            }
            Event::RiskReportFiled(r) => {
                e.u64(r.t0).u64(r.t1);
                e.option(r.trajectory_ids.as_deref(), |e, ids| {
                    put_list(e, ids, |e, id| {
                        e.fixed(&id.0);
                    })
                });
                e.option(r.suspected.as_deref(), |e, dids| put_list(e, dids, put_addr));
                e.text(&r.description);
            }
            Event::ErlUpdated { did, old, new, hops } => {
                put_addr(&mut e, did);
                e.u8(old.level()).u8(new.level()).u32(*hops);
            }
        }
        e.finish()
    }

    pub fn decode(kind: RecordKind, payload: &[u8]) -> Result<Self> {
        let mut d = Decoder::new(payload);
        let d = &mut d;
        let event = match kind {
            RecordKind::MetadataRegistered => Event::MetadataRegistered(Registration {
                did: get_addr(d)?,
                node_type: NodeType::from_u8(d.u8()?)?,
                functionality: d.text()?,
                owner: get_addr(d)?,
                metadata_uri: d.text()?,
                erl: get_erl(d)?,
                beta: get_beta(d)?,
            }),
            RecordKind::VcApplied => Event::VcApplied {
                applicant: get_addr(d)?,
                vc_hash: Hash32(d.array()?),
                vc_uri: d.text()?,
            },
            RecordKind::VcApproved => Event::VcApproved {
                applicant: get_addr(d)?,
                vc_hash: Hash32(d.array()?),
                vc_uri: d.text()?,
                expires_at: d.option(|d| d.u64())?,
                issuer_signature: d.array()?,
            },
            RecordKind::VcRejected => {
                Event::VcRejected { applicant: get_addr(d)?, vc_hash: Hash32(d.array()?) }
            }
            RecordKind::VcRevoked => {
                Event::VcRevoked { vc_hash: Hash32(d.array()?), subject: get_addr(d)? }
            }
            RecordKind::TrajectoryIssued => Event::TrajectoryIssued {
                trajectory_id: TrajectoryId(d.array()?),
                requester: get_addr(d)?,
            },
            RecordKind::InteractionLogged => Event::InteractionLogged(InteractionBody {
                trajectory_id: TrajectoryId(d.array()?),
                caller: get_addr(d)?,
                callee: get_addr(d)?,
                action_type: d.text()?,
                interaction_hash: Hash32(d.array()?),
            }),
            RecordKind::ReceiptLogged => Event::ReceiptLogged(ReceiptBody {
                trajectory_id: TrajectoryId(d.array()?),
                callee: get_addr(d)?,
                caller: get_addr(d)?,
                interaction_hash: Hash32(d.array()?),
            }),
            RecordKind::ProfileUpdated => Event::ProfileUpdated(ProfileChange {
                did: get_addr(d)?,
                version: d.u64()?,
                erl: d.option(get_erl)?,
                beta: d.option(get_beta)?,
                functionality: d.option(|d| d.text())?,
            }),
            RecordKind::RiskReportFiled => Event::RiskReportFiled(ReportBody {
                t0: d.u64()?,
                t1: d.u64()?,
                trajectory_ids: d.option(|d| get_list(d, |d| Ok(TrajectoryId(d.array()?))))?,
                suspected: d.option(|d| get_list(d, get_addr))?,
                description: d.text()?,
            }),
            RecordKind::ErlUpdated => Event::ErlUpdated {
                did: get_addr(d)?,
                old: get_erl(d)?,
                new: get_erl(d)?,
                hops: d.u32()?,
            },
        };
        if !d.is_empty() {
            return Err(Error::Decode(format!("trailing bytes in {kind:?} payload")));
        }
        Ok(event)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn addr(n: u8) -> Address {
        Address([n; 32])
    }

    fn samples() -> Vec<Event> {
        let tid = TrajectoryId([9; 16]);
        vec![
            Event::MetadataRegistered(Registration {
                did: addr(1),
                node_type: NodeType::McpServer,
                functionality: "tools".into(),
                owner: addr(2),
                metadata_uri: "mem://m1".into(),
                erl: Erl::new(3).unwrap(),
                beta: Beta::from_per_mille(250).unwrap(),
            }),
            Event::VcApplied { applicant: addr(1), vc_hash: Hash32([4; 32]), vc_uri: "u".into() },
            Event::VcApproved {
                applicant: addr(1),
                vc_hash: Hash32([4; 32]),
                vc_uri: "u".into(),
                expires_at: Some(99),
                issuer_signature: [7; 64],
            },
            Event::VcRejected { applicant: addr(1), vc_hash: Hash32([4; 32]) },
            Event::VcRevoked { vc_hash: Hash32([4; 32]), subject: addr(1) },
            Event::TrajectoryIssued { trajectory_id: tid, requester: addr(1) },
            Event::InteractionLogged(InteractionBody {
                trajectory_id: tid,
                caller: addr(1),
                callee: addr(2),
                action_type: "request".into(),
                interaction_hash: Hash32([5; 32]),
            }),
            Event::ReceiptLogged(ReceiptBody {
                trajectory_id: tid,
                callee: addr(2),
                caller: addr(1),
                interaction_hash: Hash32([5; 32]),
            }),
            Event::ProfileUpdated(ProfileChange {
                did: addr(1),
                version: 2,
                erl: None,
                beta: Some(Beta::from_per_mille(1000).unwrap()),
                functionality: Some("x".into()),
            }),
            Event::RiskReportFiled(ReportBody {
                t0: 1,
                t1: 5,
                trajectory_ids: Some(vec![tid]),
                suspected: None,
                description: "leak".into(),
            }),
            Event::ErlUpdated {
                did: addr(3),
                old: Erl::ZERO,
                new: Erl::new(4).unwrap(),
                hops: 1,
            },
        ]
    }

    #[test]
    fn every_kind_round_trips() {
        for ev in samples() {
            let bytes = ev.encode();
            assert_eq!(Event::decode(ev.kind(), &bytes).unwrap(), ev);
        }
    }

    #[test]
    fn trajectory_kinds_lead_with_the_id() {
        for ev in samples().into_iter().filter(|e| e.kind().carries_trajectory()) {
            assert_eq!(&ev.encode()[..16], &[9u8; 16]);
        }
    }

    #[test]
    fn out_of_range_erl_rejected_on_decode() {
        let mut bytes = Event::ErlUpdated { did: addr(1), old: Erl::ZERO, new: Erl::ZERO, hops: 0 }
            .encode();
        bytes[32] = 11;
        assert!(Event::decode(RecordKind::ErlUpdated, &bytes).is_err());
    }

    proptest! {
        #[test]
        fn interaction_round_trip(action in ".{0,40}", h in any::<[u8; 32]>(), t in any::<[u8; 16]>()) {
            let ev = Event::InteractionLogged(InteractionBody {
                trajectory_id: TrajectoryId(t),
                caller: addr(1),
                callee: addr(2),
                action_type: action,
                interaction_hash: Hash32(h),
            });
            prop_assert_eq!(Event::decode(ev.kind(), &ev.encode()).unwrap(), ev);
        }
    }
}
