use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{VcStatus, VerifiableCredential};
use crate::ledger::codec::Encoder;
use crate::ledger::{verify_signature, Address, Hash32, Signer};
use crate::trail::AuditTrail;

/// Why a presentation was refused. Checks run in declaration order and the
/// first failure wins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum RejectReason {
    /// No approved credential with this hash (unknown, pending or rejected).
    NotApproved,
    Revoked,
    /// Issuer signature or recomputed hash does not match.
    ForgedOrTampered,
    Expired,
    HolderMismatch,
    BadHolderSignature,
    /// Timestamp outside the replay window.
    Stale,
    Replay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    Accept,
    Reject(RejectReason),
}

impl Verdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, Verdict::Accept)
    }

    pub fn reason(&self) -> Option<RejectReason> {
        match self {
            Verdict::Accept => None,
            Verdict::Reject(r) => Some(*r),
        }
    }
}

mod hex16 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 16], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 16], D::Error> {
        let mut out = [0u8; 16];
        hex::decode_to_slice(String::deserialize(d)?, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

mod hex64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8; 64], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[u8; 64], D::Error> {
        let mut out = [0u8; 64];
        hex::decode_to_slice(String::deserialize(d)?, &mut out).map_err(serde::de::Error::custom)?;
        Ok(out)
    }
}

/// Holder-bound, nonce-protected showing of a credential. The credential
/// body travels with the presentation so the verifier can recompute its hash.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Presentation {
    pub vc_hash: Hash32,
    pub holder: Address,
    #[serde(with = "hex16")]
    pub nonce: [u8; 16],
    pub timestamp: u64,
    #[serde(with = "hex64")]
    pub holder_signature: [u8; 64],
    pub credential: VerifiableCredential,
}

impl Presentation {
    pub fn signing_bytes(vc_hash: &Hash32, holder: &Address, nonce: &[u8; 16], timestamp: u64) -> Vec<u8> {
        let mut e = Encoder::new();
        e.fixed(vc_hash.as_bytes()).fixed(holder.as_bytes()).fixed(nonce).u64(timestamp);
        e.finish()
    }

    pub fn create(holder: &Signer, credential: VerifiableCredential, nonce: [u8; 16], timestamp: u64) -> Self {
        let vc_hash = credential.vc_hash;
        let holder_addr = holder.address();
        let holder_signature =
            holder.sign(&Self::signing_bytes(&vc_hash, &holder_addr, &nonce, timestamp));
        Self { vc_hash, holder: holder_addr, nonce, timestamp, holder_signature, credential }
    }
}

/// Nonces seen by this verifier, with the tick they were first accepted.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct NonceRegistry {
    seen: BTreeMap<String, u64>,
}

impl NonceRegistry {
    pub fn contains(&self, nonce: &[u8; 16]) -> bool {
        self.seen.contains_key(&hex::encode(nonce))
    }

    pub fn insert(&mut self, nonce: &[u8; 16], tick: u64) {
        self.seen.insert(hex::encode(nonce), tick);
    }

    /// Drops nonces that fell out of the window ending at `now`; any
    /// presentation that could reuse them is already stale.
    pub fn prune(&mut self, now: u64, window: u64) {
        self.seen.retain(|_, tick| now.saturating_sub(*tick) <= window);
    }

    pub fn len(&self) -> usize {
        self.seen.len()
    }

    pub fn is_empty(&self) -> bool {
        self.seen.is_empty()
    }
}

impl AuditTrail {
    /// Checks a presentation at logical time `now`. On acceptance the nonce
    /// is marked seen.
    pub fn verify_presentation(&mut self, p: &Presentation, now: u64) -> Verdict {
        let verdict = self.check_presentation(p, now);
        if verdict.is_accept() {
            self.nonces.insert(&p.nonce, now);
        }
        verdict
    }

    fn check_presentation(&self, p: &Presentation, now: u64) -> Verdict {
        use RejectReason::*;
        let vc = &p.credential;

        match self.identity.credential(&p.vc_hash).map(|c| c.status) {
            Some(VcStatus::Approved) => {}
            Some(VcStatus::Revoked) => return Verdict::Reject(Revoked),
            _ => return Verdict::Reject(NotApproved),
        }

        let signed_by_ca = vc.issuer == self.ca
            && vc.vc_hash == p.vc_hash
            && self.identity.public_key(&self.ca).is_some_and(|k| vc.signature_valid(k));
        if !signed_by_ca || vc.recompute_hash() != p.vc_hash {
            return Verdict::Reject(ForgedOrTampered);
        }

        if vc.expires_at.is_some_and(|exp| now > exp) {
            return Verdict::Reject(Expired);
        }

        if p.holder != vc.subject {
            return Verdict::Reject(HolderMismatch);
        }

        let msg = Presentation::signing_bytes(&p.vc_hash, &p.holder, &p.nonce, p.timestamp);
        let holder_ok = self
            .identity
            .public_key(&p.holder)
            .is_some_and(|k| verify_signature(k, &msg, &p.holder_signature));
        if !holder_ok {
            return Verdict::Reject(BadHolderSignature);
        }

        if now.abs_diff(p.timestamp) > self.config.replay_window {
            return Verdict::Reject(Stale);
        }

        if self.nonces.contains(&p.nonce) {
            return Verdict::Reject(Replay);
        }
        Verdict::Accept
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::identity::tests::setup;
    use crate::trail::TrailConfig;
    use crate::ledger::Ledger;

    fn node(n: u8) -> Signer {
        Signer::from_seed([n; 32])
    }

    fn credentialed(t: &mut AuditTrail, ca: &Signer, n: u8) -> VerifiableCredential {
        let did = t.register_metadata(&node(n), "m").unwrap();
        t.request_credential(&node(n), &[("role", "agent")], None).unwrap();
        t.approve_vc(ca, &did).unwrap()
    }

    #[test]
    fn legitimate_presentation_accepted() {
        let (mut t, ca) = setup();
        let vc = credentialed(&mut t, &ca, 1);
        let p = Presentation::create(&node(1), vc, [1; 16], t.now());
        assert_eq!(t.verify_presentation(&p, t.now()), Verdict::Accept);
    }

    #[test]
    fn tampered_claims_rejected() {
        let (mut t, ca) = setup();
        let mut vc = credentialed(&mut t, &ca, 1);
        vc.claims[5] ^= 1;
        let p = Presentation::create(&node(1), vc, [1; 16], t.now());
        assert_eq!(t.verify_presentation(&p, t.now()), Verdict::Reject(RejectReason::ForgedOrTampered));
    }

    #[test]
    fn rogue_issuer_signature_rejected() {
        let (mut t, ca) = setup();
        let mut vc = credentialed(&mut t, &ca, 1);
        vc.issuer_signature = Some(node(50).sign(vc.vc_hash.as_bytes()));
        let p = Presentation::create(&node(1), vc, [1; 16], t.now());
        assert_eq!(t.verify_presentation(&p, t.now()), Verdict::Reject(RejectReason::ForgedOrTampered));
    }

    #[test]
    fn holder_mismatch_rejected() {
        let (mut t, ca) = setup();
        let vc = credentialed(&mut t, &ca, 1);
        t.register_metadata(&node(2), "m").unwrap();
        let p = Presentation::create(&node(2), vc, [1; 16], t.now());
        assert_eq!(t.verify_presentation(&p, t.now()), Verdict::Reject(RejectReason::HolderMismatch));
    }

    #[test]
    fn impersonated_holder_signature_rejected() {
        let (mut t, ca) = setup();
        let vc = credentialed(&mut t, &ca, 1);
        let mut p = Presentation::create(&node(2), vc, [1; 16], t.now());
        p.holder = node(1).address();
        assert_eq!(t.verify_presentation(&p, t.now()), Verdict::Reject(RejectReason::BadHolderSignature));
    }

    #[test]
    fn replayed_nonce_rejected() {
        let (mut t, ca) = setup();
        let vc = credentialed(&mut t, &ca, 1);
        let p = Presentation::create(&node(1), vc, [1; 16], t.now());
        assert!(t.verify_presentation(&p, t.now()).is_accept());
        assert_eq!(t.verify_presentation(&p, t.now()), Verdict::Reject(RejectReason::Replay));
    }

    #[test]
    fn revoked_rejected() {
        let (mut t, ca) = setup();
        let vc = credentialed(&mut t, &ca, 1);
        t.revoke_vc(&ca, &vc.vc_hash).unwrap();
        let p = Presentation::create(&node(1), vc, [1; 16], t.now());
        assert_eq!(t.verify_presentation(&p, t.now()), Verdict::Reject(RejectReason::Revoked));
    }

    #[test]
    fn rejected_application_not_approved() {
        let (mut t, ca) = setup();
        let did = t.register_metadata(&node(1), "m").unwrap();
        let draft = t.request_credential(&node(1), &[("a", "b")], None).unwrap();
        t.reject_vc(&ca, &did).unwrap();
        // oracle: status table says Rejected, so any presentation of it is refused
        assert_eq!(t.identity().applications()[0].status, VcStatus::Rejected);
        let p = Presentation::create(&node(1), draft, [1; 16], t.now());
        assert_eq!(t.verify_presentation(&p, t.now()), Verdict::Reject(RejectReason::NotApproved));
    }

    #[test]
    fn stale_and_expired() {
        let (mut t, ca) = setup();
        let vc = credentialed(&mut t, &ca, 1);
        let p = Presentation::create(&node(1), vc.clone(), [1; 16], t.now());
        let late = t.now() + t.config().replay_window + 1;
        assert_eq!(t.verify_presentation(&p, late), Verdict::Reject(RejectReason::Stale));

        let did = t.register_metadata(&node(2), "m").unwrap();
        let exp = t.now() + 5;
        t.request_credential(&node(2), &[("a", "b")], Some(exp)).unwrap();
        let vc2 = t.approve_vc(&ca, &did).unwrap();
        let p2 = Presentation::create(&node(2), vc2, [2; 16], exp + 1);
        assert_eq!(t.verify_presentation(&p2, exp + 1), Verdict::Reject(RejectReason::Expired));
    }

    #[test]
    fn zero_window_makes_delayed_replay_stale() {
        let ca = Signer::from_seed([100; 32]);
        let cfg = TrailConfig { replay_window: 0, ..TrailConfig::default() };
        let mut t = AuditTrail::genesis(Ledger::in_memory(), &ca, cfg).unwrap();
        let vc = credentialed(&mut t, &ca, 1);
        let p = Presentation::create(&node(1), vc, [1; 16], t.now());
        assert!(t.verify_presentation(&p, t.now()).is_accept());
        assert_eq!(t.verify_presentation(&p, t.now() + 1), Verdict::Reject(RejectReason::Stale));
    }

    #[test]
    fn first_failure_wins() {
        let (mut t, ca) = setup();
        let mut vc = credentialed(&mut t, &ca, 1);
        t.revoke_vc(&ca, &vc.vc_hash).unwrap();
        vc.claims[0] ^= 1;
        let p = Presentation::create(&node(2), vc, [1; 16], 0);
        assert_eq!(t.verify_presentation(&p, 10_000), Verdict::Reject(RejectReason::Revoked));
    }

    #[test]
    fn nonce_pruning() {
        let mut reg = NonceRegistry::default();
        reg.insert(&[1; 16], 10);
        reg.insert(&[2; 16], 400);
        reg.prune(420, 300);
        assert!(!reg.contains(&[1; 16]));
        assert!(reg.contains(&[2; 16]));
    }

    #[test]
    fn presentation_json_round_trip() {
        let (mut t, ca) = setup();
        let vc = credentialed(&mut t, &ca, 1);
        let p = Presentation::create(&node(1), vc, [7; 16], 3);
        let text = serde_json::to_string(&p).unwrap();
        assert_eq!(serde_json::from_str::<Presentation>(&text).unwrap(), p);
    }
}
