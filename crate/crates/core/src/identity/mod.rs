//! DID documents and the credential lifecycle.
//!
//! A credential moves through `Pending -> Approved -> Revoked` or
//! `Pending -> Rejected`; nothing else. Only the hash and locator of a
//! credential go on the ledger, the JSON body lives in the off-ledger store.

mod presentation;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use presentation::{NonceRegistry, Presentation, RejectReason, Verdict};

use crate::error::{Error, Result};
use crate::events::{Event, ProfileChange, Registration};
use crate::ledger::codec::{Decoder, Encoder};
use crate::ledger::{verify_signature, Address, Hash32, LedgerRecord, Signer};
use crate::risk::{Beta, Erl};
use crate::trail::AuditTrail;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[repr(u8)]
pub enum NodeType {
    AiAgent = 0,
    LargeLanguageModel = 1,
    McpServer = 2,
    DataProcessingModule = 3,
    DecisionSupportSystem = 4,
    SensorInterface = 5,
}

impl NodeType {
    pub const ALL: [NodeType; 6] = [
        NodeType::AiAgent,
        NodeType::LargeLanguageModel,
        NodeType::McpServer,
        NodeType::DataProcessingModule,
        NodeType::DecisionSupportSystem,
        NodeType::SensorInterface,
    ];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| Error::Decode(format!("unknown node type {v}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct DidDocument {
    pub did: Address,
    pub node_type: NodeType,
    pub functionality: String,
    pub owner: Address,
    pub version: u64,
    pub metadata_uri: String,
    /// Approved, unrevoked credentials whose subject is this DID.
    pub capabilities: Vec<Hash32>,
    pub erl: Erl,
    pub beta: Beta,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VcStatus {
    Pending,
    Approved,
    Rejected,
    Revoked,
}

impl VcStatus {
    pub fn can_become(self, next: VcStatus) -> bool {
        matches!(
            (self, next),
            (VcStatus::Pending, VcStatus::Approved)
                | (VcStatus::Pending, VcStatus::Rejected)
                | (VcStatus::Approved, VcStatus::Revoked)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct VcApplication {
    pub id: u64,
    pub applicant: Address,
    pub vc_hash: Hash32,
    pub vc_uri: String,
    pub status: VcStatus,
}

/// Issuer-side view of a credential as recorded on the ledger.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CredentialRecord {
    pub subject: Address,
    pub vc_uri: String,
    pub status: VcStatus,
    pub expires_at: Option<u64>,
    pub issuer_signature: [u8; 64],
    pub approved_at: u64,
    pub approved_index: u64,
    pub revoked: Option<(u64, u64)>,
}

/// Claims are stored as canonical bytes: a count, then length-prefixed
/// UTF-8 key and value pairs in the order given.
pub fn encode_claims<K: AsRef<str>, V: AsRef<str>>(pairs: &[(K, V)]) -> Vec<u8> {
    let mut e = Encoder::new();
    e.u32(pairs.len() as u32);
    for (k, v) in pairs {
        e.text(k.as_ref()).text(v.as_ref());
    }
    e.finish()
}

pub fn decode_claims(bytes: &[u8]) -> Result<Vec<(String, String)>> {
    let mut d = Decoder::new(bytes);
    let n = d.u32()?;
    let pairs = (0..n).map(|_| Ok((d.text()?, d.text()?))).collect::<Result<Vec<_>>>()?;
    d.finish()?;
    Ok(pairs)
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        hex::decode(String::deserialize(d)?).map_err(serde::de::Error::custom)
    }
}

mod hex_sig {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<[u8; 64]>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(sig) => s.serialize_some(&hex::encode(sig)),
            None => s.serialize_none(),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<[u8; 64]>, D::Error> {
        let Some(text) = Option::<String>::deserialize(d)? else {
            return Ok(None);
        };
        let mut out = [0u8; 64];
        hex::decode_to_slice(text, &mut out).map_err(serde::de::Error::custom)?;
        Ok(Some(out))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct VerifiableCredential {
    pub issuer: Address,
    pub subject: Address,
    #[serde(with = "hex_bytes")]
    pub claims: Vec<u8>,
    pub issued_at: u64,
    pub expires_at: Option<u64>,
    pub vc_hash: Hash32,
    pub vc_uri: String,
    #[serde(with = "hex_sig", default)]
    pub issuer_signature: Option<[u8; 64]>,
}

impl VerifiableCredential {
    /// Unsigned credential body; the applicant submits its hash for approval.
    pub fn draft(
        issuer: Address,
        subject: Address,
        claims: Vec<u8>,
        issued_at: u64,
        expires_at: Option<u64>,
    ) -> Self {
        let vc_hash = Self::compute_hash(&issuer, &subject, &claims, issued_at, expires_at);
        Self {
            issuer,
            subject,
            claims,
            issued_at,
            expires_at,
            vc_hash,
            vc_uri: format!("vc://{}", vc_hash.to_hex()),
            issuer_signature: None,
        }
    }

    pub fn compute_hash(
        issuer: &Address,
        subject: &Address,
        claims: &[u8],
        issued_at: u64,
        expires_at: Option<u64>,
    ) -> Hash32 {
        let mut e = Encoder::new();
        e.fixed(issuer.as_bytes())
            .fixed(subject.as_bytes())
            .bytes(claims)
            .u64(issued_at)
            .option(expires_at, |e, t| {
                e.u64(t);
            });
        Hash32::of(e.as_slice())
    }

    pub fn recompute_hash(&self) -> Hash32 {
        Self::compute_hash(&self.issuer, &self.subject, &self.claims, self.issued_at, self.expires_at)
    }

    pub fn signature_valid(&self, issuer_key: &[u8; 32]) -> bool {
        self.issuer_signature
            .is_some_and(|sig| verify_signature(issuer_key, self.vc_hash.as_bytes(), &sig))
    }
}

/// Requested profile changes; values are validated against their ranges.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ProfileUpdate {
    pub erl: Option<u8>,
    pub beta_per_mille: Option<u16>,
    pub functionality: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RegistrationRequest {
    pub metadata_uri: String,
    pub node_type: NodeType,
    pub functionality: String,
    pub owner: Option<Address>,
}

impl RegistrationRequest {
    pub fn new(metadata_uri: impl Into<String>, node_type: NodeType) -> Self {
        Self {
            metadata_uri: metadata_uri.into(),
            node_type,
            functionality: String::new(),
            owner: None,
        }
    }
}

/// Identity state folded from the ledger.
#[derive(Debug, Clone, Default)]
pub struct IdentityState {
    docs: BTreeMap<Address, DidDocument>,
    keys: BTreeMap<Address, [u8; 32]>,
    applications: Vec<VcApplication>,
    credentials: BTreeMap<Hash32, CredentialRecord>,
}

impl IdentityState {
    pub fn doc(&self, did: &Address) -> Result<&DidDocument> {
        self.docs.get(did).ok_or_else(|| Error::UnknownDid(did.did()))
    }

    pub fn docs(&self) -> impl Iterator<Item = &DidDocument> {
        self.docs.values()
    }

    pub fn public_key(&self, did: &Address) -> Option<&[u8; 32]> {
        self.keys.get(did)
    }

    pub fn applications(&self) -> &[VcApplication] {
        &self.applications
    }

    pub fn credential(&self, vc_hash: &Hash32) -> Option<&CredentialRecord> {
        self.credentials.get(vc_hash)
    }

    pub fn credentials(&self) -> impl Iterator<Item = (&Hash32, &CredentialRecord)> {
        self.credentials.iter()
    }

    pub fn is_revoked(&self, vc_hash: &Hash32) -> bool {
        self.credentials.get(vc_hash).is_some_and(|c| c.status == VcStatus::Revoked)
    }

    /// True when `did` holds an approved, unrevoked, unexpired credential at `tick`.
    pub fn has_valid_credential(&self, did: &Address, tick: u64) -> bool {
        self.docs.get(did).is_some_and(|doc| {
            doc.capabilities.iter().any(|h| {
                self.credentials
                    .get(h)
                    .is_some_and(|c| c.expires_at.is_none_or(|exp| tick <= exp))
            })
        })
    }

    fn pending_for(&self, applicant: &Address) -> Option<&VcApplication> {
        self.applications
            .iter()
            .find(|a| a.applicant == *applicant && a.status == VcStatus::Pending)
    }

    pub(crate) fn validate(&self, author: &Address, ca: &Address, event: &Event) -> Result<()> {
        match event {
            Event::MetadataRegistered(r) => {
                if r.did != *author {
                    return Err(Error::NotAuthorized);
                }
                if self.docs.contains_key(&r.did) {
                    return Err(Error::AlreadyRegistered(r.did));
                }
                if r.owner != r.did {
                    self.doc(&r.owner)?;
                }
                Ok(())
            }
            Event::VcApplied { applicant, vc_hash, .. } => {
                if applicant != author {
                    return Err(Error::NotAuthorized);
                }
                self.doc(applicant)?;
                let duplicate = self
                    .applications
                    .iter()
                    .any(|a| a.vc_hash == *vc_hash && a.status == VcStatus::Pending)
                    || self.credentials.contains_key(vc_hash);
                if duplicate {
                    return Err(Error::DuplicateApplication);
                }
                Ok(())
            }
            Event::VcApproved { applicant, vc_hash, issuer_signature, .. } => {
                if author != ca {
                    return Err(Error::NotAuthorized);
                }
                self.require_pending(applicant, vc_hash)?;
                let ca_key = self.keys.get(ca).ok_or(Error::NotAuthorized)?;
                if !verify_signature(ca_key, vc_hash.as_bytes(), issuer_signature) {
                    return Err(Error::SigningFailure("issuer signature does not verify".into()));
                }
                Ok(())
            }
            Event::VcRejected { applicant, vc_hash } => {
                if author != ca {
                    return Err(Error::NotAuthorized);
                }
                self.require_pending(applicant, vc_hash)
            }
            Event::VcRevoked { vc_hash, subject } => {
                if author != ca {
                    return Err(Error::NotAuthorized);
                }
                match self.credentials.get(vc_hash) {
                    Some(c) if c.status == VcStatus::Approved && c.subject == *subject => Ok(()),
                    _ => Err(Error::UnknownVc(vc_hash.to_hex())),
                }
            }
            Event::ProfileUpdated(change) => {
                let doc = self.doc(&change.did)?;
                if author != ca && *author != doc.owner {
                    return Err(Error::NotAuthorized);
                }
                if change.version != doc.version + 1 {
                    return Err(Error::BadInput(format!(
                        "profile version {} does not follow {}",
                        change.version, doc.version
                    )));
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }

    fn require_pending(&self, applicant: &Address, vc_hash: &Hash32) -> Result<()> {
        match self.pending_for(applicant) {
            Some(app) if app.vc_hash == *vc_hash => Ok(()),
            _ => Err(Error::NoPendingApplication(*applicant)),
        }
    }

    pub(crate) fn apply(&mut self, rec: &LedgerRecord, event: &Event) {
        match event {
            Event::MetadataRegistered(r) => {
                self.keys.insert(r.did, rec.public_key);
                self.docs.insert(
                    r.did,
                    DidDocument {
                        did: r.did,
                        node_type: r.node_type,
                        functionality: r.functionality.clone(),
                        owner: r.owner,
                        version: 1,
                        metadata_uri: r.metadata_uri.clone(),
                        capabilities: Vec::new(),
                        erl: r.erl,
                        beta: r.beta,
                    },
                );
            }
            Event::VcApplied { applicant, vc_hash, vc_uri } => {
                self.applications.push(VcApplication {
                    id: rec.index,
                    applicant: *applicant,
                    vc_hash: *vc_hash,
                    vc_uri: vc_uri.clone(),
                    status: VcStatus::Pending,
                });
            }
            Event::VcApproved { applicant, vc_hash, vc_uri, expires_at, issuer_signature } => {
                self.set_application_status(applicant, vc_hash, VcStatus::Approved);
                self.credentials.insert(
                    *vc_hash,
                    CredentialRecord {
                        subject: *applicant,
                        vc_uri: vc_uri.clone(),
                        status: VcStatus::Approved,
                        expires_at: *expires_at,
                        issuer_signature: *issuer_signature,
                        approved_at: rec.timestamp,
                        approved_index: rec.index,
                        revoked: None,
                    },
                );
                if let Some(doc) = self.docs.get_mut(applicant) {
                    doc.capabilities.push(*vc_hash);
                }
            }
            Event::VcRejected { applicant, vc_hash } => {
                self.set_application_status(applicant, vc_hash, VcStatus::Rejected);
            }
            Event::VcRevoked { vc_hash, subject } => {
                if let Some(c) = self.credentials.get_mut(vc_hash) {
                    c.status = VcStatus::Revoked;
                    c.revoked = Some((rec.timestamp, rec.index));
                }
                for app in self.applications.iter_mut().filter(|a| a.vc_hash == *vc_hash) {
                    if app.status == VcStatus::Approved {
                        app.status = VcStatus::Revoked;
                    }
                }
                if let Some(doc) = self.docs.get_mut(subject) {
                    doc.capabilities.retain(|h| h != vc_hash);
                }
            }
            Event::ProfileUpdated(change) => {
                if let Some(doc) = self.docs.get_mut(&change.did) {
                    doc.version = change.version;
                    if let Some(erl) = change.erl {
                        doc.erl = erl;
                    }
                    if let Some(beta) = change.beta {
                        doc.beta = beta;
                    }
                    if let Some(f) = &change.functionality {
                        doc.functionality = f.clone();
                    }
                }
            }
            _ => {}
        }
    }

    fn set_application_status(&mut self, applicant: &Address, vc_hash: &Hash32, status: VcStatus) {
        if let Some(app) = self.applications.iter_mut().find(|a| {
            a.applicant == *applicant && a.vc_hash == *vc_hash && a.status == VcStatus::Pending
        }) {
            debug_assert!(app.status.can_become(status));
            app.status = status;
        }
    }
}

impl AuditTrail {
    /// Registers `account` with default profile values and the given metadata locator.
    pub fn register_metadata(&mut self, account: &Signer, metadata_uri: &str) -> Result<Address> {
        self.register(account, RegistrationRequest::new(metadata_uri, NodeType::AiAgent))
    }

    pub fn register(&mut self, account: &Signer, req: RegistrationRequest) -> Result<Address> {
        let did = account.address();
        let event = Event::MetadataRegistered(Registration {
            did,
            node_type: req.node_type,
            functionality: req.functionality,
            owner: req.owner.unwrap_or(did),
            metadata_uri: req.metadata_uri,
            erl: self.config.default_erl,
            beta: self.config.default_beta,
        });
        self.commit(account, vec![event])?;
        Ok(did)
    }

    /// Puts a credential body into the off-ledger store under its `vc_uri`.
    pub fn store_credential(&mut self, vc: VerifiableCredential) {
        self.credential_store.insert(vc.vc_uri.clone(), vc);
    }

    pub fn stored_credential(&self, vc_uri: &str) -> Option<&VerifiableCredential> {
        self.credential_store.get(vc_uri)
    }

    /// Returns the application id (the ledger index of the application record).
    pub fn apply_vc(&mut self, account: &Signer, vc_hash: Hash32, vc_uri: &str) -> Result<u64> {
        let event = Event::VcApplied { applicant: account.address(), vc_hash, vc_uri: vc_uri.into() };
        let out = self.commit(account, vec![event])?;
        Ok(out[0].0)
    }

    /// Drafts a credential naming the CA as issuer, stores the body and applies for it.
    pub fn request_credential<K: AsRef<str>, V: AsRef<str>>(
        &mut self,
        account: &Signer,
        claims: &[(K, V)],
        expires_at: Option<u64>,
    ) -> Result<VerifiableCredential> {
        let draft = VerifiableCredential::draft(
            self.ca,
            account.address(),
            encode_claims(claims),
            self.now(),
            expires_at,
        );
        self.apply_vc(account, draft.vc_hash, &draft.vc_uri)?;
        self.store_credential(draft.clone());
        Ok(draft)
    }

    /// CA approval of the applicant's oldest pending application.
    pub fn approve_vc(&mut self, issuer: &Signer, applicant: &Address) -> Result<VerifiableCredential> {
        if issuer.address() != self.ca {
            return Err(Error::NotAuthorized);
        }
        let app = self
            .identity
            .pending_for(applicant)
            .ok_or(Error::NoPendingApplication(*applicant))?
            .clone();
        let mut vc = self
            .credential_store
            .get(&app.vc_uri)
            .cloned()
            .ok_or_else(|| Error::MissingCredentialBody(app.vc_uri.clone()))?;
        if vc.recompute_hash() != app.vc_hash || vc.subject != *applicant || vc.issuer != self.ca {
            return Err(Error::BadInput(format!(
                "stored body at {} does not match the applied hash",
                app.vc_uri
            )));
        }
        let signature = issuer.sign(app.vc_hash.as_bytes());
        self.commit(
            issuer,
            vec![Event::VcApproved {
                applicant: *applicant,
                vc_hash: app.vc_hash,
                vc_uri: app.vc_uri.clone(),
                expires_at: vc.expires_at,
                issuer_signature: signature,
            }],
        )?;
        vc.vc_hash = app.vc_hash;
        vc.issuer_signature = Some(signature);
        self.store_credential(vc.clone());
        Ok(vc)
    }

    pub fn reject_vc(&mut self, issuer: &Signer, applicant: &Address) -> Result<VcStatus> {
        if issuer.address() != self.ca {
            return Err(Error::NotAuthorized);
        }
        let app = self
            .identity
            .pending_for(applicant)
            .ok_or(Error::NoPendingApplication(*applicant))?
            .clone();
        self.commit(issuer, vec![Event::VcRejected { applicant: *applicant, vc_hash: app.vc_hash }])?;
        Ok(VcStatus::Rejected)
    }

    /// Revokes an approved credential. Revoking twice is a no-op that
    /// returns `false`.
    pub fn revoke_vc(&mut self, issuer: &Signer, vc_hash: &Hash32) -> Result<bool> {
        if issuer.address() != self.ca {
            return Err(Error::NotAuthorized);
        }
        let cred = self
            .identity
            .credential(vc_hash)
            .ok_or_else(|| Error::UnknownVc(vc_hash.to_hex()))?;
        match cred.status {
            VcStatus::Revoked => Ok(false),
            VcStatus::Approved => {
                let subject = cred.subject;
                self.commit(issuer, vec![Event::VcRevoked { vc_hash: *vc_hash, subject }])?;
                Ok(true)
            }
            _ => Err(Error::UnknownVc(vc_hash.to_hex())),
        }
    }

    pub fn resolve_did(&self, did: &Address) -> Result<DidDocument> {
        self.identity.doc(did).cloned()
    }

    pub fn update_profile(&mut self, authority: &Signer, did: &Address, changes: ProfileUpdate) -> Result<u64> {
        let doc = self.identity.doc(did)?;
        let auth = authority.address();
        if auth != self.ca && auth != doc.owner {
            return Err(Error::NotAuthorized);
        }
        let version = doc.version + 1;
        let change = ProfileChange {
            did: *did,
            version,
            erl: changes.erl.map(Erl::new).transpose()?,
            beta: changes.beta_per_mille.map(Beta::from_per_mille).transpose()?,
            functionality: changes.functionality,
        };
        self.commit(authority, vec![Event::ProfileUpdated(change)])?;
        Ok(version)
    }
}
