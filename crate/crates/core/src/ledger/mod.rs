//! Append-only, hash-chained, signed record log.
//!
//! Every state transition in the system is a [`LedgerRecord`]. Records form a
//! single flat chain: each one commits to its predecessor's hash and is signed
//! by its author. The public key travels with the record so a verifier can
//! check both the signature and that `author` is the key's address.

mod address;
pub mod codec;

use std::fs::{File, OpenOptions};
use std::io::{BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

pub use address::{
    derive_address, sha256, verify_signature, verify_signatures, Address, Hash32, Signer, PUBLIC_KEY_LEN,
    SIGNATURE_LEN,
};
use codec::{Decoder, Encoder};

use crate::error::{Error, Result};
use crate::trajectory::TrajectoryId;

/// prev_hash of record 0.
pub const GENESIS_HASH: Hash32 = Hash32::ZERO;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
#[repr(u8)]
pub enum RecordKind {
    MetadataRegistered = 0,
    VcApplied = 1,
    VcApproved = 2,
    VcRejected = 3,
    VcRevoked = 4,
    TrajectoryIssued = 5,
    InteractionLogged = 6,
    ReceiptLogged = 7,
    ProfileUpdated = 8,
    RiskReportFiled = 9,
    ErlUpdated = 10,
}

impl RecordKind {
    pub const ALL: [RecordKind; 11] = [
        RecordKind::MetadataRegistered,
        RecordKind::VcApplied,
        RecordKind::VcApproved,
        RecordKind::VcRejected,
        RecordKind::VcRevoked,
        RecordKind::TrajectoryIssued,
        RecordKind::InteractionLogged,
        RecordKind::ReceiptLogged,
        RecordKind::ProfileUpdated,
        RecordKind::RiskReportFiled,
        RecordKind::ErlUpdated,
    ];

    pub fn from_u8(v: u8) -> Result<Self> {
        Self::ALL
            .get(v as usize)
            .copied()
            .ok_or_else(|| Error::Decode(format!("unknown record kind {v}")))
    }

    /// Kinds whose payload begins with a 16-byte trajectory id.
    pub fn carries_trajectory(self) -> bool {
        matches!(
            self,
            RecordKind::TrajectoryIssued | RecordKind::InteractionLogged | RecordKind::ReceiptLogged
        )
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerRecord {
    pub index: u64,
    pub kind: RecordKind,
    pub author: Address,
    pub public_key: [u8; 32],
    pub payload: Vec<u8>,
    pub timestamp: u64,
    pub prev_hash: Hash32,
    pub record_hash: Hash32,
    pub signature: [u8; 64],
}

impl LedgerRecord {
    /// SHA-256 over the canonical encoding of
    /// `(index, kind, author, payload, timestamp, prev_hash)`.
    pub fn compute_hash(
        index: u64,
        kind: RecordKind,
        author: &Address,
        payload: &[u8],
        timestamp: u64,
        prev_hash: &Hash32,
    ) -> Hash32 {
        let mut enc = Encoder::new();
        enc.u64(index)
            .u8(kind as u8)
            .fixed(author.as_bytes())
            .bytes(payload)
            .u64(timestamp)
            .fixed(prev_hash.as_bytes());
        Hash32::of(enc.as_slice())
    }

    pub fn recompute_hash(&self) -> Hash32 {
        Self::compute_hash(
            self.index,
            self.kind,
            &self.author,
            &self.payload,
            self.timestamp,
            &self.prev_hash,
        )
    }

    pub fn trajectory_id(&self) -> Option<TrajectoryId> {
        if !self.kind.carries_trajectory() {
            return None;
        }
        let bytes: [u8; 16] = self.payload.get(..16)?.try_into().ok()?;
        Some(TrajectoryId(bytes))
    }

    pub fn encode(&self, enc: &mut Encoder) {
        enc.u64(self.index)
            .u8(self.kind as u8)
            .fixed(self.author.as_bytes())
            .fixed(&self.public_key)
            .bytes(&self.payload)
            .u64(self.timestamp)
            .fixed(self.prev_hash.as_bytes())
            .fixed(self.record_hash.as_bytes())
            .fixed(&self.signature);
    }

    pub fn decode(dec: &mut Decoder<'_>) -> Result<Self> {
        Ok(Self {
            index: dec.u64()?,
            kind: RecordKind::from_u8(dec.u8()?)?,
            author: Address(dec.array()?),
            public_key: dec.array()?,
            payload: dec.bytes()?,
            timestamp: dec.u64()?,
            prev_hash: Hash32(dec.array()?),
            record_hash: Hash32(dec.array()?),
            signature: dec.array()?,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut enc = Encoder::new();
        self.encode(&mut enc);
        enc.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut dec = Decoder::new(bytes);
        let rec = Self::decode(&mut dec)?;
        dec.finish()?;
        Ok(rec)
    }

    /// Inspection view with hex-encoded binary fields.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "index": self.index,
            "kind": self.kind,
            "author": self.author,
            "publicKey": hex::encode(self.public_key),
            "payload": hex::encode(&self.payload),
            "timestamp": self.timestamp,
            "prevHash": self.prev_hash,
            "recordHash": self.record_hash,
            "signature": hex::encode(self.signature),
        })
    }

    /// Everything but the signature; a malformed key surfaces there.
    fn check_structure(&self, position: usize, prev: Option<&LedgerRecord>) -> bool {
        let expected_prev = prev.map_or(GENESIS_HASH, |p| p.record_hash);
        self.index == position as u64
            && self.prev_hash == expected_prev
            && prev.is_none_or(|p| self.timestamp >= p.timestamp)
            && self.recompute_hash() == self.record_hash
            && Address(sha256(&self.public_key)) == self.author
    }

    fn signature_valid(&self) -> bool {
        verify_signature(&self.public_key, self.record_hash.as_bytes(), &self.signature)
    }
}

/// Stand-in for block time; advanced once per append.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LogicalClock {
    current: u64,
}

impl LogicalClock {
    pub fn now(&self) -> u64 {
        self.current
    }

    fn tick(&mut self) -> u64 {
        self.current += 1;
        self.current
    }

    pub fn set(&mut self, t: u64) -> Result<()> {
        if t < self.current {
            return Err(Error::ClockRegression { current: self.current, requested: t });
        }
        self.current = t;
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ChainReport {
    pub valid: bool,
    pub first_bad_index: Option<u64>,
    pub length: u64,
}

/// Checks every record invariant and reports the lowest violating position.
pub fn verify_records(records: &[LedgerRecord]) -> ChainReport {
    let broken = records
        .iter()
        .enumerate()
        .position(|(i, rec)| !rec.check_structure(i, i.checked_sub(1).map(|p| &records[p])));
    // signatures before the first structural break are checked as one batch,
    // falling back to a linear scan to locate a failure
    let prefix = &records[..broken.unwrap_or(records.len())];
    let triples: Vec<_> = prefix
        .iter()
        .map(|r| (&r.public_key, r.record_hash.as_bytes().as_slice(), &r.signature))
        .collect();
    let bad = if verify_signatures(&triples) {
        broken
    } else {
        prefix.iter().position(|r| !r.signature_valid())
    }
    .map(|i| i as u64);
    ChainReport { valid: bad.is_none(), first_bad_index: bad, length: records.len() as u64 }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RecordFilter {
    pub kind: Option<RecordKind>,
    pub author: Option<Address>,
    pub trajectory_id: Option<TrajectoryId>,
    /// Inclusive tick range.
    pub time_interval: Option<(u64, u64)>,
}

impl RecordFilter {
    pub fn kind(kind: RecordKind) -> Self {
        Self { kind: Some(kind), ..Self::default() }
    }

    pub fn matches(&self, rec: &LedgerRecord) -> bool {
        self.kind.is_none_or(|k| rec.kind == k)
            && self.author.is_none_or(|a| rec.author == a)
            && self.trajectory_id.is_none_or(|t| rec.trajectory_id() == Some(t))
            && self.time_interval.is_none_or(|(t0, t1)| (t0..=t1).contains(&rec.timestamp))
    }
}

#[derive(Debug)]
pub struct Ledger {
    records: Vec<LedgerRecord>,
    clock: LogicalClock,
    closed: bool,
    sink: Option<(PathBuf, BufWriter<File>)>,
}

impl Default for Ledger {
    fn default() -> Self {
        Self::in_memory()
    }
}

impl Clone for Ledger {
    /// Clones detach from the backing file.
    fn clone(&self) -> Self {
        Self { records: self.records.clone(), clock: self.clock, closed: self.closed, sink: None }
    }
}

impl Ledger {
    pub fn in_memory() -> Self {
        Self { records: Vec::new(), clock: LogicalClock::default(), closed: false, sink: None }
    }

    /// Builds a ledger from already-persisted records without validating them.
    pub fn from_records(records: Vec<LedgerRecord>) -> Self {
        let clock = LogicalClock { current: records.last().map_or(0, |r| r.timestamp) };
        Self { records, clock, closed: false, sink: None }
    }

    /// Creates (truncating) a file-backed ledger.
    pub fn create(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let file = File::create(&path)?;
        let mut ledger = Self::in_memory();
        ledger.sink = Some((path, BufWriter::new(file)));
        Ok(ledger)
    }

    /// Opens an existing ledger file for appending. Fails on undecodable bytes.
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        let (records, tail) = read_records(&path)?;
        if let Some(err) = tail {
            return Err(err);
        }
        let mut ledger = Self::from_records(records);
        let file = OpenOptions::new().append(true).open(&path)?;
        ledger.sink = Some((path, BufWriter::new(file)));
        Ok(ledger)
    }

    pub fn path(&self) -> Option<&Path> {
        self.sink.as_ref().map(|(p, _)| p.as_path())
    }

    pub fn records(&self) -> &[LedgerRecord] {
        &self.records
    }

    pub fn get(&self, index: u64) -> Option<&LedgerRecord> {
        self.records.get(usize::try_from(index).ok()?)
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn now(&self) -> u64 {
        self.clock.now()
    }

    pub fn set_clock(&mut self, t: u64) -> Result<()> {
        self.clock.set(t)
    }

    pub fn advance_clock(&mut self, ticks: u64) {
        self.clock.current += ticks;
    }

    pub fn close(&mut self) {
        self.closed = true;
    }

    pub fn append(&mut self, author: &Signer, kind: RecordKind, payload: Vec<u8>) -> Result<(u64, Hash32)> {
        let mut out = self.append_batch(author, vec![(kind, payload)])?;
        Ok(out.pop().expect("one record appended"))
    }

    /// Appends several records under one clock tick.
    pub fn append_batch(
        &mut self,
        author: &Signer,
        entries: Vec<(RecordKind, Vec<u8>)>,
    ) -> Result<Vec<(u64, Hash32)>> {
        if self.closed {
            return Err(Error::LedgerClosed);
        }
        let timestamp = self.clock.tick();
        let public_key = author.public_key();
        let author_addr = author.address();
        let mut out = Vec::with_capacity(entries.len());
        for (kind, payload) in entries {
            let index = self.records.len() as u64;
            let prev_hash = self.records.last().map_or(GENESIS_HASH, |r| r.record_hash);
            let record_hash =
                LedgerRecord::compute_hash(index, kind, &author_addr, &payload, timestamp, &prev_hash);
            let signature = author.sign(record_hash.as_bytes());
            if !verify_signature(&public_key, record_hash.as_bytes(), &signature) {
                return Err(Error::SigningFailure(format!("record {index}")));
            }
            let record = LedgerRecord {
                index,
                kind,
                author: author_addr,
                public_key,
                payload,
                timestamp,
                prev_hash,
                record_hash,
                signature,
            };
            if let Some((_, w)) = self.sink.as_mut() {
                write_framed(w, &record)?;
            }
            out.push((index, record_hash));
            self.records.push(record);
        }
        if let Some((_, w)) = self.sink.as_mut() {
            w.flush()?;
        }
        Ok(out)
    }

    pub fn verify_chain(&self) -> ChainReport {
        verify_records(&self.records)
    }

    pub fn query(&self, filter: &RecordFilter) -> Vec<&LedgerRecord> {
        self.records.iter().filter(|r| filter.matches(r)).collect()
    }

    /// Length-prefixed canonical records, identical to the file format.
    pub fn to_file_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for rec in &self.records {
            write_framed(&mut out, rec).expect("writing to a Vec cannot fail");
        }
        out
    }

    pub fn export_json_lines(&self) -> String {
        let mut out = String::new();
        for rec in &self.records {
            out.push_str(&rec.to_json().to_string());
            out.push('\n');
        }
        out
    }
}

fn write_framed(w: &mut impl Write, rec: &LedgerRecord) -> std::io::Result<()> {
    let bytes = rec.to_bytes();
    w.write_all(&(bytes.len() as u32).to_be_bytes())?;
    w.write_all(&bytes)
}

/// Parses the framed record stream. Records decoded before the first
/// undecodable frame are returned along with the decode error, if any.
pub fn parse_records(bytes: &[u8]) -> (Vec<LedgerRecord>, Option<Error>) {
    let mut records = Vec::new();
    let mut pos = 0usize;
    while pos < bytes.len() {
        let Some(len_bytes) = bytes.get(pos..pos + 4) else {
            return (records, Some(Error::Decode("truncated frame header".into())));
        };
        let len = u32::from_be_bytes(len_bytes.try_into().expect("4 bytes")) as usize;
        pos += 4;
        let Some(body) = bytes.get(pos..pos.saturating_add(len)) else {
            return (records, Some(Error::Decode("truncated frame".into())));
        };
        match LedgerRecord::from_bytes(body) {
            Ok(rec) => records.push(rec),
            Err(e) => return (records, Some(e)),
        }
        pos += len;
    }
    (records, None)
}

pub fn read_records(path: &Path) -> Result<(Vec<LedgerRecord>, Option<Error>)> {
    let mut bytes = Vec::new();
    File::open(path)?.read_to_end(&mut bytes)?;
    Ok(parse_records(&bytes))
}

/// Chain report for a ledger file; an undecodable frame counts as the first
/// bad record unless an earlier record already fails verification.
pub fn verify_file(path: &Path) -> Result<ChainReport> {
    let (records, tail) = read_records(path)?;
    let mut report = verify_records(&records);
    if tail.is_some() && report.valid {
        report = ChainReport {
            valid: false,
            first_bad_index: Some(records.len() as u64),
            length: records.len() as u64,
        };
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signer(n: u8) -> Signer {
        Signer::from_seed([n; 32])
    }

    fn filled(n: usize) -> Ledger {
        let mut l = Ledger::in_memory();
        let s = signer(1);
        for i in 0..n {
            l.append(&s, RecordKind::ProfileUpdated, vec![i as u8; 3]).unwrap();
        }
        l
    }

    #[test]
    fn genesis_record() {
        let mut l = Ledger::in_memory();
        let (idx, hash) = l.append(&signer(1), RecordKind::MetadataRegistered, vec![1]).unwrap();
        assert_eq!(idx, 0);
        assert_eq!(l.records()[0].prev_hash, GENESIS_HASH);
        assert_eq!(l.records()[0].record_hash, hash);
        assert_eq!(l.records()[0].timestamp, 1);
    }

    #[test]
    fn three_appends_verify() {
        let l = filled(3);
        assert_eq!(l.verify_chain(), ChainReport { valid: true, first_bad_index: None, length: 3 });
    }

    #[test]
    fn hundred_records_verify() {
        assert!(filled(100).verify_chain().valid);
    }

    #[test]
    fn flipped_payload_byte_detected() {
        let l = filled(5);
        let mut recs = l.records().to_vec();
        recs[2].payload[0] ^= 0x01;
        // oracle: the stored hash no longer matches a fresh hash of the mutated fields
        assert_ne!(recs[2].recompute_hash(), recs[2].record_hash);
        assert_eq!(verify_records(&recs).first_bad_index, Some(2));
    }

    #[test]
    fn replaced_signature_detected() {
        let l = filled(10);
        let mut recs = l.records().to_vec();
        recs[7].signature = signer(9).sign(recs[7].record_hash.as_bytes());
        assert!(!verify_signature(&recs[7].public_key, recs[7].record_hash.as_bytes(), &recs[7].signature));
        assert_eq!(verify_records(&recs).first_bad_index, Some(7));
    }

    #[test]
    fn earlier_bad_signature_wins_over_later_break() {
        let mut recs = filled(10).records().to_vec();
        recs[2].signature[0] ^= 1;
        recs[6].payload.push(0);
        assert_eq!(verify_records(&recs).first_bad_index, Some(2));
        recs[2].signature[0] ^= 1;
        assert_eq!(verify_records(&recs).first_bad_index, Some(6));
    }

    #[test]
    fn swapped_records_detected() {
        let l = filled(6);
        let mut recs = l.records().to_vec();
        recs.swap(3, 4);
        assert_ne!(recs[3].prev_hash, recs[2].record_hash);
        assert_eq!(verify_records(&recs).first_bad_index, Some(3));
    }

    #[test]
    fn batch_shares_one_tick() {
        let mut l = filled(1);
        let out = l
            .append_batch(&signer(2), vec![(RecordKind::InteractionLogged, vec![0; 16]); 3])
            .unwrap();
        assert_eq!(out.len(), 3);
        let ts: Vec<u64> = l.records()[1..].iter().map(|r| r.timestamp).collect();
        assert_eq!(ts, vec![2, 2, 2]);
        assert!(l.verify_chain().valid);
    }

    #[test]
    fn closed_ledger_refuses_appends() {
        let mut l = filled(1);
        l.close();
        assert!(matches!(l.append(&signer(1), RecordKind::VcApplied, vec![]), Err(Error::LedgerClosed)));
    }

    #[test]
    fn clock_can_jump_forward_only() {
        let mut l = filled(2);
        l.set_clock(50).unwrap();
        l.append(&signer(1), RecordKind::VcApplied, vec![]).unwrap();
        assert_eq!(l.records()[2].timestamp, 51);
        assert!(l.set_clock(10).is_err());
    }

    #[test]
    fn query_by_kind_author_and_interval() {
        let mut l = Ledger::in_memory();
        let (a, b) = (signer(1), signer(2));
        for _ in 0..5 {
            l.append(&a, RecordKind::InteractionLogged, vec![0; 16]).unwrap();
        }
        for _ in 0..3 {
            l.append(&b, RecordKind::MetadataRegistered, vec![]).unwrap();
        }
        assert_eq!(l.query(&RecordFilter::kind(RecordKind::InteractionLogged)).len(), 5);
        let unknown = RecordFilter { author: Some(signer(3).address()), ..Default::default() };
        assert!(l.query(&unknown).is_empty());
        let full = RecordFilter {
            kind: Some(RecordKind::InteractionLogged),
            time_interval: Some((0, l.now())),
            ..Default::default()
        };
        assert_eq!(l.query(&full), l.query(&RecordFilter::kind(RecordKind::InteractionLogged)));
    }

    #[test]
    fn trajectory_filter_ignores_other_kinds() {
        let mut l = Ledger::in_memory();
        let s = signer(1);
        let id = [5u8; 16];
        l.append(&s, RecordKind::InteractionLogged, id.to_vec()).unwrap();
        l.append(&s, RecordKind::ProfileUpdated, id.to_vec()).unwrap();
        let f = RecordFilter { trajectory_id: Some(TrajectoryId(id)), ..Default::default() };
        assert_eq!(l.query(&f).len(), 1);
    }

    #[test]
    fn file_round_trip_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.bin");
        let s = signer(1);
        {
            let mut l = Ledger::create(&path).unwrap();
            l.append(&s, RecordKind::VcApplied, b"one".to_vec()).unwrap();
            l.append(&s, RecordKind::VcApplied, b"two".to_vec()).unwrap();
        }
        let mut l = Ledger::open(&path).unwrap();
        assert_eq!(l.len(), 2);
        assert_eq!(l.now(), 2);
        l.append(&s, RecordKind::VcApplied, b"three".to_vec()).unwrap();
        drop(l);
        let bytes = std::fs::read(&path).unwrap();
        let (recs, tail) = parse_records(&bytes);
        assert!(tail.is_none());
        assert_eq!(recs.len(), 3);
        assert!(verify_records(&recs).valid);
        assert_eq!(verify_file(&path).unwrap().length, 3);
    }

    #[test]
    fn corrupted_file_reports_bad_index() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ledger.bin");
        let l = filled(4);
        let mut bytes = l.to_file_bytes();
        // second frame: header(4) + index(8) + kind(1) + author(32) + key(32) + len(4) then payload
        let frame = 4 + l.records()[0].to_bytes().len();
        bytes[frame + 4 + 8 + 1 + 32 + 32 + 4] ^= 0xff;
        std::fs::write(&path, bytes).unwrap();
        let report = verify_file(&path).unwrap();
        assert_eq!(report.first_bad_index, Some(1));
        assert!(Ledger::open(&path).is_ok());
    }

    #[test]
    fn json_export_has_hex_hashes() {
        let l = filled(2);
        let text = l.export_json_lines();
        let lines: Vec<serde_json::Value> =
            text.lines().map(|s| serde_json::from_str(s).unwrap()).collect();
        assert_eq!(lines.len(), 2);
        assert_eq!(lines[1]["prevHash"], l.records()[0].record_hash.to_hex());
        assert_eq!(lines[0]["kind"], "ProfileUpdated");
    }
}
