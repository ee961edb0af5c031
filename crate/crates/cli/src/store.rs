//! On-disk state: the ledger file plus JSON sidecars for credential bodies
//! and seen nonces, and hex-encoded key seeds.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};

use aat_core::identity::NonceRegistry;
use aat_core::ledger::read_records;
use aat_core::{AuditTrail, Ledger, Signer, TrailConfig, VerifiableCredential};
use anyhow::{anyhow, bail, Context, Result};

fn sidecar(ledger: &Path, suffix: &str) -> PathBuf {
    let mut name = ledger.as_os_str().to_owned();
    name.push(suffix);
    PathBuf::from(name)
}

pub fn credentials_path(ledger: &Path) -> PathBuf {
    sidecar(ledger, ".credentials.json")
}

pub fn nonces_path(ledger: &Path) -> PathBuf {
    sidecar(ledger, ".nonces.json")
}

pub fn read_key(path: &Path) -> Result<Signer> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading key {}", path.display()))?;
    let mut seed = [0u8; 32];
    hex::decode_to_slice(text.trim(), &mut seed).map_err(|_| anyhow!("{} is not a 32-byte hex seed", path.display()))?;
    Ok(Signer::from_seed(seed))
}

/// Refuses to overwrite an existing key.
pub fn write_key(path: &Path, signer: &Signer) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let mut f = std::fs::File::options()
        .write(true)
        .create_new(true)
        .open(path)
        .with_context(|| format!("creating key {}", path.display()))?;
    writeln!(f, "{}", hex::encode(signer.seed()))?;
    Ok(())
}

fn read_json<T: serde::de::DeserializeOwned + Default>(path: &Path) -> Result<T> {
    match std::fs::read_to_string(path) {
        Ok(text) => serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display())),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(T::default()),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    std::fs::write(path, serde_json::to_string_pretty(value)? + "\n").with_context(|| format!("writing {}", path.display()))
}

/// Opens the ledger for appending and rebuilds state from it.
pub fn open_trail(ledger: &Path, config: TrailConfig) -> Result<AuditTrail> {
    if !ledger.exists() {
        bail!("no ledger at {}; run `aat init` first", ledger.display());
    }
    let mut trail = AuditTrail::open(Ledger::open(ledger)?, config)?;
    let creds: BTreeMap<String, VerifiableCredential> = read_json(&credentials_path(ledger))?;
    trail.set_credential_store(creds);
    *trail.nonces_mut() = read_json::<NonceRegistry>(&nonces_path(ledger))?;
    Ok(trail)
}

/// Read-only snapshot; nothing is held open afterwards.
pub fn snapshot(ledger: &Path, config: TrailConfig) -> Result<AuditTrail> {
    let (records, err) = read_records(ledger)?;
    if let Some(e) = err {
        return Err(e.into());
    }
    Ok(AuditTrail::open(Ledger::from_records(records), config)?)
}

pub fn save_sidecars(ledger: &Path, trail: &AuditTrail) -> Result<()> {
    write_json(&credentials_path(ledger), trail.credential_store())?;
    write_json(&nonces_path(ledger), trail.nonces())
}
