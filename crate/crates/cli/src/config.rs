use std::path::{Path, PathBuf};

use aat_core::trail::DEFAULT_REPLAY_WINDOW;
use aat_core::{Beta, Erl, TrailConfig};
use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub ledger: PathBuf,
    pub ca_key: PathBuf,
    pub replay_window: u64,
    pub default_erl: u8,
    /// Thousandths.
    pub default_beta: u16,
    pub bind: String,
}

impl Default for CliConfig {
    fn default() -> Self {
        Self {
            ledger: "aat.ledger".into(),
            ca_key: "ca.key".into(),
            replay_window: DEFAULT_REPLAY_WINDOW,
            default_erl: 0,
            default_beta: 500,
            bind: "127.0.0.1:8080".into(),
        }
    }
}

impl CliConfig {
    /// Reads a TOML file; relative paths inside it resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.ledger, &mut cfg.ca_key] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.trail_config()?;
        Ok(cfg)
    }

    pub fn trail_config(&self) -> Result<TrailConfig> {
        Ok(TrailConfig {
            replay_window: self.replay_window,
            default_erl: Erl::new(self.default_erl)?,
            default_beta: Beta::from_per_mille(self.default_beta)?,
        })
    }
}
