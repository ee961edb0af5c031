//! `aat`: operator commands over a ledger file, and a read-only HTTP facade.

pub mod config;
pub mod http;
pub mod store;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use aat_core::graph::{detect_forks, propagation, trace_source};
use aat_core::harness::{self, ScenarioSpec, PRESETS};
use aat_core::identity::{Presentation, ProfileUpdate, RegistrationRequest};
use aat_core::ledger::verify_file;
use aat_core::risk::diffusion_json;
use aat_core::{
    load_estimate, Address, AuditTrail, ExportFormat, Hash32, Ledger, NodeType, RiskReport, Signer, TrajectoryGraph,
    TrajectoryId,
};
use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::rngs::OsRng;
use rand::RngCore;
use serde::Serialize;
use serde_json::json;

pub use config::CliConfig;

#[derive(Debug, Parser)]
#[command(name = "aat", version, about = "Audit trail for AI agent identities, interactions and risk")]
pub struct Cli {
    /// TOML config file.
    #[arg(long, env = "AAT_CONFIG", global = true)]
    pub config: Option<PathBuf>,
    /// Ledger file; overrides the config.
    #[arg(long, global = true)]
    pub ledger: Option<PathBuf>,
    /// CA key file; overrides the config.
    #[arg(long, global = true)]
    pub ca_key: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a CA key and a ledger whose first record registers the CA.
    Init,
    /// Register a node DID, creating its key file if absent.
    Register(RegisterArgs),
    /// Show the current DID document.
    Resolve { did: String },
    /// Change ERL, β or functionality; signed with `--key` (the owner), or the CA key.
    Profile {
        did: String,
        #[arg(long)]
        erl: Option<u8>,
        /// Thousandths.
        #[arg(long)]
        beta: Option<u16>,
        #[arg(long)]
        functionality: Option<String>,
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Credential lifecycle and presentations.
    #[command(subcommand)]
    Vc(VcCommand),
    /// Check a presentation read from a file (`-` for stdin).
    VerifyVp {
        file: PathBuf,
        /// Verifier tick; the ledger clock by default.
        #[arg(long)]
        at: Option<u64>,
    },
    /// Issue trajectory ids and log interactions.
    #[command(subcommand)]
    Trajectory(TrajectoryCommand),
    /// Restore, trace and export interaction graphs.
    #[command(subcommand)]
    Graph(GraphCommand),
    /// Risk reports, audits and ERL diffusion.
    #[command(subcommand)]
    Risk(RiskCommand),
    /// Run the built-in scenario presets.
    #[command(subcommand)]
    Scenario(ScenarioCommand),
    /// Required throughput for a set of platforms.
    LoadEstimate(LoadArgs),
    /// Serve GET /trajectory/{id}, /did/{did} and /risk/{did}.
    Serve {
        #[arg(long)]
        bind: Option<String>,
    },
    /// Check every record's hash, link and signature.
    VerifyChain,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum NodeKind {
    AiAgent,
    LargeLanguageModel,
    McpServer,
    DataProcessingModule,
    DecisionSupportSystem,
    SensorInterface,
}

impl From<NodeKind> for NodeType {
    fn from(k: NodeKind) -> Self {
        match k {
            NodeKind::AiAgent => NodeType::AiAgent,
            NodeKind::LargeLanguageModel => NodeType::LargeLanguageModel,
            NodeKind::McpServer => NodeType::McpServer,
            NodeKind::DataProcessingModule => NodeType::DataProcessingModule,
            NodeKind::DecisionSupportSystem => NodeType::DecisionSupportSystem,
            NodeKind::SensorInterface => NodeType::SensorInterface,
        }
    }
}

#[derive(Debug, Args)]
pub struct RegisterArgs {
    #[arg(long)]
    pub key: PathBuf,
    #[arg(long, value_enum, default_value = "ai-agent")]
    pub node_type: NodeKind,
    #[arg(long, default_value = "")]
    pub functionality: String,
    #[arg(long)]
    pub metadata_uri: Option<String>,
    #[arg(long)]
    pub owner: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum VcCommand {
    /// Draft a credential for the key's DID and apply for it.
    Apply {
        #[arg(long)]
        key: PathBuf,
        /// `name=value`, repeatable.
        #[arg(long = "claim", value_parser = parse_pair)]
        claims: Vec<(String, String)>,
        #[arg(long)]
        expires_at: Option<u64>,
    },
    /// Approve the pending application of a DID (CA key).
    Approve { did: String },
    /// Reject the pending application of a DID (CA key).
    Reject { did: String },
    /// Revoke an approved credential by hash (CA key).
    Revoke { vc_hash: String },
    /// Sign a presentation of one of the key's credentials.
    Present {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        vc_hash: String,
        /// 16 bytes hex; random by default.
        #[arg(long)]
        nonce: Option<String>,
        /// Presentation tick; the ledger clock by default.
        #[arg(long)]
        timestamp: Option<u64>,
    },
}

#[derive(Debug, Subcommand)]
pub enum TrajectoryCommand {
    /// Issue a trajectory id to a requester (CA key).
    Issue { requester: String },
    /// Log one interaction, or a fan-out with several `--to`.
    Log {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long = "to", required = true)]
        callees: Vec<String>,
        #[arg(long)]
        action: String,
        /// Payload hash, hex.
        #[arg(long, conflicts_with = "payload")]
        hash: Option<String>,
        /// Text whose SHA-256 is the payload hash.
        #[arg(long)]
        payload: Option<String>,
    },
    /// Log a receipt for an interaction received from `caller`.
    Ack {
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        id: String,
        #[arg(long)]
        caller: String,
        #[arg(long, conflicts_with = "payload")]
        hash: Option<String>,
        #[arg(long)]
        payload: Option<String>,
    },
    /// Match interactions against receipts: missing receipts and hash mismatches.
    Reconcile { id: String },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum Format {
    Json,
    Dot,
}

impl From<Format> for ExportFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Json => ExportFormat::Json,
            Format::Dot => ExportFormat::Dot,
        }
    }
}

/// A trajectory id, or an inclusive tick interval when the id is omitted.
#[derive(Debug, Args)]
pub struct GraphSel {
    pub id: Option<String>,
    #[arg(long)]
    pub from: Option<u64>,
    #[arg(long)]
    pub to: Option<u64>,
}

#[derive(Debug, Subcommand)]
pub enum GraphCommand {
    Restore {
        #[command(flatten)]
        sel: GraphSel,
        #[arg(long, value_enum, default_value = "json")]
        format: Format,
    },
    /// Nodes upstream of `--node`.
    Trace {
        #[command(flatten)]
        sel: GraphSel,
        #[arg(long)]
        node: String,
    },
    /// Nodes downstream of `--node`.
    Propagate {
        #[command(flatten)]
        sel: GraphSel,
        #[arg(long)]
        node: String,
    },
    Forks {
        #[command(flatten)]
        sel: GraphSel,
    },
    /// Write the graph to a file.
    Export {
        #[command(flatten)]
        sel: GraphSel,
        #[arg(long, value_enum, default_value = "dot")]
        format: Format,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    #[arg(long, default_value_t = 0)]
    pub from: u64,
    /// The ledger clock by default.
    #[arg(long)]
    pub to: Option<u64>,
    #[arg(long = "trajectory")]
    pub trajectories: Vec<String>,
    #[arg(long = "suspect")]
    pub suspects: Vec<String>,
    #[arg(long, default_value = "")]
    pub description: String,
}

#[derive(Debug, Subcommand)]
pub enum RiskCommand {
    /// File an incident report; signed with `--key`, or the CA key.
    Report {
        #[command(flatten)]
        report: ReportArgs,
        #[arg(long)]
        key: Option<PathBuf>,
    },
    /// Audit the suspects of a report.
    Audit {
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Compute risk-level diffusion from `--risk` nodes, or from the audit's findings.
    Diffuse {
        #[command(flatten)]
        report: ReportArgs,
        #[arg(long = "risk")]
        risk: Vec<String>,
    },
    /// Diffuse and write the new levels (CA key).
    Apply {
        #[command(flatten)]
        report: ReportArgs,
        #[arg(long = "risk")]
        risk: Vec<String>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ScenarioCommand {
    /// Preset names.
    List,
    /// Run a preset or scenario file and report its outcome.
    Run {
        /// Preset name or path to a scenario JSON file.
        scenario: String,
        /// Overrides the scenario's seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides how often the attack suite repeats.
        #[arg(long)]
        rounds: Option<u32>,
        /// Also write the scenario's ledger here.
        #[arg(long)]
        ledger_out: Option<PathBuf>,
    },
    /// Run every preset once per seed and report the six indicators.
    Metrics {
        #[arg(long, default_value_t = 25)]
        seeds: u64,
        #[arg(long, value_enum, default_value = "json")]
        format: MetricsFormat,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum MetricsFormat {
    Json,
    Table,
}

#[derive(Debug, Args)]
pub struct LoadArgs {
    /// `name=daily_users`, repeatable.
    #[arg(long = "platform", required = true, value_parser = parse_pair)]
    pub platforms: Vec<(String, String)>,
    /// Requests per user per day.
    #[arg(long)]
    pub per_capita: u64,
    /// Throughput of the reference system to compare against.
    #[arg(long)]
    pub reference_tps: u64,
}

fn parse_pair(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.to_string(), v.to_string()))
        .ok_or_else(|| format!("expected name=value, got {s:?}"))
}

pub struct Output {
    pub stdout: String,
    /// The command ran but reports a negative result.
    pub failed: bool,
}

impl Output {
    fn ok(stdout: String) -> Self {
        Self { stdout, failed: false }
    }
}

pub fn pretty<T: Serialize + ?Sized>(v: &T) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

/// The exact text `graph restore` prints and `GET /trajectory/{id}` returns.
pub fn render_graph(g: &TrajectoryGraph, format: ExportFormat) -> String {
    let mut s = g.export(format);
    if !s.ends_with('\n') {
        s.push('\n');
    }
    s
}

fn did(s: &str) -> Result<Address> {
    Ok(Address::parse_did(s)?)
}

fn traj(s: &str) -> Result<TrajectoryId> {
    Ok(s.parse()?)
}

fn payload_hash(hash: Option<&str>, payload: Option<&str>) -> Result<Hash32> {
    match (hash, payload) {
        (Some(h), _) => Ok(h.parse()?),
        (None, Some(p)) => Ok(Hash32::of(p.as_bytes())),
        (None, None) => bail!("one of --hash or --payload is required"),
    }
}

struct Ctx {
    cfg: CliConfig,
}

impl Ctx {
    fn ledger(&self) -> &Path {
        &self.cfg.ledger
    }

    fn ca(&self) -> Result<Signer> {
        store::read_key(&self.cfg.ca_key)
    }

    fn open(&self) -> Result<AuditTrail> {
        store::open_trail(self.ledger(), self.cfg.trail_config()?)
    }

    fn snapshot(&self) -> Result<AuditTrail> {
        store::snapshot(self.ledger(), self.cfg.trail_config()?)
    }

    fn save(&self, trail: &AuditTrail) -> Result<()> {
        store::save_sidecars(self.ledger(), trail)
    }
}

fn select(trail: &AuditTrail, sel: &GraphSel) -> Result<TrajectoryGraph> {
    match &sel.id {
        Some(id) => Ok(trail.restore(&traj(id)?)?),
        None => Ok(trail.restore_interval(sel.from.unwrap_or(0), sel.to.unwrap_or(trail.now()))?),
    }
}

fn risk_report(trail: &AuditTrail, a: &ReportArgs) -> Result<RiskReport> {
    let ids = a.trajectories.iter().map(|s| traj(s)).collect::<Result<BTreeSet<_>>>()?;
    let suspects = a.suspects.iter().map(|s| did(s)).collect::<Result<BTreeSet<_>>>()?;
    Ok(RiskReport {
        interval: (a.from, a.to.unwrap_or(trail.now())),
        trajectory_ids: (!ids.is_empty()).then_some(ids),
        suspected: (!suspects.is_empty()).then_some(suspects),
        description: a.description.clone(),
    })
}

fn diffusion(trail: &AuditTrail, a: &ReportArgs, risk: &[String]) -> Result<(BTreeSet<Address>, aat_core::DiffusionResult)> {
    let report = risk_report(trail, a)?;
    let (g, suspects) = trail.mark_suspects(&report)?;
    let v_risk = if risk.is_empty() {
        trail.audit_suspects(&g, &suspects, report.interval)?.v_risk
    } else {
        risk.iter().map(|s| did(s)).collect::<Result<_>>()?
    };
    let result = trail.erl_diffuse(&g, &v_risk)?;
    Ok((v_risk, result))
}

fn load_scenario(arg: &str) -> Result<ScenarioSpec> {
    if PRESETS.iter().any(|(n, _)| *n == arg) {
        return Ok(harness::preset(arg)?);
    }
    let text = std::fs::read_to_string(arg).with_context(|| format!("{arg} is neither a preset nor a readable file"))?;
    Ok(ScenarioSpec::from_json(&text)?)
}

fn read_input(path: &Path) -> Result<String> {
    if path == Path::new("-") {
        let mut s = String::new();
        std::io::Read::read_to_string(&mut std::io::stdin(), &mut s)?;
        Ok(s)
    } else {
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
    }
}

pub fn resolve_config(cli: &Cli) -> Result<CliConfig> {
    let mut cfg = match &cli.config {
        Some(p) => CliConfig::load(p)?,
        None => CliConfig::default(),
    };
    if let Some(l) = &cli.ledger {
        cfg.ledger = l.clone();
    }
    if let Some(k) = &cli.ca_key {
        cfg.ca_key = k.clone();
    }
    Ok(cfg)
}

pub fn run(cli: Cli) -> Result<Output> {
    let ctx = Ctx { cfg: resolve_config(&cli)? };
    match cli.command {
        Command::Init => init(&ctx),
        Command::Register(a) => register(&ctx, a),
        Command::Resolve { did: d } => Ok(Output::ok(pretty(&ctx.snapshot()?.resolve_did(&did(&d)?)?))),
        Command::Profile { did: d, erl, beta, functionality, key } => {
            let mut trail = ctx.open()?;
            let signer = match key {
                Some(k) => store::read_key(&k)?,
                None => ctx.ca()?,
            };
            let update = ProfileUpdate { erl, beta_per_mille: beta, functionality };
            let version = trail.update_profile(&signer, &did(&d)?, update)?;
            Ok(Output::ok(pretty(&json!({ "version": version }))))
        }
        Command::Vc(c) => vc(&ctx, c),
        Command::VerifyVp { file, at } => {
            let p: Presentation = serde_json::from_str(&read_input(&file)?).context("parsing presentation")?;
            let mut trail = ctx.open()?;
            let now = at.unwrap_or(trail.now());
            let window = trail.config().replay_window;
            trail.nonces_mut().prune(now, window);
            let verdict = trail.verify_presentation(&p, now);
            ctx.save(&trail)?;
            Ok(Output { failed: !verdict.is_accept(), stdout: pretty(&json!({ "verdict": verdict, "at": now })) })
        }
        Command::Trajectory(c) => trajectory(&ctx, c),
        Command::Graph(c) => graph(&ctx, c),
        Command::Risk(c) => risk(&ctx, c),
        Command::Scenario(c) => scenario(&ctx, c),
        Command::LoadEstimate(a) => {
            let users = a
                .platforms
                .iter()
                .map(|(n, u)| Ok((n.as_str(), u.parse::<u64>().with_context(|| format!("bad user count for {n}"))?)))
                .collect::<Result<Vec<_>>>()?;
            Ok(Output::ok(pretty(&load_estimate(&users, a.per_capita, a.reference_tps)?)))
        }
        Command::Serve { bind } => {
            let bind = bind.unwrap_or(ctx.cfg.bind.clone());
            let state = http::AppState { ledger: Arc::new(ctx.cfg.ledger.clone()), config: ctx.cfg.trail_config()? };
            ctx.snapshot()?;
            tokio::runtime::Runtime::new()?.block_on(http::serve(state, &bind))?;
            Ok(Output::ok(String::new()))
        }
        Command::VerifyChain => {
            let report = verify_file(ctx.ledger())?;
            if let Some(i) = report.first_bad_index {
                eprintln!("chain broken at record {i}");
            }
            Ok(Output { failed: !report.valid, stdout: pretty(&report) })
        }
    }
}

fn init(ctx: &Ctx) -> Result<Output> {
    if ctx.ledger().exists() {
        bail!("{} already exists", ctx.ledger().display());
    }
    let ca = Signer::generate(&mut OsRng);
    store::write_key(&ctx.cfg.ca_key, &ca)?;
    if let Some(dir) = ctx.ledger().parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    let trail = AuditTrail::genesis(Ledger::create(ctx.ledger())?, &ca, ctx.cfg.trail_config()?)?;
    ctx.save(&trail)?;
    Ok(Output::ok(pretty(&json!({
        "ca": ca.address(),
        "ledger": ctx.ledger(),
        "caKey": ctx.cfg.ca_key,
    }))))
}

fn register(ctx: &Ctx, a: RegisterArgs) -> Result<Output> {
    let mut trail = ctx.open()?;
    let signer = if a.key.exists() {
        store::read_key(&a.key)?
    } else {
        let s = Signer::generate(&mut OsRng);
        store::write_key(&a.key, &s)?;
        s
    };
    let uri = a.metadata_uri.unwrap_or_else(|| format!("aat:node:{}", signer.address().to_hex()));
    let mut req = RegistrationRequest::new(uri, a.node_type.into());
    req.functionality = a.functionality;
    req.owner = a.owner.as_deref().map(did).transpose()?;
    let addr = trail.register(&signer, req)?;
    Ok(Output::ok(pretty(&json!({ "did": addr, "key": a.key, "index": trail.ledger().len() - 1 }))))
}

fn vc(ctx: &Ctx, c: VcCommand) -> Result<Output> {
    let mut trail = ctx.open()?;
    let out = match c {
        VcCommand::Apply { key, claims, expires_at } => {
            let signer = store::read_key(&key)?;
            let draft = trail.request_credential(&signer, &claims, expires_at)?;
            json!({
                "applicationId": trail.ledger().len() - 1,
                "vcHash": draft.vc_hash,
                "vcUri": draft.vc_uri,
            })
        }
        VcCommand::Approve { did: d } => serde_json::to_value(trail.approve_vc(&ctx.ca()?, &did(&d)?)?)?,
        VcCommand::Reject { did: d } => {
            trail.reject_vc(&ctx.ca()?, &did(&d)?)?;
            json!({ "rejected": true })
        }
        VcCommand::Revoke { vc_hash } => json!({ "revoked": trail.revoke_vc(&ctx.ca()?, &vc_hash.parse()?)? }),
        VcCommand::Present { key, vc_hash, nonce, timestamp } => {
            let signer = store::read_key(&key)?;
            let hash: Hash32 = vc_hash.parse()?;
            let uri = trail
                .identity()
                .credential(&hash)
                .map(|c| c.vc_uri.clone())
                .ok_or_else(|| anyhow!("no credential {hash}"))?;
            let vc = trail.stored_credential(&uri).cloned().ok_or_else(|| anyhow!("no stored body for {uri}"))?;
            let mut n = [0u8; 16];
            match nonce {
                Some(h) => hex::decode_to_slice(&h, &mut n).map_err(|_| anyhow!("nonce must be 16 bytes hex"))?,
                None => OsRng.fill_bytes(&mut n),
            }
            serde_json::to_value(Presentation::create(&signer, vc, n, timestamp.unwrap_or(trail.now())))?
        }
    };
    ctx.save(&trail)?;
    Ok(Output::ok(pretty(&out)))
}

fn trajectory(ctx: &Ctx, c: TrajectoryCommand) -> Result<Output> {
    let mut trail = ctx.open()?;
    let out = match c {
        TrajectoryCommand::Issue { requester } => {
            let id = trail.issue_trajectory_id(&ctx.ca()?, &did(&requester)?)?;
            json!({ "trajectoryId": id, "index": trail.ledger().len() - 1 })
        }
        TrajectoryCommand::Log { key, id, callees, action, hash, payload } => {
            let signer = store::read_key(&key)?;
            let callees = callees.iter().map(|s| did(s)).collect::<Result<Vec<_>>>()?;
            let h = payload_hash(hash.as_deref(), payload.as_deref())?;
            let written = trail.log_interaction(&signer, &callees, &traj(&id)?, &action, h)?;
            json!({ "indices": written.iter().map(|w| w.0).collect::<Vec<_>>(), "interactionHash": h })
        }
        TrajectoryCommand::Ack { key, id, caller, hash, payload } => {
            let signer = store::read_key(&key)?;
            let h = payload_hash(hash.as_deref(), payload.as_deref())?;
            let (index, _) = trail.acknowledge(&signer, &did(&caller)?, &traj(&id)?, h)?;
            json!({ "index": index })
        }
        TrajectoryCommand::Reconcile { id } => serde_json::to_value(trail.reconcile(&traj(&id)?)?)?,
    };
    ctx.save(&trail)?;
    Ok(Output::ok(pretty(&out)))
}

fn graph(ctx: &Ctx, c: GraphCommand) -> Result<Output> {
    let trail = ctx.snapshot()?;
    let out = match c {
        GraphCommand::Restore { sel, format } => render_graph(&select(&trail, &sel)?, format.into()),
        GraphCommand::Trace { sel, node } => pretty(&trace_source(&select(&trail, &sel)?, &did(&node)?)?),
        GraphCommand::Propagate { sel, node } => pretty(&propagation(&select(&trail, &sel)?, &did(&node)?)?),
        GraphCommand::Forks { sel } => pretty(&detect_forks(&select(&trail, &sel)?)),
        GraphCommand::Export { sel, format, out } => {
            let g = select(&trail, &sel)?;
            std::fs::write(&out, render_graph(&g, format.into()))
                .with_context(|| format!("writing {}", out.display()))?;
            pretty(&json!({ "written": out, "nodes": g.nodes.len(), "edges": g.edges.len() }))
        }
    };
    Ok(Output::ok(out))
}

fn risk(ctx: &Ctx, c: RiskCommand) -> Result<Output> {
    let out = match c {
        RiskCommand::Report { report, key } => {
            let mut trail = ctx.open()?;
            let signer = match key {
                Some(k) => store::read_key(&k)?,
                None => ctx.ca()?,
            };
            let r = risk_report(&trail, &report)?;
            json!({ "index": trail.file_report(&signer, &r)? })
        }
        RiskCommand::Audit { report } => {
            let trail = ctx.snapshot()?;
            let r = risk_report(&trail, &report)?;
            let (g, suspects) = trail.mark_suspects(&r)?;
            serde_json::to_value(trail.audit_suspects(&g, &suspects, r.interval)?)?
        }
        RiskCommand::Diffuse { report, risk } => {
            let trail = ctx.snapshot()?;
            let (v_risk, result) = diffusion(&trail, &report, &risk)?;
            let mut v = diffusion_json(&result);
            v["vRisk"] = serde_json::to_value(v_risk)?;
            v
        }
        RiskCommand::Apply { report, risk } => {
            let mut trail = ctx.open()?;
            let (v_risk, result) = diffusion(&trail, &report, &risk)?;
            let indices = trail.apply_updates(&ctx.ca()?, &result)?;
            let mut v = diffusion_json(&result);
            v["vRisk"] = serde_json::to_value(v_risk)?;
            v["indices"] = json!(indices);
            v
        }
    };
    Ok(Output::ok(pretty(&out)))
}

fn scenario(ctx: &Ctx, c: ScenarioCommand) -> Result<Output> {
    match c {
        ScenarioCommand::List => Ok(Output::ok(PRESETS.iter().map(|(n, _)| format!("{n}\n")).collect())),
        ScenarioCommand::Run { scenario, seed, rounds, ledger_out } => {
            let mut spec = load_scenario(&scenario)?;
            if let Some(s) = seed {
                spec.seed = s;
            }
            if let Some(r) = rounds {
                spec.rounds = r;
            }
            let (env, outcome) = harness::run_scenario(&spec, ctx.cfg.trail_config()?)?;
            if let Some(path) = ledger_out {
                std::fs::write(&path, env.trail.ledger().to_file_bytes())
                    .with_context(|| format!("writing {}", path.display()))?;
            }
            let metrics = harness::aggregate(std::slice::from_ref(&outcome));
            Ok(Output::ok(pretty(&json!({ "outcome": outcome, "metrics": metrics }))))
        }
        ScenarioCommand::Metrics { seeds, format } => {
            let report = harness::run_batch(&harness::standard_batch(seeds)?, ctx.cfg.trail_config()?)?;
            let stdout = match format {
                MetricsFormat::Json => report.metrics_json() + "\n",
                MetricsFormat::Table => harness::metrics_table(&report.metrics),
            };
            Ok(Output { failed: !report.metrics.all_perfect(), stdout })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pairs() {
        assert_eq!(parse_pair("a=b=c").unwrap(), ("a".into(), "b=c".into()));
        assert!(parse_pair("ab").is_err());
    }

    #[test]
    fn payload_or_hash() {
        let h = payload_hash(None, Some("hello")).unwrap();
        assert_eq!(h, Hash32::of(b"hello"));
        assert_eq!(payload_hash(Some(&h.to_hex()), None).unwrap(), h);
        assert!(payload_hash(None, None).is_err());
    }
}
