//! Deterministic scenario runs: build a credentialed roster, drive a flow
//! with injected anomalies, attack the presentation verifier, and score it.

mod metrics;

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use metrics::{
    aggregate, evaluate, metrics_table, run_batch, run_scenario, standard_batch, BatchReport, Metrics, Ratio, ScenarioOutcome,
};

use crate::error::{Error, Result};
use crate::identity::{NodeType, Presentation, RegistrationRequest, RejectReason, Verdict, VerifiableCredential};
use crate::ledger::{Address, Hash32, Ledger, Signer};
use crate::trail::{AuditTrail, TrailConfig};
use crate::trajectory::TrajectoryId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RosterEntry {
    pub name: String,
    pub node_type: NodeType,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FlowStep {
    pub caller: String,
    /// Two or more callees form a parallel fan-out.
    pub callees: Vec<String>,
    pub action_type: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum AnomalyKind {
    Interruption,
    Tampering,
    MissingInfo,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Anomaly {
    /// 1-based index into the flow.
    pub step: usize,
    pub kind: AnomalyKind,
    /// Which callee misbehaves; all of the step's callees when absent.
    #[serde(default)]
    pub callee: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum AttackKind {
    VcForgery,
    VcTransfer,
    Replay,
    RevokedUse,
}

impl AttackKind {
    pub const ALL: [AttackKind; 4] = [AttackKind::VcForgery, AttackKind::VcTransfer, AttackKind::Replay, AttackKind::RevokedUse];
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct AttackSpec {
    pub kind: AttackKind,
    /// Roster name of the victim; the first roster node by default.
    #[serde(default)]
    pub target: Option<String>,
}

fn one() -> u32 {
    1
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioSpec {
    #[serde(default)]
    pub name: String,
    pub seed: u64,
    pub roster: Vec<RosterEntry>,
    #[serde(default)]
    pub flow: Vec<FlowStep>,
    #[serde(default)]
    pub anomalies: Vec<Anomaly>,
    #[serde(default)]
    pub attacks: Vec<AttackSpec>,
    /// Repetitions of each attack, and number of legitimate control presentations.
    #[serde(default = "one")]
    pub rounds: u32,
}

pub const PRESETS: [(&str, &str); 8] = [
    ("sequential-4-clean", include_str!("../../scenarios/sequential-4-clean.json")),
    ("sequential-4-interruption", include_str!("../../scenarios/sequential-4-interruption.json")),
    ("sequential-4-tampering", include_str!("../../scenarios/sequential-4-tampering.json")),
    ("sequential-4-missing-info", include_str!("../../scenarios/sequential-4-missing-info.json")),
    ("parallel-fork-clean", include_str!("../../scenarios/parallel-fork-clean.json")),
    ("parallel-fork-interruption", include_str!("../../scenarios/parallel-fork-interruption.json")),
    ("parallel-fork-tampering", include_str!("../../scenarios/parallel-fork-tampering.json")),
    ("parallel-fork-missing-info", include_str!("../../scenarios/parallel-fork-missing-info.json")),
];

pub fn preset(name: &str) -> Result<ScenarioSpec> {
    let (_, text) = PRESETS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| Error::InvalidScenario(format!("no preset named {name}")))?;
    ScenarioSpec::from_json(text)
}

impl ScenarioSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidScenario(m));
        if self.roster.is_empty() {
            return bad("roster is empty".into());
        }
        let names: BTreeSet<&str> = self.roster.iter().map(|r| r.name.as_str()).collect();
        if names.len() != self.roster.len() {
            return bad("roster names repeat".into());
        }
        for (i, step) in self.flow.iter().enumerate() {
            if step.callees.is_empty() {
                return bad(format!("step {} has no callees", i + 1));
            }
            for n in std::iter::once(&step.caller).chain(&step.callees) {
                if !names.contains(n.as_str()) {
                    return bad(format!("step {} names unknown node {n}", i + 1));
                }
            }
            if step.callees.contains(&step.caller) {
                return bad(format!("step {} calls itself", i + 1));
            }
        }
        for a in &self.anomalies {
            let Some(step) = a.step.checked_sub(1).and_then(|i| self.flow.get(i)) else {
                return bad(format!("anomaly at step {} is outside the flow", a.step));
            };
            if let Some(c) = &a.callee {
                if !step.callees.contains(c) {
                    return bad(format!("anomaly callee {c} is not called at step {}", a.step));
                }
            }
        }
        for at in &self.attacks {
            if let Some(t) = &at.target {
                if !names.contains(t.as_str()) {
                    return bad(format!("attack target {t} is not in the roster"));
                }
            }
        }
        Ok(())
    }
}

pub struct Environment {
    pub trail: AuditTrail,
    pub ca: Signer,
    pub nodes: BTreeMap<String, Signer>,
    pub credentials: BTreeMap<String, VerifiableCredential>,
    attacker: Option<Signer>,
    rng: ChaCha8Rng,
    extra_vcs: u64,
}

impl Environment {
    pub fn did(&self, name: &str) -> Result<Address> {
        self.nodes
            .get(name)
            .map(Signer::address)
            .ok_or_else(|| Error::InvalidScenario(format!("unknown node {name}")))
    }

    pub fn roster(&self) -> BTreeMap<String, Address> {
        self.nodes.iter().map(|(n, s)| (n.clone(), s.address())).collect()
    }

    fn nonce(&mut self) -> [u8; 16] {
        self.rng.gen()
    }

    fn enroll(&mut self, name: &str, node_type: NodeType) -> Result<(Signer, VerifiableCredential)> {
        let signer = Signer::generate(&mut self.rng);
        let mut req = RegistrationRequest::new(format!("aat:node:{name}"), node_type);
        req.functionality = name.to_string();
        self.trail.register(&signer, req)?;
        self.trail.request_credential(&signer, &[("name", name)], None)?;
        let vc = self.trail.approve_vc(&self.ca, &signer.address())?;
        Ok((signer, vc))
    }
}

/// Fresh ledger, CA and credentialed roster, all keyed from `spec.seed`.
pub fn build_network(spec: &ScenarioSpec, config: TrailConfig) -> Result<Environment> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ca = Signer::generate(&mut rng);
    let trail = AuditTrail::genesis(Ledger::in_memory(), &ca, config)?;
    let mut env = Environment {
        trail,
        ca,
        nodes: BTreeMap::new(),
        credentials: BTreeMap::new(),
        attacker: None,
        rng,
        extra_vcs: 0,
    };
    for entry in &spec.roster {
        let (signer, vc) = env.enroll(&entry.name, entry.node_type)?;
        env.nodes.insert(entry.name.clone(), signer);
        env.credentials.insert(entry.name.clone(), vc);
    }
    Ok(env)
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TruthEdge {
    pub step: usize,
    pub caller: Address,
    pub callee: Address,
    pub action_type: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct GroundTruth {
    pub trajectory_id: Option<TrajectoryId>,
    /// Every edge the flow describes.
    pub intended: Vec<TruthEdge>,
    /// Edges actually logged; intended minus interrupted steps.
    pub performed: Vec<TruthEdge>,
    /// Nodes the injected anomalies implicate.
    pub culprits: BTreeSet<Address>,
    /// Performed fan-outs as (caller, callees).
    pub forks: BTreeSet<(Address, BTreeSet<Address>)>,
    pub has_fork: bool,
    /// Ledger ticks spanning the run, issuance included.
    pub interval: (u64, u64),
}

fn step_hash(id: &TrajectoryId, step: usize, caller: &Address) -> Hash32 {
    Hash32::of(format!("{id}:{step}:{}", caller.did()).as_bytes())
}

/// Issues one trajectory id and plays the flow, honouring anomalies.
pub fn run_flow(env: &mut Environment, spec: &ScenarioSpec) -> Result<GroundTruth> {
    let mut truth = GroundTruth::default();
    let Some(first) = spec.flow.first() else {
        return Ok(truth);
    };
    let origin = env.did(&first.caller)?;
    let id = env.trail.issue_trajectory_id(&env.ca, &origin)?;
    truth.trajectory_id = Some(id);
    let t0 = env.trail.now();

    let cut = spec
        .anomalies
        .iter()
        .filter(|a| a.kind == AnomalyKind::Interruption)
        .map(|a| a.step)
        .min()
        .unwrap_or(usize::MAX);

    for (i, step) in spec.flow.iter().enumerate() {
        let n = i + 1;
        let caller = env.did(&step.caller)?;
        let callees = step.callees.iter().map(|c| env.did(c)).collect::<Result<Vec<_>>>()?;
        let edges: Vec<TruthEdge> = callees
            .iter()
            .map(|c| TruthEdge { step: n, caller, callee: *c, action_type: step.action_type.clone() })
            .collect();
        truth.intended.extend(edges.iter().cloned());
        if callees.len() > 1 {
            truth.has_fork = true;
        }
        if n >= cut {
            continue;
        }
        truth.performed.extend(edges);
        if callees.len() > 1 {
            truth.forks.insert((caller, callees.iter().copied().collect()));
        }

        let hash = step_hash(&id, n, &caller);
        let signer = env.nodes[&step.caller].clone();
        env.trail.log_interaction(&signer, &callees, &id, &step.action_type, hash)?;

        for (name, callee) in step.callees.iter().zip(&callees) {
            let hit = |kind| {
                spec.anomalies
                    .iter()
                    .any(|a| a.step == n && a.kind == kind && a.callee.as_ref().is_none_or(|c| c == name))
            };
            if hit(AnomalyKind::MissingInfo) {
                truth.culprits.insert(*callee);
                continue;
            }
            let ack = if hit(AnomalyKind::Tampering) {
                truth.culprits.insert(*callee);
                Hash32::of(&[hash.0.as_slice(), b"tampered"].concat())
            } else {
                hash
            };
            let signer = env.nodes[name].clone();
            env.trail.acknowledge(&signer, &caller, &id, ack)?;
        }
    }
    truth.interval = (t0, env.trail.now());
    Ok(truth)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AttackOutcome {
    pub kind: AttackKind,
    pub target: Address,
    pub rejected: bool,
    pub reason: Option<RejectReason>,
    pub expected: RejectReason,
}

impl AttackOutcome {
    pub fn as_expected(&self) -> bool {
        self.rejected && self.reason == Some(self.expected)
    }
}

fn verdict_reason(v: &Verdict) -> Option<RejectReason> {
    match v {
        Verdict::Accept => None,
        Verdict::Reject(r) => Some(*r),
    }
}

impl Environment {
    fn attacker(&mut self) -> Result<Signer> {
        if let Some(a) = &self.attacker {
            return Ok(a.clone());
        }
        let (signer, _) = self.enroll("mallory", NodeType::AiAgent)?;
        self.attacker = Some(signer.clone());
        Ok(signer)
    }

    fn victim(&self, target: Option<&str>) -> Result<String> {
        match target {
            Some(t) => Ok(t.to_string()),
            None => self
                .nodes
                .keys()
                .next()
                .cloned()
                .ok_or_else(|| Error::InvalidScenario("roster is empty".into())),
        }
    }

    /// A roster node presents its own credential; verified within the window.
    pub fn legitimate_presentation(&mut self) -> Result<Verdict> {
        let names: Vec<String> = self.nodes.keys().cloned().collect();
        let name = &names[self.rng.gen_range(0..names.len())];
        let holder = self.nodes[name].clone();
        let vc = self.credentials[name].clone();
        let now = self.trail.now();
        let window = self.trail.config().replay_window;
        let delay = self.rng.gen_range(0..=window.min(3));
        let nonce = self.nonce();
        let p = Presentation::create(&holder, vc, nonce, now);
        Ok(self.trail.verify_presentation(&p, now + delay))
    }

    /// Builds one attack against `target` and records the verifier's verdict.
    pub fn attack(&mut self, kind: AttackKind, target: Option<&str>) -> Result<AttackOutcome> {
        let name = self.victim(target)?;
        let victim = self.nodes.get(&name).cloned().ok_or_else(|| Error::InvalidScenario(format!("unknown node {name}")))?;
        let vc = self.credentials[&name].clone();
        let now = self.trail.now();
        let window = self.trail.config().replay_window;
        let nonce = self.nonce();

        let (verdict, expected) = match kind {
            AttackKind::VcForgery => {
                let attacker = self.attacker()?;
                let mut forged = vc.clone();
                match self.rng.gen_range(0..3) {
                    0 => {
                        let at = self.rng.gen_range(0..forged.claims.len());
                        forged.claims[at] ^= 1 << self.rng.gen_range(0..8);
                    }
                    1 => forged.issuer_signature = Some(attacker.sign(&forged.vc_hash.0)),
                    _ => forged.expires_at = Some(now + 1_000_000),
                }
                let p = Presentation::create(&victim, forged, nonce, now);
                (self.trail.verify_presentation(&p, now), RejectReason::ForgedOrTampered)
            }
            AttackKind::VcTransfer => {
                let attacker = self.attacker()?;
                let p = Presentation::create(&attacker, vc, nonce, now);
                (self.trail.verify_presentation(&p, now), RejectReason::HolderMismatch)
            }
            AttackKind::Replay => {
                let p = Presentation::create(&victim, vc, nonce, now);
                let first = self.trail.verify_presentation(&p, now);
                if !first.is_accept() {
                    return Err(Error::InvalidScenario(format!("original presentation rejected: {first:?}")));
                }
                let delay = self.rng.gen_range(1..=3);
                let expected = if delay > window { RejectReason::Stale } else { RejectReason::Replay };
                (self.trail.verify_presentation(&p, now + delay), expected)
            }
            AttackKind::RevokedUse => {
                self.extra_vcs += 1;
                let serial = self.extra_vcs.to_string();
                self.trail.request_credential(&victim, &[("name", name.as_str()), ("serial", serial.as_str())], None)?;
                let extra = self.trail.approve_vc(&self.ca, &victim.address())?;
                self.trail.revoke_vc(&self.ca, &extra.vc_hash)?;
                let now = self.trail.now();
                let p = Presentation::create(&victim, extra, nonce, now);
                (self.trail.verify_presentation(&p, now), RejectReason::Revoked)
            }
        };
        let reason = verdict_reason(&verdict);
        Ok(AttackOutcome { kind, target: victim.address(), rejected: reason.is_some(), reason, expected })
    }
}

/// Every attack in `spec.attacks`, `spec.rounds` times each.
pub fn run_attack_suite(env: &mut Environment, spec: &ScenarioSpec) -> Result<Vec<AttackOutcome>> {
    let mut out = Vec::new();
    for _ in 0..spec.rounds {
        for a in &spec.attacks {
            out.push(env.attack(a.kind, a.target.as_deref())?);
        }
    }
    Ok(out)
}
