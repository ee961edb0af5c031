use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Serialize, Serializer};

use super::{build_network, run_attack_suite, run_flow, AttackOutcome, Environment, GroundTruth, ScenarioSpec, PRESETS};
use crate::error::Result;
use crate::graph::{detect_forks, trace_source, TrajectoryGraph};
use crate::ledger::Address;
use crate::risk::RiskReport;
use crate::trail::TrailConfig;
use crate::trajectory::TrajectoryId;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Ratio {
    pub hits: u64,
    pub total: u64,
}

impl Ratio {
    pub fn record(&mut self, hit: bool) {
        self.total += 1;
        self.hits += u64::from(hit);
    }

    /// `None` when nothing was measured.
    pub fn value(&self) -> Option<f64> {
        (self.total > 0).then(|| self.hits as f64 / self.total as f64)
    }

    fn render(&self) -> String {
        match self.value() {
            Some(v) => format!("{:.1}%", v * 100.0),
            None => "n/a".into(),
        }
    }
}

impl Serialize for Ratio {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("Ratio", 3)?;
        st.serialize_field("hits", &self.hits)?;
        st.serialize_field("total", &self.total)?;
        match self.value() {
            Some(v) => st.serialize_field("value", &v)?,
            None => st.serialize_field("value", "n/a")?,
        }
        st.end()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct Metrics {
    pub integrity_validation: Ratio,
    pub tamper_rejection: Ratio,
    pub audit_trail: Ratio,
    pub attribution_accuracy: Ratio,
    pub multihop_traceability: Ratio,
    pub path_fork_accuracy: Ratio,
}

impl Metrics {
    pub fn named(&self) -> [(&'static str, Ratio); 6] {
        [
            ("Integrity Validation", self.integrity_validation),
            ("Tamper Rejection", self.tamper_rejection),
            ("Audit Trail", self.audit_trail),
            ("Attribution Accuracy", self.attribution_accuracy),
            ("Multi-hop Traceability", self.multihop_traceability),
            ("Path Fork Accuracy", self.path_fork_accuracy),
        ]
    }

    /// True when every measured indicator is 1; unmeasured ones are skipped.
    pub fn all_perfect(&self) -> bool {
        self.named().iter().all(|(_, r)| r.value().is_none_or(|v| v == 1.0))
    }
}

/// Two indicator/result column pairs: identity on the left, traceability on the right.
pub fn metrics_table(m: &Metrics) -> String {
    let named = m.named();
    let left: Vec<(String, String)> = named[..2]
        .iter()
        .map(|(n, r)| (n.to_string(), r.render()))
        .chain(std::iter::repeat(("--".to_string(), "--".to_string())))
        .take(4)
        .collect();
    let right: Vec<(String, String)> = named[2..].iter().map(|(n, r)| (n.to_string(), r.render())).collect();
    let w0 = left.iter().map(|r| r.0.len()).max().unwrap_or(0).max("indicator".len());
    let w1 = left.iter().map(|r| r.1.len()).max().unwrap_or(0).max("result".len());
    let w2 = right.iter().map(|r| r.0.len()).max().unwrap_or(0).max("indicator".len());
    let mut out = String::new();
    let _ = writeln!(out, "{:<w0$}  {:<w1$}  {:<w2$}  result", "indicator", "result", "indicator");
    for ((a, b), (c, d)) in left.iter().zip(&right) {
        let _ = writeln!(out, "{a:<w0$}  {b:<w1$}  {c:<w2$}  {d}");
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct ScenarioOutcome {
    pub name: String,
    pub seed: u64,
    pub roster: BTreeMap<String, Address>,
    pub ground_truth: GroundTruth,
    pub recorded: u64,
    pub v_risk: BTreeSet<Address>,
    /// Whether the audit named exactly the culprits; absent without culprits.
    pub attributed: Option<bool>,
    pub multihop: Option<bool>,
    pub fork: Option<bool>,
    pub legitimate: Ratio,
    pub attacks: Vec<AttackOutcome>,
}

fn ancestors(edges: &BTreeSet<(Address, Address)>, node: &Address) -> BTreeSet<Address> {
    let mut found = BTreeSet::new();
    let mut stack = vec![*node];
    while let Some(n) = stack.pop() {
        for (from, _) in edges.iter().filter(|(_, to)| *to == n) {
            if found.insert(*from) {
                stack.push(*from);
            }
        }
    }
    found.remove(node);
    found
}

fn multihop_ok(g: &TrajectoryGraph, performed: &BTreeSet<(Address, Address)>) -> bool {
    let restored: BTreeSet<(Address, Address)> = g.edges.iter().map(|e| (e.caller, e.callee)).collect();
    if &restored != performed {
        return false;
    }
    let callers: BTreeSet<Address> = performed.iter().map(|e| e.0).collect();
    performed.iter().map(|e| e.1).filter(|n| !callers.contains(n)).all(|sink| {
        trace_source(g, &sink).is_ok_and(|r| r.reached == ancestors(performed, &sink))
    })
}

/// Scores one executed flow against its ground truth.
pub fn evaluate(env: &Environment, spec: &ScenarioSpec, truth: &GroundTruth) -> Result<ScenarioOutcome> {
    let mut outcome = ScenarioOutcome {
        name: spec.name.clone(),
        seed: spec.seed,
        roster: env.roster(),
        ground_truth: truth.clone(),
        recorded: 0,
        v_risk: BTreeSet::new(),
        attributed: None,
        multihop: None,
        fork: None,
        legitimate: Ratio::default(),
        attacks: Vec::new(),
    };
    let Some(id) = truth.trajectory_id else {
        return Ok(outcome);
    };

    let logged = env.trail.interactions(&id);
    outcome.recorded = truth
        .performed
        .iter()
        .filter(|t| {
            logged.iter().any(|l| {
                l.event.caller == t.caller && l.event.callee == t.callee && l.event.action_type == t.action_type
            })
        })
        .count() as u64;

    let report = RiskReport {
        interval: truth.interval,
        trajectory_ids: Some(BTreeSet::<TrajectoryId>::from([id])),
        ..Default::default()
    };
    let (t_merge, suspects) = env.trail.mark_suspects(&report)?;
    outcome.v_risk = env.trail.audit_suspects(&t_merge, &suspects, truth.interval)?.v_risk;
    if !truth.culprits.is_empty() {
        outcome.attributed = Some(outcome.v_risk == truth.culprits);
    }

    let g = env.trail.restore(&id)?;
    let performed: BTreeSet<(Address, Address)> = truth.performed.iter().map(|e| (e.caller, e.callee)).collect();
    outcome.multihop = Some(multihop_ok(&g, &performed));
    if truth.has_fork {
        let found: BTreeSet<(Address, BTreeSet<Address>)> = detect_forks(&g)
            .into_iter()
            .map(|f| (f.node, f.out_edges.iter().map(|e| e.callee).collect()))
            .collect();
        outcome.fork = Some(found == truth.forks);
    }
    Ok(outcome)
}

/// Build, flow, score, then attacks and `spec.rounds` legitimate presentations.
pub fn run_scenario(spec: &ScenarioSpec, config: TrailConfig) -> Result<(Environment, ScenarioOutcome)> {
    let mut env = build_network(spec, config)?;
    let truth = run_flow(&mut env, spec)?;
    let mut outcome = evaluate(&env, spec, &truth)?;
    outcome.attacks = run_attack_suite(&mut env, spec)?;
    for _ in 0..spec.rounds {
        outcome.legitimate.record(env.legitimate_presentation()?.is_accept());
    }
    Ok((env, outcome))
}

pub fn aggregate(outcomes: &[ScenarioOutcome]) -> Metrics {
    let mut m = Metrics::default();
    for o in outcomes {
        m.integrity_validation.hits += o.legitimate.hits;
        m.integrity_validation.total += o.legitimate.total;
        for a in &o.attacks {
            m.tamper_rejection.record(a.rejected);
        }
        m.audit_trail.hits += o.recorded;
        m.audit_trail.total += o.ground_truth.performed.len() as u64;
        if let Some(hit) = o.attributed {
            m.attribution_accuracy.record(hit);
        }
        if let Some(hit) = o.multihop {
            m.multihop_traceability.record(hit);
        }
        if let Some(hit) = o.fork {
            m.path_fork_accuracy.record(hit);
        }
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BatchReport {
    pub metrics: Metrics,
    pub scenarios: Vec<ScenarioOutcome>,
    /// Ledger file bytes of each scenario, in order.
    #[serde(skip)]
    pub ledgers: Vec<Vec<u8>>,
}

impl BatchReport {
    pub fn metrics_json(&self) -> String {
        serde_json::to_string_pretty(&self.metrics).expect("metrics serialize")
    }
}

/// Every preset once per seed in `1..=seeds`.
pub fn standard_batch(seeds: u64) -> Result<Vec<ScenarioSpec>> {
    let mut out = Vec::new();
    for (name, _) in PRESETS {
        let base = super::preset(name)?;
        for seed in 1..=seeds {
            out.push(ScenarioSpec { seed, ..base.clone() });
        }
    }
    Ok(out)
}

pub fn run_batch(specs: &[ScenarioSpec], config: TrailConfig) -> Result<BatchReport> {
    let mut scenarios = Vec::with_capacity(specs.len());
    let mut ledgers = Vec::with_capacity(specs.len());
    for spec in specs {
        let (env, outcome) = run_scenario(spec, config)?;
        ledgers.push(env.trail.ledger().to_file_bytes());
        scenarios.push(outcome);
    }
    Ok(BatchReport { metrics: aggregate(&scenarios), scenarios, ledgers })
}
