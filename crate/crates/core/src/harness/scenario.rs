//! End-to-end scenario runs.

use std::collections::BTreeMap;
use std::sync::Arc;
use std::time::Instant;

use sha2::{Digest, Sha256};

use super::fairness::eligible;
use super::report::Report;
use crate::config::ScenarioConfig;
use crate::ledger::Role;
use crate::sim::{SessionRecord, SimError, SystemKeys, World, WorldOptions};
use crate::stats::{summarize, Summary};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LedgerTotals {
    pub bs: u64,
    pub es: u64,
    pub sp: u64,
    pub records: usize,
    /// SHA-256 of the ledger's canonical state, hex.
    pub fingerprint: String,
}

/// Wall-clock figures. Never part of the deterministic output.
#[derive(Debug, Clone, PartialEq)]
pub struct Timing {
    pub total_ms: f64,
    pub per_session_ms: Option<Summary>,
    /// `(upper bound in ms, sessions)`; the last bucket is open-ended.
    pub histogram: Vec<(Option<u64>, u64)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioReport {
    pub config: ScenarioConfig,
    pub sessions: Vec<SessionRecord>,
    pub outcomes: BTreeMap<String, u64>,
    pub served_by: BTreeMap<String, u64>,
    pub ledger: LedgerTotals,
    pub messages: u64,
    pub trace_digest: [u8; 32],
    pub timing: Option<Timing>,
}

const BUCKETS_MS: [u64; 6] = [10, 20, 50, 100, 200, 500];

fn histogram(samples: &[f64]) -> Vec<(Option<u64>, u64)> {
    let mut out: Vec<(Option<u64>, u64)> = BUCKETS_MS.iter().map(|&b| (Some(b), 0)).collect();
    out.push((None, 0));
    for &s in samples {
        let i = BUCKETS_MS.iter().position(|&b| s < b as f64).unwrap_or(BUCKETS_MS.len());
        out[i].1 += 1;
    }
    out
}

/// Registers everyone, runs the configured sessions, settles claims.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioReport, SimError> {
    let keys = Arc::new(SystemKeys::for_config(config)?);
    run_scenario_with(config, keys, WorldOptions::default())
}

pub fn run_scenario_with(
    config: &ScenarioConfig,
    keys: Arc<SystemKeys>,
    options: WorldOptions,
) -> Result<ScenarioReport, SimError> {
    let started = Instant::now();
    let mut world = World::new(config.clone(), keys, options)?;
    world.register()?;
    let mut per_session = Vec::with_capacity(config.total_sessions() as usize);
    let users = config.users;
    for s in &config.sessions {
        for _ in 0..s.count {
            let uid = (world.records().len() as u32 % users) + 1;
            let t = Instant::now();
            world.run_session(uid, &s.service, s.data.as_bytes())?;
            per_session.push(t.elapsed().as_secs_f64() * 1e3);
        }
    }
    world.claim_all()?;
    let mut outcomes = BTreeMap::new();
    let mut served_by = BTreeMap::new();
    for r in world.records() {
        *outcomes.entry(r.outcome.label()).or_insert(0) += 1;
        if let Some(es) = r.outcome.served_by() {
            *served_by.entry(es.to_owned()).or_insert(0) += 1;
        }
    }
    let ledger = world.fa().ledger();
    let totals = LedgerTotals {
        bs: ledger.total_paid(Role::Bs),
        es: ledger.total_paid(Role::Es),
        sp: ledger.total_paid(Role::Sp),
        records: ledger.records().len(),
        fingerprint: hex::encode(Sha256::digest(ledger.fingerprint())),
    };
    let timing = Timing {
        total_ms: started.elapsed().as_secs_f64() * 1e3,
        per_session_ms: summarize(&per_session),
        histogram: histogram(&per_session),
    };
    Ok(ScenarioReport {
        config: config.clone(),
        sessions: world.records().to_vec(),
        outcomes,
        served_by,
        ledger: totals,
        messages: world.net().delivered(),
        trace_digest: world.net().trace_digest(),
        timing: Some(timing),
    })
}

impl ScenarioReport {
    /// The report with wall-clock data removed, so seeded runs compare equal.
    pub fn deterministic(&self) -> Self {
        Self { timing: None, ..self.clone() }
    }

    pub fn completed(&self) -> u64 {
        self.outcomes.get("completed").copied().unwrap_or(0)
    }

    /// Broken run invariants, empty when the run is consistent: outcome
    /// counts cover every session, every session was served by an ES eligible
    /// for its service, and the ledger paid exactly once per served session.
    pub fn violations(&self) -> Vec<String> {
        let mut out = Vec::new();
        let counted: u64 = self.outcomes.values().sum();
        if counted != self.sessions.len() as u64 {
            out.push(format!("{counted} outcomes for {} sessions", self.sessions.len()));
        }
        for r in &self.sessions {
            if let Some(es) = r.outcome.served_by() {
                if !eligible(&self.config, &r.service).contains_key(es) {
                    out.push(format!("session {} for `{}` served by ineligible `{es}`", r.index, r.service));
                }
            }
        }
        let done = self.completed();
        let p = self.config.payments;
        for (role, paid, each) in [("bs", self.ledger.bs, p.bs), ("es", self.ledger.es, p.es), ("sp", self.ledger.sp, p.sp)] {
            if paid != done * each {
                out.push(format!("ledger paid {role} {paid}, expected {}", done * each));
            }
        }
        out
    }
}

impl Report for ScenarioReport {
    fn title(&self) -> String {
        format!("scenario ({}, {}-bit, seed {})", self.config.scheme, self.config.security_level.bits(), self.config.seed.unwrap_or(0))
    }

    fn summary(&self) -> Vec<(String, String)> {
        let mut out = vec![("sessions".to_owned(), self.sessions.len().to_string())];
        for (k, v) in &self.outcomes {
            out.push((format!("outcome.{k}"), v.to_string()));
        }
        for (k, v) in &self.served_by {
            out.push((format!("served_by.{k}"), v.to_string()));
        }
        out.push(("ledger.bs".into(), self.ledger.bs.to_string()));
        out.push(("ledger.es".into(), self.ledger.es.to_string()));
        out.push(("ledger.sp".into(), self.ledger.sp.to_string()));
        out.push(("ledger.records".into(), self.ledger.records.to_string()));
        out.push(("ledger.fingerprint".into(), self.ledger.fingerprint.clone()));
        out.push(("messages".into(), self.messages.to_string()));
        out.push(("trace_digest".into(), hex::encode(self.trace_digest)));
        if let Some(t) = &self.timing {
            out.push(("timing.total_ms".into(), format!("{:.1}", t.total_ms)));
            if let Some(s) = &t.per_session_ms {
                out.push((
                    "timing.session_ms".into(),
                    format!("median {:.2} (95% {:.2}..{:.2})", s.median, s.ci_low, s.ci_high),
                ));
            }
            for (bound, n) in &t.histogram {
                let key = match bound {
                    Some(b) => format!("timing.lt_{b}ms"),
                    None => "timing.rest".into(),
                };
                out.push((key, n.to_string()));
            }
        }
        out
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["index", "user", "service", "outcome", "served_by"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.sessions
            .iter()
            .map(|r| {
                vec![
                    r.index.to_string(),
                    r.user.to_string(),
                    r.service.clone(),
                    r.outcome.label(),
                    r.outcome.served_by().unwrap_or("").to_owned(),
                ]
            })
            .collect()
    }
}
