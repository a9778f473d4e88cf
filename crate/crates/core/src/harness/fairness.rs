//! Which edge server ends up serving a service, over many sessions.

use std::collections::BTreeMap;
use std::sync::Arc;

use super::report::Report;
use crate::config::{ScenarioConfig, SessionConfig};
use crate::sim::{SimError, SystemKeys, World, WorldOptions};
use crate::stats::{chi_square, ChiSquare};

/// Significance level of the uniformity test.
pub const ALPHA: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessReport {
    pub service: String,
    pub sessions: u64,
    /// Completed sessions per eligible ES.
    pub counts: BTreeMap<String, u64>,
    /// Expected selection probability per eligible ES.
    pub expected: BTreeMap<String, f64>,
    /// Sessions that did not complete or landed on an ineligible ES.
    pub anomalies: u64,
    pub chi_square: Option<ChiSquare>,
}

impl FairnessReport {
    pub fn share(&self, esid: &str) -> f64 {
        let served: u64 = self.counts.values().sum();
        if served == 0 {
            return 0.0;
        }
        self.counts.get(esid).copied().unwrap_or(0) as f64 / served as f64
    }

    /// Uniformity holds at [`ALPHA`]; a single eligible ES must get everything.
    pub fn passes(&self) -> bool {
        if self.anomalies > 0 || self.counts.is_empty() {
            return false;
        }
        match &self.chi_square {
            Some(c) => c.p_value > ALPHA,
            None => self.counts.len() == 1,
        }
    }
}

/// Edge servers that both offer `service` and are allowed by its provider,
/// with their weights.
pub fn eligible(config: &ScenarioConfig, service: &str) -> BTreeMap<String, u32> {
    let allow = config.service(service).map(|s| s.allow.clone()).unwrap_or_default();
    config
        .edge_servers
        .iter()
        .filter(|e| e.services.iter().any(|s| s == service) && allow.contains(&e.id))
        .map(|e| (e.id.clone(), e.weight))
        .collect()
}

pub fn run_fairness(config: &ScenarioConfig, service: &str, sessions: u32) -> Result<FairnessReport, SimError> {
    let keys = Arc::new(SystemKeys::for_config(config)?);
    run_fairness_with(config, keys, service, sessions)
}

pub fn run_fairness_with(
    config: &ScenarioConfig,
    keys: Arc<SystemKeys>,
    service: &str,
    sessions: u32,
) -> Result<FairnessReport, SimError> {
    let mut cfg = config.clone();
    cfg.sessions = vec![SessionConfig { service: service.to_owned(), count: sessions, data: "fairness".into() }];
    let weights = eligible(&cfg, service);
    let total: u32 = weights.values().sum();
    let mut world = World::new(cfg, keys, WorldOptions::default())?;
    world.register()?;
    world.run_configured_sessions()?;
    let mut counts: BTreeMap<String, u64> = weights.keys().map(|k| (k.clone(), 0)).collect();
    let mut anomalies = 0;
    for r in world.records() {
        match r.outcome.served_by().and_then(|es| counts.get_mut(es)) {
            Some(n) => *n += 1,
            None => anomalies += 1,
        }
    }
    let expected: BTreeMap<String, f64> =
        weights.iter().map(|(k, &w)| (k.clone(), f64::from(w) / f64::from(total.max(1)))).collect();
    let observed: Vec<u64> = counts.values().copied().collect();
    let probs: Vec<f64> = expected.values().copied().collect();
    Ok(FairnessReport {
        service: service.to_owned(),
        sessions: u64::from(sessions),
        chi_square: chi_square(&observed, &probs),
        counts,
        expected,
        anomalies,
    })
}

impl Report for FairnessReport {
    fn title(&self) -> String {
        format!("fairness for `{}` over {} sessions", self.service, self.sessions)
    }

    fn summary(&self) -> Vec<(String, String)> {
        let mut out = vec![("anomalies".to_owned(), self.anomalies.to_string())];
        if let Some(c) = &self.chi_square {
            out.push(("chi_square".into(), format!("{:.4}", c.statistic)));
            out.push(("dof".into(), c.dof.to_string()));
            out.push(("p_value".into(), format!("{:.6}", c.p_value)));
        }
        out.push(("alpha".into(), ALPHA.to_string()));
        out.push(("verdict".into(), if self.passes() { "pass" } else { "fail" }.into()));
        out
    }

    fn header(&self) -> Vec<&'static str> {
        vec!["es", "served", "share", "expected"]
    }

    fn rows(&self) -> Vec<Vec<String>> {
        self.counts
            .iter()
            .map(|(es, n)| {
                vec![es.clone(), n.to_string(), format!("{:.4}", self.share(es)), format!("{:.4}", self.expected[es])]
            })
            .collect()
    }
}
