//! Scenario description: services, parties, topology and seeds.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::Payments;
use crate::puzzle::{Scheme, SecurityLevel};
use crate::workload::Workload;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("invalid scenario: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServiceConfig {
    pub name: String,
    pub provider: String,
    #[serde(default = "default_workload")]
    pub workload: Workload,
    /// Edge servers the provider will hand credentials to.
    pub allow: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EdgeServerConfig {
    pub id: String,
    pub services: Vec<String>,
    /// Puzzles published per service; selection probability scales with it.
    #[serde(default = "default_weight")]
    pub weight: u32,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SessionConfig {
    pub service: String,
    pub count: u32,
    #[serde(default)]
    pub data: String,
}

/// Listen addresses for TCP mode, keyed by party id (`fa`, `bs`, `sp:x`, `es:x`).
pub type AddressBook = BTreeMap<String, SocketAddr>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    #[serde(default = "default_level")]
    pub security_level: SecurityLevel,
    pub seed: Option<u64>,
    /// Size of the user pool; sessions are assigned round-robin.
    #[serde(default = "default_users")]
    pub users: u32,
    #[serde(default)]
    pub payments: Payments,
    #[serde(default)]
    pub services: Vec<ServiceConfig>,
    #[serde(default)]
    pub edge_servers: Vec<EdgeServerConfig>,
    #[serde(default)]
    pub sessions: Vec<SessionConfig>,
    #[serde(default)]
    pub network: AddressBook,
}

fn default_workload() -> Workload {
    Workload::Echo
}

fn default_weight() -> u32 {
    1
}

fn default_level() -> SecurityLevel {
    SecurityLevel::Bits128
}

fn default_users() -> u32 {
    8
}

impl ScenarioConfig {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    /// Two services over three edge servers: `e1` offers both, `e2` only
    /// `s2`, `e3` only `s1`.
    pub fn two_service_topology(scheme: Scheme, seed: u64, s1_sessions: u32, s2_sessions: u32) -> Self {
        let service = |name: &str, provider: &str, allow: &[&str]| ServiceConfig {
            name: name.into(),
            provider: provider.into(),
            workload: Workload::Echo,
            allow: allow.iter().map(|s| s.to_string()).collect(),
        };
        let es = |id: &str, services: &[&str]| EdgeServerConfig {
            id: id.into(),
            services: services.iter().map(|s| s.to_string()).collect(),
            weight: 1,
        };
        let mut sessions = Vec::new();
        for (name, count) in [("s1", s1_sessions), ("s2", s2_sessions)] {
            if count > 0 {
                sessions.push(SessionConfig { service: name.into(), count, data: format!("{name} job") });
            }
        }
        Self {
            scheme,
            security_level: SecurityLevel::Bits128,
            seed: Some(seed),
            users: default_users(),
            payments: Payments::default(),
            services: vec![service("s1", "sp1", &["e1", "e3"]), service("s2", "sp2", &["e1", "e2"])],
            edge_servers: vec![es("e1", &["s1", "s2"]), es("e2", &["s2"]), es("e3", &["s1"])],
            sessions,
            network: AddressBook::new(),
        }
    }

    pub fn total_sessions(&self) -> u64 {
        self.sessions.iter().map(|s| u64::from(s.count)).sum()
    }

    /// Seed for deterministic runs; an error if absent.
    pub fn require_seed(&self) -> Result<u64, ConfigError> {
        self.seed.ok_or_else(|| ConfigError::Invalid("deterministic mode needs `seed`".into()))
    }

    /// Service provider ids in declaration order, without repeats.
    pub fn providers(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        self.services.iter().filter(|s| seen.insert(s.provider.clone())).map(|s| s.provider.clone()).collect()
    }

    pub fn service(&self, name: &str) -> Option<&ServiceConfig> {
        self.services.iter().find(|s| s.name == name)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |msg: String| Err(ConfigError::Invalid(msg));
        if self.users == 0 {
            return bad("`users` must be at least 1".into());
        }
        let mut names = BTreeSet::new();
        for s in &self.services {
            if s.name.is_empty() || s.provider.is_empty() {
                return bad("service and provider names must be non-empty".into());
            }
            if !names.insert(s.name.as_str()) {
                return bad(format!("service `{}` declared twice", s.name));
            }
        }
        let mut ids = BTreeSet::new();
        for es in &self.edge_servers {
            if es.id.is_empty() {
                return bad("edge server ids must be non-empty".into());
            }
            if !ids.insert(es.id.as_str()) {
                return bad(format!("edge server `{}` declared twice", es.id));
            }
            if es.weight == 0 {
                return bad(format!("edge server `{}` has weight 0", es.id));
            }
            for s in &es.services {
                if !names.contains(s.as_str()) {
                    return bad(format!("edge server `{}` offers unknown service `{s}`", es.id));
                }
            }
        }
        for s in &self.services {
            for es in &s.allow {
                if !ids.contains(es.as_str()) {
                    return bad(format!("service `{}` allows unknown edge server `{es}`", s.name));
                }
            }
        }
        for sess in &self.sessions {
            if !names.contains(sess.service.as_str()) {
                return bad(format!("sessions reference unknown service `{}`", sess.service));
            }
        }
        for key in self.network.keys() {
            if key.parse::<crate::wire::PartyId>().is_err() {
                return bad(format!("network entry `{key}` is not a party id"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SAMPLE: &str = r#"
scheme = "universal-reenc"
seed = 7

[[services]]
name = "s1"
provider = "sp1"
workload = "sum-bytes"
allow = ["e1"]

[[edge_servers]]
id = "e1"
services = ["s1"]
weight = 2

[[sessions]]
service = "s1"
count = 3
data = "abc"
"#;

    #[test]
    fn parses_sample() {
        let cfg = ScenarioConfig::from_toml(SAMPLE).unwrap();
        assert_eq!(cfg.scheme, Scheme::UniversalReenc);
        assert_eq!(cfg.security_level, SecurityLevel::Bits128);
        assert_eq!(cfg.edge_servers[0].weight, 2);
        assert_eq!(cfg.services[0].workload, Workload::SumBytes);
        assert_eq!(cfg.total_sessions(), 3);
        assert_eq!(cfg.payments, Payments::default());
    }

    #[test]
    fn toml_round_trip() {
        let cfg = ScenarioConfig::two_service_topology(Scheme::BilinearMap, 3, 5, 6);
        assert_eq!(ScenarioConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }

    #[test]
    fn dangling_references_rejected() {
        let broken = SAMPLE.replace("allow = [\"e1\"]", "allow = [\"e9\"]");
        assert!(matches!(ScenarioConfig::from_toml(&broken), Err(ConfigError::Invalid(_))));
        let broken = SAMPLE.replace("service = \"s1\"\ncount", "service = \"s4\"\ncount");
        assert!(matches!(ScenarioConfig::from_toml(&broken), Err(ConfigError::Invalid(_))));
    }

    #[test]
    fn missing_seed_is_reported() {
        let cfg = ScenarioConfig::from_toml(&SAMPLE.replace("seed = 7", "")).unwrap();
        assert!(cfg.require_seed().is_err());
    }
}
