use std::sync::Arc;

use sa2fe::config::ScenarioConfig;
use sa2fe::ledger::Role;
use sa2fe::sim::{SessionOutcome, SystemKeys, World, WorldOptions};
use sa2fe::Scheme;

fn world(s1: u32, s2: u32) -> World {
    let cfg = ScenarioConfig::two_service_topology(Scheme::UniversalReenc, 11, s1, s2);
    let keys = Arc::new(SystemKeys::for_config(&cfg).unwrap());
    World::new(cfg, keys, WorldOptions::default()).unwrap()
}

#[test]
fn sessions_complete_on_eligible_servers_and_everyone_is_paid() {
    let mut w = world(6, 6);
    w.register().unwrap();
    assert_eq!(w.bs().latest_batch().len(), 4);
    w.run_configured_sessions().unwrap();
    for r in w.records() {
        let SessionOutcome::Completed { served_by, response } = &r.outcome else {
            panic!("session {} ended {:?}", r.index, r.outcome);
        };
        let allowed: &[&str] = if r.service == "s1" { &["e1", "e3"] } else { &["e1", "e2"] };
        assert!(allowed.contains(&served_by.as_str()), "{} served {}", served_by, r.service);
        assert_eq!(response, format!("{} job", r.service).as_bytes());
    }
    w.claim_all().unwrap();
    let ledger = w.fa().ledger();
    let p = ledger.payments();
    assert_eq!(ledger.total_paid(Role::Bs), 12 * p.bs);
    assert_eq!(ledger.total_paid(Role::Es), 12 * p.es);
    assert_eq!(ledger.total_paid(Role::Sp), 12 * p.sp);
    assert_eq!(w.undeliverable(), 0);
}

#[test]
fn no_edge_servers_means_no_providers() {
    let mut cfg = ScenarioConfig::two_service_topology(Scheme::UniversalReenc, 11, 3, 0);
    cfg.edge_servers.clear();
    for s in &mut cfg.services {
        s.allow.clear();
    }
    let mut w = World::from_config(cfg).unwrap();
    w.register().unwrap();
    w.run_configured_sessions().unwrap();
    assert_eq!(w.records().len(), 3);
    for r in w.records() {
        assert_eq!(r.outcome.label(), "rejected:no-providers");
    }
}
