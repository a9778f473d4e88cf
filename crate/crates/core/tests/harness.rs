use std::sync::Arc;

use sa2fe::config::ScenarioConfig;
use sa2fe::harness::attacks::{run_attacks_with, Attack, Observed};
use sa2fe::harness::bench::{bench_puzzle, Op};
use sa2fe::harness::fairness::run_fairness_with;
use sa2fe::harness::scenario::run_scenario_with;
use sa2fe::harness::{emit_report, Format};
use sa2fe::sim::{SystemKeys, WorldOptions};
use sa2fe::wire::RejectReason;
use sa2fe::{Scheme, SecurityLevel};

fn keys(cfg: &ScenarioConfig) -> Arc<SystemKeys> {
    Arc::new(SystemKeys::for_config(cfg).unwrap())
}

#[test]
fn every_attack_is_refused_for_its_reason() {
    let cfg = ScenarioConfig::two_service_topology(Scheme::UniversalReenc, 11, 0, 0);
    let report = run_attacks_with(&cfg, keys(&cfg), &Attack::ALL, 3).unwrap();
    for r in &report.results {
        assert!(r.all_defeated(), "{}: {:?}", r.attack, r.failures);
    }
    let ds = report.get(Attack::DoubleSpend).unwrap();
    let key = ("concurrent-submit".to_owned(), Observed::Rejected(RejectReason::DoubleSpend).to_string());
    assert_eq!(ds.observed[&key], 3);
    assert!(report.all_defeated());
    let text = emit_report(&report, Format::Text);
    assert!(text.lines().any(|l| l.trim_start().starts_with("inflated-claim ") && l.ends_with("3/3 defeated")), "{text}");
}

#[test]
fn seeded_scenarios_are_reproducible() {
    let cfg = ScenarioConfig::two_service_topology(Scheme::BilinearMap, 5, 4, 3);
    let k = keys(&cfg);
    let a = run_scenario_with(&cfg, k.clone(), WorldOptions::default()).unwrap();
    let b = run_scenario_with(&cfg, k, WorldOptions::default()).unwrap();
    assert_eq!(a.deterministic(), b.deterministic());
    assert_eq!(a.completed(), 7);
    assert_eq!(emit_report(&a.deterministic(), Format::JsonLines), emit_report(&b.deterministic(), Format::JsonLines));
}

#[test]
fn fairness_counts_only_eligible_servers() {
    let cfg = ScenarioConfig::two_service_topology(Scheme::UniversalReenc, 3, 0, 0);
    let report = run_fairness_with(&cfg, keys(&cfg), "s2", 40).unwrap();
    assert_eq!(report.anomalies, 0);
    assert_eq!(report.counts.keys().cloned().collect::<Vec<_>>(), ["e1", "e2"]);
    assert_eq!(report.counts.values().sum::<u64>(), 40);
    assert!(report.chi_square.is_some());
}

#[test]
fn bench_rows_cover_every_size_and_operation() {
    let report = bench_puzzle(Scheme::UniversalReenc, SecurityLevel::Toy, &[2, 4], 8, 1).unwrap();
    assert_eq!(report.rows.len(), 6);
    assert_eq!(report.series(Scheme::UniversalReenc, Op::Match).len(), 2);
    assert!(report.rows.iter().all(|r| r.summary.samples >= 5));
    let csv = emit_report(&report, Format::Csv);
    assert!(csv.starts_with("scheme,count,op,median_ms"));
}
