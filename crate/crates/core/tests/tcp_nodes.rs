use std::net::TcpListener;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::thread;
use std::time::Duration;

use sa2fe::config::ScenarioConfig;
use sa2fe::node::{run_client, serve, ClientOutcome, NodeOptions};
use sa2fe::sim::SystemKeys;
use sa2fe::wire::PartyId;
use sa2fe::Scheme;

fn free_port() -> u16 {
    TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port()
}

#[test]
fn every_party_in_its_own_node() {
    let mut cfg = ScenarioConfig::two_service_topology(Scheme::UniversalReenc, 21, 0, 0);
    for name in ["fa", "bs", "sp:sp1", "sp:sp2", "es:e1", "es:e2", "es:e3"] {
        cfg.network.insert(name.into(), format!("127.0.0.1:{}", free_port()).parse().unwrap());
    }
    let keys = Arc::new(SystemKeys::from_json(&SystemKeys::for_config(&cfg).unwrap().to_json()).unwrap());
    let stop = Arc::new(AtomicBool::new(false));
    let nodes: Vec<_> = cfg
        .network
        .keys()
        .map(|name| {
            let (cfg, keys, stop) = (cfg.clone(), keys.clone(), stop.clone());
            let me: PartyId = name.parse().unwrap();
            thread::spawn(move || serve(&cfg, &keys, me, &NodeOptions::default(), stop).unwrap())
        })
        .collect();

    // Registration runs asynchronously; wait until both services have puzzles listed.
    let mut outcomes = Vec::new();
    for attempt in 0..50 {
        outcomes = run_client(&cfg, &keys, "s1", b"over tcp", 1, attempt, Duration::from_secs(20)).unwrap();
        if outcomes[0] != ClientOutcome::Rejected("no-providers".into()) {
            break;
        }
        thread::sleep(Duration::from_millis(200));
    }
    assert_eq!(outcomes, [ClientOutcome::Completed(b"over tcp".to_vec())]);
    let more = run_client(&cfg, &keys, "s2", b"second", 2, 1000, Duration::from_secs(20)).unwrap();
    assert!(more.iter().all(|o| o == &ClientOutcome::Completed(b"second".to_vec())), "{more:?}");

    // Let the idle BS and ESs claim.
    thread::sleep(Duration::from_millis(800));
    stop.store(true, Ordering::SeqCst);
    let summaries: Vec<_> = nodes.into_iter().map(|h| h.join().unwrap()).collect();
    let fa = summaries.iter().find(|s| s.role == PartyId::Fa).unwrap();
    let get = |k: &str| fa.details.iter().find(|(key, _)| key == k).unwrap().1.clone();
    assert_eq!(get("paid_bs"), "3");
    assert_eq!(get("paid_es"), "24");
    let served: usize = summaries
        .iter()
        .filter(|s| matches!(s.role, PartyId::Es(_)))
        .map(|s| s.details.iter().find(|(k, _)| k == "served").unwrap().1.parse::<usize>().unwrap())
        .sum();
    assert_eq!(served, 3);
}
