use std::sync::Arc;

use sa2fe::conformance::{random_trace, read_trace, replay, trace_keys, write_trace, Decision, TraceOutcome};
use sa2fe::sim::SystemKeys;
use sa2fe::Scheme;

fn keys() -> Arc<SystemKeys> {
    trace_keys(Scheme::UniversalReenc, 0x7ace).unwrap()
}

fn explain(outcome: &TraceOutcome) -> String {
    outcome
        .mismatches()
        .map(|(i, r)| format!("#{i} {:?}: real {:?} ideal {:?}", r.step, r.real, r.ideal))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn random_traces_agree_with_the_model() {
    let keys = keys();
    let mut seen = std::collections::HashSet::new();
    for seed in 0..12 {
        let (_, _, outcome) = random_trace(&keys, seed, 30).unwrap();
        assert!(outcome.conforms(), "seed {seed}\n{}\nconservation {:?}", explain(&outcome), outcome.conservation);
        for r in &outcome.results {
            for d in &r.real {
                seen.insert(std::mem::discriminant(d));
            }
        }
    }
    // The generator reaches every decision kind except the unmapped one.
    for d in [
        Decision::Success,
        Decision::Fail,
        Decision::List(1),
        Decision::InvalidToken,
        Decision::InvalidPuzzle,
        Decision::Forwarded(String::new()),
        Decision::Abort,
        Decision::Claimed,
    ] {
        assert!(seen.contains(&std::mem::discriminant(&d)), "never produced {d:?}");
    }
}

#[test]
fn recorded_trace_replays_identically() {
    let keys = keys();
    let (cfg, steps, outcome) = random_trace(&keys, 99, 25).unwrap();
    let text = write_trace(&steps);
    assert_eq!(text.lines().count(), steps.len());
    let parsed = read_trace(&text).unwrap();
    assert_eq!(parsed, steps);
    let again = replay(&keys, cfg, 99, &parsed).unwrap();
    assert_eq!(again, outcome);
}
