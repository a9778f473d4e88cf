use std::net::TcpListener;
use std::path::Path;
use std::process::{Child, Command, Output, Stdio};
use std::thread;
use std::time::Duration;

use sa2fe::config::ScenarioConfig;
use sa2fe::Scheme;

fn sa2fe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sa2fe")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_config(dir: &Path, cfg: &ScenarioConfig) -> String {
    let path = dir.join("scenario.toml");
    std::fs::write(&path, cfg.to_toml()).unwrap();
    path.display().to_string()
}

#[test]
fn seeded_scenario_reports_are_identical() {
    let args = ["run-scenario", "--seed", "9", "--sessions", "4", "--format", "json-lines"];
    let a = sa2fe(&args);
    let b = sa2fe(&args);
    assert_eq!(a.status.code(), Some(0), "{}", String::from_utf8_lossy(&a.stderr));
    assert_eq!(a.stdout, b.stdout);
    assert_eq!(stdout(&a).lines().count(), 5);
    assert!(stdout(&a).contains(r#""outcome.completed":"4""#));
}

#[test]
fn scenario_from_file_with_no_servers_rejects_every_session() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::two_service_topology(Scheme::BilinearMap, 2, 2, 1);
    cfg.edge_servers.clear();
    for s in &mut cfg.services {
        s.allow.clear();
    }
    let path = write_config(dir.path(), &cfg);
    let out = sa2fe(&["run-scenario", "--config", &path, "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert_eq!(text.matches("rejected:no-providers").count(), 3, "{text}");
}

#[test]
fn fairness_without_eligible_servers_is_a_violation() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::two_service_topology(Scheme::UniversalReenc, 2, 0, 0);
    cfg.edge_servers.retain(|e| e.id == "e2");
    for s in &mut cfg.services {
        s.allow.retain(|e| e == "e2");
    }
    let path = write_config(dir.path(), &cfg);
    let out = sa2fe(&["fairness", "--config", &path, "--sessions", "3", "--service", "s1"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stdout(&out).contains("verdict    fail"), "{}", stdout(&out));
}

#[test]
fn attacks_pass_and_report_their_reasons() {
    let out = sa2fe(&["attacks", "--runs", "2", "--attack", "forged-token", "--attack", "puzzle-replay"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = stdout(&out);
    assert!(text.contains("rejected:invalid-token"));
    assert!(text.contains("rejected:puzzle-replay"));
    assert!(text.contains("verdict"));
}

#[test]
fn configuration_errors_exit_with_3() {
    assert_eq!(sa2fe(&["run-scenario", "--no-such-flag"]).status.code(), Some(3));
    assert_eq!(sa2fe(&["fairness", "--config", "/definitely/missing.toml"]).status.code(), Some(3));
    assert_eq!(sa2fe(&["fairness", "--service", "nope"]).status.code(), Some(3));
    assert_eq!(sa2fe(&["bench-puzzle", "--level", "7"]).status.code(), Some(3));
    assert_eq!(sa2fe(&["serve", "--role", "es"]).status.code(), Some(3));
    assert_eq!(sa2fe(&["--help"]).status.code(), Some(0));
}

#[test]
fn bench_emits_a_table_per_scheme() {
    let out = sa2fe(&["bench-puzzle", "--counts", "1,2", "--min-ops", "4", "--format", "csv"]);
    assert_eq!(out.status.code(), Some(0));
    let text = stdout(&out);
    assert!(text.starts_with("scheme,count,op,median_ms,ci_low_ms,ci_high_ms,samples\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 2 * 3);
}

struct Nodes(Vec<Child>);

impl Drop for Nodes {
    fn drop(&mut self) {
        for c in &mut self.0 {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}

#[test]
fn tcp_deployment_from_a_keystore() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = ScenarioConfig::two_service_topology(Scheme::UniversalReenc, 17, 0, 0);
    for name in ["fa", "bs", "sp:sp1", "sp:sp2", "es:e1", "es:e2", "es:e3"] {
        let port = TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap().port();
        cfg.network.insert(name.into(), format!("127.0.0.1:{port}").parse().unwrap());
    }
    let config = write_config(dir.path(), &cfg);
    let keys = dir.path().join("keys.json").display().to_string();
    let out = sa2fe(&["keygen", "--config", &config, "--out", &keys]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));

    let roles: [(&str, Option<&str>); 7] =
        [("fa", None), ("bs", None), ("sp", Some("sp1")), ("sp", Some("sp2")), ("es", Some("e1")), ("es", Some("e2")), ("es", Some("e3"))];
    let nodes = Nodes(
        roles
            .iter()
            .map(|(role, id)| {
                let mut cmd = Command::new(env!("CARGO_BIN_EXE_sa2fe"));
                cmd.args(["serve", "--config", &config, "--keys", &keys, "--role", role, "--run-for", "120"]);
                if let Some(id) = id {
                    cmd.args(["--id", id]);
                }
                cmd.stdout(Stdio::null()).stderr(Stdio::null()).spawn().unwrap()
            })
            .collect(),
    );

    let mut text = String::new();
    for _ in 0..60 {
        let out = sa2fe(&["client", "--config", &config, "--keys", &keys, "--service", "s1", "--data", "ping"]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        text = stdout(&out);
        // Until every SP and ES has registered, the FA or BS refuses for lack of them.
        if !text.contains("no-providers") && !text.contains("unknown-service") {
            break;
        }
        thread::sleep(Duration::from_millis(250));
    }
    assert_eq!(text, "0 completed ping\n");
    drop(nodes);
}
