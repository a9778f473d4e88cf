//! One party per process over TCP.
//!
//! Every node derives its party from the shared keystore and scenario seed,
//! binds the address the config's `network` table gives it, and handles
//! frames until stopped. SPs and ESs run their registration on start-up,
//! retrying the dial while peers come up. BS and ES claim outstanding
//! tokens whenever their inbox goes idle.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use crate::config::{ConfigError, ScenarioConfig};
use crate::ledger::{ClaimLedger, Role};
use crate::parties::es::EsEvent;
use crate::parties::user::{Outcome, TokenOutcome};
use crate::parties::{BaseStation, EdgeServer, FinancialAuthority, Outbound, Party, ServiceProvider, User};
use crate::sim::{build_bs, build_es, build_fa, build_sp, SimError, SystemKeys};
use crate::wire::tcp::TcpTransport;
use crate::wire::transport::Transport;
use crate::wire::{PartyId, WireError};

#[derive(Debug, Error)]
pub enum NodeError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Wire(#[from] WireError),
    #[error("{0} is not a node in this scenario")]
    UnknownRole(PartyId),
    #[error("timed out: {0}")]
    Timeout(String),
}

#[derive(Debug, Clone)]
pub struct NodeOptions {
    /// How long to block on an empty inbox before idle work.
    pub poll: Duration,
    /// How long sends keep redialling a peer that is not up yet.
    pub connect_timeout: Duration,
    /// Stop after this long; `None` runs until `stop` is set.
    pub run_for: Option<Duration>,
    pub ledger_dir: Option<std::path::PathBuf>,
}

impl Default for NodeOptions {
    fn default() -> Self {
        Self { poll: Duration::from_millis(100), connect_timeout: Duration::from_secs(10), run_for: None, ledger_dir: None }
    }
}

/// Parses the config's `network` table.
pub fn address_book(config: &ScenarioConfig) -> Result<BTreeMap<PartyId, SocketAddr>, ConfigError> {
    config
        .network
        .iter()
        .map(|(k, v)| k.parse::<PartyId>().map(|p| (p, *v)).map_err(ConfigError::Invalid))
        .collect()
}

fn send_retrying(net: &TcpTransport, me: &PartyId, out: &Outbound, patience: Duration) -> Result<(), NodeError> {
    let until = Instant::now() + patience;
    loop {
        match net.send(me, &out.to, &out.envelope) {
            Ok(()) => return Ok(()),
            Err(e) if Instant::now() < until => {
                log::debug!("send to {} failed ({e}), retrying", out.to);
                std::thread::sleep(Duration::from_millis(50));
            }
            Err(e) => return Err(e.into()),
        }
    }
}

enum Node {
    Fa(FinancialAuthority),
    Sp(ServiceProvider),
    Bs(BaseStation),
    /// The count is how many credential answers are still awaited before
    /// the ES publishes its puzzles.
    Es(EdgeServer, Option<usize>),
}

impl Node {
    fn party(&mut self) -> &mut dyn Party {
        match self {
            Node::Fa(p) => p,
            Node::Sp(p) => p,
            Node::Bs(p) => p,
            Node::Es(p, _) => p,
        }
    }

    /// Work to do once inbound frames are handled.
    fn after_handle(&mut self) -> Vec<Outbound> {
        match self {
            Node::Es(es, awaiting @ Some(_)) => {
                let answered = es
                    .events()
                    .iter()
                    .filter(|e| matches!(e, EsEvent::Credentials { .. } | EsEvent::CredentialsRefused { .. }))
                    .count();
                if Some(answered) >= *awaiting {
                    *awaiting = None;
                    return es.register_with_bs();
                }
                Vec::new()
            }
            _ => Vec::new(),
        }
    }

    fn on_idle(&mut self) -> Vec<Outbound> {
        match self {
            Node::Bs(bs) => bs.claim_all(),
            Node::Es(es, None) => es.claim_all(),
            _ => Vec::new(),
        }
    }

    fn summary(&self) -> Vec<(String, String)> {
        match self {
            Node::Fa(fa) => {
                let l = fa.ledger();
                vec![
                    ("tokens_issued".into(), fa.issued().len().to_string()),
                    ("paid_bs".into(), l.total_paid(Role::Bs).to_string()),
                    ("paid_es".into(), l.total_paid(Role::Es).to_string()),
                    ("paid_sp".into(), l.total_paid(Role::Sp).to_string()),
                ]
            }
            Node::Sp(sp) => vec![("registered".into(), sp.is_registered().to_string())],
            Node::Bs(bs) => vec![
                ("forwarded".into(), bs.forwarded().len().to_string()),
                ("claims".into(), bs.claims().len().to_string()),
                ("puzzles".into(), bs.latest_batch().len().to_string()),
            ],
            Node::Es(es, _) => vec![
                ("services".into(), es.services().len().to_string()),
                ("served".into(), es.served().len().to_string()),
            ],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NodeSummary {
    pub role: PartyId,
    pub handled: u64,
    pub details: Vec<(String, String)>,
}

/// Runs `me` until `stop` is set or `options.run_for` elapses.
pub fn serve(
    config: &ScenarioConfig,
    keys: &SystemKeys,
    me: PartyId,
    options: &NodeOptions,
    stop: Arc<AtomicBool>,
) -> Result<NodeSummary, NodeError> {
    config.validate()?;
    keys.check_config(config)?;
    let seed = config.require_seed()?;
    let book = address_book(config)?;
    let listen = *book.get(&me).ok_or_else(|| ConfigError::Invalid(format!("no network address for {me}")))?;
    let (mut node, startup) = match &me {
        PartyId::Fa => {
            let ledger = match &options.ledger_dir {
                Some(dir) => ClaimLedger::open(dir, config.payments, 1024).map_err(SimError::from)?,
                None => ClaimLedger::in_memory(config.payments),
            };
            (Node::Fa(build_fa(keys, ledger)), Vec::new())
        }
        PartyId::Bs => (Node::Bs(build_bs(keys, seed)), Vec::new()),
        PartyId::Sp(spid) => {
            let svc = config.services.iter().find(|s| &s.provider == spid).ok_or_else(|| NodeError::UnknownRole(me.clone()))?;
            let sp = build_sp(keys, svc);
            let out = sp.register_with_fa();
            (Node::Sp(sp), vec![out])
        }
        PartyId::Es(esid) => {
            let cfg = config.edge_servers.iter().find(|e| &e.id == esid).ok_or_else(|| NodeError::UnknownRole(me.clone()))?;
            let mut es = build_es(cfg, seed);
            let outs: Vec<Outbound> = cfg
                .services
                .iter()
                .map(|s| {
                    let provider = &config.service(s).expect("validated reference").provider;
                    es.register_with_sp(provider, s)
                })
                .collect();
            let awaiting = outs.len();
            (Node::Es(es, Some(awaiting)), outs)
        }
        PartyId::User(_) => return Err(NodeError::UnknownRole(me)),
    };
    let net = TcpTransport::bind(me.clone(), listen, book)?;
    log::info!("{me} listening on {}", net.local_addr());
    for out in &startup {
        send_retrying(&net, &me, out, options.connect_timeout)?;
    }
    for out in node.after_handle() {
        send_retrying(&net, &me, &out, options.connect_timeout)?;
    }
    let deadline = options.run_for.map(|d| Instant::now() + d);
    let mut handled = 0;
    while !stop.load(Ordering::SeqCst) && deadline.is_none_or(|d| Instant::now() < d) {
        let outs = match net.recv_timeout(options.poll)? {
            Some((from, envelope)) => {
                handled += 1;
                let mut outs = node.party().handle(&from, envelope);
                outs.extend(node.after_handle());
                outs
            }
            None => node.on_idle(),
        };
        for out in &outs {
            if let Err(e) = send_retrying(&net, &me, out, options.connect_timeout) {
                log::warn!("dropping frame to {}: {e}", out.to);
            }
        }
    }
    net.close();
    Ok(NodeSummary { details: node.summary(), role: me, handled })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ClientOutcome {
    Completed(Vec<u8>),
    Rejected(String),
    Aborted,
    TokenRefused(String),
}

impl ClientOutcome {
    pub fn label(&self) -> String {
        match self {
            ClientOutcome::Completed(_) => "completed".into(),
            ClientOutcome::Rejected(r) => format!("rejected:{r}"),
            ClientOutcome::Aborted => "aborted".into(),
            ClientOutcome::TokenRefused(r) => format!("token-refused:{r}"),
        }
    }
}

fn drive(
    user: &mut User,
    net: &TcpTransport,
    me: &PartyId,
    timeout: Duration,
    done: impl Fn(&User) -> bool,
) -> Result<(), NodeError> {
    let until = Instant::now() + timeout;
    while !done(user) {
        let left = until.saturating_duration_since(Instant::now());
        if left.is_zero() {
            return Err(NodeError::Timeout(format!("user {} waiting for a reply", user.uid())));
        }
        if let Some((from, envelope)) = net.recv_timeout(left.min(Duration::from_millis(200)))? {
            for out in user.handle(&from, envelope) {
                send_retrying(net, me, &out, timeout)?;
            }
        }
    }
    Ok(())
}

/// A user buying a token and offloading `data` to `service`, `sessions`
/// times. `nonce` seeds the user's randomness; reusing it replays tokens.
pub fn run_client(
    config: &ScenarioConfig,
    keys: &SystemKeys,
    service: &str,
    data: &[u8],
    sessions: u32,
    nonce: u64,
    timeout: Duration,
) -> Result<Vec<ClientOutcome>, NodeError> {
    keys.check_config(config)?;
    let book = address_book(config)?;
    let me = PartyId::User(1);
    let net = TcpTransport::client(me.clone(), book)?;
    let mut user = User::new(1, keys.platform.public.clone(), keys.directory(), ChaCha20Rng::seed_from_u64(nonce));
    let mut outcomes = Vec::new();
    for i in 0..sessions {
        let voucher = format!("client-{nonce:016x}-{i}").into_bytes();
        let Some(out) = user.request_token(service, &voucher) else {
            return Err(ConfigError::Invalid(format!("unknown service `{service}`")).into());
        };
        let asked = user.token_results().len();
        send_retrying(&net, &me, &out, timeout)?;
        drive(&mut user, &net, &me, timeout, |u| u.token_results().len() > asked)?;
        match &user.token_results()[asked].1 {
            TokenOutcome::Issued => {}
            TokenOutcome::Refused(code) => {
                outcomes.push(ClientOutcome::TokenRefused(reason_name(*code)));
                continue;
            }
            TokenOutcome::Invalid => {
                outcomes.push(ClientOutcome::TokenRefused("invalid-signature".into()));
                continue;
            }
        }
        let (sid, out) = user.start_offload(service, data).expect("token just issued");
        send_retrying(&net, &me, &out, timeout)?;
        drive(&mut user, &net, &me, timeout, |u| u.session(&sid).is_some_and(|s| s.outcome != Outcome::Pending))?;
        outcomes.push(match &user.session(&sid).expect("started").outcome {
            Outcome::Completed(r) => ClientOutcome::Completed(r.clone()),
            Outcome::Rejected(r) => ClientOutcome::Rejected(r.to_string()),
            Outcome::Aborted => ClientOutcome::Aborted,
            Outcome::Pending => unreachable!("driven to completion"),
        });
    }
    net.close();
    Ok(outcomes)
}

fn reason_name(code: u8) -> String {
    crate::wire::RejectReason::from_code(code).map(|r| r.to_string()).unwrap_or_else(|| code.to_string())
}
