//! All five roles wired together over the deterministic loopback transport.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::{Arc, Mutex, OnceLock};

use thiserror::Error;

use serde::{Deserialize, Serialize};

use crate::blind::{blind_setup, BlindError, BlindKeyPair, BlindPublicKey, BlindSecretKey, KeyRole};
use crate::config::{ConfigError, EdgeServerConfig, ScenarioConfig, ServiceConfig};
use crate::ledger::log::LogError;
use crate::ledger::ClaimLedger;
use crate::parties::fa::VoucherPolicy;
use crate::parties::user::Outcome;
use crate::parties::{
    bs::BsStep, party_rng, BaseStation, EdgeServer, FinancialAuthority, Outbound, Party, ServiceProvider, User,
};
use crate::puzzle::{puzzle_setup, PuzzleError, PuzzleParams, PuzzleTrapdoor, Scheme, SecurityLevel};
use crate::symmetric::ServiceKey;
use crate::wire::transport::{FaultPlan, Loopback, Transport};
use crate::wire::{Envelope, PartyId, RejectReason, SessionId};

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("puzzle setup: {0}")]
    Puzzle(#[from] PuzzleError),
    #[error("key generation: {0}")]
    Blind(#[from] BlindError),
    #[error("ledger: {0}")]
    Ledger(#[from] LogError),
    #[error("message pump did not quiesce after {0} deliveries")]
    Runaway(u64),
    #[error("keystore: {0}")]
    Keystore(String),
}

#[derive(Debug, Clone)]
pub struct ServiceSecrets {
    pub keypair: BlindKeyPair,
    pub service_key: ServiceKey,
}

/// Long-term key material for one scenario.
#[derive(Debug, Clone)]
pub struct SystemKeys {
    pub scheme: Scheme,
    pub level: SecurityLevel,
    pub platform: BlindKeyPair,
    pub services: BTreeMap<String, ServiceSecrets>,
    pub params: PuzzleParams,
    pub trapdoor: PuzzleTrapdoor,
}

type KeyCache = Mutex<BTreeMap<(SecurityLevel, u64, String), BlindKeyPair>>;

/// RSA keygen dominates setup time, so keypairs are memoized per
/// `(level, seed, label)`. Each key has its own derived RNG, which keeps the
/// result independent of what else was generated.
fn cached_keypair(level: SecurityLevel, seed: u64, label: &str, role: KeyRole) -> Result<BlindKeyPair, BlindError> {
    static CACHE: OnceLock<KeyCache> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    let key = (level, seed, label.to_owned());
    if let Some(kp) = cache.lock().expect("key cache poisoned").get(&key) {
        return Ok(kp.clone());
    }
    let kp = blind_setup(role, level, &mut party_rng(seed, &format!("rsa:{label}")))?;
    cache.lock().expect("key cache poisoned").insert(key, kp.clone());
    Ok(kp)
}

impl SystemKeys {
    pub fn generate(scheme: Scheme, level: SecurityLevel, seed: u64, services: &[String]) -> Result<Self, SimError> {
        let platform = cached_keypair(level, seed, "platform", KeyRole::Platform)?;
        let mut map = BTreeMap::new();
        for name in services {
            let keypair = cached_keypair(level, seed, &format!("service:{name}"), KeyRole::Service(name.clone()))?;
            let service_key = ServiceKey::generate(&mut party_rng(seed, &format!("service-key:{name}")));
            map.insert(name.clone(), ServiceSecrets { keypair, service_key });
        }
        let (params, trapdoor) = puzzle_setup(scheme, level, &mut party_rng(seed, &format!("puzzle-setup:{scheme}")))?;
        Ok(Self { scheme, level, platform, services: map, params, trapdoor })
    }

    pub fn for_config(config: &ScenarioConfig) -> Result<Self, SimError> {
        let names: Vec<String> = config.services.iter().map(|s| s.name.clone()).collect();
        Self::generate(config.scheme, config.security_level, config.require_seed()?, &names)
    }

    pub fn directory(&self) -> BTreeMap<String, BlindPublicKey> {
        self.services.iter().map(|(n, s)| (n.clone(), s.keypair.public.clone())).collect()
    }

    /// JSON with every field hex-encoded. Holds all secrets of the scenario.
    pub fn to_json(&self) -> String {
        let file = KeystoreFile {
            scheme: self.scheme,
            security_level: self.level,
            platform: StoredKeyPair::from(&self.platform),
            services: self
                .services
                .iter()
                .map(|(n, s)| {
                    (n.clone(), StoredService { keypair: StoredKeyPair::from(&s.keypair), service_key: hex::encode(s.service_key.0) })
                })
                .collect(),
            params: hex::encode(self.params.to_bytes()),
            trapdoor: hex::encode(self.trapdoor.to_bytes()),
        };
        serde_json::to_string_pretty(&file).expect("plain data serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, SimError> {
        let bad = |e: &dyn std::fmt::Display| SimError::Keystore(e.to_string());
        let file: KeystoreFile = serde_json::from_str(text).map_err(|e| bad(&e))?;
        let unhex = |s: &str| hex::decode(s).map_err(|e| bad(&e));
        let platform = file.platform.load(KeyRole::Platform)?;
        let mut services = BTreeMap::new();
        for (name, s) in file.services {
            let keypair = s.keypair.load(KeyRole::Service(name.clone()))?;
            let service_key = ServiceKey(unhex(&s.service_key)?.try_into().map_err(|_| bad(&"service key is not 32 bytes"))?);
            services.insert(name, ServiceSecrets { keypair, service_key });
        }
        let params = PuzzleParams::from_bytes(&unhex(&file.params)?)?;
        let trapdoor = PuzzleTrapdoor::from_bytes(&unhex(&file.trapdoor)?)?;
        if params.scheme() != file.scheme {
            return Err(bad(&"puzzle parameters do not match the recorded scheme"));
        }
        Ok(Self { scheme: file.scheme, level: file.security_level, platform, services, params, trapdoor })
    }

    /// Whether these keys can serve `config` (scheme, level and service set).
    pub fn check_config(&self, config: &ScenarioConfig) -> Result<(), SimError> {
        if self.scheme != config.scheme || self.level != config.security_level {
            return Err(SimError::Keystore(format!(
                "keys are for {} at {} bits, config asks for {} at {} bits",
                self.scheme,
                self.level.bits(),
                config.scheme,
                config.security_level.bits()
            )));
        }
        for s in &config.services {
            if !self.services.contains_key(&s.name) {
                return Err(SimError::Keystore(format!("no keys for service `{}`", s.name)));
            }
        }
        Ok(())
    }
}

#[derive(Serialize, Deserialize)]
struct StoredKeyPair {
    public: String,
    secret: String,
}

impl From<&BlindKeyPair> for StoredKeyPair {
    fn from(kp: &BlindKeyPair) -> Self {
        Self { public: hex::encode(kp.public.to_bytes()), secret: hex::encode(kp.secret.to_bytes()) }
    }
}

impl StoredKeyPair {
    fn load(&self, role: KeyRole) -> Result<BlindKeyPair, SimError> {
        let unhex = |s: &str| hex::decode(s).map_err(|e| SimError::Keystore(e.to_string()));
        let public = BlindPublicKey::from_bytes(&unhex(&self.public)?)?;
        let secret = BlindSecretKey::from_bytes(&unhex(&self.secret)?, &public)?;
        Ok(BlindKeyPair::from_parts(public, secret, role))
    }
}

#[derive(Serialize, Deserialize)]
struct StoredService {
    keypair: StoredKeyPair,
    service_key: String,
}

#[derive(Serialize, Deserialize)]
struct KeystoreFile {
    scheme: Scheme,
    security_level: SecurityLevel,
    platform: StoredKeyPair,
    services: BTreeMap<String, StoredService>,
    params: String,
    trapdoor: String,
}

/// Party constructors shared by [`World`] and standalone nodes. Seeds and
/// RNG labels are the same in both, so a TCP deployment with the same seed
/// draws the same randomness per party.
pub fn build_fa(keys: &SystemKeys, ledger: ClaimLedger) -> FinancialAuthority {
    FinancialAuthority::new(keys.platform.clone(), keys.params.clone(), keys.trapdoor.clone(), VoucherPolicy::AnyOnce, ledger)
}

pub fn build_bs(keys: &SystemKeys, seed: u64) -> BaseStation {
    BaseStation::new(keys.platform.public.clone(), keys.params.clone(), party_rng(seed, "bs"))
}

/// The SP running `service`.
pub fn build_sp(keys: &SystemKeys, service: &ServiceConfig) -> ServiceProvider {
    let secrets = &keys.services[&service.name];
    ServiceProvider::new(
        service.provider.clone(),
        service.name.clone(),
        secrets.service_key.clone(),
        secrets.keypair.clone(),
        service.workload,
        service.allow.iter().cloned().collect(),
    )
}

pub fn build_es(es: &EdgeServerConfig, seed: u64) -> EdgeServer {
    EdgeServer::new(es.id.clone(), es.weight, party_rng(seed, &format!("es:{}", es.id)))
}

pub fn build_user(keys: &SystemKeys, seed: u64, uid: u32) -> User {
    User::new(uid, keys.platform.public.clone(), keys.directory(), party_rng(seed, &format!("user:{uid}")))
}

#[derive(Debug, Clone, Default)]
pub struct WorldOptions {
    pub faults: FaultPlan,
    /// Keep every delivered frame, not just the running digest.
    pub record_trace: bool,
    /// Persist the FA ledger here instead of in memory.
    pub ledger_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SessionOutcome {
    Completed { served_by: String, response: Vec<u8> },
    Rejected(RejectReason),
    Aborted,
    TokenRefused(u8),
    /// The transport lost a message and the session never finished.
    Incomplete,
}

impl SessionOutcome {
    pub fn label(&self) -> String {
        match self {
            SessionOutcome::Completed { .. } => "completed".into(),
            SessionOutcome::Rejected(r) => format!("rejected:{r}"),
            SessionOutcome::Aborted => "aborted".into(),
            SessionOutcome::TokenRefused(code) => match RejectReason::from_code(*code) {
                Some(r) => format!("token-refused:{r}"),
                None => format!("token-refused:{code}"),
            },
            SessionOutcome::Incomplete => "incomplete".into(),
        }
    }

    pub fn served_by(&self) -> Option<&str> {
        match self {
            SessionOutcome::Completed { served_by, .. } => Some(served_by),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SessionRecord {
    pub index: u64,
    pub user: u32,
    pub service: String,
    pub session: Option<SessionId>,
    pub outcome: SessionOutcome,
}

/// Upper bound on deliveries per pump; an honest exchange needs a handful.
const PUMP_LIMIT: u64 = 1 << 20;

pub struct World {
    config: ScenarioConfig,
    keys: Arc<SystemKeys>,
    net: Loopback,
    fa: FinancialAuthority,
    bs: BaseStation,
    sps: BTreeMap<String, ServiceProvider>,
    ess: BTreeMap<String, EdgeServer>,
    users: BTreeMap<u32, User>,
    records: Vec<SessionRecord>,
    vouchers: u64,
    undeliverable: u64,
}

impl World {
    pub fn new(config: ScenarioConfig, keys: Arc<SystemKeys>, options: WorldOptions) -> Result<Self, SimError> {
        config.validate()?;
        let seed = config.require_seed()?;
        let ledger = match &options.ledger_dir {
            Some(dir) => ClaimLedger::open(dir, config.payments, 1024)?,
            None => ClaimLedger::in_memory(config.payments),
        };
        let fa = build_fa(&keys, ledger);
        let bs = build_bs(&keys, seed);
        let sps = config.services.iter().map(|svc| (svc.provider.clone(), build_sp(&keys, svc))).collect();
        let ess = config.edge_servers.iter().map(|e| (e.id.clone(), build_es(e, seed))).collect();
        let users = (1..=config.users).map(|uid| (uid, build_user(&keys, seed, uid))).collect();
        let net = Loopback::new(options.faults);
        net.set_record_trace(options.record_trace);
        Ok(Self { config, keys, net, fa, bs, sps, ess, users, records: Vec::new(), vouchers: 0, undeliverable: 0 })
    }

    pub fn from_config(config: ScenarioConfig) -> Result<Self, SimError> {
        let keys = Arc::new(SystemKeys::for_config(&config)?);
        Self::new(config, keys, WorldOptions::default())
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn keys(&self) -> &SystemKeys {
        &self.keys
    }

    pub fn net(&self) -> &Loopback {
        &self.net
    }

    pub fn fa(&self) -> &FinancialAuthority {
        &self.fa
    }

    pub fn bs(&self) -> &BaseStation {
        &self.bs
    }

    pub fn bs_mut(&mut self) -> &mut BaseStation {
        &mut self.bs
    }

    pub fn es(&self, id: &str) -> Option<&EdgeServer> {
        self.ess.get(id)
    }

    pub fn es_mut(&mut self, id: &str) -> Option<&mut EdgeServer> {
        self.ess.get_mut(id)
    }

    pub fn edge_servers(&self) -> &BTreeMap<String, EdgeServer> {
        &self.ess
    }

    pub fn sp(&self, id: &str) -> Option<&ServiceProvider> {
        self.sps.get(id)
    }

    pub fn user(&self, uid: u32) -> Option<&User> {
        self.users.get(&uid)
    }

    pub fn user_mut(&mut self, uid: u32) -> Option<&mut User> {
        self.users.get_mut(&uid)
    }

    pub fn records(&self) -> &[SessionRecord] {
        &self.records
    }

    /// Messages addressed to parties that do not exist or failed to decode.
    pub fn undeliverable(&self) -> u64 {
        self.undeliverable
    }

    fn party_mut(&mut self, id: &PartyId) -> Option<&mut dyn Party> {
        match id {
            PartyId::Fa => Some(&mut self.fa),
            PartyId::Bs => Some(&mut self.bs),
            PartyId::Sp(x) => self.sps.get_mut(x).map(|p| p as &mut dyn Party),
            PartyId::Es(x) => self.ess.get_mut(x).map(|p| p as &mut dyn Party),
            PartyId::User(u) => self.users.get_mut(u).map(|p| p as &mut dyn Party),
        }
    }

    /// Queues `out` as if `from` had sent it. Any sender may be forged.
    pub fn send(&self, from: &PartyId, out: Outbound) {
        self.net.send(from, &out.to, &out.envelope).expect("loopback is open");
    }

    pub fn send_all(&self, from: &PartyId, outs: Vec<Outbound>) {
        for out in outs {
            self.send(from, out);
        }
    }

    /// Delivers until no frame is pending. Returns the number delivered.
    pub fn pump(&mut self) -> Result<u64, SimError> {
        let mut n = 0;
        while let Some(next) = self.net.deliver_next() {
            n += 1;
            if n > PUMP_LIMIT {
                return Err(SimError::Runaway(n));
            }
            let (src, dst, envelope) = match next {
                Ok(frame) => frame,
                Err(e) => {
                    log::warn!("dropping undecodable frame: {e}");
                    self.undeliverable += 1;
                    continue;
                }
            };
            let Some(party) = self.party_mut(&dst) else {
                self.undeliverable += 1;
                continue;
            };
            let outs = party.handle(&src, envelope);
            self.send_all(&dst, outs);
        }
        Ok(n)
    }

    /// SPs register with the FA, ESs fetch credentials and publish puzzles.
    pub fn register(&mut self) -> Result<(), SimError> {
        for sp in self.sps.values() {
            self.send(&sp.id(), sp.register_with_fa());
        }
        self.pump()?;
        let offers: Vec<(String, String, String)> = self
            .config
            .edge_servers
            .iter()
            .flat_map(|e| {
                e.services.iter().map(|s| {
                    let provider = self.config.service(s).expect("validated reference").provider.clone();
                    (e.id.clone(), provider, s.clone())
                })
            })
            .collect();
        for (esid, spid, s_type) in offers {
            let es = self.ess.get_mut(&esid).expect("configured edge server");
            let out = es.register_with_sp(&spid, &s_type);
            self.send(&PartyId::Es(esid), out);
        }
        self.pump()?;
        let ids: Vec<String> = self.ess.keys().cloned().collect();
        for esid in ids {
            let outs = self.ess.get_mut(&esid).expect("listed").register_with_bs();
            self.send_all(&PartyId::Es(esid), outs);
        }
        self.pump()?;
        Ok(())
    }

    fn next_voucher(&mut self) -> Vec<u8> {
        self.vouchers += 1;
        format!("voucher-{}", self.vouchers).into_bytes()
    }

    /// Buys one token for `uid`. Returns its wallet index on success, the FA's
    /// status code otherwise.
    pub fn buy_token(&mut self, uid: u32, s_type: &str) -> Result<Result<usize, u8>, SimError> {
        let voucher = self.next_voucher();
        let user = self.users.get_mut(&uid).expect("known user");
        let before = user.wallet().len();
        let Some(out) = user.request_token(s_type, &voucher) else {
            return Ok(Err(RejectReason::UnknownService.code()));
        };
        self.send(&PartyId::User(uid), out);
        self.pump()?;
        let user = &self.users[&uid];
        if user.wallet().len() > before {
            return Ok(Ok(before));
        }
        let status = match user.token_results().last() {
            Some((_, crate::parties::user::TokenOutcome::Refused(code))) => *code,
            _ => RejectReason::InvalidSignature.code(),
        };
        Ok(Err(status))
    }

    /// Starts an offload with wallet entry `index` and runs it to quiescence.
    pub fn offload_with(&mut self, uid: u32, index: usize, data: &[u8]) -> Result<(SessionId, SessionOutcome), SimError> {
        let user = self.users.get_mut(&uid).expect("known user");
        let (sid, out) = user.start_with(index, data).expect("wallet index in range");
        self.send(&PartyId::User(uid), out);
        self.pump()?;
        Ok((sid, self.outcome_of(uid, &sid)))
    }

    /// Maps a user's session to its outcome, taking the serving ES from the
    /// BS's relay decision.
    pub fn outcome_of(&self, uid: u32, sid: &SessionId) -> SessionOutcome {
        let Some(session) = self.users[&uid].session(sid) else {
            return SessionOutcome::Incomplete;
        };
        match &session.outcome {
            Outcome::Completed(response) => {
                let served_by = self
                    .bs
                    .decisions()
                    .iter()
                    .rev()
                    .find(|d| &d.session == sid && d.step == BsStep::Submit)
                    .and_then(|d| d.outcome.clone().ok().flatten())
                    .unwrap_or_default();
                SessionOutcome::Completed { served_by, response: response.clone() }
            }
            Outcome::Rejected(r) => SessionOutcome::Rejected(*r),
            Outcome::Aborted => SessionOutcome::Aborted,
            Outcome::Pending => SessionOutcome::Incomplete,
        }
    }

    /// One honest session: buy a token, offload, record the outcome.
    pub fn run_session(&mut self, uid: u32, s_type: &str, data: &[u8]) -> Result<&SessionRecord, SimError> {
        let index = self.records.len() as u64;
        let record = match self.buy_token(uid, s_type)? {
            Err(code) => SessionRecord {
                index,
                user: uid,
                service: s_type.to_owned(),
                session: None,
                outcome: SessionOutcome::TokenRefused(code),
            },
            Ok(wallet_index) => {
                let (sid, outcome) = self.offload_with(uid, wallet_index, data)?;
                SessionRecord { index, user: uid, service: s_type.to_owned(), session: Some(sid), outcome }
            }
        };
        self.records.push(record);
        Ok(self.records.last().expect("just pushed"))
    }

    /// Runs every configured session, users assigned round-robin.
    pub fn run_configured_sessions(&mut self) -> Result<(), SimError> {
        let plan: Vec<(String, Vec<u8>, u32)> =
            self.config.sessions.iter().map(|s| (s.service.clone(), s.data.clone().into_bytes(), s.count)).collect();
        let users = self.config.users;
        for (service, data, count) in plan {
            for _ in 0..count {
                let uid = (self.records.len() as u32 % users) + 1;
                self.run_session(uid, &service, &data)?;
            }
        }
        Ok(())
    }

    /// BS and every ES claim what they are owed.
    pub fn claim_all(&mut self) -> Result<(), SimError> {
        let outs = self.bs.claim_all();
        self.send_all(&PartyId::Bs, outs);
        let ids: Vec<String> = self.ess.keys().cloned().collect();
        for esid in ids {
            let outs = self.ess.get_mut(&esid).expect("listed").claim_all();
            self.send_all(&PartyId::Es(esid), outs);
        }
        self.pump()?;
        Ok(())
    }

    /// Delivers one frame directly, bypassing the transport. For trace
    /// drivers that need the reply of a single step.
    pub fn deliver(&mut self, from: &PartyId, to: &PartyId, envelope: Envelope) -> Result<(), SimError> {
        let outs = match self.party_mut(to) {
            Some(p) => p.handle(from, envelope),
            None => {
                self.undeliverable += 1;
                Vec::new()
            }
        };
        self.send_all(to, outs);
        self.pump()?;
        Ok(())
    }
}
