//! `sa2fe`: run scenarios, attacks, fairness and benchmark experiments, or
//! one protocol party as a TCP node.
//!
//! Exit codes: 0 success, 2 an invariant was violated, 3 bad configuration
//! or arguments, 1 anything else.

use std::path::PathBuf;
use std::process::ExitCode;
use std::sync::atomic::AtomicBool;
use std::sync::Arc;
use std::time::Duration;

use clap::{Args, Parser, Subcommand, ValueEnum};
use sa2fe::config::{ConfigError, ScenarioConfig, SessionConfig};
use sa2fe::harness::attacks::{run_attacks_with, Attack, AttackError, DEFAULT_RUNS};
use sa2fe::harness::bench::{bench_puzzle, BenchReport, Op, DEFAULT_COUNTS, DEFAULT_MIN_OPS};
use sa2fe::harness::fairness::run_fairness_with;
use sa2fe::harness::scenario::run_scenario_with;
use sa2fe::harness::{write_report, Format, Report};
use sa2fe::node::{run_client, serve, NodeError, NodeOptions};
use sa2fe::puzzle::PuzzleError;
use sa2fe::sim::{SimError, SystemKeys, WorldOptions};
use sa2fe::wire::PartyId;
use sa2fe::{Scheme, SecurityLevel};
use thiserror::Error;

#[derive(Parser, Debug)]
#[command(name = "sa2fe", version, about = "Anonymous, fair edge offloading: simulator and nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct Common {
    /// Scenario file (TOML). Defaults to the two-service, three-server topology.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config's puzzle scheme.
    #[arg(long)]
    scheme: Option<Scheme>,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Keystore written by `keygen`; otherwise keys are derived from the seed.
    #[arg(long)]
    keys: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "text")]
    format: Format,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate platform, service and puzzle keys for a scenario.
    Keygen {
        #[command(flatten)]
        common: Common,
    },
    /// Run the configured sessions end to end over the loopback transport.
    RunScenario {
        #[command(flatten)]
        common: Common,
        /// Replace every session count with this one.
        #[arg(long)]
        sessions: Option<u32>,
        /// Include wall-clock timings (the report is then not reproducible).
        #[arg(long)]
        timings: bool,
    },
    /// Chi-square test of which ES serves a service.
    Fairness {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 10_000)]
        sessions: u32,
        #[arg(long, default_value = "s1")]
        service: String,
    },
    /// Scripted attacks; fails unless every one is refused for the expected reason.
    Attacks {
        #[command(flatten)]
        common: Common,
        /// Runs per attack.
        #[arg(long, alias = "sessions", default_value_t = DEFAULT_RUNS)]
        runs: u32,
        /// Only these attacks (repeatable). Default: all.
        #[arg(long = "attack")]
        attacks: Vec<Attack>,
    },
    /// Time puzzle generation, matching and rerandomization across list sizes.
    BenchPuzzle {
        /// Both schemes when omitted.
        #[arg(long)]
        scheme: Option<Scheme>,
        #[arg(long, default_value_t = 128)]
        level: u16,
        #[arg(long, value_delimiter = ',', default_values_t = DEFAULT_COUNTS)]
        counts: Vec<usize>,
        /// Minimum single-puzzle operations per list size.
        #[arg(long, default_value_t = DEFAULT_MIN_OPS)]
        min_ops: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Exit 2 unless matching is monotone in list size with a linear fit of R² >= 0.9.
        #[arg(long)]
        check_shape: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "text")]
        format: Format,
    },
    /// Run one party as a TCP node at its address in the config's `network` table.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        role: NodeRole,
        /// SP or ES id.
        #[arg(long)]
        id: Option<String>,
        /// Stop after this many seconds.
        #[arg(long)]
        run_for: Option<u64>,
        /// Persist the FA's claim ledger in this directory.
        #[arg(long)]
        ledger_dir: Option<PathBuf>,
    },
    /// A user buying tokens and offloading over TCP.
    Client {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "s1")]
        service: String,
        #[arg(long, default_value = "hello")]
        data: String,
        #[arg(long, default_value_t = 1)]
        sessions: u32,
        /// Per-reply timeout in seconds.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
}

#[derive(ValueEnum, Debug, Clone, Copy)]
enum NodeRole {
    Fa,
    Sp,
    Bs,
    Es,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Node(#[from] NodeError),
    #[error(transparent)]
    Attack(#[from] AttackError),
    #[error(transparent)]
    Puzzle(#[from] PuzzleError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    /// The run finished but broke an invariant.
    #[error("invariant violated: {0}")]
    Violation(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Violation(_) => 2,
            CliError::Config(_)
            | CliError::Usage(_)
            | CliError::Sim(SimError::Config(_) | SimError::Keystore(_))
            | CliError::Node(NodeError::Config(_) | NodeError::UnknownRole(_))
            | CliError::Node(NodeError::Sim(SimError::Config(_) | SimError::Keystore(_))) => 3,
            CliError::Attack(AttackError::Sim(SimError::Config(_))) => 3,
            _ => 1,
        }
    }
}

fn load_config(common: &Common) -> Result<ScenarioConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::two_service_topology(Scheme::UniversalReenc, 1, 1, 0),
    };
    if let Some(s) = common.scheme {
        cfg.scheme = s;
    }
    if let Some(seed) = common.seed {
        cfg.seed = Some(seed);
    }
    cfg.validate()?;
    Ok(cfg)
}

fn load_keys(common: &Common, cfg: &ScenarioConfig) -> Result<Arc<SystemKeys>, CliError> {
    let keys = match &common.keys {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|source| ConfigError::Io { path: path.display().to_string(), source })?;
            SystemKeys::from_json(&text)?
        }
        None => SystemKeys::for_config(cfg)?,
    };
    keys.check_config(cfg)?;
    Ok(Arc::new(keys))
}

fn emit(report: &dyn Report, format: Format, out: Option<&PathBuf>) -> Result<(), CliError> {
    write_report(report, format, out.map(PathBuf::as_path))?;
    Ok(())
}

fn keygen(common: Common) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    let keys = SystemKeys::for_config(&cfg)?;
    let json = keys.to_json();
    match &common.out {
        Some(path) => std::fs::write(path, json)?,
        None => println!("{json}"),
    }
    Ok(())
}

fn run_scenario(common: Common, sessions: Option<u32>, timings: bool) -> Result<(), CliError> {
    let mut cfg = load_config(&common)?;
    if let Some(n) = sessions {
        if cfg.sessions.is_empty() {
            let service = cfg.services.first().ok_or_else(|| CliError::Usage("config defines no services".into()))?;
            cfg.sessions.push(SessionConfig { service: service.name.clone(), count: n, data: "job".into() });
        }
        for s in &mut cfg.sessions {
            s.count = n;
        }
    }
    let keys = load_keys(&common, &cfg)?;
    let report = run_scenario_with(&cfg, keys, WorldOptions::default())?;
    let report = if timings { report } else { report.deterministic() };
    emit(&report, common.format, common.out.as_ref())?;
    let broken = report.violations();
    if !broken.is_empty() {
        return Err(CliError::Violation(broken.join("; ")));
    }
    Ok(())
}

fn fairness(common: Common, sessions: u32, service: String) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    if cfg.service(&service).is_none() {
        return Err(ConfigError::Invalid(format!("unknown service `{service}`")).into());
    }
    let keys = load_keys(&common, &cfg)?;
    let report = run_fairness_with(&cfg, keys, &service, sessions)?;
    emit(&report, common.format, common.out.as_ref())?;
    if !report.passes() {
        return Err(CliError::Violation(format!("selection for `{service}` is not uniform")));
    }
    Ok(())
}

fn attacks(common: Common, runs: u32, mut which: Vec<Attack>) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    for s in ["s1", "s2"] {
        if cfg.service(s).is_none() {
            return Err(ConfigError::Invalid(format!("the attack suite needs a service named `{s}`")).into());
        }
    }
    if which.is_empty() {
        which = Attack::ALL.to_vec();
    }
    let keys = load_keys(&common, &cfg)?;
    let report = run_attacks_with(&cfg, keys, &which, runs)?;
    emit(&report, common.format, common.out.as_ref())?;
    if !report.all_defeated() {
        return Err(CliError::Violation("an attack was not refused as expected".into()));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn bench(
    scheme: Option<Scheme>,
    level: u16,
    counts: Vec<usize>,
    min_ops: usize,
    seed: u64,
    check_shape: bool,
    out: Option<PathBuf>,
    format: Format,
) -> Result<(), CliError> {
    let level = SecurityLevel::try_from(level).map_err(|e| CliError::Usage(e.to_string()))?;
    if counts.is_empty() || counts.contains(&0) {
        return Err(CliError::Usage("--counts needs positive list sizes".into()));
    }
    let schemes = match scheme {
        Some(s) => vec![s],
        None => vec![Scheme::BilinearMap, Scheme::UniversalReenc],
    };
    let mut report: Option<BenchReport> = None;
    for s in &schemes {
        let r = bench_puzzle(*s, level, &counts, min_ops, seed)?;
        report = Some(match report {
            Some(acc) => acc.merge(r),
            None => r,
        });
    }
    let report = report.expect("at least one scheme");
    emit(&report, format, out.as_ref())?;
    if check_shape {
        for s in schemes {
            let fit = report.fit(s, Op::Match).map(|f| f.r_squared).unwrap_or(0.0);
            if !report.monotone(s, Op::Match) || fit < 0.9 {
                return Err(CliError::Violation(format!("{s} matching: monotone {}, R² {fit:.3}", report.monotone(s, Op::Match))));
            }
        }
    }
    Ok(())
}

fn node(common: Common, role: NodeRole, id: Option<String>, run_for: Option<u64>, ledger_dir: Option<PathBuf>) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    let keys = load_keys(&common, &cfg)?;
    let need_id = |id: Option<String>| id.ok_or_else(|| CliError::Usage("--id is required for sp and es".into()));
    let me = match role {
        NodeRole::Fa => PartyId::Fa,
        NodeRole::Bs => PartyId::Bs,
        NodeRole::Sp => PartyId::Sp(need_id(id)?),
        NodeRole::Es => PartyId::Es(need_id(id)?),
    };
    let options = NodeOptions { run_for: run_for.map(Duration::from_secs), ledger_dir, ..NodeOptions::default() };
    let summary = serve(&cfg, &keys, me, &options, Arc::new(AtomicBool::new(false)))?;
    println!("{} handled {} frames", summary.role, summary.handled);
    for (k, v) in summary.details {
        println!("  {k}  {v}");
    }
    Ok(())
}

fn client(common: Common, service: String, data: String, sessions: u32, timeout: u64) -> Result<(), CliError> {
    let cfg = load_config(&common)?;
    let keys = load_keys(&common, &cfg)?;
    let nonce = rand::random();
    let outcomes = run_client(&cfg, &keys, &service, data.as_bytes(), sessions, nonce, Duration::from_secs(timeout))?;
    for (i, o) in outcomes.iter().enumerate() {
        match o {
            sa2fe::node::ClientOutcome::Completed(resp) => println!("{i} completed {}", String::from_utf8_lossy(resp)),
            other => println!("{i} {}", other.label()),
        }
    }
    Ok(())
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Keygen { common } => keygen(common),
        Command::RunScenario { common, sessions, timings } => run_scenario(common, sessions, timings),
        Command::Fairness { common, sessions, service } => fairness(common, sessions, service),
        Command::Attacks { common, runs, attacks: which } => attacks(common, runs, which),
        Command::BenchPuzzle { scheme, level, counts, min_ops, seed, check_shape, out, format } => {
            bench(scheme, level, counts, min_ops, seed, check_shape, out, format)
        }
        Command::Serve { common, role, id, run_for, ledger_dir } => node(common, role, id, run_for, ledger_dir),
        Command::Client { common, service, data, sessions, timeout } => client(common, service, data, sessions, timeout),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            // Help and version are not errors; bad arguments are a configuration error.
            return if e.use_stderr() { ExitCode::from(3) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
