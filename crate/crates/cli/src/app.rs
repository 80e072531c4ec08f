//! Command-line entry point.

use std::cell::RefCell;
use std::future::Future;
use std::io::{BufRead, IsTerminal, Write};
use std::net::{IpAddr, Ipv4Addr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::rc::Rc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use futures::future::LocalBoxFuture;
use futures::FutureExt;
use pcp_core::discovery::{Capability, DiscoveryBackend};
use pcp_core::session::{self, Phase, SendSource, SessionConfig, SessionError, SessionObserver, SessionReport};
use pcp_core::simnet::scenario::{self, Scenario};
use pcp_core::simnet::SimConfig;
use pcp_core::transfer::{Decision, DecisionSource, DirDestination, TransferManifest, TransferStatus};
use pcp_core::{parse_passphrase, Clock, Host, Passphrase};

use crate::exchange::ExchangeBackend;
use crate::lan::LanBackend;
use crate::progress::{human_bytes, ProgressLine};
use crate::tcp::{RealClock, TcpHost};

pub mod exit {
    pub const OK: u8 = 0;
    /// Anything not covered below, e.g. a scenario missing its expectation.
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const TIMEOUT: u8 = 3;
    pub const AUTH: u8 = 4;
    pub const REJECTED: u8 = 5;
    pub const IO: u8 = 6;
    pub const INTERRUPTED: u8 = 7;
}

/// Directory used for shared discovery records when a sim config names none.
pub const DEFAULT_EXCHANGE_DIR: &str = ".pcp-exchange";

#[derive(Debug, Parser)]
#[command(name = "pcp", version, about = "Send a file to whoever knows the words")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Offer FILE and print the words the receiver needs.
    Send {
        /// Number of words in the generated code.
        #[arg(short = 'w', long = "words", default_value_t = 4, value_parser = clap::value_parser!(u8).range(2..=24))]
        words: u8,
        /// Run over loopback with discovery through a shared directory.
        #[arg(long, value_name = "F")]
        sim_config: Option<PathBuf>,
        #[arg(value_name = "FILE")]
        file: PathBuf,
    },
    /// Fetch the file offered under WORDS.
    Receive {
        /// Accept the offered file without asking.
        #[arg(long)]
        yes: bool,
        /// Where to store the file.
        #[arg(long, value_name = "D", default_value = ".")]
        dir: PathBuf,
        #[arg(long, value_name = "F")]
        sim_config: Option<PathBuf>,
        /// The code printed by the sender, e.g. `apple-river-stone-moon`.
        #[arg(value_name = "WORDS")]
        words: String,
    },
    /// Run a built-in scenario on the simulated network and print its trace.
    Simulate {
        #[arg(long, value_name = "F")]
        sim_config: PathBuf,
        /// One of: happy-path, collision, wrong-passphrase, local-vs-global,
        /// slot-boundary, late-sender, partition, tamper.
        #[arg(long, value_name = "S")]
        scenario: String,
    },
}

/// Maps a session result to the process exit status.
pub fn exit_code(result: &Result<SessionReport, SessionError>) -> u8 {
    match result {
        Ok(rep) => match rep.outcome.status {
            TransferStatus::Completed => exit::OK,
            TransferStatus::Rejected => exit::REJECTED,
            TransferStatus::Aborted => exit::IO,
        },
        Err(SessionError::Timeout | SessionError::NotFound) => exit::TIMEOUT,
        Err(SessionError::AuthExhausted) => exit::AUTH,
        Err(SessionError::Io(_) | SessionError::Transfer(_)) => exit::IO,
        Err(SessionError::Passphrase(_) | SessionError::Rendezvous(_)) => exit::USAGE,
        Err(SessionError::NoBackends) => exit::FAILURE,
    }
}

fn color() -> bool {
    std::env::var_os("NO_COLOR").is_none_or(|v| v.is_empty()) && std::io::stderr().is_terminal()
}

fn status(tag: &str, msg: impl std::fmt::Display) {
    if color() {
        eprintln!("\x1b[1;36m{tag:>12}\x1b[0m {msg}");
    } else {
        eprintln!("{tag:>12} {msg}");
    }
}

fn error(msg: impl std::fmt::Display) {
    if color() {
        eprintln!("\x1b[1;31merror:\x1b[0m {msg}");
    } else {
        eprintln!("error: {msg}");
    }
}

fn init_logging() {
    let style = if std::env::var_os("NO_COLOR").is_some_and(|v| !v.is_empty()) {
        env_logger::WriteStyle::Never
    } else {
        env_logger::WriteStyle::Auto
    };
    let _ = env_logger::Builder::new()
        .filter_level(log::LevelFilter::Warn)
        .parse_env(env_logger::Env::new().filter("PCP_LOG"))
        .write_style(style)
        .try_init();
}

fn block_on<F: Future>(f: F) -> F::Output {
    let rt = tokio::runtime::Builder::new_current_thread()
        .enable_all()
        .build()
        .expect("tokio runtime");
    tokio::task::LocalSet::new().block_on(&rt, f)
}

/// Where the session runs: the real network, or loopback TCP plus a shared
/// discovery directory with the timing of a sim config.
enum Mode {
    Real,
    Sim { config: Box<SimConfig>, exchange: PathBuf },
}

struct Env {
    session: SessionConfig,
    mode: Mode,
}

fn load_sim(path: &Path) -> Result<SimConfig, (u8, String)> {
    let text = std::fs::read_to_string(path).map_err(|e| (exit::IO, format!("{}: {e}", path.display())))?;
    SimConfig::from_toml(&text).map_err(|e| (exit::USAGE, format!("{}: {e}", path.display())))
}

impl Env {
    fn load(sim_config: Option<&Path>) -> Result<Env, (u8, String)> {
        let Some(path) = sim_config else {
            return Ok(Env {
                session: SessionConfig::default(),
                mode: Mode::Real,
            });
        };
        let config = load_sim(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let exchange = match &config.exchange {
            Some(x) if x.dir.is_absolute() => x.dir.clone(),
            Some(x) => base.join(&x.dir),
            None => base.join(DEFAULT_EXCHANGE_DIR),
        };
        Ok(Env {
            session: config.session.clone(),
            mode: Mode::Sim {
                config: Box::new(config),
                exchange,
            },
        })
    }

    async fn connect(&self) -> Result<(Rc<dyn Host>, Vec<Rc<dyn DiscoveryBackend>>), String> {
        let seed: [u8; 32] = rand::random();
        match &self.mode {
            Mode::Real => {
                let clock: Rc<dyn Clock> = Rc::new(RealClock::system());
                let host = TcpHost::bind(IpAddr::V4(Ipv4Addr::UNSPECIFIED), clock.clone(), seed)
                    .await
                    .map_err(|e| format!("cannot listen: {e}"))?;
                let lan = LanBackend::start(clock).map_err(|e| format!("local discovery unavailable: {e}"))?;
                Ok((Rc::new(host), vec![Rc::new(lan)]))
            }
            Mode::Sim { config, exchange } => {
                std::fs::create_dir_all(exchange).map_err(|e| format!("{}: {e}", exchange.display()))?;
                let clock: Rc<dyn Clock> = Rc::new(RealClock::starting_at(config.start_time.saturating_mul(1000)));
                let host = TcpHost::bind(IpAddr::V4(Ipv4Addr::LOCALHOST), clock.clone(), seed)
                    .await
                    .map_err(|e| format!("cannot listen: {e}"))?;
                let n = u64::from_le_bytes(seed[..8].try_into().expect("8 bytes"));
                let local = ExchangeBackend::new(exchange, Capability::LocalNetwork, &config.local, clock.clone(), n);
                let dht = ExchangeBackend::new(exchange, Capability::Global, &config.dht, clock, n ^ 1);
                Ok((Rc::new(host), vec![Rc::new(local), Rc::new(dht)]))
            }
        }
    }
}

struct CliObserver {
    started: Instant,
    progress: RefCell<ProgressLine<std::io::Stderr>>,
    announced: RefCell<Vec<Phase>>,
}

impl CliObserver {
    fn new() -> Self {
        CliObserver {
            started: Instant::now(),
            progress: RefCell::new(ProgressLine::new(std::io::stderr(), std::io::stderr().is_terminal())),
            announced: RefCell::new(Vec::new()),
        }
    }

    fn finish(&self) {
        self.progress.borrow_mut().finish();
    }
}

impl SessionObserver for CliObserver {
    fn passphrase(&self, words: &Passphrase) {
        let mut out = std::io::stdout().lock();
        let _ = writeln!(out, "Code is: {words}");
        let _ = out.flush();
        status("Waiting", format!("on the other device run: pcp receive {words}"));
    }

    fn phase(&self, phase: Phase) {
        if self.announced.borrow().contains(&phase) {
            return;
        }
        self.announced.borrow_mut().push(phase);
        match phase {
            Phase::Discovering => status("Discovering", "looking for the peer"),
            Phase::Authenticating => status("Connecting", "checking the code with a peer"),
            Phase::AwaitingConfirmation => status("Verified", "peer knows the code"),
            Phase::Transferring => status("Transferring", "over the encrypted channel"),
            Phase::Done | Phase::Failed => {}
        }
    }

    fn manifest(&self, m: &TransferManifest) {
        status("Offered", format!("{} ({})", m.filename(), human_bytes(m.size())));
    }

    fn progress(&self, done: u64, total: u64) {
        self.progress.borrow_mut().update(done, total, self.started.elapsed());
    }
}

/// Asks on the terminal; anything but y/yes declines.
struct Prompt;

impl DecisionSource for Prompt {
    fn decide(&self, m: &TransferManifest) -> LocalBoxFuture<'static, Decision> {
        eprint!("Accept {} ({})? [y/N] ", m.filename(), human_bytes(m.size()));
        let _ = std::io::stderr().flush();
        tokio::task::spawn_blocking(|| {
            let mut line = String::new();
            let _ = std::io::stdin().lock().read_line(&mut line);
            matches!(line.trim().to_ascii_lowercase().as_str(), "y" | "yes")
        })
        .map(|r| {
            if matches!(r, Ok(true)) {
                Decision::Accept
            } else {
                Decision::Reject
            }
        })
        .boxed_local()
    }
}

async fn interruptible<F: Future<Output = u8>>(f: F) -> u8 {
    tokio::select! {
        code = f => code,
        _ = tokio::signal::ctrl_c() => {
            eprintln!();
            error("interrupted");
            exit::INTERRUPTED
        }
    }
}

fn report_failure(e: &SessionError) {
    match e {
        SessionError::Timeout => error("no peer connected before the deadline"),
        SessionError::NotFound => error("no sender found for this code"),
        SessionError::AuthExhausted => error("found peers, but none knew this code; check the words"),
        other => error(other),
    }
}

fn cmd_send(words: u8, sim_config: Option<&Path>, file: &Path) -> u8 {
    let env = match Env::load(sim_config) {
        Ok(e) => e,
        Err((code, msg)) => {
            error(msg);
            return code;
        }
    };
    let mut config = env.session.clone();
    config.word_count = words as usize;
    block_on(interruptible(async {
        let (host, backends) = match env.connect().await {
            Ok(x) => x,
            Err(msg) => {
                error(msg);
                return exit::IO;
            }
        };
        let observer = CliObserver::new();
        let source = SendSource::from_path(file);
        let result = session::run_sender(&config, &source, host, &backends, &observer).await;
        observer.finish();
        match &result {
            Ok(rep) => match rep.outcome.status {
                TransferStatus::Completed => {
                    println!("Sent {} ({})", file.display(), human_bytes(rep.outcome.bytes));
                }
                TransferStatus::Rejected => error("the receiver declined the file"),
                TransferStatus::Aborted => error(format!(
                    "transfer aborted: {}",
                    rep.outcome.reason.as_deref().unwrap_or("unknown")
                )),
            },
            Err(e) => report_failure(e),
        }
        exit_code(&result)
    }))
}

fn cmd_receive(yes: bool, dir: &Path, sim_config: Option<&Path>, words: &str) -> u8 {
    if let Err(e) = parse_passphrase(words) {
        error(format!("{e}"));
        return exit::USAGE;
    }
    if !dir.is_dir() {
        error(format!("{}: not a directory", dir.display()));
        return exit::IO;
    }
    let env = match Env::load(sim_config) {
        Ok(e) => e,
        Err((code, msg)) => {
            error(msg);
            return code;
        }
    };
    let decision: Box<dyn DecisionSource> = if yes {
        Box::new(Decision::Accept)
    } else if std::io::stdin().is_terminal() {
        Box::new(Prompt)
    } else {
        status(
            "Declining",
            "stdin is not a terminal; pass --yes to accept without asking",
        );
        Box::new(Decision::Reject)
    };
    block_on(interruptible(async {
        let (host, backends) = match env.connect().await {
            Ok(x) => x,
            Err(msg) => {
                error(msg);
                return exit::IO;
            }
        };
        let observer = CliObserver::new();
        let mut dest = DirDestination::new(dir);
        let result =
            session::run_receiver(&env.session, words, host, &backends, &*decision, &mut dest, &observer).await;
        observer.finish();
        match &result {
            Ok(rep) => match rep.outcome.status {
                TransferStatus::Completed => println!(
                    "Received {} ({})",
                    rep.outcome.location.as_deref().unwrap_or("?"),
                    human_bytes(rep.outcome.bytes)
                ),
                TransferStatus::Rejected => error("transfer declined"),
                TransferStatus::Aborted => error(format!(
                    "transfer aborted, nothing saved: {}",
                    rep.outcome.reason.as_deref().unwrap_or("unknown")
                )),
            },
            Err(e) => report_failure(e),
        }
        exit_code(&result)
    }))
}

fn cmd_simulate(sim_config: &Path, name: &str) -> u8 {
    let which: Scenario = match name.parse() {
        Ok(s) => s,
        Err(msg) => {
            error(msg);
            return exit::USAGE;
        }
    };
    let config = match load_sim(sim_config) {
        Ok(c) => c,
        Err((code, msg)) => {
            error(msg);
            return code;
        }
    };
    let (report, net) = match scenario::run_scenario(which, &config) {
        Ok(x) => x,
        Err(e) => {
            error(format!("scenario could not run: {e}"));
            return exit::FAILURE;
        }
    };
    let mut out = std::io::stdout().lock();
    if out
        .write_all(net.trace_jsonl().as_bytes())
        .and_then(|_| out.flush())
        .is_err()
    {
        return exit::IO;
    }
    status(
        if report.passed { "Passed" } else { "Failed" },
        format!("{} ({}): {}", report.scenario, which.describe(), report.expectation),
    );
    status(
        "Trace",
        format!(
            "{} events over {} ms virtual, sha256 {}",
            report.events, report.virtual_ms, report.trace_hash
        ),
    );
    for p in &report.pairs {
        status(
            "Pair",
            format!(
                "{} -> {}: sender {}, receiver {}",
                p.sender, p.receiver, p.sender_result, p.receiver_result
            ),
        );
    }
    if report.passed {
        exit::OK
    } else {
        exit::FAILURE
    }
}

pub fn main() -> ExitCode {
    init_logging();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { exit::OK });
        }
    };
    let code = match &cli.command {
        Command::Send {
            words,
            sim_config,
            file,
        } => cmd_send(*words, sim_config.as_deref(), file),
        Command::Receive {
            yes,
            dir,
            sim_config,
            words,
        } => cmd_receive(*yes, dir, sim_config.as_deref(), words),
        Command::Simulate { sim_config, scenario } => cmd_simulate(sim_config, scenario),
    };
    ExitCode::from(code)
}

#[cfg(test)]
mod tests {
    use super::*;
    use clap::CommandFactory;
    use pcp_core::transfer::TransferOutcome;
    use pcp_core::PeerAddress;

    #[test]
    fn cli_definition_is_consistent() {
        Cli::command().debug_assert();
    }

    #[test]
    fn parses_documented_surface() {
        let c = Cli::try_parse_from(["pcp", "send", "-w", "6", "--sim-config", "s.toml", "a.bin"]).unwrap();
        assert!(matches!(c.command, Command::Send { words: 6, .. }));
        let c = Cli::try_parse_from(["pcp", "receive", "--yes", "--dir", "out", "a-b-c-d"]).unwrap();
        assert!(matches!(c.command, Command::Receive { yes: true, .. }));
        let c = Cli::try_parse_from(["pcp", "simulate", "--sim-config", "s.toml", "--scenario", "tamper"]).unwrap();
        assert!(matches!(c.command, Command::Simulate { .. }));
        assert!(Cli::try_parse_from(["pcp", "send", "-w", "1", "a"]).is_err());
        assert!(Cli::try_parse_from(["pcp", "receive"]).is_err());
    }

    fn report(status: TransferStatus) -> SessionReport {
        let outcome = match status {
            TransferStatus::Rejected => TransferOutcome::rejected(),
            TransferStatus::Aborted => TransferOutcome::aborted(0, "x"),
            TransferStatus::Completed => TransferOutcome {
                status,
                bytes: 1,
                digest_verified: true,
                location: None,
                reason: None,
            },
        };
        SessionReport {
            outcome,
            peer: PeerAddress {
                peer_id: pcp_core::PeerId([0; 16]),
                endpoint: pcp_core::net::Endpoint::Sim(0),
            },
            via: None,
            binding: String::new(),
            passphrase: None,
            manifest: None,
        }
    }

    #[test]
    fn exit_codes() {
        assert_eq!(exit_code(&Ok(report(TransferStatus::Completed))), 0);
        assert_eq!(exit_code(&Ok(report(TransferStatus::Rejected))), 5);
        assert_eq!(exit_code(&Ok(report(TransferStatus::Aborted))), 6);
        assert_eq!(exit_code(&Err(SessionError::Timeout)), 3);
        assert_eq!(exit_code(&Err(SessionError::NotFound)), 3);
        assert_eq!(exit_code(&Err(SessionError::AuthExhausted)), 4);
        assert_eq!(exit_code(&Err(SessionError::Io("x".into()))), 6);
    }
}
