//! `enumctl`: resolve numbers, run administration-model scenarios, print
//! market reports, and drive a persisted topology one operation at a time.
//!
//! Exit codes: 0 success, 1 the operation failed, 2 bad configuration or
//! input files, 3 an invariant failed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use enumkit::e164::{parse_number, ApexConfig};
use enumkit::market::{self, MarketTable};
use enumkit::naptr::ServiceSelector;
use enumkit::resolver::resolve;
use enumkit::scenario::config::{ScenarioConfig, CANONICAL_EVENTS};
use enumkit::scenario::invariants::assert_invariants;
use enumkit::scenario::script::{parse_event, parse_script};
use enumkit::scenario::valueflow::value_flow;
use enumkit::scenario::{apply_event, resolve_lines, run_events};
use enumkit::snapshot::{self, SnapshotLock};
use enumkit::topology::Topology;

const APEX_ENV: &str = "ENUM_APEX";

#[derive(Parser)]
#[command(name = "enumctl", version, about = "ENUM resolution and administration-model toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the ENUM domain for a number.
    Domain { number: String },
    /// Resolve a number to URIs.
    Resolve(ResolveArgs),
    /// Run a scripted scenario.
    Scenario {
        #[command(subcommand)]
        command: ScenarioCommand,
    },
    /// Market-size arithmetic over the shipped tables.
    Market {
        #[command(subcommand)]
        command: MarketCommand,
    },
    /// Create a snapshot directory from a model or config.
    Init(InitArgs),
    /// Give a number to a user (run by the TSP).
    Assign { #[command(flatten)] snap: Snap, user: String, number: String, tsp: String },
    /// Start ENUM service for a number.
    Subscribe {
        #[command(flatten)]
        snap: Snap,
        user: String,
        number: String,
        registrar: String,
        /// auto, confirm or token=<t>
        #[arg(long, default_value = "confirm")]
        proof: String,
        #[arg(long)]
        via: Option<String>,
    },
    /// Add a NAPTR record: `[public|restricted] order pref "flags" "service" "regexp" replacement`.
    Provision {
        #[command(flatten)]
        snap: Snap,
        actor: String,
        number: String,
        #[arg(required = true, num_args = 1..)]
        record: Vec<String>,
    },
    /// Let another party manage a number.
    Grant {
        #[command(flatten)]
        snap: Snap,
        user: String,
        number: String,
        grantee: String,
        /// e.g. provision,access
        rights: String,
        #[arg(default_value = "*")]
        scope: String,
    },
    Revoke { #[command(flatten)] snap: Snap, user: String, grant: String },
    /// Move a number to another registrar.
    Transfer {
        #[command(flatten)]
        snap: Snap,
        user: String,
        number: String,
        registrar: String,
        /// Stop once the transfer reaches this state.
        #[arg(long)]
        until: Option<String>,
    },
    Resume { #[command(flatten)] snap: Snap, transfer: String },
    /// Object to a transfer as the old registrar.
    Dispute {
        #[command(flatten)]
        snap: Snap,
        registrar: String,
        transfer: String,
        #[arg(default_value = "")]
        reason: String,
    },
    /// Drop ENUM service, or the telephone service and everything with it.
    Disconnect {
        #[command(flatten)]
        snap: Snap,
        user: String,
        number: String,
        /// enum or telephone
        kind: String,
    },
    /// Report on a snapshot.
    Report {
        #[command(flatten)]
        snap: Snap,
        #[arg(long, value_enum, default_value = "invariants")]
        report: ReportKind,
    },
}

#[derive(Args)]
struct Snap {
    /// Snapshot directory.
    #[arg(long)]
    snapshot: PathBuf,
}

#[derive(Args)]
struct ResolveArgs {
    number: String,
    /// Service such as E2U+sip; all services when omitted.
    #[arg(long, default_value = "*")]
    service: String,
    /// Scenario config to build from; the canonical script is run over it.
    #[arg(long, conflicts_with = "snapshot")]
    scenario_file: Option<PathBuf>,
    /// Resolve against a persisted topology instead.
    #[arg(long)]
    snapshot: Option<PathBuf>,
    /// Append the hop-by-hop trace.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct ModelSource {
    /// Built-in model, 1 to 6.
    #[arg(long, conflicts_with = "config")]
    model: Option<u8>,
    /// Scenario config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct InitArgs {
    #[command(flatten)]
    snap: Snap,
    #[command(flatten)]
    source: ModelSource,
    /// Event script to run before saving.
    #[arg(long)]
    script: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScenarioCommand {
    Run {
        #[command(flatten)]
        source: ModelSource,
        /// Event script; the canonical script when omitted.
        #[arg(long)]
        script: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "invariants")]
        report: ReportKind,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ReportKind {
    Invariants,
    Valueflow,
    Log,
    Resolves,
}

#[derive(Subcommand)]
enum MarketCommand {
    Report {
        /// Directory holding fig3-1.csv, fig3-2.csv and fig3-3.csv.
        #[arg(long)]
        fixtures: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
        #[arg(long, default_value_t = market::DEFAULT_PENETRATION)]
        penetration: f64,
        /// Write here instead of standard output.
        #[arg(long)]
        output: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

enum Failure {
    Operation(String),
    Config(String),
    Invariant(String),
}

impl Failure {
    fn exit(self) -> ExitCode {
        let (code, msg) = match self {
            Failure::Operation(m) => (1, m),
            Failure::Config(m) => (2, m),
            Failure::Invariant(m) => (3, m),
        };
        if !msg.is_empty() {
            eprintln!("error: {msg}");
        }
        ExitCode::from(code)
    }
}

type Outcome = Result<String, Failure>;

fn config_err(e: impl std::fmt::Display) -> Failure {
    Failure::Config(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(out) => {
            print!("{out}");
            ExitCode::SUCCESS
        }
        Err(f) => f.exit(),
    }
}

fn run(cmd: Command) -> Outcome {
    match cmd {
        Command::Domain { number } => {
            let n = parse_number(&number, None).map_err(|e| Failure::Operation(format!("InvalidNumber: {e}")))?;
            let apex = std::env::var(APEX_ENV).unwrap_or_else(|_| "e164.arpa".into());
            let apex = ApexConfig::new(&apex, &apex).map_err(config_err)?;
            Ok(format!("{}\n", n.to_domain(&apex)))
        }
        Command::Resolve(args) => cmd_resolve(args),
        Command::Scenario { command: ScenarioCommand::Run { source, script, report } } => {
            let mut topo = build(&source)?;
            let text = match script {
                Some(p) => read(&p)?,
                None => CANONICAL_EVENTS.to_string(),
            };
            let lines = parse_script(&text).map_err(config_err)?;
            run_events(&mut topo, &lines);
            render_report(&topo, report)
        }
        Command::Market { command: MarketCommand::Report { fixtures, format, penetration, output } } => {
            let tables: Vec<MarketTable> = match fixtures {
                Some(dir) => market::load_tables(&dir).map_err(config_err)?,
                None => market::builtin_tables(),
            };
            let report = market::market_report(&tables, penetration).map_err(config_err)?;
            let text = match format {
                Format::Text => report.to_text(),
                Format::Csv => report.to_csv(),
            };
            match output {
                Some(path) => {
                    fs::write(&path, text).map_err(|e| Failure::Operation(format!("{}: {e}", path.display())))?;
                    Ok(String::new())
                }
                None => Ok(text),
            }
        }
        Command::Init(args) => {
            let _lock = SnapshotLock::acquire(&args.snap.snapshot).map_err(config_err)?;
            let mut topo = build(&args.source)?;
            if let Some(p) = args.script {
                let lines = parse_script(&read(&p)?).map_err(config_err)?;
                run_events(&mut topo, &lines);
            } else {
                topo.settle();
            }
            snapshot::save(&topo, &args.snap.snapshot).map_err(config_err)?;
            Ok(format!("initialised model {} in {}\n", topo.config().model.id, args.snap.snapshot.display()))
        }
        Command::Report { snap, report } => {
            let _lock = SnapshotLock::acquire(&snap.snapshot).map_err(config_err)?;
            let topo = snapshot::load(&snap.snapshot).map_err(config_err)?;
            render_report(&topo, report)
        }
        Command::Assign { snap, user, number, tsp } => mutate(&snap.snapshot, &format!("assign {user} {number} {tsp}")),
        Command::Subscribe { snap, user, number, registrar, proof, via } => {
            let via = via.map(|v| format!(" via={v}")).unwrap_or_default();
            mutate(&snap.snapshot, &format!("subscribe {user} {number} {registrar} {proof}{via}"))
        }
        Command::Provision { snap, actor, number, record } => {
            mutate(&snap.snapshot, &format!("provision {actor} {number} {}", record.join(" ")))
        }
        Command::Grant { snap, user, number, grantee, rights, scope } => {
            mutate(&snap.snapshot, &format!("grant {user} {number} {grantee} {rights} {scope}"))
        }
        Command::Revoke { snap, user, grant } => mutate(&snap.snapshot, &format!("revoke {user} {grant}")),
        Command::Transfer { snap, user, number, registrar, until } => {
            let until = until.map(|u| format!(" until={u}")).unwrap_or_default();
            mutate(&snap.snapshot, &format!("transfer {user} {number} {registrar}{until}"))
        }
        Command::Resume { snap, transfer } => mutate(&snap.snapshot, &format!("resume {transfer}")),
        Command::Dispute { snap, registrar, transfer, reason } => {
            mutate(&snap.snapshot, &format!("dispute {registrar} {transfer} {reason}"))
        }
        Command::Disconnect { snap, user, number, kind } => {
            mutate(&snap.snapshot, &format!("disconnect {user} {number} {kind}"))
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Config(format!("{}: {e}", path.display())))
}

fn load_config(source: &ModelSource) -> Result<ScenarioConfig, Failure> {
    let mut cfg = match (&source.config, source.model) {
        (Some(path), _) => ScenarioConfig::from_toml(&read(path)?).map_err(config_err)?,
        (None, Some(m)) => ScenarioConfig::builtin(m).map_err(config_err)?,
        (None, None) => ScenarioConfig::builtin(1).map_err(config_err)?,
    };
    if let Some(seed) = source.seed {
        cfg.model.seed = seed;
    }
    if let Ok(apex) = std::env::var(APEX_ENV) {
        cfg.model.apex = apex;
    }
    Ok(cfg)
}

fn build(source: &ModelSource) -> Result<Topology, Failure> {
    Topology::build(load_config(source)?).map_err(config_err)
}

fn render_report(topo: &Topology, kind: ReportKind) -> Outcome {
    let invariants = assert_invariants(topo);
    let out = match kind {
        ReportKind::Invariants => invariants.to_string(),
        ReportKind::Valueflow => {
            let graph = value_flow(topo).map_err(|e| Failure::Operation(e.to_string()))?;
            let mut out = graph.to_string();
            out.push_str("roles:\n");
            for (payer, payee) in graph.role_pairs(topo) {
                out.push_str(&format!("  {payer} -> {payee}\n"));
            }
            out
        }
        ReportKind::Log => topo.log.render(),
        ReportKind::Resolves => resolve_lines(&topo.log).iter().map(|l| format!("{l}\n")).collect(),
    };
    if invariants.all_passed() {
        Ok(out)
    } else {
        print!("{out}");
        let names: Vec<_> = invariants.failed().map(|r| r.name).collect();
        Err(Failure::Invariant(format!("invariants failed: {}", names.join(", "))))
    }
}

fn cmd_resolve(args: ResolveArgs) -> Outcome {
    let sel: ServiceSelector = args.service.parse().map_err(|e| Failure::Operation(format!("{e}")))?;
    let mut topo = match &args.snapshot {
        Some(dir) => {
            let _lock = SnapshotLock::acquire(dir).map_err(config_err)?;
            snapshot::load(dir).map_err(config_err)?
        }
        None => {
            let source = ModelSource { model: None, config: args.scenario_file.clone(), seed: None };
            let mut topo = build(&source)?;
            let lines = parse_script(CANONICAL_EVENTS).map_err(config_err)?;
            run_events(&mut topo, &lines);
            topo
        }
    };
    match resolve(&mut topo, &args.number, &sel) {
        Ok(out) => {
            let mut text: String = out.uris().iter().map(|u| format!("{u}\n")).collect();
            if args.trace {
                text.push_str(&out.trace.to_string());
            }
            Ok(text)
        }
        Err(e) => {
            if args.trace {
                print!("{}", e.trace);
            }
            Err(Failure::Operation(e.to_string()))
        }
    }
}

/// Loads the snapshot, applies one event, saves. The snapshot is written
/// even when the event fails, so the failure stays in the log.
fn mutate(dir: &Path, line: &str) -> Outcome {
    let event = parse_event(line).map_err(|e| Failure::Operation(format!("BadRequest: {e}")))?;
    let _lock = SnapshotLock::acquire(dir).map_err(config_err)?;
    let mut topo = snapshot::load(dir).map_err(config_err)?;
    let result = apply_event(&mut topo, &event);
    topo.settle();
    snapshot::save(&topo, dir).map_err(config_err)?;
    match result {
        Ok(summary) if summary.is_empty() => Ok(String::new()),
        Ok(summary) => Ok(format!("{summary}\n")),
        Err((code, detail)) => Err(Failure::Operation(format!("{code}: {detail}"))),
    }
}
