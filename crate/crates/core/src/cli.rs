//! Command-line front end.
//!
//! Exit status: 0 success, 1 a violation, denial or mismatch was found,
//! 2 usage or I/O error. JSON goes to stdout, diagnostics to stderr.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use clap::{ArgGroup, Parser, Subcommand};

use crate::agent::{self, Agent, AgentOptions};
use crate::control::{self, ClusterConfig};
use crate::model::{parse_spec, ClusterId, DeploymentSpec, PodId, ServiceId};
use crate::overwatch::client::{ClientError, OverwatchClient};
use crate::overwatch::server::Server;
use crate::overwatch::Overwatch;
use crate::simnet::{self, SimError, SimWorld, Verdict};

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILED: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "hybridplane",
    version,
    about = "Hybrid-cloud management plane for multi-cluster pipelines"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Check a deployment spec and list every violation.
    Validate { spec: PathBuf },
    /// Compute per-cluster configs and write `<cluster>.config.json` files.
    #[command(group(ArgGroup::new("target").required(true).args(["cluster", "all"])))]
    Converge {
        spec: PathBuf,
        #[arg(long)]
        cluster: Option<String>,
        #[arg(long)]
        all: bool,
        #[arg(short = 'o', long = "out")]
        out: PathBuf,
    },
    /// Trace one connection from a pod to a service.
    Trace {
        spec: PathBuf,
        #[arg(long)]
        from: String,
        #[arg(long)]
        to: String,
    },
    /// Print the verdict for every (pod, service) pair.
    Matrix { spec: PathBuf },
    /// Compare simulated reachability against the oracle.
    Verify {
        spec: PathBuf,
        /// Check configs from this directory instead of converging afresh.
        #[arg(long)]
        configs: Option<PathBuf>,
    },
    /// Run or talk to the overwatch service.
    Overwatch {
        #[command(subcommand)]
        command: OverwatchCommand,
    },
    /// Run a control agent.
    Agent {
        #[command(subcommand)]
        command: AgentCommand,
    },
}

#[derive(Debug, Subcommand)]
pub enum OverwatchCommand {
    /// Serve the overwatch protocol.
    Serve {
        #[arg(long)]
        listen: String,
        #[arg(long)]
        store: PathBuf,
    },
    /// Publish a spec to a running overwatch.
    Publish {
        spec: PathBuf,
        #[arg(long)]
        overwatch: String,
    },
}

#[derive(Debug, Subcommand)]
pub enum AgentCommand {
    /// Register, poll and converge until stopped.
    Run {
        #[arg(long)]
        cluster: String,
        #[arg(long)]
        overwatch: String,
        #[arg(long)]
        out: PathBuf,
        /// Seconds between polls.
        #[arg(long, default_value_t = 5.0)]
        poll_interval: f64,
        /// Consecutive failed polls before giving up.
        #[arg(long, default_value_t = 10)]
        max_attempts: u32,
        /// Exit once this spec version has been applied.
        #[arg(long)]
        exit_after_version: Option<u64>,
    },
}

struct Io<'a> {
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

macro_rules! diag {
    ($io:expr, $($arg:tt)*) => {{
        let _ = writeln!($io.err, $($arg)*);
    }};
}

/// Parse `args` (including the program name) and run the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let rendered = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let mut io = Io { out, err };
    let code = match cli.command {
        Command::Validate { spec } => validate(&mut io, &spec),
        Command::Converge {
            spec,
            cluster,
            all: _,
            out,
        } => converge(&mut io, &spec, cluster.as_deref(), &out),
        Command::Trace { spec, from, to } => trace(&mut io, &spec, &from, &to),
        Command::Matrix { spec } => matrix(&mut io, &spec),
        Command::Verify { spec, configs } => verify(&mut io, &spec, configs.as_deref()),
        Command::Overwatch {
            command: OverwatchCommand::Serve { listen, store },
        } => serve(&mut io, &listen, &store),
        Command::Overwatch {
            command: OverwatchCommand::Publish { spec, overwatch },
        } => publish(&mut io, &spec, &overwatch),
        Command::Agent {
            command:
                AgentCommand::Run {
                    cluster,
                    overwatch,
                    out,
                    poll_interval,
                    max_attempts,
                    exit_after_version,
                },
        } => {
            if !(poll_interval.is_finite() && poll_interval >= 0.0) {
                diag!(io, "error: --poll-interval must be a non-negative number of seconds");
                return EXIT_USAGE;
            }
            let opts = AgentOptions {
                cluster: cluster.into(),
                overwatch,
                out_dir: out,
                poll_interval: Duration::from_secs_f64(poll_interval),
                max_attempts: max_attempts.max(1),
                exit_after_version,
            };
            agent_run(&mut io, opts)
        }
    };
    let _ = io.out.flush();
    code
}

fn load_spec(io: &mut Io, path: &Path) -> Result<DeploymentSpec, u8> {
    let bytes = fs::read(path).map_err(|e| {
        diag!(io, "error: cannot read {}: {e}", path.display());
        EXIT_USAGE
    })?;
    parse_spec(&bytes).map_err(|e| {
        diag!(io, "error: {}: {e}", path.display());
        EXIT_USAGE
    })
}

/// Load a spec and require it to be valid.
fn load_valid_spec(io: &mut Io, path: &Path) -> Result<DeploymentSpec, u8> {
    let spec = load_spec(io, path)?;
    let report = spec.validate();
    if !report.is_empty() {
        diag!(io, "error: {} is not a valid deployment spec:", path.display());
        for v in report.iter() {
            diag!(io, "  {v}");
        }
        return Err(EXIT_FAILED);
    }
    Ok(spec)
}

fn validate(io: &mut Io, path: &Path) -> u8 {
    let spec = match load_spec(io, path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let report = spec.validate();
    for v in report.iter() {
        let _ = writeln!(io.out, "{v}");
    }
    if report.is_empty() {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

fn converge(io: &mut Io, path: &Path, cluster: Option<&str>, out: &Path) -> u8 {
    let spec = match load_valid_spec(io, path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let configs = match cluster {
        Some(c) => {
            if spec.cluster(c).is_none() {
                diag!(io, "error: unknown cluster `{c}`");
                return EXIT_USAGE;
            }
            control::converge(&spec, &c.into()).map(|cfg| vec![cfg])
        }
        None => control::converge_all(&spec).map(|m| m.into_values().collect()),
    };
    let configs = match configs {
        Ok(c) => c,
        Err(e) => {
            diag!(io, "error: {e}");
            return EXIT_FAILED;
        }
    };
    for cfg in &configs {
        match agent::write_config(out, cfg) {
            Ok(p) => diag!(io, "wrote {}", p.display()),
            Err(e) => {
                diag!(io, "error: {e}");
                return EXIT_USAGE;
            }
        }
    }
    EXIT_OK
}

fn converged_world(io: &mut Io, spec: &DeploymentSpec) -> Result<SimWorld, u8> {
    SimWorld::converged(spec).map_err(|e| {
        diag!(io, "error: {e}");
        EXIT_FAILED
    })
}

fn trace(io: &mut Io, path: &Path, from: &str, to: &str) -> u8 {
    let spec = match load_valid_spec(io, path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let world = match converged_world(io, &spec) {
        Ok(w) => w,
        Err(code) => return code,
    };
    match world.resolve_connection(&PodId::from(from), &ServiceId::from(to)) {
        Ok(t) => {
            let _ = io.out.write_all(t.to_canonical_json().as_bytes());
            if t.verdict == Verdict::Delivered {
                EXIT_OK
            } else {
                EXIT_FAILED
            }
        }
        Err(e @ (SimError::UnknownPod(_) | SimError::UnknownService(_))) => {
            diag!(io, "error: {e}");
            EXIT_USAGE
        }
        Err(e) => {
            diag!(io, "error: {e}");
            EXIT_FAILED
        }
    }
}

fn matrix(io: &mut Io, path: &Path) -> u8 {
    let spec = match load_valid_spec(io, path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    match converged_world(io, &spec) {
        Ok(world) => {
            let _ = io
                .out
                .write_all(simnet::reachability_matrix(&world).to_canonical_json().as_bytes());
            EXIT_OK
        }
        Err(code) => code,
    }
}

fn read_configs(io: &mut Io, spec: &DeploymentSpec, dir: &Path) -> Result<BTreeMap<ClusterId, ClusterConfig>, u8> {
    let mut configs = BTreeMap::new();
    for c in &spec.clusters {
        let path = dir.join(format!("{}.config.json", c.id));
        let text = fs::read_to_string(&path).map_err(|e| {
            diag!(io, "error: cannot read {}: {e}", path.display());
            EXIT_USAGE
        })?;
        let cfg = ClusterConfig::from_json(&text).map_err(|e| {
            diag!(io, "error: {}: {e}", path.display());
            EXIT_USAGE
        })?;
        configs.insert(c.id.clone(), cfg);
    }
    Ok(configs)
}

fn verify(io: &mut Io, path: &Path, configs_dir: Option<&Path>) -> u8 {
    let spec = match load_valid_spec(io, path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let configs = match configs_dir {
        Some(dir) => match read_configs(io, &spec, dir) {
            Ok(c) => c,
            Err(code) => return code,
        },
        None => match control::converge_all(&spec) {
            Ok(c) => c,
            Err(e) => {
                diag!(io, "error: {e}");
                return EXIT_FAILED;
            }
        },
    };
    let world = match SimWorld::build(&spec, configs) {
        Ok(w) => w,
        Err(e) => {
            diag!(io, "error: {e}");
            return EXIT_FAILED;
        }
    };
    let actual = simnet::reachability_matrix(&world);
    let expected = match simnet::oracle_matrix(&spec) {
        Ok(m) => m,
        Err(e) => {
            diag!(io, "error: {e}");
            return EXIT_FAILED;
        }
    };
    let diff = actual.diff(&expected);
    if diff.is_empty() {
        let _ = writeln!(io.out, "matrices identical ({} pairs)", expected.len());
        EXIT_OK
    } else {
        for m in &diff {
            let _ = writeln!(io.out, "mismatch {m} (simulated != oracle)");
        }
        let _ = writeln!(io.out, "matrices differ ({} of {} pairs)", diff.len(), expected.len());
        EXIT_FAILED
    }
}

fn serve(io: &mut Io, listen: &str, store: &Path) -> u8 {
    let overwatch = match Overwatch::open(store) {
        Ok(o) => Arc::new(o),
        Err(e) => {
            diag!(io, "error: {e}");
            return EXIT_USAGE;
        }
    };
    let server = match Server::bind(listen, overwatch.clone()) {
        Ok(s) => s,
        Err(e) => {
            diag!(io, "error: cannot listen on {listen}: {e}");
            return EXIT_USAGE;
        }
    };
    match server.local_addr() {
        Ok(addr) => diag!(io, "overwatch listening on {addr}"),
        Err(e) => diag!(io, "overwatch listening (address unknown: {e})"),
    }
    if let Some(v) = overwatch.latest() {
        diag!(io, "resumed at version {} ({})", v.version, v.checksum);
    }
    let _ = io.err.flush();
    match server.run() {
        Ok(()) => EXIT_OK,
        Err(e) => {
            diag!(io, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn publish(io: &mut Io, path: &Path, addr: &str) -> u8 {
    let spec = match load_spec(io, path) {
        Ok(s) => s,
        Err(code) => return code,
    };
    let mut client = match OverwatchClient::connect(addr) {
        Ok(c) => c,
        Err(e) => {
            diag!(io, "error: cannot reach overwatch at {addr}: {e}");
            return EXIT_USAGE;
        }
    };
    match client.publish(&spec) {
        Ok(p) => {
            let _ = io.out.write_all(crate::canonical::to_pretty(&p).as_bytes());
            EXIT_OK
        }
        Err(ClientError::Remote(msg)) => {
            diag!(io, "error: publish rejected: {msg}");
            EXIT_FAILED
        }
        Err(e) => {
            diag!(io, "error: {e}");
            EXIT_USAGE
        }
    }
}

fn agent_run(io: &mut Io, opts: AgentOptions) -> u8 {
    let cluster = opts.cluster.clone();
    match Agent::new(opts).run() {
        Ok(v) => {
            diag!(io, "agent {cluster}: stopping at version {v}");
            EXIT_OK
        }
        Err(e) => {
            diag!(io, "error: agent {cluster}: {e}");
            EXIT_USAGE
        }
    }
}
