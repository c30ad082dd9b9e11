use std::io::Write;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

use qorc_core::benchmarks;
use qorc_core::device::{registry_load, registry_save, setup_fleet, Fleet};
use qorc_core::experiments::{self, DEFAULT_THRESHOLDS, DEFAULT_TOPOLOGIES, DEFAULT_TRIALS};
use qorc_core::sim::SCORING_SHOTS;
use qorc_service::Config;

#[derive(Parser)]
#[command(name = "qorc", version, about = "Filter-then-rank scheduler for simulated quantum backends")]
struct Cli {
    /// Base URL of a running `qorc serve`.
    #[arg(long, global = true, default_value = "http://127.0.0.1:8080")]
    server: String,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the seeded 100-backend fleet registry.
    GenFleet {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Submit a job spec; `--qasm` fills in the fidelity strategy's circuit.
    Submit {
        job: PathBuf,
        #[arg(long)]
        qasm: Option<PathBuf>,
    },
    /// Print a job record.
    Status { id: String },
    /// Print a finished job's logs.
    Logs { id: String },
    /// Run the HTTP service.
    Serve {
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[arg(long, default_value = "qorc-data")]
        data_dir: PathBuf,
        #[arg(long)]
        fleet: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Reproducible experiments.
    #[command(subcommand)]
    Exp(Exp),
}

#[derive(Args)]
struct FleetArgs {
    /// Fleet registry; defaults to the generated fleet for `--fleet-seed`.
    #[arg(long)]
    fleet: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    fleet_seed: u64,
    /// Also write the JSON report here.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl FleetArgs {
    fn load(&self) -> Result<Fleet> {
        match &self.fleet {
            Some(p) => registry_load(p).with_context(|| format!("loading {}", p.display())),
            None => Ok(setup_fleet(self.fleet_seed)),
        }
    }
}

#[derive(Subcommand)]
enum Exp {
    DefaultTopologies {
        #[command(flatten)]
        fleet: FleetArgs,
        #[arg(long, default_value_t = DEFAULT_TRIALS)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    Fidelity {
        #[command(flatten)]
        fleet: FleetArgs,
        #[arg(long, value_delimiter = ',', default_value = "bv,hsp,grover,rep,circ,circ2")]
        circuits: Vec<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Number of consecutive seeds starting at `--seed`.
        #[arg(long, default_value_t = 10)]
        seeds: u64,
        #[arg(long, default_value_t = SCORING_SHOTS)]
        shots: u64,
    },
    TopologyChoice {
        #[arg(long, default_value_t = 50)]
        repeats: usize,
        #[arg(long, default_value = "tree", value_parser = ["tree", "ring", "line"])]
        topology: String,
        /// Give all three devices the tree coupling.
        #[arg(long)]
        same_graph: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    FilterSweep {
        #[command(flatten)]
        fleet: FleetArgs,
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
}

/// A non-2xx service reply.
#[derive(Debug)]
struct ApiFailure {
    code: String,
    message: String,
}

impl std::fmt::Display for ApiFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.code, self.message)
    }
}

impl std::error::Error for ApiFailure {}

struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder().http_status_as_error(false).build().new_agent();
        Client { base: base.trim_end_matches('/').to_string(), agent }
    }

    fn request(&self, method: &str, path: &str, body: Option<String>) -> Result<String> {
        let url = format!("{}{path}", self.base);
        let resp = match body {
            Some(b) => self.agent.post(&url).header("content-type", "application/json").send(b),
            None if method == "GET" => self.agent.get(&url).call(),
            None => bail!("unsupported method {method}"),
        };
        let mut resp = resp.with_context(|| format!("contacting {url}"))?;
        let status = resp.status();
        let text = resp.body_mut().read_to_string().context("reading response")?;
        if status.is_success() {
            return Ok(text);
        }
        let v: Value = serde_json::from_str(&text).unwrap_or(Value::Null);
        Err(ApiFailure {
            code: v["code"].as_str().unwrap_or("HttpError").to_string(),
            message: v["message"].as_str().map_or_else(|| format!("status {status}"), str::to_string),
        }
        .into())
    }
}

fn emit<T: serde::Serialize>(table: String, report: &T, out: Option<&Path>) -> Result<()> {
    let json = serde_json::to_string_pretty(report)?;
    let mut stdout = std::io::stdout().lock();
    write!(stdout, "{table}--- json ---\n{json}\n")?;
    stdout.flush()?;
    if let Some(p) = out {
        std::fs::write(p, format!("{json}\n")).with_context(|| format!("writing {}", p.display()))?;
    }
    Ok(())
}

fn run_exp(exp: Exp) -> Result<()> {
    match exp {
        Exp::DefaultTopologies { fleet, trials, seed } => {
            let r = experiments::default_topologies(&fleet.load()?, &DEFAULT_TOPOLOGIES, trials, seed);
            emit(r.table(), &r, fleet.out.as_deref())
        }
        Exp::Fidelity { fleet, circuits, seed, seeds, shots } => {
            let benches = circuits
                .iter()
                .map(|n| benchmarks::get(n).with_context(|| format!("unknown benchmark {n}")))
                .collect::<Result<Vec<_>>>()?;
            let seed_list: Vec<u64> = (seed..seed + seeds).collect();
            let r = experiments::fidelity(&fleet.load()?, &benches, &seed_list, shots);
            emit(r.table(), &r, fleet.out.as_deref())
        }
        Exp::TopologyChoice { repeats, topology, same_graph, out } => {
            let r = experiments::topology_choice(&topology, repeats, same_graph);
            emit(r.table(), &r, out.as_deref())
        }
        Exp::FilterSweep { fleet, thresholds } => {
            let t = thresholds.unwrap_or_else(|| DEFAULT_THRESHOLDS.to_vec());
            let r = experiments::filter_sweep(&fleet.load()?, &t);
            emit(r.table(), &r, fleet.out.as_deref())
        }
    }
}

fn run(cli: Cli) -> Result<()> {
    let client = Client::new(&cli.server);
    match cli.command {
        Command::GenFleet { seed, out } => {
            let fleet = setup_fleet(seed);
            registry_save(&fleet, &out).with_context(|| format!("writing {}", out.display()))?;
            println!("wrote {} backends to {}", fleet.len(), out.display());
        }
        Command::Submit { job, qasm } => {
            let text = std::fs::read_to_string(&job).with_context(|| format!("reading {}", job.display()))?;
            let mut spec: Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", job.display()))?;
            if let Some(q) = qasm {
                let circuit = std::fs::read_to_string(&q).with_context(|| format!("reading {}", q.display()))?;
                spec["strategy"]["qasm"] = Value::String(circuit);
            }
            let reply: Value = serde_json::from_str(&client.request("POST", "/jobs", Some(spec.to_string()))?)?;
            println!("{}", reply["job_id"].as_str().unwrap_or_default());
        }
        Command::Status { id } => println!("{}", client.request("GET", &format!("/jobs/{id}"), None)?),
        Command::Logs { id } => print!("{}", client.request("GET", &format!("/jobs/{id}/logs"), None)?),
        Command::Serve { listen, data_dir, fleet, seed } => {
            tracing_subscriber::fmt()
                .with_env_filter(tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "info".into()))
                .init();
            let cfg = Config { data_dir, fleet, seed };
            tokio::runtime::Runtime::new()?.block_on(qorc_service::serve(cfg, listen))?;
        }
        Command::Exp(exp) => run_exp(exp)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            match e.downcast_ref::<ApiFailure>() {
                Some(api) => eprintln!("error: {api}"),
                None => eprintln!("error: {e:#}"),
            }
            ExitCode::from(1)
        }
    }
}
