//! Filter-then-rank scheduling, job lifecycle, execution and the FIFO drain loop.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{sync_channel, Receiver, SyncSender, TrySendError};
use std::sync::{Arc, Mutex, RwLock};
use std::thread::JoinHandle;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::{cliffordize, topology_to_circuit, Circuit, TopologyGraph};
use crate::device::{Backend, Fleet, Node};
use crate::qasm::{emit_qasm, parse_qasm, SourceProgram};
use crate::ranking::{topology_score, Canary, RankingError, Score, ScoreDetail};
use crate::sim::{lower, run_noisy, Engine, NoiseModel, OutcomeDistribution, SCORING_SHOTS};
use crate::transpile::{to_clifford_basis, transpile, MappedCircuit};

pub const QUEUE_CAPACITY: usize = 1024;
pub const EXECUTION_SHOTS: u64 = 1024;
pub const COUNTS_BANNER: &str = "########## Noisy Simulation ##########";
pub const CANARY_WARNING: &str = "WARNING: CANARY-SUBSTITUTE";

/// Optional bounds on node labels; absent bounds do not constrain.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constraints {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_avg_err2q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_avg_err1q: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_avg_readout_err: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_avg_t1_us: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min_avg_t2_us: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase", deny_unknown_fields)]
pub enum StrategySpec {
    Fidelity { target: f64, qasm: String },
    Topology { graph: TopologyGraph },
}

/// A job request as submitted over the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobSpec {
    pub name: String,
    #[serde(alias = "image_name")]
    pub image: String,
    #[serde(alias = "num_qubits")]
    pub qubits: usize,
    #[serde(alias = "cpu_millicores")]
    pub cpu: u64,
    #[serde(alias = "mem_mb")]
    pub mem: u64,
    #[serde(default)]
    pub constraints: Constraints,
    pub strategy: StrategySpec,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Error, PartialEq, Serialize, Deserialize)]
#[error("{path}: {message}")]
pub struct ValidationError {
    pub path: String,
    pub message: String,
}

impl ValidationError {
    pub fn new(path: impl Into<String>, message: impl Into<String>) -> Self {
        ValidationError { path: path.into(), message: message.into() }
    }
}

/// What a job asks the scheduler to optimize for.
#[derive(Debug, Clone, PartialEq)]
pub enum Workload {
    Fidelity { target: f64, circuit: Circuit },
    Topology { graph: TopologyGraph },
}

/// A validated job: the spec plus its parsed workload.
#[derive(Debug, Clone, PartialEq)]
pub struct Job {
    pub spec: JobSpec,
    pub workload: Workload,
}

impl JobSpec {
    /// Parses a JSON body, reporting the offending field path on failure.
    pub fn from_json(text: &str) -> Result<JobSpec, ValidationError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            ValidationError::new(if path == "." { String::new() } else { path }, e.inner().to_string())
        })
    }

    pub fn validate(&self) -> Result<Job, ValidationError> {
        if self.name.trim().is_empty() {
            return Err(ValidationError::new("name", "must not be empty"));
        }
        if self.qubits == 0 {
            return Err(ValidationError::new("qubits", "must be at least 1"));
        }
        if self.cpu == 0 {
            return Err(ValidationError::new("cpu", "must be positive"));
        }
        if self.mem == 0 {
            return Err(ValidationError::new("mem", "must be positive"));
        }
        let c = &self.constraints;
        for (field, v) in [
            ("max_avg_err2q", c.max_avg_err2q),
            ("max_avg_err1q", c.max_avg_err1q),
            ("max_avg_readout_err", c.max_avg_readout_err),
            ("min_avg_t1_us", c.min_avg_t1_us),
            ("min_avg_t2_us", c.min_avg_t2_us),
        ] {
            if v.is_some_and(|v| !v.is_finite()) {
                return Err(ValidationError::new(format!("constraints.{field}"), "must be a finite number"));
            }
        }
        let workload = match &self.strategy {
            StrategySpec::Fidelity { target, qasm } => {
                if !(*target > 0.0 && *target <= 1.0) {
                    return Err(ValidationError::new("strategy.target", "must lie in (0, 1]"));
                }
                let circuit = parse_qasm(&SourceProgram::from_file(qasm.clone(), "strategy.qasm"))
                    .map_err(|e| ValidationError::new("strategy.qasm", e.to_string()))?;
                if circuit.num_qubits > self.qubits {
                    return Err(ValidationError::new(
                        "qubits",
                        format!("circuit declares {} qubits but the job requests {}", circuit.num_qubits, self.qubits),
                    ));
                }
                Workload::Fidelity { target: *target, circuit }
            }
            StrategySpec::Topology { graph } => {
                if graph.num_nodes() > self.qubits {
                    return Err(ValidationError::new(
                        "qubits",
                        format!("topology has {} nodes but the job requests {}", graph.num_nodes(), self.qubits),
                    ));
                }
                Workload::Topology { graph: graph.clone() }
            }
        };
        Ok(Job { spec: self.clone(), workload })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum JobState {
    Submitted,
    Filtered,
    Ranked,
    Scheduled,
    Running,
    Completed,
    Failed,
    Unschedulable,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Completed | JobState::Failed | JobState::Unschedulable)
    }

    pub fn can_follow(self, prev: JobState) -> bool {
        use JobState::*;
        matches!(
            (prev, self),
            (Submitted, Filtered)
                | (Filtered, Ranked)
                | (Ranked, Scheduled)
                | (Scheduled, Running)
                | (Running, Completed)
                | (Running, Failed)
                | (Filtered, Unschedulable)
                | (Ranked, Unschedulable)
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: JobState,
    /// Milliseconds since the Unix epoch; never decreases along a record.
    pub at_ms: u64,
}

/// A per-backend ranking outcome: a score or the error that prevented one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreEntry {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub score: Option<Score>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ScoreEntry {
    pub fn from_result(r: Result<Score, String>) -> Self {
        match r {
            Ok(s) => ScoreEntry { score: Some(s), error: None },
            Err(e) => ScoreEntry { score: None, error: Some(e) },
        }
    }
}

/// Inert packaging manifest: what a container for this job would hold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobPackage {
    pub image: String,
    pub files: Vec<PackageFile>,
    pub requirements: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackageFile {
    pub path: String,
    pub contents: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub backend_id: String,
    pub engine: Engine,
    pub shots: u64,
    pub canary_substitute: bool,
    pub counts: OutcomeDistribution,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: String,
    pub spec: JobSpec,
    pub state: JobState,
    pub filtered: Vec<String>,
    pub score_table: BTreeMap<String, ScoreEntry>,
    pub decision: Option<String>,
    pub logs: String,
    pub transitions: Vec<Transition>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub package: Option<JobPackage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub execution: Option<Execution>,
}

fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_millis() as u64).unwrap_or(0)
}

impl JobRecord {
    pub fn new(id: impl Into<String>, spec: JobSpec) -> Self {
        JobRecord {
            id: id.into(),
            spec,
            state: JobState::Submitted,
            filtered: Vec::new(),
            score_table: BTreeMap::new(),
            decision: None,
            logs: String::new(),
            transitions: vec![Transition { state: JobState::Submitted, at_ms: now_ms() }],
            package: None,
            execution: None,
        }
    }

    /// Moves to `next`; panics on a transition outside the lifecycle.
    pub fn advance(&mut self, next: JobState) {
        assert!(next.can_follow(self.state), "illegal transition {:?} -> {:?}", self.state, next);
        let last = self.transitions.last().map_or(0, |t| t.at_ms);
        self.transitions.push(Transition { state: next, at_ms: now_ms().max(last) });
        self.state = next;
    }

    pub fn logs_ready(&self) -> bool {
        matches!(self.state, JobState::Completed | JobState::Failed)
    }
}

/// Keeps nodes that satisfy the size, capacity and label constraints, in fleet order.
pub fn filter(spec: &JobSpec, fleet: &Fleet) -> Vec<String> {
    fleet.iter().filter(|n| fits(spec, n)).map(|n| n.id().to_string()).collect()
}

pub fn fits(spec: &JobSpec, node: &Node) -> bool {
    let l = node.labels();
    let c = &spec.constraints;
    l.num_qubits >= spec.qubits
        && l.cpu_millicores >= spec.cpu
        && l.mem_mb >= spec.mem
        && c.max_avg_err2q.is_none_or(|m| l.avg_err2q <= m)
        && c.max_avg_err1q.is_none_or(|m| l.avg_err1q <= m)
        && c.max_avg_readout_err.is_none_or(|m| l.avg_readout_err <= m)
        && c.min_avg_t1_us.is_none_or(|m| l.avg_t1_us >= m)
        && c.min_avg_t2_us.is_none_or(|m| l.avg_t2_us >= m)
}

/// Scores every filtered backend with `score_fn`.
pub fn rank<F>(ids: &[String], fleet: &Fleet, mut score_fn: F) -> BTreeMap<String, ScoreEntry>
where
    F: FnMut(&Node) -> Result<Score, String>,
{
    ids.iter()
        .map(|id| {
            let entry = match fleet.get(id) {
                Some(node) => ScoreEntry::from_result(score_fn(node)),
                None => ScoreEntry::from_result(Err(format!("unknown backend {id}"))),
            };
            (id.clone(), entry)
        })
        .collect()
}

#[derive(Debug, Clone, Error, PartialEq)]
#[error("no backend produced a score")]
pub struct NoCandidates;

fn tie_key(s: &Score) -> f64 {
    match s.detail {
        ScoreDetail::Fidelity { f_canary, .. } => -f_canary,
        ScoreDetail::Topology { cost, .. } => cost,
    }
}

/// Lowest value wins; ties go to the better detail, then the smaller id.
pub fn select(table: &BTreeMap<String, ScoreEntry>) -> Result<String, NoCandidates> {
    table
        .iter()
        .filter_map(|(id, e)| e.score.as_ref().map(|s| (id, s)))
        .min_by(|(ia, a), (ib, b)| {
            a.value.total_cmp(&b.value).then(tie_key(a).total_cmp(&tie_key(b))).then_with(|| ia.cmp(ib))
        })
        .map(|(id, _)| id.clone())
        .ok_or(NoCandidates)
}

/// Prepared per-job scoring state, shared across backends.
pub enum Scorer {
    Fidelity { target: f64, canary: Result<Canary, String> },
    Topology { graph: TopologyGraph },
}

impl Scorer {
    pub fn new(job: &Job) -> Self {
        match &job.workload {
            Workload::Fidelity { target, circuit } => {
                Scorer::Fidelity { target: *target, canary: Canary::new(circuit).map_err(|e| e.to_string()) }
            }
            Workload::Topology { graph } => Scorer::Topology { graph: graph.clone() },
        }
    }

    pub fn score(&self, b: &Backend, seed: u64) -> Result<Score, String> {
        match self {
            Scorer::Fidelity { target, canary } => {
                let canary = canary.as_ref().map_err(Clone::clone)?;
                canary.score(*target, b, SCORING_SHOTS, seed).map_err(|e: RankingError| e.to_string())
            }
            Scorer::Topology { graph } => Ok(topology_score(graph, b)),
        }
    }
}

/// Scores `job` against one backend exactly as the ranking phase does.
pub fn score_job(job: &Job, b: &Backend) -> Result<Score, String> {
    Scorer::new(job).score(b, job.spec.seed)
}

/// The circuit a job runs: the user circuit, or the CX pattern of its topology.
pub fn job_circuit(job: &Job) -> Circuit {
    match &job.workload {
        Workload::Fidelity { circuit, .. } => circuit.clone(),
        Workload::Topology { graph } => topology_to_circuit(graph),
    }
}

pub fn package(job: &Job, backend_id: &str) -> JobPackage {
    let qasm = match &job.spec.strategy {
        StrategySpec::Fidelity { qasm, .. } => qasm.clone(),
        StrategySpec::Topology { .. } => emit_qasm(&job_circuit(job)).text,
    };
    let runner = serde_json::json!({
        "backend": backend_id,
        "circuit": "circuit.qasm",
        "shots": EXECUTION_SHOTS,
        "seed": job.spec.seed,
    });
    JobPackage {
        image: job.spec.image.clone(),
        files: vec![
            PackageFile { path: "circuit.qasm".into(), contents: qasm },
            PackageFile { path: "runner.json".into(), contents: serde_json::to_string_pretty(&runner).unwrap() },
        ],
        requirements: vec!["qorc-runner".into()],
    }
}

/// Transpiles and noisily runs `c` on `b`. Clifford circuits are translated
/// to the Clifford basis and run on the stabilizer engine.
pub fn run_on_backend(
    c: &Circuit,
    b: &Backend,
    shots: u64,
    seed: u64,
) -> Result<(MappedCircuit, OutcomeDistribution, Engine), String> {
    let mut mapped = transpile(c, b).map_err(|e| e.to_string())?;
    if mapped.circuit.is_clifford() {
        mapped.circuit = to_clifford_basis(&mapped.circuit).map_err(|e| e.to_string())?;
    }
    let (counts, engine) = run_noisy(&mapped.circuit, &NoiseModel::from_backend(b), shots, seed)
        .map_err(|e| e.to_string())?;
    Ok((mapped, counts, engine))
}

fn too_wide(c: &Circuit, b: &Backend) -> bool {
    transpile(c, b)
        .ok()
        .and_then(|m| lower(&m.circuit, Some(&NoiseModel::from_backend(b))).ok())
        .is_some_and(|p| !p.is_clifford() && p.num_wires() > crate::sim::MAX_STATEVECTOR_QUBITS)
}

/// Runs a scheduled job on its chosen backend and records the counts in the logs.
pub fn execute(record: &mut JobRecord, job: &Job, backend: &Backend) {
    assert_eq!(record.state, JobState::Scheduled);
    record.advance(JobState::Running);
    record.package = Some(package(job, &backend.id));
    let original = job_circuit(job);
    let substitute = too_wide(&original, backend);
    let circuit = if substitute { cliffordize(&original) } else { original };

    let mut log = String::new();
    let _ = writeln!(log, "job {} scheduled on {}", job.spec.name, backend.id);
    if substitute {
        let _ = writeln!(
            log,
            "{CANARY_WARNING}: circuit is non-Clifford and wider than {} live qubits; running its Clifford canary",
            crate::sim::MAX_STATEVECTOR_QUBITS
        );
    }
    match run_on_backend(&circuit, backend, EXECUTION_SHOTS, job.spec.seed) {
        Ok((mapped, counts, engine)) => {
            let _ = writeln!(
                log,
                "transpiled: {} gates, {} swaps, layout {:?}",
                mapped.circuit.gates.len(),
                mapped.swap_count(),
                mapped.layout.map
            );
            let engine_name = match engine {
                Engine::Stabilizer => "stabilizer",
                Engine::Statevector => "statevector",
            };
            let _ = writeln!(log, "engine: {engine_name}, shots: {EXECUTION_SHOTS}, seed: {}", job.spec.seed);
            let _ = writeln!(log, "{COUNTS_BANNER}");
            let _ = writeln!(log, "{}", counts.to_python_dict());
            record.logs = log;
            record.execution = Some(Execution {
                backend_id: backend.id.clone(),
                engine,
                shots: EXECUTION_SHOTS,
                canary_substitute: substitute,
                counts,
            });
            record.advance(JobState::Completed);
        }
        Err(e) => {
            let _ = writeln!(log, "ERROR: {e}");
            record.logs = log;
            record.advance(JobState::Failed);
        }
    }
}

/// Filter, rank, select and execute one job, reporting each snapshot to `observe`.
pub fn process(record: &mut JobRecord, job: &Job, fleet: &Fleet, observe: &mut dyn FnMut(&JobRecord)) {
    record.filtered = filter(&job.spec, fleet);
    record.advance(JobState::Filtered);
    observe(record);
    if record.filtered.is_empty() {
        record.logs = "no backend satisfies the job's requirements\n".into();
        record.advance(JobState::Unschedulable);
        observe(record);
        return;
    }

    let scorer = Scorer::new(job);
    record.score_table = rank(&record.filtered, fleet, |n| scorer.score(&n.backend, job.spec.seed));
    record.advance(JobState::Ranked);
    observe(record);

    let Ok(choice) = select(&record.score_table) else {
        record.logs = "every backend failed to score\n".into();
        record.advance(JobState::Unschedulable);
        observe(record);
        return;
    };
    record.decision = Some(choice.clone());
    record.advance(JobState::Scheduled);
    observe(record);

    let backend = &fleet.get(&choice).expect("selected from the fleet").backend;
    execute(record, job, backend);
    observe(record);
}

#[derive(Debug, Error)]
pub enum JournalError {
    #[error("journal i/o on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("journal line {line}: {source}")]
    Parse { line: usize, source: serde_json::Error },
}

/// Append-only JSON-lines log of record snapshots; the last snapshot per id wins.
#[derive(Debug)]
pub struct Journal {
    path: PathBuf,
    file: Mutex<fs::File>,
}

impl Journal {
    pub fn open(path: &Path) -> Result<Self, JournalError> {
        let io = |source| JournalError::Io { path: path.to_path_buf(), source };
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(io)?;
        Ok(Journal { path: path.to_path_buf(), file: Mutex::new(file) })
    }

    pub fn append(&self, record: &JobRecord) -> Result<(), JournalError> {
        let mut line = serde_json::to_string(record).expect("records serialize");
        line.push('\n');
        let mut f = self.file.lock().unwrap();
        f.write_all(line.as_bytes())
            .and_then(|_| f.sync_data())
            .map_err(|source| JournalError::Io { path: self.path.clone(), source })
    }

    /// Latest snapshot of every job, in id order. A torn final line is ignored.
    pub fn replay(path: &Path) -> Result<BTreeMap<String, JobRecord>, JournalError> {
        let mut out = BTreeMap::new();
        let file = match fs::File::open(path) {
            Ok(f) => f,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(out),
            Err(source) => return Err(JournalError::Io { path: path.to_path_buf(), source }),
        };
        let lines: Vec<String> = BufReader::new(file)
            .lines()
            .collect::<Result<_, _>>()
            .map_err(|source| JournalError::Io { path: path.to_path_buf(), source })?;
        let last = lines.len();
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<JobRecord>(line) {
                Ok(r) => {
                    out.insert(r.id.clone(), r);
                }
                Err(_) if i + 1 == last => {}
                Err(source) => return Err(JournalError::Parse { line: i + 1, source }),
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SubmitError {
    #[error("invalid job: {0}")]
    Validation(#[from] ValidationError),
    #[error("queue is full ({QUEUE_CAPACITY} jobs waiting)")]
    QueueFull,
}

struct Shared {
    fleet: Arc<Fleet>,
    records: RwLock<BTreeMap<String, JobRecord>>,
    jobs_by_name: RwLock<BTreeMap<String, Job>>,
    running: RwLock<Option<String>>,
    next_id: Mutex<u64>,
    journal: Option<Journal>,
}

impl Shared {
    fn publish(&self, record: &JobRecord) {
        if let Some(j) = &self.journal {
            if let Err(e) = j.append(record) {
                eprintln!("journal write failed: {e}");
            }
        }
        self.records.write().unwrap().insert(record.id.clone(), record.clone());
    }
}

/// The job queue: submissions are accepted immediately and one drain thread
/// processes them strictly in order.
pub struct Scheduler {
    shared: Arc<Shared>,
    tx: Option<SyncSender<(String, Job)>>,
    worker: Option<JoinHandle<()>>,
}

impl Scheduler {
    /// Starts the drain loop. With a journal, completed records are restored
    /// and interrupted jobs are queued again from the start.
    pub fn start(fleet: Fleet, journal_path: Option<&Path>) -> Result<Self, JournalError> {
        let mut restored = match journal_path {
            Some(p) => Journal::replay(p)?,
            None => BTreeMap::new(),
        };
        let journal = journal_path.map(Journal::open).transpose()?;
        let next = restored.keys().filter_map(|id| id.strip_prefix("job-")?.parse::<u64>().ok()).max().unwrap_or(0);
        let mut requeue = Vec::new();
        let mut jobs_by_name = BTreeMap::new();
        for r in restored.values_mut() {
            if let Ok(job) = r.spec.validate() {
                jobs_by_name.insert(r.spec.name.clone(), job.clone());
                if !r.state.is_terminal() {
                    *r = JobRecord::new(r.id.clone(), r.spec.clone());
                    requeue.push((r.id.clone(), job));
                }
            }
        }
        let shared = Arc::new(Shared {
            fleet: Arc::new(fleet),
            records: RwLock::new(restored),
            jobs_by_name: RwLock::new(jobs_by_name),
            running: RwLock::new(None),
            next_id: Mutex::new(next + 1),
            journal,
        });
        let (tx, rx) = sync_channel::<(String, Job)>(QUEUE_CAPACITY);
        for item in requeue {
            let _ = tx.try_send(item);
        }
        let worker = {
            let shared = Arc::clone(&shared);
            std::thread::spawn(move || drain(shared, rx))
        };
        Ok(Scheduler { shared, tx: Some(tx), worker: Some(worker) })
    }

    pub fn fleet(&self) -> &Fleet {
        &self.shared.fleet
    }

    /// Registers the job's metadata for scoring without queueing it.
    pub fn register(&self, spec: JobSpec) -> Result<Job, ValidationError> {
        let job = spec.validate()?;
        self.shared.jobs_by_name.write().unwrap().insert(job.spec.name.clone(), job.clone());
        Ok(job)
    }

    pub fn submit(&self, spec: JobSpec) -> Result<String, SubmitError> {
        let job = spec.validate()?;
        let id = {
            let mut next = self.shared.next_id.lock().unwrap();
            let id = format!("job-{:06}", *next);
            *next += 1;
            id
        };
        let record = JobRecord::new(id.clone(), job.spec.clone());
        self.shared.publish(&record);
        self.shared.jobs_by_name.write().unwrap().insert(job.spec.name.clone(), job.clone());
        let tx = self.tx.as_ref().expect("scheduler is running");
        match tx.try_send((id.clone(), job)) {
            Ok(()) => Ok(id),
            Err(TrySendError::Full(_)) | Err(TrySendError::Disconnected(_)) => {
                self.shared.records.write().unwrap().remove(&id);
                Err(SubmitError::QueueFull)
            }
        }
    }

    pub fn get(&self, id: &str) -> Option<JobRecord> {
        self.shared.records.read().unwrap().get(id).cloned()
    }

    pub fn records(&self) -> Vec<JobRecord> {
        self.shared.records.read().unwrap().values().cloned().collect()
    }

    pub fn job_by_name(&self, name: &str) -> Option<Job> {
        self.shared.jobs_by_name.read().unwrap().get(name).cloned()
    }

    pub fn running(&self) -> Option<String> {
        self.shared.running.read().unwrap().clone()
    }

    /// Jobs accepted but not yet finished.
    pub fn queue_depth(&self) -> usize {
        self.shared.records.read().unwrap().values().filter(|r| !r.state.is_terminal()).count()
    }

    /// Blocks until every queued job has been processed.
    pub fn wait_idle(&self) {
        while self.queue_depth() > 0 {
            std::thread::sleep(std::time::Duration::from_millis(5));
        }
    }

    /// Stops accepting jobs and waits for the drain loop to finish the queue.
    pub fn shutdown(mut self) {
        self.stop();
    }

    fn stop(&mut self) {
        self.tx.take();
        if let Some(w) = self.worker.take() {
            let _ = w.join();
        }
    }
}

impl Drop for Scheduler {
    fn drop(&mut self) {
        self.stop();
    }
}

fn drain(shared: Arc<Shared>, rx: Receiver<(String, Job)>) {
    while let Ok((id, job)) = rx.recv() {
        let Some(mut record) = shared.records.read().unwrap().get(&id).cloned() else { continue };
        *shared.running.write().unwrap() = Some(id.clone());
        process(&mut record, &job, &shared.fleet, &mut |r| shared.publish(r));
        *shared.running.write().unwrap() = None;
    }
}

/// Convenience for in-process callers: runs the whole pipeline synchronously.
pub fn run_job(spec: &JobSpec, fleet: &Fleet, id: &str) -> Result<JobRecord, ValidationError> {
    let job = spec.validate()?;
    let mut record = JobRecord::new(id, spec.clone());
    process(&mut record, &job, fleet, &mut |_| {});
    Ok(record)
}
