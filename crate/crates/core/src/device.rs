//! Simulated quantum backends: the device model, random fleet generation,
//! node labels and the JSON registry.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::circuit::TopologyGraph;

/// Maximum number of couplers per qubit.
pub const MAX_DEGREE: usize = 4;

pub const REGISTRY_FORMAT: &str = "qorc-registry";
pub const REGISTRY_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DeviceError {
    #[error("invalid generation parameters: {0}")]
    InvalidParams(String),
    #[error("i/o error on {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("schema error at `{path}`: {message}")]
    Schema { path: String, message: String },
}

/// A simulated quantum device.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Backend {
    pub id: String,
    pub num_qubits: usize,
    /// Undirected couplers as `[lo, hi]`, sorted.
    #[serde(with = "pair_list")]
    pub coupling: Vec<(usize, usize)>,
    /// Two-qubit error per coupler, keyed `"a-b"` on the wire.
    #[serde(with = "edge_map")]
    pub err2q: BTreeMap<(usize, usize), f64>,
    pub err1q: Vec<f64>,
    pub readout_err: Vec<f64>,
    pub readout_len_ns: Vec<f64>,
    pub t1_us: Vec<f64>,
    pub t2_us: Vec<f64>,
    pub basis_gates: Vec<String>,
}

mod pair_list {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(pairs: &[(usize, usize)], s: S) -> Result<S::Ok, S::Error> {
        pairs.iter().map(|&(a, b)| [a, b]).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<(usize, usize)>, D::Error> {
        Ok(Vec::<[usize; 2]>::deserialize(d)?.into_iter().map(|[a, b]| (a, b)).collect())
    }
}

pub(crate) mod edge_map {
    use std::collections::BTreeMap;

    use serde::de::Error;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(map: &BTreeMap<(usize, usize), f64>, s: S) -> Result<S::Ok, S::Error> {
        // Keep numeric edge order rather than string order.
        let mut out = serde_json::Map::new();
        for (&(a, b), &p) in map {
            out.insert(format!("{a}-{b}"), serde_json::Value::from(p));
        }
        out.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<(usize, usize), f64>, D::Error> {
        let raw = BTreeMap::<String, f64>::deserialize(d)?;
        raw.into_iter()
            .map(|(k, v)| {
                let (a, b) = k
                    .split_once('-')
                    .and_then(|(a, b)| Some((a.parse::<usize>().ok()?, b.parse::<usize>().ok()?)))
                    .ok_or_else(|| D::Error::custom(format!("bad edge key `{k}`, expected \"a-b\"")))?;
                Ok(((a.min(b), a.max(b)), v))
            })
            .collect()
    }
}

impl Backend {
    /// A backend on the given couplers with the same error rates everywhere.
    pub fn uniform(id: &str, n: usize, edges: &[(usize, usize)], err2q: f64, err1q: f64, readout: f64) -> Self {
        let coupling: std::collections::BTreeSet<(usize, usize)> = edges.iter().map(|&(a, b)| (a.min(b), a.max(b))).collect();
        Backend {
            id: id.to_string(),
            num_qubits: n,
            err2q: coupling.iter().map(|&e| (e, err2q)).collect(),
            coupling: coupling.into_iter().collect(),
            err1q: vec![err1q; n],
            readout_err: vec![readout; n],
            readout_len_ns: vec![30.0; n],
            t1_us: vec![100e3; n],
            t2_us: vec![100e3; n],
            basis_gates: ["u1", "u2", "u3", "cx"].map(String::from).to_vec(),
        }
    }

    pub fn topology(&self) -> TopologyGraph {
        TopologyGraph::new(self.num_qubits, self.coupling.iter().copied())
            .expect("validated backend couplers are in range")
    }

    pub fn edge_error(&self, a: usize, b: usize) -> Option<f64> {
        self.err2q.get(&(a.min(b), a.max(b))).copied()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.num_qubits];
        for &(a, b) in &self.coupling {
            deg[a] += 1;
            deg[b] += 1;
        }
        deg
    }

    /// Checks every backend invariant; errors name the offending field.
    pub fn validate(&self) -> Result<(), (String, String)> {
        let n = self.num_qubits;
        let per_qubit: [(&str, &Vec<f64>); 5] = [
            ("err1q", &self.err1q),
            ("readout_err", &self.readout_err),
            ("readout_len_ns", &self.readout_len_ns),
            ("t1_us", &self.t1_us),
            ("t2_us", &self.t2_us),
        ];
        for (name, values) in per_qubit {
            if values.len() != n {
                return Err((name.into(), format!("expected {n} entries, found {}", values.len())));
            }
        }
        for (name, values) in [("err1q", &self.err1q), ("readout_err", &self.readout_err)] {
            for (q, &p) in values.iter().enumerate() {
                if !(0.0..=1.0).contains(&p) {
                    return Err((format!("{name}[{q}]"), format!("probability {p} outside [0, 1]")));
                }
            }
        }
        for q in 0..n {
            let (t1, t2) = (self.t1_us[q], self.t2_us[q]);
            if !(t1 > 0.0 && t2 > 0.0) {
                return Err((format!("t1_us[{q}]"), "coherence times must be positive".into()));
            }
            if t2 > 2.0 * t1 {
                return Err((format!("t2_us[{q}]"), format!("t2 {t2} exceeds 2*t1 = {}", 2.0 * t1)));
            }
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, &(a, b)) in self.coupling.iter().enumerate() {
            if a == b || a >= n || b >= n {
                return Err((format!("coupling[{i}]"), format!("invalid coupler [{a},{b}]")));
            }
            let key = (a.min(b), a.max(b));
            if !seen.insert(key) {
                return Err((format!("coupling[{i}]"), format!("duplicate coupler [{a},{b}]")));
            }
            if !self.err2q.contains_key(&key) {
                return Err((format!("err2q.{}-{}", key.0, key.1), "missing error rate for coupler".into()));
            }
        }
        for (&(a, b), &p) in &self.err2q {
            if !seen.contains(&(a, b)) {
                return Err((format!("err2q.{a}-{b}"), "error rate for a pair that is not a coupler".into()));
            }
            if !(0.0..=1.0).contains(&p) {
                return Err((format!("err2q.{a}-{b}"), format!("probability {p} outside [0, 1]")));
            }
        }
        if let Some(q) = self.degrees().iter().position(|&d| d > MAX_DEGREE) {
            return Err(("coupling".into(), format!("qubit {q} has more than {MAX_DEGREE} couplers")));
        }
        if !self.topology().is_connected() {
            return Err(("coupling".into(), "coupling graph is disconnected".into()));
        }
        Ok(())
    }
}

/// Per-node summary attributes used by the filter phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeLabels {
    pub num_qubits: usize,
    pub avg_err2q: f64,
    pub avg_err1q: f64,
    pub avg_readout_err: f64,
    pub avg_t1_us: f64,
    pub avg_t2_us: f64,
    pub cpu_millicores: u64,
    pub mem_mb: u64,
}

fn mean(values: impl ExactSizeIterator<Item = f64>) -> f64 {
    let len = values.len();
    if len == 0 {
        return 0.0;
    }
    values.sum::<f64>() / len as f64
}

pub fn labels_of(b: &Backend, cpu_millicores: u64, mem_mb: u64) -> NodeLabels {
    NodeLabels {
        num_qubits: b.num_qubits,
        avg_err2q: mean(b.err2q.values().copied()),
        avg_err1q: mean(b.err1q.iter().copied()),
        avg_readout_err: mean(b.readout_err.iter().copied()),
        avg_t1_us: mean(b.t1_us.iter().copied()),
        avg_t2_us: mean(b.t2_us.iter().copied()),
        cpu_millicores,
        mem_mb,
    }
}

/// Random backend generation parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub num_qubits: usize,
    pub edge_prob: f64,
    pub err2q_range: (f64, f64),
    pub err1q_range: (f64, f64),
    pub readout_choices: Vec<f64>,
    pub t1_choices: Vec<f64>,
    pub t2_choices: Vec<f64>,
    pub readout_len_ns: f64,
    pub basis_gates: Vec<String>,
    pub seed: u64,
}

pub const SETUP_QUBITS: [usize; 10] = [15, 20, 27, 35, 50, 60, 78, 85, 95, 100];
pub const SETUP_EDGE_PROBS: [f64; 10] = [0.1, 0.15, 0.3, 0.45, 0.54, 0.67, 0.7, 0.78, 0.89, 0.98];
pub const DEFAULT_CPU_MILLICORES: u64 = 4000;
pub const DEFAULT_MEM_MB: u64 = 16384;

impl GenParams {
    /// Evaluation-fleet values for everything except size, connectivity and seed.
    pub fn setup(num_qubits: usize, edge_prob: f64, seed: u64) -> Self {
        GenParams {
            num_qubits,
            edge_prob,
            err2q_range: (0.01, 0.7),
            err1q_range: (0.01, 0.7),
            readout_choices: vec![0.05, 0.15],
            t1_choices: vec![500e3, 100e3],
            t2_choices: vec![500e3, 100e3],
            readout_len_ns: 30.0,
            basis_gates: ["u1", "u2", "u3", "cx"].map(String::from).to_vec(),
            seed,
        }
    }

    fn check(&self) -> Result<(), DeviceError> {
        let bad = |m: String| Err(DeviceError::InvalidParams(m));
        if self.num_qubits < 2 {
            return bad(format!("num_qubits must be >= 2, got {}", self.num_qubits));
        }
        if !(0.0..=1.0).contains(&self.edge_prob) {
            return bad(format!("edge_prob {} outside [0, 1]", self.edge_prob));
        }
        for (name, (lo, hi)) in [("err2q_range", self.err2q_range), ("err1q_range", self.err1q_range)] {
            if !(0.0 <= lo && lo <= hi && hi <= 1.0) {
                return bad(format!("{name} [{lo}, {hi}] is empty or outside [0, 1]"));
            }
        }
        if self.readout_choices.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return bad("readout_choices must be probabilities".into());
        }
        for (name, set) in [
            ("readout_choices", &self.readout_choices),
            ("t1_choices", &self.t1_choices),
            ("t2_choices", &self.t2_choices),
        ] {
            if set.is_empty() {
                return bad(format!("{name} is empty"));
            }
        }
        if self.t1_choices.iter().chain(&self.t2_choices).any(|t| *t <= 0.0) {
            return bad("coherence times must be positive".into());
        }
        Ok(())
    }
}

/// Generates a connected backend with every qubit degree capped at [`MAX_DEGREE`].
///
/// Candidate couplers are visited in a seeded random order and accepted with
/// probability `edge_prob` while both endpoints have spare degree. Remaining
/// components are then bridged through their lowest-degree qubits; when a
/// component has no spare degree, one of its edges is re-wired into the bridge
/// instead (all-even-degree components have no bridge edges, so this keeps the
/// component connected).
pub fn generate_backend(id: &str, p: &GenParams) -> Result<Backend, DeviceError> {
    p.check()?;
    let n = p.num_qubits;
    let mut rng = ChaCha8Rng::seed_from_u64(p.seed);

    let mut pairs: Vec<(usize, usize)> = (0..n).flat_map(|a| (a + 1..n).map(move |b| (a, b))).collect();
    pairs.shuffle(&mut rng);
    let mut deg = vec![0usize; n];
    let mut edges = std::collections::BTreeSet::new();
    for (a, b) in pairs {
        let accept = rng.gen_bool(p.edge_prob);
        if accept && deg[a] < MAX_DEGREE && deg[b] < MAX_DEGREE {
            edges.insert((a, b));
            deg[a] += 1;
            deg[b] += 1;
        }
    }

    loop {
        let graph = TopologyGraph::new(n, edges.iter().copied()).expect("generated edges are valid");
        let comps = graph.components();
        if comps.len() == 1 {
            break;
        }
        let pick = |comp: &[usize], deg: &[usize]| {
            comp.iter()
                .copied()
                .filter(|&v| deg[v] < MAX_DEGREE)
                .min_by_key(|&v| (deg[v], v))
        };
        let (a_side, b_side) = (&comps[0], &comps[1]);
        let free_a = pick(a_side, &deg);
        let free_b = pick(b_side, &deg);
        // A saturated component gives up its first edge; both endpoints join the bridge.
        let release = |side: &[usize], edges: &mut std::collections::BTreeSet<(usize, usize)>, deg: &mut [usize]| {
            let e = *edges
                .iter()
                .find(|(u, _)| side.binary_search(u).is_ok())
                .expect("saturated component has edges");
            edges.remove(&e);
            deg[e.0] -= 1;
            deg[e.1] -= 1;
            e
        };
        match (free_a, free_b) {
            (Some(u), Some(v)) => {
                edges.insert((u.min(v), u.max(v)));
                deg[u] += 1;
                deg[v] += 1;
            }
            (Some(u), None) => {
                let (x, _) = release(b_side, &mut edges, &mut deg);
                edges.insert((u.min(x), u.max(x)));
                deg[u] += 1;
                deg[x] += 1;
            }
            (None, Some(v)) => {
                let (x, _) = release(a_side, &mut edges, &mut deg);
                edges.insert((v.min(x), v.max(x)));
                deg[v] += 1;
                deg[x] += 1;
            }
            (None, None) => {
                let (u1, u2) = release(a_side, &mut edges, &mut deg);
                let (v1, v2) = release(b_side, &mut edges, &mut deg);
                for (a, b) in [(u1, v1), (u2, v2)] {
                    edges.insert((a.min(b), a.max(b)));
                    deg[a] += 1;
                    deg[b] += 1;
                }
            }
        }
    }

    let coupling: Vec<(usize, usize)> = edges.into_iter().collect();
    let uniform = |rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)| if lo == hi { lo } else { rng.gen_range(lo..=hi) };
    let err2q = coupling.iter().map(|&e| (e, uniform(&mut rng, p.err2q_range))).collect();
    let err1q = (0..n).map(|_| uniform(&mut rng, p.err1q_range)).collect();
    let readout_err = (0..n).map(|_| *p.readout_choices.choose(&mut rng).unwrap()).collect();
    let mut t1_us = Vec::with_capacity(n);
    let mut t2_us = Vec::with_capacity(n);
    for _ in 0..n {
        let t1 = *p.t1_choices.choose(&mut rng).unwrap();
        let allowed: Vec<f64> = p.t2_choices.iter().copied().filter(|&t2| t2 <= 2.0 * t1).collect();
        let t2 = *allowed
            .choose(&mut rng)
            .ok_or_else(|| DeviceError::InvalidParams(format!("no t2 choice satisfies t2 <= 2*t1 for t1 = {t1}")))?;
        t1_us.push(t1);
        t2_us.push(t2);
    }
    Ok(Backend {
        id: id.to_string(),
        num_qubits: n,
        coupling,
        err2q,
        err1q,
        readout_err,
        readout_len_ns: vec![p.readout_len_ns; n],
        t1_us,
        t2_us,
        basis_gates: p.basis_gates.clone(),
    })
}

/// A cluster node: a backend plus its classical capacity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    #[serde(flatten)]
    pub backend: Backend,
    pub cpu_millicores: u64,
    pub mem_mb: u64,
}

impl Node {
    pub fn new(backend: Backend) -> Self {
        Node { backend, cpu_millicores: DEFAULT_CPU_MILLICORES, mem_mb: DEFAULT_MEM_MB }
    }

    pub fn id(&self) -> &str {
        &self.backend.id
    }

    pub fn labels(&self) -> NodeLabels {
        labels_of(&self.backend, self.cpu_millicores, self.mem_mb)
    }
}

/// The registry document: every node of the cluster.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Fleet {
    pub nodes: Vec<Node>,
}

#[derive(Serialize, Deserialize)]
struct RegistryFile {
    format: String,
    version: u32,
    nodes: Vec<Node>,
}

impl Fleet {
    pub fn new(nodes: Vec<Node>) -> Self {
        Fleet { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Node> {
        self.nodes.iter().find(|n| n.id() == id)
    }

    pub fn iter(&self) -> impl Iterator<Item = &Node> {
        self.nodes.iter()
    }

    pub fn to_json(&self) -> String {
        let file = RegistryFile {
            format: REGISTRY_FORMAT.to_string(),
            version: REGISTRY_VERSION,
            nodes: self.nodes.clone(),
        };
        serde_json::to_string_pretty(&file).expect("registry serializes")
    }

    pub fn from_json(text: &str) -> Result<Fleet, DeviceError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let file: RegistryFile = serde_path_to_error::deserialize(de).map_err(|e| DeviceError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        if file.format != REGISTRY_FORMAT {
            return Err(DeviceError::Schema { path: "format".into(), message: format!("expected `{REGISTRY_FORMAT}`") });
        }
        if file.version != REGISTRY_VERSION {
            return Err(DeviceError::Schema {
                path: "version".into(),
                message: format!("unsupported version {}", file.version),
            });
        }
        let mut ids = std::collections::BTreeSet::new();
        for (i, node) in file.nodes.iter().enumerate() {
            if !ids.insert(node.id()) {
                return Err(DeviceError::Schema { path: format!("nodes[{i}].id"), message: "duplicate id".into() });
            }
            node.backend.validate().map_err(|(field, message)| DeviceError::Schema {
                path: format!("nodes[{i}].{field}"),
                message,
            })?;
        }
        Ok(Fleet { nodes: file.nodes })
    }
}

/// Writes the registry atomically (temporary file, then rename).
pub fn registry_save(fleet: &Fleet, path: &Path) -> Result<(), DeviceError> {
    write_atomic(path, fleet.to_json().as_bytes())
}

pub fn registry_load(path: &Path) -> Result<Fleet, DeviceError> {
    let text = fs::read_to_string(path).map_err(|source| DeviceError::Io { path: path.to_path_buf(), source })?;
    Fleet::from_json(&text)
}

pub(crate) fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), DeviceError> {
    let io = |source| DeviceError::Io { path: path.to_path_buf(), source };
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(io)?;
    f.write_all(bytes).map_err(io)?;
    f.sync_all().map_err(io)?;
    fs::rename(&tmp, path).map_err(io)
}

/// The 100-backend evaluation fleet: every (qubit count, edge probability) pair.
pub fn setup_fleet(seed: u64) -> Fleet {
    let mut seeds = ChaCha8Rng::seed_from_u64(seed);
    let mut nodes = Vec::with_capacity(SETUP_QUBITS.len() * SETUP_EDGE_PROBS.len());
    for &n in &SETUP_QUBITS {
        for &prob in &SETUP_EDGE_PROBS {
            let params = GenParams::setup(n, prob, seeds.gen());
            let id = format!("backend_{:02}", nodes.len());
            let backend = generate_backend(&id, &params).expect("setup parameters are valid");
            nodes.push(Node::new(backend));
        }
    }
    Fleet::new(nodes)
}
