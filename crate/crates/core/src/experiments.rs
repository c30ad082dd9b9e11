//! Reproducible experiments over a fleet. Reports carry no timings so reruns
//! serialize byte-identically.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::benchmarks::Benchmark;
use crate::circuit::TopologyGraph;
use crate::device::{Backend, Fleet, Node};
use crate::ranking::Score;
use crate::scheduler::{filter, rank, run_on_backend, select, Constraints, JobSpec, Scorer, StrategySpec};
use crate::sim::{hellinger_fidelity, ideal_probabilities};

pub const DEFAULT_TOPOLOGIES: [&str; 5] = ["grid-4", "line-6", "ring-7", "heavy-square-6", "full-6"];
pub const DEFAULT_THRESHOLDS: [f64; 11] = [0.07, 0.30, 0.32, 0.34, 0.35, 0.36, 0.37, 0.38, 0.40, 0.45, 0.70];
pub const DEFAULT_TRIALS: usize = 25;

pub fn default_topology(name: &str) -> Option<TopologyGraph> {
    let edges: Vec<(usize, usize)> = match name {
        "grid-4" => vec![(0, 1), (2, 3), (0, 2), (1, 3)],
        "line-6" => (0..5).map(|i| (i, i + 1)).collect(),
        "ring-7" => (0..7).map(|i| (i, (i + 1) % 7)).collect(),
        "heavy-square-6" => vec![(0, 1), (1, 2), (2, 3), (3, 0), (0, 4), (2, 5)],
        "full-6" => (0..6).flat_map(|a| (a + 1..6).map(move |b| (a, b))).collect(),
        _ => return None,
    };
    let n = edges.iter().map(|&(a, b)| a.max(b) + 1).max().unwrap_or(0);
    Some(TopologyGraph::new(n, edges).expect("static topology"))
}

fn experiment_job(name: &str, qubits: usize, strategy: StrategySpec, seed: u64) -> JobSpec {
    JobSpec {
        name: name.to_string(),
        image: "qorc/experiment".into(),
        qubits,
        cpu: 1,
        mem: 1,
        constraints: Constraints::default(),
        strategy,
        seed,
    }
}

fn mean(xs: impl IntoIterator<Item = f64>) -> f64 {
    let (s, n) = xs.into_iter().fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

fn median(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    match v.len() {
        0 => 0.0,
        n if n % 2 == 1 => v[n / 2],
        n => (v[n / 2 - 1] + v[n / 2]) / 2.0,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyTrial {
    pub random_backend: String,
    pub random_score: f64,
    pub decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyRow {
    pub topology: String,
    pub scheduler_backend: String,
    pub scheduler_score: f64,
    pub trials: Vec<TopologyTrial>,
    /// Trials where the scheduler's score was no worse than the random pick.
    pub wins: usize,
    pub avg_decrease: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DefaultTopologiesReport {
    pub seed: u64,
    pub trials: usize,
    pub rows: Vec<TopologyRow>,
}

/// Scheduler choice versus a uniformly random filtered backend for each
/// default topology. Decrease is `(random - scheduler) / random`.
pub fn default_topologies(fleet: &Fleet, names: &[&str], trials: usize, seed: u64) -> DefaultTopologiesReport {
    let rows = names
        .iter()
        .enumerate()
        .map(|(i, name)| {
            let graph = default_topology(name).unwrap_or_else(|| panic!("unknown topology {name}"));
            let spec = experiment_job(name, graph.num_nodes(), StrategySpec::Topology { graph }, seed);
            let job = spec.validate().expect("experiment jobs are valid");
            let ids = filter(&spec, fleet);
            let scorer = Scorer::new(&job);
            let table = rank(&ids, fleet, |n| scorer.score(&n.backend, seed));
            let choice = select(&table).expect("topology scores never fail");
            let value = |id: &str| table[id].score.as_ref().map(|s: &Score| s.value).unwrap();
            let sched = value(&choice);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64);
            let trials: Vec<TopologyTrial> = (0..trials)
                .map(|_| {
                    let pick = &ids[rng.gen_range(0..ids.len())];
                    let random = value(pick);
                    let decrease = if random > 0.0 { (random - sched) / random } else { 0.0 };
                    TopologyTrial { random_backend: pick.clone(), random_score: random, decrease }
                })
                .collect();
            TopologyRow {
                topology: name.to_string(),
                scheduler_backend: choice,
                scheduler_score: sched,
                wins: trials.iter().filter(|t| sched <= t.random_score).count(),
                avg_decrease: mean(trials.iter().map(|t| t.decrease)),
                trials,
            }
        })
        .collect();
    DefaultTopologiesReport { seed, trials, rows }
}

impl DefaultTopologiesReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<16} {:<12} {:>10} {:>10} {:>8} {:>12}", "topology", "scheduler", "score", "rand mean", "wins", "avg decrease");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{:<16} {:<12} {:>10.6} {:>10.6} {:>4}/{:<3} {:>11.2}%",
                r.topology,
                r.scheduler_backend,
                r.scheduler_score,
                mean(r.trials.iter().map(|t| t.random_score)),
                r.wins,
                r.trials.len(),
                100.0 * r.avg_decrease
            );
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRun {
    pub seed: u64,
    pub scheduler_backend: String,
    pub oracle_backend: String,
    pub random_backend: String,
    pub f_scheduler: f64,
    pub f_oracle: f64,
    pub f_random: f64,
    pub fleet_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityRow {
    pub circuit: String,
    pub qubits: usize,
    pub clifford: bool,
    pub runs: Vec<FidelityRun>,
    pub mean_scheduler: f64,
    pub mean_oracle: f64,
    pub mean_random: f64,
    pub mean_median: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub shots: u64,
    pub seeds: Vec<u64>,
    pub rows: Vec<FidelityRow>,
}

/// Noisy fidelity of the original circuit on one backend, against its exact
/// ideal distribution.
pub fn oracle_fidelity(bench: &Benchmark, b: &Backend, shots: u64, seed: u64) -> Result<f64, String> {
    let ideal = ideal_probabilities(&bench.circuit).map_err(|e| e.to_string())?;
    let (_, counts, _) = run_on_backend(&bench.circuit, b, shots, seed)?;
    hellinger_fidelity(&ideal, &counts.probabilities()).map_err(|e| e.to_string())
}

/// For each benchmark and seed: the scheduler's pick (target fidelity 1),
/// the oracle's best backend and a random filtered backend, all measured
/// by the original circuit's noisy fidelity on that backend.
pub fn fidelity(fleet: &Fleet, benches: &[Benchmark], seeds: &[u64], shots: u64) -> FidelityReport {
    let rows = benches
        .iter()
        .map(|bench| {
            let ideal = ideal_probabilities(&bench.circuit).expect("benchmarks have ideal distributions");
            let runs: Vec<FidelityRun> = seeds
                .iter()
                .map(|&seed| {
                    let qasm = crate::qasm::emit_qasm(&bench.circuit).text;
                    let spec = experiment_job(
                        bench.name,
                        bench.circuit.num_qubits,
                        StrategySpec::Fidelity { target: 1.0, qasm },
                        seed,
                    );
                    let job = spec.validate().expect("benchmark jobs are valid");
                    let ids = filter(&spec, fleet);
                    let scorer = Scorer::new(&job);
                    let table = rank(&ids, fleet, |n| scorer.score(&n.backend, seed));
                    let choice = select(&table).expect("benchmarks score on every backend");

                    let oracle: Vec<(String, f64)> = ids
                        .iter()
                        .map(|id| {
                            let b = &fleet.get(id).unwrap().backend;
                            let (_, counts, _) = run_on_backend(&bench.circuit, b, shots, seed).expect("benchmark runs");
                            (id.clone(), hellinger_fidelity(&ideal, &counts.probabilities()).unwrap())
                        })
                        .collect();
                    let f_of = |id: &str| oracle.iter().find(|(i, _)| i == id).unwrap().1;
                    let (best, f_best) = oracle
                        .iter()
                        .fold(None::<&(String, f64)>, |acc, e| match acc {
                            Some(a) if a.1 >= e.1 => Some(a),
                            _ => Some(e),
                        })
                        .cloned()
                        .unwrap();
                    let mut rng = ChaCha8Rng::seed_from_u64(seed);
                    let pick = ids[rng.gen_range(0..ids.len())].clone();
                    let fs: Vec<f64> = oracle.iter().map(|e| e.1).collect();
                    FidelityRun {
                        seed,
                        f_scheduler: f_of(&choice),
                        f_random: f_of(&pick),
                        scheduler_backend: choice,
                        oracle_backend: best,
                        random_backend: pick,
                        f_oracle: f_best,
                        fleet_median: median(&fs),
                    }
                })
                .collect();
            FidelityRow {
                circuit: bench.name.to_string(),
                qubits: bench.circuit.num_qubits,
                clifford: bench.circuit.is_clifford(),
                mean_scheduler: mean(runs.iter().map(|r| r.f_scheduler)),
                mean_oracle: mean(runs.iter().map(|r| r.f_oracle)),
                mean_random: mean(runs.iter().map(|r| r.f_random)),
                mean_median: mean(runs.iter().map(|r| r.fleet_median)),
                runs,
            }
        })
        .collect();
    FidelityReport { shots, seeds: seeds.to_vec(), rows }
}

impl FidelityReport {
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(
            out,
            "{:<8} {:>3} {:>8} {:>8} {:>8} {:>8} {:>9}",
            "circuit", "n", "oracle", "sched", "random", "median", "same pick"
        );
        for r in &self.rows {
            let same = r.runs.iter().filter(|x| x.scheduler_backend == x.oracle_backend).count();
            let _ = writeln!(
                out,
                "{:<8} {:>3} {:>8.4} {:>8.4} {:>8.4} {:>8.4} {:>6}/{:<2}",
                r.circuit,
                r.qubits,
                r.mean_oracle,
                r.mean_scheduler,
                r.mean_random,
                r.mean_median,
                same,
                r.runs.len()
            );
        }
        out
    }
}

pub const CHOICE_DEVICES: [&str; 3] = ["a-tree", "b-ring", "c-line"];
const CHOICE_QUBITS: usize = 10;
const TREE_EDGES: [(usize, usize); 9] = [(0, 1), (0, 2), (1, 3), (1, 4), (2, 5), (2, 6), (3, 7), (3, 8), (4, 9)];

/// The ten-node graphs used by the topology-choice experiment.
pub fn choice_topology(name: &str) -> Option<TopologyGraph> {
    let n = CHOICE_QUBITS;
    let edges: Vec<(usize, usize)> = match name {
        "tree" => TREE_EDGES.to_vec(),
        "ring" => (0..n).map(|i| (i, (i + 1) % n)).collect(),
        "line" => (0..n - 1).map(|i| (i, i + 1)).collect(),
        _ => return None,
    };
    Some(TopologyGraph::new(n, edges).expect("static topology"))
}

/// Three devices with identical error rates that differ only in coupling.
/// With `same_graph` they all share the tree coupling.
pub fn choice_fleet(same_graph: bool) -> Fleet {
    let shapes = ["tree", "ring", "line"];
    Fleet::new(
        CHOICE_DEVICES
            .iter()
            .zip(shapes)
            .map(|(id, shape)| {
                let g = choice_topology(if same_graph { "tree" } else { shape }).unwrap();
                let edges: Vec<(usize, usize)> = g.edges().collect();
                Node::new(Backend::uniform(id, CHOICE_QUBITS, &edges, 0.02, 0.001, 0.01))
            })
            .collect(),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopologyChoiceReport {
    pub topology: String,
    pub same_graph: bool,
    pub repeats: usize,
    pub choices: Vec<String>,
    pub scores: Vec<(String, f64)>,
}

impl TopologyChoiceReport {
    pub fn count(&self, id: &str) -> usize {
        self.choices.iter().filter(|c| *c == id).count()
    }

    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "user topology: {} (same graph: {})", self.topology, self.same_graph);
        for (id, s) in &self.scores {
            let _ = writeln!(out, "{:<8} score {:>10.6} chosen {:>3}/{}", id, s, self.count(id), self.repeats);
        }
        out
    }
}

/// Submits the same topology job `repeats` times to the three-device fleet.
pub fn topology_choice(topology: &str, repeats: usize, same_graph: bool) -> TopologyChoiceReport {
    let fleet = choice_fleet(same_graph);
    let graph = choice_topology(topology).unwrap_or_else(|| panic!("unknown topology {topology}"));
    let mut scores = Vec::new();
    let choices = (0..repeats)
        .map(|i| {
            let spec = experiment_job(topology, CHOICE_QUBITS, StrategySpec::Topology { graph: graph.clone() }, i as u64);
            let job = spec.validate().expect("valid");
            let ids = filter(&spec, &fleet);
            let scorer = Scorer::new(&job);
            let table = rank(&ids, &fleet, |n| scorer.score(&n.backend, spec.seed));
            scores = table.iter().map(|(id, e)| (id.clone(), e.score.as_ref().unwrap().value)).collect();
            select(&table).expect("scores")
        })
        .collect();
    TopologyChoiceReport { topology: topology.to_string(), same_graph, repeats, choices, scores }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterSweepReport {
    pub fleet_min_avg_err2q: f64,
    pub fleet_max_avg_err2q: f64,
    pub thresholds: Vec<f64>,
    pub counts: Vec<usize>,
}

/// How many nodes pass a `max_avg_err2q` constraint at each threshold.
pub fn filter_sweep(fleet: &Fleet, thresholds: &[f64]) -> FilterSweepReport {
    let avgs: Vec<f64> = fleet.iter().map(|n| n.labels().avg_err2q).collect();
    let counts = thresholds
        .iter()
        .map(|&t| {
            let mut spec = experiment_job("sweep", 1, StrategySpec::Topology { graph: TopologyGraph::empty(1) }, 0);
            spec.constraints.max_avg_err2q = Some(t);
            filter(&spec, fleet).len()
        })
        .collect();
    FilterSweepReport {
        fleet_min_avg_err2q: avgs.iter().copied().fold(f64::INFINITY, f64::min),
        fleet_max_avg_err2q: avgs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        thresholds: thresholds.to_vec(),
        counts,
    }
}

impl FilterSweepReport {
    pub fn table(&self) -> String {
        let mut out = format!(
            "fleet avg_err2q range [{:.4}, {:.4}]\n{:>9} {:>6}\n",
            self.fleet_min_avg_err2q, self.fleet_max_avg_err2q, "threshold", "nodes"
        );
        for (t, c) in self.thresholds.iter().zip(&self.counts) {
            let _ = writeln!(out, "{t:>9.2} {c:>6}");
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_topology_shapes() {
        let sizes: Vec<(usize, usize)> = DEFAULT_TOPOLOGIES
            .iter()
            .map(|n| {
                let g = default_topology(n).unwrap();
                (g.num_nodes(), g.num_edges())
            })
            .collect();
        assert_eq!(sizes, vec![(4, 4), (6, 5), (7, 7), (6, 6), (6, 15)]);
        assert!(default_topology("nope").is_none());
    }

    #[test]
    fn tree_device_wins_its_own_topology() {
        let r = topology_choice("tree", 3, false);
        assert_eq!(r.count("a-tree"), 3);
        let r = topology_choice("ring", 1, false);
        assert_eq!(r.choices, vec!["b-ring"]);
        let r = topology_choice("ring", 2, true);
        assert_eq!(r.count("a-tree"), 2);
    }

    #[test]
    fn median_and_mean() {
        assert_eq!(median(&[3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), 2.5);
        assert_eq!(mean([1.0, 2.0]), 1.5);
    }
}
