//! Filter-and-rank scheduling of quantum circuits onto a fleet of simulated
//! quantum backends.

pub mod benchmarks;
pub mod circuit;
pub mod device;
pub mod experiments;
pub mod qasm;
pub mod ranking;
pub mod scheduler;
pub mod sim;
pub mod transpile;

pub use circuit::{Circuit, Gate, GateKind, TopologyGraph};
pub use device::{Backend, Fleet, Node, NodeLabels};
