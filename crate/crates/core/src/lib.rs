//! Exact analysis and Monte Carlo simulation of up-down Markov chains on
//! permutations and graphs.

pub mod chain;
pub mod error;
pub mod graph;
pub mod kernel;
pub mod montecarlo;
pub mod perm;
pub mod rational;
pub mod semidiscrete;
pub mod separation;
pub mod verify;

pub use chain::{Chain, ChainSpec, Instance, LevelSpace};
pub use error::{Error, Result};
pub use graph::{GraphInstance, LabeledGraph, UGraph};
pub use kernel::{KernelExport, Matrix, StochKernel};
pub use perm::{Direction, PermInstance, Permutation};
pub use rational::Rational;
