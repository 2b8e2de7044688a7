//! Minimum-information policy synthesis for Markov decision processes.
//!
//! An observer watches a subset of the states of an MDP and estimates the
//! agent's transition probabilities there. This crate synthesizes stationary
//! policies that reach a target set with a required probability while
//! minimizing the expected total Fisher information released at the
//! observed states.
//!
//! ```
//! use mininfo::fixtures;
//! use mininfo::synthesis::{synthesize, Mode, SolverOptions};
//!
//! let mdp = fixtures::example1();
//! let result = synthesize(&mdp, Mode::Closed, &SolverOptions::default()).unwrap();
//! let policy = result.policy.unwrap();
//! let s0 = mdp.state_index("s0").unwrap();
//! assert!((policy.prob(s0, 0) - 0.386).abs() < 0.01);
//! ```

pub mod adversary;
pub mod chain;
pub mod components;
pub mod ext;
pub mod fixtures;
pub mod graph;
pub mod information;
pub mod linalg;
pub mod mdp;
pub mod synthesis;
pub mod worlds;

pub use ext::ExtReal;
pub use mdp::{Mdp, MdpBuilder, StationaryPolicy};
