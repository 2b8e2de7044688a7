//! Minimum-information policy synthesis.
//!
//! * [`solve_program6`] minimizes expected total information over expected
//!   state-action residence times for a fixed set of end-component states.
//! * [`extract_policy`] turns residence times into a stationary policy.
//! * [`exhaustive_search`] enumerates unions of unobserved end components.
//! * [`solve_switch`] solves the problem on the MDP extended with `switch`
//!   actions and returns an observation-stationary policy.

mod barrier;
mod exhaustive;
mod output;
mod policy;
mod program;
mod reach;
mod switch;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ext::ExtReal;
use crate::mdp::{ModelError, StationaryPolicy};

pub use exhaustive::{exhaustive_search, DEFAULT_SUBSET_CAP};
pub use output::{load_policy_file, Agent, PolicyFile};
pub use policy::{extract_policy, stay_policy, ZERO_RESIDENCE};
pub use program::{solve_program6, solve_program6_with, GroupPenalty};
pub use reach::{feasibility_check, Feasibility, FEASIBILITY_TOL};
pub(crate) use switch::sample as switch_sample;
pub use switch::{build_modified_mdp, solve_switch, ModifiedMdp, SwitchPolicy, SWITCH_ACTION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Optimal,
    Infeasible,
    InfiniteInformation,
}

impl std::fmt::Display for Status {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Status::Optimal => "optimal",
            Status::Infeasible => "infeasible",
            Status::InfiniteInformation => "infinite_information",
        })
    }
}

/// Synthesis strategy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// All unobserved maximal end components are closed; stay in every one.
    Closed,
    /// Enumerate unions of unobserved end components.
    Exhaustive,
    /// Modified MDP with `switch` actions.
    Switch,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "closed" => Ok(Mode::Closed),
            "exhaustive" => Ok(Mode::Exhaustive),
            "switch" => Ok(Mode::Switch),
            other => Err(format!("unknown mode {other:?} (expected closed, exhaustive or switch)")),
        }
    }
}

impl std::fmt::Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Mode::Closed => "closed",
            Mode::Exhaustive => "exhaustive",
            Mode::Switch => "switch",
        })
    }
}

/// Optimal expected state-action residence times of the occupation program.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupationSolution {
    /// `x[s][a]`; zero for end-component states and pruned actions
    pub x: Vec<Vec<f64>>,
    pub objective: ExtReal,
    pub reach_prob: f64,
    pub status: Status,
    /// end-component states excluded from the flow variables
    pub c_end: Vec<bool>,
    /// maximum absolute violation of the flow-balance equations
    pub flow_residual: f64,
}

impl OccupationSolution {
    /// Expected residence time of every state (sum over its actions).
    pub fn state_residence(&self) -> Vec<f64> {
        self.x.iter().map(|row| row.iter().sum()).collect()
    }
}

/// Knobs of the interior-point solver.
#[derive(Debug, Clone)]
pub struct SolverOptions {
    pub mu_initial: f64,
    pub mu_final: f64,
    pub max_newton: usize,
    /// observed states with residence below this are tried at zero
    pub support_tol: f64,
    pub refine_support: bool,
    /// extra grouped terms added to the objective
    pub penalties: Vec<GroupPenalty>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            mu_initial: 1.0,
            mu_final: 1e-9,
            max_newton: 200,
            support_tol: 1e-7,
            refine_support: true,
            penalties: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum SynthesisError {
    #[error("solver did not converge: {reason}")]
    Numerical {
        reason: String,
        best: Box<OccupationSolution>,
    },
    #[error("{count} unobserved end-component states exceed the exhaustive-search cap of {cap}; use the switch mode")]
    TooManySubsets { count: usize, cap: usize },
    #[error("mode closed requires every unobserved maximal end component to be closed; use exhaustive or switch")]
    AssumptionViolated,
    #[error("state {0} has no action staying inside the union of end components")]
    InvalidUnion(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

/// Result of a full synthesis run.
#[derive(Debug, Clone)]
pub struct Synthesis {
    pub mode: Mode,
    pub status: Status,
    pub objective: ExtReal,
    pub reach_prob: f64,
    pub feasibility: Feasibility,
    /// stationary policy on the input MDP (absent when infeasible); for the
    /// switch mode this is an admissible fallback only when the program has
    /// no finite solution
    pub policy: Option<StationaryPolicy>,
    pub switch: Option<SwitchPolicy>,
    pub solution: Option<OccupationSolution>,
    /// end-component states used by the returned policy
    pub c_end: Vec<usize>,
}

/// Runs feasibility checking and the chosen synthesis mode.
pub fn synthesize(mdp: &crate::mdp::Mdp, mode: Mode, opts: &SolverOptions) -> Result<Synthesis, SynthesisError> {
    match mode {
        Mode::Closed => program::solve_closed(mdp, opts),
        Mode::Exhaustive => exhaustive::exhaustive_with(mdp, DEFAULT_SUBSET_CAP, opts),
        Mode::Switch => switch::solve_switch_with(mdp, opts),
    }
}
