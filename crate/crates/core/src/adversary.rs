//! The observer: path sampling, sample-mean estimation of the transition
//! probabilities at observed states, squared errors and Cramér-Rao style
//! lower bounds.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
#[cfg(feature = "parallel")]
use rayon::prelude::*;
use serde::Serialize;

use crate::chain::{induce_chain, reach_probabilities, residence_times_auto, ChainError, MarkovChain};
use crate::ext::ExtReal;
use crate::information::mass_value;
use crate::mdp::{Mdp, StationaryPolicy};
use crate::synthesis::switch_sample as sample;
use crate::synthesis::{Agent, SwitchPolicy};

/// One simulated path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PathSample {
    pub states: Vec<usize>,
    /// the horizon was hit before absorption
    pub truncated: bool,
}

/// Default horizon: ten steps per state.
pub fn default_horizon(mdp: &Mdp) -> usize {
    10 * mdp.num_states()
}

enum Stepper<'a> {
    Chain(MarkovChain),
    Switch(&'a Mdp, &'a SwitchPolicy),
}

impl Stepper<'_> {
    fn path(&self, start: usize, horizon: usize, rng: &mut ChaCha8Rng) -> PathSample {
        let mut states = vec![start];
        let mut switched = false;
        let mut s = start;
        for _ in 0..horizon {
            let next = match self {
                Stepper::Chain(chain) => {
                    if chain.is_absorbing(s) {
                        return PathSample { states, truncated: false };
                    }
                    let row = chain.row(s);
                    let probs: Vec<f64> = row.iter().map(|&(_, p)| p).collect();
                    row[sample(&probs, rng.gen())].0
                }
                Stepper::Switch(mdp, policy) => {
                    if mdp.is_absorbing(s) || switched {
                        return PathSample { states, truncated: false };
                    }
                    let a = policy.act(s, &mut switched, rng);
                    if switched {
                        // committed to an unobserved end component
                        return PathSample { states, truncated: false };
                    }
                    let succ = &mdp.actions(s)[a].successors;
                    let probs: Vec<f64> = succ.iter().map(|&(_, p)| p).collect();
                    succ[sample(&probs, rng.gen())].0
                }
            };
            states.push(next);
            s = next;
        }
        let absorbed = match self {
            Stepper::Chain(chain) => chain.is_absorbing(s),
            Stepper::Switch(mdp, _) => mdp.is_absorbing(s),
        };
        PathSample {
            states,
            truncated: !absorbed,
        }
    }
}

/// Samples `n` paths of at most `horizon` transitions. Path `i` uses its own
/// generator seeded with `seed` on stream `i`, so the result does not depend
/// on thread scheduling. Switch-policy paths end once the agent switches.
pub fn simulate_paths(mdp: &Mdp, agent: &Agent, n: usize, horizon: usize, seed: u64) -> Result<Vec<PathSample>, ChainError> {
    let stepper = match agent {
        Agent::Stationary(p) => Stepper::Chain(induce_chain(mdp, p)?),
        Agent::Switch { policy, .. } => Stepper::Switch(mdp, policy),
    };
    let one = |i: usize| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(i as u64);
        stepper.path(mdp.initial(), horizon, &mut rng)
    };
    #[cfg(feature = "parallel")]
    let paths = (0..n).into_par_iter().map(one).collect();
    #[cfg(not(feature = "parallel"))]
    let paths = (0..n).map(one).collect();
    Ok(paths)
}

/// Estimate and bound for one observed state.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateEstimate {
    pub state: String,
    /// number of observed departures
    pub count: u64,
    /// successor names, in the order of `estimate` and `truth`
    pub successors: Vec<String>,
    /// empirical successor frequencies; uniform when `count == 0`
    pub estimate: Vec<f64>,
    pub no_sample: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub truth: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mse: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bound: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimationReport {
    pub paths: usize,
    pub truncated: usize,
    pub states: Vec<StateEstimate>,
    pub total_mse: f64,
    pub weighted_mse: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bounds: Option<CramerRao>,
    pub note: &'static str,
}

const ESTIMATOR_NOTE: &str = "sample means per observed state; the estimator does not use the known transition probabilities of the other states, and on correlated path data it need not respect the Cramer-Rao bounds";

/// Counts departures from every observed state and forms the empirical
/// successor frequencies.
pub fn estimate(paths: &[PathSample], mdp: &Mdp) -> EstimationReport {
    let observed = mdp.observed_states();
    let mut slot = vec![usize::MAX; mdp.num_states()];
    for (i, &w) in observed.iter().enumerate() {
        slot[w] = i;
    }
    let succ: Vec<Vec<usize>> = observed.iter().map(|&w| mdp.succ(w)).collect();
    let mut counts: Vec<Vec<u64>> = succ.iter().map(|s| vec![0; s.len()]).collect();
    for path in paths {
        for pair in path.states.windows(2) {
            let i = slot[pair[0]];
            if i == usize::MAX {
                continue;
            }
            if let Ok(j) = succ[i].binary_search(&pair[1]) {
                counts[i][j] += 1;
            }
        }
    }
    let states = observed
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let total: u64 = counts[i].iter().sum();
            let k = succ[i].len();
            let estimate = if total == 0 {
                vec![1.0 / k as f64; k]
            } else {
                counts[i].iter().map(|&c| c as f64 / total as f64).collect()
            };
            StateEstimate {
                state: mdp.name(w).to_string(),
                count: total,
                successors: succ[i].iter().map(|&q| mdp.name(q).to_string()).collect(),
                estimate,
                no_sample: total == 0,
                truth: None,
                mse: None,
                bound: None,
            }
        })
        .collect();
    EstimationReport {
        paths: paths.len(),
        truncated: paths.iter().filter(|p| p.truncated).count(),
        states,
        total_mse: 0.0,
        weighted_mse: 0.0,
        bounds: None,
        note: ESTIMATOR_NOTE,
    }
}

/// Treatment of observed states without samples in the totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoSample {
    /// use the squared error of the uniform estimate
    #[default]
    Uniform,
    /// leave the state out of both totals
    Exclude,
}

/// Stationary view of an agent: the policy itself, or the stationary part of
/// a switch policy on the extended model.
fn stationary_view<'a>(mdp: &'a Mdp, agent: &'a Agent) -> (&'a Mdp, &'a StationaryPolicy) {
    match agent {
        Agent::Stationary(p) => (mdp, p),
        Agent::Switch { policy, modified } => (&modified.mdp, &policy.base),
    }
}

/// Fills in true rows, squared errors and the plain and count-weighted
/// totals. Observed states have the same index in the extended model of a
/// switch policy.
pub fn mse_report(
    mut report: EstimationReport,
    mdp: &Mdp,
    agent: &Agent,
    no_sample: NoSample,
) -> Result<EstimationReport, ChainError> {
    let (model, policy) = stationary_view(mdp, agent);
    let chain = induce_chain(model, policy)?;
    let mut total = 0.0;
    let mut weighted = 0.0;
    let all: u64 = report.states.iter().map(|e| e.count).sum();
    for e in report.states.iter_mut() {
        let w = mdp.state_index(&e.state).expect("report matches the model");
        let truth: Vec<f64> = mdp.succ(w).iter().map(|&q| chain.prob(w, q)).collect();
        let mse: f64 = e.estimate.iter().zip(&truth).map(|(a, b)| (a - b) * (a - b)).sum();
        e.truth = Some(truth);
        e.mse = Some(mse);
        if e.no_sample && no_sample == NoSample::Exclude {
            continue;
        }
        total += mse;
        if all > 0 {
            weighted += e.count as f64 / all as f64 * mse;
        }
    }
    report.total_mse = total;
    report.weighted_mse = weighted;
    Ok(report)
}

/// Per-state lower bound `Pr(Reach[w])^2 / (x_w iota_w)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StateBound {
    pub state: String,
    pub reach_prob: f64,
    pub residence: f64,
    pub information: ExtReal,
    pub bound: f64,
    /// the state is never visited and its bound is zero
    pub unvisited: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CramerRao {
    pub states: Vec<StateBound>,
    /// sum of the per-state bounds
    pub sum: f64,
    /// `min_w Pr(Reach[w])^2 |W|^2 / E[iota]`, never larger than `sum`
    pub corollary: f64,
    pub expected_information: ExtReal,
}

#[derive(Debug, thiserror::Error)]
pub enum BoundError {
    #[error("observed state {0} is visited infinitely often; the expected total information is infinite")]
    InfiniteInformation(String),
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// Cramér-Rao bounds of a stationary policy.
pub fn cramer_rao_bounds(mdp: &Mdp, policy: &StationaryPolicy) -> Result<CramerRao, BoundError> {
    let chain = induce_chain(mdp, policy)?;
    let x = residence_times_auto(&chain)?;
    let observed = mdp.observed_states();
    let mut states = Vec::with_capacity(observed.len());
    let mut expected = ExtReal::ZERO;
    for &w in &observed {
        let xw = x[w];
        if xw.is_infinite() {
            return Err(BoundError::InfiniteInformation(mdp.name(w).to_string()));
        }
        let xw = xw.as_f64();
        let row: Vec<f64> = chain.row(w).iter().map(|&(_, p)| p).collect();
        let iota = mass_value(&row);
        let reach = if xw > 0.0 {
            reach_probabilities(&chain, &[w])?[chain.initial()]
        } else {
            0.0
        };
        let denom = iota.scale_or_zero(xw);
        let bound = match denom {
            ExtReal::Infinite => 0.0,
            ExtReal::Finite(d) if d > 0.0 => reach * reach / d,
            ExtReal::Finite(_) => 0.0,
        };
        expected = expected + denom;
        states.push(StateBound {
            state: mdp.name(w).to_string(),
            reach_prob: reach,
            residence: xw,
            information: iota,
            bound,
            unvisited: xw == 0.0,
        });
    }
    let sum = states.iter().map(|b| b.bound).sum();
    let min_reach = states.iter().map(|b| b.reach_prob).fold(f64::INFINITY, f64::min);
    let k = observed.len() as f64;
    let corollary = match expected {
        ExtReal::Finite(e) if e > 0.0 && !states.is_empty() => min_reach * min_reach * k * k / e,
        _ => 0.0,
    };
    Ok(CramerRao {
        states,
        sum,
        corollary,
        expected_information: expected,
    })
}

/// Bounds for any agent, using the stationary part of switch policies on the
/// extended model.
pub fn agent_bounds(mdp: &Mdp, agent: &Agent) -> Result<CramerRao, BoundError> {
    let (model, policy) = stationary_view(mdp, agent);
    let mut out = cramer_rao_bounds(model, policy)?;
    out.states.retain(|b| mdp.state_index(&b.state).is_some());
    Ok(out)
}
