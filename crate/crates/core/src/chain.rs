//! Markov chains induced by stationary policies: recurrence classification,
//! reachability probabilities and expected residence times.

use thiserror::Error;

use crate::ext::ExtReal;
use crate::graph::{backward_reachable, forward_reachable, strongly_connected_components};
use crate::linalg::{solve_sparse, CsrMatrix, LinalgError};
use crate::mdp::{Mdp, StationaryPolicy, STOCHASTIC_TOL};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChainError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("state {0} is recurrent but was declared transient")]
    RecurrenceMisclassification(usize),
    #[error("reachable transient state {0} is missing from the transient set")]
    IncompleteTransientSet(usize),
    #[error("target set is empty")]
    EmptyTargets,
    #[error("linear solve failed: {0}")]
    Linalg(#[from] LinalgError),
}

/// Sparse row-stochastic transition matrix over the states of an MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct MarkovChain {
    rows: Vec<Vec<(usize, f64)>>,
    initial: usize,
}

impl MarkovChain {
    pub fn from_rows(rows: Vec<Vec<(usize, f64)>>, initial: usize) -> Self {
        MarkovChain { rows, initial }
    }

    pub fn num_states(&self) -> usize {
        self.rows.len()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn row(&self, s: usize) -> &[(usize, f64)] {
        &self.rows[s]
    }

    pub fn prob(&self, s: usize, q: usize) -> f64 {
        self.rows[s]
            .binary_search_by_key(&q, |&(t, _)| t)
            .map(|i| self.rows[s][i].1)
            .unwrap_or(0.0)
    }

    /// Support graph of the chain.
    pub fn adjacency(&self) -> Vec<Vec<usize>> {
        self.rows
            .iter()
            .map(|r| r.iter().map(|&(q, _)| q).collect())
            .collect()
    }

    /// True when the state's only successor is itself.
    pub fn is_absorbing(&self, s: usize) -> bool {
        self.rows[s].len() == 1 && self.rows[s][0].0 == s
    }
}

/// Mixes the action rows of `mdp` with the policy probabilities.
pub fn induce_chain(mdp: &Mdp, policy: &StationaryPolicy) -> Result<MarkovChain, ChainError> {
    if policy.rows().len() != mdp.num_states() {
        return Err(ChainError::InvalidPolicy(format!(
            "policy covers {} states, MDP has {}",
            policy.rows().len(),
            mdp.num_states()
        )));
    }
    let mut rows = Vec::with_capacity(mdp.num_states());
    for s in mdp.states() {
        let probs = policy.row(s);
        if probs.len() != mdp.actions(s).len() {
            return Err(ChainError::InvalidPolicy(format!(
                "policy row for state {} has {} entries for {} enabled actions",
                mdp.name(s),
                probs.len(),
                mdp.actions(s).len()
            )));
        }
        let mut dense: Vec<(usize, f64)> = Vec::new();
        for (a, &pi) in mdp.actions(s).iter().zip(probs) {
            if pi == 0.0 {
                continue;
            }
            for &(q, p) in &a.successors {
                dense.push((q, pi * p));
            }
        }
        dense.sort_by_key(|&(q, _)| q);
        let mut row: Vec<(usize, f64)> = Vec::with_capacity(dense.len());
        for (q, v) in dense {
            match row.last_mut() {
                Some((last, acc)) if *last == q => *acc += v,
                _ => row.push((q, v)),
            }
        }
        row.retain(|&(_, v)| v > 0.0);
        rows.push(row);
    }
    Ok(MarkovChain {
        rows,
        initial: mdp.initial(),
    })
}

/// Graph-theoretic classification of the states of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainClasses {
    /// reachable from the initial state
    pub reachable: Vec<bool>,
    /// member of a bottom strongly connected component
    pub recurrent: Vec<bool>,
}

impl ChainClasses {
    /// Reachable states that are not recurrent.
    pub fn transient_reachable(&self) -> Vec<bool> {
        self.reachable
            .iter()
            .zip(&self.recurrent)
            .map(|(&r, &rec)| r && !rec)
            .collect()
    }
}

pub fn classify(chain: &MarkovChain) -> ChainClasses {
    let adj = chain.adjacency();
    let reachable = forward_reachable(&adj, &[chain.initial]);
    let mut recurrent = vec![false; chain.num_states()];
    let comps = strongly_connected_components(&adj);
    let mut comp_of = vec![0; chain.num_states()];
    for (c, comp) in comps.iter().enumerate() {
        for &v in comp {
            comp_of[v] = c;
        }
    }
    for (c, comp) in comps.iter().enumerate() {
        let closed = comp
            .iter()
            .all(|&v| adj[v].iter().all(|&w| comp_of[w] == c));
        if closed {
            for &v in comp {
                recurrent[v] = true;
            }
        }
    }
    ChainClasses {
        reachable,
        recurrent,
    }
}

/// Probability of eventually reaching `targets` from every state.
pub fn reach_probabilities(chain: &MarkovChain, targets: &[usize]) -> Result<Vec<f64>, ChainError> {
    if targets.is_empty() {
        return Err(ChainError::EmptyTargets);
    }
    let n = chain.num_states();
    let mut is_target = vec![false; n];
    for &t in targets {
        is_target[t] = true;
    }
    let can_reach = backward_reachable(&chain.adjacency(), &is_target);
    let maybe: Vec<usize> = (0..n).filter(|&s| can_reach[s] && !is_target[s]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &s) in maybe.iter().enumerate() {
        local[s] = i;
    }
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; maybe.len()];
    for (i, &s) in maybe.iter().enumerate() {
        triplets.push((i, i, 1.0));
        for &(q, p) in chain.row(s) {
            if is_target[q] {
                rhs[i] += p;
            } else if local[q] != usize::MAX {
                triplets.push((i, local[q], -p));
            }
        }
    }
    let mut result: Vec<f64> = (0..n).map(|s| if is_target[s] { 1.0 } else { 0.0 }).collect();
    if !maybe.is_empty() {
        let a = CsrMatrix::from_triplets(maybe.len(), maybe.len(), triplets);
        let v = solve_sparse(&a, &rhs)?;
        for (i, &s) in maybe.iter().enumerate() {
            result[s] = v[i].clamp(0.0, 1.0);
        }
    }
    Ok(result)
}

/// Probability of eventually reaching `targets` from `from`.
pub fn reach_probability(chain: &MarkovChain, targets: &[usize], from: usize) -> Result<f64, ChainError> {
    Ok(reach_probabilities(chain, targets)?[from])
}

/// Expected number of visits to each state, starting from the initial state.
///
/// States in `transient` are solved from `(I - Q^T) x = e_init`; reachable
/// recurrent states map to `+inf` and unreachable states to 0.
pub fn residence_times(chain: &MarkovChain, transient: &[bool]) -> Result<Vec<ExtReal>, ChainError> {
    let n = chain.num_states();
    let classes = classify(chain);
    for s in 0..n {
        if transient[s] && classes.reachable[s] && classes.recurrent[s] {
            return Err(ChainError::RecurrenceMisclassification(s));
        }
        if !transient[s] && classes.reachable[s] && !classes.recurrent[s] {
            return Err(ChainError::IncompleteTransientSet(s));
        }
    }
    let set: Vec<usize> = (0..n).filter(|&s| transient[s]).collect();
    let mut local = vec![usize::MAX; n];
    for (i, &s) in set.iter().enumerate() {
        local[s] = i;
    }
    let mut out: Vec<ExtReal> = (0..n)
        .map(|s| {
            if classes.reachable[s] && classes.recurrent[s] {
                ExtReal::Infinite
            } else {
                ExtReal::ZERO
            }
        })
        .collect();
    if set.is_empty() || local[chain.initial] == usize::MAX {
        return Ok(out);
    }
    let mut triplets = Vec::new();
    for (i, &s) in set.iter().enumerate() {
        triplets.push((i, i, 1.0));
        for &(q, p) in chain.row(s) {
            if local[q] != usize::MAX {
                // row q of (I - Q^T) receives -P(s,q) in column s
                triplets.push((local[q], i, -p));
            }
        }
    }
    let mut rhs = vec![0.0; set.len()];
    rhs[local[chain.initial]] = 1.0;
    let a = CsrMatrix::from_triplets(set.len(), set.len(), triplets);
    let x = solve_sparse(&a, &rhs)?;
    for (i, &s) in set.iter().enumerate() {
        out[s] = ExtReal::finite(x[i].max(0.0));
    }
    Ok(out)
}

/// Residence times with the transient set taken from [`classify`].
pub fn residence_times_auto(chain: &MarkovChain) -> Result<Vec<ExtReal>, ChainError> {
    let classes = classify(chain);
    residence_times(chain, &classes.transient_reachable())
}

/// Checks that each row sums to one within [`STOCHASTIC_TOL`].
pub fn is_row_stochastic(chain: &MarkovChain) -> bool {
    chain
        .rows
        .iter()
        .all(|r| (r.iter().map(|&(_, p)| p).sum::<f64>() - 1.0).abs() <= STOCHASTIC_TOL)
}
