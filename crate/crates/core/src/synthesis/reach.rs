//! Maximum reachability probabilities by value iteration with exact
//! qualitative preprocessing, and proper optimal memoryless choices.

use std::collections::VecDeque;

use serde::Serialize;

use crate::linalg::{solve_sparse, CsrMatrix};
use crate::mdp::Mdp;

/// Residual at which value iteration stops.
const VI_TOL: f64 = 1e-12;
const VI_MAX_SWEEPS: usize = 200_000;
/// Slack under which an action counts as value-optimal.
pub(crate) const OPTIMAL_SLACK: f64 = 1e-9;

/// Result of [`max_reach`]: values and a proper memoryless choice per state.
#[derive(Debug, Clone)]
pub(crate) struct MaxReach {
    pub values: Vec<f64>,
    pub choice: Vec<Option<usize>>,
}

/// Outcome of [`feasibility_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Feasibility {
    pub max_reach: f64,
    pub threshold: f64,
    pub feasible: bool,
}

/// Tolerance applied when comparing the maximum reach probability with the
/// threshold.
pub const FEASIBILITY_TOL: f64 = 1e-9;

/// Maximum probability of reaching the targets, compared with the threshold.
pub fn feasibility_check(mdp: &Mdp) -> Feasibility {
    let allowed: Vec<Vec<bool>> = mdp.states().map(|s| vec![true; mdp.actions(s).len()]).collect();
    let stop = mdp.target_mask().to_vec();
    let r = max_reach(mdp, &allowed, &stop, mdp.target_mask());
    let max_reach = r.values[mdp.initial()];
    Feasibility {
        max_reach,
        threshold: mdp.threshold(),
        feasible: max_reach >= mdp.threshold() - FEASIBILITY_TOL,
    }
}

fn successors_ok(mdp: &Mdp, s: usize, a: usize, ok: impl Fn(usize) -> bool) -> bool {
    mdp.actions(s)[a].successors.iter().all(|&(q, _)| ok(q))
}

/// Maximum probability of reaching `goal` where `stop` states are terminal
/// (value 1 on goal, 0 otherwise) and only `allowed` actions may be used.
pub(crate) fn max_reach(mdp: &Mdp, allowed: &[Vec<bool>], stop: &[bool], goal: &[bool]) -> MaxReach {
    let n = mdp.num_states();
    let is_goal = |s: usize| stop[s] && goal[s];
    let edges = |s: usize| {
        mdp.actions(s)
            .iter()
            .enumerate()
            .filter(move |&(a, _)| !stop[s] && allowed[s][a])
    };

    // states with positive maximum
    let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
    for s in 0..n {
        for (_, act) in edges(s) {
            for &(q, _) in &act.successors {
                reverse[q].push(s);
            }
        }
    }
    let mut positive = vec![false; n];
    let mut queue: VecDeque<usize> = (0..n).filter(|&s| is_goal(s)).collect();
    for &s in &queue {
        positive[s] = true;
    }
    while let Some(q) = queue.pop_front() {
        for &s in &reverse[q] {
            if !positive[s] {
                positive[s] = true;
                queue.push_back(s);
            }
        }
    }

    // states with maximum one: greatest fixpoint of the attractor iteration
    let mut one: Vec<bool> = positive.clone();
    loop {
        let mut reach = vec![false; n];
        for s in 0..n {
            reach[s] = is_goal(s);
        }
        loop {
            let mut grew = false;
            for s in 0..n {
                if reach[s] || !one[s] || stop[s] {
                    continue;
                }
                let good = edges(s).any(|(a, act)| {
                    successors_ok(mdp, s, a, |q| one[q])
                        && act.successors.iter().any(|&(q, _)| reach[q])
                });
                if good {
                    reach[s] = true;
                    grew = true;
                }
            }
            if !grew {
                break;
            }
        }
        if reach == one {
            break;
        }
        one = reach;
    }

    let mut values: Vec<f64> = (0..n)
        .map(|s| if one[s] { 1.0 } else { 0.0 })
        .collect();
    let unknown: Vec<usize> = (0..n).filter(|&s| positive[s] && !one[s]).collect();
    for _ in 0..VI_MAX_SWEEPS {
        let mut delta: f64 = 0.0;
        for &s in &unknown {
            let best = edges(s)
                .map(|(_, act)| act.successors.iter().map(|&(q, p)| p * values[q]).sum::<f64>())
                .fold(0.0, f64::max);
            delta = delta.max((best - values[s]).abs());
            values[s] = best;
        }
        if delta < VI_TOL {
            break;
        }
    }

    let choice = proper_choice(mdp, allowed, stop, goal, &values);
    // exact evaluation of the chosen policy; it attains the value up to the
    // iteration residual and never overestimates it
    let exact = evaluate_choice(mdp, &choice, &unknown, &values);
    for &s in &unknown {
        values[s] = values[s].max(exact[s]).min(1.0);
    }
    MaxReach { values, choice }
}

/// Picks value-optimal actions that make progress towards the goal where the
/// value is positive, and towards the stop set elsewhere.
fn proper_choice(mdp: &Mdp, allowed: &[Vec<bool>], stop: &[bool], goal: &[bool], values: &[f64]) -> Vec<Option<usize>> {
    let n = mdp.num_states();
    let q_value = |s: usize, a: usize| -> f64 {
        mdp.actions(s)[a]
            .successors
            .iter()
            .map(|&(q, p)| p * values[q])
            .sum()
    };
    let optimal = |s: usize, a: usize| allowed[s][a] && q_value(s, a) >= values[s] - OPTIMAL_SLACK;
    let mut choice: Vec<Option<usize>> = vec![None; n];
    let mut ranked = vec![false; n];
    for s in 0..n {
        ranked[s] = stop[s] && goal[s];
    }
    // backward sweeps in rounds give a ranking by distance
    let mut frontier = true;
    while frontier {
        frontier = false;
        let snapshot = ranked.clone();
        for s in 0..n {
            if ranked[s] || stop[s] || values[s] <= 0.0 {
                continue;
            }
            let pick = (0..mdp.actions(s).len()).find(|&a| {
                optimal(s, a) && mdp.actions(s)[a].successors.iter().any(|&(q, _)| snapshot[q])
            });
            if let Some(a) = pick {
                choice[s] = Some(a);
                ranked[s] = true;
                frontier = true;
            }
        }
    }
    let mut toward_stop: Vec<bool> = (0..n).map(|s| stop[s] || ranked[s]).collect();
    frontier = true;
    while frontier {
        frontier = false;
        let snapshot = toward_stop.clone();
        for s in 0..n {
            if toward_stop[s] {
                continue;
            }
            let pick = (0..mdp.actions(s).len())
                .filter(|&a| allowed[s][a])
                .find(|&a| mdp.actions(s)[a].successors.iter().any(|&(q, _)| snapshot[q]));
            if let Some(a) = pick {
                choice[s] = Some(a);
                toward_stop[s] = true;
                frontier = true;
            }
        }
    }
    for s in 0..n {
        if choice[s].is_none() && !stop[s] {
            choice[s] = (0..mdp.actions(s).len()).find(|&a| allowed[s][a]);
        }
    }
    choice
}

/// Reach probabilities of the deterministic choice on the `states` subset;
/// other states keep their `known` values.
fn evaluate_choice(mdp: &Mdp, choice: &[Option<usize>], states: &[usize], known: &[f64]) -> Vec<f64> {
    let n = mdp.num_states();
    let mut out: Vec<f64> = known.to_vec();
    if states.is_empty() {
        return out;
    }
    let mut local = vec![usize::MAX; n];
    for (i, &s) in states.iter().enumerate() {
        local[s] = i;
        out[s] = 0.0;
    }
    // restrict to states that reach the goal under the choice; the rest are 0
    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; states.len()];
    for (i, &s) in states.iter().enumerate() {
        triplets.push((i, i, 1.0));
        if let Some(a) = choice[s] {
            for &(q, p) in &mdp.actions(s)[a].successors {
                if local[q] != usize::MAX {
                    triplets.push((i, local[q], -p));
                } else {
                    rhs[i] += p * out[q];
                }
            }
        }
    }
    // states trapped in a cycle of the choice would make the system singular;
    // fall back to zero in that case
    let adjacency: Vec<Vec<usize>> = states
        .iter()
        .map(|&s| match choice[s] {
            Some(a) => mdp.actions(s)[a]
                .successors
                .iter()
                .filter(|&&(q, _)| local[q] != usize::MAX)
                .map(|&(q, _)| local[q])
                .collect(),
            None => Vec::new(),
        })
        .collect();
    let exits: Vec<bool> = states
        .iter()
        .map(|&s| match choice[s] {
            Some(a) => mdp.actions(s)[a].successors.iter().any(|&(q, _)| local[q] == usize::MAX),
            None => true,
        })
        .collect();
    let can_exit = crate::graph::backward_reachable(&adjacency, &exits);
    if can_exit.iter().all(|&b| b) {
        let a = CsrMatrix::from_triplets(states.len(), states.len(), triplets);
        if let Ok(v) = solve_sparse(&a, &rhs) {
            for (i, &s) in states.iter().enumerate() {
                out[s] = v[i].clamp(0.0, 1.0);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn feasibility_examples() {
        let m = fixtures::example1().with_threshold(1.0);
        let f = feasibility_check(&m);
        assert!(f.feasible);
        assert_eq!(f.max_reach, 1.0);
        assert!(feasibility_check(&fixtures::fig5a()).feasible);
        assert!(feasibility_check(&fixtures::fig4a()).feasible);
    }

    #[test]
    fn disconnected_target_is_infeasible() {
        let m = fixtures::fig2().with_threshold(1.0);
        assert!(feasibility_check(&m).feasible);
        let s1 = m.state_index("s1").unwrap();
        let beta = m.action_index(s1, "beta").unwrap();
        let cut = m.with_actions(s1, vec![m.actions(s1)[beta].clone()]);
        let f = feasibility_check(&cut);
        assert!(!f.feasible);
        assert_eq!(f.max_reach, 0.0);
    }

    #[test]
    fn fractional_maximum() {
        // s0 -a-> {s1: 0.3, s2: 0.7}, s1 target, s2 sink
        let m = {
            let mut b = crate::mdp::MdpBuilder::new();
            b.states(&["s0", "s1", "s2"]).unwrap();
            b.add_action("s0", "a", &[("s1", 0.3), ("s2", 0.7)]).unwrap();
            b.add_action("s0", "b", &[("s0", 0.5), ("s1", 0.1), ("s2", 0.4)]).unwrap();
            b.add_action("s1", "stay", &[("s1", 1.0)]).unwrap();
            b.add_action("s2", "stay", &[("s2", 1.0)]).unwrap();
            b.set_initial("s0").unwrap();
            b.target("s1").unwrap();
            b.threshold(0.3);
            b.build().unwrap()
        };
        let f = feasibility_check(&m);
        assert!((f.max_reach - 0.3).abs() < 1e-12);
        assert!(f.feasible);
        let allowed: Vec<Vec<bool>> = m.states().map(|s| vec![true; m.actions(s).len()]).collect();
        let r = max_reach(&m, &allowed, m.target_mask(), m.target_mask());
        assert_eq!(r.choice[0], Some(0));
    }
}
