//! End-component analysis: maximal end components, unobserved maximal end
//! components, closedness and unions of unobserved end components.

use serde::Serialize;

use crate::graph::strongly_connected_components;
use crate::mdp::Mdp;

/// A sub-MDP `(C, D)`: `states` is sorted and `actions[i]` lists the action
/// indices of `states[i]` kept in `D`.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SubMdp {
    pub states: Vec<usize>,
    pub actions: Vec<Vec<usize>>,
}

impl SubMdp {
    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn contains(&self, s: usize) -> bool {
        self.states.binary_search(&s).is_ok()
    }

    /// Action indices kept at `s`, if `s` belongs to the sub-MDP.
    pub fn actions_of(&self, s: usize) -> Option<&[usize]> {
        self.states
            .binary_search(&s)
            .ok()
            .map(|i| self.actions[i].as_slice())
    }

    pub fn mask(&self, n: usize) -> Vec<bool> {
        let mut m = vec![false; n];
        for &s in &self.states {
            m[s] = true;
        }
        m
    }

    pub fn named(&self, mdp: &Mdp) -> NamedSubMdp {
        NamedSubMdp {
            states: self.states.iter().map(|&s| mdp.name(s).to_string()).collect(),
            actions: self
                .states
                .iter()
                .zip(&self.actions)
                .map(|(&s, acts)| {
                    (
                        mdp.name(s).to_string(),
                        acts.iter().map(|&a| mdp.actions(s)[a].name.clone()).collect(),
                    )
                })
                .collect(),
        }
    }
}

/// [`SubMdp`] with state and action names, for reports.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NamedSubMdp {
    pub states: Vec<String>,
    pub actions: std::collections::BTreeMap<String, Vec<String>>,
}

/// Maximal end components of the MDP restricted to states with
/// `allowed[s] == true`; actions leaving the allowed set are dropped first.
pub fn maximal_end_components_within(mdp: &Mdp, allowed: &[bool]) -> Vec<SubMdp> {
    let n = mdp.num_states();
    let mut alive = allowed.to_vec();
    // enabled[s][a]: action a of s is still a candidate
    let mut enabled: Vec<Vec<bool>> = mdp
        .states()
        .map(|s| {
            mdp.actions(s)
                .iter()
                .map(|a| alive[s] && a.stays_in(|q| alive[q]))
                .collect()
        })
        .collect();
    loop {
        let adjacency: Vec<Vec<usize>> = mdp
            .states()
            .map(|s| {
                let mut out: Vec<usize> = mdp
                    .actions(s)
                    .iter()
                    .zip(&enabled[s])
                    .filter(|(_, &on)| on)
                    .flat_map(|(a, _)| a.successors.iter().map(|&(q, _)| q))
                    .collect();
                out.sort_unstable();
                out.dedup();
                out
            })
            .collect();
        let comps = strongly_connected_components(&adjacency);
        let mut comp_of = vec![usize::MAX; n];
        for (c, comp) in comps.iter().enumerate() {
            for &v in comp {
                comp_of[v] = c;
            }
        }
        let mut changed = false;
        for s in mdp.states().filter(|&s| alive[s]) {
            for (a, on) in mdp.actions(s).iter().zip(enabled[s].iter_mut()) {
                if *on && !a.stays_in(|q| alive[q] && comp_of[q] == comp_of[s]) {
                    *on = false;
                    changed = true;
                }
            }
        }
        for s in mdp.states() {
            if alive[s] && !enabled[s].iter().any(|&on| on) {
                alive[s] = false;
                changed = true;
            }
        }
        if !changed {
            let mut out: Vec<SubMdp> = comps
                .into_iter()
                .filter(|c| alive[c[0]])
                .map(|states| {
                    let actions = states
                        .iter()
                        .map(|&s| (0..mdp.actions(s).len()).filter(|&a| enabled[s][a]).collect())
                        .collect();
                    SubMdp { states, actions }
                })
                .collect();
            out.sort_by_key(|m| m.states[0]);
            return out;
        }
        for s in mdp.states() {
            if !alive[s] {
                continue;
            }
            for (a, on) in mdp.actions(s).iter().zip(enabled[s].iter_mut()) {
                if *on && !a.stays_in(|q| alive[q]) {
                    *on = false;
                }
            }
        }
    }
}

/// Maximal end component decomposition of the whole MDP.
pub fn maximal_end_components(mdp: &Mdp) -> Vec<SubMdp> {
    maximal_end_components_within(mdp, &vec![true; mdp.num_states()])
}

/// Maximal end components avoiding every observed state.
pub fn unobserved_mecs(mdp: &Mdp) -> Vec<SubMdp> {
    let allowed: Vec<bool> = mdp.states().map(|s| !mdp.is_observed(s)).collect();
    maximal_end_components_within(mdp, &allowed)
}

/// Union of UMEC state sets as a mask.
pub fn umec_states(mdp: &Mdp) -> Vec<bool> {
    let mut mask = vec![false; mdp.num_states()];
    for m in unobserved_mecs(mdp) {
        for s in m.states {
            mask[s] = true;
        }
    }
    mask
}

/// True iff every enabled action of every state in `set` stays in `set`.
pub fn is_closed(mdp: &Mdp, set: &[usize]) -> bool {
    let mut mask = vec![false; mdp.num_states()];
    for &s in set {
        mask[s] = true;
    }
    set.iter()
        .all(|&s| mdp.actions(s).iter().all(|a| a.stays_in(|q| mask[q])))
}

pub fn check_assumption1(mdp: &Mdp) -> bool {
    unobserved_mecs(mdp).iter().all(|m| is_closed(mdp, &m.states))
}

/// Returns the union of unobserved end components covering exactly `set`,
/// with the largest action sets, or `None` when no such union exists.
pub fn is_union_uec(mdp: &Mdp, set: &[usize]) -> Option<SubMdp> {
    let mut mask = vec![false; mdp.num_states()];
    for &s in set {
        if mdp.is_observed(s) {
            return None;
        }
        mask[s] = true;
    }
    let mecs = maximal_end_components_within(mdp, &mask);
    let mut states = Vec::new();
    let mut per_state: Vec<(usize, Vec<usize>)> = Vec::new();
    for m in mecs {
        for (s, acts) in m.states.into_iter().zip(m.actions) {
            states.push(s);
            per_state.push((s, acts));
        }
    }
    let covered = states.len();
    let mut wanted: Vec<usize> = set.to_vec();
    wanted.sort_unstable();
    wanted.dedup();
    if covered != wanted.len() {
        return None;
    }
    per_state.sort_by_key(|&(s, _)| s);
    Some(SubMdp {
        states: per_state.iter().map(|(s, _)| *s).collect(),
        actions: per_state.into_iter().map(|(_, a)| a).collect(),
    })
}

/// End-component summary printed by the `analyze` command.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EndComponentReport {
    pub mecs: Vec<NamedSubMdp>,
    pub umecs: Vec<NamedSubMdp>,
    pub c_end: Vec<String>,
    pub closed: Vec<bool>,
    pub assumption1_holds: bool,
}

pub fn end_component_report(mdp: &Mdp) -> EndComponentReport {
    let umecs = unobserved_mecs(mdp);
    let mut c_end: Vec<usize> = umecs.iter().flat_map(|m| m.states.iter().copied()).collect();
    c_end.sort_unstable();
    let closed: Vec<bool> = umecs.iter().map(|m| is_closed(mdp, &m.states)).collect();
    EndComponentReport {
        mecs: maximal_end_components(mdp).iter().map(|m| m.named(mdp)).collect(),
        umecs: umecs.iter().map(|m| m.named(mdp)).collect(),
        c_end: c_end.iter().map(|&s| mdp.name(s).to_string()).collect(),
        assumption1_holds: closed.iter().all(|&c| c),
        closed,
    }
}
