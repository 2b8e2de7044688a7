//! Switch mode: the MDP is extended with a copy of every end-component state
//! in which only actions staying among the copies remain. A `switch` action
//! moves from an original end-component state to its copy. Policies of the
//! extended model map back to the input as follows. The agent follows the
//! stationary part until it samples `switch`, and from then on only uses
//! actions that stay in the end components.

use std::collections::BTreeMap;

use rand::Rng;

use super::policy::{extract_policy, stay_policy};
use super::program::{admissible_fallback, solve_program6_with};
use super::reach::feasibility_check;
use super::{Mode, SolverOptions, Status, Synthesis, SynthesisError};
use crate::components::{is_union_uec, umec_states};
use crate::ext::ExtReal;
use crate::mdp::{Mdp, MdpBuilder, StationaryPolicy};

pub const SWITCH_ACTION: &str = "switch";

/// The extended MDP and its correspondence with the input.
#[derive(Debug, Clone)]
pub struct ModifiedMdp {
    pub mdp: Mdp,
    /// end-component states of the input
    pub c_end: Vec<bool>,
    /// for every extended state, the input state it stands for
    pub duplicate_of: Vec<usize>,
    /// copy of each input end-component state
    pub dup: Vec<Option<usize>>,
    /// index of the `switch` action at each input end-component state
    pub switch_action: Vec<Option<usize>>,
}

fn copy_name(mdp: &Mdp, name: &str) -> String {
    let mut candidate = format!("{name}#bar");
    while mdp.state_index(&candidate).is_some() {
        candidate.push('_');
    }
    candidate
}

/// Builds the extended MDP for end-component states `c_end`. Input states keep
/// their indices; copies are appended in state order.
pub fn build_modified_mdp(mdp: &Mdp, c_end: &[bool]) -> Result<ModifiedMdp, SynthesisError> {
    let n = mdp.num_states();
    let mut b = MdpBuilder::new();
    for s in mdp.states() {
        b.add_state(mdp.name(s))?;
    }
    let mut dup = vec![None; n];
    let mut duplicate_of: Vec<usize> = (0..n).collect();
    let mut copy_names = vec![String::new(); n];
    for s in mdp.states().filter(|&s| c_end[s]) {
        copy_names[s] = copy_name(mdp, mdp.name(s));
        dup[s] = Some(b.add_state(&copy_names[s])?);
        duplicate_of.push(s);
    }
    let mut switch_action = vec![None; n];
    for s in mdp.states() {
        for act in mdp.actions(s) {
            let to: Vec<(&str, f64)> = act.successors.iter().map(|&(q, p)| (mdp.name(q), p)).collect();
            b.add_action(mdp.name(s), &act.name, &to)?;
        }
        if c_end[s] {
            let mut name = SWITCH_ACTION.to_string();
            while mdp.action_index(s, &name).is_some() {
                name.push('_');
            }
            b.add_action(mdp.name(s), &name, &[(&copy_names[s], 1.0)])?;
            switch_action[s] = Some(mdp.actions(s).len());
        }
    }
    for s in mdp.states().filter(|&s| c_end[s]) {
        for act in mdp.actions(s) {
            if act.stays_in(|q| c_end[q]) {
                let to: Vec<(&str, f64)> = act
                    .successors
                    .iter()
                    .map(|&(q, p)| (copy_names[q].as_str(), p))
                    .collect();
                b.add_action(&copy_names[s], &act.name, &to)?;
            }
        }
    }
    b.set_initial(mdp.name(mdp.initial()))?;
    for w in mdp.observed_states() {
        b.observe(mdp.name(w))?;
    }
    for t in mdp.target_states() {
        match dup[t] {
            Some(_) => b.target(&copy_names[t])?,
            None => b.target(mdp.name(t))?,
        };
    }
    b.threshold(mdp.threshold());
    Ok(ModifiedMdp {
        mdp: b.build()?,
        c_end: c_end.to_vec(),
        duplicate_of,
        dup,
        switch_action,
    })
}

/// Policy of the switch mode on the input MDP.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchPolicy {
    /// end-component states of the input
    pub c_end: Vec<bool>,
    /// stationary policy of the extended model
    pub base: StationaryPolicy,
    /// index of the `switch` action of the extended model per input state
    pub switch_index: Vec<Option<usize>>,
    /// policy used after switching; stays in the end components
    pub stay: StationaryPolicy,
}

impl SwitchPolicy {
    /// Probability of switching at an end-component state.
    pub fn switch_prob(&self, s: usize) -> f64 {
        self.switch_index[s].map_or(0.0, |a| self.base.prob(s, a))
    }

    /// Picks an action at `state`, updating the `switched` flag. `draw` yields
    /// uniform samples from `[0, 1)`.
    pub fn act_with(&self, state: usize, switched: &mut bool, mut draw: impl FnMut() -> f64) -> usize {
        if !*switched {
            let a = sample(self.base.row(state), draw());
            if self.switch_index[state] != Some(a) {
                return a;
            }
            *switched = true;
        }
        sample(self.stay.row(state), draw())
    }

    pub fn act<R: Rng + ?Sized>(&self, state: usize, switched: &mut bool, rng: &mut R) -> usize {
        self.act_with(state, switched, || rng.gen::<f64>())
    }

    /// Action distributions at the observed states, which are never switch
    /// states.
    pub fn observed_rows(&self, mdp: &Mdp) -> BTreeMap<String, BTreeMap<String, f64>> {
        mdp.observed_states()
            .into_iter()
            .map(|w| {
                let row = mdp
                    .actions(w)
                    .iter()
                    .enumerate()
                    .map(|(a, act)| (act.name.clone(), self.base.prob(w, a)))
                    .collect();
                (mdp.name(w).to_string(), row)
            })
            .collect()
    }

    /// Switch probabilities by state name.
    pub fn switch_probs(&self, mdp: &Mdp) -> BTreeMap<String, f64> {
        mdp.states()
            .filter(|&s| self.c_end[s])
            .map(|s| (mdp.name(s).to_string(), self.switch_prob(s)))
            .collect()
    }
}

/// Index sampled from a discrete distribution with one uniform variate.
pub(crate) fn sample(row: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    let mut last = 0;
    for (i, &p) in row.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        acc += p;
        last = i;
        if u < acc {
            return i;
        }
    }
    last
}

/// End-component states used by the switch mode: unobserved maximal end
/// components and targets.
pub(crate) fn switch_c_end(mdp: &Mdp) -> Vec<bool> {
    let umec = umec_states(mdp);
    mdp.states().map(|s| umec[s] || mdp.is_target(s)).collect()
}

/// Assembles a [`SwitchPolicy`] from a stationary policy of the extended
/// model.
pub(crate) fn assemble(mdp: &Mdp, modified: &ModifiedMdp, base: StationaryPolicy) -> Result<SwitchPolicy, SynthesisError> {
    let list: Vec<usize> = mdp.states().filter(|&s| modified.c_end[s]).collect();
    let union = is_union_uec(mdp, &list).ok_or_else(|| {
        SynthesisError::InvalidUnion(list.iter().map(|&s| mdp.name(s)).collect::<Vec<_>>().join(","))
    })?;
    Ok(SwitchPolicy {
        c_end: modified.c_end.clone(),
        base,
        switch_index: modified.switch_action.clone(),
        stay: stay_policy(mdp, &union)?,
    })
}

/// Switch-mode synthesis with default options; returns the policy and its
/// expected total information.
pub fn solve_switch(mdp: &Mdp) -> Result<(SwitchPolicy, ExtReal), SynthesisError> {
    let s = solve_switch_with(mdp, &SolverOptions::default())?;
    match s.switch {
        Some(p) => Ok((p, s.objective)),
        None => Err(SynthesisError::Numerical {
            reason: format!("no finite-information policy ({})", s.status),
            best: Box::new(s.solution.expect("result carries a solution")),
        }),
    }
}

pub(crate) fn solve_switch_with(mdp: &Mdp, opts: &SolverOptions) -> Result<Synthesis, SynthesisError> {
    let feasibility = feasibility_check(mdp);
    let c_end = switch_c_end(mdp);
    let modified = build_modified_mdp(mdp, &c_end)?;
    let mbar = &modified.mdp;
    let copies: Vec<bool> = (0..mbar.num_states()).map(|s| s >= mdp.num_states()).collect();
    let sol = solve_program6_with(mbar, &copies, opts)?;
    let c_end_list: Vec<usize> = mdp.states().filter(|&s| c_end[s]).collect();
    let mut out = Synthesis {
        mode: Mode::Switch,
        status: sol.status,
        objective: sol.objective,
        reach_prob: sol.reach_prob,
        feasibility,
        policy: None,
        switch: None,
        solution: None,
        c_end: c_end_list,
    };
    match sol.status {
        Status::Infeasible => {
            out.reach_prob = feasibility.max_reach;
        }
        Status::InfiniteInformation => {
            out.reach_prob = feasibility.max_reach;
            out.policy = Some(admissible_fallback(mdp));
        }
        Status::Optimal => {
            let copy_list: Vec<usize> = (mdp.num_states()..mbar.num_states()).collect();
            let union = is_union_uec(mbar, &copy_list)
                .ok_or_else(|| SynthesisError::InvalidUnion("copies".into()))?;
            let stay_bar = stay_policy(mbar, &union)?;
            let base = extract_policy(mbar, &sol, &stay_bar);
            out.switch = Some(assemble(mdp, &modified, base)?);
        }
    }
    out.solution = Some(sol);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn copies_keep_only_inner_actions() {
        let m = fixtures::fig5a();
        let c_end = switch_c_end(&m);
        let names: Vec<&str> = m.states().filter(|&s| c_end[s]).map(|s| m.name(s)).collect();
        assert_eq!(names, vec!["s1", "s2", "s4", "s5"]);
        let mm = build_modified_mdp(&m, &c_end).unwrap();
        assert_eq!(mm.mdp.num_states(), 10);
        let s1 = m.state_index("s1").unwrap();
        let s1bar = mm.dup[s1].unwrap();
        assert_eq!(mm.mdp.name(s1bar), "s1#bar");
        // alpha to s2 stays, beta to s3 leaves
        assert_eq!(mm.mdp.actions(s1bar).len(), 1);
        assert_eq!(mm.mdp.actions(s1bar)[0].name, "alpha");
        let sw = mm.switch_action[s1].unwrap();
        assert_eq!(mm.mdp.actions(s1)[sw].name, SWITCH_ACTION);
        assert_eq!(mm.mdp.actions(s1)[sw].successors, vec![(s1bar, 1.0)]);
        let targets: Vec<&str> = mm.mdp.target_states().iter().map(|&t| mm.mdp.name(t)).collect();
        assert_eq!(targets, vec!["s4#bar", "s5#bar"]);
        assert!(mm.mdp.target_states().iter().all(|&t| mm.mdp.is_absorbing(t)));
    }

    #[test]
    fn sampling_inverts_cumulative() {
        assert_eq!(sample(&[0.25, 0.75], 0.1), 0);
        assert_eq!(sample(&[0.25, 0.75], 0.3), 1);
        assert_eq!(sample(&[0.0, 1.0], 0.0), 1);
        assert_eq!(sample(&[0.5, 0.5, 0.0], 0.999_999_999), 1);
    }
}
