//! Markov decision processes, stationary policies and their JSON formats.

use std::collections::{BTreeMap, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::worlds::GridLayout;

/// Row sums within this distance of 1 are renormalized on load.
pub const RENORMALIZE_TOL: f64 = 1e-6;
/// Tolerance for the stochasticity invariants.
pub const STOCHASTIC_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("malformed MDP JSON: {0}")]
    Json(#[from] serde_json::Error),
    #[error("unknown state {0:?}")]
    UnknownState(String),
    #[error("duplicate state {0:?}")]
    DuplicateState(String),
    #[error("duplicate transition entry for state {state:?}, action {action:?}")]
    DuplicateAction { state: String, action: String },
    #[error("MDP has no states")]
    Empty,
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
}

/// One enabled action of a state with its sparse successor distribution.
#[derive(Debug, Clone, PartialEq)]
pub struct Action {
    pub name: String,
    /// `(successor, probability)` sorted by successor; zero entries omitted.
    pub successors: Vec<(usize, f64)>,
}

impl Action {
    pub fn new(name: impl Into<String>, mut successors: Vec<(usize, f64)>) -> Self {
        successors.retain(|&(_, p)| p != 0.0);
        successors.sort_by_key(|&(q, _)| q);
        Action {
            name: name.into(),
            successors,
        }
    }

    pub fn prob_to(&self, q: usize) -> f64 {
        self.successors
            .binary_search_by_key(&q, |&(s, _)| s)
            .map(|i| self.successors[i].1)
            .unwrap_or(0.0)
    }

    pub fn row_sum(&self) -> f64 {
        self.successors.iter().map(|&(_, p)| p).sum()
    }

    /// True when every successor satisfies `inside`.
    pub fn stays_in(&self, inside: impl Fn(usize) -> bool) -> bool {
        self.successors.iter().all(|&(q, _)| inside(q))
    }
}

/// A finite MDP with an initial state, observed set and reachability target.
#[derive(Debug, Clone)]
pub struct Mdp {
    names: Vec<String>,
    index: HashMap<String, usize>,
    actions: Vec<Vec<Action>>,
    initial: usize,
    observed: Vec<bool>,
    targets: Vec<bool>,
    threshold: f64,
    grid: Option<GridLayout>,
}

impl Mdp {
    pub fn num_states(&self) -> usize {
        self.names.len()
    }

    pub fn states(&self) -> std::ops::Range<usize> {
        0..self.names.len()
    }

    pub fn name(&self, s: usize) -> &str {
        &self.names[s]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn state_index(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn initial(&self) -> usize {
        self.initial
    }

    pub fn actions(&self, s: usize) -> &[Action] {
        &self.actions[s]
    }

    pub fn action_index(&self, s: usize, name: &str) -> Option<usize> {
        self.actions[s].iter().position(|a| a.name == name)
    }

    pub fn is_observed(&self, s: usize) -> bool {
        self.observed[s]
    }

    pub fn observed_states(&self) -> Vec<usize> {
        self.states().filter(|&s| self.observed[s]).collect()
    }

    pub fn observed_mask(&self) -> &[bool] {
        &self.observed
    }

    pub fn is_target(&self, s: usize) -> bool {
        self.targets[s]
    }

    pub fn target_states(&self) -> Vec<usize> {
        self.states().filter(|&s| self.targets[s]).collect()
    }

    pub fn target_mask(&self) -> &[bool] {
        &self.targets
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn grid(&self) -> Option<&GridLayout> {
        self.grid.as_ref()
    }

    /// Successor set over all enabled actions.
    pub fn succ(&self, s: usize) -> Vec<usize> {
        let mut out: Vec<usize> = self.actions[s]
            .iter()
            .flat_map(|a| a.successors.iter().map(|&(q, _)| q))
            .collect();
        out.sort_unstable();
        out.dedup();
        out
    }

    pub fn is_absorbing(&self, s: usize) -> bool {
        !self.actions[s].is_empty()
            && self.actions[s]
                .iter()
                .all(|a| a.successors.len() == 1 && a.successors[0].0 == s)
    }

    pub fn total_actions(&self) -> usize {
        self.actions.iter().map(Vec::len).sum()
    }

    pub fn with_observed(&self, observed: impl IntoIterator<Item = usize>) -> Mdp {
        let mut m = self.clone();
        m.observed = vec![false; m.num_states()];
        for s in observed {
            m.observed[s] = true;
        }
        m
    }

    pub fn with_targets(&self, targets: impl IntoIterator<Item = usize>, threshold: f64) -> Mdp {
        let mut m = self.clone();
        m.targets = vec![false; m.num_states()];
        for s in targets {
            m.targets[s] = true;
        }
        m.threshold = threshold;
        m
    }

    pub fn with_threshold(&self, threshold: f64) -> Mdp {
        let mut m = self.clone();
        m.threshold = threshold;
        m
    }

    pub fn with_grid(mut self, grid: GridLayout) -> Mdp {
        self.grid = Some(grid);
        self
    }

    /// Returns a copy with the actions of `s` replaced.
    pub fn with_actions(&self, s: usize, actions: Vec<Action>) -> Mdp {
        let mut m = self.clone();
        m.actions[s] = actions;
        m
    }

    pub fn from_json_str(text: &str) -> Result<Mdp, ModelError> {
        let file: MdpFile = serde_json::from_str(text)?;
        Mdp::from_file(file)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(&self.to_file()).expect("MDP serialization cannot fail")
    }

    pub fn from_file(file: MdpFile) -> Result<Mdp, ModelError> {
        let mut builder = MdpBuilder::new();
        for name in &file.states {
            builder.add_state(name)?;
        }
        for t in &file.transitions {
            let to: Vec<(&str, f64)> = t.to.iter().map(|(k, &v)| (k.as_str(), v)).collect();
            builder.add_action(&t.from, &t.action, &to)?;
        }
        builder.set_initial(&file.initial)?;
        for s in &file.observed {
            builder.observe(s)?;
        }
        for s in &file.reach.targets {
            builder.target(s)?;
        }
        builder.threshold(file.reach.threshold);
        let mut mdp = builder.build()?;
        mdp.grid = file.grid;
        Ok(mdp)
    }

    pub fn to_file(&self) -> MdpFile {
        let mut transitions = Vec::new();
        for s in self.states() {
            for a in &self.actions[s] {
                transitions.push(TransitionEntry {
                    from: self.names[s].clone(),
                    action: a.name.clone(),
                    to: a
                        .successors
                        .iter()
                        .map(|&(q, p)| (self.names[q].clone(), p))
                        .collect(),
                });
            }
        }
        MdpFile {
            states: self.names.clone(),
            initial: self.names[self.initial].clone(),
            observed: self.observed_states().iter().map(|&s| self.names[s].clone()).collect(),
            reach: ReachSpec {
                targets: self.target_states().iter().map(|&s| self.names[s].clone()).collect(),
                threshold: self.threshold,
            },
            transitions,
            grid: self.grid.clone(),
        }
    }
}

/// Incremental constructor keyed by state and action names.
#[derive(Debug, Default)]
pub struct MdpBuilder {
    names: Vec<String>,
    index: HashMap<String, usize>,
    actions: Vec<Vec<Action>>,
    initial: Option<usize>,
    observed: Vec<usize>,
    targets: Vec<usize>,
    threshold: f64,
}

impl MdpBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_state(&mut self, name: &str) -> Result<usize, ModelError> {
        if self.index.contains_key(name) {
            return Err(ModelError::DuplicateState(name.to_string()));
        }
        let id = self.names.len();
        self.names.push(name.to_string());
        self.index.insert(name.to_string(), id);
        self.actions.push(Vec::new());
        Ok(id)
    }

    pub fn states(&mut self, names: &[&str]) -> Result<&mut Self, ModelError> {
        for n in names {
            self.add_state(n)?;
        }
        Ok(self)
    }

    fn lookup(&self, name: &str) -> Result<usize, ModelError> {
        self.index
            .get(name)
            .copied()
            .ok_or_else(|| ModelError::UnknownState(name.to_string()))
    }

    pub fn add_action(&mut self, from: &str, action: &str, to: &[(&str, f64)]) -> Result<&mut Self, ModelError> {
        let s = self.lookup(from)?;
        if self.actions[s].iter().any(|a| a.name == action) {
            return Err(ModelError::DuplicateAction {
                state: from.to_string(),
                action: action.to_string(),
            });
        }
        let mut succ = Vec::with_capacity(to.len());
        for &(q, p) in to {
            succ.push((self.lookup(q)?, p));
        }
        self.actions[s].push(Action::new(action, succ));
        Ok(self)
    }

    pub fn set_initial(&mut self, name: &str) -> Result<&mut Self, ModelError> {
        self.initial = Some(self.lookup(name)?);
        Ok(self)
    }

    pub fn observe(&mut self, name: &str) -> Result<&mut Self, ModelError> {
        let s = self.lookup(name)?;
        self.observed.push(s);
        Ok(self)
    }

    pub fn target(&mut self, name: &str) -> Result<&mut Self, ModelError> {
        let s = self.lookup(name)?;
        self.targets.push(s);
        Ok(self)
    }

    pub fn threshold(&mut self, nu: f64) -> &mut Self {
        self.threshold = nu;
        self
    }

    /// Finalizes the model. Rows within [`RENORMALIZE_TOL`] of summing to one
    /// are renormalized; other defects are left for [`validate`] to report.
    pub fn build(&mut self) -> Result<Mdp, ModelError> {
        if self.names.is_empty() {
            return Err(ModelError::Empty);
        }
        let n = self.names.len();
        let mut actions = std::mem::take(&mut self.actions);
        for row in actions.iter_mut() {
            for a in row.iter_mut() {
                let sum = a.row_sum();
                let nonneg = a.successors.iter().all(|&(_, p)| p >= 0.0);
                if nonneg && sum != 1.0 && (sum - 1.0).abs() <= RENORMALIZE_TOL {
                    for (_, p) in a.successors.iter_mut() {
                        *p /= sum;
                    }
                }
            }
        }
        let mut observed = vec![false; n];
        for &s in &self.observed {
            observed[s] = true;
        }
        let mut targets = vec![false; n];
        for &s in &self.targets {
            targets[s] = true;
        }
        Ok(Mdp {
            names: std::mem::take(&mut self.names),
            index: std::mem::take(&mut self.index),
            actions,
            initial: self.initial.unwrap_or(0),
            observed,
            targets,
            threshold: self.threshold,
            grid: None,
        })
    }
}

/// On-disk MDP format.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MdpFile {
    pub states: Vec<String>,
    pub initial: String,
    #[serde(default)]
    pub observed: Vec<String>,
    pub reach: ReachSpec,
    pub transitions: Vec<TransitionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridLayout>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReachSpec {
    pub targets: Vec<String>,
    pub threshold: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TransitionEntry {
    pub from: String,
    pub action: String,
    pub to: BTreeMap<String, f64>,
}

/// A structural defect of an MDP.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    NoActions { state: String },
    NegativeProbability { state: String, action: String, successor: String, probability: f64 },
    RowSum { state: String, action: String, sum: f64 },
    TargetNotAbsorbing { state: String },
    ObservedTarget { state: String },
    ThresholdOutOfRange { threshold: f64 },
    NoTargets,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoActions { state } => write!(f, "state {state} has no enabled actions"),
            Violation::NegativeProbability {
                state,
                action,
                successor,
                probability,
            } => write!(f, "P({state},{action},{successor}) = {probability} is negative"),
            Violation::RowSum { state, action, sum } => {
                write!(f, "transition row ({state},{action}) sums to {sum}")
            }
            Violation::TargetNotAbsorbing { state } => write!(f, "target {state} is not absorbing"),
            Violation::ObservedTarget { state } => write!(f, "target {state} is observed"),
            Violation::ThresholdOutOfRange { threshold } => {
                write!(f, "reach threshold {threshold} outside [0,1]")
            }
            Violation::NoTargets => write!(f, "reach target set is empty"),
        }
    }
}

/// A condition that is legal but scores as infinite information whenever the
/// state is visited.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Warning {
    SingleSuccessorObserved { state: String },
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Warning::SingleSuccessorObserved { state } => write!(
                f,
                "observed state {state} has a single successor; any visit leaks infinite information"
            ),
        }
    }
}

/// Lists every violated structural invariant. An empty list means valid.
pub fn validate(mdp: &Mdp) -> Vec<Violation> {
    let mut out = Vec::new();
    for s in mdp.states() {
        let name = mdp.name(s).to_string();
        if mdp.actions(s).is_empty() {
            out.push(Violation::NoActions { state: name.clone() });
        }
        for a in mdp.actions(s) {
            for &(q, p) in &a.successors {
                if p < 0.0 || p.is_nan() {
                    out.push(Violation::NegativeProbability {
                        state: name.clone(),
                        action: a.name.clone(),
                        successor: mdp.name(q).to_string(),
                        probability: p,
                    });
                }
            }
            let sum = a.row_sum();
            if !((sum - 1.0).abs() <= STOCHASTIC_TOL) {
                out.push(Violation::RowSum {
                    state: name.clone(),
                    action: a.name.clone(),
                    sum,
                });
            }
        }
        if mdp.is_target(s) {
            if !mdp.is_absorbing(s) {
                out.push(Violation::TargetNotAbsorbing { state: name.clone() });
            }
            if mdp.is_observed(s) {
                out.push(Violation::ObservedTarget { state: name });
            }
        }
    }
    let nu = mdp.threshold();
    if !(0.0..=1.0).contains(&nu) {
        out.push(Violation::ThresholdOutOfRange { threshold: nu });
    }
    if mdp.target_states().is_empty() && nu > 0.0 {
        out.push(Violation::NoTargets);
    }
    out
}

pub fn warnings(mdp: &Mdp) -> Vec<Warning> {
    mdp.observed_states()
        .into_iter()
        .filter(|&s| mdp.succ(s).len() == 1)
        .map(|s| Warning::SingleSuccessorObserved {
            state: mdp.name(s).to_string(),
        })
        .collect()
}

/// Time-invariant randomized policy: `probs[s][a]` over `mdp.actions(s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryPolicy {
    probs: Vec<Vec<f64>>,
}

impl StationaryPolicy {
    /// Checks shape and normalization against `mdp`.
    pub fn new(mdp: &Mdp, probs: Vec<Vec<f64>>) -> Result<Self, ModelError> {
        if probs.len() != mdp.num_states() {
            return Err(ModelError::InvalidPolicy(format!(
                "expected {} states, got {}",
                mdp.num_states(),
                probs.len()
            )));
        }
        for s in mdp.states() {
            if probs[s].len() != mdp.actions(s).len() {
                return Err(ModelError::InvalidPolicy(format!(
                    "state {} has {} actions but the policy lists {}",
                    mdp.name(s),
                    mdp.actions(s).len(),
                    probs[s].len()
                )));
            }
            if probs[s].iter().any(|&p| !(p >= -STOCHASTIC_TOL) || !p.is_finite()) {
                return Err(ModelError::InvalidPolicy(format!(
                    "negative probability at state {}",
                    mdp.name(s)
                )));
            }
            let sum: f64 = probs[s].iter().sum();
            if !probs[s].is_empty() && (sum - 1.0).abs() > STOCHASTIC_TOL {
                return Err(ModelError::InvalidPolicy(format!(
                    "probabilities at state {} sum to {sum}",
                    mdp.name(s)
                )));
            }
        }
        Ok(StationaryPolicy { probs })
    }

    /// Uniform distribution over the enabled actions of every state.
    pub fn uniform(mdp: &Mdp) -> Self {
        StationaryPolicy {
            probs: mdp
                .states()
                .map(|s| {
                    let k = mdp.actions(s).len();
                    vec![1.0 / k as f64; k]
                })
                .collect(),
        }
    }

    /// Builds a policy from `(state, action, probability)` names; unlisted
    /// states are uniform.
    pub fn from_named(mdp: &Mdp, entries: &[(&str, &str, f64)]) -> Result<Self, ModelError> {
        let mut probs: Vec<Option<Vec<f64>>> = vec![None; mdp.num_states()];
        for &(s, a, p) in entries {
            let si = mdp
                .state_index(s)
                .ok_or_else(|| ModelError::UnknownState(s.to_string()))?;
            let ai = mdp.action_index(si, a).ok_or_else(|| {
                ModelError::InvalidPolicy(format!("state {s} has no action {a}"))
            })?;
            let row = probs[si].get_or_insert_with(|| vec![0.0; mdp.actions(si).len()]);
            row[ai] = p;
        }
        let uniform = StationaryPolicy::uniform(mdp);
        let rows = probs
            .into_iter()
            .enumerate()
            .map(|(s, r)| r.unwrap_or_else(|| uniform.probs[s].clone()))
            .collect();
        StationaryPolicy::new(mdp, rows)
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s][a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.probs
    }

    pub fn set_row(&mut self, s: usize, row: Vec<f64>) {
        assert_eq!(row.len(), self.probs[s].len());
        self.probs[s] = row;
    }

    pub fn to_named(&self, mdp: &Mdp) -> BTreeMap<String, BTreeMap<String, f64>> {
        mdp.states()
            .map(|s| {
                let row = mdp
                    .actions(s)
                    .iter()
                    .zip(&self.probs[s])
                    .map(|(a, &p)| (a.name.clone(), p))
                    .collect();
                (mdp.name(s).to_string(), row)
            })
            .collect()
    }

    /// Parses the `{"state": {"action": p}}` map; every state must be present.
    pub fn from_named_map(
        mdp: &Mdp,
        map: &BTreeMap<String, BTreeMap<String, f64>>,
    ) -> Result<Self, ModelError> {
        let mut rows = Vec::with_capacity(mdp.num_states());
        for s in mdp.states() {
            let entry = map.get(mdp.name(s)).ok_or_else(|| {
                ModelError::InvalidPolicy(format!("policy has no entry for state {}", mdp.name(s)))
            })?;
            let mut row = vec![0.0; mdp.actions(s).len()];
            for (a, &p) in entry {
                let ai = mdp.action_index(s, a).ok_or_else(|| {
                    ModelError::InvalidPolicy(format!(
                        "state {} has no action {a}",
                        mdp.name(s)
                    ))
                })?;
                row[ai] = p;
            }
            rows.push(row);
        }
        StationaryPolicy::new(mdp, rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;

    #[test]
    fn example1_is_valid() {
        assert!(validate(&fixtures::example1()).is_empty());
        for m in [fixtures::fig2(), fixtures::fig4a(), fixtures::fig5a(), fixtures::fig5b()] {
            assert_eq!(validate(&m), vec![]);
        }
    }

    #[test]
    fn broken_row_sum_is_reported() {
        let m = fixtures::example1();
        let s0 = m.state_index("s0").unwrap();
        let s1 = m.state_index("s1").unwrap();
        let alpha = m.action_index(s0, "alpha").unwrap();
        let mut acts = m.actions(s0).to_vec();
        acts[alpha] = Action::new("alpha", vec![(s1, 0.5)]);
        let broken = m.with_actions(s0, acts);
        assert_eq!(
            validate(&broken),
            vec![Violation::RowSum {
                state: "s0".into(),
                action: "alpha".into(),
                sum: 0.5
            }]
        );
    }

    #[test]
    fn observed_target_is_reported() {
        let m = fixtures::example1();
        let s2 = m.state_index("s2").unwrap();
        let mut obs = m.observed_states();
        obs.push(s2);
        let m2 = m.with_observed(obs);
        let mut targets = m2.target_states();
        targets.push(s2);
        targets.dedup();
        let m3 = m2.with_targets(targets, m.threshold());
        assert_eq!(
            validate(&m3),
            vec![Violation::ObservedTarget { state: "s2".into() }]
        );
    }

    #[test]
    fn json_renormalizes_small_deviation() {
        let text = r#"{ "states": ["a","b"], "initial": "a", "observed": [],
            "reach": {"targets": ["b"], "threshold": 1.0},
            "transitions": [
              {"from":"a","action":"go","to":{"b":0.9999999}},
              {"from":"b","action":"stay","to":{"b":1.0}} ] }"#;
        let m = Mdp::from_json_str(text).unwrap();
        assert_eq!(m.actions(0)[0].row_sum(), 1.0);
        assert!(validate(&m).is_empty());
    }

    #[test]
    fn json_keeps_large_deviation() {
        let text = r#"{ "states": ["a","b"], "initial": "a",
            "reach": {"targets": ["b"], "threshold": 1.0},
            "transitions": [
              {"from":"a","action":"go","to":{"b":0.9}},
              {"from":"b","action":"stay","to":{"b":1.0}} ] }"#;
        let m = Mdp::from_json_str(text).unwrap();
        assert_eq!(validate(&m).len(), 1);
    }

    #[test]
    fn json_rejects_duplicate_pair_and_unknown_state() {
        let dup = r#"{ "states": ["a"], "initial": "a", "reach": {"targets": [], "threshold": 0},
            "transitions": [ {"from":"a","action":"x","to":{"a":1}}, {"from":"a","action":"x","to":{"a":1}} ] }"#;
        assert!(matches!(Mdp::from_json_str(dup), Err(ModelError::DuplicateAction { .. })));
        let unknown = r#"{ "states": ["a"], "initial": "z", "reach": {"targets": [], "threshold": 0},
            "transitions": [] }"#;
        assert!(matches!(Mdp::from_json_str(unknown), Err(ModelError::UnknownState(_))));
    }

    #[test]
    fn json_round_trip_preserves_model() {
        let m = fixtures::fig4a();
        let back = Mdp::from_json_str(&m.to_json_string()).unwrap();
        assert_eq!(back.names(), m.names());
        for s in m.states() {
            assert_eq!(back.actions(s), m.actions(s));
        }
        assert_eq!(back.observed_states(), m.observed_states());
        assert_eq!(back.threshold(), m.threshold());
    }

    #[test]
    fn policy_validation() {
        let m = fixtures::example1();
        assert!(StationaryPolicy::from_named(&m, &[("s0", "alpha", 0.3), ("s0", "beta", 0.6)]).is_err());
        assert!(StationaryPolicy::from_named(&m, &[("s0", "gamma", 1.0)]).is_err());
        let p = StationaryPolicy::from_named(&m, &[("s0", "alpha", 0.3), ("s0", "beta", 0.7)]).unwrap();
        let back = StationaryPolicy::from_named_map(&m, &p.to_named(&m)).unwrap();
        assert_eq!(back, p);
    }

    #[test]
    fn single_successor_observed_warning() {
        let m = fixtures::example1();
        assert!(warnings(&m).is_empty());
        let s2 = m.state_index("s2").unwrap();
        let s3 = m.state_index("s3").unwrap();
        let s1 = m.state_index("s1").unwrap();
        let m2 = m.with_actions(s1, vec![Action::new("alpha", vec![(s2, 1.0)])]);
        assert_eq!(warnings(&m2).len(), 1);
        let _ = s3;
    }
}
