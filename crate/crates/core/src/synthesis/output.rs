//! JSON policy files written by synthesis and read back by the simulator.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::switch::{build_modified_mdp, switch_c_end, ModifiedMdp, SwitchPolicy};
use super::{Mode, Status, Synthesis, SynthesisError};
use crate::ext::ExtReal;
use crate::mdp::{Mdp, ModelError, StationaryPolicy};

type NamedRows = BTreeMap<String, BTreeMap<String, f64>>;

/// Policy file. For the switch mode `policy` is the stationary policy of the
/// extended model, including copies and `switch` actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub mode: Mode,
    pub status: Status,
    pub objective: ExtReal,
    pub reach_prob: f64,
    pub policy: NamedRows,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub switch_probs: Option<BTreeMap<String, f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stay_policy: Option<NamedRows>,
}

impl PolicyFile {
    /// `None` when the synthesis produced no policy.
    pub fn from_synthesis(mdp: &Mdp, s: &Synthesis) -> Result<Option<PolicyFile>, SynthesisError> {
        let mut file = PolicyFile {
            mode: s.mode,
            status: s.status,
            objective: s.objective,
            reach_prob: s.reach_prob,
            policy: BTreeMap::new(),
            switch_probs: None,
            stay_policy: None,
        };
        if let Some(sw) = &s.switch {
            let modified = build_modified_mdp(mdp, &sw.c_end)?;
            file.policy = sw.base.to_named(&modified.mdp);
            file.switch_probs = Some(sw.switch_probs(mdp));
            file.stay_policy = Some(sw.stay.to_named(mdp));
            return Ok(Some(file));
        }
        match &s.policy {
            Some(p) => {
                file.policy = p.to_named(mdp);
                Ok(Some(file))
            }
            None => Ok(None),
        }
    }
}

/// A policy that can be executed on the input MDP.
#[derive(Debug, Clone)]
pub enum Agent {
    Stationary(StationaryPolicy),
    Switch {
        policy: SwitchPolicy,
        modified: ModifiedMdp,
    },
}

/// Rebuilds an executable policy from a file written for `mdp`.
pub fn load_policy_file(mdp: &Mdp, file: &PolicyFile) -> Result<Agent, SynthesisError> {
    if file.mode != Mode::Switch || file.switch_probs.is_none() {
        return Ok(Agent::Stationary(StationaryPolicy::from_named_map(mdp, &file.policy)?));
    }
    let modified = build_modified_mdp(mdp, &switch_c_end(mdp))?;
    let base = StationaryPolicy::from_named_map(&modified.mdp, &file.policy)?;
    let stay = match &file.stay_policy {
        Some(rows) => StationaryPolicy::from_named_map(mdp, rows)?,
        None => return Err(ModelError::InvalidPolicy("switch policy without stay_policy".into()).into()),
    };
    let policy = SwitchPolicy {
        c_end: modified.c_end.clone(),
        base,
        switch_index: modified.switch_action.clone(),
        stay,
    };
    Ok(Agent::Switch { policy, modified })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::synthesis::{synthesize, SolverOptions};

    #[test]
    fn stationary_round_trip() {
        let m = fixtures::example1();
        let s = synthesize(&m, Mode::Closed, &SolverOptions::default()).unwrap();
        let file = PolicyFile::from_synthesis(&m, &s).unwrap().unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back: PolicyFile = serde_json::from_str(&text).unwrap();
        assert_eq!(back, file);
        match load_policy_file(&m, &back).unwrap() {
            Agent::Stationary(p) => assert_eq!(&p, s.policy.as_ref().unwrap()),
            Agent::Switch { .. } => panic!("expected a stationary policy"),
        }
    }

    #[test]
    fn switch_round_trip() {
        let m = fixtures::fig5a();
        let s = synthesize(&m, Mode::Switch, &SolverOptions::default()).unwrap();
        let file = PolicyFile::from_synthesis(&m, &s).unwrap().unwrap();
        let text = serde_json::to_string(&file).unwrap();
        let back: PolicyFile = serde_json::from_str(&text).unwrap();
        match load_policy_file(&m, &back).unwrap() {
            Agent::Switch { policy, .. } => {
                let original = s.switch.as_ref().unwrap();
                assert_eq!(policy.c_end, original.c_end);
                assert_eq!(policy.switch_index, original.switch_index);
                assert_eq!(policy.stay, original.stay);
                for (a, b) in policy.base.rows().iter().zip(original.base.rows()) {
                    for (x, y) in a.iter().zip(b) {
                        assert!((x - y).abs() <= 1e-15, "{a:?} vs {b:?}");
                    }
                }
            }
            Agent::Stationary(_) => panic!("expected a switch policy"),
        }
    }
}
