//! Policy extraction from residence times.

use super::{OccupationSolution, SynthesisError};
use crate::components::SubMdp;
use crate::mdp::{Mdp, StationaryPolicy};

/// Residence times at or below this are treated as zero.
pub const ZERO_RESIDENCE: f64 = 1e-12;

/// Uniform over the actions of the end-component union at its states and
/// uniform over all actions elsewhere.
pub fn stay_policy(mdp: &Mdp, union: &SubMdp) -> Result<StationaryPolicy, SynthesisError> {
    let mut policy = StationaryPolicy::uniform(mdp);
    for (&s, acts) in union.states.iter().zip(&union.actions) {
        if acts.is_empty() {
            return Err(SynthesisError::InvalidUnion(mdp.name(s).to_string()));
        }
        let mut row = vec![0.0; mdp.actions(s).len()];
        for &a in acts {
            row[a] = 1.0 / acts.len() as f64;
        }
        policy.set_row(s, row);
    }
    Ok(policy)
}

/// `pi(s, a) = x(s, a) / x_s` where the residence is positive, the stay
/// policy on end-component states and uniform elsewhere.
pub fn extract_policy(mdp: &Mdp, sol: &OccupationSolution, stay: &StationaryPolicy) -> StationaryPolicy {
    let mut policy = StationaryPolicy::uniform(mdp);
    for s in mdp.states() {
        if sol.c_end[s] {
            policy.set_row(s, stay.row(s).to_vec());
            continue;
        }
        let xs: f64 = sol.x[s].iter().sum();
        if xs > ZERO_RESIDENCE {
            policy.set_row(s, sol.x[s].iter().map(|&v| v.max(0.0) / xs).collect());
        }
    }
    policy
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::components::is_union_uec;
    use crate::ext::ExtReal;
    use crate::fixtures;
    use crate::synthesis::Status;

    #[test]
    fn normalizes_rows_and_defaults_to_uniform() {
        let m = fixtures::fig2();
        let s1 = m.state_index("s1").unwrap();
        let mut x: Vec<Vec<f64>> = m.states().map(|s| vec![0.0; m.actions(s).len()]).collect();
        x[s1] = vec![0.5, 1.5];
        let sol = OccupationSolution {
            x,
            objective: ExtReal::ZERO,
            reach_prob: 1.0,
            status: Status::Optimal,
            c_end: vec![false; m.num_states()],
            flow_residual: 0.0,
        };
        let stay = StationaryPolicy::uniform(&m);
        let pi = extract_policy(&m, &sol, &stay);
        assert_eq!(pi.row(s1), &[0.25, 0.75]);
        let s0 = m.initial();
        let k = m.actions(s0).len() as f64;
        assert!(pi.row(s0).iter().all(|&p| (p - 1.0 / k).abs() < 1e-15));
    }

    #[test]
    fn stay_policy_keeps_inside_union() {
        let m = fixtures::fig5b();
        let s2 = m.state_index("s2").unwrap();
        let union = is_union_uec(&m, &[s2]).unwrap();
        let stay = stay_policy(&m, &union).unwrap();
        for (a, act) in m.actions(s2).iter().enumerate() {
            if stay.prob(s2, a) > 0.0 {
                assert!(act.stays_in(|q| q == s2));
            }
        }
    }
}
