//! Exhaustive search over unions of unobserved end components.
//!
//! Every subset of the non-target UMEC states, joined with the targets, that
//! forms a union of unobserved end components is tried as the end-component
//! set. Subsets are enumerated in increasing bitmask order and the first
//! minimizer wins ties. A solver failure on any subset fails the search.

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use super::program::{package, solve_program6_with};
use super::reach::feasibility_check;
use super::{Mode, SolverOptions, Status, Synthesis, SynthesisError};
use crate::components::{is_union_uec, umec_states};
use crate::ext::ExtReal;
use crate::mdp::{Mdp, StationaryPolicy};

/// Largest number of candidate states the search accepts.
pub const DEFAULT_SUBSET_CAP: usize = 20;

/// Relative margin by which a later candidate must improve on the best.
const TIE_TOL: f64 = 1e-9;

/// Minimum-information stationary policy over all end-component unions,
/// with its expected total information.
pub fn exhaustive_search(mdp: &Mdp) -> Result<(StationaryPolicy, ExtReal), SynthesisError> {
    let s = exhaustive_with(mdp, DEFAULT_SUBSET_CAP, &SolverOptions::default())?;
    let policy = s.policy.ok_or(SynthesisError::Numerical {
        reason: "threshold is not attainable".into(),
        best: Box::new(s.solution.clone().expect("infeasible result carries a solution")),
    })?;
    Ok((policy, s.objective))
}

fn candidate_states(mdp: &Mdp) -> Vec<usize> {
    let umec = umec_states(mdp);
    mdp.states().filter(|&s| umec[s] && !mdp.is_target(s)).collect()
}

pub(crate) fn exhaustive_with(mdp: &Mdp, cap: usize, opts: &SolverOptions) -> Result<Synthesis, SynthesisError> {
    let feasibility = feasibility_check(mdp);
    let base: Vec<bool> = mdp.states().map(|s| mdp.is_target(s)).collect();
    if !feasibility.feasible {
        let sol = solve_program6_with(mdp, &base, opts)?;
        return package(mdp, Mode::Exhaustive, feasibility, sol);
    }
    let candidates = candidate_states(mdp);
    if candidates.len() > cap {
        return Err(SynthesisError::TooManySubsets {
            count: candidates.len(),
            cap,
        });
    }
    let targets = mdp.target_states();
    let subset = |mask: u64| -> Vec<usize> {
        let mut l: Vec<usize> = candidates
            .iter()
            .enumerate()
            .filter(|&(i, _)| mask >> i & 1 == 1)
            .map(|(_, &s)| s)
            .chain(targets.iter().copied())
            .collect();
        l.sort_unstable();
        l
    };
    let evaluate = |mask: u64| -> Option<Result<ExtReal, SynthesisError>> {
        let l = subset(mask);
        is_union_uec(mdp, &l)?;
        let mut c_end = vec![false; mdp.num_states()];
        for &s in &l {
            c_end[s] = true;
        }
        Some(solve_program6_with(mdp, &c_end, opts).map(|sol| sol.objective))
    };
    let masks: Vec<u64> = (0..1u64 << candidates.len()).collect();
    #[cfg(feature = "parallel")]
    let results: Vec<Option<Result<ExtReal, SynthesisError>>> = masks.par_iter().map(|&m| evaluate(m)).collect();
    #[cfg(not(feature = "parallel"))]
    let results: Vec<Option<Result<ExtReal, SynthesisError>>> = masks.iter().map(|&m| evaluate(m)).collect();

    let mut best: Option<(u64, f64)> = None;
    for (&mask, r) in masks.iter().zip(results) {
        let value = match r {
            None => continue,
            Some(Err(e)) => return Err(e),
            Some(Ok(v)) => match v.finite_value() {
                Some(v) => v,
                None => continue,
            },
        };
        let better = match best {
            None => true,
            Some((_, b)) => value < b - TIE_TOL * (1.0 + b.abs()),
        };
        if better {
            best = Some((mask, value));
        }
    }
    match best {
        Some((mask, _)) => {
            let mut c_end = vec![false; mdp.num_states()];
            for s in subset(mask) {
                c_end[s] = true;
            }
            let sol = solve_program6_with(mdp, &c_end, opts)?;
            package(mdp, Mode::Exhaustive, feasibility, sol)
        }
        None => {
            let mut sol = solve_program6_with(mdp, &base, opts)?;
            sol.status = Status::InfiniteInformation;
            package(mdp, Mode::Exhaustive, feasibility, sol)
        }
    }
}
