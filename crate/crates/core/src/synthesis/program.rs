//! The occupation-measure program over expected state-action residence
//! times, solved for a fixed set of end-component states.
//!
//! Before the barrier method runs, the variables are pruned to those that can
//! be positive at a finite-information feasible point: states must reach the
//! end-component set almost surely, be reachable from the initial state, and
//! observed states must keep at least two successors. When the maximum reach
//! probability on the pruned model equals the threshold, the program is
//! restricted to the face of value-optimal actions, on which the reach
//! constraint holds with equality.

use serde::{Deserialize, Serialize};

use super::barrier::{self, BarrierOptions, Problem, Term};
use super::policy::{extract_policy, stay_policy};
use super::reach::{feasibility_check, max_reach, Feasibility, FEASIBILITY_TOL, OPTIMAL_SLACK};
use super::{Mode, OccupationSolution, SolverOptions, Status, Synthesis, SynthesisError};
use crate::components::{check_assumption1, is_union_uec, umec_states};
use crate::ext::ExtReal;
use crate::graph::forward_reachable;
use crate::linalg::{solve_sparse, CsrMatrix};
use crate::mdp::{Mdp, StationaryPolicy};

/// Margin under which the maximum reach probability counts as equal to the
/// threshold.
const FACE_TOL: f64 = 1e-9;
const MAX_REFINEMENTS: usize = 4;

/// A grouped penalty `weight * h(x_{s_1}, ..., x_{s_k})` over the residence
/// times of `states`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupPenalty {
    pub states: Vec<usize>,
    pub weight: f64,
}

/// Solves the program with default options.
pub fn solve_program6(mdp: &Mdp, c_end: &[bool]) -> Result<OccupationSolution, SynthesisError> {
    solve_program6_with(mdp, c_end, &SolverOptions::default())
}

/// Solves the program for end-component states `c_end`. Target states are
/// always treated as end-component states.
pub fn solve_program6_with(
    mdp: &Mdp,
    c_end: &[bool],
    opts: &SolverOptions,
) -> Result<OccupationSolution, SynthesisError> {
    let c_end: Vec<bool> = mdp
        .states()
        .map(|s| c_end[s] || mdp.is_target(s))
        .collect();
    let feasibility = feasibility_check(mdp);
    if !feasibility.feasible {
        return Ok(empty_solution(mdp, &c_end, Status::Infeasible, feasibility.max_reach));
    }
    let mut forbidden = vec![false; mdp.num_states()];
    let mut best = match attempt(mdp, &c_end, &forbidden, opts)? {
        Some(sol) => sol,
        None => return Ok(empty_solution(mdp, &c_end, Status::InfiniteInformation, 0.0)),
    };
    if !opts.refine_support {
        return Ok(best);
    }
    for _ in 0..MAX_REFINEMENTS {
        let residence = best.state_residence();
        let small: Vec<usize> = mdp
            .observed_states()
            .into_iter()
            .filter(|&w| !c_end[w] && residence[w] > 0.0 && residence[w] < opts.support_tol)
            .collect();
        if small.is_empty() {
            break;
        }
        for &w in &small {
            forbidden[w] = true;
        }
        match attempt(mdp, &c_end, &forbidden, opts) {
            Ok(Some(sol)) if sol.objective < best.objective => best = sol,
            _ => break,
        }
    }
    Ok(best)
}

fn empty_solution(mdp: &Mdp, c_end: &[bool], status: Status, reach: f64) -> OccupationSolution {
    OccupationSolution {
        x: mdp.states().map(|s| vec![0.0; mdp.actions(s).len()]).collect(),
        objective: ExtReal::Infinite,
        reach_prob: reach,
        status,
        c_end: c_end.to_vec(),
        flow_residual: 0.0,
    }
}

struct Restriction {
    active: Vec<bool>,
    allowed: Vec<Vec<bool>>,
}

/// Greatest set of states that reach `c_end` almost surely, are reachable
/// from the initial state and can be visited with finite information.
fn restrict(
    mdp: &Mdp,
    c_end: &[bool],
    forbidden: &[bool],
    base: &[Vec<bool>],
    penalties: &[GroupPenalty],
) -> Restriction {
    let n = mdp.num_states();
    let mut z: Vec<bool> = (0..n).map(|s| !c_end[s] && !forbidden[s]).collect();
    let compute_allowed = |z: &[bool]| -> Vec<Vec<bool>> {
        mdp.states()
            .map(|s| {
                mdp.actions(s)
                    .iter()
                    .enumerate()
                    .map(|(a, act)| z[s] && base[s][a] && act.stays_in(|q| z[q] || c_end[q]))
                    .collect()
            })
            .collect()
    };
    loop {
        let allowed = compute_allowed(&z);
        let mut reverse: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut forward: Vec<Vec<usize>> = vec![Vec::new(); n];
        for s in 0..n {
            for (a, act) in mdp.actions(s).iter().enumerate() {
                if allowed[s][a] {
                    for &(q, _) in &act.successors {
                        reverse[q].push(s);
                        forward[s].push(q);
                    }
                }
            }
        }
        let sources: Vec<usize> = (0..n).filter(|&s| c_end[s]).collect();
        let reaches_end = forward_reachable(&reverse, &sources);
        let from_init = forward_reachable(&forward, &[mdp.initial()]);
        let mut next: Vec<bool> = (0..n).map(|s| z[s] && reaches_end[s] && from_init[s]).collect();
        for w in mdp.observed_states() {
            if !next[w] {
                continue;
            }
            let mut succ: Vec<usize> = mdp
                .actions(w)
                .iter()
                .enumerate()
                .filter(|&(a, act)| allowed[w][a] && act.stays_in(|q| next[q] || c_end[q]))
                .flat_map(|(_, act)| act.successors.iter().map(|&(q, _)| q))
                .collect();
            succ.sort_unstable();
            succ.dedup();
            if succ.len() <= 1 {
                next[w] = false;
            }
        }
        for g in penalties {
            if g.weight <= 0.0 {
                continue;
            }
            let members: Vec<usize> = g.states.iter().copied().filter(|&s| next[s]).collect();
            if members.len() == 1 {
                next[members[0]] = false;
            }
        }
        if next == z {
            let allowed = compute_allowed(&z);
            return Restriction { active: z, allowed };
        }
        z = next;
    }
}

/// Builds and solves the pruned program; `None` when no finite-information
/// point satisfies the constraints.
fn attempt(
    mdp: &Mdp,
    c_end: &[bool],
    forbidden: &[bool],
    opts: &SolverOptions,
) -> Result<Option<OccupationSolution>, SynthesisError> {
    let n = mdp.num_states();
    let s0 = mdp.initial();
    let nu = mdp.threshold();
    let targets = mdp.target_mask();
    if c_end[s0] {
        let reach = if targets[s0] { 1.0 } else { 0.0 };
        if reach < nu - FEASIBILITY_TOL {
            return Ok(None);
        }
        let mut sol = empty_solution(mdp, c_end, Status::Optimal, reach);
        sol.objective = ExtReal::ZERO;
        return Ok(Some(sol));
    }
    let all: Vec<Vec<bool>> = mdp.states().map(|s| vec![true; mdp.actions(s).len()]).collect();
    let mut r = restrict(mdp, c_end, forbidden, &all, &opts.penalties);
    if !r.active[s0] {
        return Ok(None);
    }
    let mut reach_constraint = nu > 0.0;
    let mut choice: Vec<Option<usize>> = vec![None; n];
    let mut v0 = 1.0;
    if reach_constraint {
        let mr = max_reach(mdp, &r.allowed, c_end, targets);
        v0 = mr.values[s0];
        if v0 < nu - FEASIBILITY_TOL {
            return Ok(None);
        }
        choice = mr.choice;
        if v0 <= nu + FACE_TOL {
            let face: Vec<Vec<bool>> = mdp
                .states()
                .map(|s| {
                    mdp.actions(s)
                        .iter()
                        .enumerate()
                        .map(|(a, act)| {
                            r.allowed[s][a]
                                && act.successors.iter().map(|&(q, p)| p * mr.values[q]).sum::<f64>()
                                    >= mr.values[s] - OPTIMAL_SLACK
                        })
                        .collect()
                })
                .collect();
            r = restrict(mdp, c_end, forbidden, &face, &opts.penalties);
            if !r.active[s0] {
                return Ok(None);
            }
            let mr = max_reach(mdp, &r.allowed, c_end, targets);
            if mr.values[s0] < nu - FEASIBILITY_TOL {
                return Ok(None);
            }
            reach_constraint = false;
        }
    }

    // variable layout
    let mut var_of: Vec<Vec<Option<usize>>> = mdp.states().map(|s| vec![None; mdp.actions(s).len()]).collect();
    let mut vars: Vec<(usize, usize)> = Vec::new();
    let mut row_of = vec![usize::MAX; n];
    let mut rows = 0;
    for s in mdp.states() {
        if !r.active[s] {
            continue;
        }
        row_of[s] = rows;
        rows += 1;
        for a in 0..mdp.actions(s).len() {
            if r.allowed[s][a] {
                var_of[s][a] = Some(vars.len());
                vars.push((s, a));
            }
        }
    }
    let mut triplets = Vec::new();
    for (j, &(s, a)) in vars.iter().enumerate() {
        triplets.push((row_of[s], j, 1.0));
        for &(q, p) in &mdp.actions(s)[a].successors {
            if row_of[q] != usize::MAX {
                triplets.push((row_of[q], j, -p));
            }
        }
    }
    let a_mat = CsrMatrix::from_triplets(rows, vars.len(), triplets);
    let mut b = vec![0.0; rows];
    b[row_of[s0]] = 1.0;

    let mut terms = Vec::new();
    for w in mdp.observed_states() {
        if !r.active[w] {
            continue;
        }
        let acts: Vec<usize> = (0..mdp.actions(w).len()).filter(|&a| r.allowed[w][a]).collect();
        let mut succ: Vec<usize> = acts
            .iter()
            .flat_map(|&a| mdp.actions(w)[a].successors.iter().map(|&(q, _)| q))
            .collect();
        succ.sort_unstable();
        succ.dedup();
        terms.push(Term {
            vars: acts.iter().map(|&a| var_of[w][a].unwrap()).collect(),
            matrix: succ
                .iter()
                .map(|&q| acts.iter().map(|&a| mdp.actions(w)[a].prob_to(q)).collect())
                .collect(),
            weight: 1.0,
        });
    }
    for g in &opts.penalties {
        if g.weight <= 0.0 {
            continue;
        }
        let members: Vec<usize> = g.states.iter().copied().filter(|&s| r.active[s]).collect();
        if members.is_empty() {
            continue;
        }
        let mut tv = Vec::new();
        let mut owner = Vec::new();
        for (i, &s) in members.iter().enumerate() {
            for v in var_of[s].iter().flatten() {
                tv.push(*v);
                owner.push(i);
            }
        }
        let mut order: Vec<usize> = (0..tv.len()).collect();
        order.sort_by_key(|&k| tv[k]);
        let tv_sorted: Vec<usize> = order.iter().map(|&k| tv[k]).collect();
        let matrix = (0..members.len())
            .map(|i| order.iter().map(|&k| if owner[k] == i { 1.0 } else { 0.0 }).collect())
            .collect();
        terms.push(Term {
            vars: tv_sorted,
            matrix,
            weight: g.weight,
        });
    }
    for t in terms.iter_mut() {
        sort_term(t);
    }

    let reach_coef: Vec<(usize, f64)> = vars
        .iter()
        .enumerate()
        .filter_map(|(j, &(s, a))| {
            let c: f64 = mdp.actions(s)[a]
                .successors
                .iter()
                .filter(|&&(q, _)| targets[q])
                .map(|&(_, p)| p)
                .sum();
            (c > 0.0).then_some((j, c))
        })
        .collect();
    let problem = Problem {
        n: vars.len(),
        a: a_mat,
        b,
        terms,
        reach: reach_constraint.then(|| (reach_coef.clone(), nu)),
    };

    let x0 = start_point(mdp, &r, &var_of, &vars, &row_of, rows, &choice, &reach_coef, reach_constraint, nu, v0)
        .ok_or_else(|| numerical(mdp, c_end, "no strictly feasible starting point".into(), None))?;
    let bopts = BarrierOptions {
        mu_initial: opts.mu_initial,
        mu_final: opts.mu_final,
        max_newton: opts.max_newton,
        ..BarrierOptions::default()
    };
    let x = match barrier::solve(&problem, x0, &bopts) {
        Ok(x) => x,
        Err(fail) => {
            let full = scatter(mdp, &vars, &fail.x);
            return Err(numerical(mdp, c_end, fail.reason, Some(full)));
        }
    };
    let full = scatter(mdp, &vars, &x);
    Ok(Some(finish(mdp, c_end, full, &opts.penalties, Status::Optimal)))
}

/// Orders a term's variables increasingly, permuting matrix columns along.
fn sort_term(t: &mut Term) {
    let mut order: Vec<usize> = (0..t.vars.len()).collect();
    order.sort_by_key(|&k| t.vars[k]);
    t.vars = order.iter().map(|&k| t.vars[k]).collect();
    for row in t.matrix.iter_mut() {
        *row = order.iter().map(|&k| row[k]).collect();
    }
}

fn scatter(mdp: &Mdp, vars: &[(usize, usize)], x: &[f64]) -> Vec<Vec<f64>> {
    let mut full: Vec<Vec<f64>> = mdp.states().map(|s| vec![0.0; mdp.actions(s).len()]).collect();
    for (&(s, a), &v) in vars.iter().zip(x) {
        full[s][a] = v;
    }
    full
}

fn numerical(mdp: &Mdp, c_end: &[bool], reason: String, x: Option<Vec<Vec<f64>>>) -> SynthesisError {
    let best = match x {
        Some(x) => finish(mdp, c_end, x, &[], Status::Optimal),
        None => empty_solution(mdp, c_end, Status::Optimal, 0.0),
    };
    SynthesisError::Numerical {
        reason,
        best: Box::new(best),
    }
}

/// Evaluates objective, reach probability and flow residual of `x`.
pub(crate) fn finish(
    mdp: &Mdp,
    c_end: &[bool],
    x: Vec<Vec<f64>>,
    penalties: &[GroupPenalty],
    status: Status,
) -> OccupationSolution {
    let n = mdp.num_states();
    let mut objective = ExtReal::ZERO;
    for w in mdp.observed_states() {
        if c_end[w] {
            continue;
        }
        let term = crate::information::InfoTerm::new(mdp, w);
        objective = objective + crate::information::mass_value(&term.masses(&x[w]));
    }
    for g in penalties {
        if g.weight <= 0.0 {
            continue;
        }
        let y: Vec<f64> = g.states.iter().map(|&s| x[s].iter().sum()).collect();
        objective = objective + crate::information::mass_value(&y).scale(g.weight);
    }
    let mut inflow = vec![0.0; n];
    for s in 0..n {
        for (act, &v) in mdp.actions(s).iter().zip(&x[s]) {
            if v == 0.0 {
                continue;
            }
            for &(q, p) in &act.successors {
                inflow[q] += v * p;
            }
        }
    }
    let s0 = mdp.initial();
    let mut residual: f64 = 0.0;
    for s in 0..n {
        if c_end[s] {
            continue;
        }
        let out: f64 = x[s].iter().sum();
        let init = if s == s0 { 1.0 } else { 0.0 };
        residual = residual.max((out - inflow[s] - init).abs());
    }
    let reach: f64 = (0..n).filter(|&q| mdp.is_target(q)).map(|q| inflow[q]).sum::<f64>()
        + if mdp.is_target(s0) { 1.0 } else { 0.0 };
    OccupationSolution {
        x,
        objective,
        reach_prob: reach,
        status,
        c_end: c_end.to_vec(),
        flow_residual: residual,
    }
}

/// Residence times of a full-support mixture of the max-reach choice and the
/// uniform policy on the pruned model, strictly inside the reach constraint.
#[allow(clippy::too_many_arguments)]
fn start_point(
    mdp: &Mdp,
    r: &Restriction,
    var_of: &[Vec<Option<usize>>],
    vars: &[(usize, usize)],
    row_of: &[usize],
    rows: usize,
    choice: &[Option<usize>],
    reach_coef: &[(usize, f64)],
    reach_constraint: bool,
    nu: f64,
    v0: f64,
) -> Option<Vec<f64>> {
    let mut eps = 1.0;
    for _ in 0..60 {
        let mut pi = vec![0.0; vars.len()];
        for s in mdp.states().filter(|&s| r.active[s]) {
            let acts: Vec<usize> = (0..mdp.actions(s).len()).filter(|&a| r.allowed[s][a]).collect();
            let k = acts.len() as f64;
            for &a in &acts {
                let j = var_of[s][a].unwrap();
                pi[j] = eps / k;
                if choice[s] == Some(a) {
                    pi[j] += 1.0 - eps;
                }
            }
            // the choice may point at a pruned action; renormalize
            let total: f64 = acts.iter().map(|&a| pi[var_of[s][a].unwrap()]).sum();
            for &a in &acts {
                pi[var_of[s][a].unwrap()] /= total;
            }
        }
        let mut triplets = Vec::new();
        for (j, &(s, a)) in vars.iter().enumerate() {
            let i = row_of[s];
            triplets.push((i, i, pi[j]));
            for &(q, p) in &mdp.actions(s)[a].successors {
                if row_of[q] != usize::MAX {
                    // row q: x_q - sum_s x_s P_pi(s, q)
                    triplets.push((row_of[q], i, -pi[j] * p));
                }
            }
        }
        // the diagonal collects sum_a pi(s,a) = 1
        let a = CsrMatrix::from_triplets(rows, rows, triplets);
        let mut rhs = vec![0.0; rows];
        rhs[row_of[mdp.initial()]] = 1.0;
        let xs = solve_sparse(&a, &rhs).ok()?;
        let x: Vec<f64> = vars
            .iter()
            .enumerate()
            .map(|(j, &(s, _))| xs[row_of[s]] * pi[j])
            .collect();
        let positive = x.iter().all(|&v| v > 0.0 && v.is_finite());
        if !reach_constraint {
            return positive.then_some(x);
        }
        let reach: f64 = reach_coef.iter().map(|&(j, c)| c * x[j]).sum();
        if positive && reach - nu >= 0.5 * (v0 - nu) {
            return Some(x);
        }
        eps *= 0.5;
    }
    None
}

/// An admissible stationary policy that maximizes the reach probability.
pub(crate) fn admissible_fallback(mdp: &Mdp) -> StationaryPolicy {
    let allowed: Vec<Vec<bool>> = mdp.states().map(|s| vec![true; mdp.actions(s).len()]).collect();
    let mr = max_reach(mdp, &allowed, mdp.target_mask(), mdp.target_mask());
    let rows = mdp
        .states()
        .map(|s| {
            let k = mdp.actions(s).len();
            match mr.choice[s] {
                Some(a) => (0..k).map(|b| if a == b { 1.0 } else { 0.0 }).collect(),
                None => vec![1.0 / k as f64; k],
            }
        })
        .collect();
    StationaryPolicy::new(mdp, rows).expect("fallback rows are distributions")
}

/// Closed mode: stay in every unobserved maximal end component.
pub(crate) fn solve_closed(mdp: &Mdp, opts: &SolverOptions) -> Result<Synthesis, SynthesisError> {
    if !check_assumption1(mdp) {
        return Err(SynthesisError::AssumptionViolated);
    }
    let c_end = umec_states(mdp);
    let sol = solve_program6_with(mdp, &c_end, opts)?;
    let feasibility = feasibility_check(mdp);
    package(mdp, Mode::Closed, feasibility, sol)
}

/// Turns an occupation solution into a [`Synthesis`] with stationary policy.
pub(crate) fn package(
    mdp: &Mdp,
    mode: Mode,
    feasibility: Feasibility,
    sol: OccupationSolution,
) -> Result<Synthesis, SynthesisError> {
    let c_end_list: Vec<usize> = mdp.states().filter(|&s| sol.c_end[s]).collect();
    match sol.status {
        Status::Infeasible => Ok(Synthesis {
            mode,
            status: Status::Infeasible,
            objective: ExtReal::Infinite,
            reach_prob: feasibility.max_reach,
            feasibility,
            policy: None,
            switch: None,
            solution: Some(sol),
            c_end: c_end_list,
        }),
        Status::InfiniteInformation => Ok(Synthesis {
            mode,
            status: Status::InfiniteInformation,
            objective: ExtReal::Infinite,
            reach_prob: feasibility.max_reach,
            feasibility,
            policy: Some(admissible_fallback(mdp)),
            switch: None,
            solution: Some(sol),
            c_end: Vec::new(),
        }),
        Status::Optimal => {
            let union = is_union_uec(mdp, &c_end_list).ok_or_else(|| {
                SynthesisError::InvalidUnion(
                    c_end_list
                        .iter()
                        .map(|&s| mdp.name(s))
                        .collect::<Vec<_>>()
                        .join(","),
                )
            })?;
            let stay = stay_policy(mdp, &union)?;
            let policy = extract_policy(mdp, &sol, &stay);
            Ok(Synthesis {
                mode,
                status: Status::Optimal,
                objective: sol.objective,
                reach_prob: sol.reach_prob,
                feasibility,
                policy: Some(policy),
                switch: None,
                solution: Some(sol),
                c_end: c_end_list,
            })
        }
    }
}
