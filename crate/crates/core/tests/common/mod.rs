//! Independent oracles for integration tests: dense Markov-chain evaluation of
//! stationary policies and a generator of small random MDPs.

#![allow(dead_code)]

use mininfo::{Mdp, MdpBuilder};
use rand::Rng;

/// Dense evaluation of one stationary policy.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub reach: f64,
    /// `f64::INFINITY` when an observed state with a deterministic next state
    /// or infinite residence is visited
    pub objective: f64,
    /// `f64::INFINITY` for recurrent reachable states
    pub residence: Vec<f64>,
}

pub fn chain_matrix(mdp: &Mdp, probs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = mdp.num_states();
    let mut p = vec![vec![0.0; n]; n];
    for s in 0..n {
        for (a, action) in mdp.actions(s).iter().enumerate() {
            for &(q, pr) in &action.successors {
                p[s][q] += probs[s][a] * pr;
            }
        }
    }
    p
}

fn reach_sets(p: &[Vec<f64>]) -> Vec<Vec<bool>> {
    let n = p.len();
    let mut r: Vec<Vec<bool>> = (0..n).map(|s| (0..n).map(|q| s == q || p[s][q] > 0.0).collect()).collect();
    for k in 0..n {
        for i in 0..n {
            if r[i][k] {
                for j in 0..n {
                    if r[k][j] {
                        r[i][j] = true;
                    }
                }
            }
        }
    }
    r
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
pub fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let piv = (c..n)
            .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
            .unwrap();
        a.swap(c, piv);
        b.swap(c, piv);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            if f != 0.0 {
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
    }
    let mut x = vec![0.0; n];
    for c in (0..n).rev() {
        let s: f64 = (c + 1..n).map(|k| a[c][k] * x[k]).sum();
        x[c] = (b[c] - s) / a[c][c];
    }
    x
}

/// `1 / sum_q y_q (1 - y_q)` over every successor of `w` under any action.
pub fn iota(mdp: &Mdp, p: &[Vec<f64>], w: usize) -> f64 {
    let mut succ = vec![false; mdp.num_states()];
    for a in mdp.actions(w) {
        for &(q, pr) in &a.successors {
            if pr > 0.0 {
                succ[q] = true;
            }
        }
    }
    let spread: f64 = (0..succ.len())
        .filter(|&q| succ[q])
        .map(|q| p[w][q] * (1.0 - p[w][q]))
        .sum();
    if spread <= 0.0 {
        f64::INFINITY
    } else {
        1.0 / spread
    }
}

pub fn evaluate(mdp: &Mdp, probs: &[Vec<f64>]) -> Evaluation {
    let n = mdp.num_states();
    let p = chain_matrix(mdp, probs);
    let r = reach_sets(&p);
    let s0 = mdp.initial();
    let transient: Vec<bool> = (0..n).map(|s| (0..n).any(|q| r[s][q] && !r[q][s])).collect();

    let t: Vec<usize> = (0..n).filter(|&s| transient[s]).collect();
    let mut residence = vec![0.0; n];
    if !t.is_empty() {
        let a: Vec<Vec<f64>> = t
            .iter()
            .map(|&i| t.iter().map(|&j| f64::from(u8::from(i == j)) - p[j][i]).collect())
            .collect();
        let b: Vec<f64> = t.iter().map(|&i| f64::from(u8::from(i == s0))).collect();
        for (k, v) in dense_solve(a, b).into_iter().enumerate() {
            residence[t[k]] = v.max(0.0);
        }
    }
    for s in 0..n {
        if !transient[s] && r[s0][s] {
            residence[s] = f64::INFINITY;
        }
    }

    let goal = mdp.target_mask();
    let mut hit = vec![0.0; n];
    for s in 0..n {
        // a recurrent state reaching the goal shares its closed class
        if goal[s] || (!transient[s] && (0..n).any(|q| goal[q] && r[s][q])) {
            hit[s] = 1.0;
        }
    }
    let free: Vec<usize> = (0..n).filter(|&s| transient[s] && !goal[s]).collect();
    if !free.is_empty() {
        let a: Vec<Vec<f64>> = free
            .iter()
            .map(|&i| free.iter().map(|&j| f64::from(u8::from(i == j)) - p[i][j]).collect())
            .collect();
        let b: Vec<f64> = free
            .iter()
            .map(|&i| (0..n).filter(|q| !free.contains(q)).map(|q| p[i][q] * hit[q]).sum())
            .collect();
        for (k, v) in dense_solve(a, b).into_iter().enumerate() {
            hit[free[k]] = v.clamp(0.0, 1.0);
        }
    }

    let mut objective = 0.0;
    for w in mdp.observed_states() {
        if residence[w] > 0.0 {
            objective += residence[w] * iota(mdp, &p, w);
        }
    }
    Evaluation {
        reach: hit[s0],
        objective,
        residence,
    }
}

/// Policy taking action 0 with probability `theta[k]` at the k-th two-action
/// state and the single action elsewhere.
pub fn binary_policy(mdp: &Mdp, theta: &[f64]) -> Vec<Vec<f64>> {
    let mut k = 0;
    mdp.states()
        .map(|s| match mdp.actions(s).len() {
            1 => vec![1.0],
            2 => {
                let t = theta[k];
                k += 1;
                vec![t, 1.0 - t]
            }
            m => panic!("unexpected action count {m}"),
        })
        .collect()
}

pub fn decision_states(mdp: &Mdp) -> usize {
    mdp.states().filter(|&s| mdp.actions(s).len() == 2).count()
}

/// Maximum reach probability over deterministic policies.
pub fn max_reach(mdp: &Mdp) -> f64 {
    let k = decision_states(mdp);
    (0..1usize << k)
        .map(|bits| {
            let theta: Vec<f64> = (0..k).map(|i| f64::from(u8::from(bits >> i & 1 == 1))).collect();
            evaluate(mdp, &binary_policy(mdp, &theta)).reach
        })
        .fold(0.0, f64::max)
}

/// Random MDP with `k` decision states (two actions each), an absorbing goal
/// `g` and an absorbing sink `d`. Decision states are observed with
/// probability 0.6 (at least one is). The threshold is left at 0.
pub fn random_mdp<R: Rng>(rng: &mut R, k: usize) -> Mdp {
    let mut names: Vec<String> = (0..k).map(|i| format!("s{i}")).collect();
    names.push("g".into());
    names.push("d".into());
    let refs: Vec<&str> = names.iter().map(String::as_str).collect();
    let mut b = MdpBuilder::new();
    b.states(&refs).unwrap();
    for s in 0..k {
        for action in ["alpha", "beta"] {
            let count = rng.gen_range(1..=3);
            let mut picks: Vec<usize> = Vec::new();
            while picks.len() < count {
                let q = rng.gen_range(0..k + 2);
                if !picks.contains(&q) {
                    picks.push(q);
                }
            }
            let weights: Vec<f64> = picks.iter().map(|_| rng.gen_range(0.05..1.0)).collect();
            let total: f64 = weights.iter().sum();
            let to: Vec<(&str, f64)> = picks.iter().zip(&weights).map(|(&q, &w)| (refs[q], w / total)).collect();
            b.add_action(refs[s], action, &to).unwrap();
        }
    }
    b.add_action("g", "stay", &[("g", 1.0)]).unwrap();
    b.add_action("d", "stay", &[("d", 1.0)]).unwrap();
    b.set_initial("s0").unwrap();
    let mut any = false;
    for s in 0..k {
        if rng.gen_bool(0.6) {
            b.observe(refs[s]).unwrap();
            any = true;
        }
    }
    if !any {
        b.observe(refs[rng.gen_range(0..k)]).unwrap();
    }
    b.target("g").unwrap();
    b.build().unwrap()
}

/// Random MDP with a random feasible threshold; regenerated until the goal
/// is reachable.
pub fn random_instance<R: Rng>(rng: &mut R, k: usize) -> Mdp {
    loop {
        let m = random_mdp(rng, k);
        let v = max_reach(&m);
        if v <= 1e-6 {
            continue;
        }
        let nu = if rng.gen_bool(0.2) { 0.0 } else { rng.gen_range(0.0..1.0) * v };
        return m.with_threshold(nu);
    }
}
