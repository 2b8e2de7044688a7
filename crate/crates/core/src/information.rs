//! Transition information and the expected-total-information objective.
//!
//! For a vector `y >= 0` of successor masses with total `T`, the per-state
//! term is `h(y) = T^3 / sum_q y_q (T - y_q)`, which equals the residence time
//! times the transition information of the normalized distribution.

use thiserror::Error;

use crate::chain::{classify, induce_chain, residence_times, ChainError};
use crate::ext::ExtReal;
use crate::mdp::{Mdp, StationaryPolicy, STOCHASTIC_TOL};

/// Relative support tolerance used when deciding that a mass vector is
/// concentrated on a single successor.
pub const SUPPORT_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InfoError {
    #[error("invalid distribution: {0}")]
    InvalidDistribution(String),
    #[error("negative residence time {value} at position {index}")]
    NegativeResidence { index: usize, value: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("gradient requested outside the finite region")]
    NotDifferentiable,
    #[error("path step {from} -> {to} has probability zero")]
    ImpossibleTransition { from: String, to: String },
    #[error("path must start at the initial state")]
    WrongStart,
    #[error(transparent)]
    Chain(#[from] ChainError),
}

/// `1 / sum_q p_q (1 - p_q)`, infinite for a deterministic distribution.
pub fn transition_information(dist: &[f64]) -> Result<ExtReal, InfoError> {
    if let Some(p) = dist.iter().find(|p| !(**p >= 0.0)) {
        return Err(InfoError::InvalidDistribution(format!("entry {p} is negative")));
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > STOCHASTIC_TOL {
        return Err(InfoError::InvalidDistribution(format!("entries sum to {sum}")));
    }
    Ok(mass_value(dist))
}

/// Number of entries above the support tolerance relative to the total.
fn support_size(y: &[f64], total: f64) -> usize {
    y.iter().filter(|&&v| v > SUPPORT_TOL * total).count()
}

/// `sum_q y_q (T - y_q)` with `T - y_q` formed from the other entries.
fn spread(y: &[f64]) -> f64 {
    let mut out = 0.0;
    for (q, &v) in y.iter().enumerate() {
        if v == 0.0 {
            continue;
        }
        let others: f64 = y.iter().enumerate().filter(|&(r, _)| r != q).map(|(_, &w)| w).sum();
        out += v * others;
    }
    out
}

/// `h(y)` with the extended-value conventions: zero mass scores 0, mass on a
/// single successor scores `+inf`.
pub fn mass_value(y: &[f64]) -> ExtReal {
    let total: f64 = y.iter().sum();
    if total == 0.0 {
        return ExtReal::ZERO;
    }
    if !total.is_finite() || support_size(y, total) <= 1 {
        return ExtReal::Infinite;
    }
    ExtReal::finite(total.powi(3) / spread(y))
}

/// Gradient of `h` at a point of the finite region.
pub fn mass_gradient(y: &[f64]) -> Vec<f64> {
    let t: f64 = y.iter().sum();
    let d = spread(y);
    let t2 = t * t;
    let t3 = t2 * t;
    y.iter()
        .map(|&yq| 3.0 * t2 / d - t3 * 2.0 * (t - yq) / (d * d))
        .collect()
}

/// Hessian of `h` (row-major, `k x k`) at a point of the finite region.
pub fn mass_hessian(y: &[f64]) -> Vec<f64> {
    let k = y.len();
    let t: f64 = y.iter().sum();
    let d = spread(y);
    let dq: Vec<f64> = y.iter().map(|&v| 2.0 * (t - v)).collect();
    let (d2, d3) = (d * d, d * d * d);
    let (t2, t3) = (t * t, t * t * t);
    let mut h = vec![0.0; k * k];
    for q in 0..k {
        for r in 0..k {
            let dqr = if q == r { 0.0 } else { 2.0 };
            h[q * k + r] = 6.0 * t / d - 3.0 * t2 * (dq[q] + dq[r]) / d2 + 2.0 * t3 * dq[q] * dq[r] / d3
                - t3 * dqr / d2;
        }
    }
    h
}

/// Successor-by-action matrix of an observed state: `y = P x` maps the
/// state-action residence times of the state to successor masses.
#[derive(Debug, Clone, PartialEq)]
pub struct InfoTerm {
    pub state: usize,
    pub successors: Vec<usize>,
    /// `matrix[i][j] = P(state, a_j, successors[i])`
    pub matrix: Vec<Vec<f64>>,
}

impl InfoTerm {
    pub fn new(mdp: &Mdp, state: usize) -> Self {
        let successors = mdp.succ(state);
        let matrix = successors
            .iter()
            .map(|&q| mdp.actions(state).iter().map(|a| a.prob_to(q)).collect())
            .collect();
        InfoTerm {
            state,
            successors,
            matrix,
        }
    }

    pub fn num_actions(&self) -> usize {
        self.matrix.first().map_or(0, Vec::len)
    }

    pub fn masses(&self, x: &[f64]) -> Vec<f64> {
        self.matrix
            .iter()
            .map(|row| row.iter().zip(x).map(|(p, v)| p * v).sum())
            .collect()
    }

    fn check(&self, x: &[f64]) -> Result<(), InfoError> {
        if x.len() != self.num_actions() {
            return Err(InfoError::Dimension {
                expected: self.num_actions(),
                got: x.len(),
            });
        }
        if let Some((index, &value)) = x.iter().enumerate().find(|(_, v)| !(**v >= 0.0)) {
            return Err(InfoError::NegativeResidence { index, value });
        }
        Ok(())
    }
}

/// `x_s * iota_s` expressed through the state-action residence times.
pub fn info_term_value(term: &InfoTerm, x: &[f64]) -> Result<ExtReal, InfoError> {
    term.check(x)?;
    Ok(mass_value(&term.masses(x)))
}

/// Gradient of [`info_term_value`] with respect to `x`.
pub fn info_term_gradient(term: &InfoTerm, x: &[f64]) -> Result<Vec<f64>, InfoError> {
    term.check(x)?;
    let y = term.masses(x);
    if !mass_value(&y).is_finite() || y.iter().sum::<f64>() == 0.0 {
        return Err(InfoError::NotDifferentiable);
    }
    let gy = mass_gradient(&y);
    Ok((0..x.len())
        .map(|j| term.matrix.iter().zip(&gy).map(|(row, g)| row[j] * g).sum())
        .collect())
}

/// `sum_{w in W} x_w iota_w` for the chain induced by `policy`.
pub fn expected_total_information(mdp: &Mdp, policy: &StationaryPolicy) -> Result<ExtReal, InfoError> {
    let chain = induce_chain(mdp, policy)?;
    let classes = classify(&chain);
    let observed = mdp.observed_states();
    if observed
        .iter()
        .any(|&w| classes.reachable[w] && classes.recurrent[w])
    {
        return Ok(ExtReal::Infinite);
    }
    let x = residence_times(&chain, &classes.transient_reachable())?;
    let mut total = ExtReal::ZERO;
    for &w in &observed {
        if !classes.reachable[w] {
            continue;
        }
        let row: Vec<f64> = chain.row(w).iter().map(|&(_, p)| p).collect();
        let xw = x[w].as_f64();
        if xw.is_infinite() {
            return Ok(ExtReal::Infinite);
        }
        if xw > 0.0 {
            total = total + mass_value(&row).scale(xw);
        }
        if total.is_infinite() {
            break;
        }
    }
    Ok(total)
}

/// Per-state transition information of the induced chain (0 for unobserved
/// states).
pub fn state_informations(mdp: &Mdp, policy: &StationaryPolicy) -> Result<Vec<ExtReal>, InfoError> {
    let chain = induce_chain(mdp, policy)?;
    Ok(mdp
        .states()
        .map(|s| {
            if mdp.is_observed(s) {
                let row: Vec<f64> = chain.row(s).iter().map(|&(_, p)| p).collect();
                mass_value(&row)
            } else {
                ExtReal::ZERO
            }
        })
        .collect())
}

/// Total information of one realized path, scored on its observed departures.
pub fn path_total_information(
    mdp: &Mdp,
    policy: &StationaryPolicy,
    path: &[usize],
) -> Result<ExtReal, InfoError> {
    let chain = induce_chain(mdp, policy)?;
    if path.first() != Some(&mdp.initial()) {
        return Err(InfoError::WrongStart);
    }
    for pair in path.windows(2) {
        if chain.prob(pair[0], pair[1]) <= 0.0 {
            return Err(InfoError::ImpossibleTransition {
                from: mdp.name(pair[0]).to_string(),
                to: mdp.name(pair[1]).to_string(),
            });
        }
    }
    let iota = state_informations(mdp, policy)?;
    Ok(path_score(&iota, path))
}

/// Sum of `iota[s_t]` over the departures of a path.
pub fn path_score(iota: &[ExtReal], path: &[usize]) -> ExtReal {
    path.iter()
        .take(path.len().saturating_sub(1))
        .map(|&s| iota[s])
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use proptest::prelude::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn transition_information_examples() {
        assert_eq!(transition_information(&[0.5, 0.5]).unwrap(), ExtReal::finite(2.0));
        assert!(close(transition_information(&[0.9, 0.1]).unwrap().as_f64(), 1.0 / 0.18, 1e-14));
        assert_eq!(transition_information(&[1.0, 0.0]).unwrap(), ExtReal::Infinite);
        let third = 1.0 / 3.0;
        assert!(close(transition_information(&[third, third, third]).unwrap().as_f64(), 1.5, 1e-14));
        assert!(transition_information(&[0.5, 0.6]).is_err());
        assert!(transition_information(&[1.5, -0.5]).is_err());
    }

    #[test]
    fn term_values_example1() {
        let m = fixtures::example1();
        let s1 = InfoTerm::new(&m, 1);
        let v = info_term_value(&s1, &[0.19, 0.19]).unwrap().as_f64();
        assert!(close(v, 0.76, 1e-14));
        assert_eq!(info_term_value(&s1, &[0.0, 0.0]).unwrap(), ExtReal::ZERO);
        let s0 = InfoTerm::new(&m, 0);
        assert_eq!(info_term_value(&s0, &[1.0, 0.0]).unwrap(), ExtReal::Infinite);
        assert!(matches!(
            info_term_value(&s0, &[-1.0, 0.0]),
            Err(InfoError::NegativeResidence { .. })
        ));
        assert!(matches!(info_term_gradient(&s0, &[1.0, 0.0]), Err(InfoError::NotDifferentiable)));
    }

    #[test]
    fn expected_information_example1() {
        let m = fixtures::example1();
        let p = StationaryPolicy::from_named(
            &m,
            &[("s0", "alpha", 0.38), ("s0", "beta", 0.62), ("s1", "alpha", 0.5), ("s1", "beta", 0.5)],
        )
        .unwrap();
        let want = 1.0 / (2.0 * 0.38 * 0.62) + 0.38 * 2.0;
        assert!(close(expected_total_information(&m, &p).unwrap().as_f64(), want, 1e-12));

        let det = StationaryPolicy::from_named(
            &m,
            &[("s0", "alpha", 1.0), ("s0", "beta", 0.0), ("s1", "alpha", 1.0), ("s1", "beta", 0.0)],
        )
        .unwrap();
        assert_eq!(expected_total_information(&m, &det).unwrap(), ExtReal::Infinite);
    }

    #[test]
    fn recurrent_observed_state_is_infinite() {
        let m = fixtures::fig2();
        let p = StationaryPolicy::from_named(&m, &[("s1", "alpha", 0.0), ("s1", "beta", 1.0)]).unwrap();
        assert_eq!(expected_total_information(&m, &p).unwrap(), ExtReal::Infinite);
    }

    #[test]
    fn path_scores() {
        let m = fixtures::example1();
        let p = StationaryPolicy::from_named(
            &m,
            &[("s0", "alpha", 0.38), ("s0", "beta", 0.62), ("s1", "alpha", 0.5), ("s1", "beta", 0.5)],
        )
        .unwrap();
        let i0 = 1.0 / (2.0 * 0.38 * 0.62);
        let v = path_total_information(&m, &p, &[0, 1, 3, 3, 3]).unwrap().as_f64();
        assert!(close(v, i0 + 2.0, 1e-12));
        let v = path_total_information(&m, &p, &[0, 3, 3]).unwrap().as_f64();
        assert!(close(v, i0, 1e-12));
        assert!(matches!(
            path_total_information(&m, &p, &[0, 2]),
            Err(InfoError::ImpossibleTransition { .. })
        ));
        let line = fixtures::line3();
        let u = StationaryPolicy::uniform(&line);
        assert_eq!(path_total_information(&line, &u, &[0, 1, 2]).unwrap(), ExtReal::ZERO);
    }

    #[test]
    fn hessian_matches_finite_differences() {
        let y = [0.3, 1.2, 0.7];
        let h = mass_hessian(&y);
        let step = 1e-6;
        for r in 0..3 {
            let mut up = y;
            let mut dn = y;
            up[r] += step;
            dn[r] -= step;
            let gu = mass_gradient(&up);
            let gd = mass_gradient(&dn);
            for q in 0..3 {
                let fd = (gu[q] - gd[q]) / (2.0 * step);
                assert!(close(h[q * 3 + r], fd, 1e-6), "{q},{r}: {} vs {fd}", h[q * 3 + r]);
            }
        }
    }

    fn simplex(k: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, k).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn uniform_is_minimal(k in 2usize..6, seed in simplex(5)) {
            let p: Vec<f64> = {
                let v = &seed[..k];
                let s: f64 = v.iter().sum();
                v.iter().map(|x| x / s).collect()
            };
            let bound = k as f64 / (k as f64 - 1.0);
            let val = transition_information(&p).unwrap().as_f64();
            prop_assert!(val >= bound - 1e-9);
        }

        #[test]
        fn positively_homogeneous(y in prop::collection::vec(0.01f64..5.0, 2..5), c in 0.01f64..100.0) {
            let scaled: Vec<f64> = y.iter().map(|v| v * c).collect();
            let a = mass_value(&scaled).as_f64();
            let b = c * mass_value(&y).as_f64();
            prop_assert!((a - b).abs() <= 1e-10 * b.abs().max(1.0));
        }
    }
}
