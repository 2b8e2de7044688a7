//! Small reference MDPs used throughout the tests, the CLI data files and the
//! browser demo.
//!
//! Actions are named `alpha` and `beta`. Observed states are listed per model.

use crate::mdp::{Mdp, MdpBuilder};

fn build(
    states: &[&str],
    observed: &[&str],
    targets: &[&str],
    threshold: f64,
    transitions: &[(&str, &str, &[(&str, f64)])],
) -> Mdp {
    let mut b = MdpBuilder::new();
    b.states(states).expect("fixture states are distinct");
    for &(from, action, to) in transitions {
        b.add_action(from, action, to).expect("fixture transition");
    }
    b.set_initial(states[0]).expect("fixture initial");
    for s in observed {
        b.observe(s).expect("fixture observed");
    }
    for s in targets {
        b.target(s).expect("fixture target");
    }
    b.threshold(threshold);
    b.build().expect("fixture build")
}

/// Four states; `s0` branches to observed `s1` or absorbing `s3`, `s1`
/// branches to absorbing `s2` or `s3`. Observed: `s0`, `s1`.
pub fn example1() -> Mdp {
    build(
        &["s0", "s1", "s2", "s3"],
        &["s0", "s1"],
        &["s2", "s3"],
        0.0,
        &[
            ("s0", "alpha", &[("s1", 1.0)]),
            ("s0", "beta", &[("s3", 1.0)]),
            ("s1", "alpha", &[("s2", 1.0)]),
            ("s1", "beta", &[("s3", 1.0)]),
            ("s2", "alpha", &[("s2", 1.0)]),
            ("s3", "alpha", &[("s3", 1.0)]),
        ],
    )
}

/// Five states with an observed self-loop at `s1`, an unobserved absorbing
/// `s2` and an observed two-state cycle `s3 <-> s4`. Observed: `s1`, `s4`.
pub fn fig2() -> Mdp {
    build(
        &["s0", "s1", "s2", "s3", "s4"],
        &["s1", "s4"],
        &["s2"],
        0.0,
        &[
            ("s0", "alpha", &[("s1", 1.0)]),
            ("s0", "beta", &[("s3", 1.0)]),
            ("s1", "alpha", &[("s2", 1.0)]),
            ("s1", "beta", &[("s1", 1.0)]),
            ("s2", "beta", &[("s2", 1.0)]),
            ("s3", "alpha", &[("s4", 1.0)]),
            ("s4", "alpha", &[("s3", 1.0)]),
            ("s4", "beta", &[("s4", 1.0)]),
        ],
    )
}

/// Three states where both observed states are visited under every
/// stationary policy. Observed: `s0`, `s1`.
pub fn fig4a() -> Mdp {
    build(
        &["s0", "s1", "s2"],
        &["s0", "s1"],
        &["s2"],
        1.0,
        &[
            ("s0", "alpha", &[("s1", 1.0)]),
            ("s0", "beta", &[("s0", 0.9), ("s1", 0.1)]),
            ("s1", "alpha", &[("s2", 1.0)]),
            ("s1", "beta", &[("s0", 1.0)]),
            ("s2", "alpha", &[("s2", 1.0)]),
        ],
    )
}

/// Six states with an unobserved, non-closed cycle `s1 <-> s2` in front of
/// the observed `s3`. Observed: `s3`.
pub fn fig5a() -> Mdp {
    build(
        &["s0", "s1", "s2", "s3", "s4", "s5"],
        &["s3"],
        &["s4", "s5"],
        0.5,
        &[
            ("s0", "alpha", &[("s1", 1.0)]),
            ("s1", "alpha", &[("s2", 1.0)]),
            ("s1", "beta", &[("s3", 1.0)]),
            ("s2", "alpha", &[("s1", 1.0)]),
            ("s3", "alpha", &[("s4", 0.5), ("s5", 0.5)]),
            ("s4", "alpha", &[("s4", 1.0)]),
            ("s5", "alpha", &[("s5", 1.0)]),
        ],
    )
}

/// [`fig5a`] plus a `beta` self-loop at `s2`.
pub fn fig5b() -> Mdp {
    build(
        &["s0", "s1", "s2", "s3", "s4", "s5"],
        &["s3"],
        &["s4", "s5"],
        0.5,
        &[
            ("s0", "alpha", &[("s1", 1.0)]),
            ("s1", "alpha", &[("s2", 1.0)]),
            ("s1", "beta", &[("s3", 1.0)]),
            ("s2", "alpha", &[("s1", 1.0)]),
            ("s2", "beta", &[("s2", 1.0)]),
            ("s3", "alpha", &[("s4", 0.5), ("s5", 0.5)]),
            ("s4", "alpha", &[("s4", 1.0)]),
            ("s5", "alpha", &[("s5", 1.0)]),
        ],
    )
}

/// Deterministic three-state chain `s0 -> s1 -> s2` with `s2` absorbing.
pub fn line3() -> Mdp {
    build(
        &["s0", "s1", "s2"],
        &[],
        &["s2"],
        1.0,
        &[
            ("s0", "go", &[("s1", 1.0)]),
            ("s1", "go", &[("s2", 1.0)]),
            ("s2", "stay", &[("s2", 1.0)]),
        ],
    )
}

/// All named fixtures, for data-file generation and demos.
pub fn all() -> Vec<(&'static str, Mdp)> {
    vec![
        ("example1", example1()),
        ("fig2", fig2()),
        ("fig4a", fig4a()),
        ("fig5a", fig5a()),
        ("fig5b", fig5b()),
    ]
}
