//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; the same functions are callable natively for testing.

use mininfo::adversary::cramer_rao_bounds;
use mininfo::components::check_assumption1;
use mininfo::fixtures;
use mininfo::information::expected_total_information;
use mininfo::synthesis::{synthesize, Mode, SolverOptions};
use mininfo::worlds::{build_grid_mdp, GridSpec};
use mininfo::{ExtReal, Mdp, StationaryPolicy};
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Serialize)]
struct Point {
    p: f64,
    information: ExtReal,
}

#[derive(Serialize)]
struct Tradeoff {
    curve: Vec<Point>,
    optimum: Point,
}

fn example1_policy(mdp: &Mdp, p: f64) -> Result<StationaryPolicy, String> {
    StationaryPolicy::from_named(
        mdp,
        &[("s0", "alpha", p), ("s0", "beta", 1.0 - p), ("s1", "alpha", 0.5), ("s1", "beta", 0.5)],
    )
    .map_err(|e| e.to_string())
}

/// Expected total information of the first example along `pi(s0, alpha)`,
/// with the synthesized optimum.
pub fn tradeoff(points: usize) -> Result<String, String> {
    let mdp = fixtures::example1();
    let points = points.clamp(2, 1000);
    let mut curve = Vec::with_capacity(points);
    for k in 0..points {
        let p = k as f64 / (points - 1) as f64;
        let policy = example1_policy(&mdp, p)?;
        let information = expected_total_information(&mdp, &policy).map_err(|e| e.to_string())?;
        curve.push(Point { p, information });
    }
    let s = synthesize(&mdp, Mode::Closed, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let policy = s.policy.ok_or("no policy")?;
    let optimum = Point {
        p: policy.prob(0, 0),
        information: s.objective,
    };
    serde_json::to_string(&Tradeoff { curve, optimum }).map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct Heatmap {
    width: usize,
    height: usize,
    status: String,
    objective: ExtReal,
    /// `[col, row, residence]`
    cells: Vec<(usize, usize, f64)>,
    observed: Vec<(usize, usize)>,
}

/// Residence-time heatmap of the minimum-information policy on an open grid
/// from the top-left to the bottom-right corner. The rectangle
/// `[c0, c1] x [r0, r1]` is unobserved; pass `c1 < c0` for none.
pub fn heatmap(width: usize, height: usize, slip: f64, c0: usize, r0: usize, c1: usize, r1: usize) -> Result<String, String> {
    if !(2..=30).contains(&width) || !(2..=30).contains(&height) {
        return Err("grid sides must lie in 2..=30".into());
    }
    let mut spec = GridSpec::open(width, height, [0, 0], [width - 1, height - 1]);
    spec.slip = slip;
    if c1 >= c0 && r1 >= r0 {
        for c in c0..=c1.min(width - 1) {
            for r in r0..=r1.min(height - 1) {
                spec.unobserved_tiles.push([c, r]);
            }
        }
    }
    let mdp = build_grid_mdp(&spec).map_err(|e| e.to_string())?;
    let mode = if check_assumption1(&mdp) { Mode::Closed } else { Mode::Switch };
    let s = synthesize(&mdp, mode, &SolverOptions::default()).map_err(|e| e.to_string())?;
    let x = s.solution.as_ref().map(|sol| sol.state_residence()).unwrap_or_default();
    let grid = mdp.grid().expect("generated MDPs carry a layout");
    let cells = grid
        .tiles
        .iter()
        .enumerate()
        .map(|(i, t)| (t[0], t[1], x.get(i).copied().unwrap_or(0.0)))
        .collect();
    let observed = mdp
        .observed_states()
        .into_iter()
        .map(|w| (grid.tiles[w][0], grid.tiles[w][1]))
        .collect();
    serde_json::to_string(&Heatmap {
        width,
        height,
        status: s.status.to_string(),
        objective: s.objective,
        cells,
        observed,
    })
    .map_err(|e| e.to_string())
}

#[derive(Serialize)]
struct BoundPoint {
    p: f64,
    information: ExtReal,
    per_state_sum: f64,
    corollary: f64,
}

/// Cramér-Rao bounds on the three-state example with two observed states,
/// along policies taking `alpha` with probability `p` at both.
pub fn bound_sweep(points: usize) -> Result<String, String> {
    let mdp = fixtures::fig4a();
    let points = points.clamp(2, 1000);
    let mut out = Vec::with_capacity(points);
    for p in sweep_points(points) {
        let policy = StationaryPolicy::from_named(
            &mdp,
            &[("s0", "alpha", p), ("s0", "beta", 1.0 - p), ("s1", "alpha", p), ("s1", "beta", 1.0 - p)],
        )
        .map_err(|e| e.to_string())?;
        let b = cramer_rao_bounds(&mdp, &policy).map_err(|e| e.to_string())?;
        out.push(BoundPoint {
            p,
            information: b.expected_information,
            per_state_sum: b.sum,
            corollary: b.corollary,
        });
    }
    serde_json::to_string(&out).map_err(|e| e.to_string())
}

/// Evenly spaced interior probabilities in `[0.025, 0.975]`.
pub fn sweep_points(points: usize) -> Vec<f64> {
    (0..points)
        .map(|k| 0.025 + 0.95 * k as f64 / (points - 1) as f64)
        .collect()
}

#[wasm_bindgen(js_name = tradeoff)]
pub fn tradeoff_js(points: usize) -> Result<String, JsError> {
    tradeoff(points).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = heatmap)]
pub fn heatmap_js(width: usize, height: usize, slip: f64, c0: usize, r0: usize, c1: usize, r1: usize) -> Result<String, JsError> {
    heatmap(width, height, slip, c0, r0, c1, r1).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = boundSweep)]
pub fn bound_sweep_js(points: usize) -> Result<String, JsError> {
    bound_sweep(points).map_err(|e| JsError::new(&e))
}
