use std::path::PathBuf;

use mininfo::components::check_assumption1;
use mininfo::synthesis::{synthesize, Mode, SolverOptions, Status};
use mininfo::worlds::{build_grid_mdp, export_heatmap, four_region, tile_name, FourRegion, GridSpec, WorldError};

fn data(name: &str) -> String {
    let path: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "data", name].iter().collect();
    std::fs::read_to_string(path).unwrap()
}

#[test]
fn data_specs_match_generators() {
    for (file, scenario) in [
        ("four_region.spec.json", FourRegion::Observed),
        ("four_region_hidden.spec.json", FourRegion::HiddenRegion),
        ("four_region_exit.spec.json", FourRegion::ExitPenalty),
    ] {
        let spec = GridSpec::from_json_str(&data(file)).unwrap();
        assert_eq!(spec, four_region(scenario), "{file}");
    }
}

#[test]
fn four_region_worlds_are_closed() {
    for scenario in [FourRegion::Observed, FourRegion::HiddenRegion, FourRegion::ExitPenalty] {
        let m = build_grid_mdp(&four_region(scenario)).unwrap();
        assert_eq!(m.num_states(), 1608);
        assert!(check_assumption1(&m), "{scenario:?}");
    }
}

#[test]
fn every_row_is_a_distribution() {
    let m = build_grid_mdp(&four_region(FourRegion::HiddenRegion)).unwrap();
    for s in m.states() {
        for a in m.actions(s) {
            assert!((a.row_sum() - 1.0).abs() < 1e-12, "{} {}", m.name(s), a.name);
        }
    }
}

#[test]
fn goal_on_a_blocked_tile_is_rejected() {
    let mut spec = GridSpec::open(4, 4, [0, 0], [3, 3]);
    spec.blocked_tiles.push([3, 3]);
    assert!(matches!(build_grid_mdp(&spec), Err(WorldError::Blocked { .. })));
    let mut spec = GridSpec::open(4, 4, [0, 0], [4, 3]);
    spec.slip = 0.1;
    assert!(matches!(build_grid_mdp(&spec), Err(WorldError::OutOfGrid { .. })));
}

#[test]
fn deterministic_grid_with_absorbing_traps() {
    let spec = GridSpec::from_json_str(&data("grid11.spec.json")).unwrap();
    let m = build_grid_mdp(&spec).unwrap();
    assert!(check_assumption1(&m));
    let closed = synthesize(&m, Mode::Closed, &SolverOptions::default()).unwrap();
    assert_eq!(closed.status, Status::Optimal);
    assert!(closed.reach_prob >= spec.threshold - 1e-6);
    let switch = synthesize(&m, Mode::Switch, &SolverOptions::default()).unwrap();
    assert!(switch.objective.as_f64() <= closed.objective.as_f64() * (1.0 + 1e-6));
}

#[test]
fn hiding_tiles_lowers_information() {
    let mut spec = GridSpec::open(5, 5, [0, 0], [4, 4]);
    let open = synthesize(&build_grid_mdp(&spec).unwrap(), Mode::Closed, &SolverOptions::default()).unwrap();
    spec.unobserved_tiles = (0..5).map(|r| [2, r]).collect();
    let hidden = synthesize(&build_grid_mdp(&spec).unwrap(), Mode::Closed, &SolverOptions::default()).unwrap();
    assert!(hidden.objective.as_f64() < open.objective.as_f64());
}

#[test]
fn heatmap_rows_follow_states() {
    let spec = GridSpec::open(3, 2, [0, 0], [2, 1]);
    let m = build_grid_mdp(&spec).unwrap();
    let values: Vec<f64> = m.states().map(|s| s as f64).collect();
    let csv = export_heatmap(&m, &values).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("col,row,value"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 6);
    let s = m.state_index(&tile_name([1, 1])).unwrap();
    assert!(rows.contains(&format!("1,1,{s}").as_str()));
    assert!(matches!(export_heatmap(&m, &values[..3]), Err(WorldError::Dimension { .. })));
}
