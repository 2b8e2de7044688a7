//! Grid-world generators and heatmap export.
//!
//! Tiles are addressed as `[col, row]` with row 0 at the top. Every tile that
//! is not blocked becomes a state named `x{col}y{row}` with the actions `up`,
//! `down`, `left` and `right`. The intended direction gets `1 - slip` and each
//! other direction `slip / 3`. Directions leaving the grid, entering a
//! blocked tile or crossing a wall are dropped and the remaining masses are
//! renormalized. With `slip == 0` an action whose direction is dropped is
//! removed instead. The goal and absorbing tiles only have a `stay`
//! self-loop.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mdp::{Mdp, MdpBuilder, ModelError};
use crate::synthesis::GroupPenalty;

pub type Tile = [usize; 2];

const DIRECTIONS: [(&str, isize, isize); 4] = [("up", 0, -1), ("down", 0, 1), ("left", -1, 0), ("right", 1, 0)];

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("{what} tile [{col}, {row}] lies outside the {width}x{height} grid")]
    OutOfGrid {
        what: &'static str,
        col: usize,
        row: usize,
        width: usize,
        height: usize,
    },
    #[error("{what} tile [{col}, {row}] is blocked")]
    Blocked { what: &'static str, col: usize, row: usize },
    #[error("slip must lie in [0, 1), got {0}")]
    Slip(f64),
    #[error("tile [{col}, {row}] has no action")]
    Stuck { col: usize, row: usize },
    #[error("exit group refers to unknown region {0:?}")]
    UnknownRegion(String),
    #[error("bridge [{col}, {row}] does not touch region {region:?}")]
    BridgeNotAdjacent { region: String, col: usize, row: usize },
    #[error("the MDP carries no grid layout")]
    NotGrid,
    #[error("expected {expected} values, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Rectangle of tiles, both corners inclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub from: Tile,
    pub to: Tile,
}

impl Region {
    pub fn contains(&self, [c, r]: Tile) -> bool {
        (self.from[0]..=self.to[0]).contains(&c) && (self.from[1]..=self.to[1]).contains(&r)
    }
}

/// Grouped penalty over the residence times of the bridges of a region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExitGroup {
    pub region: String,
    pub bridges: Vec<Tile>,
    #[serde(default = "one")]
    pub weight: f64,
}

fn one() -> f64 {
    1.0
}

fn default_slip() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    #[serde(default = "default_slip")]
    pub slip: f64,
    pub initial: Tile,
    pub goal: Tile,
    /// pairs of adjacent tiles with a wall between them
    #[serde(default)]
    pub walls: Vec<[Tile; 2]>,
    /// tiles that are not states
    #[serde(default)]
    pub blocked_tiles: Vec<Tile>,
    #[serde(default)]
    pub bridges: Vec<Tile>,
    #[serde(default)]
    pub unobserved_tiles: Vec<Tile>,
    /// unobserved tiles with a single self-loop
    #[serde(default)]
    pub absorbing_tiles: Vec<Tile>,
    #[serde(default)]
    pub observe_bridges: bool,
    #[serde(default = "one")]
    pub threshold: f64,
    #[serde(default)]
    pub regions: Vec<Region>,
    #[serde(default)]
    pub exit_groups: Vec<ExitGroup>,
}

impl GridSpec {
    /// Open `width x height` grid with default slip and no obstacles.
    pub fn open(width: usize, height: usize, initial: Tile, goal: Tile) -> Self {
        GridSpec {
            width,
            height,
            slip: default_slip(),
            initial,
            goal,
            walls: Vec::new(),
            blocked_tiles: Vec::new(),
            bridges: Vec::new(),
            unobserved_tiles: Vec::new(),
            absorbing_tiles: Vec::new(),
            observe_bridges: false,
            threshold: 1.0,
            regions: Vec::new(),
            exit_groups: Vec::new(),
        }
    }

    pub fn from_json_str(text: &str) -> Result<Self, ModelError> {
        serde_json::from_str(text).map_err(ModelError::from)
    }
}

/// Tile coordinates of the states of a generated MDP.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridLayout {
    pub width: usize,
    pub height: usize,
    /// `tiles[s]` is the tile of state `s`
    pub tiles: Vec<Tile>,
}

pub fn tile_name([c, r]: Tile) -> String {
    format!("x{c}y{r}")
}

fn check_inside(spec: &GridSpec, what: &'static str, t: Tile) -> Result<(), WorldError> {
    if t[0] >= spec.width || t[1] >= spec.height {
        return Err(WorldError::OutOfGrid {
            what,
            col: t[0],
            row: t[1],
            width: spec.width,
            height: spec.height,
        });
    }
    Ok(())
}

pub fn build_grid_mdp(spec: &GridSpec) -> Result<Mdp, WorldError> {
    if !(0.0..1.0).contains(&spec.slip) {
        return Err(WorldError::Slip(spec.slip));
    }
    let blocked: BTreeSet<Tile> = spec.blocked_tiles.iter().copied().collect();
    let lists: [(&'static str, &[Tile]); 5] = [
        ("blocked", &spec.blocked_tiles),
        ("bridge", &spec.bridges),
        ("unobserved", &spec.unobserved_tiles),
        ("absorbing", &spec.absorbing_tiles),
        ("initial", std::slice::from_ref(&spec.initial)),
    ];
    for (what, tiles) in lists {
        for &t in tiles {
            check_inside(spec, what, t)?;
        }
    }
    check_inside(spec, "goal", spec.goal)?;
    for (what, t) in [("initial", spec.initial), ("goal", spec.goal)] {
        if blocked.contains(&t) {
            return Err(WorldError::Blocked { what, col: t[0], row: t[1] });
        }
    }
    for t in spec.bridges.iter().chain(&spec.unobserved_tiles).chain(&spec.absorbing_tiles) {
        if blocked.contains(t) {
            return Err(WorldError::Blocked {
                what: "listed",
                col: t[0],
                row: t[1],
            });
        }
    }
    let walls: BTreeSet<(Tile, Tile)> = spec
        .walls
        .iter()
        .flat_map(|&[a, b]| [(a, b), (b, a)])
        .collect();
    let absorbing: BTreeSet<Tile> = spec.absorbing_tiles.iter().copied().chain([spec.goal]).collect();
    let hidden: BTreeSet<Tile> = spec
        .unobserved_tiles
        .iter()
        .copied()
        .chain(absorbing.iter().copied())
        .chain(spec.bridges.iter().copied().filter(|_| !spec.observe_bridges))
        .collect();

    let mut tiles = Vec::new();
    for r in 0..spec.height {
        for c in 0..spec.width {
            if !blocked.contains(&[c, r]) {
                tiles.push([c, r]);
            }
        }
    }
    let mut b = MdpBuilder::new();
    for &t in &tiles {
        b.add_state(&tile_name(t))?;
    }
    let step = |[c, r]: Tile, dc: isize, dr: isize| -> Option<Tile> {
        let nc = c.checked_add_signed(dc)?;
        let nr = r.checked_add_signed(dr)?;
        let n = [nc, nr];
        (nc < spec.width && nr < spec.height && !blocked.contains(&n) && !walls.contains(&([c, r], n))).then_some(n)
    };
    for &t in &tiles {
        let name = tile_name(t);
        if absorbing.contains(&t) {
            b.add_action(&name, "stay", &[(&name, 1.0)])?;
            continue;
        }
        let mut any = false;
        for (i, &(action, _, _)) in DIRECTIONS.iter().enumerate() {
            let mut masses: Vec<(String, f64)> = Vec::new();
            let mut intended_open = false;
            for (j, &(_, dc, dr)) in DIRECTIONS.iter().enumerate() {
                let m = if i == j { 1.0 - spec.slip } else { spec.slip / 3.0 };
                if let Some(n) = step(t, dc, dr) {
                    intended_open |= i == j;
                    if m > 0.0 {
                        masses.push((tile_name(n), m));
                    }
                }
            }
            if (!intended_open && spec.slip == 0.0) || masses.is_empty() {
                continue;
            }
            let total: f64 = masses.iter().map(|(_, m)| m).sum();
            let to: Vec<(&str, f64)> = masses.iter().map(|(n, m)| (n.as_str(), m / total)).collect();
            b.add_action(&name, action, &to)?;
            any = true;
        }
        if !any {
            return Err(WorldError::Stuck { col: t[0], row: t[1] });
        }
    }
    b.set_initial(&tile_name(spec.initial))?;
    for &t in &tiles {
        if !hidden.contains(&t) {
            b.observe(&tile_name(t))?;
        }
    }
    b.target(&tile_name(spec.goal))?;
    b.threshold(spec.threshold);
    let mdp = b.build()?;
    Ok(mdp.with_grid(GridLayout {
        width: spec.width,
        height: spec.height,
        tiles,
    }))
}

/// Exit-information penalties of the spec as groups over bridge states.
pub fn exit_information_terms(spec: &GridSpec, mdp: &Mdp) -> Result<Vec<GroupPenalty>, WorldError> {
    let regions: BTreeMap<&str, &Region> = spec.regions.iter().map(|r| (r.id.as_str(), r)).collect();
    spec.exit_groups
        .iter()
        .map(|g| {
            let region = regions
                .get(g.region.as_str())
                .ok_or_else(|| WorldError::UnknownRegion(g.region.clone()))?;
            let states = g
                .bridges
                .iter()
                .map(|&t| {
                    let touches = region.contains(t)
                        || DIRECTIONS.iter().any(|&(_, dc, dr)| {
                            match (t[0].checked_add_signed(dc), t[1].checked_add_signed(dr)) {
                                (Some(c), Some(r)) => region.contains([c, r]),
                                _ => false,
                            }
                        });
                    if !touches {
                        return Err(WorldError::BridgeNotAdjacent {
                            region: g.region.clone(),
                            col: t[0],
                            row: t[1],
                        });
                    }
                    mdp.state_index(&tile_name(t))
                        .ok_or_else(|| ModelError::UnknownState(tile_name(t)).into())
                })
                .collect::<Result<Vec<usize>, WorldError>>()?;
            Ok(GroupPenalty { states, weight: g.weight })
        })
        .collect()
}

/// Heatmap CSV with header `col,row,value`, one row per state tile.
pub fn export_heatmap<V: std::fmt::Display>(mdp: &Mdp, values: &[V]) -> Result<String, WorldError> {
    let grid = mdp.grid().ok_or(WorldError::NotGrid)?;
    if values.len() != mdp.num_states() {
        return Err(WorldError::Dimension {
            expected: mdp.num_states(),
            got: values.len(),
        });
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["col", "row", "value"])?;
    for (t, v) in grid.tiles.iter().zip(values) {
        w.write_record([t[0].to_string(), t[1].to_string(), v.to_string()])?;
    }
    let bytes = w.into_inner().map_err(|e| WorldError::Csv(e.into_error().into()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

/// Scenario of the four-region world.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FourRegion {
    /// every tile observed except the goal and the bridges
    Observed,
    /// the top-right region is unobserved
    HiddenRegion,
    /// exit-information groups of weight 1 on every region
    ExitPenalty,
}

/// A 41x41 grid split into four 20x20 regions by a blocked middle column and
/// row, joined by two bridges per wall segment. The agent starts in the
/// top-left region and must reach the bottom-right corner region.
pub fn four_region(scenario: FourRegion) -> GridSpec {
    let n = 41;
    let mid = 20;
    let bridges: Vec<Tile> = vec![[mid, 5], [mid, 14], [mid, 26], [mid, 35], [5, mid], [14, mid], [26, mid], [35, mid]];
    let mut spec = GridSpec::open(n, n, [2, 2], [38, 38]);
    spec.blocked_tiles = (0..n)
        .flat_map(|i| [[mid, i], [i, mid]])
        .filter(|t| !bridges.contains(t))
        .collect::<BTreeSet<Tile>>()
        .into_iter()
        .collect();
    spec.bridges = bridges.clone();
    let rect = |id: &str, from: Tile, to: Tile| Region { id: id.into(), from, to };
    spec.regions = vec![
        rect("top_left", [0, 0], [19, 19]),
        rect("top_right", [21, 0], [40, 19]),
        rect("bottom_left", [0, 21], [19, 40]),
        rect("bottom_right", [21, 21], [40, 40]),
    ];
    match scenario {
        FourRegion::Observed => {}
        FourRegion::HiddenRegion => {
            spec.unobserved_tiles = (21..n).flat_map(|c| (0..mid).map(move |r| [c, r])).collect();
        }
        FourRegion::ExitPenalty => {
            let touching = |region: &Region| -> Vec<Tile> {
                bridges
                    .iter()
                    .copied()
                    .filter(|&[c, r]| {
                        DIRECTIONS.iter().any(|&(_, dc, dr)| {
                            region.contains([(c as isize + dc) as usize, (r as isize + dr) as usize])
                        })
                    })
                    .collect()
            };
            spec.exit_groups = spec
                .regions
                .iter()
                .map(|region| ExitGroup {
                    region: region.id.clone(),
                    bridges: touching(region),
                    weight: 1.0,
                })
                .collect();
        }
    }
    spec
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(mdp: &Mdp, tile: Tile, action: &str) -> Vec<(String, f64)> {
        let s = mdp.state_index(&tile_name(tile)).unwrap();
        let a = mdp.action_index(s, action).unwrap();
        mdp.actions(s)[a]
            .successors
            .iter()
            .map(|&(q, p)| (mdp.name(q).to_string(), p))
            .collect()
    }

    #[test]
    fn interior_tile_splits_slip_evenly() {
        let m = build_grid_mdp(&GridSpec::open(3, 3, [0, 0], [2, 2])).unwrap();
        let r = row(&m, [1, 1], "up");
        let p = |n: &str| r.iter().find(|(q, _)| q == n).unwrap().1;
        assert!((p("x1y0") - 0.8).abs() < 1e-12);
        for n in ["x1y2", "x0y1", "x2y1"] {
            assert!((p(n) - 0.2 / 3.0).abs() < 1e-12);
        }
    }

    #[test]
    fn corner_renormalizes_open_directions() {
        let m = build_grid_mdp(&GridSpec::open(3, 3, [0, 0], [2, 2])).unwrap();
        let r = row(&m, [0, 0], "right");
        assert_eq!(r.len(), 2);
        let right = r.iter().find(|(q, _)| q == "x1y0").unwrap().1;
        let expected = 0.8 / (0.8 + 0.2 / 3.0);
        assert!((right - expected).abs() < 1e-12);
        assert!((right - 0.923).abs() < 1e-3);
    }

    #[test]
    fn deterministic_mode_drops_blocked_actions() {
        let mut spec = GridSpec::open(3, 3, [0, 0], [2, 2]);
        spec.slip = 0.0;
        let m = build_grid_mdp(&spec).unwrap();
        let s = m.state_index("x0y0").unwrap();
        let names: Vec<&str> = m.actions(s).iter().map(|a| a.name.as_str()).collect();
        assert_eq!(names, vec!["down", "right"]);
        assert_eq!(row(&m, [0, 0], "down"), vec![("x0y1".to_string(), 1.0)]);
    }

    #[test]
    fn walls_and_blocked_tiles() {
        let mut spec = GridSpec::open(3, 1, [0, 0], [2, 0]);
        spec.slip = 0.0;
        spec.walls = vec![[[0, 0], [1, 0]]];
        assert!(matches!(build_grid_mdp(&spec), Err(WorldError::Stuck { col: 0, row: 0 })));
        let mut spec = GridSpec::open(3, 2, [0, 0], [2, 0]);
        spec.blocked_tiles = vec![[1, 0]];
        let m = build_grid_mdp(&spec).unwrap();
        assert_eq!(m.num_states(), 5);
        assert!(m.state_index("x1y0").is_none());
        spec.goal = [1, 0];
        assert!(matches!(build_grid_mdp(&spec), Err(WorldError::Blocked { what: "goal", .. })));
    }

    #[test]
    fn observation_and_absorption() {
        let mut spec = GridSpec::open(3, 3, [0, 0], [2, 2]);
        spec.unobserved_tiles = vec![[1, 1]];
        spec.absorbing_tiles = vec![[0, 2]];
        let m = build_grid_mdp(&spec).unwrap();
        let obs: Vec<&str> = m.observed_states().iter().map(|&s| m.name(s)).collect();
        assert_eq!(obs.len(), 6);
        assert!(!obs.contains(&"x1y1") && !obs.contains(&"x0y2") && !obs.contains(&"x2y2"));
        assert!(m.is_absorbing(m.state_index("x0y2").unwrap()));
        assert!(m.is_target(m.state_index("x2y2").unwrap()));
        assert!(crate::mdp::validate(&m).is_empty());
    }

    #[test]
    fn four_region_size() {
        let spec = four_region(FourRegion::Observed);
        let m = build_grid_mdp(&spec).unwrap();
        assert_eq!(m.num_states(), 41 * 41 - 81 + 8);
        assert!(crate::mdp::validate(&m).is_empty());
        let spec = four_region(FourRegion::ExitPenalty);
        let m = build_grid_mdp(&spec).unwrap();
        let groups = exit_information_terms(&spec, &m).unwrap();
        assert_eq!(groups.len(), 4);
        assert!(groups.iter().all(|g| g.states.len() == 4));
    }

    #[test]
    fn heatmap_lists_every_state() {
        let m = build_grid_mdp(&GridSpec::open(2, 2, [0, 0], [1, 1])).unwrap();
        let csv = export_heatmap(&m, &[1.0, 0.0, 0.5, 0.0]).unwrap();
        assert_eq!(csv, "col,row,value\n0,0,1\n1,0,0\n0,1,0.5\n1,1,0\n");
        assert!(matches!(
            export_heatmap(&crate::fixtures::example1(), &[0.0; 4]),
            Err(WorldError::NotGrid)
        ));
    }

    #[test]
    fn bridge_must_touch_region() {
        let mut spec = four_region(FourRegion::Observed);
        spec.exit_groups = vec![ExitGroup {
            region: "top_left".into(),
            bridges: vec![[35, 20]],
            weight: 1.0,
        }];
        let m = build_grid_mdp(&spec).unwrap();
        assert!(matches!(
            exit_information_terms(&spec, &m),
            Err(WorldError::BridgeNotAdjacent { .. })
        ));
    }
}
