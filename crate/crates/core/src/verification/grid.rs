//! Grid-world scenarios: randomized obstacle/goal/start layouts and
//! 4-connected shortest paths.

use std::collections::VecDeque;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{Platform, StateBox};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Cell {
    pub row: u32,
    pub col: u32,
}

impl Cell {
    pub const fn new(row: u32, col: u32) -> Self {
        Self { row, col }
    }
}

/// Randomized scenario family: how many of each element go on the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThetaSpec {
    pub width: u32,
    pub height: u32,
    pub static_obstacles: u32,
    pub goals: u32,
    pub moving_obstacles: u32,
    /// Whether leaving the workspace counts as a crash.
    pub walls_are_obstacles: bool,
    /// Rejected layouts tolerated before giving up.
    pub max_attempts: usize,
    /// Minimum spawn distance of moving obstacles from the start cell center.
    pub spawn_clearance: f64,
    /// Initial positions keep this clearance from the start cell's edges
    /// (the robot footprint).
    pub start_margin: f64,
}

impl ThetaSpec {
    pub fn for_platform(platform: Platform) -> Self {
        match platform {
            Platform::Robotarium => Self {
                width: 8,
                height: 5,
                static_obstacles: 10,
                goals: 3,
                moving_obstacles: 3,
                walls_are_obstacles: true,
                max_attempts: 10_000,
                spawn_clearance: 0.8,
                start_margin: 0.05,
            },
            Platform::Quadruped => Self {
                width: 5,
                height: 5,
                static_obstacles: 5,
                goals: 1,
                moving_obstacles: 0,
                walls_are_obstacles: false,
                max_attempts: 10_000,
                spawn_clearance: 1.0,
                start_margin: 0.1,
            },
        }
    }

    pub fn cell_count(&self) -> usize {
        self.width as usize * self.height as usize
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Config("grid must have at least one cell".into()));
        }
        if self.goals == 0 {
            return Err(Error::Config("at least one goal is required".into()));
        }
        if self.max_attempts == 0 {
            return Err(Error::Config("max_attempts must be at least 1".into()));
        }
        if !(self.spawn_clearance >= 0.0) {
            return Err(Error::Config("spawn_clearance must be nonnegative".into()));
        }
        if !(self.start_margin >= 0.0) {
            return Err(Error::Config("start_margin must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Placement of the grid in the workspace. Cells are square; row 0 is at
/// `y_min`, column 0 at `x_min`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridGeometry {
    pub width: u32,
    pub height: u32,
    pub cell_size: f64,
    pub origin: [f64; 2],
}

impl GridGeometry {
    /// Tiles `bounds` with `spec.width × spec.height` square cells.
    pub fn fit(spec: &ThetaSpec, bounds: &StateBox) -> Result<Self> {
        spec.validate()?;
        let cw = bounds.width() / spec.width as f64;
        let ch = bounds.height() / spec.height as f64;
        if spec.start_margin >= 0.5 * cw.min(ch) {
            return Err(Error::Config("start_margin leaves no room in the start cell".into()));
        }
        if (cw - ch).abs() > 1e-9 * cw.max(ch) {
            return Err(Error::Config(format!(
                "grid {}x{} does not tile the workspace with square cells ({cw} vs {ch})",
                spec.width, spec.height
            )));
        }
        Ok(Self {
            width: spec.width,
            height: spec.height,
            cell_size: cw,
            origin: [bounds.x_min, bounds.y_min],
        })
    }

    pub fn bounds(&self) -> StateBox {
        StateBox {
            x_min: self.origin[0],
            x_max: self.origin[0] + self.width as f64 * self.cell_size,
            y_min: self.origin[1],
            y_max: self.origin[1] + self.height as f64 * self.cell_size,
        }
    }

    pub fn contains_cell(&self, cell: Cell) -> bool {
        cell.row < self.height && cell.col < self.width
    }

    pub fn index(&self, cell: Cell) -> usize {
        cell.row as usize * self.width as usize + cell.col as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        Cell::new(
            (index / self.width as usize) as u32,
            (index % self.width as usize) as u32,
        )
    }

    pub fn center(&self, cell: Cell) -> [f64; 2] {
        [
            self.origin[0] + (cell.col as f64 + 0.5) * self.cell_size,
            self.origin[1] + (cell.row as f64 + 0.5) * self.cell_size,
        ]
    }

    /// Signed (row, col) of the cell containing `p`, possibly off-grid.
    pub fn raw_cell(&self, p: [f64; 2]) -> (i64, i64) {
        (
            ((p[1] - self.origin[1]) / self.cell_size).floor() as i64,
            ((p[0] - self.origin[0]) / self.cell_size).floor() as i64,
        )
    }

    pub fn cell_of(&self, p: [f64; 2]) -> Option<Cell> {
        let (r, c) = self.raw_cell(p);
        if r >= 0 && c >= 0 && (r as u32) < self.height && (c as u32) < self.width {
            Some(Cell::new(r as u32, c as u32))
        } else {
            None
        }
    }

    /// Neighbors in `(row, col)` order: up-row first, then left, right, down.
    pub fn neighbors(&self, cell: Cell) -> impl Iterator<Item = Cell> + '_ {
        let r = cell.row as i64;
        let c = cell.col as i64;
        [(r - 1, c), (r, c - 1), (r, c + 1), (r + 1, c)]
            .into_iter()
            .filter(move |&(r, c)| {
                r >= 0 && c >= 0 && (r as u32) < self.height && (c as u32) < self.width
            })
            .map(|(r, c)| Cell::new(r as u32, c as u32))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObstaclePose {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

impl ObstaclePose {
    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }
}

/// One randomized test case `θ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub geometry: GridGeometry,
    pub walls_are_obstacles: bool,
    /// Sorted by `(row, col)`.
    pub static_obstacles: Vec<Cell>,
    pub goals: Vec<Cell>,
    pub start_cell: Cell,
    pub moving_obstacles: Vec<ObstaclePose>,
    pub seed: u64,
}

impl Scenario {
    pub fn blocked_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.geometry.width as usize * self.geometry.height as usize];
        for c in &self.static_obstacles {
            mask[self.geometry.index(*c)] = true;
        }
        mask
    }

    pub fn is_goal(&self, cell: Cell) -> bool {
        self.goals.contains(&cell)
    }

    /// Elements lie on the grid and are pairwise disjoint.
    pub fn is_well_formed(&self) -> bool {
        let g = &self.geometry;
        let mut all: Vec<Cell> = self.static_obstacles.clone();
        all.extend(&self.goals);
        all.push(self.start_cell);
        if !all.iter().all(|c| g.contains_cell(*c)) {
            return false;
        }
        let n = all.len();
        all.sort();
        all.dedup();
        all.len() == n
    }

    /// Uniform initial pose inside the start cell, `margin` away from its
    /// edges, with uniform heading.
    pub fn sample_start_pose<R: Rng + ?Sized>(&self, margin: f64, rng: &mut R) -> [f64; 3] {
        let half = 0.5 * self.geometry.cell_size - margin;
        let [cx, cy] = self.geometry.center(self.start_cell);
        [
            cx + rng.gen_range(-half..=half),
            cy + rng.gen_range(-half..=half),
            rng.gen_range(0.0..std::f64::consts::TAU),
        ]
    }
}

/// Breadth-first search from `from` to the nearest cell in `goals` through
/// unblocked cells. Neighbors are expanded in `(row, col)` order, which fixes
/// the tie-breaking.
pub fn bfs_path(
    geometry: &GridGeometry,
    blocked: &[bool],
    from: Cell,
    goals: &[Cell],
) -> Option<Vec<Cell>> {
    let n = geometry.width as usize * geometry.height as usize;
    if !geometry.contains_cell(from) || blocked[geometry.index(from)] {
        return None;
    }
    let mut is_goal = vec![false; n];
    for g in goals {
        if geometry.contains_cell(*g) {
            is_goal[geometry.index(*g)] = true;
        }
    }
    let mut parent = vec![usize::MAX; n];
    let start = geometry.index(from);
    parent[start] = start;
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        if is_goal[i] {
            let mut path = vec![geometry.cell_at(i)];
            let mut j = i;
            while parent[j] != j {
                j = parent[j];
                path.push(geometry.cell_at(j));
            }
            path.reverse();
            return Some(path);
        }
        for nb in geometry.neighbors(geometry.cell_at(i)) {
            let k = geometry.index(nb);
            if !blocked[k] && parent[k] == usize::MAX {
                parent[k] = i;
                queue.push_back(k);
            }
        }
    }
    None
}

/// Shortest 4-connected path from the start cell to the nearest goal,
/// inclusive of both ends.
pub fn shortest_path(scenario: &Scenario) -> Result<Vec<Cell>> {
    bfs_path(
        &scenario.geometry,
        &scenario.blocked_mask(),
        scenario.start_cell,
        &scenario.goals,
    )
    .ok_or(Error::Infeasible)
}

/// Rejection-samples a feasible layout, then spawns moving obstacles at
/// uniform free poses.
pub fn sample_scenario<R: Rng + ?Sized>(
    spec: &ThetaSpec,
    geometry: &GridGeometry,
    seed: u64,
    rng: &mut R,
) -> Result<Scenario> {
    spec.validate()?;
    let n = spec.cell_count();
    let need = spec.static_obstacles as usize + spec.goals as usize + 1;
    if need > n {
        return Err(Error::RejectionBudget { attempts: 0 });
    }
    for _ in 0..spec.max_attempts {
        let picks = index::sample(rng, n, need).into_vec();
        let (obstacles, rest) = picks.split_at(spec.static_obstacles as usize);
        let (goals, start) = rest.split_at(spec.goals as usize);
        let mut static_obstacles: Vec<Cell> = obstacles.iter().map(|&i| geometry.cell_at(i)).collect();
        static_obstacles.sort();
        let mut goals: Vec<Cell> = goals.iter().map(|&i| geometry.cell_at(i)).collect();
        goals.sort();
        let mut scenario = Scenario {
            geometry: *geometry,
            walls_are_obstacles: spec.walls_are_obstacles,
            static_obstacles,
            goals,
            start_cell: geometry.cell_at(start[0]),
            moving_obstacles: Vec::new(),
            seed,
        };
        if shortest_path(&scenario).is_err() {
            continue;
        }
        let blocked = scenario.blocked_mask();
        let bounds = geometry.bounds();
        let start_center = geometry.center(scenario.start_cell);
        for _ in 0..spec.moving_obstacles {
            let mut placed = None;
            for _ in 0..spec.max_attempts {
                let p = bounds.sample(rng);
                let free = geometry
                    .cell_of(p)
                    .is_some_and(|c| !blocked[geometry.index(c)] && c != scenario.start_cell);
                let far = (p[0] - start_center[0]).hypot(p[1] - start_center[1])
                    >= spec.spawn_clearance;
                if free && far {
                    placed = Some(ObstaclePose {
                        x: p[0],
                        y: p[1],
                        heading: rng.gen_range(0.0..std::f64::consts::TAU),
                    });
                    break;
                }
            }
            match placed {
                Some(pose) => scenario.moving_obstacles.push(pose),
                None => {
                    return Err(Error::RejectionBudget {
                        attempts: spec.max_attempts,
                    })
                }
            }
        }
        return Ok(scenario);
    }
    Err(Error::RejectionBudget {
        attempts: spec.max_attempts,
    })
}

/// Occupancy queries against the static layout, with inflation.
#[derive(Debug, Clone)]
pub struct GridMap {
    pub geometry: GridGeometry,
    blocked: Vec<bool>,
    walls: bool,
}

impl GridMap {
    pub fn new(scenario: &Scenario) -> Self {
        Self {
            geometry: scenario.geometry,
            blocked: scenario.blocked_mask(),
            walls: scenario.walls_are_obstacles,
        }
    }

    pub fn blocked_mask(&self) -> &[bool] {
        &self.blocked
    }

    pub fn is_blocked(&self, cell: Cell) -> bool {
        self.blocked[self.geometry.index(cell)]
    }

    /// True if `p` lies within `margin` of a static obstacle cell, or of the
    /// workspace boundary when walls count as obstacles. `margin` must be
    /// smaller than one cell.
    pub fn hits_obstacle(&self, p: [f64; 2], margin: f64) -> bool {
        let g = &self.geometry;
        if self.walls {
            let b = g.bounds();
            if p[0] <= b.x_min + margin
                || p[0] >= b.x_max - margin
                || p[1] <= b.y_min + margin
                || p[1] >= b.y_max - margin
            {
                return true;
            }
        }
        let (r0, c0) = g.raw_cell(p);
        for dr in -1..=1 {
            for dc in -1..=1 {
                let (r, c) = (r0 + dr, c0 + dc);
                if r < 0 || c < 0 || r >= g.height as i64 || c >= g.width as i64 {
                    continue;
                }
                let cell = Cell::new(r as u32, c as u32);
                if !self.is_blocked(cell) {
                    continue;
                }
                let x0 = g.origin[0] + c as f64 * g.cell_size;
                let y0 = g.origin[1] + r as f64 * g.cell_size;
                let dx = (x0 - p[0]).max(p[0] - (x0 + g.cell_size)).max(0.0);
                let dy = (y0 - p[1]).max(p[1] - (y0 + g.cell_size)).max(0.0);
                if dx.hypot(dy) <= margin {
                    return true;
                }
            }
        }
        false
    }

    /// Distance along the ray from `p` at `heading` before it comes within
    /// `margin` of an obstacle, capped at `max_len`.
    pub fn free_length(&self, p: [f64; 2], heading: f64, max_len: f64, margin: f64) -> f64 {
        let step = (self.geometry.cell_size * 0.05).min(0.02);
        let (s, c) = heading.sin_cos();
        let mut t = 0.0;
        while t < max_len {
            let next = (t + step).min(max_len);
            if self.hits_obstacle([p[0] + next * c, p[1] + next * s], margin) {
                return t;
            }
            t = next;
        }
        max_len
    }
}
