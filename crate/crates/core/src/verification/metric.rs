//! Trajectory safety functional: −1 on any crash, otherwise progress along
//! the planned path in meters.

use serde::{Deserialize, Serialize};

use super::grid::{Cell, GridMap, ObstaclePose, Scenario};
use crate::dynamics::{ModelState, Platform};
use crate::error::{Error, Result};

pub const CRASH_VALUE: f64 = -1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafetyConfig {
    /// Agent–moving-obstacle separation at or below which a crash occurs.
    pub collision_radius: f64,
    /// Inflation of static obstacle cells for crash detection.
    pub obstacle_inflation: f64,
    /// Path cells count as passed within this distance of their center.
    pub capture_radius: f64,
}

impl SafetyConfig {
    pub fn for_platform(platform: Platform) -> Self {
        match platform {
            Platform::Robotarium => Self {
                collision_radius: 0.15,
                obstacle_inflation: 0.0,
                capture_radius: 0.14,
            },
            Platform::Quadruped => Self {
                collision_radius: 0.15,
                obstacle_inflation: 0.0,
                capture_radius: 0.35,
            },
        }
    }

    pub fn validate(&self, cell_size: f64) -> Result<()> {
        for (name, v) in [
            ("collision_radius", self.collision_radius),
            ("obstacle_inflation", self.obstacle_inflation),
            ("capture_radius", self.capture_radius),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("safety.{name} must be nonnegative, got {v}")));
            }
        }
        if self.capture_radius > 0.5 * cell_size || self.obstacle_inflation >= cell_size {
            return Err(Error::Config(
                "safety radii must be small relative to the grid cell".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SafetyValue {
    pub value: f64,
    pub crashed: bool,
    pub reached_goal: bool,
    pub steps_used: usize,
}

impl SafetyValue {
    pub fn is_safe(&self) -> bool {
        self.value >= 0.0
    }
}

/// Evaluates a state trace against its scenario. `traces[j]` holds the
/// moving-obstacle poses at tick `j` and must cover every state.
pub fn safety_metric(
    states: &[ModelState],
    scenario: &Scenario,
    path: &[Cell],
    traces: &[Vec<ObstaclePose>],
    config: &SafetyConfig,
) -> Result<SafetyValue> {
    let g = &scenario.geometry;
    config.validate(g.cell_size)?;
    let first = states
        .first()
        .ok_or_else(|| Error::Mismatch("trajectory has no states".into()))?;
    if path.first() != Some(&scenario.start_cell) || !path.iter().all(|c| g.contains_cell(*c)) {
        return Err(Error::Mismatch("planned path does not belong to this scenario's grid".into()));
    }
    let [cx, cy] = g.center(scenario.start_cell);
    let half = 0.5 * g.cell_size + 1e-9;
    if (first.x - cx).abs() > half || (first.y - cy).abs() > half {
        return Err(Error::Mismatch(format!(
            "initial state ({}, {}) is not in the start cell",
            first.x, first.y
        )));
    }
    let moving = scenario.moving_obstacles.len();
    if moving > 0 && (traces.len() < states.len() || traces.iter().any(|t| t.len() != moving)) {
        return Err(Error::Mismatch(format!(
            "obstacle traces cover {} ticks of {} obstacles; trajectory has {} states",
            traces.len(),
            moving,
            states.len()
        )));
    }

    let map = GridMap::new(scenario);
    let mut path_index = vec![usize::MAX; g.width as usize * g.height as usize];
    for (i, c) in path.iter().enumerate() {
        path_index[g.index(*c)] = i;
    }
    let mut crashed = false;
    let mut k = 0usize;
    for (j, s) in states.iter().enumerate() {
        let p = s.position();
        if map.hits_obstacle(p, config.obstacle_inflation) {
            crashed = true;
            break;
        }
        if moving > 0
            && traces[j]
                .iter()
                .any(|o| (o.x - p[0]).hypot(o.y - p[1]) <= config.collision_radius)
        {
            crashed = true;
            break;
        }
        if let Some(c) = g.cell_of(p) {
            let i = path_index[g.index(c)];
            if i != usize::MAX && i > k && s.planar_distance(g.center(c)) <= config.capture_radius {
                k = i;
            }
        }
    }
    let steps_used = states.len() - 1;
    if crashed {
        return Ok(SafetyValue {
            value: CRASH_VALUE,
            crashed: true,
            reached_goal: false,
            steps_used,
        });
    }
    Ok(SafetyValue {
        value: progress_value(k, g.cell_size),
        crashed: false,
        reached_goal: k + 1 == path.len(),
        steps_used,
    })
}

/// Cells passed, counting the start cell once the agent has captured any
/// later path cell, converted to meters.
pub fn progress_value(capture_index: usize, cell_size: f64) -> f64 {
    if capture_index == 0 {
        0.0
    } else {
        (capture_index + 1) as f64 * cell_size
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::verification::grid::{shortest_path, GridGeometry};

    fn l_shaped() -> (Scenario, Vec<Cell>) {
        let s = Scenario {
            geometry: GridGeometry {
                width: 4,
                height: 3,
                cell_size: 0.5,
                origin: [0.0, 0.0],
            },
            walls_are_obstacles: true,
            static_obstacles: vec![Cell::new(1, 0), Cell::new(1, 1), Cell::new(1, 2)],
            goals: vec![Cell::new(2, 3)],
            start_cell: Cell::new(0, 0),
            moving_obstacles: vec![],
            seed: 0,
        };
        let path = shortest_path(&s).unwrap();
        (s, path)
    }

    fn follow(s: &Scenario, path: &[Cell], per_leg: usize) -> Vec<ModelState> {
        let mut out = vec![];
        for w in path.windows(2) {
            let a = s.geometry.center(w[0]);
            let b = s.geometry.center(w[1]);
            for i in 0..per_leg {
                let t = i as f64 / per_leg as f64;
                out.push(ModelState::new(a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1]), 0.0));
            }
        }
        let end = s.geometry.center(*path.last().unwrap());
        out.push(ModelState::new(end[0], end[1], 0.0));
        out
    }

    fn cfg() -> SafetyConfig {
        SafetyConfig {
            collision_radius: 0.15,
            obstacle_inflation: 0.0,
            capture_radius: 0.2,
        }
    }

    #[test]
    fn full_l_path_is_three_meters() {
        let (s, path) = l_shaped();
        assert_eq!(path.len(), 6);
        let v = safety_metric(&follow(&s, &path, 10), &s, &path, &[], &cfg()).unwrap();
        assert_eq!(v.value, 3.0);
        assert!(v.reached_goal && !v.crashed);
    }

    #[test]
    fn staying_home_is_zero() {
        let (s, path) = l_shaped();
        let states = vec![ModelState::new(0.25, 0.25, 0.0); 50];
        let v = safety_metric(&states, &s, &path, &[], &cfg()).unwrap();
        assert_eq!(v.value, 0.0);
        assert!(v.is_safe() && !v.reached_goal);
        assert_eq!(v.steps_used, 49);
    }

    #[test]
    fn entering_obstacle_or_wall_crashes() {
        let (s, path) = l_shaped();
        let states = vec![ModelState::new(0.25, 0.25, 0.0), ModelState::new(0.25, 0.6, 0.0)];
        assert_eq!(safety_metric(&states, &s, &path, &[], &cfg()).unwrap().value, -1.0);
        let states = vec![ModelState::new(0.25, 0.25, 0.0), ModelState::new(0.25, -0.01, 0.0)];
        assert_eq!(safety_metric(&states, &s, &path, &[], &cfg()).unwrap().value, -1.0);
    }

    #[test]
    fn moving_obstacle_contact_crashes() {
        let (mut s, path) = l_shaped();
        s.moving_obstacles = vec![ObstaclePose { x: 1.5, y: 0.25, heading: 0.0 }];
        let states = vec![ModelState::new(0.25, 0.25, 0.0), ModelState::new(0.5, 0.25, 0.0)];
        let far = vec![vec![ObstaclePose { x: 1.5, y: 0.25, heading: 0.0 }]; 2];
        assert!(safety_metric(&states, &s, &path, &far, &cfg()).unwrap().is_safe());
        let near = vec![far[0].clone(), vec![ObstaclePose { x: 0.6, y: 0.3, heading: 0.0 }]];
        assert_eq!(safety_metric(&states, &s, &path, &near, &cfg()).unwrap().value, -1.0);
        assert!(matches!(
            safety_metric(&states, &s, &path, &far[..1], &cfg()),
            Err(Error::Mismatch(_))
        ));
    }

    #[test]
    fn mismatched_inputs_are_rejected() {
        let (s, path) = l_shaped();
        let off = vec![ModelState::new(1.75, 1.25, 0.0)];
        assert!(matches!(safety_metric(&off, &s, &path, &[], &cfg()), Err(Error::Mismatch(_))));
        assert!(matches!(safety_metric(&[], &s, &path, &[], &cfg()), Err(Error::Mismatch(_))));
        let foreign = vec![Cell::new(0, 0), Cell::new(0, 9)];
        let home = vec![ModelState::new(0.25, 0.25, 0.0)];
        assert!(matches!(safety_metric(&home, &s, &foreign, &[], &cfg()), Err(Error::Mismatch(_))));
    }

    #[test]
    fn progress_is_monotone_in_path_order() {
        let (s, path) = l_shaped();
        let mut states = follow(&s, &path[..4], 10);
        let back = s.geometry.center(path[1]);
        states.push(ModelState::new(back[0], back[1], 0.0));
        let v = safety_metric(&states, &s, &path, &[], &cfg()).unwrap();
        assert_eq!(v.value, 4.0 * 0.5);
    }
}
