//! Layered navigation controller: a waypoint planner over the grid, the
//! polar tracker underneath, and a safety layer that stops forward motion
//! near obstacles and steers around moving ones.

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use super::grid::{bfs_path, shortest_path, Cell, GridMap, ObstaclePose, Scenario};
use crate::dynamics::{wrap_angle, InputBox, ModelInput, ModelState, Platform};
use crate::error::{Error, Result};
use crate::gap::PolarTracker;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NavConfig {
    pub tracker: PolarTracker,
    /// A waypoint counts as reached within this distance of its cell center.
    pub capture_radius: f64,
    /// Distance to the goal center at which the controller stops.
    pub goal_tolerance: f64,
    /// Forward speed is scaled by `1 - |α| / heading_gate`, floored at 0.
    pub heading_gate: f64,
    /// Look-ahead distance of the stop layer.
    pub stop_radius: f64,
    /// Inflation of static obstacles seen by the stop layer and evasion.
    pub clearance_margin: f64,
    /// Moving obstacles closer than this trigger evasive steering.
    pub alert_radius: f64,
    /// Prediction horizon for scoring evasive headings, seconds.
    pub evade_horizon: f64,
    /// Predicted separation considered safe during evasion.
    pub safe_clearance: f64,
    /// Number of candidate headings tried during evasion.
    pub evade_headings: u32,
    /// Turn-rate gain toward an evasive heading.
    pub evade_gain: f64,
    /// Moving-obstacle radius used by the stop layer.
    pub obstacle_radius: f64,
    /// Growth rate of the region a moving obstacle may occupy, m/s.
    pub obstacle_speed: f64,
    /// Station-keeping gain while turning in place, 1/s.
    pub hold_gain: f64,
    /// Static-obstacle inflation and look-ahead used while evading.
    pub evade_margin: f64,
}

impl NavConfig {
    pub fn for_platform(platform: Platform) -> Self {
        match platform {
            Platform::Robotarium => Self {
                tracker: PolarTracker::default(),
                capture_radius: 0.12,
                goal_tolerance: 0.06,
                heading_gate: 1.0,
                stop_radius: 0.12,
                clearance_margin: 0.05,
                alert_radius: 0.7,
                evade_horizon: 2.0,
                safe_clearance: 0.25,
                evade_headings: 16,
                evade_gain: 3.0,
                obstacle_radius: 0.15,
                obstacle_speed: 0.05,
                hold_gain: 2.0,
                evade_margin: 0.05,
            },
            Platform::Quadruped => Self {
                tracker: PolarTracker::default(),
                capture_radius: 0.3,
                goal_tolerance: 0.15,
                heading_gate: 0.6,
                stop_radius: 0.35,
                clearance_margin: 0.12,
                alert_radius: 1.0,
                evade_horizon: 4.0,
                safe_clearance: 0.45,
                evade_headings: 16,
                evade_gain: 1.5,
                obstacle_radius: 0.15,
                obstacle_speed: 0.1,
                hold_gain: 1.0,
                evade_margin: 0.1,
            },
        }
    }

    pub fn validate(&self, cell_size: f64) -> Result<()> {
        let positive = [
            ("tracker.k_rho", self.tracker.k_rho),
            ("tracker.k_alpha", self.tracker.k_alpha),
            ("capture_radius", self.capture_radius),
            ("goal_tolerance", self.goal_tolerance),
            ("heading_gate", self.heading_gate),
            ("evade_horizon", self.evade_horizon),
            ("evade_gain", self.evade_gain),
            ("hold_gain", self.hold_gain),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("controller.{name} must be positive, got {v}")));
            }
        }
        let nonneg = [
            ("stop_radius", self.stop_radius),
            ("clearance_margin", self.clearance_margin),
            ("alert_radius", self.alert_radius),
            ("safe_clearance", self.safe_clearance),
            ("obstacle_radius", self.obstacle_radius),
            ("obstacle_speed", self.obstacle_speed),
            ("evade_margin", self.evade_margin),
        ];
        for (name, v) in nonneg {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("controller.{name} must be nonnegative, got {v}")));
            }
        }
        if self.clearance_margin >= cell_size || self.capture_radius > 0.5 * cell_size {
            return Err(Error::Config(
                "controller radii must be small relative to the grid cell".into(),
            ));
        }
        if self.evade_headings == 0 {
            return Err(Error::Config("controller.evade_headings must be at least 1".into()));
        }
        Ok(())
    }
}

/// Stateful navigation policy for one scenario.
#[derive(Debug, Clone)]
pub struct NavigationController {
    config: NavConfig,
    bounds: InputBox,
    map: GridMap,
    route: Vec<Cell>,
    next: usize,
    recenter: Option<Cell>,
    finished: bool,
}

impl NavigationController {
    pub fn new(scenario: &Scenario, config: NavConfig, bounds: InputBox) -> Result<Self> {
        config.validate(scenario.geometry.cell_size)?;
        let route = shortest_path(scenario)?;
        let next = usize::from(route.len() > 1);
        Ok(Self {
            config,
            bounds,
            map: GridMap::new(scenario),
            route,
            next,
            recenter: None,
            finished: false,
        })
    }

    pub fn finished(&self) -> bool {
        self.finished
    }

    /// Cells still to be visited, current target first.
    pub fn remaining_route(&self) -> &[Cell] {
        &self.route[self.next..]
    }

    fn center(&self, cell: Cell) -> [f64; 2] {
        self.map.geometry.center(cell)
    }

    pub fn command(&mut self, state: &ModelState, obstacles: &[ObstaclePose]) -> ModelInput {
        if self.finished {
            return ModelInput::ZERO;
        }
        let pos = state.position();
        let goal = *self.route.last().expect("route is never empty");
        if state.planar_distance(self.center(goal)) <= self.config.goal_tolerance {
            self.finished = true;
            return ModelInput::ZERO;
        }
        self.update_route(state);

        let target = match self.recenter {
            Some(cell) => self.center(cell),
            None => self.center(self.route[self.next]),
        };
        let remaining = (self.route.len() - 1 - self.next) as f64 * self.map.geometry.cell_size;
        let range = state.planar_distance(target) + remaining;
        let alpha = PolarTracker::bearing(state, target);
        let raw = self.config.tracker.raw_command(state, target, range, false);
        let gate = (1.0 - alpha.abs() / self.config.heading_gate).max(0.0);
        let v = if gate > 0.0 {
            raw.v.max(0.0).min(self.bounds.v_max) * gate
        } else {
            // Turning in place: hold station against drift by sliding along
            // the heading toward the center of the current cell.
            let anchor = self
                .map
                .geometry
                .cell_of(pos)
                .filter(|c| !self.map.is_blocked(*c))
                .map_or(target, |c| self.center(c));
            let (s, c) = state.theta.sin_cos();
            self.config.hold_gain * ((anchor[0] - pos[0]) * c + (anchor[1] - pos[1]) * s)
        };
        let mut u = self.bounds.saturate(ModelInput::new(v, raw.omega));

        let threats: Vec<&ObstaclePose> = obstacles
            .iter()
            .filter(|o| {
                (o.x - pos[0]).hypot(o.y - pos[1]) <= self.config.alert_radius
            })
            .collect();
        let evasive = if threats.is_empty() {
            None
        } else {
            self.evade(state, u, target, &threats)
        };
        match evasive {
            Some(e) => {
                // Escaping a moving obstacle may brush past static ones, so
                // only imminent contact stops it.
                u = e;
                if self.blocked_along(state, u.v, self.config.evade_margin, self.config.clearance_margin) {
                    u.v = 0.0;
                }
            }
            None => {
                if self.static_ahead(state, u.v) {
                    if self.recenter.is_none() && u.v > 0.0 {
                        self.recenter =
                            self.map.geometry.cell_of(pos).filter(|c| !self.map.is_blocked(*c));
                    }
                    u.v = 0.0;
                }
                if self.walker_ahead(state, u.v, obstacles) {
                    u.v = 0.0;
                }
            }
        }
        self.bounds.saturate(u)
    }

    fn update_route(&mut self, state: &ModelState) {
        let pos = state.position();
        let cell = self.map.geometry.cell_of(pos);
        if let Some(rc) = self.recenter {
            if cell != Some(rc) || state.planar_distance(self.center(rc)) <= 0.5 * self.config.capture_radius {
                self.recenter = None;
            }
        }
        let last = self.route.len() - 1;
        if let Some(c) = cell {
            if let Some(m) = self.route[self.next..].iter().position(|r| *r == c) {
                self.next += m;
            }
        }
        while self.next < last && state.planar_distance(self.center(self.route[self.next])) <= self.config.capture_radius {
            self.next += 1;
        }
        let Some(c) = cell else { return };
        if self.map.is_blocked(c) {
            return;
        }
        let on_route = self.route[self.next] == c || (self.next > 0 && self.route[self.next - 1] == c);
        if on_route {
            return;
        }
        let rest = &self.route[self.next..];
        if let Some(detour) = bfs_path(&self.map.geometry, self.map.blocked_mask(), c, rest) {
            let join = detour.last().copied().expect("bfs path is nonempty");
            let j = self.next + rest.iter().position(|r| *r == join).expect("detour ends on route");
            let mut route = detour;
            route.extend_from_slice(&self.route[j + 1..]);
            self.next = usize::from(route.len() > 1);
            self.route = route;
            self.recenter = None;
        }
    }

    /// Scores candidate directions of travel by their worst-case separation
    /// from the threatening obstacles (each may reach anywhere within
    /// `obstacle_speed · t` of where it is now) and picks the one that makes
    /// most progress among the safe ones, or the safest if none is. Keeps the
    /// nominal command when it is already safe. Travel may be forward or
    /// reversed, whichever needs the smaller turn.
    fn evade(
        &self,
        state: &ModelState,
        nominal: ModelInput,
        target: [f64; 2],
        threats: &[&ObstaclePose],
    ) -> Option<ModelInput> {
        let cfg = &self.config;
        let pos = state.position();
        let v_max = self.bounds.v_max;
        let w_max = self.bounds.omega_max.min(-self.bounds.omega_min).max(1e-9);
        let reach = v_max * cfg.evade_horizon;

        // Minimum over the horizon of the worst-case gap to any threat when
        // travelling along `direction` at `speed` after a `turn`-long pause.
        let clearance = |direction: f64, speed: f64, turn: f64, margin: f64| -> f64 {
            let free = if speed > 0.0 {
                self.map.free_length(pos, direction, reach, margin)
            } else {
                0.0
            };
            let (s, c) = direction.sin_cos();
            let mut worst = f64::INFINITY;
            let n = 20;
            for i in 0..=n {
                let t = cfg.evade_horizon * i as f64 / n as f64;
                let travel = (speed * (t - turn).max(0.0)).min(free);
                let a = [pos[0] + travel * c, pos[1] + travel * s];
                for o in threats {
                    let d = (a[0] - o.x).hypot(a[1] - o.y) - cfg.obstacle_speed * t;
                    worst = worst.min(d);
                }
            }
            worst
        };

        let nominal_dir = if nominal.v < 0.0 { state.theta + std::f64::consts::PI } else { state.theta };
        if clearance(nominal_dir, nominal.v.abs(), 0.0, cfg.clearance_margin) >= cfg.safe_clearance {
            return None;
        }
        let to_target = (target[1] - pos[1]).atan2(target[0] - pos[0]);
        // (safe, key, direction, reverse)
        let mut best: Option<(bool, f64, Option<(f64, bool)>)> = None;
        let mut consider = |choice: Option<(f64, bool)>, score: f64, progress: f64| {
            let safe = score >= cfg.safe_clearance;
            let key = if safe { progress } else { score };
            if best.map_or(true, |(s, k, _)| (safe, key) > (s, k)) {
                best = Some((safe, key, choice));
            }
        };
        for i in 0..cfg.evade_headings {
            let direction = to_target + TAU * i as f64 / cfg.evade_headings as f64;
            let fwd = wrap_angle(direction - state.theta).abs();
            let back = std::f64::consts::PI - fwd;
            let reverse = back < fwd;
            let turn = fwd.min(back) / w_max;
            let score = clearance(direction, v_max, turn, cfg.clearance_margin);
            consider(Some((direction, reverse)), score, wrap_angle(direction - to_target).cos());
        }
        consider(None, clearance(state.theta, 0.0, 0.0, 0.0), -2.0);
        Some(match best.and_then(|b| b.2) {
            None => ModelInput::ZERO,
            Some((direction, reverse)) => {
                let facing = if reverse { direction + std::f64::consts::PI } else { direction };
                let alpha = wrap_angle(facing - state.theta);
                let gate = (1.0 - alpha.abs() / cfg.heading_gate).max(0.0);
                let v = if reverse { -v_max * gate } else { v_max * gate };
                ModelInput::new(v, cfg.evade_gain * alpha)
            }
        })
    }

    /// Stop-layer test: an inflated static obstacle lies within the stop
    /// radius along the current heading. Once already inside the inflation
    /// band only true contact counts, so the agent can back out.
    fn static_ahead(&self, state: &ModelState, v: f64) -> bool {
        self.blocked_along(state, v, self.config.stop_radius, self.config.clearance_margin)
    }

    fn blocked_along(&self, state: &ModelState, v: f64, reach: f64, margin: f64) -> bool {
        let pos = state.position();
        let margin = if self.map.hits_obstacle(pos, margin) { 0.0 } else { margin };
        let heading = if v < 0.0 { state.theta + std::f64::consts::PI } else { state.theta };
        reach > 0.0 && v != 0.0 && self.map.free_length(pos, heading, reach, margin) < reach
    }

    /// Stop-layer test for moving obstacles in the forward corridor.
    fn walker_ahead(&self, state: &ModelState, v: f64, obstacles: &[ObstaclePose]) -> bool {
        let cfg = &self.config;
        let pos = state.position();
        if v == 0.0 {
            return false;
        }
        let heading = if v < 0.0 { state.theta + std::f64::consts::PI } else { state.theta };
        let (s, c) = heading.sin_cos();
        obstacles.iter().any(|o| {
            let dx = o.x - pos[0];
            let dy = o.y - pos[1];
            let along = dx * c + dy * s;
            let across = (dy * c - dx * s).abs();
            along > 0.0 && along <= cfg.stop_radius + cfg.obstacle_radius && across <= cfg.obstacle_radius
        })
    }
}

/// One command of a freshly planned navigation controller.
pub fn navigation_command(
    state: &ModelState,
    scenario: &Scenario,
    config: &NavConfig,
    bounds: &InputBox,
) -> Result<ModelInput> {
    let mut ctrl = NavigationController::new(scenario, *config, *bounds)?;
    Ok(ctrl.command(state, &scenario.moving_obstacles))
}
