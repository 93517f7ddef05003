//! Moving obstacles: constant-speed unicycle random walks that reflect off
//! the workspace walls. They pass through each other.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::grid::ObstaclePose;
use crate::dynamics::{normalize_angle, StateBox};
use crate::rng::StreamRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WalkerDynamics {
    /// Forward speed, m/s.
    pub speed: f64,
    /// Heading increment is uniform in `[-heading_noise, heading_noise]` per tick.
    pub heading_noise: f64,
}

impl Default for WalkerDynamics {
    fn default() -> Self {
        Self {
            speed: 0.1,
            heading_noise: 0.3,
        }
    }
}

/// One tick of the random walk. A coordinate that would leave `bounds` is
/// mirrored back inside and the matching heading component flipped.
pub fn moving_obstacle_step<R: Rng + ?Sized>(
    pose: &ObstaclePose,
    dynamics: &WalkerDynamics,
    bounds: &StateBox,
    dt: f64,
    rng: &mut R,
) -> ObstaclePose {
    let mut heading = pose.heading;
    if dynamics.heading_noise > 0.0 {
        heading += rng.gen_range(-dynamics.heading_noise..=dynamics.heading_noise);
    }
    let step = dynamics.speed * dt;
    let mut x = pose.x + step * heading.cos();
    let mut y = pose.y + step * heading.sin();
    if x < bounds.x_min {
        x = 2.0 * bounds.x_min - x;
        heading = PI - heading;
    } else if x > bounds.x_max {
        x = 2.0 * bounds.x_max - x;
        heading = PI - heading;
    }
    if y < bounds.y_min {
        y = 2.0 * bounds.y_min - y;
        heading = -heading;
    } else if y > bounds.y_max {
        y = 2.0 * bounds.y_max - y;
        heading = -heading;
    }
    ObstaclePose {
        x: x.clamp(bounds.x_min, bounds.x_max),
        y: y.clamp(bounds.y_min, bounds.y_max),
        heading: normalize_angle(heading),
    }
}

/// Lazily generated obstacle traces; entry `tick` holds every obstacle's
/// pose at that model tick.
#[derive(Debug, Clone)]
pub struct ObstacleField {
    dynamics: WalkerDynamics,
    bounds: StateBox,
    dt: f64,
    rng: StreamRng,
    ticks: Vec<Vec<ObstaclePose>>,
}

impl ObstacleField {
    pub fn new(
        initial: Vec<ObstaclePose>,
        dynamics: WalkerDynamics,
        bounds: StateBox,
        dt: f64,
        seed: u64,
    ) -> Self {
        Self {
            dynamics,
            bounds,
            dt,
            rng: StreamRng::seed_from_u64(seed),
            ticks: vec![initial],
        }
    }

    pub fn is_empty(&self) -> bool {
        self.ticks[0].is_empty()
    }

    pub fn at(&mut self, tick: usize) -> &[ObstaclePose] {
        while self.ticks.len() <= tick {
            let last = self.ticks.last().expect("field always has tick 0");
            let next = last
                .iter()
                .map(|p| moving_obstacle_step(p, &self.dynamics, &self.bounds, self.dt, &mut self.rng))
                .collect();
            self.ticks.push(next);
        }
        &self.ticks[tick]
    }

    /// Traces covering ticks `0..len`.
    pub fn traces(&mut self, len: usize) -> Vec<Vec<ObstaclePose>> {
        if len > 0 {
            self.at(len - 1);
        }
        self.ticks[..len.max(1).min(self.ticks.len())].to_vec()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn arena() -> StateBox {
        StateBox {
            x_min: -1.0,
            x_max: 1.0,
            y_min: -1.0,
            y_max: 1.0,
        }
    }

    #[test]
    fn noiseless_walker_goes_straight_then_reflects() {
        let dyn0 = WalkerDynamics {
            speed: 1.0,
            heading_noise: 0.0,
        };
        let mut rng = StreamRng::seed_from_u64(0);
        let mut p = ObstaclePose {
            x: 0.0,
            y: 0.0,
            heading: 0.0,
        };
        for _ in 0..9 {
            p = moving_obstacle_step(&p, &dyn0, &arena(), 0.1, &mut rng);
            assert_eq!(p.y, 0.0);
            assert_eq!(p.heading, 0.0);
        }
        assert!((p.x - 0.9).abs() < 1e-12);
        p = moving_obstacle_step(&p, &dyn0, &arena(), 0.15, &mut rng);
        assert!((p.x - 0.95).abs() < 1e-12);
        assert!((p.heading - PI).abs() < 1e-12);
    }

    #[test]
    fn field_is_reproducible_and_bounded() {
        let start = vec![ObstaclePose {
            x: 0.3,
            y: -0.2,
            heading: 1.0,
        }];
        let mut a = ObstacleField::new(start.clone(), WalkerDynamics::default(), arena(), 0.5, 9);
        let mut b = ObstacleField::new(start, WalkerDynamics::default(), arena(), 0.5, 9);
        assert_eq!(a.traces(500), b.traces(500));
        assert!(a.traces(500).iter().flatten().all(|p| arena().contains(p.position())));
    }

    #[test]
    fn long_walk_visits_every_quadrant() {
        let start = vec![ObstaclePose {
            x: 0.5,
            y: 0.5,
            heading: 0.0,
        }];
        let mut field = ObstacleField::new(start, WalkerDynamics::default(), arena(), 1.0, 3);
        let mut counts = [0usize; 4];
        for p in field.traces(20_000).iter().flatten() {
            counts[(p.x > 0.0) as usize * 2 + (p.y > 0.0) as usize] += 1;
        }
        assert!(counts.iter().all(|&c| c > 2_000), "{counts:?}");
    }
}
