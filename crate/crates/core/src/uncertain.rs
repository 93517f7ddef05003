//! Uncertain model: the nominal unicycle plus an additive disturbance drawn
//! uniformly from the ball whose radius is the certified gap.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::dynamics::{
    nominal_step, InputBox, ModelInput, ModelState, PlatformProfile, PoseNorm,
};
use crate::error::{Error, Result};
use crate::gap::{sample_comparisons, GapResult, SamplingConfig};
use crate::rng::Domain;

// Norm comparisons tolerate this much rounding.
const RADIUS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DisturbanceSet {
    pub radius: f64,
    pub norm: PoseNorm,
}

impl DisturbanceSet {
    pub const DIM: usize = 3;

    pub fn new(radius: f64, norm: PoseNorm) -> Result<Self> {
        if !(radius.is_finite() && radius >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "disturbance radius must be finite and nonnegative, got {radius}"
            )));
        }
        Ok(Self { radius, norm })
    }

    /// The set `{d : ‖d‖ <= r*}` for a certified gap, sharing its norm.
    pub fn from_gap(result: &GapResult, profile: &PlatformProfile) -> Result<Self> {
        Self::new(result.gap, profile.norm)
    }

    pub fn contains(&self, d: [f64; 3]) -> bool {
        self.norm.norm(d) <= self.radius + RADIUS_SLACK
    }
}

/// Uniform draw from the ball: isotropic direction, radial coordinate
/// `r U^{1/3}`, then rescaled per axis by the norm weights.
pub fn sample_disturbance<R: Rng + ?Sized>(set: &DisturbanceSet, rng: &mut R) -> [f64; 3] {
    if set.radius == 0.0 {
        return [0.0; 3];
    }
    let mut g = [0.0f64; 3];
    let mut len = 0.0;
    while len == 0.0 {
        for c in g.iter_mut() {
            *c = rng.sample(StandardNormal);
        }
        len = g.iter().map(|c| c * c).sum::<f64>().sqrt();
    }
    let u: f64 = rng.gen();
    let r = set.radius * u.powf(1.0 / DisturbanceSet::DIM as f64);
    let mut d = [0.0; 3];
    for k in 0..3 {
        d[k] = r * g[k] / len / set.norm.weights[k];
    }
    d
}

pub fn uncertain_step(
    state: &ModelState,
    input: &ModelInput,
    disturbance: [f64; 3],
    set: &DisturbanceSet,
    dt_model: f64,
) -> Result<ModelState> {
    let norm = set.norm.norm(disturbance);
    if norm > set.radius + RADIUS_SLACK {
        return Err(Error::DisturbanceTooLarge {
            norm,
            radius: set.radius,
        });
    }
    Ok(nominal_step(state, input, dt_model).offset(disturbance))
}

/// One-step reachable-set membership: `point ∈ f̂(state, input) ⊕ D`.
pub fn reachable_contains(
    state: &ModelState,
    input: &ModelInput,
    point: &ModelState,
    set: &DisturbanceSet,
    dt_model: f64,
) -> bool {
    set.norm.distance(point, &nominal_step(state, input, dt_model)) <= set.radius + RADIUS_SLACK
}

/// Closed-loop policy `U(x, θ)`; the parameter `θ` lives inside the
/// implementor.
pub trait Controller {
    fn command(&mut self, tick: usize, state: &ModelState) -> ModelInput;

    /// True once the task is complete; the rollout stops there.
    fn finished(&self) -> bool {
        false
    }
}

impl<F: FnMut(usize, &ModelState) -> ModelInput> Controller for F {
    fn command(&mut self, tick: usize, state: &ModelState) -> ModelInput {
        self(tick, state)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UncertainTrajectory {
    pub states: Vec<ModelState>,
    pub inputs: Vec<ModelInput>,
    pub disturbances: Vec<[f64; 3]>,
    pub seed: u64,
}

impl UncertainTrajectory {
    pub fn steps(&self) -> usize {
        self.inputs.len()
    }

    /// Re-steps the stored inputs and disturbances and checks that every
    /// stored state is reproduced exactly.
    pub fn replays(&self, dt_model: f64) -> bool {
        self.states.len() == self.inputs.len() + 1
            && self.disturbances.len() == self.inputs.len()
            && self.inputs.iter().zip(&self.disturbances).enumerate().all(|(j, (u, d))| {
                nominal_step(&self.states[j], u, dt_model).offset(*d) == self.states[j + 1]
            })
    }
}

/// Closed-loop rollout of the uncertain model for at most `horizon` steps.
/// Stops early once the controller reports completion.
pub fn rollout<C: Controller + ?Sized, R: Rng + ?Sized>(
    initial: ModelState,
    controller: &mut C,
    horizon: usize,
    set: &DisturbanceSet,
    profile: &PlatformProfile,
    seed: u64,
    rng: &mut R,
) -> Result<UncertainTrajectory> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if !profile.state_box.contains(initial.position()) {
        return Err(Error::InvalidArgument(format!(
            "initial state ({}, {}) lies outside the model state space",
            initial.x, initial.y
        )));
    }
    let bounds: &InputBox = &profile.input_box;
    let mut traj = UncertainTrajectory {
        states: Vec::with_capacity(horizon + 1),
        inputs: Vec::with_capacity(horizon),
        disturbances: Vec::with_capacity(horizon),
        seed,
    };
    traj.states.push(initial);
    let mut state = initial;
    for tick in 0..horizon {
        let u = controller.command(tick, &state);
        if controller.finished() {
            break;
        }
        bounds.check(&u)?;
        let d = sample_disturbance(set, rng);
        state = uncertain_step(&state, &u, d, set, profile.dt_model)?;
        traj.states.push(state);
        traj.inputs.push(u);
        traj.disturbances.push(d);
    }
    Ok(traj)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CoverageReport {
    pub samples: usize,
    pub radius: f64,
    pub epsilon: f64,
    /// Fraction of fresh observations inside the one-step reachable set.
    pub fraction: f64,
    pub pass: bool,
}

/// Draws `num_samples` fresh comparisons from the plant and measures how
/// often the observation lands in the uncertain model's reachable set.
pub fn coverage_test(
    profile: &PlatformProfile,
    sampling: &SamplingConfig,
    set: &DisturbanceSet,
    epsilon: f64,
    num_samples: usize,
    master_seed: u64,
    workers: usize,
) -> Result<CoverageReport> {
    if num_samples == 0 {
        return Err(Error::InvalidArgument("coverage needs at least one sample".into()));
    }
    let samples = sample_comparisons(
        profile,
        sampling,
        num_samples,
        master_seed,
        Domain::Coverage,
        workers,
    )?;
    let inside = samples
        .iter()
        .filter(|s| {
            reachable_contains(
                &s.initial_state.pose,
                &s.model_input,
                &s.observed,
                set,
                profile.dt_model,
            )
        })
        .count();
    let fraction = inside as f64 / num_samples as f64;
    Ok(CoverageReport {
        samples: num_samples,
        radius: set.radius,
        epsilon,
        fraction,
        pass: fraction >= 1.0 - epsilon,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Perturbation;
    use std::f64::consts::TAU;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn unit(radius: f64) -> DisturbanceSet {
        DisturbanceSet::new(radius, PoseNorm::default()).unwrap()
    }

    #[test]
    fn zero_radius_draws_zero() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for _ in 0..10 {
            assert_eq!(sample_disturbance(&unit(0.0), &mut rng), [0.0; 3]);
        }
    }

    #[test]
    fn draws_stay_in_ball() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let set = DisturbanceSet::new(
            0.3,
            PoseNorm {
                weights: [1.0, 2.0, 0.5],
            },
        )
        .unwrap();
        for _ in 0..10_000 {
            assert!(set.contains(sample_disturbance(&set, &mut rng)));
        }
    }

    #[test]
    fn uncertain_step_examples() {
        let set = unit(0.2);
        let s = ModelState::new(0.3, 0.1, 1.0);
        let u = ModelInput::new(0.1, 0.4);
        assert_eq!(
            uncertain_step(&s, &u, [0.0; 3], &set, 0.033).unwrap(),
            nominal_step(&s, &u, 0.033)
        );
        let shifted = uncertain_step(&s, &ModelInput::ZERO, [0.1, 0.0, 0.0], &set, 0.033).unwrap();
        assert!((shifted.x - 0.4).abs() < 1e-15 && shifted.y == 0.1);
        let near = ModelState::new(0.0, 0.0, TAU - 0.05);
        let wrapped = uncertain_step(&near, &ModelInput::ZERO, [0.0, 0.0, 0.1], &set, 0.033).unwrap();
        assert!((wrapped.theta - 0.05).abs() < 1e-12);
        assert!(matches!(
            uncertain_step(&s, &u, [0.3, 0.0, 0.0], &set, 0.033),
            Err(Error::DisturbanceTooLarge { .. })
        ));
    }

    #[test]
    fn reachable_set_boundary_is_closed() {
        let s = ModelState::new(0.0, 0.0, 0.0);
        let u = ModelInput::new(0.1, 0.0);
        let center = nominal_step(&s, &u, 0.5);
        assert!(reachable_contains(&s, &u, &center, &unit(0.0), 0.5));
        let off = center.offset([0.25, 0.0, 0.0]);
        assert!(!reachable_contains(&s, &u, &off, &unit(0.0), 0.5));
        assert!(reachable_contains(&s, &u, &off, &unit(0.25), 0.5));
    }

    #[test]
    fn rollout_zero_controller_is_constant() {
        let profile = PlatformProfile::robotarium();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let start = ModelState::new(0.2, -0.3, 2.0);
        let mut idle = |_: usize, _: &ModelState| ModelInput::ZERO;
        let t = rollout(start, &mut idle, 50, &unit(0.0), &profile, 2, &mut rng).unwrap();
        assert_eq!(t.states.len(), 51);
        assert!(t.states.iter().all(|s| *s == start));
    }

    #[test]
    fn rollout_replays_and_is_deterministic() {
        let profile = PlatformProfile::robotarium();
        let set = unit(0.05);
        let run = || {
            let mut rng = ChaCha8Rng::seed_from_u64(7);
            let mut ctrl = |k: usize, _: &ModelState| ModelInput::new(0.1, if k % 20 < 10 { 1.0 } else { -1.0 });
            rollout(ModelState::origin(), &mut ctrl, 200, &set, &profile, 7, &mut rng).unwrap()
        };
        let a = run();
        assert!(a.replays(profile.dt_model));
        assert_eq!(a, run());
        assert!(a.inputs.iter().all(|u| profile.input_box.contains(u)));
        assert!(a.disturbances.iter().all(|d| set.contains(*d)));
        let mut broken = a.clone();
        broken.disturbances[3][0] += 1e-6;
        assert!(!broken.replays(profile.dt_model));
    }

    #[test]
    fn rollout_rejects_out_of_box_commands() {
        let profile = PlatformProfile::robotarium();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut fast = |_: usize, _: &ModelState| ModelInput::new(1.0, 0.0);
        assert!(matches!(
            rollout(ModelState::origin(), &mut fast, 5, &unit(0.0), &profile, 0, &mut rng),
            Err(Error::InputOutOfBounds { .. })
        ));
    }

    #[test]
    fn coverage_degenerate_cases() {
        let zero = PlatformProfile::robotarium().with_perturbation(Perturbation::zero());
        let sampling = SamplingConfig::for_platform(zero.platform);
        let r = coverage_test(&zero, &sampling, &unit(0.0), 0.01, 50, 3, 1).unwrap();
        assert_eq!(r.fraction, 1.0);
        assert!(r.pass);

        let noisy = PlatformProfile::robotarium();
        let r = coverage_test(&noisy, &sampling, &unit(0.0), 0.01, 50, 3, 1).unwrap();
        assert!(r.fraction < 0.05);
        assert!(!r.pass);
    }

    proptest! {
        // Membership is exactly the distance test, on both sides of the
        // boundary.
        #[test]
        fn membership_iff_within_radius(
            x in -1.0..1.0f64, y in -1.0..1.0f64, th in 0.0..6.28f64,
            v in -0.2..0.2f64, w in -3.0..3.0f64,
            dir in prop::array::uniform3(-1.0..1.0f64),
            scale in 0.5..1.5f64, radius in 0.001..0.3f64,
        ) {
            let s = ModelState::new(x, y, th);
            let u = ModelInput::new(v, w);
            let n = (dir[0]*dir[0] + dir[1]*dir[1] + dir[2]*dir[2]).sqrt();
            prop_assume!(n > 1e-3);
            let d = [dir[0] / n * radius * scale, dir[1] / n * radius * scale, dir[2] / n * radius * scale];
            let p = nominal_step(&s, &u, 0.033).offset(d);
            let set = unit(radius);
            let dist = PoseNorm::default().distance(&p, &nominal_step(&s, &u, 0.033));
            prop_assert_eq!(reachable_contains(&s, &u, &p, &set, 0.033), dist <= radius);
            if scale < 0.999 { prop_assert!(reachable_contains(&s, &u, &p, &set, 0.033)); }
            if scale > 1.001 { prop_assert!(!reachable_contains(&s, &u, &p, &set, 0.033)); }
        }
    }
}
