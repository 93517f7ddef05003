//! Nominal unicycle model, the surrogate "true" plant, and the maps between
//! them.
//!
//! The nominal model is a forward-Euler unicycle stepped at `dt_model`. The
//! plant integrates at its own `dt_true` with first-order actuator lag,
//! multiplicative gain error, diffusion noise on the pose and a slowly
//! drifting slip velocity. With every perturbation zeroed an observation of
//! the plant equals one nominal step.

use std::f64::consts::{PI, TAU};

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Maps an angle into `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let t = theta.rem_euclid(TAU);
    if t >= TAU {
        0.0
    } else {
        t
    }
}

/// Maps an angle difference into `(-π, π]`.
pub fn wrap_angle(delta: f64) -> f64 {
    let t = (delta + PI).rem_euclid(TAU) - PI;
    if t <= -PI {
        t + TAU
    } else {
        t
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelState {
    pub x: f64,
    pub y: f64,
    pub theta: f64,
}

impl ModelState {
    pub fn new(x: f64, y: f64, theta: f64) -> Self {
        Self {
            x,
            y,
            theta: normalize_angle(theta),
        }
    }

    pub fn origin() -> Self {
        Self::new(0.0, 0.0, 0.0)
    }

    pub fn position(&self) -> [f64; 2] {
        [self.x, self.y]
    }

    pub fn planar_distance(&self, point: [f64; 2]) -> f64 {
        (self.x - point[0]).hypot(self.y - point[1])
    }

    /// Adds `d = (dx, dy, dθ)` and renormalizes the heading.
    pub fn offset(&self, d: [f64; 3]) -> Self {
        Self::new(self.x + d[0], self.y + d[1], self.theta + d[2])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ModelInput {
    pub v: f64,
    pub omega: f64,
}

impl ModelInput {
    pub const ZERO: ModelInput = ModelInput { v: 0.0, omega: 0.0 };

    pub fn new(v: f64, omega: f64) -> Self {
        Self { v, omega }
    }
}

/// Axis-aligned bounds on the planar part of the model state. Heading always
/// ranges over `[0, 2π)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl StateBox {
    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn contains(&self, p: [f64; 2]) -> bool {
        (self.x_min..=self.x_max).contains(&p[0]) && (self.y_min..=self.y_max).contains(&p[1])
    }

    /// Clamps `p` into the box, returning whether it moved.
    pub fn clamp(&self, p: [f64; 2]) -> ([f64; 2], bool) {
        let q = [
            p[0].clamp(self.x_min, self.x_max),
            p[1].clamp(self.y_min, self.y_max),
        ];
        (q, q != p)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 2] {
        [
            rng.gen_range(self.x_min..=self.x_max),
            rng.gen_range(self.y_min..=self.y_max),
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputBox {
    pub v_min: f64,
    pub v_max: f64,
    pub omega_min: f64,
    pub omega_max: f64,
}

impl InputBox {
    pub fn symmetric(v: f64, omega: f64) -> Self {
        Self {
            v_min: -v,
            v_max: v,
            omega_min: -omega,
            omega_max: omega,
        }
    }

    pub fn contains(&self, u: &ModelInput) -> bool {
        (self.v_min..=self.v_max).contains(&u.v)
            && (self.omega_min..=self.omega_max).contains(&u.omega)
    }

    pub fn saturate(&self, u: ModelInput) -> ModelInput {
        ModelInput {
            v: u.v.clamp(self.v_min, self.v_max),
            omega: u.omega.clamp(self.omega_min, self.omega_max),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ModelInput {
        ModelInput {
            v: rng.gen_range(self.v_min..=self.v_max),
            omega: rng.gen_range(self.omega_min..=self.omega_max),
        }
    }

    pub fn check(&self, u: &ModelInput) -> Result<()> {
        if self.contains(u) {
            Ok(())
        } else {
            Err(Error::InputOutOfBounds {
                v: u.v,
                omega: u.omega,
            })
        }
    }
}

/// Weighted Euclidean norm over `(Δx, Δy, wrap(Δθ))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PoseNorm {
    pub weights: [f64; 3],
}

impl Default for PoseNorm {
    fn default() -> Self {
        Self {
            weights: [1.0; 3],
        }
    }
}

impl PoseNorm {
    pub fn norm(&self, d: [f64; 3]) -> f64 {
        d.iter()
            .zip(self.weights)
            .map(|(c, w)| (c * w) * (c * w))
            .sum::<f64>()
            .sqrt()
    }

    pub fn difference(a: &ModelState, b: &ModelState) -> [f64; 3] {
        [a.x - b.x, a.y - b.y, wrap_angle(a.theta - b.theta)]
    }

    pub fn distance(&self, a: &ModelState, b: &ModelState) -> f64 {
        self.norm(Self::difference(a, b))
    }
}

/// Unit-weight pose distance with the heading difference wrapped to `(-π, π]`.
pub fn wrapped_state_distance(a: &ModelState, b: &ModelState) -> f64 {
    PoseNorm::default().distance(a, b)
}

/// One forward-Euler step of the unicycle.
pub fn nominal_step(state: &ModelState, input: &ModelInput, dt_model: f64) -> ModelState {
    let (s, c) = state.theta.sin_cos();
    ModelState::new(
        state.x + dt_model * (input.v * c),
        state.y + dt_model * (input.v * s),
        state.theta + dt_model * input.omega,
    )
}

/// [`nominal_step`] followed by clamping the position into `bounds`; the flag
/// reports whether clamping happened.
pub fn nominal_step_clamped(
    state: &ModelState,
    input: &ModelInput,
    dt_model: f64,
    bounds: &StateBox,
) -> (ModelState, bool) {
    let next = nominal_step(state, input, dt_model);
    let ([x, y], clamped) = bounds.clamp(next.position());
    (ModelState { x, y, ..next }, clamped)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Platform {
    Robotarium,
    Quadruped,
}

impl Platform {
    pub fn as_str(&self) -> &'static str {
        match self {
            Platform::Robotarium => "robotarium",
            Platform::Quadruped => "quadruped",
        }
    }
}

impl std::str::FromStr for Platform {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "robotarium" | "R" | "r" => Ok(Platform::Robotarium),
            "quadruped" | "Q" | "q" => Ok(Platform::Quadruped),
            other => Err(Error::Config(format!("unknown platform `{other}`"))),
        }
    }
}

/// Surrogate plant imperfections. All zero reproduces the nominal model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Perturbation {
    /// First-order actuator time constant, seconds. Zero means no lag.
    pub lag_time: f64,
    /// Multiplicative error on the realized linear velocity.
    pub gain_error_v: f64,
    /// Multiplicative error on the realized yaw rate.
    pub gain_error_omega: f64,
    /// Planar diffusion noise, m/√s.
    pub noise_position: f64,
    /// Heading diffusion noise, rad/√s.
    pub noise_heading: f64,
    /// Stationary standard deviation of the slip velocity, m/s.
    pub slip_scale: f64,
    /// Correlation time of the slip velocity, seconds.
    pub slip_time: f64,
}

impl Perturbation {
    pub fn zero() -> Self {
        Self {
            lag_time: 0.0,
            gain_error_v: 0.0,
            gain_error_omega: 0.0,
            noise_position: 0.0,
            noise_heading: 0.0,
            slip_scale: 0.0,
            slip_time: 1.0,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.lag_time == 0.0
            && self.gain_error_v == 0.0
            && self.gain_error_omega == 0.0
            && self.noise_position == 0.0
            && self.noise_heading == 0.0
            && self.slip_scale == 0.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlatformProfile {
    pub platform: Platform,
    pub state_box: StateBox,
    pub input_box: InputBox,
    pub dt_true: f64,
    pub dt_model: f64,
    /// Plant steps per model step (`K`).
    pub steps_per_observation: usize,
    /// Plant steps the sampled input is held for after each comparison.
    pub mixing_steps: usize,
    pub perturbation: Perturbation,
    #[serde(default)]
    pub norm: PoseNorm,
}

impl PlatformProfile {
    pub fn robotarium() -> Self {
        Self {
            platform: Platform::Robotarium,
            state_box: StateBox {
                x_min: -1.6,
                x_max: 1.6,
                y_min: -1.0,
                y_max: 1.0,
            },
            input_box: InputBox::symmetric(0.2, PI),
            dt_true: 0.033,
            dt_model: 0.033,
            steps_per_observation: 1,
            mixing_steps: 50,
            perturbation: Perturbation {
                lag_time: 0.008,
                gain_error_v: 0.03,
                gain_error_omega: -0.02,
                noise_position: 0.004,
                noise_heading: 0.012,
                slip_scale: 0.004,
                slip_time: 0.5,
            },
            norm: PoseNorm::default(),
        }
    }

    pub fn quadruped() -> Self {
        Self {
            platform: Platform::Quadruped,
            state_box: StateBox {
                x_min: -2.5,
                x_max: 2.5,
                y_min: -2.5,
                y_max: 2.5,
            },
            input_box: InputBox::symmetric(0.15, 0.3),
            dt_true: 0.001,
            dt_model: 0.1,
            steps_per_observation: 100,
            mixing_steps: 1000,
            perturbation: Perturbation {
                lag_time: 0.03,
                gain_error_v: 0.04,
                gain_error_omega: 0.04,
                noise_position: 0.006,
                noise_heading: 0.01,
                slip_scale: 0.005,
                slip_time: 1.0,
            },
            norm: PoseNorm::default(),
        }
    }

    pub fn for_platform(platform: Platform) -> Self {
        match platform {
            Platform::Robotarium => Self::robotarium(),
            Platform::Quadruped => Self::quadruped(),
        }
    }

    pub fn with_perturbation(mut self, perturbation: Perturbation) -> Self {
        self.perturbation = perturbation;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let b = &self.state_box;
        let u = &self.input_box;
        let p = &self.perturbation;
        let fail = |m: &str| Err(Error::Config(m.to_owned()));
        if !(b.x_max > b.x_min && b.y_max > b.y_min) {
            return fail("state box must be nonempty");
        }
        if !(u.v_max >= u.v_min && u.omega_max >= u.omega_min) {
            return fail("input box must be nonempty");
        }
        if !(self.dt_true > 0.0 && self.dt_model > 0.0) {
            return fail("time steps must be positive");
        }
        if self.steps_per_observation == 0 || self.mixing_steps == 0 {
            return fail("steps_per_observation and mixing_steps must be at least 1");
        }
        if self.mixing_steps < self.steps_per_observation {
            return fail("mixing_steps must include the observation steps");
        }
        let scales = [
            p.lag_time,
            p.noise_position,
            p.noise_heading,
            p.slip_scale,
        ];
        if scales.iter().any(|s| !(s.is_finite() && *s >= 0.0)) || !(p.slip_time > 0.0) {
            return fail("perturbation scales must be nonnegative and slip_time positive");
        }
        if self.norm.weights.iter().any(|w| !(*w > 0.0)) {
            return fail("norm weights must be positive");
        }
        Ok(())
    }
}

/// Command accepted by the surrogate plant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TrueInput {
    /// Body-frame speed and yaw rate, re-resolved against the heading at
    /// every plant step.
    Unicycle { v: f64, omega: f64 },
    /// World-frame velocity reference held by a low-level tracker for one
    /// model step.
    Tracker { vx: f64, vy: f64, omega: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlantState {
    pub pose: ModelState,
    /// Realized world-frame planar velocity (actuator lag memory).
    pub velocity: [f64; 2],
    /// Realized yaw rate.
    pub omega: f64,
    pub slip: [f64; 2],
}

impl PlantState {
    /// Plant at rest at `pose`.
    pub fn at_rest(pose: ModelState) -> Self {
        Self {
            pose,
            velocity: [0.0; 2],
            omega: 0.0,
            slip: [0.0; 2],
        }
    }
}

/// Advances the plant by one `dt_true` step. Returns the new state and
/// whether the position was clamped at the workspace walls.
pub fn plant_step<R: Rng + ?Sized>(
    state: &PlantState,
    input: &TrueInput,
    dt_true: f64,
    perturbation: &Perturbation,
    walls: &StateBox,
    rng: &mut R,
) -> (PlantState, bool) {
    let p = perturbation;
    let gain_v = 1.0 + p.gain_error_v;
    let gain_w = 1.0 + p.gain_error_omega;
    let (reference, omega_ref) = match *input {
        TrueInput::Unicycle { v, omega } => {
            let (s, c) = state.pose.theta.sin_cos();
            ([gain_v * v * c, gain_v * v * s], gain_w * omega)
        }
        TrueInput::Tracker { vx, vy, omega } => ([gain_v * vx, gain_v * vy], gain_w * omega),
    };

    let blend = if p.lag_time > 0.0 {
        -(-dt_true / p.lag_time).exp_m1()
    } else {
        1.0
    };
    let mut next = *state;
    if blend == 1.0 {
        next.velocity = reference;
        next.omega = omega_ref;
    } else {
        for k in 0..2 {
            next.velocity[k] += blend * (reference[k] - state.velocity[k]);
        }
        next.omega += blend * (omega_ref - state.omega);
    }

    if p.slip_scale > 0.0 {
        let decay = (-dt_true / p.slip_time).exp();
        let kick = p.slip_scale * (1.0 - decay * decay).sqrt();
        for k in 0..2 {
            let z: f64 = rng.sample(StandardNormal);
            next.slip[k] = decay * state.slip[k] + kick * z;
        }
    }

    let mut dx = dt_true * (next.velocity[0] + next.slip[0]);
    let mut dy = dt_true * (next.velocity[1] + next.slip[1]);
    let mut dtheta = dt_true * next.omega;
    if p.noise_position > 0.0 {
        let s = p.noise_position * dt_true.sqrt();
        dx += s * rng.sample::<f64, _>(StandardNormal);
        dy += s * rng.sample::<f64, _>(StandardNormal);
    }
    if p.noise_heading > 0.0 {
        dtheta += p.noise_heading * dt_true.sqrt() * rng.sample::<f64, _>(StandardNormal);
    }

    let ([x, y], clamped) = walls.clamp([state.pose.x + dx, state.pose.y + dy]);
    next.pose = ModelState::new(x, y, state.pose.theta + dtheta);
    (next, clamped)
}

/// `M_x`: reads the unicycle pose off the plant.
pub fn project_state(state: &PlantState) -> ModelState {
    ModelState::new(state.pose.x, state.pose.y, state.pose.theta)
}

/// `M_u`: turns a model input into a plant command. The Robotarium accepts
/// unicycle commands directly; the quadruped's low-level tracker is handed
/// the world-frame velocity the model step would produce.
pub fn extend_input(
    model_input: &ModelInput,
    state: &PlantState,
    profile: &PlatformProfile,
) -> Result<TrueInput> {
    profile.input_box.check(model_input)?;
    Ok(match profile.platform {
        Platform::Robotarium => TrueInput::Unicycle {
            v: model_input.v,
            omega: model_input.omega,
        },
        Platform::Quadruped => {
            let (s, c) = state.pose.theta.sin_cos();
            TrueInput::Tracker {
                vx: model_input.v * c,
                vy: model_input.v * s,
                omega: model_input.omega,
            }
        }
    })
}

/// Running plant with clamp accounting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlantRun {
    pub state: PlantState,
    pub clamp_events: usize,
}

/// Holds `model_input` for one model step (`K` plant steps).
pub fn advance_model_step<R: Rng + ?Sized>(
    state: &PlantState,
    model_input: &ModelInput,
    profile: &PlatformProfile,
    rng: &mut R,
) -> Result<PlantRun> {
    let command = extend_input(model_input, state, profile)?;
    let mut run = PlantRun {
        state: *state,
        clamp_events: 0,
    };
    for _ in 0..profile.steps_per_observation {
        let (next, clamped) = plant_step(
            &run.state,
            &command,
            profile.dt_true,
            &profile.perturbation,
            &profile.state_box,
            rng,
        );
        run.state = next;
        run.clamp_events += usize::from(clamped);
    }
    Ok(run)
}

/// Holds `model_input` for `plant_steps` plant steps, re-issuing it through
/// `M_u` at every model-step boundary. A trailing partial model step is run
/// with the last command.
pub fn hold_input<R: Rng + ?Sized>(
    state: &PlantState,
    model_input: &ModelInput,
    plant_steps: usize,
    profile: &PlatformProfile,
    rng: &mut R,
) -> Result<PlantRun> {
    let k = profile.steps_per_observation;
    let mut run = PlantRun {
        state: *state,
        clamp_events: 0,
    };
    let mut command = extend_input(model_input, state, profile)?;
    for step in 0..plant_steps {
        if step > 0 && step % k == 0 {
            command = extend_input(model_input, &run.state, profile)?;
        }
        let (next, clamped) = plant_step(
            &run.state,
            &command,
            profile.dt_true,
            &profile.perturbation,
            &profile.state_box,
            rng,
        );
        run.state = next;
        run.clamp_events += usize::from(clamped);
    }
    Ok(run)
}

/// `O(x_0, û) = M_x(x_K)`, also returning the plant state after the `K`
/// steps so that sampling can continue from it.
pub fn observe_with_state<R: Rng + ?Sized>(
    initial: &PlantState,
    model_input: &ModelInput,
    profile: &PlatformProfile,
    rng: &mut R,
) -> Result<(ModelState, PlantRun)> {
    let run = advance_model_step(initial, model_input, profile, rng)?;
    Ok((project_state(&run.state), run))
}

pub fn observe<R: Rng + ?Sized>(
    initial: &PlantState,
    model_input: &ModelInput,
    profile: &PlatformProfile,
    rng: &mut R,
) -> Result<ModelState> {
    observe_with_state(initial, model_input, profile, rng).map(|(o, _)| o)
}
