//! Monte Carlo verification: sample `(x̂₀, θ)`, roll out the uncertain
//! model, score with the safety metric, and certify the minimum.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::controller::{NavConfig, NavigationController};
use super::grid::{
    sample_scenario, shortest_path, Cell, GridGeometry, ObstaclePose, Scenario, ThetaSpec,
};
use super::metric::{safety_metric, SafetyConfig, SafetyValue};
use super::obstacles::{ObstacleField, WalkerDynamics};
use crate::certificate::{
    empirical_cutoff, empirical_violation, Certificate, Direction, EmpiricalDistribution, Tail,
};
use crate::dynamics::{
    advance_model_step, project_state, ModelInput, ModelState, PlantState, Platform, PlatformProfile,
};
use crate::error::{Error, Result};
use crate::rng::{self, par_map, Domain};
use crate::uncertain::{rollout, Controller, DisturbanceSet, UncertainTrajectory};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerKind {
    /// The layered navigation controller.
    Navigation,
    /// Always commands zero input.
    Zero,
    /// Drives straight at full speed, ignoring everything.
    Straight,
}

impl ControllerKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            ControllerKind::Navigation => "navigation",
            ControllerKind::Zero => "zero",
            ControllerKind::Straight => "straight",
        }
    }
}

impl std::str::FromStr for ControllerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "navigation" => Ok(Self::Navigation),
            "zero" => Ok(Self::Zero),
            "straight" => Ok(Self::Straight),
            other => Err(Error::Config(format!("unknown controller '{other}'"))),
        }
    }
}

/// Everything needed to evaluate one closed-loop episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSetup {
    pub profile: PlatformProfile,
    pub theta: ThetaSpec,
    pub controller: ControllerKind,
    pub nav: NavConfig,
    pub safety: SafetyConfig,
    pub walkers: WalkerDynamics,
    /// Maximum model ticks per episode.
    pub horizon: usize,
}

impl VerificationSetup {
    pub fn for_platform(platform: Platform) -> Self {
        Self {
            profile: PlatformProfile::for_platform(platform),
            theta: ThetaSpec::for_platform(platform),
            controller: ControllerKind::Navigation,
            nav: NavConfig::for_platform(platform),
            safety: SafetyConfig::for_platform(platform),
            walkers: WalkerDynamics::default(),
            horizon: default_horizon(platform),
        }
    }

    pub fn geometry(&self) -> Result<GridGeometry> {
        GridGeometry::fit(&self.theta, &self.profile.state_box)
    }

    pub fn validate(&self) -> Result<()> {
        self.profile.validate()?;
        let g = self.geometry()?;
        self.nav.validate(g.cell_size)?;
        self.safety.validate(g.cell_size)?;
        if self.horizon == 0 {
            return Err(Error::Config("verification horizon must be at least 1".into()));
        }
        if !(self.walkers.speed >= 0.0 && self.walkers.heading_noise >= 0.0) {
            return Err(Error::Config("moving-obstacle speed and noise must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn controller_id(&self) -> String {
        format!("{}/{}", self.controller.as_str(), self.profile.platform.as_str())
    }
}

/// Episode length long enough to cross the arena along a winding path.
pub fn default_horizon(platform: Platform) -> usize {
    match platform {
        Platform::Robotarium => 3000,
        Platform::Quadruped => 1000,
    }
}

enum Policy {
    Navigation(Box<NavigationController>),
    Zero,
    Straight(f64),
}

/// Controller plus the moving obstacles it reacts to; the same traces feed
/// the safety metric afterwards.
struct Episode {
    field: ObstacleField,
    policy: Policy,
}

impl Episode {
    fn new(setup: &VerificationSetup, scenario: &Scenario, walker_seed: u64) -> Result<Self> {
        let field = ObstacleField::new(
            scenario.moving_obstacles.clone(),
            setup.walkers,
            scenario.geometry.bounds(),
            setup.profile.dt_model,
            walker_seed,
        );
        let policy = match setup.controller {
            ControllerKind::Navigation => Policy::Navigation(Box::new(NavigationController::new(
                scenario,
                setup.nav,
                setup.profile.input_box,
            )?)),
            ControllerKind::Zero => Policy::Zero,
            ControllerKind::Straight => Policy::Straight(setup.profile.input_box.v_max),
        };
        Ok(Self { field, policy })
    }

    fn traces(&mut self, len: usize) -> Vec<Vec<ObstaclePose>> {
        self.field.traces(len)
    }
}

impl Controller for Episode {
    fn command(&mut self, tick: usize, state: &ModelState) -> ModelInput {
        match &mut self.policy {
            Policy::Navigation(nav) => nav.command(state, self.field.at(tick)),
            Policy::Zero => ModelInput::ZERO,
            Policy::Straight(v) => ModelInput::new(*v, 0.0),
        }
    }

    fn finished(&self) -> bool {
        match &self.policy {
            Policy::Navigation(nav) => nav.finished(),
            _ => false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SafetySample {
    pub index: u64,
    pub seed: u64,
    pub scenario: Scenario,
    pub initial_state: ModelState,
    pub safety: SafetyValue,
}

/// Draws scenario `index` of `domain` and its initial pose.
fn draw_case<R: Rng + ?Sized>(
    setup: &VerificationSetup,
    geometry: &GridGeometry,
    index: u64,
    rng: &mut R,
) -> Result<(Scenario, ModelState, u64)> {
    let scenario = sample_scenario(&setup.theta, geometry, index, rng)?;
    let [x, y, theta] = scenario.sample_start_pose(setup.theta.start_margin, rng);
    let walker_seed = rng.gen();
    Ok((scenario, ModelState::new(x, y, theta), walker_seed))
}

/// A fully recorded verification episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub scenario: Scenario,
    pub path: Vec<Cell>,
    pub trajectory: UncertainTrajectory,
    pub obstacle_traces: Vec<Vec<ObstaclePose>>,
    pub safety: SafetyValue,
}

/// Replays verification episode `index` of `domain` with full traces.
pub fn trace_episode(
    setup: &VerificationSetup,
    set: &DisturbanceSet,
    master_seed: u64,
    domain: Domain,
    index: u64,
) -> Result<EpisodeTrace> {
    let geometry = setup.geometry()?;
    let mut rng = rng::stream(master_seed, domain, index);
    let (scenario, x0, walker_seed) = draw_case(setup, &geometry, index, &mut rng)?;
    let path = shortest_path(&scenario)?;
    let mut episode = Episode::new(setup, &scenario, walker_seed)?;
    let trajectory = rollout(x0, &mut episode, setup.horizon, set, &setup.profile, master_seed, &mut rng)?;
    let obstacle_traces = episode.traces(trajectory.states.len());
    let safety = safety_metric(&trajectory.states, &scenario, &path, &obstacle_traces, &setup.safety)?;
    Ok(EpisodeTrace {
        scenario,
        path,
        trajectory,
        obstacle_traces,
        safety,
    })
}

/// One verification episode on the uncertain model.
pub fn evaluate_episode(
    setup: &VerificationSetup,
    set: &DisturbanceSet,
    master_seed: u64,
    domain: Domain,
    index: u64,
) -> Result<SafetySample> {
    let trace = trace_episode(setup, set, master_seed, domain, index)?;
    Ok(SafetySample {
        index,
        seed: master_seed,
        initial_state: trace.trajectory.states[0],
        scenario: trace.scenario,
        safety: trace.safety,
    })
}

pub fn safety_samples(
    setup: &VerificationSetup,
    set: &DisturbanceSet,
    count: usize,
    master_seed: u64,
    domain: Domain,
    workers: usize,
) -> Result<Vec<SafetySample>> {
    setup.validate()?;
    par_map(count, workers, |i| evaluate_episode(setup, set, master_seed, domain, i as u64))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationResult {
    pub min_safety: f64,
    pub certificate: Certificate,
    pub samples: Vec<SafetySample>,
    pub controller_id: String,
    pub master_seed: u64,
    pub pass: bool,
}

impl VerificationResult {
    pub fn from_samples(
        samples: Vec<SafetySample>,
        epsilon: f64,
        controller_id: String,
        master_seed: u64,
    ) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        let min_safety = samples
            .iter()
            .map(|s| s.safety.value)
            .fold(f64::INFINITY, f64::min);
        let certificate = Certificate::scalar(samples.len() as u64, epsilon)?;
        Ok(Self {
            min_safety,
            certificate,
            samples,
            controller_id,
            master_seed,
            pass: min_safety >= 0.0,
        })
    }

    pub fn statement(&self) -> String {
        format!(
            "safety value >= {:.4} {} (N = {}, eps = {})",
            self.min_safety,
            self.certificate.summary(),
            self.certificate.sample_count,
            self.certificate.epsilon
        )
    }
}

pub fn verify_controller(
    setup: &VerificationSetup,
    set: &DisturbanceSet,
    count: usize,
    epsilon: f64,
    master_seed: u64,
    workers: usize,
) -> Result<VerificationResult> {
    if count == 0 {
        return Err(Error::InvalidArgument("verification needs at least one sample".into()));
    }
    Certificate::scalar(count as u64, epsilon)?;
    let samples = safety_samples(setup, set, count, master_seed, Domain::Verify, workers)?;
    VerificationResult::from_samples(samples, epsilon, setup.controller_id(), master_seed)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationValidation {
    pub fresh_count: usize,
    pub min_safety: f64,
    pub epsilon: f64,
    /// Fraction of fresh values strictly below `min_safety`.
    pub violation: f64,
    /// Empirical lower ε-quantile of the fresh values.
    pub cutoff: f64,
    pub crash_fraction: f64,
    pub controller_verified: bool,
    pub pass: bool,
    pub values: Vec<f64>,
}

pub fn validate_verification(
    result: &VerificationResult,
    setup: &VerificationSetup,
    set: &DisturbanceSet,
    fresh_count: usize,
    workers: usize,
) -> Result<VerificationValidation> {
    let fresh = safety_samples(setup, set, fresh_count, result.master_seed, Domain::VerifyFresh, workers)?;
    let values: Vec<f64> = fresh.iter().map(|s| s.safety.value).collect();
    validation_from_values(result, values)
}

pub fn validation_from_values(
    result: &VerificationResult,
    values: Vec<f64>,
) -> Result<VerificationValidation> {
    let epsilon = result.certificate.epsilon;
    let crashes = values.iter().filter(|v| **v < 0.0).count();
    let dist = EmpiricalDistribution::new(values, result.master_seed)?;
    let violation = empirical_violation(&dist, result.min_safety, Direction::Below)?;
    let cutoff = empirical_cutoff(&dist, epsilon, Tail::Lower)?;
    Ok(VerificationValidation {
        fresh_count: dist.len(),
        min_safety: result.min_safety,
        epsilon,
        violation,
        cutoff,
        crash_fraction: crashes as f64 / dist.len() as f64,
        controller_verified: result.pass,
        pass: result.pass && violation <= epsilon,
        values: dist.values().to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeployRun {
    pub index: u64,
    pub scenario: Scenario,
    pub states: Vec<ModelState>,
    pub inputs: Vec<ModelInput>,
    pub safety: SafetyValue,
    pub clamp_events: usize,
    pub success: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentReport {
    pub controller_id: String,
    pub master_seed: u64,
    pub runs: Vec<DeployRun>,
    pub successes: usize,
    pub crashes: usize,
}

/// Closed-loop run on the surrogate plant: one controller tick per model
/// step, `K` plant steps per tick, safety judged on the projected trace.
pub fn deploy_episode(setup: &VerificationSetup, master_seed: u64, index: u64) -> Result<DeployRun> {
    let geometry = setup.geometry()?;
    let mut rng = rng::stream(master_seed, Domain::Deploy, index);
    let (scenario, x0, walker_seed) = draw_case(setup, &geometry, index, &mut rng)?;
    let path = shortest_path(&scenario)?;
    let mut episode = Episode::new(setup, &scenario, walker_seed)?;
    let mut plant = PlantState::at_rest(x0);
    let mut states = vec![x0];
    let mut inputs = Vec::new();
    let mut clamp_events = 0;
    for tick in 0..setup.horizon {
        let pose = project_state(&plant);
        let u = episode.command(tick, &pose);
        if episode.finished() {
            break;
        }
        let run = advance_model_step(&plant, &u, &setup.profile, &mut rng)?;
        plant = run.state;
        clamp_events += run.clamp_events;
        states.push(project_state(&plant));
        inputs.push(u);
    }
    let traces = episode.traces(states.len());
    let safety = safety_metric(&states, &scenario, &path, &traces, &setup.safety)?;
    Ok(DeployRun {
        index,
        scenario,
        states,
        inputs,
        safety,
        clamp_events,
        success: safety.reached_goal && !safety.crashed,
    })
}

pub fn deploy_test(
    setup: &VerificationSetup,
    runs: usize,
    master_seed: u64,
    workers: usize,
) -> Result<DeploymentReport> {
    setup.validate()?;
    let runs: Vec<DeployRun> = par_map(runs, workers, |i| deploy_episode(setup, master_seed, i as u64))
        .into_iter()
        .collect::<Result<_>>()?;
    Ok(DeploymentReport {
        controller_id: setup.controller_id(),
        master_seed,
        successes: runs.iter().filter(|r| r.success).count(),
        crashes: runs.iter().filter(|r| r.safety.crashed).count(),
        runs,
    })
}
