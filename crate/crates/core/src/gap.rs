//! Sim2real gap estimation.
//!
//! Comparison samples are drawn by driving the plant to a uniformly random
//! waypoint, applying a uniformly random model input, and comparing the
//! observed pose after one model step with the nominal prediction. The gap
//! is the scalar scenario program `min r s.t. r >= gap_j`, i.e. the sample
//! maximum, and carries a `d = 1` certificate.

use std::f64::consts::FRAC_PI_2;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::certificate::{Certificate, Direction, EmpiricalDistribution, Tail};
use crate::dynamics::{
    advance_model_step, hold_input, nominal_step, observe_with_state, project_state, wrap_angle,
    InputBox, ModelInput, ModelState, Platform, PlantState, PlatformProfile,
};
use crate::error::{Error, Result};
use crate::rng::{self, Domain};

/// Range/bearing pose regulator for the unicycle.
///
/// `v = k_rho ρ cos α`, `ω = k_alpha α + k_rho sin α cos α`, saturated into
/// the input box. When reversing is allowed and the target is behind, the
/// same law is applied to the reversed heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolarTracker {
    pub k_rho: f64,
    pub k_alpha: f64,
}

impl Default for PolarTracker {
    fn default() -> Self {
        Self {
            k_rho: 0.8,
            k_alpha: 1.5,
        }
    }
}

impl PolarTracker {
    /// Bearing error from `pose` to `target`, in `(-π, π]`.
    pub fn bearing(pose: &ModelState, target: [f64; 2]) -> f64 {
        wrap_angle((target[1] - pose.y).atan2(target[0] - pose.x) - pose.theta)
    }

    /// Unsaturated command toward `target`, using `range` as the distance
    /// term of the speed law.
    pub fn raw_command(
        &self,
        pose: &ModelState,
        target: [f64; 2],
        range: f64,
        allow_reverse: bool,
    ) -> ModelInput {
        let alpha = Self::bearing(pose, target);
        if allow_reverse && alpha.abs() > FRAC_PI_2 {
            let beta = wrap_angle(alpha - std::f64::consts::PI);
            let (s, c) = beta.sin_cos();
            ModelInput::new(-self.k_rho * range * c, self.k_alpha * beta + self.k_rho * s * c)
        } else {
            let (s, c) = alpha.sin_cos();
            ModelInput::new(self.k_rho * range * c, self.k_alpha * alpha + self.k_rho * s * c)
        }
    }

    pub fn command(&self, pose: &ModelState, target: [f64; 2], bounds: &InputBox) -> ModelInput {
        let range = pose.planar_distance(target);
        bounds.saturate(self.raw_command(pose, target, range, true))
    }
}

/// Knobs of the comparison-sampling protocol.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingConfig {
    pub tracker: PolarTracker,
    /// Radius of the ball around the waypoint that ends the approach, meters.
    pub waypoint_tolerance: f64,
    /// Plant-step budget for one approach.
    pub step_budget: usize,
    /// Independent sampling chains; fixed so results do not depend on the
    /// worker count.
    pub chains: usize,
}

impl SamplingConfig {
    pub fn for_platform(platform: Platform) -> Self {
        let step_budget = match platform {
            Platform::Robotarium => 10_000,
            // 1 kHz plant with a 0.15 m/s, 0.3 rad/s walker.
            Platform::Quadruped => 400_000,
        };
        Self {
            tracker: PolarTracker::default(),
            waypoint_tolerance: 0.1,
            step_budget,
            chains: 4,
        }
    }
}

/// Result of one waypoint approach.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Approach {
    pub state: PlantState,
    pub plant_steps: usize,
}

/// Drives the plant with the polar regulator until its planar position is
/// within `waypoint_tolerance` of `waypoint`.
pub fn goto_waypoint<R: Rng + ?Sized>(
    plant: &PlantState,
    waypoint: [f64; 2],
    profile: &PlatformProfile,
    sampling: &SamplingConfig,
    rng: &mut R,
) -> Result<Approach> {
    if !profile.state_box.contains(waypoint) {
        return Err(Error::WaypointOutOfBounds {
            x: waypoint[0],
            y: waypoint[1],
        });
    }
    let mut state = *plant;
    let mut steps = 0;
    loop {
        let pose = project_state(&state);
        let distance = pose.planar_distance(waypoint);
        if distance <= sampling.waypoint_tolerance {
            return Ok(Approach {
                state,
                plant_steps: steps,
            });
        }
        if steps >= sampling.step_budget {
            return Err(Error::WaypointTimeout {
                budget: sampling.step_budget,
                distance,
            });
        }
        let u = sampling
            .tracker
            .command(&pose, waypoint, &profile.input_box);
        state = advance_model_step(&state, &u, profile, rng)?.state;
        steps += profile.steps_per_observation;
    }
}

/// One `(x_0, û)` comparison between plant and model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSample {
    pub index: u64,
    pub seed: u64,
    pub chain: u64,
    pub initial_state: PlantState,
    pub model_input: ModelInput,
    pub observed: ModelState,
    pub predicted: ModelState,
    pub gap_value: f64,
}

impl ComparisonSample {
    /// Recomputes the gap from the stored poses.
    pub fn recompute_gap(&self, profile: &PlatformProfile) -> f64 {
        profile.norm.distance(&self.observed, &self.predicted)
    }
}

/// Draws one comparison sample starting from `plant` and returns it with the
/// plant state after the mixing period. `index`, `seed` and `chain` are left
/// zero for the caller to fill in.
pub fn draw_comparison_sample<R: Rng + ?Sized>(
    profile: &PlatformProfile,
    sampling: &SamplingConfig,
    plant: &PlantState,
    rng: &mut R,
) -> Result<(ComparisonSample, PlantState)> {
    let waypoint = profile.state_box.sample(rng);
    let x0 = goto_waypoint(plant, waypoint, profile, sampling, rng)?.state;

    let u = profile.input_box.sample(rng);
    let (observed, after) = observe_with_state(&x0, &u, profile, rng)?;
    let remaining = profile.mixing_steps - profile.steps_per_observation;
    let mixed = hold_input(&after.state, &u, remaining, profile, rng)?.state;

    let predicted = nominal_step(&project_state(&x0), &u, profile.dt_model);
    let sample = ComparisonSample {
        index: 0,
        seed: 0,
        chain: 0,
        initial_state: x0,
        model_input: u,
        observed,
        predicted,
        gap_value: profile.norm.distance(&observed, &predicted),
    };
    Ok((sample, mixed))
}

/// Draws `count` samples from `sampling.chains` independent chains and
/// returns them in index order. Sample `i` belongs to chain `i % chains`.
pub fn sample_comparisons(
    profile: &PlatformProfile,
    sampling: &SamplingConfig,
    count: usize,
    master_seed: u64,
    domain: Domain,
    workers: usize,
) -> Result<Vec<ComparisonSample>> {
    let (samples, error) = sample_comparisons_partial(profile, sampling, count, master_seed, domain, workers);
    match error {
        Some(e) => Err(e),
        None => Ok(samples),
    }
}

/// Like [`sample_comparisons`], but on failure also returns every sample
/// drawn before the failing one in each chain.
pub fn sample_comparisons_partial(
    profile: &PlatformProfile,
    sampling: &SamplingConfig,
    count: usize,
    master_seed: u64,
    domain: Domain,
    workers: usize,
) -> (Vec<ComparisonSample>, Option<Error>) {
    let chains = sampling.chains.clamp(1, count.max(1));
    let per_chain = rng::par_map(chains, workers, |chain| {
        let mut rng = rng::stream(master_seed, domain, chain as u64);
        let mut plant = PlantState::at_rest(ModelState::origin());
        let mut out = Vec::new();
        for index in (chain..count).step_by(chains) {
            match draw_comparison_sample(profile, sampling, &plant, &mut rng) {
                Ok((mut sample, next)) => {
                    sample.index = index as u64;
                    sample.seed = master_seed;
                    sample.chain = chain as u64;
                    out.push(sample);
                    plant = next;
                }
                Err(e) => return (out, Some(e)),
            }
        }
        (out, None)
    });
    let mut samples = Vec::with_capacity(count);
    let mut error = None;
    for (chain, e) in per_chain {
        samples.extend(chain);
        error = error.or(e);
    }
    samples.sort_by_key(|s| s.index);
    (samples, error)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GapResult {
    pub gap: f64,
    pub certificate: Certificate,
    pub samples: Vec<ComparisonSample>,
    pub profile_name: String,
    pub master_seed: u64,
}

impl GapResult {
    /// Plain statement of what the certificate guarantees.
    pub fn statement(&self) -> String {
        format!(
            "the sim2real gap of {:.6} bounds a freshly sampled gap with probability {} (N = {})",
            self.gap,
            self.certificate.summary(),
            self.certificate.sample_count
        )
    }
}

/// Solves the scalar scenario program over the sample gaps.
pub fn estimate_gap(
    samples: Vec<ComparisonSample>,
    epsilon: f64,
    profile_name: &str,
    master_seed: u64,
) -> Result<GapResult> {
    if samples.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    let gap = samples
        .iter()
        .map(|s| s.gap_value)
        .fold(f64::NEG_INFINITY, f64::max);
    let certificate = Certificate::scalar(samples.len() as u64, epsilon)?;
    Ok(GapResult {
        gap,
        certificate,
        samples,
        profile_name: profile_name.to_owned(),
        master_seed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapValidation {
    pub fresh_count: usize,
    pub certified_gap: f64,
    pub epsilon: f64,
    /// Fraction of fresh gaps strictly above the certified gap.
    pub violation: f64,
    /// Empirical `1 - ε` quantile of the fresh gaps.
    pub cutoff: f64,
    pub pass: bool,
}

/// Checks a certified gap against independently drawn samples.
pub fn validate_gap(result: &GapResult, fresh: &[ComparisonSample]) -> Result<GapValidation> {
    let dist = EmpiricalDistribution::new(
        fresh.iter().map(|s| s.gap_value).collect(),
        fresh.first().map_or(0, |s| s.seed),
    )?;
    let epsilon = result.certificate.epsilon;
    let violation = dist.violation(result.gap, Direction::Above);
    Ok(GapValidation {
        fresh_count: dist.len(),
        certified_gap: result.gap,
        epsilon,
        violation,
        cutoff: dist.cutoff(epsilon, Tail::Upper)?,
        pass: violation <= epsilon,
    })
}

/// Lag-1 sample autocorrelation.
pub fn lag1_autocorrelation(values: &[f64]) -> f64 {
    let n = values.len();
    if n < 2 {
        return 0.0;
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let var: f64 = values.iter().map(|v| (v - mean).powi(2)).sum();
    if var == 0.0 {
        return 0.0;
    }
    let cov: f64 = values
        .windows(2)
        .map(|w| (w[0] - mean) * (w[1] - mean))
        .sum();
    cov / var
}

/// Chain-ordered independence check: lag-1 autocorrelation of each chain
/// against the 95% white-noise band `±1.96/√n`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndependenceDiagnostic {
    pub per_chain: Vec<f64>,
    pub band: f64,
    pub within_band: bool,
}

pub fn independence_diagnostic(samples: &[ComparisonSample]) -> IndependenceDiagnostic {
    let chains = samples.iter().map(|s| s.chain).max().map_or(0, |c| c + 1);
    let mut per_chain = Vec::new();
    let mut min_len = usize::MAX;
    for c in 0..chains {
        let values: Vec<f64> = samples
            .iter()
            .filter(|s| s.chain == c)
            .map(|s| s.gap_value)
            .collect();
        min_len = min_len.min(values.len());
        per_chain.push(lag1_autocorrelation(&values));
    }
    let band = if min_len == 0 || min_len == usize::MAX {
        f64::INFINITY
    } else {
        1.96 / (min_len as f64).sqrt()
    };
    IndependenceDiagnostic {
        within_band: per_chain.iter().all(|r| r.abs() <= band),
        per_chain,
        band,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::Perturbation;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn with_gaps(gaps: &[f64]) -> Vec<ComparisonSample> {
        gaps.iter()
            .enumerate()
            .map(|(i, &g)| ComparisonSample {
                index: i as u64,
                seed: 0,
                chain: 0,
                initial_state: PlantState::at_rest(ModelState::origin()),
                model_input: ModelInput::ZERO,
                observed: ModelState::origin(),
                predicted: ModelState::origin(),
                gap_value: g,
            })
            .collect()
    }

    #[test]
    fn estimate_gap_examples() {
        let r = estimate_gap(with_gaps(&[0.10, 0.05, 0.02]), 0.01, "t", 0).unwrap();
        assert_eq!(r.gap, 0.10);
        assert_eq!(r.certificate.dimension, 1);
        assert_eq!(r.certificate.sample_count, 3);

        let r = estimate_gap(with_gaps(&[0.0; 5]), 0.01, "t", 0).unwrap();
        assert_eq!(r.gap, 0.0);

        let r = estimate_gap(with_gaps(&vec![0.01; 600]), 0.005, "t", 0).unwrap();
        assert!((r.certificate.confidence - 0.950586).abs() < 1e-6);
        assert!(r.certificate.is_consistent());

        assert!(matches!(
            estimate_gap(vec![], 0.01, "t", 0),
            Err(Error::EmptyDistribution)
        ));
    }

    #[test]
    fn waypoint_already_reached() {
        let profile = PlatformProfile::robotarium();
        let sampling = SamplingConfig::for_platform(profile.platform);
        let plant = PlantState::at_rest(ModelState::new(0.5, 0.5, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = goto_waypoint(&plant, [0.55, 0.5], &profile, &sampling, &mut rng).unwrap();
        assert_eq!(a.plant_steps, 0);
        assert_eq!(a.state, plant);
    }

    #[test]
    fn waypoint_reached_on_nominal_plant() {
        for profile in [PlatformProfile::robotarium(), PlatformProfile::quadruped()] {
            let profile = profile.with_perturbation(Perturbation::zero());
            let sampling = SamplingConfig::for_platform(profile.platform);
            let mut rng = ChaCha8Rng::seed_from_u64(0);
            let plant = PlantState::at_rest(ModelState::origin());
            let a = goto_waypoint(&plant, [1.0, 0.0], &profile, &sampling, &mut rng).unwrap();
            assert!(a.state.pose.planar_distance([1.0, 0.0]) <= 0.1);
            assert!(a.plant_steps > 0);
            // Target behind the robot: reverses or turns, still converges.
            let a = goto_waypoint(&plant, [-0.8, 0.6], &profile, &sampling, &mut rng).unwrap();
            assert!(a.state.pose.planar_distance([-0.8, 0.6]) <= 0.1);
        }
    }

    #[test]
    fn waypoint_errors() {
        let profile = PlatformProfile::robotarium();
        let mut sampling = SamplingConfig::for_platform(profile.platform);
        let plant = PlantState::at_rest(ModelState::origin());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            goto_waypoint(&plant, [3.0, 0.0], &profile, &sampling, &mut rng),
            Err(Error::WaypointOutOfBounds { .. })
        ));
        sampling.step_budget = 5;
        assert!(matches!(
            goto_waypoint(&plant, [1.5, 0.9], &profile, &sampling, &mut rng),
            Err(Error::WaypointTimeout { .. })
        ));
    }

    #[test]
    fn zero_perturbation_gives_zero_gaps() {
        for profile in [PlatformProfile::robotarium(), PlatformProfile::quadruped()] {
            let profile = profile.with_perturbation(Perturbation::zero());
            let sampling = SamplingConfig::for_platform(profile.platform);
            let samples =
                sample_comparisons(&profile, &sampling, 12, 5, Domain::GapTrain, 1).unwrap();
            assert!(samples.iter().all(|s| s.gap_value < 1e-9), "{:?}", profile.platform);
            let fresh = sample_comparisons(&profile, &sampling, 12, 6, Domain::GapFresh, 1).unwrap();
            let result = estimate_gap(samples, 0.05, "zero", 5).unwrap();
            let v = validate_gap(&result, &fresh).unwrap();
            if profile.platform == Platform::Robotarium {
                // One plant step per model step reproduces the model exactly.
                assert_eq!(result.gap, 0.0);
                assert!(v.pass);
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_and_worker_independent() {
        let profile = PlatformProfile::robotarium();
        let sampling = SamplingConfig::for_platform(profile.platform);
        let a = sample_comparisons(&profile, &sampling, 20, 9, Domain::GapTrain, 1).unwrap();
        let b = sample_comparisons(&profile, &sampling, 20, 9, Domain::GapTrain, 3).unwrap();
        assert_eq!(a, b);
        for (i, s) in a.iter().enumerate() {
            assert_eq!(s.index, i as u64);
            assert!(profile.state_box.contains(s.initial_state.pose.position()));
            assert!((s.recompute_gap(&profile) - s.gap_value).abs() < 1e-15);
        }
    }

    #[test]
    fn halved_gap_fails_validation() {
        let profile = PlatformProfile::robotarium();
        let sampling = SamplingConfig::for_platform(profile.platform);
        let train = sample_comparisons(&profile, &sampling, 300, 1, Domain::GapTrain, 1).unwrap();
        let fresh = sample_comparisons(&profile, &sampling, 600, 1, Domain::GapFresh, 1).unwrap();
        let mut result = estimate_gap(train, 0.01, "robotarium", 1).unwrap();
        assert!(result.gap > 0.0);
        result.gap *= 0.5;
        let v = validate_gap(&result, &fresh).unwrap();
        assert!(v.violation > 0.01, "violation {}", v.violation);
        assert!(!v.pass);
    }

    #[test]
    fn autocorrelation_of_known_sequences() {
        assert_eq!(lag1_autocorrelation(&[1.0, 1.0, 1.0]), 0.0);
        let alternating: Vec<f64> = (0..100).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        assert!(lag1_autocorrelation(&alternating) < -0.95);
        let ramp: Vec<f64> = (0..100).map(f64::from).collect();
        assert!(lag1_autocorrelation(&ramp) > 0.9);
    }

    proptest! {
        #[test]
        fn gap_is_max_and_order_free(gaps in prop::collection::vec(0.0..1.0f64, 1..60), extra in 0.0..1.0f64) {
            let base = estimate_gap(with_gaps(&gaps), 0.05, "p", 0).unwrap();
            let naive = gaps.iter().cloned().fold(0.0, f64::max);
            prop_assert_eq!(base.gap, naive);

            let mut reversed = gaps.clone();
            reversed.reverse();
            prop_assert_eq!(estimate_gap(with_gaps(&reversed), 0.05, "p", 0).unwrap().gap, base.gap);

            let mut more = gaps.clone();
            more.push(extra);
            prop_assert!(estimate_gap(with_gaps(&more), 0.05, "p", 0).unwrap().gap >= base.gap);
        }
    }
}
