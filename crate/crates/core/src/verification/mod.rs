//! Randomized grid-world scenarios, the navigation controller, the safety
//! metric, and the Monte Carlo verification harness.

pub mod controller;
pub mod grid;
pub mod harness;
pub mod metric;
pub mod obstacles;

pub use controller::{navigation_command, NavConfig, NavigationController};
pub use grid::{
    bfs_path, sample_scenario, shortest_path, Cell, GridGeometry, GridMap, ObstaclePose, Scenario,
    ThetaSpec,
};
pub use harness::{
    default_horizon, deploy_episode, trace_episode, EpisodeTrace, deploy_test, evaluate_episode, safety_samples,
    validate_verification, validation_from_values, verify_controller, ControllerKind, DeployRun,
    DeploymentReport, SafetySample, VerificationResult, VerificationSetup, VerificationValidation,
};
pub use metric::{progress_value, safety_metric, SafetyConfig, SafetyValue, CRASH_VALUE};
pub use obstacles::{moving_obstacle_step, ObstacleField, WalkerDynamics};
