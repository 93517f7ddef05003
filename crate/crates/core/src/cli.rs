//! The `gapcert` command line: estimate-gap → coverage/verify → validate →
//! deploy, each a pure function of the config file and master seed.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::dynamics::Platform;
use crate::error::{Error, Result};
use crate::gap::{estimate_gap, sample_comparisons, sample_comparisons_partial, validate_gap, GapResult};
use crate::records::{self, histogram, Header};
use crate::rng::Domain;
use crate::uncertain::{coverage_test, CoverageReport, DisturbanceSet};
use crate::verification::{
    deploy_test, validate_verification, verify_controller, ControllerKind, SafetyValue,
    VerificationResult,
};

pub const GAP_RESULT: &str = "gap_result.json";
pub const GAP_SAMPLES: &str = "gap_samples.jsonl";
pub const COVERAGE_REPORT: &str = "coverage.json";
pub const VERIFICATION_RESULT: &str = "verification_result.json";
pub const SAFETY_SAMPLES: &str = "safety_samples.jsonl";
pub const GAP_VALIDATION: &str = "gap_validation.json";
pub const GAP_HISTOGRAM: &str = "gap_histogram.csv";
pub const SAFETY_VALIDATION: &str = "verification_validation.json";
pub const SAFETY_HISTOGRAM: &str = "safety_histogram.csv";
pub const DEPLOY_REPORT: &str = "deployment.json";
pub const DEPLOY_RUNS: &str = "deploy_runs.jsonl";

pub const EXIT_PASS: i32 = 0;
pub const EXIT_FAIL: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_SIMULATION: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "gapcert", version, about = "Sim2real gap certification and controller verification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// TOML experiment config; platform presets fill anything it omits.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Preset to use when no config file is given.
    #[arg(long, value_parser = parse_platform, default_value = "robotarium")]
    pub platform: Platform,
    /// Overrides the config's master seed.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Overrides the config's output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; 0 uses every core. Never changes results.
    #[arg(long, default_value_t = 0)]
    pub workers: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample plant/model comparisons and certify the sim2real gap.
    EstimateGap {
        #[command(flatten)]
        common: Common,
    },
    /// Check that fresh plant steps land in the uncertain model's reachable set.
    Coverage {
        #[command(flatten)]
        common: Common,
        /// Gap result written by estimate-gap.
        #[arg(long)]
        gap_result: PathBuf,
        /// Use this disturbance radius instead of the certified gap.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Certify a controller's minimum safety value on the uncertain model.
    Verify {
        #[command(flatten)]
        common: Common,
        /// Gap result written by estimate-gap.
        #[arg(long)]
        gap_result: PathBuf,
        /// navigation, zero or straight; defaults to the config's controller.
        #[arg(long, value_parser = parse_controller)]
        controller: Option<ControllerKind>,
        /// Use this disturbance radius instead of the certified gap.
        #[arg(long)]
        radius: Option<f64>,
    },
    /// Check both certificates against fresh samples and emit histograms.
    Validate {
        #[command(flatten)]
        common: Common,
        /// Gap result written by estimate-gap.
        #[arg(long)]
        gap_result: PathBuf,
        /// Verification result written by verify.
        #[arg(long)]
        verification_result: PathBuf,
    },
    /// Run the verified controller on the surrogate plant.
    Deploy {
        #[command(flatten)]
        common: Common,
        /// Verification result written by verify.
        #[arg(long)]
        verification_result: PathBuf,
        /// Deploy even if verification failed; the report is marked unverified.
        #[arg(long)]
        force: bool,
    },
}

fn parse_platform(s: &str) -> std::result::Result<Platform, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_controller(s: &str) -> std::result::Result<ControllerKind, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
}

impl Outcome {
    fn from_pass(pass: bool) -> Self {
        if pass {
            Outcome::Pass
        } else {
            Outcome::Fail
        }
    }
}

pub fn exit_code(result: &Result<Outcome>) -> i32 {
    match result {
        Ok(Outcome::Pass) => EXIT_PASS,
        Ok(Outcome::Fail) | Err(Error::UnverifiedController { .. }) => EXIT_FAIL,
        Err(e) if e.is_simulation() => EXIT_SIMULATION,
        Err(_) => EXIT_CONFIG,
    }
}

/// Resolved configuration shared by every command.
struct Context {
    config: ExperimentConfig,
    hash: String,
    out: PathBuf,
    workers: usize,
}

impl Context {
    fn new(common: &Common, controller: Option<ControllerKind>) -> Result<Self> {
        let mut config = match &common.config {
            Some(path) => ExperimentConfig::load(path)?,
            None => ExperimentConfig::for_platform(common.platform),
        };
        if let Some(seed) = common.seed {
            config.master_seed = seed;
        }
        if let Some(out) = &common.out {
            config.output.dir = out.clone();
        }
        if let Some(kind) = controller {
            config.verification.controller = kind;
        }
        config.validate()?;
        let workers = match common.workers {
            0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
            n => n,
        };
        Ok(Self {
            hash: config.hash(),
            out: config.output.dir.clone(),
            config,
            workers,
        })
    }

    fn header(&self, schema: &str) -> Header {
        Header::new(schema, &self.hash, self.config.master_seed)
    }

    fn path(&self, name: &str) -> PathBuf {
        self.out.join(name)
    }

    fn load_gap(&self, path: &Path) -> Result<GapResult> {
        let doc = records::read_document::<GapResult>(path, "gap-result")?;
        if doc.body.profile_name != self.config.platform.as_str() {
            return Err(Error::Mismatch(format!(
                "gap result is for {}, config is for {}",
                doc.body.profile_name,
                self.config.platform.as_str()
            )));
        }
        Ok(doc.body)
    }

    fn disturbance(&self, gap: &GapResult, radius: Option<f64>) -> Result<DisturbanceSet> {
        match radius {
            Some(r) => DisturbanceSet::new(r, self.config.profile.norm),
            None => DisturbanceSet::from_gap(gap, &self.config.profile),
        }
    }
}

pub fn run(cli: Cli) -> Result<Outcome> {
    match cli.command {
        Command::EstimateGap { common } => cmd_estimate_gap(&Context::new(&common, None)?),
        Command::Coverage { common, gap_result, radius } => {
            cmd_coverage(&Context::new(&common, None)?, &gap_result, radius)
        }
        Command::Verify { common, gap_result, controller, radius } => {
            cmd_verify(&Context::new(&common, controller)?, &gap_result, radius)
        }
        Command::Validate { common, gap_result, verification_result } => {
            cmd_validate(&Context::new(&common, None)?, &gap_result, &verification_result)
        }
        Command::Deploy { common, verification_result, force } => {
            cmd_deploy(&Context::new(&common, None)?, &verification_result, force)
        }
    }
}

fn cmd_estimate_gap(ctx: &Context) -> Result<Outcome> {
    let c = &ctx.config;
    let (samples, error) = sample_comparisons_partial(
        &c.profile,
        &c.gap.sampling,
        c.gap.samples,
        c.master_seed,
        Domain::GapTrain,
        ctx.workers,
    );
    records::write_jsonl(&ctx.path(GAP_SAMPLES), ctx.header("comparison-samples"), &samples)?;
    if let Some(e) = error {
        return Err(e);
    }
    let result = estimate_gap(samples, c.gap.epsilon, c.platform.as_str(), c.master_seed)?;
    records::write_document(&ctx.path(GAP_RESULT), ctx.header("gap-result"), &result)?;
    println!("{}", result.statement());
    Ok(Outcome::Pass)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoverageRecord {
    pub certified_gap: f64,
    pub report: CoverageReport,
}

fn cmd_coverage(ctx: &Context, gap_path: &Path, radius: Option<f64>) -> Result<Outcome> {
    let c = &ctx.config;
    let gap = ctx.load_gap(gap_path)?;
    let set = ctx.disturbance(&gap, radius)?;
    let report = coverage_test(
        &c.profile,
        &c.gap.sampling,
        &set,
        gap.certificate.epsilon,
        c.coverage.samples,
        c.master_seed,
        ctx.workers,
    )?;
    let record = CoverageRecord { certified_gap: gap.gap, report };
    records::write_document(&ctx.path(COVERAGE_REPORT), ctx.header("coverage-report"), &record)?;
    println!(
        "coverage {:.4} of {} fresh steps within radius {:.6} (need >= {:.4}): {}",
        report.fraction,
        report.samples,
        report.radius,
        1.0 - report.epsilon,
        if report.pass { "pass" } else { "FAIL" }
    );
    Ok(Outcome::from_pass(report.pass))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationRecord {
    /// Disturbance radius the rollouts used.
    pub radius: f64,
    pub result: VerificationResult,
}

fn cmd_verify(ctx: &Context, gap_path: &Path, radius: Option<f64>) -> Result<Outcome> {
    let c = &ctx.config;
    let gap = ctx.load_gap(gap_path)?;
    let set = ctx.disturbance(&gap, radius)?;
    let setup = c.verification_setup();
    let result = verify_controller(
        &setup,
        &set,
        c.verification.samples,
        c.verification.epsilon,
        c.master_seed,
        ctx.workers,
    )?;
    let values: Vec<SafetyValue> = result.samples.iter().map(|s| s.safety).collect();
    records::write_jsonl(&ctx.path(SAFETY_SAMPLES), ctx.header("safety-samples"), &values)?;
    let record = VerificationRecord { radius: set.radius, result };
    records::write_document(
        &ctx.path(VERIFICATION_RESULT),
        ctx.header("verification-result"),
        &record,
    )?;
    let r = &record.result;
    println!("{}: {}", r.controller_id, r.statement());
    println!("verdict: {}", if r.pass { "pass" } else { "FAIL (a rollout crashed)" });
    Ok(Outcome::from_pass(r.pass))
}

fn cmd_validate(ctx: &Context, gap_path: &Path, verification_path: &Path) -> Result<Outcome> {
    let c = &ctx.config;
    let gap = ctx.load_gap(gap_path)?;
    let record =
        records::read_document::<VerificationRecord>(verification_path, "verification-result")?.body;

    let fresh = sample_comparisons(
        &c.profile,
        &c.gap.sampling,
        c.validation.gap_samples,
        gap.master_seed,
        Domain::GapFresh,
        ctx.workers,
    )?;
    let gap_check = validate_gap(&gap, &fresh)?;
    let gap_values: Vec<f64> = fresh.iter().map(|s| s.gap_value).collect();
    records::write_document(&ctx.path(GAP_VALIDATION), ctx.header("gap-validation"), &gap_check)?;
    records::write_histogram_csv(
        &ctx.path(GAP_HISTOGRAM),
        &ctx.header("gap-histogram"),
        &histogram(&gap_values, c.validation.histogram_bins),
        gap_check.cutoff,
        gap.gap,
    )?;
    println!(
        "gap: {:.4} of {} fresh gaps exceed {:.6} (eps {}), empirical cutoff {:.6}: {}",
        gap_check.violation,
        gap_check.fresh_count,
        gap.gap,
        gap_check.epsilon,
        gap_check.cutoff,
        if gap_check.pass { "pass" } else { "FAIL" }
    );

    let set = DisturbanceSet::new(record.radius, c.profile.norm)?;
    let setup = c.verification_setup();
    let safety_check = validate_verification(
        &record.result,
        &setup,
        &set,
        c.validation.safety_samples,
        ctx.workers,
    )?;
    records::write_document(
        &ctx.path(SAFETY_VALIDATION),
        ctx.header("verification-validation"),
        &safety_check,
    )?;
    records::write_histogram_csv(
        &ctx.path(SAFETY_HISTOGRAM),
        &ctx.header("safety-histogram"),
        &histogram(&safety_check.values, c.validation.histogram_bins),
        safety_check.cutoff,
        record.result.min_safety,
    )?;
    println!(
        "safety: {:.4} of {} fresh values below {:.4} (eps {}), empirical cutoff {:.4}, crashes {:.4}: {}",
        safety_check.violation,
        safety_check.fresh_count,
        safety_check.min_safety,
        safety_check.epsilon,
        safety_check.cutoff,
        safety_check.crash_fraction,
        if safety_check.pass {
            "pass"
        } else if !safety_check.controller_verified {
            "FAIL (controller was not verified)"
        } else {
            "FAIL"
        }
    );
    Ok(Outcome::from_pass(gap_check.pass && safety_check.pass))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub index: u64,
    pub success: bool,
    pub safety: SafetyValue,
    pub clamp_events: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentSummary {
    pub controller_id: String,
    pub verified: bool,
    pub runs: usize,
    pub successes: usize,
    pub crashes: usize,
    pub per_run: Vec<RunSummary>,
}

fn cmd_deploy(ctx: &Context, verification_path: &Path, force: bool) -> Result<Outcome> {
    let c = &ctx.config;
    let record =
        records::read_document::<VerificationRecord>(verification_path, "verification-result")?.body;
    let verified = record.result.pass;
    if !verified && !force {
        return Err(Error::UnverifiedController {
            min_safety: record.result.min_safety,
        });
    }
    let report = deploy_test(&c.verification_setup(), c.deploy.runs, c.master_seed, ctx.workers)?;
    records::write_jsonl(&ctx.path(DEPLOY_RUNS), ctx.header("deploy-runs"), &report.runs)?;
    let summary = DeploymentSummary {
        controller_id: report.controller_id.clone(),
        verified,
        runs: report.runs.len(),
        successes: report.successes,
        crashes: report.crashes,
        per_run: report
            .runs
            .iter()
            .map(|r| RunSummary {
                index: r.index,
                success: r.success,
                safety: r.safety,
                clamp_events: r.clamp_events,
            })
            .collect(),
    };
    records::write_document(&ctx.path(DEPLOY_REPORT), ctx.header("deployment"), &summary)?;
    println!(
        "{}{}: {}/{} runs reached the goal, {} crashed",
        summary.controller_id,
        if verified { "" } else { " (UNVERIFIED)" },
        summary.successes,
        summary.runs,
        summary.crashes
    );
    Ok(Outcome::from_pass(summary.crashes == 0))
}
