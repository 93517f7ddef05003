//! Experiment configuration. A TOML file names a platform, whose preset
//! supplies every value; the file's own tables are deep-merged on top, so a
//! config only spells out what it changes.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dynamics::{Platform, PlatformProfile};
use crate::error::{Error, Result};
use crate::gap::SamplingConfig;
use crate::verification::{
    default_horizon, ControllerKind, NavConfig, SafetyConfig, ThetaSpec, VerificationSetup,
    WalkerDynamics,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GapSection {
    pub samples: usize,
    pub epsilon: f64,
    pub sampling: SamplingConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerificationSection {
    pub samples: usize,
    pub epsilon: f64,
    pub horizon: usize,
    pub controller: ControllerKind,
    pub theta: ThetaSpec,
    pub nav: NavConfig,
    pub safety: SafetyConfig,
    pub walkers: WalkerDynamics,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ValidationSection {
    pub gap_samples: usize,
    pub safety_samples: usize,
    pub histogram_bins: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeploySection {
    pub runs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    pub dir: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub platform: Platform,
    pub master_seed: u64,
    pub profile: PlatformProfile,
    pub gap: GapSection,
    pub coverage: CoverageSection,
    pub verification: VerificationSection,
    pub validation: ValidationSection,
    pub deploy: DeploySection,
    pub output: OutputSection,
}

impl ExperimentConfig {
    pub fn for_platform(platform: Platform) -> Self {
        let deploy_runs = match platform {
            Platform::Robotarium => 40,
            Platform::Quadruped => 10,
        };
        Self {
            platform,
            master_seed: 1,
            profile: PlatformProfile::for_platform(platform),
            gap: GapSection {
                samples: 600,
                epsilon: 0.005,
                sampling: SamplingConfig::for_platform(platform),
            },
            coverage: CoverageSection { samples: 1800 },
            verification: VerificationSection {
                samples: 300,
                epsilon: 0.01,
                horizon: default_horizon(platform),
                controller: ControllerKind::Navigation,
                theta: ThetaSpec::for_platform(platform),
                nav: NavConfig::for_platform(platform),
                safety: SafetyConfig::for_platform(platform),
                walkers: WalkerDynamics::default(),
            },
            validation: ValidationSection {
                gap_samples: 1800,
                safety_samples: 20_000,
                histogram_bins: 40,
            },
            deploy: DeploySection { runs: deploy_runs },
            output: OutputSection { dir: PathBuf::from("out") },
        }
    }

    /// Parses a config document. `platform` is required; everything else
    /// falls back to that platform's preset.
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(format!("not valid TOML: {e}")))?;
        let platform: Platform = match user.get("platform") {
            Some(toml::Value::String(s)) => s.parse()?,
            Some(other) => {
                return Err(Error::Config(format!("platform must be a string, got {other}")))
            }
            None => return Err(Error::Config("config must name a platform".into())),
        };
        let mut merged = toml::Table::try_from(Self::for_platform(platform))
            .map_err(|e| Error::Config(format!("cannot serialize preset: {e}")))?;
        deep_merge(&mut merged, user);
        let config: Self = toml::Value::Table(merged)
            .try_into()
            .map_err(|e| Error::Config(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.profile.platform != self.platform {
            return Err(Error::Config(format!(
                "profile.platform = {} does not match platform = {}",
                self.profile.platform.as_str(),
                self.platform.as_str()
            )));
        }
        let probability = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!("{name} must lie in (0, 1), got {v}")))
            }
        };
        probability("gap.epsilon", self.gap.epsilon)?;
        probability("verification.epsilon", self.verification.epsilon)?;
        let counts = [
            ("gap.samples", self.gap.samples),
            ("gap.sampling.chains", self.gap.sampling.chains),
            ("gap.sampling.step_budget", self.gap.sampling.step_budget),
            ("coverage.samples", self.coverage.samples),
            ("verification.samples", self.verification.samples),
            ("verification.horizon", self.verification.horizon),
            ("validation.gap_samples", self.validation.gap_samples),
            ("validation.safety_samples", self.validation.safety_samples),
            ("validation.histogram_bins", self.validation.histogram_bins),
            ("deploy.runs", self.deploy.runs),
        ];
        for (name, n) in counts {
            if n == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        let s = &self.gap.sampling;
        if !(s.waypoint_tolerance.is_finite() && s.waypoint_tolerance > 0.0) {
            return Err(Error::Config("gap.sampling.waypoint_tolerance must be positive".into()));
        }
        if !(s.tracker.k_rho > 0.0 && s.tracker.k_alpha > 0.0) {
            return Err(Error::Config("gap.sampling.tracker gains must be positive".into()));
        }
        self.verification_setup().validate()
    }

    pub fn verification_setup(&self) -> VerificationSetup {
        let v = &self.verification;
        VerificationSetup {
            profile: self.profile.clone(),
            theta: v.theta,
            controller: v.controller,
            nav: v.nav,
            safety: v.safety,
            walkers: v.walkers,
            horizon: v.horizon,
        }
    }

    /// SHA-256 of the canonical JSON encoding, hex encoded. Field order is
    /// fixed by the struct layout, so equal configs hash equally however
    /// they were written. The output directory does not affect results and
    /// is left out.
    pub fn hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.output.dir = PathBuf::new();
        let json = serde_json::to_vec(&canonical).expect("config always serializes");
        hex::encode(Sha256::digest(json))
    }
}

/// Overlays `user` onto `base`, recursing into tables present in both.
/// Arrays and scalars are replaced wholesale.
fn deep_merge(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => deep_merge(b, u),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
