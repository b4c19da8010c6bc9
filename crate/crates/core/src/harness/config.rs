//! Experiment configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prior_fit::PriorFitConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Setting {
    Linear,
    Mdp,
}

/// How `sigma0` maps to the prior covariance of the synthetic environment.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovScaling {
    /// `Σ0 = sigma0 · I`, so `sigma0` is the largest prior eigenvalue.
    #[default]
    Linear,
    /// `Σ0 = sigma0² · I`.
    Squared,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum EnvironmentConfig {
    /// Indicator actions; component `s` has mean 0.9 at coordinate `s` and
    /// 0.1 elsewhere.
    Synthetic {
        dim: usize,
        num_latent: usize,
        sigma0: f64,
        #[serde(default = "default_noise_sd")]
        noise_sd: f64,
        #[serde(default)]
        cov_scaling: CovScaling,
    },
    /// Action sets drawn from a labelled feature table.
    Features {
        /// Feature CSV. Relative paths resolve against the config file.
        path: Option<PathBuf>,
        /// Generate a table instead of reading one.
        synthetic: Option<SyntheticTable>,
        #[serde(default = "default_reward_hi")]
        reward_hi: f64,
        #[serde(default = "default_reward_lo")]
        reward_lo: f64,
        #[serde(default = "default_k_actions")]
        k_actions: usize,
        /// Components of the fitted mixture prior.
        #[serde(default = "default_feature_latent")]
        num_latent: usize,
        /// Mixture prior file; fitted from the table when absent.
        prior: Option<PathBuf>,
        /// Unimodal prior file for `units`; fitted when absent.
        unimodal_prior: Option<PathBuf>,
        #[serde(default)]
        fit: PriorFitConfig,
    },
    RiverSwim {
        #[serde(default = "default_riverswim_states")]
        num_states: usize,
        #[serde(default = "default_riverswim_horizon")]
        horizon: usize,
        #[serde(default = "default_concentration")]
        concentration: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticTable {
    pub dim: usize,
    pub num_classes: usize,
    pub per_class: usize,
    pub spread: f64,
}

fn default_noise_sd() -> f64 {
    0.1
}
fn default_reward_hi() -> f64 {
    0.9
}
fn default_reward_lo() -> f64 {
    0.1
}
fn default_k_actions() -> usize {
    10
}
fn default_feature_latent() -> usize {
    10
}
fn default_riverswim_states() -> usize {
    10
}
fn default_riverswim_horizon() -> usize {
    20
}
fn default_concentration() -> f64 {
    10.0
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AgentKind {
    /// Thompson sampling with the mixture prior.
    Mixts,
    /// Thompson sampling with the uninformative prior `N(0, I)`.
    Ts,
    /// Thompson sampling with a single Gaussian fitted to the mixture.
    Units,
    Exp4,
    CorralExp4,
    /// Posterior sampling with uniform Beta/Dirichlet priors.
    Psrl,
    /// Plays the optimal action or policy.
    Oracle,
}

impl AgentKind {
    pub fn default_name(self) -> &'static str {
        match self {
            AgentKind::Mixts => "mixts",
            AgentKind::Ts => "ts",
            AgentKind::Units => "units",
            AgentKind::Exp4 => "exp4",
            AgentKind::CorralExp4 => "corral_exp4",
            AgentKind::Psrl => "psrl",
            AgentKind::Oracle => "oracle",
        }
    }

    fn allowed_in(self, setting: Setting) -> bool {
        match setting {
            Setting::Linear => !matches!(self, AgentKind::Psrl),
            Setting::Mdp => matches!(self, AgentKind::Mixts | AgentKind::Psrl | AgentKind::Oracle),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentConfig {
    pub kind: AgentKind,
    pub name: Option<String>,
    /// Exp4 learning rate; default `sqrt(2 ln L / (n K))`.
    pub learning_rate: Option<f64>,
    /// Exp4 exploration; default `min(0.5, sqrt(L ln L / n))`.
    pub exploration: Option<f64>,
}

impl AgentConfig {
    pub fn of(kind: AgentKind) -> Self {
        AgentConfig {
            kind,
            name: None,
            learning_rate: None,
            exploration: None,
        }
    }

    pub fn name(&self) -> &str {
        self.name.as_deref().unwrap_or(self.kind.default_name())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    Sigma0,
    NumLatent,
    Concentration,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DiagnosticsConfig {
    /// Scale on the width term in `G`; defaults to the setting's standard value.
    pub eta: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub setting: Setting,
    /// Rounds (linear) or episodes (MDP).
    pub n: usize,
    pub replications: usize,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<PathBuf>,
    /// Worker threads; 0 uses all cores.
    #[serde(default)]
    pub workers: usize,
    #[serde(default)]
    pub diagnostics: bool,
    pub diagnostics_options: Option<DiagnosticsConfig>,
    pub environment: EnvironmentConfig,
    pub agents: Vec<AgentConfig>,
    pub sweep: Option<SweepConfig>,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file; relative paths inside it are resolved against
    /// the file's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(q) = p {
                if q.is_relative() {
                    *q = base.join(&q);
                }
            }
        };
        if let EnvironmentConfig::Features {
            path,
            prior,
            unimodal_prior,
            ..
        } = &mut self.environment
        {
            fix(path);
            fix(prior);
            fix(unimodal_prior);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.replications == 0 {
            return bad("replications must be at least 1".into());
        }
        if self.agents.is_empty() {
            return bad("no agents configured".into());
        }
        let env_setting = match self.environment {
            EnvironmentConfig::RiverSwim { .. } => Setting::Mdp,
            _ => Setting::Linear,
        };
        if env_setting != self.setting {
            return bad(format!("environment does not match setting {:?}", self.setting));
        }
        for a in &self.agents {
            if !a.kind.allowed_in(self.setting) {
                return bad(format!("agent kind {:?} is not available in the {:?} setting", a.kind, self.setting));
            }
        }
        let mut names: Vec<&str> = self.agents.iter().map(|a| a.name()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return bad("agent names must be unique".into());
        }
        if names.iter().any(|n| n.contains([',', '"', '\n', '\r'])) {
            return bad("agent names may not contain commas, quotes or newlines".into());
        }
        match &self.environment {
            EnvironmentConfig::Synthetic { dim, num_latent, sigma0, noise_sd, .. } => {
                if *dim == 0 || *num_latent == 0 {
                    return bad("synthetic environment needs dim >= 1 and num_latent >= 1".into());
                }
                if num_latent > dim {
                    return bad(format!("num_latent ({num_latent}) cannot exceed dim ({dim})"));
                }
                if !(*sigma0 >= 0.0) || !(*noise_sd > 0.0) {
                    return bad("sigma0 must be >= 0 and noise_sd > 0".into());
                }
            }
            EnvironmentConfig::Features {
                path,
                synthetic,
                reward_hi,
                reward_lo,
                k_actions,
                num_latent,
                ..
            } => {
                if path.is_some() == synthetic.is_some() {
                    return bad("feature environment needs exactly one of `path` or `synthetic`".into());
                }
                if !(0.0..=1.0).contains(reward_hi) || !(0.0..=1.0).contains(reward_lo) {
                    return bad("reward_hi and reward_lo must lie in [0, 1]".into());
                }
                if *k_actions == 0 || *num_latent == 0 {
                    return bad("k_actions and num_latent must be positive".into());
                }
            }
            EnvironmentConfig::RiverSwim { num_states, horizon, concentration } => {
                if *num_states < 3 || *horizon == 0 {
                    return bad("RiverSwim needs num_states >= 3 and horizon >= 1".into());
                }
                if !(*concentration > 0.0 && *concentration <= 10.0) {
                    return bad("concentration must lie in (0, 10]".into());
                }
            }
        }
        if let Some(sweep) = &self.sweep {
            if sweep.values.is_empty() {
                return bad("sweep has no values".into());
            }
            let ok = match (sweep.axis, &self.environment) {
                (SweepAxis::Sigma0, EnvironmentConfig::Synthetic { .. }) => sweep.values.iter().all(|v| *v >= 0.0),
                (SweepAxis::NumLatent, EnvironmentConfig::Synthetic { dim, .. }) => sweep
                    .values
                    .iter()
                    .all(|v| v.fract() == 0.0 && *v >= 1.0 && *v <= *dim as f64),
                (SweepAxis::NumLatent, EnvironmentConfig::Features { .. }) => {
                    sweep.values.iter().all(|v| v.fract() == 0.0 && *v >= 1.0)
                }
                (SweepAxis::Concentration, EnvironmentConfig::RiverSwim { .. }) => {
                    sweep.values.iter().all(|v| *v > 0.0 && *v <= 10.0)
                }
                _ => return bad(format!("sweep axis {:?} does not apply to this environment", sweep.axis)),
            };
            if !ok {
                return bad(format!("invalid values for sweep axis {:?}", sweep.axis));
            }
        }
        Ok(())
    }

    /// Sweep values, or a single `0` when there is no sweep.
    pub fn sweep_values(&self) -> Vec<f64> {
        self.sweep.as_ref().map_or(vec![0.0], |s| s.values.clone())
    }

    /// The environment with sweep value `v` substituted.
    pub fn environment_at(&self, v: f64) -> EnvironmentConfig {
        let mut env = self.environment.clone();
        let Some(sweep) = &self.sweep else { return env };
        match (&mut env, sweep.axis) {
            (EnvironmentConfig::Synthetic { sigma0, .. }, SweepAxis::Sigma0) => *sigma0 = v,
            (EnvironmentConfig::Synthetic { num_latent, .. }, SweepAxis::NumLatent)
            | (EnvironmentConfig::Features { num_latent, .. }, SweepAxis::NumLatent) => *num_latent = v as usize,
            (EnvironmentConfig::RiverSwim { concentration, .. }, SweepAxis::Concentration) => *concentration = v,
            _ => {}
        }
        env
    }

    /// Largest latent count over the sweep, which sizes the diagnostics columns.
    pub fn max_latent(&self) -> usize {
        self.sweep_values()
            .into_iter()
            .map(|v| match self.environment_at(v) {
                EnvironmentConfig::Synthetic { num_latent, .. } | EnvironmentConfig::Features { num_latent, .. } => num_latent,
                EnvironmentConfig::RiverSwim { .. } => 2,
            })
            .max()
            .unwrap_or(1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const BASE: &str = r#"
setting = "linear"
n = 100
replications = 3
seed = 7

[environment]
kind = "synthetic"
dim = 4
num_latent = 2
sigma0 = 0.1

[[agents]]
kind = "mixts"

[[agents]]
kind = "exp4"
exploration = 0.2
"#;

    #[test]
    fn parses_minimal_config() {
        let cfg = ExperimentConfig::from_toml(BASE).unwrap();
        assert_eq!(cfg.agents.len(), 2);
        assert_eq!(cfg.agents[1].exploration, Some(0.2));
        assert_eq!(cfg.sweep_values(), vec![0.0]);
        match cfg.environment {
            EnvironmentConfig::Synthetic { noise_sd, cov_scaling, .. } => {
                assert_eq!(noise_sd, 0.1);
                assert_eq!(cov_scaling, CovScaling::Linear);
            }
            _ => panic!(),
        }
    }

    #[test]
    fn sweep_substitution() {
        let text = format!("{BASE}\n[sweep]\naxis = \"sigma0\"\nvalues = [0.01, 0.5]\n");
        let cfg = ExperimentConfig::from_toml(&text).unwrap();
        match cfg.environment_at(0.5) {
            EnvironmentConfig::Synthetic { sigma0, .. } => assert_eq!(sigma0, 0.5),
            _ => panic!(),
        }
        let text = format!("{BASE}\n[sweep]\naxis = \"num_latent\"\nvalues = [1, 3]\n");
        assert_eq!(ExperimentConfig::from_toml(&text).unwrap().max_latent(), 3);
    }

    #[test]
    fn rejects_invalid_configs() {
        let cases = [
            BASE.replace("n = 100", "n = 0"),
            BASE.replace("replications = 3", "replications = 0"),
            BASE.replace("num_latent = 2", "num_latent = 5"),
            BASE.replace("kind = \"exp4\"", "kind = \"psrl\""),
            BASE.replace("kind = \"exp4\"", "kind = \"mixts\""),
            BASE.replace("setting = \"linear\"", "setting = \"mdp\""),
            BASE.replace("seed = 7", "seed = 7\nbogus = 1"),
            format!("{BASE}\n[sweep]\naxis = \"concentration\"\nvalues = [1.0]\n"),
            format!("{BASE}\n[sweep]\naxis = \"num_latent\"\nvalues = [1.5]\n"),
        ];
        for text in cases {
            let err = ExperimentConfig::from_toml(&text).unwrap_err();
            assert!(err.is_config(), "{err}");
        }
    }

    #[test]
    fn riverswim_defaults() {
        let text = r#"
setting = "mdp"
n = 10
replications = 1
[environment]
kind = "riverswim"
[[agents]]
kind = "psrl"
"#;
        let cfg = ExperimentConfig::from_toml(text).unwrap();
        assert_eq!(
            cfg.environment,
            EnvironmentConfig::RiverSwim { num_states: 10, horizon: 20, concentration: 10.0 }
        );
    }
}
