//! Replicated experiments: environments, agents, regret accounting, CSV.
//!
//! Every replication is seeded from `(seed, sweep index, replication)` only,
//! so the output is the same for any number of worker threads. All agents
//! in a replication face the same sampled instance and the same reward
//! noise sequence.

pub mod config;
pub mod env;
mod output;

pub use config::{
    AgentConfig, AgentKind, CovScaling, EnvironmentConfig, ExperimentConfig, Setting, SweepAxis, SweepConfig,
};
pub use env::{moment_matched, synthetic_component_mean, synthetic_prior, LinearEnv, Round};
pub use output::{aggregate, final_rows, format_decimal, write_aggregate_csv, write_csv, AggregateRow};

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::bounds::{theorem1_bound, theorem2_bound, BoundInputsLinear, BoundInputsMdp};
use crate::baselines::{psrl_agent, CorralExp4Agent, Exp4Agent, Exp4Params, Exp4State};
use crate::diagnostics::{self, LatentDiagnostics};
use crate::error::{Error, Result};
use crate::features::{synthetic_feature_table, FeatureTable};
use crate::linear::{BanditAgent, GaussianMixturePrior, MixTsAgent};
use crate::mixture::RngStream;
use crate::prior_fit::{fit_gmm, fitted_parameters, build_mixture_prior, load_prior, PriorFitConfig};
use crate::tabular::{plan, policy_value, riverswim_prior, EpisodicAgent, MixTsMdpAgent, RiverSwimPrior, TabularMdp};

const STREAM_ENV: u64 = 1;
const STREAM_NOISE: u64 = 2;
const STREAM_AGENT: u64 = 3;
const STREAM_FIT: u64 = 4;
const STREAM_TABLE: u64 = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticRow {
    pub g: Vec<f64>,
    /// Whether the true latent state is in the confidence set. `None` when
    /// the environment's latent state does not index the prior components.
    pub in_c: Option<bool>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegretRecord {
    pub sweep: f64,
    pub rep: usize,
    pub agent: Arc<str>,
    /// 1-based round or episode.
    pub t: usize,
    pub inst_regret: f64,
    pub cum_regret: f64,
    pub diagnostics: Option<DiagnosticRow>,
}

/// One round or episode of a single agent.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub regret: f64,
    /// Posterior probability of the true latent state after the update,
    /// for mixture agents whose components line up with the environment.
    pub latent_mass: Option<f64>,
    pub diagnostics: Option<DiagnosticRow>,
}

/// Diagnostics settings for one replication.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticOptions {
    pub eta: Option<f64>,
}

/// Runs `n` rounds of one agent (or the oracle when `agent` is `None`).
/// `aligned` says whether the environment's latent index refers to the
/// agent's prior components.
pub fn run_linear_replication(
    env: &LinearEnv,
    mut agent: Option<&mut dyn BanditAgent>,
    n: usize,
    noise: &mut RngStream,
    diag: Option<DiagnosticOptions>,
    aligned: bool,
) -> Result<Vec<Step>> {
    let mut tracker = match (&agent, diag) {
        (Some(a), Some(opts)) => match a.mixture_posterior() {
            Some(post) => {
                let eta = match opts.eta {
                    Some(e) => e,
                    None => diagnostics::default_bandit_eta(n, env.dim())
                        .map_err(|_| Error::Config("diagnostics need n >= 2".into()))?,
                };
                Some(LatentDiagnostics::new(post.num_components(), n, eta)?)
            }
            None => None,
        },
        _ => None,
    };
    let sigma = match env.noise_sd() {
        Some(s) => s,
        None => agent.as_ref().and_then(|a| a.mixture_posterior()).map_or(1.0, |p| p.prior().noise_sd()),
    };
    let truth = env.latent();
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let round = env.round(noise)?;
        let chosen = match agent.as_deref_mut() {
            Some(a) => a.select(&round.actions)?,
            None => round.best_action(),
        };
        if chosen >= round.actions.len() {
            return Err(Error::Numerical(format!("agent chose action {chosen} out of range")));
        }
        let mean = round.means[chosen];
        let regret = round.best_mean() - mean;
        let y = env.reward(mean, noise);
        let action = round.actions.get(chosen);
        let mut latent_mass = None;
        let mut diag_row = None;
        if let Some(a) = agent.as_deref_mut() {
            if let (Some(tr), Some(s), Some(post)) = (tracker.as_mut(), a.last_latent(), a.mixture_posterior()) {
                let mu_bar = post.mean_reward(s, action);
                let width = post.confidence_width(s, action, n)?;
                tr.record_bandit_round(s, mu_bar, width, y)?;
            }
            a.observe(action, y)?;
            if let Some(post) = a.mixture_posterior() {
                if aligned && truth < post.num_components() {
                    latent_mass = Some(post.weights().probability(truth));
                }
            }
            if let Some(tr) = tracker.as_ref() {
                let in_c = if aligned && truth < tr.g().len() {
                    Some(tr.contains(truth, diagnostics::Setting::Bandit, sigma)?)
                } else {
                    None
                };
                diag_row = Some(DiagnosticRow { g: tr.g().to_vec(), in_c });
            }
        }
        steps.push(Step {
            regret,
            latent_mass,
            diagnostics: diag_row,
        });
    }
    Ok(steps)
}

/// Runs `n` episodes of one agent (or the oracle) on a fixed MDP. Regret is
/// the exact value gap between the optimal and the played policy.
pub fn run_mdp_replication(
    mdp: &TabularMdp,
    latent: usize,
    mut agent: Option<&mut dyn EpisodicAgent>,
    n: usize,
    noise: &mut RngStream,
    diag: Option<DiagnosticOptions>,
) -> Result<Vec<Step>> {
    let optimal = plan(mdp);
    let v_opt = policy_value(mdp, &optimal);
    let h = mdp.horizon();
    let mut tracker = match (&agent, diag) {
        (Some(a), Some(opts)) => match a.mixture_posterior() {
            Some(post) => Some(LatentDiagnostics::new(
                post.prior().num_components(),
                n,
                opts.eta.unwrap_or(diagnostics::DEFAULT_MDP_ETA),
            )?),
            None => None,
        },
        _ => None,
    };
    if tracker.is_some() && n < 2 {
        return Err(Error::Config("diagnostics need n >= 2".into()));
    }
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let policy = match agent.as_deref_mut() {
            Some(a) => a.begin_episode()?,
            None => optimal.clone(),
        };
        let regret = v_opt - policy_value(mdp, &policy);
        // value and widths under the sampled component, before this episode's data
        let pre = match (tracker.is_some(), agent.as_deref()) {
            (true, Some(a)) => match (a.last_latent(), a.mixture_posterior()) {
                (Some(s), Some(post)) => {
                    let vbar = policy_value(&post.mean_mdp(s)?, &policy);
                    Some((s, vbar, post.confidence_widths(s, n)?))
                }
                _ => None,
            },
            _ => None,
        };
        let mut x = mdp.sample_initial(noise);
        let mut ret = 0.0;
        let mut width_sum = 0.0;
        for i in 0..h {
            let a = policy.action(i, x);
            let (r, y) = mdp.step(x, a, noise);
            ret += f64::from(r);
            if let Some((_, _, w)) = &pre {
                let p = x * mdp.num_actions() + a;
                width_sum += w.reward[p] + w.transition[p];
            }
            if let Some(ag) = agent.as_deref_mut() {
                ag.observe_step(x, a, r, y)?;
            }
            x = y;
        }
        let mut latent_mass = None;
        let mut diag_row = None;
        if let Some(ag) = agent.as_deref() {
            if let Some(post) = ag.mixture_posterior() {
                if latent < post.prior().num_components() {
                    latent_mass = Some(post.weights().probability(latent));
                }
            }
        }
        if let (Some(tr), Some((s, vbar, _))) = (tracker.as_mut(), pre) {
            tr.record_mdp_episode(s, vbar, width_sum, ret, h)?;
            let in_c = if latent < tr.g().len() {
                Some(tr.contains(latent, diagnostics::Setting::Mdp, h as f64)?)
            } else {
                None
            };
            diag_row = Some(DiagnosticRow { g: tr.g().to_vec(), in_c });
        }
        steps.push(Step {
            regret,
            latent_mass,
            diagnostics: diag_row,
        });
    }
    Ok(steps)
}

/// Everything a sweep point shares across replications.
#[derive(Debug, Clone)]
pub enum SweepPoint {
    Linear {
        /// Sampling distribution of the instance; `None` for feature tables.
        truth: Option<GaussianMixturePrior>,
        table: Option<Arc<FeatureTable>>,
        k_actions: usize,
        reward_hi: f64,
        reward_lo: f64,
        mixture: GaussianMixturePrior,
        unimodal: GaussianMixturePrior,
    },
    Mdp(RiverSwimPrior),
}

impl SweepPoint {
    pub fn prepare(cfg: &ExperimentConfig, sweep_index: usize, env: &EnvironmentConfig) -> Result<Self> {
        match env {
            EnvironmentConfig::Synthetic {
                dim,
                num_latent,
                sigma0,
                noise_sd,
                cov_scaling,
            } => {
                let prior = synthetic_prior(*dim, *num_latent, *sigma0, *noise_sd, *cov_scaling)?;
                Ok(SweepPoint::Linear {
                    truth: Some(prior.clone()),
                    table: None,
                    k_actions: *dim,
                    reward_hi: 0.0,
                    reward_lo: 0.0,
                    unimodal: moment_matched(&prior)?,
                    mixture: prior,
                })
            }
            EnvironmentConfig::Features {
                path,
                synthetic,
                reward_hi,
                reward_lo,
                k_actions,
                num_latent,
                prior,
                unimodal_prior,
                fit,
            } => {
                let table = match (path, synthetic) {
                    (Some(p), _) => FeatureTable::load(p)?,
                    (None, Some(s)) => {
                        let mut rng = RngStream::for_path(cfg.seed, &[STREAM_TABLE]);
                        synthetic_feature_table(s.dim, s.num_classes, s.per_class, s.spread, &mut rng)?
                    }
                    (None, None) => return Err(Error::Config("feature environment has no table".into())),
                };
                table.check_all_classes_present()?;
                let fit = PriorFitConfig {
                    reward_hi: *reward_hi,
                    reward_lo: *reward_lo,
                    ..fit.clone()
                };
                let (mixture, unimodal) = feature_priors(cfg.seed, sweep_index, &table, *num_latent, prior.as_deref(), unimodal_prior.as_deref(), &fit)?;
                if mixture.dim() != table.dim() || unimodal.dim() != table.dim() {
                    return Err(Error::Config(format!(
                        "prior dimension {} does not match feature dimension {}",
                        mixture.dim(),
                        table.dim()
                    )));
                }
                Ok(SweepPoint::Linear {
                    truth: None,
                    table: Some(Arc::new(table)),
                    k_actions: *k_actions,
                    reward_hi: *reward_hi,
                    reward_lo: *reward_lo,
                    mixture,
                    unimodal,
                })
            }
            EnvironmentConfig::RiverSwim {
                num_states,
                horizon,
                concentration,
            } => Ok(SweepPoint::Mdp(riverswim_prior(*num_states, *concentration, *horizon)?)),
        }
    }
}

fn feature_priors(
    seed: u64,
    sweep_index: usize,
    table: &FeatureTable,
    num_latent: usize,
    prior: Option<&std::path::Path>,
    unimodal: Option<&std::path::Path>,
    fit: &PriorFitConfig,
) -> Result<(GaussianMixturePrior, GaussianMixturePrior)> {
    if let (Some(p), Some(u)) = (prior, unimodal) {
        return Ok((load_prior(p)?, load_prior(u)?));
    }
    let mut rng = RngStream::for_path(seed, &[STREAM_FIT, sweep_index as u64]);
    let thetas = fitted_parameters(table, fit, &mut rng)?;
    let mixture = match prior {
        Some(p) => load_prior(p)?,
        None => build_mixture_prior(&fit_gmm(&thetas, num_latent, &fit.gmm, &mut rng)?, fit.noise_sd)?,
    };
    let unimodal = match unimodal {
        Some(u) => load_prior(u)?,
        None => build_mixture_prior(&fit_gmm(&thetas, 1, &fit.gmm, &mut rng)?, fit.noise_sd)?,
    };
    Ok((mixture, unimodal))
}

fn build_bandit_agent(
    spec: &AgentConfig,
    point: &SweepPoint,
    n: usize,
    rng: RngStream,
) -> Result<Option<Box<dyn BanditAgent>>> {
    let SweepPoint::Linear { mixture, unimodal, k_actions, .. } = point else {
        return Err(Error::Config("bandit agent in an MDP experiment".into()));
    };
    let name = spec.name().to_string();
    let l = mixture.num_components();
    let exp4_state = || {
        let (eta, gamma) = Exp4Params {
            learning_rate: spec.learning_rate,
            exploration: spec.exploration,
        }
        .resolve(l, n, *k_actions);
        Exp4State::new(l, eta, gamma).map_err(|e| Error::Config(e.to_string()))
    };
    Ok(match spec.kind {
        AgentKind::Mixts => Some(Box::new(MixTsAgent::new(name, mixture.clone(), rng)?)),
        AgentKind::Units => Some(Box::new(MixTsAgent::new(name, unimodal.clone(), rng)?)),
        AgentKind::Ts => {
            let d = mixture.dim();
            let prior = GaussianMixturePrior::unimodal(DVector::zeros(d), DMatrix::identity(d, d), mixture.noise_sd())?;
            Some(Box::new(MixTsAgent::new(name, prior, rng)?))
        }
        AgentKind::Exp4 => Some(Box::new(Exp4Agent::new(name, mixture, exp4_state()?, rng)?)),
        AgentKind::CorralExp4 => Some(Box::new(CorralExp4Agent::new(name, mixture.clone(), exp4_state()?, rng)?)),
        AgentKind::Oracle => None,
        AgentKind::Psrl => return Err(Error::Config("psrl is an MDP agent".into())),
    })
}

fn build_episodic_agent(spec: &AgentConfig, rs: &RiverSwimPrior, rng: RngStream) -> Result<Option<Box<dyn EpisodicAgent>>> {
    let name = spec.name().to_string();
    let p = &rs.prior;
    Ok(match spec.kind {
        AgentKind::Mixts => Some(Box::new(MixTsMdpAgent::new(name, p.clone(), rng))),
        AgentKind::Psrl => Some(Box::new(psrl_agent(
            name,
            p.num_states(),
            p.num_actions(),
            p.horizon(),
            p.initial().to_vec(),
            rng,
        )?)),
        AgentKind::Oracle => None,
        other => return Err(Error::Config(format!("agent kind {other:?} is not available for MDPs"))),
    })
}

/// All agents on one `(sweep point, replication)`.
pub fn run_replication(
    cfg: &ExperimentConfig,
    point: &SweepPoint,
    sweep_index: usize,
    sweep_value: f64,
    rep: usize,
) -> Result<Vec<RegretRecord>> {
    let (s_idx, r_idx) = (sweep_index as u64, rep as u64);
    let mut env_rng = RngStream::for_path(cfg.seed, &[STREAM_ENV, s_idx, r_idx]);
    let diag = cfg.diagnostics.then(|| DiagnosticOptions {
        eta: cfg.diagnostics_options.as_ref().and_then(|d| d.eta),
    });
    let mut records = Vec::with_capacity(cfg.agents.len() * cfg.n);
    match point {
        SweepPoint::Linear {
            truth,
            table,
            k_actions,
            reward_hi,
            reward_lo,
            ..
        } => {
            let env = match (truth, table) {
                (Some(prior), _) => LinearEnv::synthetic(prior, &mut env_rng)?,
                (None, Some(t)) => LinearEnv::features(t.clone(), *k_actions, *reward_hi, *reward_lo, &mut env_rng)?,
                (None, None) => return Err(Error::Config("linear sweep point has no environment".into())),
            };
            let aligned = truth.is_some();
            for (i, spec) in cfg.agents.iter().enumerate() {
                let rng = RngStream::for_path(cfg.seed, &[STREAM_AGENT, s_idx, r_idx, i as u64]);
                let mut agent = build_bandit_agent(spec, point, cfg.n, rng)?;
                if agent.as_ref().is_some_and(|a| a.mixture_posterior().is_some_and(|p| p.dim() != env.dim())) {
                    return Err(Error::Config("agent prior dimension does not match the environment".into()));
                }
                let mut noise = RngStream::for_path(cfg.seed, &[STREAM_NOISE, s_idx, r_idx]);
                let steps = run_linear_replication(&env, agent.as_mut().map(|a| &mut **a as &mut dyn BanditAgent), cfg.n, &mut noise, diag, aligned)?;
                push_records(&mut records, steps, sweep_value, rep, spec.name());
            }
        }
        SweepPoint::Mdp(rs) => {
            let (latent, mdp) = rs.prior.sample(&mut env_rng)?;
            for (i, spec) in cfg.agents.iter().enumerate() {
                let rng = RngStream::for_path(cfg.seed, &[STREAM_AGENT, s_idx, r_idx, i as u64]);
                let mut agent = build_episodic_agent(spec, rs, rng)?;
                let mut noise = RngStream::for_path(cfg.seed, &[STREAM_NOISE, s_idx, r_idx]);
                let steps = run_mdp_replication(&mdp, latent, agent.as_mut().map(|a| &mut **a as &mut dyn EpisodicAgent), cfg.n, &mut noise, diag)?;
                push_records(&mut records, steps, sweep_value, rep, spec.name());
            }
        }
    }
    Ok(records)
}

fn push_records(out: &mut Vec<RegretRecord>, steps: Vec<Step>, sweep: f64, rep: usize, agent: &str) {
    let agent: Arc<str> = Arc::from(agent);
    let mut cum = 0.0;
    for (i, s) in steps.into_iter().enumerate() {
        cum += s.regret;
        out.push(RegretRecord {
            sweep,
            rep,
            agent: agent.clone(),
            t: i + 1,
            inst_regret: s.regret,
            cum_regret: cum,
            diagnostics: s.diagnostics,
        });
    }
}

/// Runs every `(sweep value, replication)` pair, in parallel across
/// replications. Records come back ordered by sweep, replication, agent
/// and round.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<RegretRecord>> {
    cfg.validate()?;
    let values = cfg.sweep_values();
    let points = values
        .iter()
        .enumerate()
        .map(|(i, &v)| SweepPoint::prepare(cfg, i, &cfg.environment_at(v)))
        .collect::<Result<Vec<_>>>()?;
    let jobs: Vec<(usize, usize)> = (0..values.len())
        .flat_map(|s| (0..cfg.replications).map(move |r| (s, r)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))?;
    let chunks: Vec<Result<Vec<RegretRecord>>> = pool.install(|| {
        jobs.par_iter()
            .map(|&(s, r)| run_replication(cfg, &points[s], s, values[s], r))
            .collect()
    });
    let mut records = Vec::with_capacity(jobs.len() * cfg.agents.len() * cfg.n);
    for chunk in chunks {
        records.extend(chunk?);
    }
    Ok(records)
}

/// Regret bound at each sweep point: [`theorem1_bound`] for linear settings
/// (with `lambda` the largest prior eigenvalue and `kappa` the largest
/// action norm) and [`theorem2_bound`] for MDPs.
pub fn bound_rows(cfg: &ExperimentConfig, full_constants: bool) -> Result<Vec<(f64, f64)>> {
    cfg.validate()?;
    cfg.sweep_values()
        .into_iter()
        .enumerate()
        .map(|(i, v)| {
            let point = SweepPoint::prepare(cfg, i, &cfg.environment_at(v))?;
            let bound = match &point {
                SweepPoint::Linear { mixture, table, .. } => {
                    let kappa = table.as_ref().map_or(1.0, |t| {
                        (0..t.len()).map(|j| t.row(j).norm()).fold(0.0, f64::max)
                    });
                    theorem1_bound(
                        &BoundInputsLinear {
                            n: cfg.n as u64,
                            d: mixture.dim() as u64,
                            num_latent: mixture.num_components() as u64,
                            sigma: mixture.noise_sd(),
                            kappa,
                            lambda: mixture.lambda_max(),
                        },
                        full_constants,
                    )?
                }
                SweepPoint::Mdp(rs) => theorem2_bound(&BoundInputsMdp {
                    n: cfg.n as u64,
                    num_states: rs.prior.num_states() as u64,
                    num_actions: rs.prior.num_actions() as u64,
                    horizon: rs.prior.horizon() as u64,
                    num_latent: rs.prior.num_components() as u64,
                    lambda_min: rs.prior.min_concentration(),
                })?,
            };
            Ok((v, bound))
        })
        .collect()
}

#[cfg(test)]
mod tests;
