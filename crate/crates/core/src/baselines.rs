//! Comparison agents: unimodal TS, Exp4 over fixed or adapting experts, PSRL.

use log::warn;
use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linear::{select_action, ActionSet, BanditAgent, GaussianMixturePrior, LinearMixturePosterior, MixTsAgent};
use crate::mixture::{MixtureWeights, RngStream};
use crate::tabular::{sample_index, MdpMixturePrior, MixTsMdpAgent};

/// Thompson sampling with a single Gaussian prior, i.e. MixTS with `L = 1`.
pub fn unimodal_ts_agent(
    name: impl Into<String>,
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    noise_sd: f64,
    rng: RngStream,
) -> Result<MixTsAgent> {
    MixTsAgent::new(name, GaussianMixturePrior::unimodal(mean, cov, noise_sd)?, rng)
}

/// PSRL: tabular posterior sampling with uniform Beta(1,1) and Dirichlet(1,…,1)
/// priors.
pub fn psrl_agent(
    name: impl Into<String>,
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial: Vec<f64>,
    rng: RngStream,
) -> Result<MixTsMdpAgent> {
    let prior = MdpMixturePrior::uniform(num_states, num_actions, horizon, initial)?;
    Ok(MixTsMdpAgent::new(name, prior, rng))
}

/// Exp4 hyperparameters. `None` picks the default for the run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Exp4Params {
    pub learning_rate: Option<f64>,
    pub exploration: Option<f64>,
}

/// Cap on the default exploration rate, so that the default never reduces
/// Exp4 to uniform play.
const MAX_DEFAULT_EXPLORATION: f64 = 0.5;

impl Exp4Params {
    /// Resolves defaults: `eta = sqrt(2 ln L / (n K))` and
    /// `gamma = min(0.5, sqrt(L ln L / n))`.
    pub fn resolve(&self, num_experts: usize, horizon: usize, num_actions: usize) -> (f64, f64) {
        let l = num_experts as f64;
        let n = horizon.max(1) as f64;
        let k = num_actions.max(1) as f64;
        let eta = self
            .learning_rate
            .unwrap_or_else(|| (2.0 * l.ln() / (n * k)).sqrt());
        let gamma = self
            .exploration
            .unwrap_or_else(|| (l * l.ln() / n).sqrt().min(MAX_DEFAULT_EXPLORATION));
        (eta, gamma)
    }
}

/// Exponential weights over experts with uniform exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct Exp4State {
    weights: MixtureWeights,
    learning_rate: f64,
    exploration: f64,
    clamp_warned: bool,
}

impl Exp4State {
    pub fn new(num_experts: usize, learning_rate: f64, exploration: f64) -> Result<Self> {
        if !(learning_rate.is_finite() && learning_rate >= 0.0) {
            return Err(Error::Input(format!("Exp4 learning rate must be >= 0, got {learning_rate}")));
        }
        if !(0.0..1.0).contains(&exploration) {
            return Err(Error::Input(format!("Exp4 exploration must lie in [0, 1), got {exploration}")));
        }
        Ok(Exp4State {
            weights: MixtureWeights::uniform(num_experts)?,
            learning_rate,
            exploration,
            clamp_warned: false,
        })
    }

    pub fn weights(&self) -> &MixtureWeights {
        &self.weights
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn exploration(&self) -> f64 {
        self.exploration
    }

    /// `p(a) = (1 - gamma) Σ_s w_s 1{expert s picks a} + gamma / K`.
    pub fn action_probabilities(&self, expert_actions: &[usize], num_actions: usize) -> Vec<f64> {
        let mut p = vec![self.exploration / num_actions as f64; num_actions];
        for (s, &a) in expert_actions.iter().enumerate() {
            p[a] += (1.0 - self.exploration) * self.weights.probability(s);
        }
        p
    }

    /// Importance-weighted update after playing `chosen` and seeing `reward`.
    /// Rewards outside `[0, 1]` are clamped.
    pub fn step(&self, expert_actions: &[usize], num_actions: usize, chosen: usize, reward: f64) -> Result<Self> {
        if expert_actions.len() != self.weights.len() {
            return Err(Error::Input(format!(
                "got {} expert actions for {} experts",
                expert_actions.len(),
                self.weights.len()
            )));
        }
        if chosen >= num_actions || expert_actions.iter().any(|&a| a >= num_actions) {
            return Err(Error::Input("action index out of range".into()));
        }
        if !reward.is_finite() {
            return Err(Error::Input(format!("reward must be finite, got {reward}")));
        }
        let mut next = self.clone();
        let y = reward.clamp(0.0, 1.0);
        if y != reward && !next.clamp_warned {
            warn!("Exp4 reward {reward} clamped to [0, 1]; further clamps are silent");
            next.clamp_warned = true;
        }
        let p = self.action_probabilities(expert_actions, num_actions)[chosen];
        if !(p > 0.0) {
            return Err(Error::Numerical(format!("Exp4 played action {chosen} with probability {p}")));
        }
        let increments: Vec<f64> = expert_actions
            .iter()
            .map(|&a| if a == chosen { self.learning_rate * y / p } else { 0.0 })
            .collect();
        next.weights = self.weights.updated(&increments)?;
        Ok(next)
    }
}

/// Free-function form of [`Exp4State::step`].
pub fn exp4_step(state: &Exp4State, expert_actions: &[usize], num_actions: usize, chosen: usize, reward: f64) -> Result<Exp4State> {
    state.step(expert_actions, num_actions, chosen, reward)
}

fn exp4_sample(state: &Exp4State, expert_actions: &[usize], k: usize, rng: &mut RngStream) -> usize {
    sample_index(&state.action_probabilities(expert_actions, k), rng)
}

/// Exp4 whose experts play greedily against the fixed prior means.
#[derive(Debug, Clone)]
pub struct Exp4Agent {
    name: String,
    experts: Vec<DVector<f64>>,
    state: Exp4State,
    rng: RngStream,
    last: Option<(Vec<usize>, usize, usize)>,
}

impl Exp4Agent {
    pub fn new(
        name: impl Into<String>,
        prior: &GaussianMixturePrior,
        state: Exp4State,
        rng: RngStream,
    ) -> Result<Self> {
        if state.weights.len() != prior.num_components() {
            return Err(Error::Input("Exp4 state size differs from the number of experts".into()));
        }
        Ok(Exp4Agent {
            name: name.into(),
            experts: prior.components().iter().map(|c| c.mean.clone()).collect(),
            state,
            rng,
            last: None,
        })
    }

    pub fn state(&self) -> &Exp4State {
        &self.state
    }
}

impl BanditAgent for Exp4Agent {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, actions: &ActionSet) -> Result<usize> {
        let votes: Vec<usize> = self.experts.iter().map(|t| select_action(t, actions)).collect();
        let a = exp4_sample(&self.state, &votes, actions.len(), &mut self.rng);
        self.last = Some((votes, actions.len(), a));
        Ok(a)
    }

    fn observe(&mut self, _action: &DVector<f64>, reward: f64) -> Result<()> {
        let (votes, k, a) = self
            .last
            .take()
            .ok_or_else(|| Error::Input("observe called before select".into()))?;
        self.state = self.state.step(&votes, k, a, reward)?;
        Ok(())
    }
}

/// Exp4 over experts that track the per-component posterior means; each
/// expert plays `argmax aᵀ θ̄_s`.
#[derive(Debug, Clone)]
pub struct CorralExp4Agent {
    name: String,
    posterior: LinearMixturePosterior,
    state: Exp4State,
    rng: RngStream,
    last: Option<(Vec<usize>, usize, usize)>,
}

impl CorralExp4Agent {
    pub fn new(
        name: impl Into<String>,
        prior: GaussianMixturePrior,
        state: Exp4State,
        rng: RngStream,
    ) -> Result<Self> {
        if state.weights.len() != prior.num_components() {
            return Err(Error::Input("Exp4 state size differs from the number of experts".into()));
        }
        Ok(CorralExp4Agent {
            name: name.into(),
            posterior: LinearMixturePosterior::new(prior)?,
            state,
            rng,
            last: None,
        })
    }

    pub fn posterior(&self) -> &LinearMixturePosterior {
        &self.posterior
    }

    pub fn state(&self) -> &Exp4State {
        &self.state
    }
}

impl BanditAgent for CorralExp4Agent {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, actions: &ActionSet) -> Result<usize> {
        let votes: Vec<usize> = (0..self.posterior.num_components())
            .map(|s| select_action(self.posterior.mean(s), actions))
            .collect();
        let a = exp4_sample(&self.state, &votes, actions.len(), &mut self.rng);
        self.last = Some((votes, actions.len(), a));
        Ok(a)
    }

    fn observe(&mut self, action: &DVector<f64>, reward: f64) -> Result<()> {
        let (votes, k, a) = self
            .last
            .take()
            .ok_or_else(|| Error::Input("observe called before select".into()))?;
        self.state = self.state.step(&votes, k, a, reward)?;
        self.posterior.update(action, reward)
    }
}
