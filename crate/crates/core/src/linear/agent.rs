use nalgebra::DVector;

use super::{select_action, ActionSet, GaussianMixturePrior, LinearMixturePosterior};
use crate::error::Result;
use crate::mixture::RngStream;

/// A learner facing a (contextual) linear bandit, one round at a time.
pub trait BanditAgent: Send {
    fn name(&self) -> &str;

    /// Picks an index into `actions`.
    fn select(&mut self, actions: &ActionSet) -> Result<usize>;

    /// Feeds back the reward of the action played this round.
    fn observe(&mut self, action: &DVector<f64>, reward: f64) -> Result<()>;

    /// The MixTS posterior, for agents that keep one.
    fn mixture_posterior(&self) -> Option<&LinearMixturePosterior> {
        None
    }

    /// Latent state sampled in the most recent `select`, if any.
    fn last_latent(&self) -> Option<usize> {
        None
    }
}

/// Thompson sampling from the exact mixture posterior.
#[derive(Debug, Clone)]
pub struct MixTsAgent {
    name: String,
    posterior: LinearMixturePosterior,
    rng: RngStream,
    last_latent: Option<usize>,
}

impl MixTsAgent {
    pub fn new(name: impl Into<String>, prior: GaussianMixturePrior, rng: RngStream) -> Result<Self> {
        Ok(MixTsAgent {
            name: name.into(),
            posterior: LinearMixturePosterior::new(prior)?,
            rng,
            last_latent: None,
        })
    }

    pub fn posterior(&self) -> &LinearMixturePosterior {
        &self.posterior
    }
}

impl BanditAgent for MixTsAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn select(&mut self, actions: &ActionSet) -> Result<usize> {
        let (s, theta) = self.posterior.sample_model(&mut self.rng)?;
        self.last_latent = Some(s);
        Ok(select_action(&theta, actions))
    }

    fn observe(&mut self, action: &DVector<f64>, reward: f64) -> Result<()> {
        self.posterior.update(action, reward)
    }

    fn mixture_posterior(&self) -> Option<&LinearMixturePosterior> {
        Some(&self.posterior)
    }

    fn last_latent(&self) -> Option<usize> {
        self.last_latent
    }
}
