use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{plan, Policy, TabularMdp};
use crate::error::{Error, Result};
use crate::mixture::{logsumexp, MixtureWeights, RngStream};

/// Beta and Dirichlet pseudo-counts of one mixture component.
///
/// `reward[p] = [count of r = 0, count of r = 1]` for pair `p`; `transition`
/// is laid out like [`TabularMdp`] transition rows.
#[derive(Debug, Clone, PartialEq)]
pub struct MdpComponentPrior {
    pub reward: Vec<[f64; 2]>,
    pub transition: Vec<f64>,
}

impl MdpComponentPrior {
    /// `Beta(1, 1)` rewards and `Dir(1, …, 1)` transitions everywhere.
    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        let pairs = num_states * num_actions;
        MdpComponentPrior {
            reward: vec![[1.0, 1.0]; pairs],
            transition: vec![1.0; pairs * num_states],
        }
    }

    /// Smallest ℓ1 norm over all reward and transition pseudo-count vectors.
    pub fn min_concentration(&self, num_states: usize) -> f64 {
        let r = self.reward.iter().map(|a| a[0] + a[1]);
        let t = self.transition.chunks(num_states).map(|row| row.iter().sum::<f64>());
        r.chain(t).fold(f64::INFINITY, f64::min)
    }
}

/// Mixture of Beta/Dirichlet MDP priors plus the known structure
/// (sizes, horizon, initial distribution).
#[derive(Debug, Clone, PartialEq)]
pub struct MdpMixturePrior {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    initial: Vec<f64>,
    latent: MixtureWeights,
    components: Vec<MdpComponentPrior>,
}

impl MdpMixturePrior {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        initial: Vec<f64>,
        latent: MixtureWeights,
        components: Vec<MdpComponentPrior>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::Input("MDP sizes and horizon must be positive".into()));
        }
        if components.is_empty() || latent.len() != components.len() {
            return Err(Error::Input(format!(
                "{} latent weights for {} components",
                latent.len(),
                components.len()
            )));
        }
        super::check_simplex(&initial, "initial distribution")?;
        if initial.len() != num_states {
            return Err(Error::Input("initial distribution has the wrong length".into()));
        }
        let pairs = num_states * num_actions;
        for (s, c) in components.iter().enumerate() {
            if c.reward.len() != pairs || c.transition.len() != pairs * num_states {
                return Err(Error::Input(format!("component {s} tables have the wrong size")));
            }
            let positive = |x: &f64| *x > 0.0 && x.is_finite();
            if !c.reward.iter().flatten().all(positive) || !c.transition.iter().all(positive) {
                return Err(Error::Input(format!(
                    "component {s} has a non-positive pseudo-count"
                )));
            }
        }
        Ok(MdpMixturePrior {
            num_states,
            num_actions,
            horizon,
            initial,
            latent,
            components,
        })
    }

    /// Single uniform component: the PSRL prior.
    pub fn uniform(num_states: usize, num_actions: usize, horizon: usize, initial: Vec<f64>) -> Result<Self> {
        Self::new(
            num_states,
            num_actions,
            horizon,
            initial,
            MixtureWeights::uniform(1)?,
            vec![MdpComponentPrior::uniform(num_states, num_actions)],
        )
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn initial(&self) -> &[f64] {
        &self.initial
    }

    pub fn latent(&self) -> &MixtureWeights {
        &self.latent
    }

    pub fn components(&self) -> &[MdpComponentPrior] {
        &self.components
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    /// Minimum over components of [`MdpComponentPrior::min_concentration`].
    pub fn min_concentration(&self) -> f64 {
        self.components
            .iter()
            .map(|c| c.min_concentration(self.num_states))
            .fold(f64::INFINITY, f64::min)
    }

    /// Samples an MDP from component `s` with extra observation counts added.
    fn sample_with_counts<R: Rng + ?Sized>(
        &self,
        s: usize,
        reward_counts: &[[u64; 2]],
        transition_counts: &[u64],
        rng: &mut R,
    ) -> Result<TabularMdp> {
        let c = &self.components[s];
        let nx = self.num_states;
        let mut rewards = Vec::with_capacity(c.reward.len());
        let mut transitions = Vec::with_capacity(c.transition.len());
        for p in 0..c.reward.len() {
            let alpha = [
                c.reward[p][0] + reward_counts[p][0] as f64,
                c.reward[p][1] + reward_counts[p][1] as f64,
            ];
            rewards.push(sample_dirichlet(&alpha, rng)?[1]);
            let row: Vec<f64> = (0..nx)
                .map(|y| c.transition[p * nx + y] + transition_counts[p * nx + y] as f64)
                .collect();
            transitions.extend(sample_dirichlet(&row, rng)?);
        }
        TabularMdp::new(
            nx,
            self.num_actions,
            self.horizon,
            rewards,
            transitions,
            self.initial.clone(),
        )
    }

    /// Draws `(S_*, M_*)` from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, TabularMdp)> {
        let s = self.latent.sample(rng);
        let pairs = self.num_states * self.num_actions;
        let mdp = self.sample_with_counts(
            s,
            &vec![[0, 0]; pairs],
            &vec![0; pairs * self.num_states],
            rng,
        )?;
        Ok((s, mdp))
    }
}

/// Dirichlet draw through normalized Gamma variates, done in log space so
/// that shapes far below one do not underflow to an all-zero row.
pub fn sample_dirichlet<R: Rng + ?Sized>(alpha: &[f64], rng: &mut R) -> Result<Vec<f64>> {
    let mut logs = Vec::with_capacity(alpha.len());
    for &a in alpha {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::Input(format!("Dirichlet parameter {a} is not positive")));
        }
        // Gamma(a) = Gamma(a + 1) · U^(1/a) for a < 1
        let (shape, boost) = if a < 1.0 { (a + 1.0, true) } else { (a, false) };
        let g: f64 = Gamma::new(shape, 1.0)
            .map_err(|e| Error::Numerical(format!("gamma({shape}): {e}")))?
            .sample(rng);
        let mut lg = g.ln();
        if boost {
            let u: f64 = 1.0 - rng.random::<f64>();
            lg += u.ln() / a;
        }
        logs.push(lg);
    }
    let lse = logsumexp(&logs);
    Ok(logs.into_iter().map(|l| (l - lse).exp()).collect())
}

/// Per-pair confidence widths for one component, row-major `x * nA + a`.
#[derive(Debug, Clone, PartialEq)]
pub struct WidthTable {
    pub reward: Vec<f64>,
    pub transition: Vec<f64>,
}

/// Mixture posterior over tabular MDPs. Observation counts are shared by
/// all components; only their prior pseudo-counts differ.
#[derive(Debug, Clone)]
pub struct MdpMixturePosterior {
    prior: MdpMixturePrior,
    reward_counts: Vec<[u64; 2]>,
    transition_counts: Vec<u64>,
    weights: MixtureWeights,
    steps: u64,
}

impl MdpMixturePosterior {
    pub fn new(prior: MdpMixturePrior) -> Self {
        let pairs = prior.num_states * prior.num_actions;
        MdpMixturePosterior {
            reward_counts: vec![[0, 0]; pairs],
            transition_counts: vec![0; pairs * prior.num_states],
            weights: prior.latent.clone(),
            steps: 0,
            prior,
        }
    }

    pub fn prior(&self) -> &MdpMixturePrior {
        &self.prior
    }

    pub fn weights(&self) -> &MixtureWeights {
        &self.weights
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn reward_counts(&self) -> &[[u64; 2]] {
        &self.reward_counts
    }

    pub fn transition_counts(&self) -> &[u64] {
        &self.transition_counts
    }

    fn pair(&self, x: usize, a: usize) -> Result<usize> {
        if x >= self.prior.num_states || a >= self.prior.num_actions {
            return Err(Error::Input(format!("state-action ({x}, {a}) out of range")));
        }
        Ok(x * self.prior.num_actions + a)
    }

    /// Effective Beta counts `[zeros, ones]` of component `s` at pair `(x, a)`.
    pub fn reward_alpha(&self, s: usize, x: usize, a: usize) -> [f64; 2] {
        let p = x * self.prior.num_actions + a;
        let c = &self.prior.components[s].reward[p];
        [
            c[0] + self.reward_counts[p][0] as f64,
            c[1] + self.reward_counts[p][1] as f64,
        ]
    }

    /// Effective Dirichlet counts of component `s` at pair `(x, a)`.
    pub fn transition_alpha(&self, s: usize, x: usize, a: usize) -> Vec<f64> {
        let nx = self.prior.num_states;
        let p = x * self.prior.num_actions + a;
        let c = &self.prior.components[s].transition[p * nx..(p + 1) * nx];
        c.iter()
            .zip(&self.transition_counts[p * nx..(p + 1) * nx])
            .map(|(a0, n)| a0 + *n as f64)
            .collect()
    }

    /// Log posterior predictive of `(r, x_next)` at `(x, a)` under component `s`.
    pub fn predictive_loglik(&self, s: usize, x: usize, a: usize, r: u8, x_next: usize) -> Result<f64> {
        self.pair(x, a)?;
        if r > 1 || x_next >= self.prior.num_states || s >= self.prior.num_components() {
            return Err(Error::Input(format!(
                "bad transition observation (s={s}, r={r}, x'={x_next})"
            )));
        }
        let ra = self.reward_alpha(s, x, a);
        let ta = self.transition_alpha(s, x, a);
        let t_norm: f64 = ta.iter().sum();
        Ok((ra[r as usize] / (ra[0] + ra[1])).ln() + (ta[x_next] / t_norm).ln())
    }

    /// Absorbs one transition. Latent weights use the predictives under the
    /// counts before this step, which makes the per-step product equal to
    /// the joint marginal likelihood.
    pub fn update_step(&mut self, x: usize, a: usize, r: u8, x_next: usize) -> Result<()> {
        let p = self.pair(x, a)?;
        let increments = (0..self.prior.num_components())
            .map(|s| self.predictive_loglik(s, x, a, r, x_next))
            .collect::<Result<Vec<_>>>()?;
        self.weights = self.weights.updated(&increments)?;
        self.reward_counts[p][r as usize] += 1;
        self.transition_counts[p * self.prior.num_states + x_next] += 1;
        self.steps += 1;
        Ok(())
    }

    pub fn updated_step(&self, x: usize, a: usize, r: u8, x_next: usize) -> Result<Self> {
        let mut next = self.clone();
        next.update_step(x, a, r, x_next)?;
        Ok(next)
    }

    /// Samples an MDP from component `s` of the posterior.
    pub fn sample_mdp<R: Rng + ?Sized>(&self, s: usize, rng: &mut R) -> Result<TabularMdp> {
        if s >= self.prior.num_components() {
            return Err(Error::Input(format!("latent index {s} out of range")));
        }
        self.prior
            .sample_with_counts(s, &self.reward_counts, &self.transition_counts, rng)
    }

    /// Posterior-mean MDP of component `s`.
    pub fn mean_mdp(&self, s: usize) -> Result<TabularMdp> {
        let (nx, na) = (self.prior.num_states, self.prior.num_actions);
        let mut rewards = Vec::with_capacity(nx * na);
        let mut transitions = Vec::with_capacity(nx * na * nx);
        for x in 0..nx {
            for a in 0..na {
                let ra = self.reward_alpha(s, x, a);
                rewards.push(ra[1] / (ra[0] + ra[1]));
                let ta = self.transition_alpha(s, x, a);
                let norm: f64 = ta.iter().sum();
                transitions.extend(ta.iter().map(|v| v / norm));
            }
        }
        TabularMdp::new(nx, na, self.prior.horizon, rewards, transitions, self.prior.initial.clone())
    }

    /// Reward widths `sqrt(2 log(2 X A n) / (‖α^R‖₁ + 1))` and transition
    /// widths `sqrt(4 X log(4 X A n) / (‖α^T‖₁ + 1))` for component `s`.
    pub fn confidence_widths(&self, s: usize, horizon: usize) -> Result<WidthTable> {
        if horizon == 0 {
            return Err(Error::Domain("confidence widths need n >= 1".into()));
        }
        let (nx, na) = (self.prior.num_states, self.prior.num_actions);
        let xan = (nx * na) as f64 * horizon as f64;
        let r_num = 2.0 * (2.0 * xan).ln();
        let t_num = 4.0 * nx as f64 * (4.0 * xan).ln();
        let mut reward = Vec::with_capacity(nx * na);
        let mut transition = Vec::with_capacity(nx * na);
        for x in 0..nx {
            for a in 0..na {
                let ra = self.reward_alpha(s, x, a);
                reward.push((r_num / (ra[0] + ra[1] + 1.0)).sqrt());
                let t_norm: f64 = self.transition_alpha(s, x, a).iter().sum();
                transition.push((t_num / (t_norm + 1.0)).sqrt());
            }
        }
        Ok(WidthTable { reward, transition })
    }
}

/// A learner in the episodic tabular setting.
pub trait EpisodicAgent: Send {
    fn name(&self) -> &str;

    /// Commits to a policy for the coming episode.
    fn begin_episode(&mut self) -> Result<Policy>;

    fn observe_step(&mut self, x: usize, a: usize, r: u8, x_next: usize) -> Result<()>;

    fn mixture_posterior(&self) -> Option<&MdpMixturePosterior> {
        None
    }

    /// Latent state sampled for the current episode, if any.
    fn last_latent(&self) -> Option<usize> {
        None
    }
}

/// Posterior sampling with a mixture prior: once per episode sample a
/// component, then an MDP from it, then act optimally in that MDP.
#[derive(Debug, Clone)]
pub struct MixTsMdpAgent {
    name: String,
    posterior: MdpMixturePosterior,
    rng: RngStream,
    last_latent: Option<usize>,
}

impl MixTsMdpAgent {
    pub fn new(name: impl Into<String>, prior: MdpMixturePrior, rng: RngStream) -> Self {
        MixTsMdpAgent {
            name: name.into(),
            posterior: MdpMixturePosterior::new(prior),
            rng,
            last_latent: None,
        }
    }

    pub fn posterior(&self) -> &MdpMixturePosterior {
        &self.posterior
    }
}

impl EpisodicAgent for MixTsMdpAgent {
    fn name(&self) -> &str {
        &self.name
    }

    fn begin_episode(&mut self) -> Result<Policy> {
        let s = self.posterior.weights().sample(&mut self.rng);
        let mdp = self.posterior.sample_mdp(s, &mut self.rng)?;
        self.last_latent = Some(s);
        Ok(plan(&mdp))
    }

    fn observe_step(&mut self, x: usize, a: usize, r: u8, x_next: usize) -> Result<()> {
        self.posterior.update_step(x, a, r, x_next)
    }

    fn mixture_posterior(&self) -> Option<&MdpMixturePosterior> {
        Some(&self.posterior)
    }

    fn last_latent(&self) -> Option<usize> {
        self.last_latent
    }
}
