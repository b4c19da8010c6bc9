//! Finite-horizon tabular MDPs: model, backward induction, exact evaluation.
//!
//! Tables are flat row-major vectors. The pair `(x, a)` lives at
//! `x * num_actions + a`; transition row `(x, a)` occupies
//! `[(x * num_actions + a) * num_states ..][.. num_states]`.

mod posterior;
mod riverswim;

pub use posterior::{
    sample_dirichlet, EpisodicAgent, MdpComponentPrior, MdpMixturePosterior, MdpMixturePrior,
    MixTsMdpAgent, WidthTable,
};
pub use riverswim::{riverswim_prior, RiverSwimPrior, LEFT, RIGHT};

use rand::Rng;

use crate::error::{Error, Result};

const SIMPLEX_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    horizon: usize,
    rewards: Vec<f64>,
    transitions: Vec<f64>,
    initial: Vec<f64>,
}

fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Input(format!("{what} has a negative or non-finite entry")));
    }
    let sum: f64 = p.iter().sum();
    if (sum - 1.0).abs() > SIMPLEX_TOL {
        return Err(Error::Input(format!("{what} sums to {sum}, not 1")));
    }
    Ok(())
}

impl TabularMdp {
    pub fn new(
        num_states: usize,
        num_actions: usize,
        horizon: usize,
        rewards: Vec<f64>,
        transitions: Vec<f64>,
        initial: Vec<f64>,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 || horizon == 0 {
            return Err(Error::Input("MDP sizes and horizon must be positive".into()));
        }
        let pairs = num_states * num_actions;
        if rewards.len() != pairs
            || transitions.len() != pairs * num_states
            || initial.len() != num_states
        {
            return Err(Error::Input("MDP table sizes do not match state/action counts".into()));
        }
        if rewards.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(Error::Input("mean rewards must lie in [0, 1]".into()));
        }
        for (p, row) in transitions.chunks(num_states).enumerate() {
            check_simplex(row, &format!("transition row {p}"))?;
        }
        check_simplex(&initial, "initial distribution")?;
        Ok(TabularMdp {
            num_states,
            num_actions,
            horizon,
            rewards,
            transitions,
            initial,
        })
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

    pub fn reward(&self, x: usize, a: usize) -> f64 {
        self.rewards[x * self.num_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.rewards
    }

    pub fn transition_row(&self, x: usize, a: usize) -> &[f64] {
        let start = (x * self.num_actions + a) * self.num_states;
        &self.transitions[start..start + self.num_states]
    }

    pub fn transitions(&self) -> &[f64] {
        &self.transitions
    }

    pub fn sample_initial<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        sample_index(&self.initial, rng)
    }

    /// One environment step: Bernoulli reward and a categorical next state.
    pub fn step<R: Rng + ?Sized>(&self, x: usize, a: usize, rng: &mut R) -> (u8, usize) {
        let r = u8::from(rng.random::<f64>() < self.reward(x, a));
        let next = sample_index(self.transition_row(x, a), rng);
        (r, next)
    }
}

/// Inverse-CDF draw from a probability vector; rounding slack goes to the
/// last positive entry.
pub fn sample_index<R: Rng + ?Sized>(p: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut cum = 0.0;
    let mut last = 0;
    for (i, &pi) in p.iter().enumerate() {
        if pi <= 0.0 {
            continue;
        }
        last = i;
        cum += pi;
        if u < cum {
            return i;
        }
    }
    last
}

/// Nonstationary deterministic policy: one state→action map per step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Policy {
    num_states: usize,
    horizon: usize,
    actions: Vec<usize>,
}

impl Policy {
    /// `actions[i * num_states + x]` is the action at step `i` in state `x`.
    pub fn new(num_states: usize, horizon: usize, actions: Vec<usize>, num_actions: usize) -> Result<Self> {
        if actions.len() != num_states * horizon {
            return Err(Error::Input(format!(
                "policy table has {} entries, expected {}",
                actions.len(),
                num_states * horizon
            )));
        }
        if let Some(bad) = actions.iter().find(|&&a| a >= num_actions) {
            return Err(Error::Input(format!("policy uses invalid action {bad}")));
        }
        Ok(Policy {
            num_states,
            horizon,
            actions,
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    /// Action at 0-based step `i` in state `x`.
    pub fn action(&self, i: usize, x: usize) -> usize {
        self.actions[i * self.num_states + x]
    }

    pub fn table(&self) -> &[usize] {
        &self.actions
    }
}

/// Optimal nonstationary policy by backward induction; ties go to the lowest
/// action index.
pub fn plan(mdp: &TabularMdp) -> Policy {
    let (nx, na, h) = (mdp.num_states, mdp.num_actions, mdp.horizon);
    let mut next_value = vec![0.0; nx];
    let mut value = vec![0.0; nx];
    let mut actions = vec![0; nx * h];
    for i in (0..h).rev() {
        for x in 0..nx {
            let mut best_a = 0;
            let mut best_q = f64::NEG_INFINITY;
            for a in 0..na {
                let q = mdp.reward(x, a)
                    + mdp
                        .transition_row(x, a)
                        .iter()
                        .zip(&next_value)
                        .map(|(p, v)| p * v)
                        .sum::<f64>();
                if q > best_q {
                    best_q = q;
                    best_a = a;
                }
            }
            actions[i * nx + x] = best_a;
            value[x] = best_q;
        }
        std::mem::swap(&mut value, &mut next_value);
    }
    Policy {
        num_states: nx,
        horizon: h,
        actions,
    }
}

/// Exact expected `h`-step return of `policy`, by propagating the state
/// distribution forward from the initial distribution.
pub fn policy_value(mdp: &TabularMdp, policy: &Policy) -> f64 {
    let nx = mdp.num_states;
    let mut dist = mdp.initial.clone();
    let mut next = vec![0.0; nx];
    let mut total = 0.0;
    for i in 0..mdp.horizon {
        next.iter_mut().for_each(|v| *v = 0.0);
        for x in 0..nx {
            if dist[x] == 0.0 {
                continue;
            }
            let a = policy.action(i, x);
            total += dist[x] * mdp.reward(x, a);
            for (n, p) in next.iter_mut().zip(mdp.transition_row(x, a)) {
                *n += dist[x] * p;
            }
        }
        std::mem::swap(&mut dist, &mut next);
    }
    total
}
