//! RiverSwim with an unknown current direction.
//!
//! States form a chain `0..n`. Component 0 has the current flowing left,
//! component 1 is its mirror image (states reversed, actions swapped).
//! Swimming with the current always moves one state downstream; swimming
//! against it advances with probability 0.35 (0.4 at either end), stays with
//! probability 0.6 and slips back with probability 0.05. The downstream end
//! pays a small reward (mean 0.005) for swimming with the current and the
//! upstream end pays mean 0.9 for swimming against it.

use super::{MdpComponentPrior, MdpMixturePrior, TabularMdp};
use crate::error::{Error, Result};
use crate::mixture::MixtureWeights;

pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;

/// Downstream-end reward mean for swimming with the current.
const SMALL_REWARD: f64 = 0.005;
/// Upstream-end reward mean for swimming against the current.
const LARGE_REWARD: f64 = 0.9;
/// Pseudo-count assigned to outcomes with zero prior mean, relative to the
/// concentration scale.
const ZERO_MASS: f64 = 1e-3;

/// RiverSwim mixture prior and the prior-mean MDP of each component.
#[derive(Debug, Clone)]
pub struct RiverSwimPrior {
    pub prior: MdpMixturePrior,
    pub mean_mdps: Vec<TabularMdp>,
    pub concentration: f64,
}

/// Mean transitions and rewards with the current flowing left.
fn current_left_means(n: usize) -> (Vec<f64>, Vec<f64>) {
    let na = 2;
    let mut rewards = vec![0.0; n * na];
    let mut trans = vec![0.0; n * na * n];
    let row = |x: usize, a: usize| (x * na + a) * n;
    for x in 0..n {
        // with the current
        let r = row(x, LEFT);
        if x == 0 {
            trans[r] = 1.0;
            rewards[x * na + LEFT] = SMALL_REWARD;
        } else {
            trans[r + x - 1] = 1.0;
        }
        // against the current
        let r = row(x, RIGHT);
        trans[r + x] = 0.6;
        if x == 0 {
            trans[r + 1] = 0.4;
        } else if x == n - 1 {
            trans[r + x - 1] = 0.4;
            rewards[x * na + RIGHT] = LARGE_REWARD;
        } else {
            trans[r + x - 1] = 0.05;
            trans[r + x + 1] = 0.35;
        }
    }
    (rewards, trans)
}

/// Reverses the chain and swaps the two actions.
fn mirror(n: usize, rewards: &[f64], trans: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let na = 2;
    let mut r2 = vec![0.0; rewards.len()];
    let mut t2 = vec![0.0; trans.len()];
    for x in 0..n {
        for a in 0..na {
            let (mx, ma) = (n - 1 - x, 1 - a);
            r2[x * na + a] = rewards[mx * na + ma];
            for y in 0..n {
                t2[(x * na + a) * n + y] = trans[(mx * na + ma) * n + (n - 1 - y)];
            }
        }
    }
    (r2, t2)
}

fn pseudo_counts(rewards: &[f64], trans: &[f64], scale: f64) -> MdpComponentPrior {
    let eps = ZERO_MASS * scale;
    let count = |m: f64| if m > 0.0 { m * scale } else { eps };
    MdpComponentPrior {
        reward: rewards.iter().map(|&m| [count(1.0 - m), count(m)]).collect(),
        transition: trans.iter().map(|&p| count(p)).collect(),
    }
}

/// Two-component RiverSwim prior with `num_states` states.
///
/// Pseudo-counts are `concentration · mean` for every outcome with positive
/// prior mean and `1e-3 · concentration` for the rest, so no pseudo-count
/// exceeds `concentration`. The episode starts in the middle of the chain
/// (uniformly between the two middle states when `num_states` is even).
pub fn riverswim_prior(num_states: usize, concentration: f64, horizon: usize) -> Result<RiverSwimPrior> {
    if num_states < 3 {
        return Err(Error::Input(format!("RiverSwim needs at least 3 states, got {num_states}")));
    }
    if !(concentration > 0.0 && concentration <= 10.0) {
        return Err(Error::Input(format!(
            "concentration must lie in (0, 10], got {concentration}"
        )));
    }
    if horizon == 0 {
        return Err(Error::Input("horizon must be positive".into()));
    }
    let mut initial = vec![0.0; num_states];
    if num_states % 2 == 1 {
        initial[num_states / 2] = 1.0;
    } else {
        initial[num_states / 2 - 1] = 0.5;
        initial[num_states / 2] = 0.5;
    }
    let (r_left, t_left) = current_left_means(num_states);
    let (r_right, t_right) = mirror(num_states, &r_left, &t_left);
    let components = vec![
        pseudo_counts(&r_left, &t_left, concentration),
        pseudo_counts(&r_right, &t_right, concentration),
    ];
    let mean_mdps = vec![
        TabularMdp::new(num_states, 2, horizon, r_left, t_left, initial.clone())?,
        TabularMdp::new(num_states, 2, horizon, r_right, t_right, initial.clone())?,
    ];
    let prior = MdpMixturePrior::new(
        num_states,
        2,
        horizon,
        initial,
        MixtureWeights::uniform(2)?,
        components,
    )?;
    Ok(RiverSwimPrior {
        prior,
        mean_mdps,
        concentration,
    })
}
