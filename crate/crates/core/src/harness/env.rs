//! Bandit environments and the per-sweep-point setup shared by replications.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::config::CovScaling;
use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::linear::{ActionSet, GaussianComponent, GaussianMixturePrior};
use crate::mixture::MixtureWeights;

/// Mean of component `s` in the synthetic environment.
pub fn synthetic_component_mean(dim: usize, s: usize) -> DVector<f64> {
    DVector::from_fn(dim, |i, _| if i == s { 0.9 } else { 0.1 })
}

/// The synthetic mixture prior: uniform latent, means from
/// [`synthetic_component_mean`], isotropic covariance set by `sigma0`.
pub fn synthetic_prior(
    dim: usize,
    num_latent: usize,
    sigma0: f64,
    noise_sd: f64,
    scaling: CovScaling,
) -> Result<GaussianMixturePrior> {
    if num_latent > dim {
        return Err(Error::Config(format!("num_latent ({num_latent}) cannot exceed dim ({dim})")));
    }
    let var = match scaling {
        CovScaling::Linear => sigma0,
        CovScaling::Squared => sigma0 * sigma0,
    };
    let components = (0..num_latent)
        .map(|s| GaussianComponent {
            mean: synthetic_component_mean(dim, s),
            cov: DMatrix::identity(dim, dim) * var,
        })
        .collect();
    GaussianMixturePrior::new(components, MixtureWeights::uniform(num_latent)?, noise_sd)
}

/// Moment-matched single Gaussian: the mixture's overall mean and covariance.
pub fn moment_matched(prior: &GaussianMixturePrior) -> Result<GaussianMixturePrior> {
    let d = prior.dim();
    let w = prior.latent().probabilities();
    let mut mean = DVector::zeros(d);
    for (c, wi) in prior.components().iter().zip(&w) {
        mean += &c.mean * *wi;
    }
    let mut cov = DMatrix::zeros(d, d);
    for (c, wi) in prior.components().iter().zip(&w) {
        let dm = &c.mean - &mean;
        cov += (&c.cov + &dm * dm.transpose()) * *wi;
    }
    GaussianMixturePrior::unimodal(mean, crate::linalg::symmetrize(cov), prior.noise_sd())
}

/// One round of a linear bandit: the offered actions and their true means.
#[derive(Debug, Clone)]
pub struct Round {
    pub actions: ActionSet,
    pub means: Vec<f64>,
}

impl Round {
    /// Best mean, found by exhaustive scan.
    pub fn best_mean(&self) -> f64 {
        self.means.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Lowest index attaining the best mean.
    pub fn best_action(&self) -> usize {
        let best = self.best_mean();
        self.means.iter().position(|&m| m == best).unwrap_or(0)
    }
}

/// A sampled problem instance: true latent state plus what the environment
/// needs to produce rounds and rewards.
#[derive(Debug, Clone)]
pub enum LinearEnv {
    /// Fixed action set, Gaussian rewards `N(aᵀθ, noise_sd²)`.
    Gaussian {
        latent: usize,
        theta: DVector<f64>,
        actions: ActionSet,
        noise_sd: f64,
    },
    /// Action sets from a feature table, Bernoulli rewards by class.
    Features {
        latent: usize,
        table: Arc<FeatureTable>,
        k_actions: usize,
        reward_hi: f64,
        reward_lo: f64,
    },
}

impl LinearEnv {
    /// Draws `(S_*, θ_*)` from `prior` and uses the indicator action set.
    pub fn synthetic<R: Rng + ?Sized>(prior: &GaussianMixturePrior, rng: &mut R) -> Result<Self> {
        let (latent, theta) = prior.sample(rng)?;
        Ok(LinearEnv::Gaussian {
            latent,
            theta,
            actions: ActionSet::indicators(prior.dim()),
            noise_sd: prior.noise_sd(),
        })
    }

    /// Draws the target class uniformly.
    pub fn features<R: Rng + ?Sized>(
        table: Arc<FeatureTable>,
        k_actions: usize,
        reward_hi: f64,
        reward_lo: f64,
        rng: &mut R,
    ) -> Result<Self> {
        table.check_all_classes_present()?;
        if k_actions == 0 {
            return Err(Error::Config("k_actions must be positive".into()));
        }
        let latent = rng.random_range(0..table.num_classes());
        Ok(LinearEnv::Features {
            latent,
            table,
            k_actions,
            reward_hi,
            reward_lo,
        })
    }

    pub fn latent(&self) -> usize {
        match self {
            LinearEnv::Gaussian { latent, .. } | LinearEnv::Features { latent, .. } => *latent,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            LinearEnv::Gaussian { theta, .. } => theta.len(),
            LinearEnv::Features { table, .. } => table.dim(),
        }
    }

    pub fn noise_sd(&self) -> Option<f64> {
        match self {
            LinearEnv::Gaussian { noise_sd, .. } => Some(*noise_sd),
            LinearEnv::Features { .. } => None,
        }
    }

    /// The actions offered this round. Feature rounds always include one row
    /// of the target class, at a uniformly random position.
    pub fn round<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Round> {
        match self {
            LinearEnv::Gaussian { theta, actions, .. } => Ok(Round {
                actions: actions.clone(),
                means: actions.iter().map(|a| a.dot(theta)).collect(),
            }),
            LinearEnv::Features {
                latent,
                table,
                k_actions,
                reward_hi,
                reward_lo,
            } => {
                let own = table.rows_of_class(*latent);
                let forced = own[rng.random_range(0..own.len())];
                let slot = rng.random_range(0..*k_actions);
                let mut idx = Vec::with_capacity(*k_actions);
                for j in 0..*k_actions {
                    let other = rng.random_range(0..table.len());
                    idx.push(if j == slot { forced } else { other });
                }
                let means = idx
                    .iter()
                    .map(|&i| if table.class(i) == *latent { *reward_hi } else { *reward_lo })
                    .collect();
                let actions = ActionSet::new(idx.iter().map(|&i| table.row(i).clone()).collect())?;
                Ok(Round { actions, means })
            }
        }
    }

    /// Realized reward for an action with true mean `mean`. Always consumes
    /// exactly one draw from `rng`.
    pub fn reward<R: Rng + ?Sized>(&self, mean: f64, rng: &mut R) -> f64 {
        match self {
            LinearEnv::Gaussian { noise_sd, .. } => mean + noise_sd * rng.sample::<f64, _>(StandardNormal),
            LinearEnv::Features { .. } => f64::from(u8::from(rng.random::<f64>() < mean)),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::synthetic_feature_table;
    use crate::mixture::RngStream;

    #[test]
    fn component_means_have_single_peak() {
        for s in 0..30 {
            let m = synthetic_component_mean(30, s);
            assert_eq!(m.iter().filter(|&&v| v == 0.9).count(), 1);
            assert_eq!(m[s], 0.9);
        }
        assert!(synthetic_prior(3, 4, 0.1, 0.1, CovScaling::Linear).unwrap_err().is_config());
    }

    #[test]
    fn zero_width_prior_samples_component_mean() {
        let prior = synthetic_prior(5, 5, 0.0, 0.1, CovScaling::Linear).unwrap();
        let mut rng = RngStream::new(1, 0);
        for _ in 0..20 {
            match LinearEnv::synthetic(&prior, &mut rng).unwrap() {
                LinearEnv::Gaussian { latent, theta, .. } => {
                    assert_eq!(theta, synthetic_component_mean(5, latent));
                }
                _ => unreachable!(),
            }
        }
    }

    #[test]
    fn covariance_scaling() {
        let lin = synthetic_prior(3, 2, 0.2, 0.1, CovScaling::Linear).unwrap();
        let sq = synthetic_prior(3, 2, 0.2, 0.1, CovScaling::Squared).unwrap();
        assert_eq!(lin.lambda_max(), 0.2);
        assert!((sq.lambda_max() - 0.04).abs() < 1e-15);
    }

    #[test]
    fn moment_matching() {
        let prior = synthetic_prior(2, 2, 0.1, 0.1, CovScaling::Linear).unwrap();
        let uni = moment_matched(&prior).unwrap();
        let c = &uni.components()[0];
        assert!((c.mean[0] - 0.5).abs() < 1e-15);
        // between-component spread 0.4² plus within 0.1
        assert!((c.cov[(0, 0)] - 0.26).abs() < 1e-15);
        assert!((c.cov[(0, 1)] + 0.16).abs() < 1e-15);
    }

    #[test]
    fn feature_rounds_contain_target_class() {
        let mut rng = RngStream::new(2, 0);
        let table = Arc::new(synthetic_feature_table(5, 6, 4, 0.1, &mut rng).unwrap());
        let env = LinearEnv::features(table.clone(), 10, 0.9, 0.1, &mut rng).unwrap();
        for _ in 0..200 {
            let r = env.round(&mut rng).unwrap();
            assert_eq!(r.actions.len(), 10);
            assert_eq!(r.best_mean(), 0.9);
            assert!(r.means.iter().all(|&m| m == 0.9 || m == 0.1));
        }
    }

    #[test]
    fn missing_class_rows_is_config_error() {
        let table = FeatureTable::new(vec![0, 2], vec![DVector::from_element(2, 1.0); 2]).unwrap();
        let mut rng = RngStream::new(3, 0);
        assert!(LinearEnv::features(Arc::new(table), 3, 0.9, 0.1, &mut rng).unwrap_err().is_config());
    }
}
