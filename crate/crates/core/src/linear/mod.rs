//! Gaussian linear bandits with a Gaussian-mixture prior.
//!
//! Every component shares the Gram matrix `V = Σ aaᵀ` and the vector
//! `B = Σ a·y`; only the prior differs. Component `s` has posterior
//!
//! ```text
//! Σ_s = (Σ0_s⁻¹ + V/σ²)⁻¹,   θ̄_s = Σ_s (Σ0_s⁻¹ θ0_s + B/σ²)
//! ```
//!
//! recomputed from `V` and `B` on every update. The latent weights absorb the
//! Gaussian posterior predictive `N(y; aᵀθ̄_s, aᵀΣ_s a + σ²)` of each
//! observation under each component.

mod agent;

pub use agent::{BanditAgent, MixTsAgent};

use std::f64::consts::PI;

use log::warn;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg;
use crate::mixture::MixtureWeights;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianComponent {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

/// `P0(s) · N(θ; θ0_s, Σ0_s)` with Gaussian reward noise of sd `noise_sd`.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianMixturePrior {
    components: Vec<GaussianComponent>,
    latent: MixtureWeights,
    noise_sd: f64,
}

impl GaussianMixturePrior {
    pub fn new(
        components: Vec<GaussianComponent>,
        latent: MixtureWeights,
        noise_sd: f64,
    ) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Input("mixture prior needs at least one component".into()));
        }
        if latent.len() != components.len() {
            return Err(Error::Input(format!(
                "{} latent weights for {} components",
                latent.len(),
                components.len()
            )));
        }
        if !(noise_sd > 0.0 && noise_sd.is_finite()) {
            return Err(Error::Input(format!("noise sd must be positive, got {noise_sd}")));
        }
        let d = components[0].mean.len();
        if d == 0 {
            return Err(Error::Input("zero-dimensional prior".into()));
        }
        for (s, c) in components.iter().enumerate() {
            if c.mean.len() != d || c.cov.nrows() != d || c.cov.ncols() != d {
                return Err(Error::Input(format!("component {s} has inconsistent dimension")));
            }
            if !linalg::is_symmetric(&c.cov, 1e-10) {
                return Err(Error::Input(format!("component {s} covariance is not symmetric")));
            }
            let min_ev = linalg::sym_eigenvalues(&c.cov)[0];
            let scale = c.cov.trace().abs().max(1.0);
            if min_ev < -1e-10 * scale {
                return Err(Error::Input(format!(
                    "component {s} covariance is not PSD (min eigenvalue {min_ev})"
                )));
            }
            let norm = c.mean.norm();
            if norm > 1.0 + 1e-12 {
                warn!("component {s} prior mean has norm {norm:.3} > 1");
            }
        }
        Ok(GaussianMixturePrior {
            components,
            latent,
            noise_sd,
        })
    }

    /// Single-component prior `N(mean, cov)`.
    pub fn unimodal(mean: DVector<f64>, cov: DMatrix<f64>, noise_sd: f64) -> Result<Self> {
        Self::new(
            vec![GaussianComponent { mean, cov }],
            MixtureWeights::uniform(1)?,
            noise_sd,
        )
    }

    pub fn dim(&self) -> usize {
        self.components[0].mean.len()
    }

    pub fn num_components(&self) -> usize {
        self.components.len()
    }

    pub fn components(&self) -> &[GaussianComponent] {
        &self.components
    }

    pub fn latent(&self) -> &MixtureWeights {
        &self.latent
    }

    pub fn noise_sd(&self) -> f64 {
        self.noise_sd
    }

    /// Largest eigenvalue of any component covariance.
    pub fn lambda_max(&self) -> f64 {
        self.components
            .iter()
            .map(|c| linalg::lambda_max(&c.cov))
            .fold(0.0, f64::max)
    }

    /// Prior with components reordered so that new component `i` is old `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        GaussianMixturePrior {
            components: perm.iter().map(|&i| self.components[i].clone()).collect(),
            latent: self.latent.permuted(perm),
            noise_sd: self.noise_sd,
        }
    }

    /// Draws `(S_*, θ_*)` from the prior.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, DVector<f64>)> {
        let s = self.latent.sample(rng);
        let c = &self.components[s];
        Ok((s, linalg::sample_gaussian(&c.mean, &c.cov, rng)?))
    }
}

/// Nonempty finite action set with norm bound `kappa`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSet {
    actions: Vec<DVector<f64>>,
    kappa: f64,
}

impl ActionSet {
    /// Uses the largest action norm as the bound.
    pub fn new(actions: Vec<DVector<f64>>) -> Result<Self> {
        let kappa = actions.iter().map(|a| a.norm()).fold(0.0, f64::max);
        Self::with_bound(actions, kappa)
    }

    pub fn with_bound(actions: Vec<DVector<f64>>, kappa: f64) -> Result<Self> {
        let first = actions
            .first()
            .ok_or_else(|| Error::Input("empty action set".into()))?;
        let d = first.len();
        for (i, a) in actions.iter().enumerate() {
            if a.len() != d {
                return Err(Error::Input(format!("action {i} has dimension {} != {d}", a.len())));
            }
            if a.norm() > kappa * (1.0 + 1e-12) {
                return Err(Error::Input(format!("action {i} exceeds norm bound {kappa}")));
            }
        }
        Ok(ActionSet { actions, kappa })
    }

    /// The `d` standard basis vectors.
    pub fn indicators(d: usize) -> Self {
        let actions = (0..d)
            .map(|i| {
                let mut v = DVector::zeros(d);
                v[i] = 1.0;
                v
            })
            .collect();
        ActionSet { actions, kappa: 1.0 }
    }

    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.actions[0].len()
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn get(&self, i: usize) -> &DVector<f64> {
        &self.actions[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = &DVector<f64>> {
        self.actions.iter()
    }
}

/// Index of the action maximizing `aᵀθ`; ties go to the lowest index.
pub fn select_action(theta: &DVector<f64>, actions: &ActionSet) -> usize {
    let mut best = 0;
    let mut best_value = f64::NEG_INFINITY;
    for (i, a) in actions.iter().enumerate() {
        let v = a.dot(theta);
        if v > best_value {
            best = i;
            best_value = v;
        }
    }
    best
}

/// Gaussian log-density `log N(y; mean, var)`.
pub fn gaussian_logpdf(y: f64, mean: f64, var: f64) -> f64 {
    let r = y - mean;
    -0.5 * (2.0 * PI * var).ln() - r * r / (2.0 * var)
}

/// Exact mixture posterior for the Gaussian linear bandit.
#[derive(Debug, Clone)]
pub struct LinearMixturePosterior {
    prior: GaussianMixturePrior,
    prior_precision: Vec<DMatrix<f64>>,
    prior_precision_mean: Vec<DVector<f64>>,
    gram: DMatrix<f64>,
    moment: DVector<f64>,
    means: Vec<DVector<f64>>,
    covs: Vec<DMatrix<f64>>,
    weights: MixtureWeights,
    rounds: usize,
}

impl LinearMixturePosterior {
    /// The round-one posterior, equal to the prior. Fails only when a prior
    /// covariance is singular.
    pub fn new(prior: GaussianMixturePrior) -> Result<Self> {
        let d = prior.dim();
        let mut prior_precision = Vec::with_capacity(prior.num_components());
        let mut prior_precision_mean = Vec::with_capacity(prior.num_components());
        for c in prior.components() {
            let p = linalg::spd_inverse(&c.cov)?;
            prior_precision_mean.push(&p * &c.mean);
            prior_precision.push(p);
        }
        Ok(LinearMixturePosterior {
            means: prior.components().iter().map(|c| c.mean.clone()).collect(),
            covs: prior.components().iter().map(|c| c.cov.clone()).collect(),
            weights: prior.latent().clone(),
            prior_precision,
            prior_precision_mean,
            gram: DMatrix::zeros(d, d),
            moment: DVector::zeros(d),
            rounds: 0,
            prior,
        })
    }

    pub fn prior(&self) -> &GaussianMixturePrior {
        &self.prior
    }

    pub fn dim(&self) -> usize {
        self.prior.dim()
    }

    pub fn num_components(&self) -> usize {
        self.prior.num_components()
    }

    pub fn weights(&self) -> &MixtureWeights {
        &self.weights
    }

    pub fn mean(&self, s: usize) -> &DVector<f64> {
        &self.means[s]
    }

    pub fn cov(&self, s: usize) -> &DMatrix<f64> {
        &self.covs[s]
    }

    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    pub fn moment(&self) -> &DVector<f64> {
        &self.moment
    }

    /// Number of absorbed observations.
    pub fn rounds(&self) -> usize {
        self.rounds
    }

    fn check_index(&self, s: usize) -> Result<()> {
        if s >= self.num_components() {
            return Err(Error::Input(format!(
                "latent index {s} out of range for {} components",
                self.num_components()
            )));
        }
        Ok(())
    }

    fn check_action(&self, a: &DVector<f64>) -> Result<()> {
        if a.len() != self.dim() {
            return Err(Error::Input(format!(
                "action has dimension {}, posterior has {}",
                a.len(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Posterior mean reward `aᵀθ̄_s`.
    pub fn mean_reward(&self, s: usize, a: &DVector<f64>) -> f64 {
        a.dot(&self.means[s])
    }

    /// `log N(y; aᵀθ̄_s, aᵀΣ_s a + σ²)`.
    pub fn predictive_loglik(&self, s: usize, a: &DVector<f64>, y: f64) -> Result<f64> {
        self.check_index(s)?;
        self.check_action(a)?;
        if !y.is_finite() {
            return Err(Error::Input(format!("non-finite reward {y}")));
        }
        let sigma2 = self.prior.noise_sd().powi(2);
        let var = (&self.covs[s] * a).dot(a).max(0.0) + sigma2;
        Ok(gaussian_logpdf(y, self.mean_reward(s, a), var))
    }

    /// Absorbs `(a, y)`: latent weights first, under the current posterior,
    /// then the shared statistics and every component's `(θ̄_s, Σ_s)`.
    pub fn update(&mut self, a: &DVector<f64>, y: f64) -> Result<()> {
        self.check_action(a)?;
        let increments = (0..self.num_components())
            .map(|s| self.predictive_loglik(s, a, y))
            .collect::<Result<Vec<_>>>()?;
        let weights = self.weights.updated(&increments)?;
        self.gram += a * a.transpose();
        self.moment += a * y;
        self.recompute_components()?;
        self.weights = weights;
        self.rounds += 1;
        Ok(())
    }

    /// Value-returning form of [`update`](Self::update).
    pub fn updated(&self, a: &DVector<f64>, y: f64) -> Result<Self> {
        let mut next = self.clone();
        next.update(a, y)?;
        Ok(next)
    }

    fn recompute_components(&mut self) -> Result<()> {
        let inv_sigma2 = self.prior.noise_sd().powi(-2);
        let scaled_gram = &self.gram * inv_sigma2;
        let scaled_moment = &self.moment * inv_sigma2;
        for s in 0..self.num_components() {
            let precision = &self.prior_precision[s] + &scaled_gram;
            let chol = linalg::cholesky_with_jitter(&precision).map_err(|e| {
                Error::Numerical(format!("component {s} posterior precision: {e}"))
            })?;
            self.means[s] = chol.solve(&(&self.prior_precision_mean[s] + &scaled_moment));
            self.covs[s] = linalg::symmetrize(chol.inverse());
        }
        Ok(())
    }

    /// Samples `S_t ~ P_t` and then `θ_t ~ N(θ̄_{S_t}, Σ_{S_t})`.
    pub fn sample_model<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(usize, DVector<f64>)> {
        let s = self.weights.sample(rng);
        let theta = linalg::sample_gaussian(&self.means[s], &self.covs[s], rng)?;
        Ok((s, theta))
    }

    /// `‖a‖_{Σ_s} · sqrt(2 d log(d n))` for horizon `n`.
    pub fn confidence_width(&self, s: usize, a: &DVector<f64>, horizon: usize) -> Result<f64> {
        self.check_index(s)?;
        self.check_action(a)?;
        confidence_width(a, &self.covs[s], horizon as f64)
    }
}

/// `‖a‖_Σ · sqrt(2 d log(d n))` with `d = dim(a)`; needs `d·n > 1`.
pub fn confidence_width(a: &DVector<f64>, cov: &DMatrix<f64>, horizon: f64) -> Result<f64> {
    let d = a.len() as f64;
    let dn = d * horizon;
    if dn <= 1.0 {
        return Err(Error::Domain(format!("log(d n) needs d n > 1, got {dn}")));
    }
    Ok(linalg::weighted_norm(a, cov) * (2.0 * d * dn.ln()).sqrt())
}
