//! Building mixture priors from offline data.
//!
//! The pipeline samples many small labelled datasets, fits a ridge
//! regression to each, and clusters the fitted parameter vectors with a
//! Gaussian mixture fitted by EM. The clusters become the prior components.

use std::f64::consts::PI;
use std::path::Path;

use log::info;
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureTable;
use crate::linalg;
use crate::linear::{GaussianComponent, GaussianMixturePrior};
use crate::mixture::{logsumexp, MixtureWeights};

pub const DEFAULT_RIDGE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq)]
pub struct OfflineDataset {
    features: Vec<DVector<f64>>,
    rewards: Vec<f64>,
}

impl OfflineDataset {
    pub fn new(features: Vec<DVector<f64>>, rewards: Vec<f64>) -> Result<Self> {
        if features.is_empty() || features.len() != rewards.len() {
            return Err(Error::Input("dataset needs one reward per row and at least one row".into()));
        }
        let d = features[0].len();
        if d == 0 || features.iter().any(|x| x.len() != d) {
            return Err(Error::Input("dataset rows have inconsistent dimension".into()));
        }
        Ok(OfflineDataset { features, rewards })
    }

    pub fn dim(&self) -> usize {
        self.features[0].len()
    }

    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }
}

/// Ridge regression `(XᵀX + ridge·I)⁻¹ Xᵀy`.
pub fn fit_linear_model(data: &OfflineDataset, ridge: f64) -> Result<DVector<f64>> {
    if !(ridge >= 0.0 && ridge.is_finite()) {
        return Err(Error::Input(format!("ridge must be finite and nonnegative, got {ridge}")));
    }
    let d = data.dim();
    let mut gram = DMatrix::identity(d, d) * ridge;
    let mut xty = DVector::zeros(d);
    for (x, &y) in data.features.iter().zip(&data.rewards) {
        gram.ger(1.0, x, x, 1.0);
        xty.axpy(y, x, 1.0);
    }
    let gram = linalg::symmetrize(gram);
    let chol = gram.cholesky().ok_or_else(|| {
        Error::Numerical("normal equations are singular; use a positive ridge".into())
    })?;
    let beta = chol.solve(&xty);
    if beta.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("ridge solution is not finite; use a positive ridge".into()));
    }
    Ok(beta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum CovarianceType {
    #[default]
    Full,
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GmmConfig {
    pub tol: f64,
    pub max_iters: usize,
    /// Covariance regularization, relative to `trace(global cov) / d`.
    pub reg_scale: f64,
    pub covariance: CovarianceType,
    /// Components whose responsibility mass falls below this are re-seeded.
    pub min_mass: f64,
}

impl Default for GmmConfig {
    fn default() -> Self {
        GmmConfig {
            tol: 1e-6,
            max_iters: 200,
            reg_scale: 1e-6,
            covariance: CovarianceType::Full,
            min_mass: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GmmFit {
    pub weights: Vec<f64>,
    pub means: Vec<DVector<f64>>,
    pub covs: Vec<DMatrix<f64>>,
    pub log_likelihood: f64,
    /// Log-likelihood of the parameters entering each EM iteration, plus the final value.
    pub trace: Vec<f64>,
    pub iterations: usize,
    pub reinitialized: usize,
}

impl GmmFit {
    pub fn num_components(&self) -> usize {
        self.weights.len()
    }
}

fn mean_and_cov(points: &[DVector<f64>]) -> (DVector<f64>, DMatrix<f64>) {
    let d = points[0].len();
    let n = points.len() as f64;
    let mean = points.iter().fold(DVector::zeros(d), |acc, x| acc + x) / n;
    let mut cov = DMatrix::zeros(d, d);
    for x in points {
        let c = x - &mean;
        cov.ger(1.0 / n, &c, &c, 1.0);
    }
    (mean, linalg::symmetrize(cov))
}

fn squared_dist(a: &DVector<f64>, b: &DVector<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index drawn proportionally to `w` by scanning the cumulative sum.
fn draw_proportional<R: Rng + ?Sized>(w: &[f64], rng: &mut R) -> usize {
    let total: f64 = w.iter().sum();
    let u = rng.random::<f64>() * total;
    let mut cum = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        cum += wi;
        if u < cum {
            return i;
        }
    }
    w.iter().rposition(|&x| x > 0.0).unwrap_or(w.len() - 1)
}

fn kmeans_pp<R: Rng + ?Sized>(points: &[DVector<f64>], k: usize, rng: &mut R) -> Vec<DVector<f64>> {
    let n = points.len();
    let first = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
    let mut centres = vec![points[first].clone()];
    let mut d2: Vec<f64> = points.iter().map(|x| squared_dist(x, &centres[0])).collect();
    while centres.len() < k {
        let next = if d2.iter().all(|&v| v == 0.0) {
            ((rng.random::<f64>() * n as f64) as usize).min(n - 1)
        } else {
            draw_proportional(&d2, rng)
        };
        centres.push(points[next].clone());
        let c = centres.last().unwrap();
        for (v, x) in d2.iter_mut().zip(points) {
            *v = v.min(squared_dist(x, c));
        }
    }
    centres
}

struct Component {
    mean: DVector<f64>,
    cov: DMatrix<f64>,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    log_det: f64,
}

impl Component {
    fn new(mean: DVector<f64>, cov: DMatrix<f64>) -> Result<Self> {
        let chol = linalg::cholesky_with_jitter(&cov)?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|v| v.ln()).sum::<f64>();
        Ok(Component { mean, cov, chol, log_det })
    }

    fn log_pdf(&self, x: &DVector<f64>) -> f64 {
        let d = x.len() as f64;
        let z = self.chol.l().solve_lower_triangular(&(x - &self.mean)).expect("nonsingular factor");
        -0.5 * (d * (2.0 * PI).ln() + self.log_det + z.norm_squared())
    }
}

fn e_step(points: &[DVector<f64>], log_w: &[f64], comps: &[Component], resp: &mut [Vec<f64>]) -> f64 {
    let mut ll = 0.0;
    for (i, x) in points.iter().enumerate() {
        let row = &mut resp[i];
        for (s, c) in comps.iter().enumerate() {
            row[s] = log_w[s] + c.log_pdf(x);
        }
        let lse = logsumexp(row);
        ll += lse;
        row.iter_mut().for_each(|v| *v = (*v - lse).exp());
    }
    ll
}

/// Fits an `num_components`-component Gaussian mixture to `points` by EM.
///
/// Means start from k-means++ seeds, every covariance from the global
/// variance times the identity, and weights from uniform. Each M-step adds
/// `reg_scale · trace(global cov) / d` to the covariance diagonals. A
/// component whose responsibility mass drops below `min_mass` is re-seeded
/// at a random point.
pub fn fit_gmm<R: Rng + ?Sized>(
    points: &[DVector<f64>],
    num_components: usize,
    cfg: &GmmConfig,
    rng: &mut R,
) -> Result<GmmFit> {
    let l = num_components;
    if l == 0 || points.len() < l {
        return Err(Error::Input(format!(
            "GMM needs at least as many points ({}) as components ({l}), and L >= 1",
            points.len()
        )));
    }
    let d = points[0].len();
    if d == 0 || points.iter().any(|x| x.len() != d || x.iter().any(|v| !v.is_finite())) {
        return Err(Error::Input("GMM points must be finite with a common positive dimension".into()));
    }
    let n = points.len();
    let (_, global_cov) = mean_and_cov(points);
    let mut spread = global_cov.trace() / d as f64;
    if !(spread > 0.0) {
        spread = 1.0;
    }
    let reg = cfg.reg_scale * spread;
    let init_cov = DMatrix::identity(d, d) * spread;

    let mut comps = kmeans_pp(points, l, rng)
        .into_iter()
        .map(|m| Component::new(m, init_cov.clone()))
        .collect::<Result<Vec<_>>>()?;
    let mut log_w = vec![-(l as f64).ln(); l];
    let mut resp = vec![vec![0.0; l]; n];
    let mut trace = Vec::new();
    let mut reinitialized = 0;
    let mut iterations = 0;
    let mut ll = e_step(points, &log_w, &comps, &mut resp);

    while iterations < cfg.max_iters {
        iterations += 1;
        trace.push(ll);
        let mut reseeded = false;
        for s in 0..l {
            let mass: f64 = resp.iter().map(|r| r[s]).sum();
            if mass < cfg.min_mass * n as f64 {
                let idx = ((rng.random::<f64>() * n as f64) as usize).min(n - 1);
                info!("GMM component {s} collapsed (mass {mass:.3e}); re-seeding at point {idx}");
                comps[s] = Component::new(points[idx].clone(), init_cov.clone())?;
                log_w[s] = -(l as f64).ln();
                reinitialized += 1;
                reseeded = true;
                continue;
            }
            let mean = points
                .iter()
                .zip(&resp)
                .fold(DVector::zeros(d), |acc, (x, r)| acc + x * r[s])
                / mass;
            let mut cov = DMatrix::zeros(d, d);
            for (x, r) in points.iter().zip(&resp) {
                let c = x - &mean;
                cov.ger(r[s] / mass, &c, &c, 1.0);
            }
            if cfg.covariance == CovarianceType::Diagonal {
                cov = DMatrix::from_diagonal(&cov.diagonal());
            }
            for j in 0..d {
                cov[(j, j)] += reg;
            }
            comps[s] = Component::new(mean, linalg::symmetrize(cov))?;
            log_w[s] = (mass / n as f64).ln();
        }
        if reseeded {
            let lse = logsumexp(&log_w);
            log_w.iter_mut().for_each(|v| *v -= lse);
        }
        let next = e_step(points, &log_w, &comps, &mut resp);
        if !next.is_finite() {
            return Err(Error::Numerical("GMM log-likelihood is not finite".into()));
        }
        let improvement = next - ll;
        ll = next;
        if !reseeded && improvement < cfg.tol {
            break;
        }
    }
    trace.push(ll);
    Ok(GmmFit {
        weights: log_w.iter().map(|v| v.exp()).collect(),
        means: comps.iter().map(|c| c.mean.clone()).collect(),
        covs: comps.into_iter().map(|c| c.cov).collect(),
        log_likelihood: ll,
        trace,
        iterations,
        reinitialized,
    })
}

/// Log-likelihood of `points` under a fitted mixture.
pub fn gmm_log_likelihood(fit: &GmmFit, points: &[DVector<f64>]) -> Result<f64> {
    let comps = fit
        .means
        .iter()
        .zip(&fit.covs)
        .map(|(m, c)| Component::new(m.clone(), c.clone()))
        .collect::<Result<Vec<_>>>()?;
    let log_w: Vec<f64> = fit.weights.iter().map(|w| w.ln()).collect();
    let mut resp = vec![vec![0.0; comps.len()]; points.len()];
    Ok(e_step(points, &log_w, &comps, &mut resp))
}

/// Turns a fitted mixture into a prior over linear-bandit parameters.
pub fn build_mixture_prior(fit: &GmmFit, noise_sd: f64) -> Result<GaussianMixturePrior> {
    let components = fit
        .means
        .iter()
        .zip(&fit.covs)
        .map(|(mean, cov)| GaussianComponent {
            mean: mean.clone(),
            cov: cov.clone(),
        })
        .collect();
    let latent = MixtureWeights::from_probabilities(&fit.weights)?;
    GaussianMixturePrior::new(components, latent, noise_sd)
}

/// Samples `count` offline datasets of `size` rows. Each dataset picks a
/// target class uniformly; rows of that class pay Bernoulli(`reward_hi`)
/// and all others Bernoulli(`reward_lo`).
pub fn sample_offline_datasets<R: Rng + ?Sized>(
    table: &FeatureTable,
    count: usize,
    size: usize,
    reward_hi: f64,
    reward_lo: f64,
    rng: &mut R,
) -> Result<Vec<(usize, OfflineDataset)>> {
    table.check_all_classes_present()?;
    let k = table.num_classes();
    (0..count)
        .map(|_| {
            let target = rng.random_range(0..k);
            let mut feats = Vec::with_capacity(size);
            let mut ys = Vec::with_capacity(size);
            for _ in 0..size {
                let i = rng.random_range(0..table.len());
                let p = if table.class(i) == target { reward_hi } else { reward_lo };
                feats.push(table.row(i).clone());
                ys.push(f64::from(u8::from(rng.random::<f64>() < p)));
            }
            Ok((target, OfflineDataset::new(feats, ys)?))
        })
        .collect()
}

/// Settings for [`fit_prior_from_table`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorFitConfig {
    pub datasets: usize,
    pub dataset_size: usize,
    pub ridge: f64,
    pub reward_hi: f64,
    pub reward_lo: f64,
    pub noise_sd: f64,
    pub gmm: GmmConfig,
}

impl Default for PriorFitConfig {
    fn default() -> Self {
        PriorFitConfig {
            datasets: 1000,
            dataset_size: 500,
            ridge: DEFAULT_RIDGE,
            reward_hi: 0.9,
            reward_lo: 0.1,
            noise_sd: 0.5,
            gmm: GmmConfig::default(),
        }
    }
}

impl PriorFitConfig {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}

/// Ridge fits to sampled offline datasets, in sampling order.
pub fn fitted_parameters<R: Rng + ?Sized>(
    table: &FeatureTable,
    cfg: &PriorFitConfig,
    rng: &mut R,
) -> Result<Vec<DVector<f64>>> {
    sample_offline_datasets(table, cfg.datasets, cfg.dataset_size, cfg.reward_hi, cfg.reward_lo, rng)?
        .iter()
        .map(|(_, ds)| fit_linear_model(ds, cfg.ridge))
        .collect()
}

/// Full pipeline: sample datasets, fit each, cluster into `num_components`.
pub fn fit_prior_from_table<R: Rng + ?Sized>(
    table: &FeatureTable,
    num_components: usize,
    cfg: &PriorFitConfig,
    rng: &mut R,
) -> Result<GaussianMixturePrior> {
    let thetas = fitted_parameters(table, cfg, rng)?;
    let fit = fit_gmm(&thetas, num_components, &cfg.gmm, rng)?;
    build_mixture_prior(&fit, cfg.noise_sd)
}

pub const PRIOR_FILE_VERSION: u32 = 1;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PriorFile {
    version: u32,
    dim: usize,
    num_components: usize,
    noise_sd: f64,
    log_weights: Vec<f64>,
    component: Vec<ComponentRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ComponentRecord {
    mean: Vec<f64>,
    /// Row-major.
    cov: Vec<f64>,
}

/// Serializes a prior as TOML. Values are written in shortest round-trip
/// form, so [`prior_from_toml`] restores it bit for bit.
pub fn prior_to_toml(prior: &GaussianMixturePrior) -> Result<String> {
    let d = prior.dim();
    let file = PriorFile {
        version: PRIOR_FILE_VERSION,
        dim: d,
        num_components: prior.num_components(),
        noise_sd: prior.noise_sd(),
        log_weights: prior.latent().log_weights().to_vec(),
        component: prior
            .components()
            .iter()
            .map(|c| ComponentRecord {
                mean: c.mean.iter().copied().collect(),
                cov: (0..d * d).map(|k| c.cov[(k / d, k % d)]).collect(),
            })
            .collect(),
    };
    toml::to_string(&file).map_err(|e| Error::Numerical(format!("cannot serialize prior: {e}")))
}

pub fn prior_from_toml(text: &str) -> Result<GaussianMixturePrior> {
    let file: PriorFile = toml::from_str(text).map_err(|e| Error::Config(format!("prior file: {e}")))?;
    if file.version != PRIOR_FILE_VERSION {
        return Err(Error::Config(format!(
            "unsupported prior file version {} (expected {PRIOR_FILE_VERSION})",
            file.version
        )));
    }
    let d = file.dim;
    if file.component.len() != file.num_components || file.log_weights.len() != file.num_components {
        return Err(Error::Config("prior file component count mismatch".into()));
    }
    let components = file
        .component
        .into_iter()
        .enumerate()
        .map(|(s, c)| {
            if c.mean.len() != d || c.cov.len() != d * d {
                return Err(Error::Config(format!("prior file component {s} has wrong size")));
            }
            Ok(GaussianComponent {
                mean: DVector::from_vec(c.mean),
                cov: DMatrix::from_row_slice(d, d, &c.cov),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let latent = MixtureWeights::normalize(file.log_weights).map_err(|e| Error::Config(format!("prior file: {e}")))?;
    GaussianMixturePrior::new(components, latent, file.noise_sd).map_err(|e| Error::Config(format!("prior file: {e}")))
}

pub fn save_prior(prior: &GaussianMixturePrior, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, prior_to_toml(prior)?).map_err(|e| Error::io(path, e))
}

pub fn load_prior(path: impl AsRef<Path>) -> Result<GaussianMixturePrior> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    prior_from_toml(&text)
}
