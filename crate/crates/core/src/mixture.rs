//! Log-domain mixture weights and seeded random streams.
//!
//! Latent-state weights live in log space for their whole life. Predictive
//! log-likelihoods of competing components drift apart by hundreds of nats
//! within a few dozen rounds, so any linear-domain representation underflows.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Largest `|logsumexp|` treated as already normalized. Keeps `normalize`
/// exactly idempotent.
const NORMALIZED_SLACK: f64 = 1e-13;

/// `ln Σ exp(x_i)`, computed stably. Returns `-inf` when every entry is `-inf`.
pub fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let sum: f64 = xs.iter().map(|&x| (x - max).exp()).sum();
    max + sum.ln()
}

/// Normalized log-probabilities over `L ≥ 1` latent states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MixtureWeights {
    log_w: Vec<f64>,
}

impl MixtureWeights {
    /// Shifts `raw` by a constant so that it exponentiates to a distribution.
    pub fn normalize(raw: Vec<f64>) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::DegenerateWeights("empty weight vector".into()));
        }
        if raw.iter().any(|x| x.is_nan() || *x == f64::INFINITY) {
            return Err(Error::DegenerateWeights(format!(
                "non-finite log-weight in {raw:?}"
            )));
        }
        let lse = logsumexp(&raw);
        if lse == f64::NEG_INFINITY {
            return Err(Error::DegenerateWeights(
                "all components have zero mass".into(),
            ));
        }
        if lse.abs() <= NORMALIZED_SLACK {
            return Ok(MixtureWeights { log_w: raw });
        }
        Ok(MixtureWeights {
            log_w: raw.into_iter().map(|x| x - lse).collect(),
        })
    }

    pub fn uniform(num_components: usize) -> Result<Self> {
        if num_components == 0 {
            return Err(Error::DegenerateWeights("empty weight vector".into()));
        }
        let lw = -(num_components as f64).ln();
        Ok(MixtureWeights {
            log_w: vec![lw; num_components],
        })
    }

    /// Builds weights from linear-domain probabilities (need not sum to one).
    pub fn from_probabilities(p: &[f64]) -> Result<Self> {
        if p.iter().any(|x| *x < 0.0 || x.is_nan()) {
            return Err(Error::DegenerateWeights(format!(
                "negative or NaN probability in {p:?}"
            )));
        }
        Self::normalize(p.iter().map(|x| x.ln()).collect())
    }

    pub fn len(&self) -> usize {
        self.log_w.len()
    }

    pub fn is_empty(&self) -> bool {
        self.log_w.is_empty()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_w
    }

    pub fn log_weight(&self, s: usize) -> f64 {
        self.log_w[s]
    }

    pub fn probability(&self, s: usize) -> f64 {
        self.log_w[s].exp()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.log_w.iter().map(|x| x.exp()).collect()
    }

    /// Adds per-component log-likelihood increments and renormalizes.
    pub fn updated(&self, increments: &[f64]) -> Result<Self> {
        if increments.len() != self.log_w.len() {
            return Err(Error::Input(format!(
                "expected {} increments, got {}",
                self.log_w.len(),
                increments.len()
            )));
        }
        let raw = self
            .log_w
            .iter()
            .zip(increments)
            .map(|(w, inc)| if *w == f64::NEG_INFINITY { *w } else { w + inc })
            .collect();
        Self::normalize(raw)
    }

    /// Permutes components: entry `i` of the result is entry `perm[i]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> Self {
        MixtureWeights {
            log_w: perm.iter().map(|&i| self.log_w[i]).collect(),
        }
    }

    /// Draws a latent index with probability `exp(log_w)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut cum = 0.0;
        let mut last_live = 0;
        for (i, lw) in self.log_w.iter().enumerate() {
            if *lw == f64::NEG_INFINITY {
                continue;
            }
            last_live = i;
            cum += lw.exp();
            if u < cum {
                return i;
            }
        }
        // u landed in the rounding gap above the accumulated mass
        last_live
    }
}

impl TryFrom<Vec<f64>> for MixtureWeights {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::normalize(v)
    }
}

impl From<MixtureWeights> for Vec<f64> {
    fn from(w: MixtureWeights) -> Self {
        w.log_w
    }
}

/// Free-function form of [`MixtureWeights::sample`].
pub fn sample_categorical<R: Rng + ?Sized>(weights: &MixtureWeights, rng: &mut R) -> usize {
    weights.sample(rng)
}

/// SplitMix64 finalizer, used to fold labels into stream ids.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Hashes a label path such as `(sweep, rep, role)` into a single id.
pub fn derive_stream_id(path: &[u64]) -> u64 {
    path.iter()
        .fold(0x6A09_E667_F3BC_C908, |acc, &x| mix64(acc ^ mix64(x)))
}

/// A reproducible random stream identified by `(seed, stream_id)`.
///
/// Backed by ChaCha8, whose 64-bit stream parameter gives independent
/// sequences for distinct ids under one key.
#[derive(Debug, Clone)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
    rng: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream_id);
        RngStream {
            seed,
            stream_id,
            rng,
        }
    }

    /// Stream for a labelled path under `seed`, e.g. `[sweep, rep, AGENT, k]`.
    pub fn for_path(seed: u64, path: &[u64]) -> Self {
        Self::new(seed, derive_stream_id(path))
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.rng.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.rng.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.rng.fill_bytes(dst)
    }
}
