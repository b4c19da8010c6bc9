//! Over-estimation statistics and confidence sets over latent components.
//!
//! For each latent component `s` we keep `G(s)`, the running total of how
//! much the component's lower-confidence prediction exceeded what was
//! observed on the rounds where `s` was sampled, and `N(s)`, the number of
//! such rounds. Components with `G(s)` above a `sqrt(N(s) log n)` threshold
//! fall out of the confidence set. None of this feeds back into the agents.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Setting {
    Bandit,
    Mdp,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LatentDiagnostics {
    g: Vec<f64>,
    visits: Vec<u64>,
    horizon: usize,
    eta: f64,
}

/// Bandit default for `eta`: `sqrt(2 log n / log(d n))`.
pub fn default_bandit_eta(horizon: usize, dim: usize) -> Result<f64> {
    let n = horizon as f64;
    let dn = dim as f64 * n;
    if horizon < 2 || dn <= 1.0 {
        return Err(Error::Domain(format!(
            "default eta needs n >= 2 and d n > 1 (n={horizon}, d={dim})"
        )));
    }
    Ok((2.0 * n.ln() / dn.ln()).sqrt())
}

pub const DEFAULT_MDP_ETA: f64 = std::f64::consts::SQRT_2;

impl LatentDiagnostics {
    pub fn new(num_latent: usize, horizon: usize, eta: f64) -> Result<Self> {
        if num_latent == 0 {
            return Err(Error::Input("diagnostics need at least one latent component".into()));
        }
        if !(eta.is_finite() && eta >= 0.0) {
            return Err(Error::Input(format!("eta must be finite and nonnegative, got {eta}")));
        }
        Ok(LatentDiagnostics {
            g: vec![0.0; num_latent],
            visits: vec![0; num_latent],
            horizon,
            eta,
        })
    }

    pub fn for_bandit(num_latent: usize, horizon: usize, dim: usize) -> Result<Self> {
        Self::new(num_latent, horizon, default_bandit_eta(horizon, dim)?)
    }

    pub fn for_mdp(num_latent: usize, horizon: usize) -> Result<Self> {
        Self::new(num_latent, horizon, DEFAULT_MDP_ETA)
    }

    pub fn g(&self) -> &[f64] {
        &self.g
    }

    pub fn visits(&self) -> &[u64] {
        &self.visits
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn eta(&self) -> f64 {
        self.eta
    }

    pub fn rounds(&self) -> u64 {
        self.visits.iter().sum()
    }

    fn add(&mut self, s: usize, increment: f64) -> Result<()> {
        if s >= self.g.len() {
            return Err(Error::Input(format!("latent index {s} out of range")));
        }
        if !increment.is_finite() {
            return Err(Error::Input("diagnostic inputs must be finite".into()));
        }
        self.g[s] += increment;
        self.visits[s] += 1;
        Ok(())
    }

    /// `G[s] += mu_bar - eta * width - y`.
    pub fn record_bandit_round(&mut self, s: usize, mu_bar: f64, width: f64, y: f64) -> Result<()> {
        self.add(s, mu_bar - self.eta * width - y)
    }

    /// `G[s] += vbar - h * eta * width_sum - ret`.
    pub fn record_mdp_episode(
        &mut self,
        s: usize,
        vbar: f64,
        width_sum: f64,
        ret: f64,
        h: usize,
    ) -> Result<()> {
        self.add(s, vbar - h as f64 * self.eta * width_sum - ret)
    }

    /// Threshold on `G(s)`: `2 sigma sqrt(N log n)` for bandits and
    /// `sqrt(h N log n)` for MDPs, where `scale` is `sigma` or `h`.
    pub fn threshold(&self, s: usize, setting: Setting, scale: f64) -> Result<f64> {
        if self.horizon < 2 {
            return Err(Error::Domain("confidence set needs n >= 2".into()));
        }
        let nlog = self.visits[s] as f64 * (self.horizon as f64).ln();
        Ok(match setting {
            Setting::Bandit => 2.0 * scale * nlog.sqrt(),
            Setting::Mdp => (scale * nlog).sqrt(),
        })
    }

    pub fn contains(&self, s: usize, setting: Setting, scale: f64) -> Result<bool> {
        Ok(self.g[s] <= self.threshold(s, setting, scale)?)
    }

    pub fn confidence_set(&self, setting: Setting, scale: f64) -> Result<Vec<usize>> {
        let mut set = Vec::new();
        for s in 0..self.g.len() {
            if self.contains(s, setting, scale)? {
                set.push(s);
            }
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_prediction_leaves_g_unchanged() {
        let mut d = LatentDiagnostics::new(2, 100, 1.3).unwrap();
        d.record_bandit_round(1, 0.7, 0.0, 0.7).unwrap();
        assert_eq!(d.g(), &[0.0, 0.0]);
        assert_eq!(d.visits(), &[0, 1]);
        d.record_mdp_episode(0, 4.0, 0.0, 4.0, 5).unwrap();
        assert_eq!(d.g(), &[0.0, 0.0]);
    }

    #[test]
    fn increments_accumulate() {
        let mut d = LatentDiagnostics::new(3, 100, 1.0).unwrap();
        for inc in [0.1, -0.2, 0.3] {
            d.record_bandit_round(0, inc, 0.0, 0.0).unwrap();
        }
        assert!((d.g()[0] - 0.2).abs() < 1e-15);
        let mut m = LatentDiagnostics::for_mdp(3, 100).unwrap();
        for inc in [0.1, -0.2, 0.3] {
            m.record_mdp_episode(0, inc, 0.0, 0.0, 7).unwrap();
        }
        assert!((m.g()[0] - 0.2).abs() < 1e-15);
        assert_eq!(m.rounds(), 3);
    }

    #[test]
    fn mdp_width_scaled_by_h_sqrt2() {
        let mut m = LatentDiagnostics::for_mdp(1, 10).unwrap();
        m.record_mdp_episode(0, 3.0, 0.5, 1.0, 4).unwrap();
        assert!((m.g()[0] - (2.0 - 4.0 * 2f64.sqrt() * 0.5)).abs() < 1e-15);
    }

    #[test]
    fn confidence_set_membership() {
        let mut d = LatentDiagnostics::new(3, 100, 1.0).unwrap();
        assert_eq!(d.confidence_set(Setting::Bandit, 0.1).unwrap(), vec![0, 1, 2]);
        d.record_bandit_round(1, 1e6, 0.0, 0.0).unwrap();
        assert_eq!(d.confidence_set(Setting::Bandit, 0.1).unwrap(), vec![0, 2]);
        assert_eq!(d.confidence_set(Setting::Mdp, 5.0).unwrap(), vec![0, 2]);
    }

    #[test]
    fn boundary_is_inclusive() {
        let mut d = LatentDiagnostics::new(1, 100, 0.0).unwrap();
        d.record_bandit_round(0, 0.0, 0.0, 0.0).unwrap();
        let t = d.threshold(0, Setting::Bandit, 0.1).unwrap();
        let mut e = LatentDiagnostics::new(1, 100, 0.0).unwrap();
        e.record_bandit_round(0, t, 0.0, 0.0).unwrap();
        assert_eq!(e.g()[0], t);
        assert!(e.contains(0, Setting::Bandit, 0.1).unwrap());
        let mut f = LatentDiagnostics::new(1, 100, 0.0).unwrap();
        f.record_bandit_round(0, t * (1.0 + 1e-12), 0.0, 0.0).unwrap();
        assert!(!f.contains(0, Setting::Bandit, 0.1).unwrap());
    }

    #[test]
    fn default_eta_values() {
        let eta = default_bandit_eta(1000, 10).unwrap();
        assert!((eta - (2.0 * 1000f64.ln() / 10000f64.ln()).sqrt()).abs() < 1e-15);
        assert!(default_bandit_eta(1, 10).is_err());
        let d = LatentDiagnostics::new(1, 1, 1.0).unwrap();
        assert!(d.confidence_set(Setting::Mdp, 1.0).is_err());
    }

    #[test]
    fn rejects_bad_input() {
        let mut d = LatentDiagnostics::new(2, 10, 1.0).unwrap();
        assert!(d.record_bandit_round(2, 0.0, 0.0, 0.0).is_err());
        assert!(d.record_bandit_round(0, f64::NAN, 0.0, 0.0).is_err());
        assert_eq!(d.rounds(), 0);
    }

    proptest! {
        #[test]
        fn incremental_matches_batch_replay(
            trace in prop::collection::vec((0usize..4, -2.0f64..2.0, 0.0f64..1.0, -2.0f64..2.0), 1..200),
            eta in 0.0f64..3.0,
            mdp in any::<bool>(),
        ) {
            let mut d = LatentDiagnostics::new(4, 500, eta).unwrap();
            for &(s, m, w, y) in &trace {
                if mdp {
                    d.record_mdp_episode(s, m, w, y, 3).unwrap();
                } else {
                    d.record_bandit_round(s, m, w, y).unwrap();
                }
            }
            let factor = if mdp { 3.0 * eta } else { eta };
            for s in 0..4 {
                let rows = trace.iter().filter(|r| r.0 == s);
                let batch: f64 = rows.clone().map(|&(_, m, w, y)| m - factor * w - y).sum();
                prop_assert!((d.g()[s] - batch).abs() < 1e-10);
                prop_assert_eq!(d.visits()[s], rows.count() as u64);
            }
            prop_assert_eq!(d.rounds(), trace.len() as u64);
        }
    }
}
