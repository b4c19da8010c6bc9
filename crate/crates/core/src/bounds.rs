//! Closed-form Bayes regret upper bounds for MixTS.
//!
//! Both evaluators drop the unspecified polylogarithmic additive constant,
//! so they are meant for comparing shapes rather than magnitudes.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputsLinear {
    pub n: u64,
    pub d: u64,
    pub num_latent: u64,
    pub sigma: f64,
    pub kappa: f64,
    /// Largest eigenvalue of any component's prior covariance.
    pub lambda: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundInputsMdp {
    pub n: u64,
    pub num_states: u64,
    pub num_actions: u64,
    pub horizon: u64,
    pub num_latent: u64,
    /// Smallest prior pseudo-count ℓ1-norm over components and pairs.
    pub lambda_min: f64,
}

fn check_finite_nonneg(v: f64, what: &str) -> Result<()> {
    if !(v.is_finite() && v >= 0.0) {
        return Err(Error::Domain(format!("{what} must be finite and nonnegative, got {v}")));
    }
    Ok(())
}

/// `6 σ d sqrt(n (1 + κ²λ/σ²) log(1 + nκ²λ/(σ²d)) log(dn)) + 2σ sqrt(L n log n)`.
///
/// With `full_constants` the trailing terms
/// `3L sqrt(2κ²λd log(dn)) + 2 sqrt(κ²λd/2π) + 4Lκ` are added.
pub fn theorem1_bound(b: &BoundInputsLinear, full_constants: bool) -> Result<f64> {
    if b.n == 0 || b.d == 0 || b.num_latent == 0 {
        return Err(Error::Domain("n, d and L must be positive".into()));
    }
    if !(b.sigma.is_finite() && b.sigma > 0.0) {
        return Err(Error::Domain(format!("sigma must be positive, got {}", b.sigma)));
    }
    check_finite_nonneg(b.kappa, "kappa")?;
    check_finite_nonneg(b.lambda, "lambda")?;
    let (n, d, l) = (b.n as f64, b.d as f64, b.num_latent as f64);
    let dn = d * n;
    if dn <= 1.0 {
        return Err(Error::Domain("linear bound needs d n > 1".into()));
    }
    let s2 = b.sigma * b.sigma;
    let k2l = b.kappa * b.kappa * b.lambda;
    let first = 6.0
        * b.sigma
        * d
        * (n * (1.0 + k2l / s2) * (n * k2l / (s2 * d)).ln_1p() * dn.ln()).sqrt();
    let second = 2.0 * b.sigma * (l * n * n.ln()).sqrt();
    let mut total = first + second;
    if full_constants {
        total += 3.0 * l * (2.0 * k2l * d * dn.ln()).sqrt()
            + 2.0 * (k2l * d / (2.0 * std::f64::consts::PI)).sqrt()
            + 4.0 * l * b.kappa;
    }
    Ok(total)
}

/// `4 X h sqrt(2 A n h log(4XAn) log(1 + nh/(2XAΛ))) + sqrt(L n h log n)`.
pub fn theorem2_bound(b: &BoundInputsMdp) -> Result<f64> {
    if b.n == 0 || b.num_states == 0 || b.num_actions == 0 || b.horizon == 0 || b.num_latent == 0 {
        return Err(Error::Domain("n, |X|, |A|, h and L must be positive".into()));
    }
    if !(b.lambda_min > 0.0) {
        return Err(Error::Domain(format!(
            "minimum prior concentration must be positive, got {}",
            b.lambda_min
        )));
    }
    let (n, x, a, h, l) = (
        b.n as f64,
        b.num_states as f64,
        b.num_actions as f64,
        b.horizon as f64,
        b.num_latent as f64,
    );
    let first = 4.0
        * x
        * h
        * (2.0 * a * n * h * (4.0 * x * a * n).ln() * (n * h / (2.0 * x * a * b.lambda_min)).ln_1p())
            .sqrt();
    let second = (l * n * h * n.ln()).sqrt();
    Ok(first + second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lin(n: u64, d: u64, l: u64, sigma: f64, kappa: f64, lambda: f64) -> BoundInputsLinear {
        BoundInputsLinear {
            n,
            d,
            num_latent: l,
            sigma,
            kappa,
            lambda,
        }
    }

    fn mdp(n: u64, lambda_min: f64) -> BoundInputsMdp {
        BoundInputsMdp {
            n,
            num_states: 10,
            num_actions: 2,
            horizon: 20,
            num_latent: 2,
            lambda_min,
        }
    }

    #[test]
    fn zero_prior_width_leaves_latent_term() {
        let v = theorem1_bound(&lin(500, 5, 4, 0.3, 1.0, 0.0), false).unwrap();
        assert!((v - 2.0 * 0.3 * (4.0 * 500.0 * 500f64.ln()).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn single_round_drops_latent_terms() {
        let b = lin(1, 5, 4, 0.3, 1.0, 0.2);
        let v = theorem1_bound(&b, false).unwrap();
        let k2l: f64 = 0.2;
        let first = 6.0 * 0.3 * 5.0 * ((1.0 + k2l / 0.09) * (k2l / (0.09 * 5.0)).ln_1p() * 5f64.ln()).sqrt();
        assert!((v - first).abs() < 1e-12);
        let m = BoundInputsMdp { n: 1, ..mdp(1, 1.0) };
        let v2 = theorem2_bound(&m).unwrap();
        let first2 = 4.0 * 10.0 * 20.0 * (2.0 * 2.0 * 20.0 * 80f64.ln() * (20.0f64 / 40.0).ln_1p()).sqrt();
        assert!((v2 - first2).abs() < 1e-9);
    }

    #[test]
    fn theorem1_reference_value() {
        // reference from tests/oracles/high_precision.py
        let b = lin(1000, 30, 10, 0.1, 1.0, 0.01);
        let v = theorem1_bound(&b, false).unwrap();
        assert!((v - 4912.809_188_793_485).abs() < 1e-9, "{v}");
        let full = theorem1_bound(&b, true).unwrap();
        assert!((full - v - 115.048_241_294_598_6).abs() < 1e-9);
    }

    #[test]
    fn theorem2_reference_value() {
        let v = theorem2_bound(&mdp(1000, 1.0)).unwrap();
        assert!((v - 1_896_159.400_759_966_1).abs() / v < 1e-14, "{v}");
    }

    #[test]
    fn theorem2_large_concentration_limit() {
        let v = theorem2_bound(&mdp(1000, 1e300)).unwrap();
        let second = (2.0 * 1000.0 * 20.0 * 1000f64.ln()).sqrt();
        assert!((v - second).abs() < 1e-6);
    }

    #[test]
    fn domain_errors() {
        assert!(theorem1_bound(&lin(1, 1, 1, 0.1, 1.0, 1.0), false).is_err());
        assert!(theorem1_bound(&lin(10, 2, 1, 0.0, 1.0, 1.0), false).is_err());
        assert!(theorem1_bound(&lin(10, 2, 1, 0.1, 1.0, -1.0), false).is_err());
        assert!(theorem1_bound(&lin(0, 2, 1, 0.1, 1.0, 1.0), false).is_err());
        assert!(theorem2_bound(&mdp(10, 0.0)).is_err());
        assert!(matches!(theorem2_bound(&mdp(0, 1.0)), Err(Error::Domain(_))));
    }

    #[test]
    fn increasing_in_prior_width_and_latent_count() {
        let sigma0 = [0.01, 0.05, 0.1, 0.2, 0.5];
        let vals: Vec<f64> = sigma0
            .iter()
            .map(|&s| theorem1_bound(&lin(1000, 10, 10, 0.1, 1.0, s), false).unwrap())
            .collect();
        assert!(vals.windows(2).all(|w| w[1] > w[0]));
        let by_l: Vec<f64> = (1..=10)
            .map(|l| theorem1_bound(&lin(1000, 10, l, 0.1, 1.0, 0.1), false).unwrap())
            .collect();
        assert!(by_l.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn monotone_over_grid() {
        let ns = [2u64, 10, 100, 1000];
        let ls = [1u64, 3, 10];
        let lams = [0.0, 0.01, 0.1, 1.0];
        let kappas = [0.0, 0.5, 1.0, 2.0];
        let sigmas = [0.05, 0.1, 0.5, 1.0];
        let f = |n, l, lam, k, s| theorem1_bound(&lin(n, 5, l, s, k, lam), false).unwrap();
        for &n in &ns {
            for &l in &ls {
                for &lam in &lams {
                    for &k in &kappas {
                        for &s in &sigmas {
                            let v = f(n, l, lam, k, s);
                            let eps = 1e-12 * v.max(1.0);
                            if let Some(&n2) = ns.iter().find(|&&x| x > n) {
                                assert!(f(n2, l, lam, k, s) >= v - eps);
                            }
                            if let Some(&l2) = ls.iter().find(|&&x| x > l) {
                                assert!(f(n, l2, lam, k, s) >= v - eps);
                            }
                            if let Some(&lam2) = lams.iter().find(|&&x| x > lam) {
                                assert!(f(n, l, lam2, k, s) >= v - eps);
                            }
                            if let Some(&k2) = kappas.iter().find(|&&x| x > k) {
                                assert!(f(n, l, lam, k2, s) >= v - eps);
                            }
                            // in sigma only while noise dominates the prior spread
                            let noise_dominated = n >= 15 && n as f64 * k * k * lam <= s * s * 5.0;
                            if let Some(&s2) = sigmas.iter().find(|&&x| x > s) {
                                if noise_dominated {
                                    assert!(f(n, l, lam, k, s2) >= v - eps);
                                }
                            }
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn decreasing_in_sigma_when_prior_spread_dominates() {
        let lo = theorem1_bound(&lin(2, 5, 1, 0.05, 0.5, 0.01), false).unwrap();
        let hi = theorem1_bound(&lin(2, 5, 1, 0.1, 0.5, 0.01), false).unwrap();
        assert!(hi < lo);
    }

    proptest! {
        #[test]
        fn bounds_finite_and_positive(n in 2u64..100_000, d in 1u64..64, l in 1u64..64,
                                     sigma in 0.01f64..2.0, lam in 0.0f64..5.0) {
            let v = theorem1_bound(&lin(n, d, l, sigma, 1.0, lam), true).unwrap();
            prop_assert!(v.is_finite() && v > 0.0);
            let m = BoundInputsMdp { n, num_states: d, num_actions: 2, horizon: 5, num_latent: l, lambda_min: lam + 0.1 };
            let v2 = theorem2_bound(&m).unwrap();
            prop_assert!(v2.is_finite() && v2 > 0.0);
        }
    }
}
