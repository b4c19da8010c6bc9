//! Thompson sampling with mixture priors.
//!
//! Two settings share the same recipe: keep one conjugate posterior per
//! mixture component over shared sufficient statistics, track the latent
//! component in log space through posterior predictives, and act by sampling
//! a component and then a model from it.
//!
//! - [`linear`]: Gaussian linear bandits with a Gaussian-mixture prior.
//! - [`tabular`]: finite-horizon tabular MDPs with Beta/Dirichlet mixture priors.
//! - [`baselines`]: unimodal TS, Exp4, CorralExp4 and PSRL.
//! - [`prior_fit`]: ridge fits plus EM for building mixture priors from data.
//! - [`harness`]: environments, replications, regret accounting and CSV output.

pub mod baselines;
pub mod bounds;
pub mod diagnostics;
pub mod error;
pub mod features;
pub mod harness;
pub mod linalg;
pub mod linear;
pub mod mixture;
pub mod prior_fit;
pub mod tabular;

pub use error::{Error, Result};
pub use mixture::{MixtureWeights, RngStream};
