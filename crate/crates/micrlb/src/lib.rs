//! Localization accuracy limits for magnetic-induction sensor networks.
//!
//! Buried sensor nodes ("things") in a fractured reservoir volume measure the
//! received power of magnetic-induction links to anchor nodes mounted on the
//! well casing, and optionally to each other. In the near field the mean
//! received power of a link at distance `d` is
//!
//! ```text
//! P(d) = k / d^n,      k = ω μ P_t N_r r_t³ r_r³ sin²α / (16 R₀)
//! ```
//!
//! with `n = 6` (or `n = 3` for the far-zone variant), and every measurement
//! is corrupted by additive zero-mean Gaussian noise. Under that model the
//! Fisher information matrix for the unknown thing coordinates is, in closed
//! form, a weighted sum of gradient outer products over the measurement
//! graph; its inverse bounds the error covariance of any unbiased estimator
//! (the Cramér-Rao lower bound).
//!
//! The crate computes that bound several independent ways and lets them be
//! played against each other:
//!
//! * [`fim::fim_standard`]: the canonical Gaussian-mean information matrix.
//! * [`fim::fim_paper`]: an alternative set of closed-form element formulas
//!   for the same quantity, retained verbatim for comparison as `paper`
//!   mode. Its elements do not match the canonical matrix (see
//!   [`crlb::compare_modes`]).
//! * [`fim::fim_oracle_mc`]: a statistical oracle, the empirical covariance
//!   of the score over sampled measurements.
//! * [`fim::fim_oracle_fd`]: a second oracle, the sample average of the
//!   negative Hessian of the log-likelihood, by central finite differences.
//!
//! [`crlb::crlb_standard`] turns an information matrix into per-node and
//! aggregate bounds (trace of the inverse, per node), and
//! [`crlb::crlb_paper`] evaluates the per-axis block-inverse variant.
//! [`estimator`] provides a damped Gauss-Newton maximum-likelihood solver
//! used to probe how closely the bound is attained, and [`experiments`]
//! drives seeded Monte-Carlo parameter sweeps over deployments.
//!
//! All randomness flows through explicit 64-bit seeds and counter-based
//! ChaCha streams ([`rng`]); results are bit-identical across runs and
//! thread counts.

pub mod channel;
pub mod crlb;
pub mod deployment;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod fim;
pub mod rng;

pub use channel::{ChannelParams, CoilSpec, NoiseSpec, PathLossExponent};
pub use crlb::{CrlbOptions, CrlbReport, ModeComparison};
pub use deployment::{
    AnchorPlacement, Deployment, Edge, LinkBudget, LinkKind, LinkMode, MeasurementGraph,
    ScenarioConfig,
};
pub use error::{MiError, Result};
pub use estimator::{EstimateResult, SolveOptions};
pub use experiments::{
    EfficiencyRow, PointStatus, PointSummary, Scenario, SweepConfig, SweepParameter, SweepResult,
    SweepRow,
};
pub use fim::{FimMatrix, FimMode};
