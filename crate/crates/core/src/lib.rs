//! Centralized least-mean-squares estimation over wireless sensor networks.
//!
//! Nodes observe `d_k(i) = u_{k,i} w° + v_k(i)` and ship `[u, d]` to a fusion
//! center over Rayleigh-fading, path-lossy, noisy links that drop out when the
//! instantaneous SNR falls under a threshold. The fusion center runs one of
//! three estimators:
//!
//! - [`Algorithm::Clms`]: LMS on equalized, failure-gated data (biased by the
//!   link noise on the regressors),
//! - [`Algorithm::BcClms`]: the same with a bias-compensation term,
//! - [`Algorithm::Baseline`]: LMS straight on the raw received data.
//!
//! The [`theory`] module gives the closed-form predictions (success
//! probability, bias, mean-stability bounds, steady-state MSD) and the
//! [`experiments`] module the seeded Monte Carlo harness that checks them.

pub mod adaptation;
pub mod channel;
pub mod cli;
pub mod config;
pub mod error;
pub mod experiments;
pub mod linalg;
pub mod model;
pub mod quadrature;
pub mod report;
pub mod rng;
pub mod theory;

pub use adaptation::{AdaptiveFilter, Algorithm};
pub use channel::{LinkDraw, RawFrame, ReceivedFrame};
pub use config::{parse_config, serialize_config, Config, Tolerances};
pub use error::{Error, Result};
pub use experiments::{ExperimentResult, ExperimentSpec};
pub use model::{LinkMode, NetworkScenario, NodeState};
pub use theory::TheoryReport;

pub use num_complex::Complex64 as C64;
