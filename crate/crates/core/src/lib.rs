//! Simulator and bound calculator for straggler-resilient, differentially
//! private token-ring SGD.
//!
//! A token travels around a logical ring of `n` nodes. A node whose
//! computation exceeds the timeout `t_skip` is skipped, which trades accuracy
//! for wall-clock latency and privacy. The crate evaluates the expected
//! latency, the convergence bound and the network-DP level of that trade-off,
//! and simulates it on tabular data.

pub mod convergence;
pub mod data;
pub mod error;
pub mod latency;
pub mod privacy;
pub mod schedule;
pub mod sgd;
pub mod special;

pub use convergence::{error_bound, ConvergenceParams};
pub use data::{Dataset, LoadOptions, Split, Threshold};
pub use error::{Error, Result};
pub use latency::{optimal_t_skip, LatencyKind, LatencyModel, OptimalTimeout, SkipPolicy, Timeout};
pub use privacy::{privacy_bound, PrivacyBound, PrivacyParams};
pub use schedule::{RingTopology, Scheme, VisitPlan};
pub use sgd::{LossModel, ProjectionDomain, RunRecord, Simulation};
