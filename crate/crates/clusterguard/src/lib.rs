//! Cluster-robust (CR) and weighted cluster-robust (WCR) inference for
//! clustered linear regression, with diagnostics for heavy-tailed cluster
//! structure.
//!
//! Heavy-tailed cluster sizes can make the conventional CR sandwich variance
//! unreliable: the cluster-level score sums inherit the size distribution's
//! tail, and their second moment may not exist even when individual scores
//! are well behaved. This crate provides
//!
//! - OLS with CR sandwich variance, and the weighted (inverse cluster size)
//!   WCR estimator whose score tail matches the individual scores
//!   ([`regression`]),
//! - Hill-estimator tail diagnostics and log-log rank-size fits
//!   ([`taildiag`]),
//! - a finite-moment hypothesis test for cluster scores built from the top-k
//!   order statistics of score magnitudes ([`momenttest`]),
//! - a deterministic, parallel Monte Carlo harness for coverage studies and
//!   tail-index experiments ([`simulation`]).

// `!(x > 0.0)` style guards are deliberate: they reject NaN along with the
// out-of-range values, which `x <= 0.0` would silently admit.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dataset;
pub mod error;
pub mod momenttest;
pub mod quadrature;
pub mod regression;
pub mod rng;
pub mod simulation;
pub mod stats;
pub mod taildiag;

pub use dataset::{Cluster, ClusterDataset};
pub use error::{Error, Result};
pub use regression::{cr_fit, wcr_fit, Method, RegressionFit, ScoreMatrix, Weighting};
