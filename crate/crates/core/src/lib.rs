//! Decentralized global-connectivity maintenance for multi-robot teams, with
//! communication failures and Gaussian noise injected into the exchanged
//! eigenvector estimates.

pub mod actuation;
pub mod analysis;
pub mod config;
pub mod control;
pub mod disturbance;
pub mod estimator;
pub mod export;
pub mod graph;
pub mod linalg;
pub mod sim;
pub mod validate;
