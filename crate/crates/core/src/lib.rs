//! Automated chaos engineering cycle over Kubernetes manifests.

pub mod agent;
pub mod compiler;
pub mod cycle;
pub mod duration;
pub mod faults;
pub mod manifest;
pub mod model;
pub mod reference;
pub mod simulator;
pub mod vac;
