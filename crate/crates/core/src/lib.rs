//! Multi-fidelity reinforcement learning with Gaussian processes.

pub mod agent;
pub mod baselines;
pub mod env;
pub mod gp;
pub mod gp_vi;
pub mod gpq;
pub mod harness;
pub mod mdp;
