//! Proximal policy optimization with Gaussian and Beta policy heads,
//! desk-scale continuous-control environments, and a numerical lab for the
//! boundary bias of clipped Gaussian policies.

pub mod bias_lab;
pub mod checkpoint;
pub mod config;
pub mod distributions;
pub mod envs;
pub mod eval;
pub mod model;
pub mod neural;
pub mod ppo;
pub mod quadrature;
pub mod rollout;
pub mod seeding;
pub mod special;
