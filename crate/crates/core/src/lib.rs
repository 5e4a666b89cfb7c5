//! Train populations of small decoder-only transformers on synthetic
//! length-generalization tasks and analyse how their per-seed performance is
//! distributed across model scales.

pub mod analysis;
pub mod experiment;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod seeding;
pub mod tasks;
pub mod train;
