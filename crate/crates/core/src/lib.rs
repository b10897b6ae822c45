//! Causal imitation laboratory.
//!
//! Observations from a toy longitudinal driving world are compressed by a
//! β-VAE, the latent coordinates that Granger-cause the ego speed are
//! selected, and a shallow predictor maps windows of those coordinates to the
//! next-step speed, which a proportional controller then tracks.

pub mod causesel;
pub mod control;
pub mod harness;
pub mod nncore;
pub mod perception;
pub mod simworld;
pub mod speedpred;
