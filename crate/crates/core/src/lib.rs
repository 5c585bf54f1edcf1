//! Reinforcement-learning architecture search for GAN building blocks.
//!
//! An LSTM controller samples genomes (programs for an up-sampling, a
//! down-sampling and a normal module), which are decoded into generator and
//! discriminator graphs, scored either by a deterministic surrogate or by
//! training a small GAN and measuring proxy Inception Score / FID, and the
//! controller is updated with REINFORCE.

pub mod controller;
pub mod eval;
pub mod graph;
pub mod par;
pub mod report;
pub mod search;
pub mod search_space;
pub mod tensor;
