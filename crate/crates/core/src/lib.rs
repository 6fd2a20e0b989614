//! Diversity-aware experience replay and a maze-navigation benchmark.
//!
//! The pieces: a prioritized replay buffer whose two-stage sampler filters a
//! priority-drawn candidate batch down to a maximally diverse subset via
//! greedy MAP selection over a Gaussian similarity kernel ([`kernel`],
//! [`replay`]); an elastic multi-step transition builder gated by density
//! clustering of Q-observations ([`elastic`], [`clustering`]); a small
//! fully-connected Q-network with multi-step TD targets ([`qnet`]); the 2D
//! maze environment ([`env`]); and the experiment runner, metrics, and CLI
//! ([`harness`]).

pub mod clustering;
pub mod elastic;
pub mod env;
pub mod harness;
pub mod kernel;
pub mod qnet;
pub mod replay;
