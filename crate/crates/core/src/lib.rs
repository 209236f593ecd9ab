//! Behavioral cloning from heterogeneous demonstrators.
//!
//! Policies map states to action distributions. Besides plain feedforward and
//! recurrent baselines, the embedding families learn one latent vector per
//! training demonstrator and fit a fresh vector online for a new one.

pub mod clustering;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod models;
pub mod optim;
pub mod pipeline;
pub mod tape;
pub mod tensor;

pub use error::{Error, Result};
