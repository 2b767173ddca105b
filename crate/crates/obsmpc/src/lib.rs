//! Turn an existing stabilising output-feedback controller into an observer
//! plus constrained MPC whose unconstrained behaviour is identical.
//!
//! The pipeline: model preparation ([`lti`]), realisation search
//! ([`realisation`]), MPC construction ([`mpc`]) solved by [`qp`], run online
//! through [`runtime`] and exercised in closed loop by [`sim`].

pub mod cli;
pub mod config;
pub mod error;
pub mod lti;
pub mod models;
pub mod mpc;
pub mod numerics;
pub mod qp;
pub mod realisation;
pub mod runtime;
pub mod scenarios;
pub mod sim;
pub mod synthetic;

pub use error::{Error, Result};
