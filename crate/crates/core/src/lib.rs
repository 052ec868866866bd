//! Continuous-time distributed generalized Nash equilibrium seeking.
//!
//! Agents on a communication graph run projected primal-dual consensus
//! dynamics using only neighbor information; the library provides the
//! controllers, a projected-Euler integrator, game scenarios and an
//! independent verification layer.

pub mod cli;
pub mod controllers;
pub mod dynamics;
pub mod error;
pub mod game;
pub mod geometry;
pub mod graph;
pub mod scenarios;
pub mod verify;

pub use error::{GneError, Result};
