//! Dynamic frictional contact on the faces of a crack in a linearly elastic
//! body.
//!
//! The contact and friction laws are replaced by smooth penalties with
//! parameter `ε`, discretized with P1 finite elements and integrated in time
//! with an implicit one-step scheme. The [`diagnostics`] module measures how
//! close a computed trajectory is to the unregularized laws. The guide in
//! `book/` walks through the modules with runnable examples.

pub mod expr;
pub mod fem;
pub mod mesh;
pub mod interface;
pub mod timestep;
pub mod config;
pub mod diagnostics;
pub mod output;
pub mod verify;
pub mod cli;
