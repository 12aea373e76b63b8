//! Code listings of the guide in `book/`, compiled and run as doc-tests.
//!
//! mdbook cannot test listings that depend on a workspace crate, so each
//! chapter is pulled in as the documentation of an empty module and
//! `cargo test` runs its code blocks.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/meshing.md")]
pub mod meshing {}

#[doc = include_str!("../../../book/src/expressions.md")]
pub mod expressions {}

#[doc = include_str!("../../../book/src/elements.md")]
pub mod elements {}

#[doc = include_str!("../../../book/src/interface.md")]
pub mod interface {}

#[doc = include_str!("../../../book/src/time_stepping.md")]
pub mod time_stepping {}

#[doc = include_str!("../../../book/src/diagnostics.md")]
pub mod diagnostics {}

#[doc = include_str!("../../../book/src/cli.md")]
pub mod cli {}
